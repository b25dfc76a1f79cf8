#include "normpert/tsr_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace normpert {
namespace {

static_assert(std::endian::native == std::endian::little, "tsr payloads assume a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "float32";
  } else {
    return "float64";
  }
}

template <typename T>
void read_payload(std::istream& is, std::size_t n, std::vector<double>& out) {
  std::vector<T> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (static_cast<std::size_t>(is.gcount()) != n * sizeof(T)) {
    throw std::runtime_error("tsr: truncated payload");
  }
  out.assign(buf.begin(), buf.end());
}

}  // namespace

template <typename T>
void write_tsr(std::ostream& os, const Shape& shape, std::span<const T> values) {
  if (shape_numel(shape) != values.size()) throw std::invalid_argument("tsr: shape does not match value count");
  nlohmann::json header{{"dtype", dtype_name<T>()}, {"shape", shape}};
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <typename T>
void write_tsr(const std::filesystem::path& path, const Shape& shape, std::span<const T> values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("tsr: cannot open " + path.string() + " for writing");
  write_tsr<T>(os, shape, values);
  if (!os) throw std::runtime_error("tsr: write failed for " + path.string());
}

TsrBlob read_tsr_blob(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("tsr: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("tsr: malformed header: ") + e.what());
  }
  TsrBlob blob;
  blob.dtype = header.at("dtype").get<std::string>();
  blob.shape = header.at("shape").get<Shape>();
  const std::size_t n = shape_numel(blob.shape);
  if (blob.dtype == "float32") {
    read_payload<float>(is, n, blob.values);
  } else if (blob.dtype == "float64") {
    read_payload<double>(is, n, blob.values);
  } else {
    throw std::runtime_error("tsr: unsupported dtype '" + blob.dtype + "'");
  }
  return blob;
}

TsrBlob read_tsr_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("tsr: cannot open " + path.string());
  return read_tsr_blob(is);
}

template <typename T>
Tensor<T> read_tsr(const std::filesystem::path& path) {
  auto blob = read_tsr_blob(path);
  return Tensor<T>(blob.shape, std::vector<T>(blob.values.begin(), blob.values.end()));
}

template void write_tsr(std::ostream&, const Shape&, std::span<const float>);
template void write_tsr(std::ostream&, const Shape&, std::span<const double>);
template void write_tsr(const std::filesystem::path&, const Shape&, std::span<const float>);
template void write_tsr(const std::filesystem::path&, const Shape&, std::span<const double>);
template Tensor<float> read_tsr(const std::filesystem::path&);
template Tensor<double> read_tsr(const std::filesystem::path&);

}  // namespace normpert
