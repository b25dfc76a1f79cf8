#include "normpert/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace normpert {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking which keys were consumed so that anything
// left over can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) out = convert<T>(*v, field(key));
  }

  template <typename T>
  void read_enum(const std::string& key, T& out, T (*from)(const std::string&)) {
    if (const json* v = get(key)) {
      const auto s = convert<std::string>(*v, field(key));
      try {
        out = from(s);
      } catch (const std::invalid_argument& e) {
        fail(field(key), e.what());
      }
    }
  }

  template <typename F>
  void read_object(const std::string& key, F&& f) {
    if (const json* v = get(key)) {
      ObjectReader sub(*v, field(key));
      f(sub);
      sub.finish();
    }
  }

  template <typename F>
  void read_array(const std::string& key, F&& f) {
    if (const json* v = get(key)) {
      if (!v->is_array()) fail(field(key), "expected an array");
      for (std::size_t i = 0; i < v->size(); ++i) f((*v)[i], field(key) + "[" + std::to_string(i) + "]");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(field(it.key()), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(where, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(where, "expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()) {
        fail(where, "expected a non-negative integer");
      }
      return v.get<T>();
    } else {
      if (!v.is_number()) fail(where, "expected a number");
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json noise_to_json(const NoiseSpec& n) {
  return {{"family", to_string(n.family)}, {"first", n.first}, {"second", n.second}};
}

NoiseSpec noise_from_json(const json& j, const std::string& path) {
  NoiseSpec n;
  ObjectReader r(j, path);
  r.read_enum("family", n.family, noise_family_from_string);
  r.read("first", n.first);
  r.read("second", n.second);
  r.finish();
  return n;
}

json site_to_json(const NpSiteConfig& s, bool with_mode) {
  json j = {{"stage", s.stage},
            {"probability", s.probability},
            {"noise", noise_to_json(s.noise)},
            {"granularity", to_string(s.granularity)},
            {"clamp_negative_alpha", s.clamp_negative_alpha},
            {"per_sample_gate", s.per_sample_gate}};
  if (with_mode) j["mode"] = to_string(s.mode);
  return j;
}

NpSiteConfig site_from_json(const json& j, const std::string& path, bool with_mode) {
  NpSiteConfig s;
  ObjectReader r(j, path);
  r.read("stage", s.stage);
  r.read("probability", s.probability);
  if (const json* v = r.get("noise")) s.noise = noise_from_json(*v, r.field("noise"));
  r.read_enum("granularity", s.granularity, granularity_from_string);
  r.read("clamp_negative_alpha", s.clamp_negative_alpha);
  r.read("per_sample_gate", s.per_sample_gate);
  if (with_mode) r.read_enum("mode", s.mode, np_mode_from_string);
  r.finish();
  return s;
}

json kernel_to_json(const KernelSpec& k) {
  json j = {{"family", to_string(k.family)}};
  j["bandwidth"] = k.bandwidth ? json(*k.bandwidth) : json(nullptr);
  return j;
}

KernelSpec kernel_from_json(const json& j, const std::string& path) {
  KernelSpec k;
  ObjectReader r(j, path);
  r.read_enum("family", k.family, kernel_family_from_string);
  if (const json* v = r.get("bandwidth")) {
    if (v->is_null()) {
      k.bandwidth.reset();
    } else {
      k.bandwidth = ObjectReader::convert<double>(*v, r.field("bandwidth"));
    }
  }
  r.finish();
  return k;
}

json grid_to_json(const SweepGrid& g) {
  json noises = json::array();
  for (const auto& n : g.noises) noises.push_back(noise_to_json(n));
  json modes = json::array();
  for (auto m : g.modes) modes.push_back(to_string(m));
  json grans = json::array();
  for (auto x : g.granularities) grans.push_back(to_string(x));
  return {{"p_grid", g.p_grid},
          {"noises", noises},
          {"placements", g.placements},
          {"modes", modes},
          {"granularities", grans},
          {"augment_ablation", g.augment_ablation},
          {"reference", site_to_json(g.reference, true)},
          {"reference_stages", g.reference_stages}};
}

template <typename T>
std::vector<T> scalar_array(ObjectReader& r, const std::string& key, std::vector<T> fallback) {
  if (!r.get(key)) return fallback;
  std::vector<T> out;
  r.read_array(key, [&](const json& v, const std::string& where) { out.push_back(ObjectReader::convert<T>(v, where)); });
  return out;
}

SweepGrid grid_from_json(const json& j, const std::string& path) {
  SweepGrid g;
  ObjectReader r(j, path);
  g.p_grid = scalar_array<double>(r, "p_grid", g.p_grid);
  if (r.get("noises")) {
    g.noises.clear();
    r.read_array("noises", [&](const json& v, const std::string& where) { g.noises.push_back(noise_from_json(v, where)); });
  }
  if (r.get("placements")) {
    g.placements.clear();
    r.read_array("placements", [&](const json& v, const std::string& where) {
      if (!v.is_array()) ObjectReader::fail(where, "expected an array of stage numbers");
      std::vector<std::size_t> stages;
      for (std::size_t i = 0; i < v.size(); ++i) {
        stages.push_back(ObjectReader::convert<std::size_t>(v[i], where + "[" + std::to_string(i) + "]"));
      }
      g.placements.push_back(std::move(stages));
    });
  }
  if (r.get("modes")) {
    g.modes.clear();
    r.read_array("modes", [&](const json& v, const std::string& where) {
      try {
        g.modes.push_back(np_mode_from_string(ObjectReader::convert<std::string>(v, where)));
      } catch (const std::invalid_argument& e) {
        ObjectReader::fail(where, e.what());
      }
    });
  }
  if (r.get("granularities")) {
    g.granularities.clear();
    r.read_array("granularities", [&](const json& v, const std::string& where) {
      try {
        g.granularities.push_back(granularity_from_string(ObjectReader::convert<std::string>(v, where)));
      } catch (const std::invalid_argument& e) {
        ObjectReader::fail(where, e.what());
      }
    });
  }
  r.read("augment_ablation", g.augment_ablation);
  if (const json* v = r.get("reference")) g.reference = site_from_json(*v, r.field("reference"), true);
  g.reference_stages = scalar_array<std::size_t>(r, "reference_stages", g.reference_stages);
  r.finish();
  return g;
}

}  // namespace

NetworkConfig ExperimentConfig::effective_network() const {
  NetworkConfig net = network;
  net.np_sites = np.sites;
  for (auto& s : net.np_sites) s.mode = np.plus ? NpMode::np_plus : NpMode::np;
  return net;
}

TrainConfig ExperimentConfig::effective_training() const {
  TrainConfig t = training;
  t.augment = np.augment;
  return t;
}

void ExperimentConfig::validate() const {
  auto check = [](const std::string& where, auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  };
  check("dataset", [&] {
    const auto& b = dataset.benchmark;
    if (b.train_size < 2 || b.val_size < 2) throw std::invalid_argument("train_size and val_size must be >= 2");
    if (b.image_size != network.input_size) {
      throw std::invalid_argument("image_size " + std::to_string(b.image_size) + " differs from network.input_size " +
                                  std::to_string(network.input_size));
    }
    if (dataset.dir.empty()) throw std::invalid_argument("dir must not be empty");
  });
  const auto net = effective_network();
  check("network", [&] { network.validate(); });
  check("np", [&] { net.validate(); });
  check("training", [&] {
    effective_training().validate(net);
    if (training.batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  });
  check("diagnostics", [&] {
    for (auto s : diagnostics.stages) {
      if (s < 1 || s > network.stages.size()) throw std::invalid_argument("stage " + std::to_string(s) + " out of range");
    }
    if (diagnostics.sensitivity_stage < 1 || diagnostics.sensitivity_stage > network.stages.size()) {
      throw std::invalid_argument("sensitivity_stage out of range");
    }
    if (diagnostics.top_k > network.stages[diagnostics.sensitivity_stage - 1].channels) {
      throw std::invalid_argument("top_k exceeds the channel count of the sensitivity stage");
    }
    if (!(diagnostics.transfer_fraction >= 0.0 && diagnostics.transfer_fraction <= 1.0)) {
      throw std::invalid_argument("transfer_fraction must lie in [0, 1]");
    }
    if (diagnostics.kernel.bandwidth && !(*diagnostics.kernel.bandwidth > 0.0)) {
      throw std::invalid_argument("kernel bandwidth must be > 0");
    }
    const auto names = target_domain_names();
    for (const auto* t : {&diagnostics.sensitivity_target, &diagnostics.gap_target}) {
      if (std::find(names.begin(), names.end(), *t) == names.end()) {
        throw std::invalid_argument("unknown target domain '" + *t + "'");
      }
    }
    if (diagnostics.sweep_seeds.empty()) throw std::invalid_argument("sweep_seeds must not be empty");
  });
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

json to_json(const ExperimentConfig& cfg) {
  json stages = json::array();
  for (const auto& s : cfg.network.stages) stages.push_back({{"channels", s.channels}, {"blocks", s.blocks}});
  json sites = json::array();
  for (const auto& s : cfg.np.sites) sites.push_back(site_to_json(s, false));
  const auto& t = cfg.training;
  const auto& d = cfg.diagnostics;
  return {
      {"dataset",
       {{"seed", cfg.dataset.benchmark.seed},
        {"train_size", cfg.dataset.benchmark.train_size},
        {"val_size", cfg.dataset.benchmark.val_size},
        {"image_size", cfg.dataset.benchmark.image_size},
        {"dir", cfg.dataset.dir},
        {"regenerate", cfg.dataset.regenerate}}},
      {"network",
       {{"stages", stages},
        {"in_channels", cfg.network.in_channels},
        {"num_classes", cfg.network.num_classes},
        {"input_size", cfg.network.input_size},
        {"input_offset", cfg.network.input_offset}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"seed", t.seed},
        {"precision", to_string(t.precision)},
        {"check_finite", t.check_finite}}},
      {"np", {{"sites", sites}, {"plus", cfg.np.plus}, {"augment", cfg.np.augment}}},
      {"diagnostics",
       {{"kernel", kernel_to_json(d.kernel)},
        {"embedding", to_string(d.embedding)},
        {"stages", d.stages},
        {"top_k", d.top_k},
        {"sensitivity_stage", d.sensitivity_stage},
        {"transfer_fraction", d.transfer_fraction},
        {"sensitivity_target", d.sensitivity_target},
        {"gap_target", d.gap_target},
        {"sweep", grid_to_json(d.sweep)},
        {"sweep_seeds", d.sweep_seeds}}},
      {"output_dir", cfg.output_dir},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  ObjectReader root(j, "");
  root.read_object("dataset", [&](ObjectReader& r) {
    r.read("seed", cfg.dataset.benchmark.seed);
    r.read("train_size", cfg.dataset.benchmark.train_size);
    r.read("val_size", cfg.dataset.benchmark.val_size);
    r.read("image_size", cfg.dataset.benchmark.image_size);
    r.read("dir", cfg.dataset.dir);
    r.read("regenerate", cfg.dataset.regenerate);
  });
  root.read_object("network", [&](ObjectReader& r) {
    if (r.get("stages")) {
      cfg.network.stages.clear();
      r.read_array("stages", [&](const json& v, const std::string& where) {
        StageSpec s;
        ObjectReader sr(v, where);
        sr.read("channels", s.channels);
        sr.read("blocks", s.blocks);
        sr.finish();
        cfg.network.stages.push_back(s);
      });
    }
    r.read("in_channels", cfg.network.in_channels);
    r.read("num_classes", cfg.network.num_classes);
    r.read("input_size", cfg.network.input_size);
    r.read("input_offset", cfg.network.input_offset);
  });
  root.read_object("training", [&](ObjectReader& r) {
    auto& t = cfg.training;
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("learning_rate", t.learning_rate);
    r.read("momentum", t.momentum);
    r.read("weight_decay", t.weight_decay);
    r.read("seed", t.seed);
    r.read_enum("precision", t.precision, precision_from_string);
    r.read("check_finite", t.check_finite);
  });
  root.read_object("np", [&](ObjectReader& r) {
    r.read_array("sites", [&](const json& v, const std::string& where) {
      cfg.np.sites.push_back(site_from_json(v, where, false));
    });
    r.read("plus", cfg.np.plus);
    r.read("augment", cfg.np.augment);
  });
  root.read_object("diagnostics", [&](ObjectReader& r) {
    auto& d = cfg.diagnostics;
    if (const json* v = r.get("kernel")) d.kernel = kernel_from_json(*v, r.field("kernel"));
    r.read_enum("embedding", d.embedding, embedding_from_string);
    d.stages = scalar_array<std::size_t>(r, "stages", d.stages);
    r.read("top_k", d.top_k);
    r.read("sensitivity_stage", d.sensitivity_stage);
    r.read("transfer_fraction", d.transfer_fraction);
    r.read("sensitivity_target", d.sensitivity_target);
    r.read("gap_target", d.gap_target);
    if (const json* v = r.get("sweep")) d.sweep = grid_from_json(*v, r.field("sweep"));
    d.sweep_seeds = scalar_array<std::uint64_t>(r, "sweep_seeds", d.sweep_seeds);
  });
  root.read("output_dir", cfg.output_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset into a line and column.
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump_config(cfg)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace normpert
