#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "normpert/experiment.hpp"
#include "normpert/featstats.hpp"
#include "normpert/perturb.hpp"

namespace py = pybind11;
using namespace normpert;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a, std::size_t rank, const char* what) {
  if (static_cast<std::size_t>(a.ndim()) != rank) {
    throw std::invalid_argument(std::string(what) + " must have " + std::to_string(rank) + " dimensions");
  }
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<double>(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor<double>& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Array out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

NoiseDraw draw_from(const Array& alpha, const Array& beta, std::size_t batch, std::size_t channels) {
  for (const auto* a : {&alpha, &beta}) {
    if (a->ndim() != 2 || static_cast<std::size_t>(a->shape(0)) != batch ||
        static_cast<std::size_t>(a->shape(1)) != channels) {
      throw std::invalid_argument("alpha and beta must have shape (B, C) matching x");
    }
  }
  NoiseDraw d = NoiseDraw::constant(batch, channels, 1.0, 1.0);
  std::copy(alpha.data(), alpha.data() + alpha.size(), d.alpha.begin());
  std::copy(beta.data(), beta.data() + beta.size(), d.beta.begin());
  return d;
}

Vectors rows_of(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array of row vectors");
  Vectors v(static_cast<std::size_t>(a.shape(0)));
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].assign(a.data() + i * a.shape(1), a.data() + (i + 1) * a.shape(1));
  }
  return v;
}

py::dict dataset_dict(const Dataset& d) {
  py::array_t<float> pixels({static_cast<py::ssize_t>(d.size()), py::ssize_t{3}, static_cast<py::ssize_t>(d.height),
                             static_cast<py::ssize_t>(d.width)});
  std::copy(d.pixels.begin(), d.pixels.end(), pixels.mutable_data());
  py::dict out;
  out["domain"] = d.domain;
  out["split"] = d.split;
  out["pixels"] = pixels;
  out["labels"] = py::array_t<int>(static_cast<py::ssize_t>(d.labels.size()), d.labels.data());
  out["content_ids"] = d.content_ids;
  return out;
}

ExperimentConfig config_with_overrides(const fs::path& path, std::optional<std::uint64_t> seed,
                                       std::optional<fs::path> out) {
  Overrides o;
  o.seed = seed;
  o.out = std::move(out);
  return apply_overrides(load_config(path), o);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = library_version();

  m.def(
      "sample_noise",
      [](const std::string& family, double first, double second, std::size_t batch, std::size_t channels,
         std::uint64_t seed) {
        Rng rng(seed);
        const auto d = sample_noise(NoiseSpec{noise_family_from_string(family), first, second}, batch, channels, rng);
        return py::make_tuple(matrix(d.alpha, batch, channels), matrix(d.beta, batch, channels));
      },
      py::arg("family") = "gaussian", py::arg("first") = 1.0, py::arg("second") = 0.75, py::arg("batch"),
      py::arg("channels"), py::arg("seed") = 0, "Draw (alpha, beta), each of shape (batch, channels).");

  m.def(
      "np_forward",
      [](const Array& x, const Array& alpha, const Array& beta) {
        const auto t = to_tensor(x, 4, "x");
        return to_array(np_forward(t, draw_from(alpha, beta, t.dim(0), t.dim(1))));
      },
      py::arg("x"), py::arg("alpha"), py::arg("beta"), "alpha * x + (beta - alpha) * channel mean.");

  m.def(
      "np_reference",
      [](const Array& x, const Array& alpha, const Array& beta, double eps) {
        const auto t = to_tensor(x, 4, "x");
        return to_array(np_reference(t, draw_from(alpha, beta, t.dim(0), t.dim(1)), eps));
      },
      py::arg("x"), py::arg("alpha"), py::arg("beta"), py::arg("eps") = 1e-5);

  m.def(
      "np_plus_forward",
      [](const Array& x, const Array& alpha, const Array& beta) {
        const auto t = to_tensor(x, 4, "x");
        return to_array(np_plus_forward(t, draw_from(alpha, beta, t.dim(0), t.dim(1)), minibatch_delta(t)));
      },
      py::arg("x"), py::arg("alpha"), py::arg("beta"), "NP+ with delta taken from this batch.");

  m.def(
      "channel_mean_std",
      [](const Array& x) {
        const auto s = channel_mean_std(to_tensor(x, 4, "x"));
        return py::make_tuple(matrix(s.mean, s.batch, s.channels), matrix(s.std, s.batch, s.channels));
      },
      py::arg("x"));

  m.def(
      "batch_stat_variance",
      [](const Array& means) {
        if (means.ndim() != 2) throw std::invalid_argument("means must have shape (B, C)");
        const auto d = batch_stat_variance(std::span<const double>(means.data(), means.size()),
                                           static_cast<std::size_t>(means.shape(0)),
                                           static_cast<std::size_t>(means.shape(1)));
        py::dict out;
        out["delta_raw"] = d.delta_raw;
        out["mean_of_means"] = d.mean_of_means;
        out["delta"] = d.delta;
        return out;
      },
      py::arg("means"));

  m.def(
      "mmd",
      [](const Array& xs, const Array& ys, const std::string& kernel, std::optional<double> bandwidth) {
        return mmd(rows_of(xs), rows_of(ys), KernelSpec{kernel_family_from_string(kernel), bandwidth});
      },
      py::arg("xs"), py::arg("ys"), py::arg("kernel") = "rbf", py::arg("bandwidth") = py::none(),
      "Biased squared MMD between two sets of row vectors.");

  m.def(
      "make_benchmark",
      [](std::uint64_t seed, std::size_t train_size, std::size_t val_size, std::size_t image_size) {
        const auto b = make_benchmark(BenchmarkConfig{seed, train_size, val_size, image_size});
        py::dict out;
        out["source_train"] = dataset_dict(b.source_train);
        out["source_val"] = dataset_dict(b.source_val);
        for (const auto& t : b.targets) out[py::str(t.domain)] = dataset_dict(t);
        return out;
      },
      py::arg("seed") = 7, py::arg("train_size") = 2000, py::arg("val_size") = 400, py::arg("image_size") = 32);

  m.def(
      "train",
      [](const fs::path& config, std::optional<std::uint64_t> seed, std::optional<fs::path> out) {
        const auto cfg = config_with_overrides(config, seed, out);
        TrainOutputs res;
        {
          py::gil_scoped_release release;
          res = cmd_train(cfg);
        }
        py::list epochs;
        for (const auto& e : res.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["train_accuracy"] = e.train_accuracy;
          d["val_loss"] = e.val_loss;
          d["val_accuracy"] = e.val_accuracy;
          epochs.append(d);
        }
        return py::make_tuple(res.checkpoint.string(), epochs);
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      "Train from a config file; returns (checkpoint_dir, per-epoch metrics).");

  m.def(
      "eval_checkpoint",
      [](const fs::path& config, std::optional<fs::path> checkpoint, std::optional<fs::path> out) {
        const auto cfg = config_with_overrides(config, std::nullopt, out);
        const auto rows = cmd_eval(cfg, checkpoint ? *checkpoint : checkpoint_dir(cfg));
        py::dict result;
        for (const auto& r : rows) result[py::str(r.domain)] = r.accuracy;
        return result;
      },
      py::arg("config"), py::arg("checkpoint") = py::none(), py::arg("out") = py::none(),
      "Accuracy per domain (source val and every target).");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
