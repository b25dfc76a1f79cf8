#include "normpert/experiment.hpp"

#include <Eigen/Core>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "normpert/tsr_io.hpp"

#ifndef NORMPERT_VERSION
#define NORMPERT_VERSION "0.0.0"
#endif

namespace normpert {

using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path resolve_against(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

template <typename F>
decltype(auto) with_precision(Precision p, F&& f) {
  if (p == Precision::float64) return f(double{});
  return f(float{});
}

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (auto& ch : s) {
    if (ch == '/' || ch == '\\') ch = '_';
  }
  return s;
}

}  // namespace

std::string library_version() { return NORMPERT_VERSION; }

ExperimentConfig apply_overrides(ExperimentConfig cfg, const Overrides& o) {
  if (o.seed) cfg.training.seed = *o.seed;
  if (o.out) cfg.output_dir = o.out->string();
  if (o.regen) cfg.dataset.regenerate = true;
  cfg.validate();
  return cfg;
}

fs::path dataset_dir(const ExperimentConfig& cfg) { return resolve_against(cfg.output_dir, cfg.dataset.dir); }

fs::path checkpoint_dir(const ExperimentConfig& cfg) { return fs::path(cfg.output_dir) / "checkpoint"; }

Benchmark obtain_benchmark(const ExperimentConfig& cfg, const Logger& log) {
  const auto dir = dataset_dir(cfg);
  if (!cfg.dataset.regenerate && fs::exists(dir / "index.json")) {
    Benchmark bench = load_benchmark(dir);
    if (bench.config == cfg.dataset.benchmark) {
      say(log, "loaded benchmark from " + dir.string());
      return bench;
    }
    say(log, "benchmark in " + dir.string() + " was generated with different settings; regenerating");
  }
  say(log, "generating benchmark (seed " + std::to_string(cfg.dataset.benchmark.seed) + ")");
  Benchmark bench = make_benchmark(cfg.dataset.benchmark);
  save_benchmark(bench, dir);
  return bench;
}

template <typename T>
void save_checkpoint(const fs::path& dir, const ToyNet<T>& net, const ExperimentConfig& cfg, std::size_t epoch,
                     const std::vector<EpochMetrics>& metrics) {
  fs::create_directories(dir);
  json params = json::array();
  for (const auto& [name, tensor] : net.named_parameters()) {
    const std::string file = sanitize(name) + ".tsr";
    write_tsr(dir / file, tensor);
    params.push_back({{"name", name}, {"file", file}, {"shape", tensor.shape()}});
  }
  json m = json::array();
  for (const auto& e : metrics) {
    m.push_back({{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"train_accuracy", e.train_accuracy},
                 {"val_loss", e.val_loss},
                 {"val_accuracy", e.val_accuracy}});
  }
  write_json(dir / "manifest.json", {{"format", "normpert-checkpoint-1"},
                                     {"config", to_json(cfg)},
                                     {"epoch", epoch},
                                     {"metrics", m},
                                     {"parameters", params}});
}

Checkpoint read_checkpoint_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error("checkpoint not found: " + path.string());
  Checkpoint ck;
  try {
    is >> ck.manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint manifest " + path.string() + ": " + e.what());
  }
  ck.config = config_from_json(ck.manifest.at("config"));
  ck.epoch = ck.manifest.at("epoch").get<std::size_t>();
  return ck;
}

template <typename T>
ToyNet<T> load_checkpoint_weights(const fs::path& dir, const Checkpoint& ck) {
  ToyNet<T> net(ck.config.effective_network(), 0);
  for (const auto& p : ck.manifest.at("parameters")) {
    const auto blob = read_tsr_blob(dir / p.at("file").get<std::string>());
    const auto name = p.at("name").get<std::string>();
    if (blob.shape != net.parameter(name).shape()) {
      throw std::runtime_error("checkpoint parameter " + name + " has shape " + shape_str(blob.shape) + ", expected " +
                               shape_str(net.parameter(name).shape()));
    }
    net.load_parameter(name, blob.values);
  }
  return net;
}

void write_run_record(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                      const json& extra) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  json rec = {{"command", command},
              {"config_hash", config_hash(cfg)},
              {"config", to_json(cfg)},
              {"seeds",
               {{"dataset", cfg.dataset.benchmark.seed},
                {"training", cfg.training.seed},
                {"init", init_seed_for(cfg.training.seed)}}},
              {"versions",
               {{"normpert", library_version()},
                {"compiler", __VERSION__},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
              {"timestamp", ts.str()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) rec[it.key()] = it.value();
  write_json(dir / "run.json", rec);
}

void write_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& epochs) {
  std::ostringstream os;
  os << std::setprecision(9) << "epoch,split,loss,accuracy\n";
  for (const auto& e : epochs) {
    os << e.epoch << ",train," << e.train_loss << "," << e.train_accuracy << "\n";
    os << e.epoch << ",val," << e.val_loss << "," << e.val_accuracy << "\n";
  }
  write_text(path, os.str());
}

void write_eval_csv(const fs::path& path, const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(9) << "domain,split,count,loss,accuracy\n";
  for (const auto& r : rows) os << r.domain << "," << r.split << "," << r.count << "," << r.loss << "," << r.accuracy << "\n";
  write_text(path, os.str());
}

fs::path cmd_gen(const ExperimentConfig& cfg, const Logger& log) {
  obtain_benchmark(cfg, log);
  write_run_record(cfg.output_dir, "gen", cfg, {{"dataset_dir", dataset_dir(cfg).string()}});
  return dataset_dir(cfg);
}

TrainOutputs cmd_train(const ExperimentConfig& cfg, const Logger& log) {
  const Benchmark bench = obtain_benchmark(cfg, log);
  TrainOutputs out;
  out.checkpoint = checkpoint_dir(cfg);
  out.metrics_csv = fs::path(cfg.output_dir) / "metrics.csv";
  with_precision(cfg.training.precision, [&](auto tag) {
    using T = decltype(tag);
    ToyNet<T> net(cfg.effective_network(), init_seed_for(cfg.training.seed));
    auto result = train(net, bench.source_train, &bench.source_val, cfg.effective_training(),
                        [&](const EpochMetrics& m) {
                          std::ostringstream os;
                          os << std::setprecision(4) << "epoch " << m.epoch << " loss " << m.train_loss << " train_acc "
                             << m.train_accuracy << " val_acc " << m.val_accuracy;
                          say(log, os.str());
                        });
    out.epochs = result.epochs;
    save_checkpoint(out.checkpoint, net, cfg, cfg.training.epochs, result.epochs);
  });
  write_metrics_csv(out.metrics_csv, out.epochs);
  write_run_record(cfg.output_dir, "train", cfg, {{"checkpoint", out.checkpoint.string()}});
  return out;
}

std::vector<EvalRow> cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const Logger& log) {
  const auto ck = read_checkpoint_manifest(checkpoint);
  const Benchmark bench = obtain_benchmark(cfg, log);
  std::vector<EvalRow> rows;
  with_precision(ck.config.training.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto net = load_checkpoint_weights<T>(checkpoint, ck);
    auto add = [&](const Dataset& d) {
      const auto r = evaluate_detailed(net, d);
      rows.push_back({d.domain, d.split, r.count, r.loss, r.accuracy});
    };
    add(bench.source_val);
    for (const auto& t : bench.targets) add(t);
  });
  write_eval_csv(fs::path(cfg.output_dir) / "eval.csv", rows);
  write_run_record(cfg.output_dir, "eval", cfg,
                   {{"checkpoint", checkpoint.string()}, {"checkpoint_config_hash", config_hash(ck.config)}});
  return rows;
}

json to_json(const GapReport& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage},
                      {"mmd", s.mmd},
                      {"accumulated", s.accumulated},
                      {"bandwidth", s.bandwidth},
                      {"a", {{"mean", s.a.mean}, {"std", s.a.std}}},
                      {"b", {{"mean", s.b.mean}, {"std", s.b.std}}}});
  }
  return {{"model_id", r.model_id},
          {"dataset_a", r.dataset_a},
          {"dataset_b", r.dataset_b},
          {"kernel", r.kernel.describe()},
          {"embedding", to_string(r.embedding)},
          {"stages", stages}};
}

json to_json(const SensitivityReport& r) {
  return {{"stage", r.stage},
          {"delta", r.delta.delta},
          {"delta_raw", r.delta.delta_raw},
          {"mean_of_means", r.delta.mean_of_means},
          {"between", r.between},
          {"within", r.within},
          {"ranking", r.ranking},
          {"top_k", r.top_k},
          {"signal_ratio", r.signal_ratio},
          {"style_signal", r.style_signal}};
}

json to_json(const TransferMetrics& m) {
  return {{"fraction", m.fraction},
          {"direction", to_string(m.direction)},
          {"channels", m.channels},
          {"style_match_mmd", m.style_match_mmd},
          {"baseline_mmd", m.baseline_mmd},
          {"bandwidth", m.bandwidth},
          {"content_retention", m.content_retention}};
}

std::vector<fs::path> cmd_diagnose(const ExperimentConfig& cfg, const fs::path& checkpoint, const Logger& log) {
  const auto ck = read_checkpoint_manifest(checkpoint);
  const Benchmark bench = obtain_benchmark(cfg, log);
  const fs::path dir = fs::path(cfg.output_dir) / "diagnostics";
  const auto& d = cfg.diagnostics;
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const json& j) {
    write_json(dir / name, j);
    written.push_back(dir / name);
  };
  with_precision(ck.config.training.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto net = load_checkpoint_weights<T>(checkpoint, ck);
    const auto model_id = config_hash(ck.config);
    const auto src = extract_stage_features(net, bench.source_val);
    auto keep = [&](const std::vector<Tensor<T>>& all) {
      if (d.stages.empty()) return all;
      std::vector<Tensor<T>> sel;
      for (auto s : d.stages) sel.push_back(all.at(s - 1));
      return sel;
    };
    for (const auto& target : bench.targets) {
      const auto tgt = extract_stage_features(net, target);
      auto report = stage_gap_from_features(keep(src), keep(tgt), d.kernel, d.embedding);
      report.model_id = model_id;
      report.dataset_a = bench.source_val.domain + "/" + bench.source_val.split;
      report.dataset_b = target.domain + "/" + target.split;
      if (!d.stages.empty()) {
        for (std::size_t i = 0; i < report.stages.size(); ++i) report.stages[i].stage = d.stages[i];
      }
      emit("gap_" + target.domain + ".json", to_json(report));
      say(log, "gap source/" + target.domain + " final-stage mmd " + std::to_string(report.final_mmd()));
      if (target.domain == d.gap_target) {
        for (std::size_t s = 0; s < src.size(); ++s) {
          for (const auto* set : {&src, &tgt}) {
            const auto v = stats_to_vectors(channel_mean_std((*set)[s]));
            std::vector<double> flat;
            for (const auto& row : v) flat.insert(flat.end(), row.begin(), row.end());
            const std::string domain = set == &src ? "source" : target.domain;
            const auto file = dir / ("stats_" + domain + "_stage" + std::to_string(s + 1) + ".tsr");
            write_tsr<double>(file, {v.size(), v.front().size()}, flat);
            written.push_back(file);
          }
        }
      }
    }
    const auto& styled = bench.target(d.sensitivity_target);
    const auto sens = sensitivity_ranking(net, bench.source_val, styled, d.sensitivity_stage, d.top_k);
    emit("sensitivity.json", to_json(sens));
    json transfer = json::array();
    for (auto [fraction, dir_] : {std::pair{d.transfer_fraction, ChannelDirection::most_sensitive},
                                  std::pair{1.0 - d.transfer_fraction, ChannelDirection::least_sensitive}}) {
      transfer.push_back(to_json(channel_subset_transfer(net, bench.source_val, styled, d.sensitivity_stage, fraction,
                                                         dir_, d.kernel)));
    }
    emit("transfer.json", {{"content", bench.source_val.domain},
                           {"style", styled.domain},
                           {"stage", d.sensitivity_stage},
                           {"results", transfer}});
  });
  write_run_record(cfg.output_dir, "diagnose", cfg, {{"checkpoint", checkpoint.string()}});
  return written;
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, std::size_t jobs, const Logger& log) {
  const Benchmark bench = obtain_benchmark(cfg, log);
  SweepSpec spec;
  spec.network = cfg.network;
  spec.training = cfg.training;
  spec.seeds = cfg.diagnostics.sweep_seeds;
  spec.cells = expand_grid(cfg.diagnostics.sweep);
  spec.kernel = cfg.diagnostics.kernel;
  spec.embedding = cfg.diagnostics.embedding;
  spec.jobs = jobs;
  auto result = run_sweep(spec, bench, log);
  const fs::path dir = cfg.output_dir;
  std::ostringstream rows, summary;
  write_sweep_csv(result, rows);
  write_sweep_summary_csv(result, summary);
  write_text(dir / "sweep.csv", rows.str());
  write_text(dir / "sweep_summary.csv", summary.str());
  write_run_record(dir, "sweep", cfg, {{"jobs", jobs}, {"cells", spec.cells.size()}});
  return result;
}

template void save_checkpoint(const fs::path&, const ToyNet<float>&, const ExperimentConfig&, std::size_t,
                              const std::vector<EpochMetrics>&);
template void save_checkpoint(const fs::path&, const ToyNet<double>&, const ExperimentConfig&, std::size_t,
                              const std::vector<EpochMetrics>&);
template ToyNet<float> load_checkpoint_weights(const fs::path&, const Checkpoint&);
template ToyNet<double> load_checkpoint_weights(const fs::path&, const Checkpoint&);

}  // namespace normpert
