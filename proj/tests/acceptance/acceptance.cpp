// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   normpert_acceptance [--workdir DIR] [--only 1,2,7] [--jobs N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "normpert/diagnostics.hpp"
#include "normpert/experiment.hpp"
#include "normpert/featstats.hpp"
#include "normpert/ops.hpp"
#include "normpert/perturb.hpp"

using namespace normpert;
using TD = Tensor<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Random channels that are never constant: uniform noise plus a per-channel offset.
TD random_features(Rng& rng, std::size_t B, std::size_t C, std::size_t H, std::size_t W) {
  std::vector<double> v(B * C * H * W);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double offset = rng.uniform(-2.0, 2.0), spread = rng.uniform(0.1, 3.0);
    for (std::size_t i = 0; i < H * W; ++i) v[bc * H * W + i] = offset + spread * rng.uniform(-1.0, 1.0);
  }
  return TD({B, C, H, W}, std::move(v));
}

TD random_shape_features(Rng& rng) {
  const std::size_t B = 1 + rng.index(4), C = 1 + rng.index(8), S = 2 + rng.index(15);
  return random_features(rng, B, C, S, S);
}

template <typename F>
GradCheckResult weighted_check(F f, const TD& x, Rng& rng) {
  const TD probe = f(x.detach());
  std::vector<double> w(probe.numel());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  const TD weights(probe.shape(), w);
  TD leaf = x.detach();
  leaf.set_requires_grad(true);
  backward(sum(mul(f(leaf), weights)));
  const auto numeric = finite_difference_grad(
      [&](const TD& z) {
        NoGradGuard g;
        return sum(mul(f(z), weights)).item();
      },
      x.detach());
  return compare_gradients(leaf.grad(), numeric.data());
}

// ---------------------------------------------------------------------------
// Algebraic criteria

Outcome equivalence() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const TD x = random_shape_features(rng);
    const auto d = sample_noise(NoiseSpec::gaussian(1.0, 0.75), x.dim(0), x.dim(1), rng);
    const auto a = np_forward(x, d);
    const auto b = np_reference(x, d, 1e-12);
    for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return {worst < 1e-9, fmt("max |difference| %.3g over 100 tensors (limit 1e-9)", worst)};
}

Outcome stats_realization() {
  Rng rng(102);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int t = 0; t < 100; ++t) {
    const TD x = random_shape_features(rng);
    const auto d = sample_noise(NoiseSpec::gaussian(1.0, 0.75), x.dim(0), x.dim(1), rng);
    const auto sx = channel_mean_std(x);
    const auto sy = channel_mean_std(np_forward(x, d));
    for (std::size_t i = 0; i < sx.mean.size(); ++i) {
      worst_mean = std::max(worst_mean, std::abs(sy.mean[i] - d.beta[i] * sx.mean[i]));
      worst_std = std::max(worst_std, std::abs(sy.std[i] - std::abs(d.alpha[i]) * sx.std[i]));
    }
  }
  return {worst_mean < 1e-10 && worst_std < 1e-10,
          fmt("max mean error %.3g, max std error %.3g (limit 1e-10)", worst_mean, worst_std)};
}

Outcome gradient_suite() {
  Rng rng(103);
  double worst = 0.0;
  bool ok = true;
  std::string failed;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.ok()) {
      ok = false;
      failed += " " + name;
    }
  };
  auto rand_t = [&](const Shape& s, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(s));
    for (auto& e : v) e = rng.uniform(lo, hi);
    return TD(s, std::move(v));
  };

  const TD x = rand_t({2, 2, 5, 5}), w = rand_t({3, 2, 3, 3}), b = rand_t({3});
  record("conv2d/x", weighted_check([&](const TD& z) { return conv2d(z, w.detach(), b.detach(), 1, 1); }, x, rng));
  record("conv2d/w", weighted_check([&](const TD& z) { return conv2d(x.detach(), z, b.detach(), 1, 1); }, w, rng));
  record("conv2d/b", weighted_check([&](const TD& z) { return conv2d(x.detach(), w.detach(), z, 1, 1); }, b, rng));
  std::vector<double> away(24);
  for (auto& e : away) e = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  record("relu", weighted_check([](const TD& z) { return relu(z); }, TD({2, 3, 2, 2}, away), rng));
  record("maxpool2", weighted_check([](const TD& z) { return maxpool2(z); }, rand_t({2, 2, 4, 4}), rng));
  record("global_avg_pool", weighted_check([](const TD& z) { return global_avg_pool(z); }, rand_t({2, 3, 3, 3}), rng));
  const TD lx = rand_t({3, 5}), lw = rand_t({4, 5}), lb = rand_t({4});
  record("linear/x", weighted_check([&](const TD& z) { return linear(z, lw.detach(), lb.detach()); }, lx, rng));
  record("linear/w", weighted_check([&](const TD& z) { return linear(lx.detach(), z, lb.detach()); }, lw, rng));
  record("linear/b", weighted_check([&](const TD& z) { return linear(lx.detach(), lw.detach(), z); }, lb, rng));
  const std::vector<int> labels{1, 0, 3};
  record("cross_entropy",
         weighted_check([&](const TD& z) { return softmax_cross_entropy(z, labels); }, rand_t({3, 4}, -3, 3), rng));
  const TD ea = rand_t({2, 3}), eb = rand_t({2, 3});
  record("add", weighted_check([&](const TD& z) { return add(z, eb.detach()); }, ea, rng));
  record("mul", weighted_check([&](const TD& z) { return mul(z, eb.detach()); }, ea, rng));
  record("scale", weighted_check([&](const TD& z) { return scale(z, 1.3); }, ea, rng));
  record("square", weighted_check([&](const TD& z) { return square(z); }, ea, rng));

  const TD f = random_features(rng, 3, 4, 4, 4);
  const auto d = sample_noise(NoiseSpec::gaussian(1.0, 0.75), 3, 4, rng);
  record("np_forward", weighted_check([&](const TD& z) { return np_forward(z, d); }, f, rng));
  const auto delta = minibatch_delta(f);
  record("np_plus_forward", weighted_check([&](const TD& z) { return np_plus_forward(z, d, delta); }, f, rng));

  // Two-stage 8x8 network with 4 and 8 channels and an always-on NP site.
  NetworkConfig cfg;
  cfg.stages = {{4, 1}, {8, 1}};
  cfg.input_size = 8;
  NpSiteConfig site;
  site.probability = 1.0;
  cfg.np_sites = {site};
  ToyNet<double> net(cfg, 5);
  const TD images = rand_t({4, 3, 8, 8}, 0.0, 1.0);
  const std::vector<int> ys{0, 1, 2, 3};
  auto loss_of = [&](const ToyNet<double>& n) {
    Rng r(17);
    return softmax_cross_entropy(n.forward(images, true, &r).logits, ys);
  };
  backward(loss_of(net));
  std::vector<double> analytic;
  for (const auto& [name, p] : net.named_parameters()) analytic.insert(analytic.end(), p.grad().begin(), p.grad().end());
  const auto flat = net.flat_parameters();
  ToyNet<double> probe(cfg, 5);
  const auto numeric = finite_difference_grad(
      [&](const TD& z) {
        NoGradGuard g;
        std::size_t at = 0;
        for (const auto& [name, p] : probe.named_parameters()) {
          probe.load_parameter(name, z.data().subspan(at, p.numel()));
          at += p.numel();
        }
        return loss_of(probe).item();
      },
      TD({flat.size()}, flat));
  record("network", compare_gradients(analytic, numeric.data()));
  return {ok, fmt("worst relative error %.3g (limit 1e-4)", worst) + (ok ? "" : ", failed:" + failed)};
}

Outcome unbiasedness() {
  Rng rng(104);
  const TD x = random_features(rng, 2, 3, 4, 4);
  const std::size_t draws = 10000;
  std::vector<double> acc(x.numel(), 0.0);
  const auto stats = channel_mean_std(x);
  for (std::size_t t = 0; t < draws; ++t) {
    const auto d = sample_noise(NoiseSpec::gaussian(1.0, 0.75), 2, 3, rng);
    const auto y = np_forward(x, d);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += y.data()[i];
  }
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double mu = stats.mean[i / 16];
    const double bound = 5.0 * 0.75 * (std::abs(x.data()[i] - mu) + std::abs(mu)) / 100.0;
    worst_ratio = std::max(worst_ratio, std::abs(acc[i] / static_cast<double>(draws) - x.data()[i]) / bound);
  }
  return {worst_ratio < 1.0, fmt("worst deviation is %.3f of the allowed bound", worst_ratio)};
}

Outcome order_preservation() {
  Rng rng(105);
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const TD x = random_features(rng, 2, 3, 5, 5);
    auto d = sample_noise(NoiseSpec::gaussian(1.0, 0.75), 2, 3, rng);
    for (auto& a : d.alpha) {
      while (a <= 0.0) a = NoiseSpec::gaussian(1.0, 0.75).sample(rng);
    }
    const auto y = np_forward(x, d);
    for (std::size_t bc = 0; bc < 6; ++bc) {
      std::vector<std::size_t> ox(25), oy(25);
      for (std::size_t i = 0; i < 25; ++i) ox[i] = oy[i] = i;
      const auto xs = x.data().subspan(bc * 25, 25), ys = y.data().subspan(bc * 25, 25);
      std::stable_sort(ox.begin(), ox.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
      std::stable_sort(oy.begin(), oy.end(), [&](auto a, auto b) { return ys[a] < ys[b]; });
      violations += ox != oy;
    }
  }
  return {violations == 0, fmt("%zu of 6000 channel orderings changed", violations)};
}

Outcome mmd_correctness() {
  Rng rng(106);
  auto vectors = [&](std::size_t n, std::size_t dim, double shift) {
    Vectors v(n, std::vector<double>(dim));
    for (auto& r : v) {
      for (auto& e : r) e = rng.normal(shift, 1.0);
    }
    return v;
  };
  const KernelSpec linear{KernelFamily::linear, std::nullopt}, rbf{KernelFamily::rbf, std::nullopt};
  double self = 0.0, worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto x = vectors(5 + rng.index(20), 6, 0.0);
    const auto y = vectors(5 + rng.index(20), 6, rng.uniform(-1.0, 1.0));
    self = std::max({self, std::abs(mmd(x, x, rbf)), std::abs(mmd(x, x, linear))});
    double d2 = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      double mx = 0.0, my = 0.0;
      for (const auto& r : x) mx += r[k] / static_cast<double>(x.size());
      for (const auto& r : y) my += r[k] / static_cast<double>(y.size());
      d2 += (mx - my) * (mx - my);
    }
    worst = std::max(worst, std::abs(mmd(x, y, linear) - d2));
  }
  return {self < 1e-12 && worst < 1e-10,
          fmt("max |MMD(X,X)| %.3g (limit 1e-12), max linear error %.3g (limit 1e-10)", self, worst)};
}

// ---------------------------------------------------------------------------
// Trained-model criteria, all drawn from one sweep

struct Context {
  ExperimentConfig config;
  fs::path workdir;
  std::size_t jobs = 1;
  std::optional<Benchmark> bench;
  std::optional<SweepResult> sweep;

  const Benchmark& benchmark() {
    if (!bench) bench = make_benchmark(config.dataset.benchmark);
    return *bench;
  }
};

std::vector<NpSiteConfig> sites_at(const NpSiteConfig& base, const std::vector<std::size_t>& stages) {
  std::vector<NpSiteConfig> out;
  for (auto s : stages) {
    NpSiteConfig c = base;
    c.stage = s;
    out.push_back(c);
  }
  return out;
}

const SweepResult& acceptance_sweep(Context& ctx) {
  if (ctx.sweep) return *ctx.sweep;
  NpSiteConfig ref;
  ref.probability = 0.5;
  ref.noise = NoiseSpec::gaussian(1.0, 0.75);
  const std::vector<std::size_t> shallow{1, 2};
  std::vector<SweepCell> cells;
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    NpSiteConfig s = ref;
    s.probability = p;
    cells.push_back({"p", fmt("p=%g", p), sites_at(s, shallow), false});
  }
  for (const auto& noise : {NoiseSpec::beta_scaled(0.75, 0.75), NoiseSpec::uniform(0.0, 2.0),
                            NoiseSpec::gaussian(1.0, 0.5), NoiseSpec::gaussian(1.0, 0.75),
                            NoiseSpec::gaussian(1.0, 1.0)}) {
    NpSiteConfig s = ref;
    s.noise = noise;
    cells.push_back({"noise", noise.describe(), sites_at(s, shallow), false});
  }
  cells.push_back({"placement", "1+2", sites_at(ref, shallow), false});
  cells.push_back({"placement", "3", sites_at(ref, {3}), false});
  NpSiteConfig plus = ref;
  plus.mode = NpMode::np_plus;
  cells.push_back({"augment", "np_plus+aug", sites_at(plus, shallow), true});

  SweepSpec spec;
  spec.network = ctx.config.network;
  spec.network.np_sites.clear();
  spec.training = ctx.config.training;
  spec.seeds = {1, 2, 3};
  spec.cells = cells;
  spec.kernel = ctx.config.diagnostics.kernel;
  spec.embedding = ctx.config.diagnostics.embedding;
  spec.jobs = ctx.jobs;
  std::cerr << "training the acceptance sweep (" << cells.size() << " cells x 3 seeds, shared models deduplicated)\n";
  ctx.sweep = run_sweep(spec, ctx.benchmark(), [](const std::string& s) { std::cerr << "  " << s << "\n"; });

  fs::create_directories(ctx.workdir);
  std::ofstream rows(ctx.workdir / "acceptance_sweep.csv"), summary(ctx.workdir / "acceptance_sweep_summary.csv");
  write_sweep_csv(*ctx.sweep, rows);
  write_sweep_summary_csv(*ctx.sweep, summary);
  return *ctx.sweep;
}

const SweepSummaryRow& summary_row(const SweepResult& r, const std::string& group, const std::string& label) {
  const auto* row = r.find(group, label);
  if (!row) throw std::runtime_error("acceptance sweep lacks " + group + "/" + label);
  return *row;
}

double target_mean(const SweepSummaryRow& r, const std::string& domain) {
  for (std::size_t i = 0; i < r.targets.size(); ++i) {
    if (r.targets[i] == domain) return r.target_mean[i];
  }
  throw std::runtime_error("no target " + domain);
}

Outcome headline(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const auto& base = summary_row(sw, "p", "p=0");
  const auto& np = summary_row(sw, "p", "p=0.5");
  bool ok = true;
  std::string detail;
  for (const auto& t : base.targets) {
    const double gain = 100.0 * (target_mean(np, t) - target_mean(base, t));
    ok = ok && gain >= 3.0;
    detail += fmt("%s %+.2f pts, ", t.c_str(), gain);
  }
  const double drop = 100.0 * (base.source_mean - np.source_mean);
  ok = ok && drop <= 2.0;
  detail += fmt("source drop %.2f pts (need every target >= +3, drop <= 2)", drop);
  return {ok, detail};
}

Outcome blending(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const double base = summary_row(sw, "p", "p=0").final_stage_mmd;
  const double np = summary_row(sw, "p", "p=0.5").final_stage_mmd;
  const double reduction = base > 0.0 ? 1.0 - np / base : 0.0;
  return {np < base && reduction >= 0.2,
          fmt("final-stage MMD source/fog: baseline %.4g, NP %.4g, reduction %.1f%% (need >= 20%%)", base, np,
              100.0 * reduction)};
}

Outcome p_curve(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const double base = summary_row(sw, "p", "p=0").mean_target;
  bool ok = true;
  std::string detail = fmt("p=0 %.4f", base);
  for (const char* label : {"p=0.25", "p=0.5", "p=0.75", "p=1"}) {
    const double v = summary_row(sw, "p", label).mean_target;
    ok = ok && v > base;
    detail += fmt(", %s %.4f", label, v);
  }
  return {ok, detail + " (mean target accuracy; all must exceed p=0)"};
}

Outcome noise_types(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const double base = summary_row(sw, "p", "p=0").mean_target;
  bool ok = true;
  std::string detail = fmt("baseline %.4f", base);
  for (const auto& noise : {NoiseSpec::beta_scaled(0.75, 0.75), NoiseSpec::uniform(0.0, 2.0),
                            NoiseSpec::gaussian(1.0, 0.5), NoiseSpec::gaussian(1.0, 0.75),
                            NoiseSpec::gaussian(1.0, 1.0)}) {
    const double v = summary_row(sw, "noise", noise.describe()).mean_target;
    ok = ok && v > base;
    detail += fmt(", %s %.4f", noise.describe().c_str(), v);
  }
  return {ok, detail};
}

Outcome placement(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const double shallow = summary_row(sw, "placement", "1+2").mean_target;
  const double deep = summary_row(sw, "placement", "3").mean_target;
  return {shallow > deep, fmt("stages 1+2 %.4f vs stage 3 %.4f (mean target accuracy)", shallow, deep)};
}

Outcome np_plus_augment(Context& ctx) {
  const auto& sw = acceptance_sweep(ctx);
  const double plus = summary_row(sw, "augment", "np_plus+aug").mean_target;
  const double np = summary_row(sw, "p", "p=0.5").mean_target;
  const double diff = 100.0 * (plus - np);
  const bool strict = diff >= 0.0;
  return {diff >= -0.5, fmt("NP+ with augmentation %.4f vs NP %.4f (%+.2f pts%s)", plus, np, diff,
                            strict ? "" : ", below NP but within the 0.5-point tolerance")};
}

Outcome sensitivity(Context& ctx) {
  bool recall_ok = true;
  std::string detail;
  const auto stem = make_passthrough_stem<double>();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    BenchmarkConfig bc = ctx.config.dataset.benchmark;
    bc.seed = seed;
    bc.train_size = 4;
    const auto bench = make_benchmark(bc);
    const auto r = sensitivity_ranking(stem, bench.source_val, bench.target("warm"), 1, 2);
    const std::set<std::size_t> top(r.top_k.begin(), r.top_k.end());
    const bool hit = top == std::set<std::size_t>{0, 2};
    recall_ok = recall_ok && hit;
    detail += fmt("seed %llu top-2 {%zu,%zu}; ", static_cast<unsigned long long>(seed), r.top_k[0], r.top_k[1]);
  }

  // Channel-subset transfer on stage-1 features of the trained baselines.
  const auto& bench = ctx.benchmark();
  const auto& warm = bench.target("warm");
  bool transfer_ok = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ToyNet<float> net(ctx.config.network, init_seed_for(seed));
    TrainConfig tc = ctx.config.training;
    tc.seed = seed;
    train(net, bench.source_train, nullptr, tc);
    const KernelSpec& k = ctx.config.diagnostics.kernel;
    const auto most = channel_subset_transfer(net, bench.source_val, warm, 1, 0.2, ChannelDirection::most_sensitive, k);
    const auto least =
        channel_subset_transfer(net, bench.source_val, warm, 1, 0.8, ChannelDirection::least_sensitive, k);
    transfer_ok = transfer_ok && most.style_match_mmd < least.style_match_mmd;
    detail += fmt("seed %llu MMD top-20%% %.4g vs bottom-80%% %.4g; ", static_cast<unsigned long long>(seed),
                  most.style_match_mmd, least.style_match_mmd);
  }
  return {recall_ok && transfer_ok, detail};
}

Outcome determinism(Context& ctx) {
  ExperimentConfig cfg = ctx.config;
  cfg.np.sites = sites_at(NpSiteConfig{}, {1, 2});
  std::vector<std::string> metrics;
  for (const char* run : {"det_a", "det_b"}) {
    cfg.output_dir = (ctx.workdir / run).string();
    cfg.dataset.dir = (ctx.workdir / "data").string();
    fs::remove_all(fs::path(cfg.output_dir));
    const auto out = cmd_train(cfg);
    std::ifstream is(out.metrics_csv, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    metrics.push_back(ss.str());
  }
  std::size_t identical = 0, blobs = 0;
  for (const auto& e : fs::directory_iterator(ctx.workdir / "det_a" / "checkpoint")) {
    if (e.path().extension() != ".tsr") continue;
    ++blobs;
    std::ifstream a(e.path(), std::ios::binary), b(ctx.workdir / "det_b" / "checkpoint" / e.path().filename(),
                                                    std::ios::binary);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    identical += sa.str() == sb.str();
  }
  const bool same = metrics[0] == metrics[1] && !metrics[0].empty();
  return {same && identical == blobs,
          fmt("metrics.csv %s, %zu/%zu weight blobs identical", same ? "identical" : "differs", identical, blobs)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the normalization-perturbation library"};
  std::string workdir = "acceptance_runs";
  std::string config_path = NORMPERT_DEFAULT_CONFIG;
  std::vector<int> only;
  std::size_t jobs = 1;
  app.add_option("--workdir", workdir, "scratch directory for runs and sweep tables");
  app.add_option("--config", config_path, "base experiment config")->check(CLI::ExistingFile);
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--jobs", jobs, "models trained concurrently in the sweep")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.config = load_config(config_path);
  ctx.workdir = workdir;
  ctx.jobs = jobs;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"normalized and reference forms agree", equivalence},
      {"perturbed statistics are realized", stats_realization},
      {"gradients match finite differences", gradient_suite},
      {"perturbation is unbiased", unbiasedness},
      {"spatial order is preserved", order_preservation},
      {"MMD correctness", mmd_correctness},
      {"NP improves every target domain", [&] { return headline(ctx); }},
      {"NP reduces the final-stage domain gap", [&] { return blending(ctx); }},
      {"every p > 0 beats p = 0", [&] { return p_curve(ctx); }},
      {"every noise family beats the baseline", [&] { return noise_types(ctx); }},
      {"shallow placement beats stage 3", [&] { return placement(ctx); }},
      {"warm-shift sensitivity and subset transfer", [&] { return sensitivity(ctx); }},
      {"NP+ with augmentation matches NP", [&] { return np_plus_augment(ctx); }},
      {"training is deterministic", [&] { return determinism(ctx); }},
  };

  std::size_t failures = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    ++ran;
    const auto line = fmt("%s %2d %s: ", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str()) + o.detail +
                      fmt(" [%.1fs]", secs);
    std::cout << line << std::endl;
  }
  std::cout << "\n" << (ran - failures) << " passed, " << failures << " failed\n";
  return failures == 0 ? 0 : 1;
}
