#include "normpert/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace normpert {

StatsSummary summarize(const ChannelStats& stats) {
  StatsSummary s;
  s.mean.assign(stats.channels, 0.0);
  s.std.assign(stats.channels, 0.0);
  for (std::size_t b = 0; b < stats.batch; ++b) {
    for (std::size_t c = 0; c < stats.channels; ++c) {
      s.mean[c] += stats.mean_at(b, c);
      s.std[c] += stats.std_at(b, c);
    }
  }
  for (std::size_t c = 0; c < stats.channels; ++c) {
    s.mean[c] /= static_cast<double>(stats.batch);
    s.std[c] /= static_cast<double>(stats.batch);
  }
  return s;
}

namespace {

double embedded_mmd(const ChannelStats& a, const ChannelStats& b, const KernelSpec& kernel, Embedding embedding,
                    double* bandwidth) {
  Vectors xs = stats_to_vectors(a);
  Vectors ys = stats_to_vectors(b);
  if (embedding == Embedding::zscore) zscore_jointly(xs, ys);
  if (bandwidth) *bandwidth = kernel.family == KernelFamily::rbf ? resolved_bandwidth(xs, ys, kernel) : 0.0;
  return mmd(xs, ys, kernel);
}

std::vector<std::size_t> argsort_desc(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] > v[j]; });
  return idx;
}

}  // namespace

template <typename T>
GapReport stage_gap_from_features(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                                  const KernelSpec& kernel, Embedding embedding) {
  if (a.size() != b.size()) throw std::invalid_argument("stage_gap: stage count differs between feature sets");
  GapReport report;
  report.kernel = kernel;
  report.embedding = embedding;
  double running = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const auto sa = channel_mean_std(a[s]);
    const auto sb = channel_mean_std(b[s]);
    StageGap g;
    g.stage = s + 1;
    g.mmd = embedded_mmd(sa, sb, kernel, embedding, &g.bandwidth);
    running += g.mmd;
    g.accumulated = running;
    g.a = summarize(sa);
    g.b = summarize(sb);
    report.stages.push_back(std::move(g));
  }
  return report;
}

template <typename T>
GapReport stage_gap(const ToyNet<T>& net, const Dataset& a, const Dataset& b, const KernelSpec& kernel,
                    Embedding embedding, const std::string& model_id) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("stage_gap: empty dataset");
  auto report = stage_gap_from_features(extract_stage_features(net, a), extract_stage_features(net, b), kernel,
                                        embedding);
  report.model_id = model_id;
  report.dataset_a = a.domain + "/" + a.split;
  report.dataset_b = b.domain + "/" + b.split;
  return report;
}

void require_paired(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) throw std::invalid_argument("paired sets: empty dataset");
  if (a.size() != b.size() || a.content_ids != b.content_ids) {
    throw std::invalid_argument("paired sets: " + a.domain + "/" + a.split + " and " + b.domain + "/" + b.split +
                                " do not share the same content in the same order");
  }
}

template <typename T>
SensitivityReport sensitivity_from_features(const Tensor<T>& a, const Tensor<T>& b, std::size_t top_k,
                                            std::size_t stage) {
  if (a.shape() != b.shape() || a.rank() != 4) {
    throw std::invalid_argument("sensitivity: paired features must have equal N x C x H x W shapes");
  }
  const auto sa = channel_mean_std(a);
  const auto sb = channel_mean_std(b);
  const std::size_t n = sa.batch, channels = sa.channels;
  if (top_k > channels) throw std::invalid_argument("sensitivity: top_k exceeds the channel count");

  std::vector<double> means(sa.mean);
  means.insert(means.end(), sb.mean.begin(), sb.mean.end());

  SensitivityReport r;
  r.stage = stage;
  r.delta = batch_stat_variance(means, 2 * n, channels);
  r.between.assign(channels, 0.0);
  r.within.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double centre_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double half = 0.5 * (sa.mean_at(i, c) - sb.mean_at(i, c));
      r.between[c] += half * half;
      centre_mean += 0.5 * (sa.mean_at(i, c) + sb.mean_at(i, c));
    }
    centre_mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = 0.5 * (sa.mean_at(i, c) + sb.mean_at(i, c)) - centre_mean;
      r.within[c] += d * d;
    }
    r.between[c] /= static_cast<double>(n);
    r.within[c] /= static_cast<double>(n);
  }
  r.ranking = argsort_desc(r.delta.delta_raw);
  r.top_k.assign(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(top_k));
  const double max_between = *std::max_element(r.between.begin(), r.between.end());
  const double max_within = *std::max_element(r.within.begin(), r.within.end());
  if (max_within > 0.0) {
    r.signal_ratio = max_between / max_within;
  } else {
    r.signal_ratio = max_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  r.style_signal = r.signal_ratio >= SensitivityReport::kStyleSignalRatio;
  return r;
}

namespace {

template <typename T>
Tensor<T> stage_features(const ToyNet<T>& net, const Dataset& data, std::size_t stage) {
  const auto n_stages = net.config().stages.size();
  if (stage < 1 || stage > n_stages) {
    throw std::invalid_argument("stage " + std::to_string(stage) + " out of range 1.." + std::to_string(n_stages));
  }
  return extract_stage_features(net, data)[stage - 1];
}

}  // namespace

template <typename T>
SensitivityReport sensitivity_ranking(const ToyNet<T>& net, const Dataset& a, const Dataset& b, std::size_t stage,
                                      std::size_t top_k) {
  require_paired(a, b);
  return sensitivity_from_features(stage_features(net, a, stage), stage_features(net, b, stage), top_k, stage);
}

std::size_t subset_size(double fraction, std::size_t channels) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("channel fraction must lie in [0, 1]");
  }
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(channels)));
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("spearman: length mismatch or empty input");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 && syy == 0.0) return 1.0;
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

template <typename T>
TransferMetrics channel_subset_transfer(const Tensor<T>& content, const Tensor<T>& style, double fraction,
                                        ChannelDirection direction, const KernelSpec& kernel) {
  const std::size_t channels = content.dim(1);
  const std::size_t k = subset_size(fraction, channels);
  const auto sens = sensitivity_from_features(content, style, 0);

  TransferMetrics m;
  m.fraction = fraction;
  m.direction = direction;
  if (direction == ChannelDirection::most_sensitive) {
    m.channels.assign(sens.ranking.begin(), sens.ranking.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    m.channels.assign(sens.ranking.end() - static_cast<std::ptrdiff_t>(k), sens.ranking.end());
  }
  std::sort(m.channels.begin(), m.channels.end());
  std::vector<bool> mask(channels, false);
  for (auto c : m.channels) mask[c] = true;

  const auto content_stats = channel_mean_std(content);
  const auto style_stats = channel_mean_std(style);
  const Tensor<T> moved = adain_transfer(content, content_stats, style_stats, mask);
  const auto moved_stats = channel_mean_std(moved);
  const auto content_vecs = stats_to_vectors(content_stats);
  const auto style_vecs = stats_to_vectors(style_stats);
  KernelSpec fixed = kernel;
  if (fixed.family == KernelFamily::rbf) fixed.bandwidth = resolved_bandwidth(content_vecs, style_vecs, kernel);
  m.bandwidth = fixed.family == KernelFamily::rbf ? *fixed.bandwidth : 0.0;
  m.style_match_mmd = mmd(stats_to_vectors(moved_stats), style_vecs, fixed);
  m.baseline_mmd = mmd(content_vecs, style_vecs, fixed);

  const std::size_t n = content.dim(0);
  const std::size_t plane = content.numel() / (n * channels);
  const auto cx = content.data();
  const auto mx = moved.data();
  std::vector<double> u(plane), v(plane);
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        u[i] = static_cast<double>(cx[off + i]);
        v[i] = static_cast<double>(mx[off + i]);
      }
      total += spearman(u, v);
    }
  }
  m.content_retention = total / static_cast<double>(n * channels);
  return m;
}

template <typename T>
TransferMetrics channel_subset_transfer(const ToyNet<T>& net, const Dataset& content, const Dataset& style,
                                        std::size_t stage, double fraction, ChannelDirection direction,
                                        const KernelSpec& kernel) {
  require_paired(content, style);
  subset_size(fraction, 1);
  return channel_subset_transfer(stage_features(net, content, stage), stage_features(net, style, stage), fraction,
                                 direction, kernel);
}

std::string to_string(ChannelDirection d) {
  return d == ChannelDirection::most_sensitive ? "most" : "least";
}

ChannelDirection direction_from_string(const std::string& s) {
  if (s == "most") return ChannelDirection::most_sensitive;
  if (s == "least") return ChannelDirection::least_sensitive;
  throw std::invalid_argument("unknown channel direction '" + s + "' (expected most or least)");
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

std::string fmt_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string stages_label(const std::vector<std::size_t>& stages) {
  std::string s = "stage";
  for (auto st : stages) s += std::to_string(st);
  return s;
}

SweepCell make_cell(std::string group, std::string label, const NpSiteConfig& site,
                    const std::vector<std::size_t>& stages, bool augment) {
  SweepCell cell{std::move(group), std::move(label), {}, augment};
  if (site.probability > 0.0) {
    for (auto st : stages) {
      NpSiteConfig s = site;
      s.stage = st;
      cell.sites.push_back(s);
    }
  }
  return cell;
}

}  // namespace

std::string SweepCell::key() const {
  std::ostringstream os;
  os << "augment=" << (augment ? 1 : 0);
  for (const auto& s : sites) {
    os << ";stage=" << s.stage << ",p=" << fmt_number(s.probability) << ",mode=" << to_string(s.mode)
       << ",noise=" << s.noise.describe() << ",gran=" << to_string(s.granularity)
       << ",clamp=" << s.clamp_negative_alpha << ",per_sample=" << s.per_sample_gate;
  }
  return os.str();
}

std::vector<SweepCell> expand_grid(const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  const auto& ref = grid.reference;
  const auto& ref_stages = grid.reference_stages;
  for (double p : grid.p_grid) {
    NpSiteConfig s = ref;
    s.probability = p;
    cells.push_back(make_cell("p", "p=" + fmt_number(p), s, ref_stages, false));
  }
  for (const auto& noise : grid.noises) {
    NpSiteConfig s = ref;
    s.noise = noise;
    cells.push_back(make_cell("noise", noise.describe(), s, ref_stages, false));
  }
  for (const auto& stages : grid.placements) {
    cells.push_back(make_cell("placement", stages_label(stages), ref, stages, false));
  }
  for (auto mode : grid.modes) {
    NpSiteConfig s = ref;
    s.mode = mode;
    cells.push_back(make_cell("mode", to_string(mode), s, ref_stages, false));
  }
  for (auto g : grid.granularities) {
    NpSiteConfig s = ref;
    s.granularity = g;
    cells.push_back(make_cell("granularity", to_string(g), s, ref_stages, false));
  }
  if (grid.augment_ablation) {
    NpSiteConfig none = ref;
    none.probability = 0.0;
    cells.push_back(make_cell("augment", "baseline+aug", none, ref_stages, true));
    for (auto mode : {NpMode::np, NpMode::np_plus}) {
      NpSiteConfig s = ref;
      s.mode = mode;
      cells.push_back(make_cell("augment", to_string(mode) + "+aug", s, ref_stages, true));
    }
  }
  return cells;
}

double SweepRow::mean_target_accuracy() const {
  if (target_accuracy.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [name, acc] : target_accuracy) s += acc;
  return s / static_cast<double>(target_accuracy.size());
}

double SweepRow::target(const std::string& domain) const {
  for (const auto& [name, acc] : target_accuracy) {
    if (name == domain) return acc;
  }
  throw std::out_of_range("sweep row has no target '" + domain + "'");
}

const SweepSummaryRow* SweepResult::find(const std::string& group, const std::string& label) const {
  for (const auto& row : summary) {
    if (row.group == group && row.label == label) return &row;
  }
  return nullptr;
}

namespace {

struct ModelOutcome {
  double source = 0.0;
  std::vector<std::pair<std::string, double>> targets;
  double final_mmd = 0.0;
};

ModelOutcome train_and_measure(const SweepSpec& spec, const SweepCell& cell, std::uint64_t seed,
                               const Benchmark& bench) {
  NetworkConfig net_cfg = spec.network;
  net_cfg.np_sites = cell.sites;
  TrainConfig train_cfg = spec.training;
  train_cfg.seed = seed;
  train_cfg.augment = cell.augment;
  ModelOutcome out;
  auto run = [&](auto tag) {
    using T = decltype(tag);
    ToyNet<T> net(net_cfg, init_seed_for(seed));
    train(net, bench.source_train, nullptr, train_cfg);
    out.source = evaluate(net, bench.source_val);
    for (const auto& t : bench.targets) out.targets.emplace_back(t.domain, evaluate(net, t));
    const auto src = extract_stage_features(net, bench.source_val);
    const auto fog = extract_stage_features(net, bench.target("fog"));
    out.final_mmd = stage_gap_from_features(std::vector{src.back()}, std::vector{fog.back()}, spec.kernel,
                                            spec.embedding)
                        .final_mmd();
  };
  if (train_cfg.precision == Precision::float64) {
    run(double{});
  } else {
    run(float{});
  }
  return out;
}

std::optional<std::string> invalid_reason(const SweepSpec& spec, const SweepCell& cell) {
  try {
    NetworkConfig net_cfg = spec.network;
    net_cfg.np_sites = cell.sites;
    net_cfg.validate();
    TrainConfig train_cfg = spec.training;
    train_cfg.augment = cell.augment;
    train_cfg.validate(net_cfg);
  } catch (const std::exception& e) {
    return std::string(e.what());
  }
  return std::nullopt;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const Benchmark& bench, const SweepLog& log) {
  if (spec.seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };

  // Distinct (key, seed) jobs in first-seen order.
  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    ModelOutcome outcome;
  };
  std::vector<Job> jobs;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> job_of;
  std::vector<std::optional<std::string>> invalid(spec.cells.size());
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    invalid[c] = invalid_reason(spec, spec.cells[c]);
    if (invalid[c]) {
      say("skip " + spec.cells[c].group + "/" + spec.cells[c].label + ": " + *invalid[c]);
      continue;
    }
    for (auto seed : spec.seeds) {
      auto key = std::make_pair(spec.cells[c].key(), seed);
      if (!job_of.count(key)) {
        job_of.emplace(key, jobs.size());
        jobs.push_back({c, seed, {}});
      }
    }
  }

  std::mutex mu;
  std::size_t next = 0, done = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t j;
      {
        std::lock_guard lock(mu);
        if (next >= jobs.size() || failure) return;
        j = next++;
      }
      const auto& cell = spec.cells[jobs[j].cell];
      try {
        auto outcome = train_and_measure(spec, cell, jobs[j].seed, bench);
        std::lock_guard lock(mu);
        jobs[j].outcome = std::move(outcome);
        ++done;
        std::ostringstream os;
        os << "[" << done << "/" << jobs.size() << "] " << cell.group << "/" << cell.label << " seed "
           << jobs[j].seed << " source " << fmt_number(jobs[j].outcome.source);
        say(os.str());
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(spec.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    const auto& cell = spec.cells[c];
    for (auto seed : spec.seeds) {
      SweepRow row;
      row.group = cell.group;
      row.label = cell.label;
      row.key = cell.key();
      row.seed = seed;
      if (invalid[c]) {
        row.skipped = true;
        row.reason = *invalid[c];
      } else {
        const auto& o = jobs[job_of.at({row.key, seed})].outcome;
        row.source_accuracy = o.source;
        row.target_accuracy = o.targets;
        row.final_stage_mmd = o.final_mmd;
      }
      result.rows.push_back(std::move(row));
    }
  }
  result.summary = summarize_sweep(result.rows);
  return result;
}

std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows) {
  std::vector<SweepSummaryRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> at;
  for (const auto& row : rows) {
    if (row.skipped) continue;
    auto key = std::make_pair(row.group, row.label);
    auto it = at.find(key);
    if (it == at.end()) {
      SweepSummaryRow s;
      s.group = row.group;
      s.label = row.label;
      s.source_min = s.source_max = row.source_accuracy;
      for (const auto& [name, acc] : row.target_accuracy) {
        s.targets.push_back(name);
        s.target_mean.push_back(0.0);
        s.target_min.push_back(acc);
        s.target_max.push_back(acc);
      }
      it = at.emplace(key, out.size()).first;
      out.push_back(std::move(s));
    }
    auto& s = out[it->second];
    ++s.seeds;
    s.source_mean += row.source_accuracy;
    s.source_min = std::min(s.source_min, row.source_accuracy);
    s.source_max = std::max(s.source_max, row.source_accuracy);
    for (std::size_t t = 0; t < s.targets.size(); ++t) {
      const double acc = row.target(s.targets[t]);
      s.target_mean[t] += acc;
      s.target_min[t] = std::min(s.target_min[t], acc);
      s.target_max[t] = std::max(s.target_max[t], acc);
    }
    s.final_stage_mmd += row.final_stage_mmd;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.seeds);
    s.source_mean /= n;
    s.final_stage_mmd /= n;
    double total = 0.0;
    for (auto& m : s.target_mean) {
      m /= n;
      total += m;
    }
    s.mean_target = s.target_mean.empty() ? 0.0 : total / static_cast<double>(s.target_mean.size());
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace

void write_sweep_csv(const SweepResult& result, std::ostream& os) {
  std::vector<std::string> targets;
  for (const auto& row : result.rows) {
    if (!row.skipped) {
      for (const auto& [name, acc] : row.target_accuracy) targets.push_back(name);
      break;
    }
  }
  os << "group,label,seed,status,source_acc";
  for (const auto& t : targets) os << "," << t << "_acc";
  os << ",mean_target_acc,final_stage_mmd,config\n";
  os << std::setprecision(6);
  for (const auto& row : result.rows) {
    os << csv_field(row.group) << "," << csv_field(row.label) << "," << row.seed << ",";
    if (row.skipped) {
      os << csv_field("skipped: " + row.reason) << ",";
      for (std::size_t t = 0; t < targets.size(); ++t) os << ",";
      os << ",," << csv_field(row.key) << "\n";
      continue;
    }
    os << "ok," << row.source_accuracy;
    for (const auto& t : targets) os << "," << row.target(t);
    os << "," << row.mean_target_accuracy() << "," << row.final_stage_mmd << "," << csv_field(row.key) << "\n";
  }
}

void write_sweep_summary_csv(const SweepResult& result, std::ostream& os) {
  const auto& summary = result.summary;
  os << "group,label,seeds,source_mean,source_min,source_max";
  if (!summary.empty()) {
    for (const auto& t : summary.front().targets) os << "," << t << "_mean," << t << "_min," << t << "_max";
  }
  os << ",mean_target_acc,final_stage_mmd\n";
  os << std::setprecision(6);
  for (const auto& s : summary) {
    os << csv_field(s.group) << "," << csv_field(s.label) << "," << s.seeds << "," << s.source_mean << ","
       << s.source_min << "," << s.source_max;
    for (std::size_t t = 0; t < s.targets.size(); ++t) {
      os << "," << s.target_mean[t] << "," << s.target_min[t] << "," << s.target_max[t];
    }
    os << "," << s.mean_target << "," << s.final_stage_mmd << "\n";
  }
}

#define NORMPERT_INSTANTIATE_DIAG(T)                                                                              \
  template GapReport stage_gap(const ToyNet<T>&, const Dataset&, const Dataset&, const KernelSpec&, Embedding,    \
                               const std::string&);                                                              \
  template GapReport stage_gap_from_features(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,        \
                                             const KernelSpec&, Embedding);                                      \
  template SensitivityReport sensitivity_from_features(const Tensor<T>&, const Tensor<T>&, std::size_t,           \
                                                       std::size_t);                                             \
  template SensitivityReport sensitivity_ranking(const ToyNet<T>&, const Dataset&, const Dataset&, std::size_t,   \
                                                 std::size_t);                                                   \
  template TransferMetrics channel_subset_transfer(const Tensor<T>&, const Tensor<T>&, double, ChannelDirection,  \
                                                   const KernelSpec&);                                           \
  template TransferMetrics channel_subset_transfer(const ToyNet<T>&, const Dataset&, const Dataset&, std::size_t, \
                                                   double, ChannelDirection, const KernelSpec&);

NORMPERT_INSTANTIATE_DIAG(float)
NORMPERT_INSTANTIATE_DIAG(double)

}  // namespace normpert
