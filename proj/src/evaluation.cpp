#include "myoattn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace myoattn::eval {

namespace {

constexpr double kMinTrueExcursionMm = 0.5;  // ME% division guard

struct MeanStd {
  double mean = 0.0;
  double std_dev = 0.0;  // population
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  for (double v : xs) ms.mean += v;
  ms.mean /= static_cast<double>(xs.size());
  for (double v : xs) ms.std_dev += (v - ms.mean) * (v - ms.mean);
  ms.std_dev = std::sqrt(ms.std_dev / static_cast<double>(xs.size()));
  return ms;
}

// Per-sample and per-period errors pooled across stages/subjects so that a
// report row can aggregate several stitched traces.
struct ErrorPool {
  std::vector<double> abs_err;
  std::vector<double> me_err;
  std::vector<double> me_pct;

  void add(const std::vector<double>& pred, const std::vector<double>& truth,
           const std::vector<std::pair<int, int>>& periods) {
    if (pred.size() != truth.size())
      throw ShapeError("metrics: predicted and true traces differ in length");
    for (std::size_t i = 0; i < pred.size(); ++i)
      abs_err.push_back(std::fabs(pred[i] - truth[i]));
    for (const auto& [s, e] : periods) {
      const std::vector<double> pseg(pred.begin() + s, pred.begin() + e);
      const std::vector<double> tseg(truth.begin() + s, truth.begin() + e);
      const double me_true = muscle_excursion(tseg);
      const double err = std::fabs(muscle_excursion(pseg) - me_true);
      me_err.push_back(err);
      if (me_true >= kMinTrueExcursionMm) me_pct.push_back(100.0 * err / me_true);
    }
  }

  MetricsReport finalize(std::string group, std::string condition,
                         std::string arm) const {
    MetricsReport r;
    r.group = std::move(group);
    r.condition = std::move(condition);
    r.arm = std::move(arm);
    const MeanStd mtd = mean_std(abs_err);
    const MeanStd me = mean_std(me_err);
    const MeanStd pct = mean_std(me_pct);
    r.mtd_mean_mm = mtd.mean;
    r.mtd_std_mm = mtd.std_dev;
    r.me_mean_mm = me.mean;
    r.me_std_mm = me.std_dev;
    r.mepct_mean = pct.mean;
    r.mepct_std = pct.std_dev;
    r.n_periods = static_cast<long>(me_err.size());
    r.n_samples = static_cast<long>(abs_err.size());
    return r;
  }
};

}  // namespace

std::string format_mean_std(double mean, double std_dev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, std_dev);
  return buf;
}

sim::ThicknessTrace stitch_predictions(const std::vector<PredictedWindow>& windows,
                                       double rate_hz) {
  if (windows.empty()) throw DataError("stitch_predictions: no windows");
  double t_min = windows.front().t_start;
  for (const PredictedWindow& w : windows) t_min = std::min(t_min, w.t_start);
  long last = 0;
  for (const PredictedWindow& w : windows) {
    const long i0 = std::lround((w.t_start - t_min) * rate_hz);
    last = std::max(last, i0 + static_cast<long>(w.values.size()));
  }
  std::vector<double> sum(static_cast<std::size_t>(last), 0.0);
  std::vector<int> count(static_cast<std::size_t>(last), 0);
  for (const PredictedWindow& w : windows) {
    const long i0 = std::lround((w.t_start - t_min) * rate_hz);
    for (std::size_t k = 0; k < w.values.size(); ++k) {
      sum[static_cast<std::size_t>(i0) + k] += w.values[k];
      count[static_cast<std::size_t>(i0) + k] += 1;
    }
  }
  std::string gaps;
  for (long i = 0; i < last; ++i)
    if (count[static_cast<std::size_t>(i)] == 0) {
      if (!gaps.empty()) gaps += ", ";
      gaps += std::to_string(t_min + static_cast<double>(i) / rate_hz) + "s";
    }
  if (!gaps.empty())
    throw DataError("stitch_predictions: coverage gaps at " + gaps);
  sim::ThicknessTrace trace;
  trace.t0 = t_min;
  trace.dt = 1.0 / rate_hz;
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  trace.values = std::move(sum);
  return trace;
}

std::vector<std::pair<int, int>> segment_periods(const sim::ThicknessTrace& truth) {
  if (truth.size() < 2) throw DataError("segment_periods: trace too short");
  const auto [mn_it, mx_it] =
      std::minmax_element(truth.values.begin(), truth.values.end());
  const double threshold = *mn_it + 0.5 * (*mx_it - *mn_it);
  std::vector<int> crossings;
  for (std::size_t i = 1; i < truth.size(); ++i)
    if (truth.values[i - 1] < threshold && truth.values[i] >= threshold)
      crossings.push_back(static_cast<int>(i));
  if (crossings.size() < 2)
    throw DataError("segment_periods: no complete period between threshold crossings");
  std::vector<std::pair<int, int>> periods;
  for (std::size_t k = 0; k + 1 < crossings.size(); ++k)
    periods.emplace_back(crossings[k], crossings[k + 1]);
  return periods;
}

double muscle_excursion(const std::vector<double>& segment) {
  if (segment.size() < 2)
    throw ShapeError("muscle_excursion needs at least 2 samples");
  const auto [mn, mx] = std::minmax_element(segment.begin(), segment.end());
  return *mx - *mn;
}

MetricsReport compute_metrics(const std::vector<double>& pred,
                              const std::vector<double>& truth,
                              const std::vector<std::pair<int, int>>& periods) {
  ErrorPool pool;
  pool.add(pred, truth, periods);
  return pool.finalize("", "", "");
}

void ProtocolConfig::validate(int n_subjects) const {
  if (train_subjects.empty() || test_subjects.empty())
    throw ConfigError("protocol: train and test subject lists must be nonempty");
  if (static_cast<int>(train_subjects.size() + test_subjects.size()) > n_subjects)
    throw ConfigError("protocol: insufficient subjects in the dataset");
  for (int s : train_subjects)
    for (int t : test_subjects)
      if (s == t)
        throw ConfigError("protocol: train and test subjects must be disjoint");
  if (adapt_fraction <= 0.0 || adapt_fraction >= 1.0)
    throw ConfigError("protocol: adaptation fraction must lie in (0,1)");
}

std::string subject_letter(int subject) {
  if (subject >= 0 && subject < 26) return std::string(1, static_cast<char>('A' + subject));
  return "S" + std::to_string(subject);
}

std::vector<ProtocolConfig> default_protocol_pairs(int n_subjects) {
  if (n_subjects < 6)
    throw ConfigError("default protocol pairs need a 6-subject cohort");
  const std::vector<std::pair<int, int>> test_pairs = {
      {0, 3}, {0, 1}, {2, 3}, {2, 1}, {0, 5}};  // AD, AB, CD, CB, AF
  std::vector<ProtocolConfig> out;
  for (const auto& [a, b] : test_pairs) {
    ProtocolConfig p;
    p.test_subjects = {a, b};
    for (int s = 0; s < n_subjects; ++s)
      if (s != a && s != b && static_cast<int>(p.train_subjects.size()) < 4)
        p.train_subjects.push_back(s);
    p.label = subject_letter(a) + subject_letter(b);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

struct StageScore {
  int subject = 0;
  int stage = 0;
  std::vector<double> pred;
  std::vector<double> truth;
  std::vector<std::pair<int, int>> periods;
};

// Predict each window, stitch per stage, and align the true deformation
// slice on the same 20 Hz grid.
std::vector<StageScore> score_windows(const model::Parameters& params,
                                      const model::ArchConfig& arch,
                                      const emg::Normalizer& norm,
                                      const ProtocolDataset& data,
                                      const std::vector<const emg::FeatureWindow*>& windows) {
  std::map<std::pair<int, int>, std::vector<PredictedWindow>> by_stage;
  for (const emg::FeatureWindow* w : windows) {
    PredictedWindow pw;
    pw.t_start = w->t_start;
    pw.values = model::predict(params, arch, emg::apply_normalizer(norm, w->features));
    by_stage[{w->subject, w->stage}].push_back(std::move(pw));
  }
  std::vector<StageScore> scores;
  for (auto& [key, preds] : by_stage) {
    const sim::ThicknessTrace stitched = stitch_predictions(preds);
    const auto it = data.traces.find(key);
    if (it == data.traces.end())
      throw DataError("protocol dataset is missing the deformation trace for subject " +
                      std::to_string(key.first) + " stage " + std::to_string(key.second));
    const sim::ThicknessTrace& full = it->second;
    const long offset = std::lround((stitched.t0 - full.t0) / full.dt);
    if (offset < 0 ||
        offset + static_cast<long>(stitched.size()) > static_cast<long>(full.size()))
      throw DataError("stitched prediction extends beyond the recorded trace");
    StageScore sc;
    sc.subject = key.first;
    sc.stage = key.second;
    sc.pred = stitched.values;
    sc.truth.assign(full.values.begin() + offset,
                    full.values.begin() + offset + static_cast<long>(stitched.size()));
    sim::ThicknessTrace truth_slice;
    truth_slice.t0 = stitched.t0;
    truth_slice.dt = full.dt;
    truth_slice.values = sc.truth;
    try {
      sc.periods = segment_periods(truth_slice);
    } catch (const DataError&) {
      // A slice shorter than one contraction keeps its MTD samples but
      // contributes no periods to the ME statistics.
      sc.periods.clear();
    }
    scores.push_back(std::move(sc));
  }
  return scores;
}

MetricsReport pooled_report(const std::vector<StageScore>& scores,
                            const std::string& group, const std::string& condition,
                            const std::string& arm,
                            const std::function<bool(const StageScore&)>& keep) {
  ErrorPool pool;
  for (const StageScore& sc : scores)
    if (keep(sc)) pool.add(sc.pred, sc.truth, sc.periods);
  return pool.finalize(group, condition, arm);
}

}  // namespace

std::vector<MetricsReport> run_protocol(const ProtocolDataset& data,
                                        const ProtocolConfig& protocol,
                                        const train::TrainConfig& tcfg,
                                        const model::ArchConfig& arch) {
  protocol.validate(static_cast<int>(data.subjects.size()));

  struct Arm {
    std::string name;
    train::TrainConfig tcfg;
    model::ArchConfig arch;
  };
  std::vector<Arm> arms;
  arms.push_back({"baseline", tcfg, arch});
  if (protocol.run_no_contraction) {
    Arm a{"no_contraction_loss", tcfg, arch};
    a.tcfg.lambda_contraction = 0.0;
    arms.push_back(std::move(a));
  }
  if (protocol.run_no_cross_attention) {
    Arm a{"no_cross_attention", tcfg, arch};
    a.arch.use_cross_attention = false;
    arms.push_back(std::move(a));
  }

  emg::WindowedDataset train_ds = data.windows;
  train_ds.windows.clear();
  std::map<int, std::vector<emg::FeatureWindow>> test_windows;
  for (const emg::FeatureWindow& w : data.windows.windows) {
    if (std::find(protocol.train_subjects.begin(), protocol.train_subjects.end(),
                  w.subject) != protocol.train_subjects.end())
      train_ds.windows.push_back(w);
    else if (std::find(protocol.test_subjects.begin(), protocol.test_subjects.end(),
                       w.subject) != protocol.test_subjects.end())
      test_windows[w.subject].push_back(w);
  }
  for (int s : protocol.test_subjects)
    if (test_windows.find(s) == test_windows.end())
      throw DataError("protocol: no windows for test subject " + std::to_string(s));

  std::vector<MetricsReport> reports;
  for (const Arm& arm : arms) {
    train::TrainConfig cfg = arm.tcfg;
    cfg.adapt_fraction = protocol.adapt_fraction;
    const train::TrainState state = train::train(train_ds, cfg, arm.arch);

    std::vector<StageScore> zeroshot, adapted;
    for (int subject : protocol.test_subjects) {
      const std::vector<emg::FeatureWindow>& target = test_windows.at(subject);
      const train::AdaptationSplit split =
          train::split_adaptation(target, protocol.adapt_fraction);
      std::vector<const emg::FeatureWindow*> eval_set;
      eval_set.reserve(split.eval.size());
      for (int i : split.eval) eval_set.push_back(&target[static_cast<std::size_t>(i)]);

      auto zs = score_windows(state.params, arm.arch, state.normalizer, data, eval_set);
      zeroshot.insert(zeroshot.end(), zs.begin(), zs.end());

      const model::Parameters tuned =
          train::domain_adapt(state.params, state.normalizer, arm.arch, target, cfg);
      auto ad = score_windows(tuned, arm.arch, state.normalizer, data, eval_set);
      adapted.insert(adapted.end(), ad.begin(), ad.end());
    }

    auto all = [](const StageScore&) { return true; };
    reports.push_back(pooled_report(zeroshot, protocol.label, "zeroshot", arm.name, all));
    reports.push_back(pooled_report(adapted, protocol.label, "adapted", arm.name, all));
    if (protocol.emit_load_rows) {
      reports.push_back(pooled_report(adapted, protocol.label, "adapted_stage12",
                                      arm.name,
                                      [](const StageScore& s) { return s.stage != 3; }));
      reports.push_back(pooled_report(adapted, protocol.label, "adapted_stage3",
                                      arm.name,
                                      [](const StageScore& s) { return s.stage == 3; }));
    }
  }
  return reports;
}

}  // namespace myoattn::eval
