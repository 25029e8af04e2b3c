#include "myoattn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <random>

#include <CLI11.hpp>

#include "myoattn/workflow.hpp"

namespace myoattn::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
};

// Precedence: --seed flag > MYOATTN_SEED env > config master_seed.
io::RunConfig effective_config(const Common& common) {
  io::RunConfig cfg = common.config_path.empty()
                          ? io::RunConfig{}
                          : io::load_config(common.config_path);
  if (const char* env = std::getenv("MYOATTN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError("MYOATTN_SEED must be an unsigned integer");
    cfg.master_seed = v;
  }
  if (common.seed_flag) cfg.master_seed = *common.seed_flag;
  cfg.train.seed = cfg.master_seed;
  return cfg;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_path, "JSON run configuration");
  sub->add_option_function<std::uint64_t>(
      "--seed", [&common](std::uint64_t v) { common.seed_flag = v; },
      "master seed (overrides config and MYOATTN_SEED)");
}

io::CheckpointMeta checkpoint_meta(const train::TrainState& state,
                                   const io::RunConfig& cfg,
                                   const std::vector<int>& subjects) {
  io::CheckpointMeta meta;
  meta.arch = state.arch;
  meta.normalizer = state.normalizer;
  meta.seed = cfg.master_seed;
  meta.epochs = state.epochs_run;
  meta.history_digest = io::history_digest(state.history);
  meta.trained_subjects = subjects;
  return meta;
}

int cmd_simulate(const Common& common, int subjects, double duration,
                 const std::string& out_dir, std::ostream& out) {
  io::RunConfig cfg = effective_config(common);
  if (subjects > 0) cfg.sim.n_subjects = subjects;
  if (duration > 0.0) cfg.sim.duration_s = duration;
  const sim::SimConfig sc = cfg.sim.to_sim_config();
  const sim::Cohort cohort = sim::synth_cohort(
      sc, sim::default_stages(sc.duration_s, sc.load_weighted), cfg.master_seed);
  io::save_dataset(out_dir.empty() ? cfg.paths.dataset_dir : out_dir, cohort);
  out << "wrote " << cohort.subjects.size() << " subjects to "
      << (out_dir.empty() ? cfg.paths.dataset_dir : out_dir) << "\n";
  return 0;
}

int cmd_preprocess(const std::string& dataset_dir, const std::string& out_file,
                   std::ostream& out) {
  const sim::Cohort cohort = io::load_dataset(dataset_dir);
  const eval::ProtocolDataset data = flow::preprocess_cohort(cohort);
  io::save_windows(out_file, data);
  out << "wrote " << data.windows.windows.size() << " windows for "
      << data.subjects.size() << " subjects to " << out_file << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& windows_file,
              const std::vector<int>& subjects, const std::string& out_ckpt,
              const std::string& history_file, std::ostream& out) {
  const io::RunConfig cfg = effective_config(common);
  const eval::ProtocolDataset data = io::load_windows(windows_file);
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.master_seed;
  const std::vector<int> used = subjects.empty() ? data.subjects : subjects;
  const train::TrainState state = flow::train_on_subjects(data, used, tcfg, cfg.arch);
  io::save_checkpoint(out_ckpt, state.params, checkpoint_meta(state, cfg, used));
  if (!history_file.empty())
    io::write_text_file(history_file, io::render_history_json(state));
  out << "trained " << state.epochs_run << " epochs on " << used.size()
      << " subjects; best epoch " << state.best_epoch << "; checkpoint " << out_ckpt
      << "\n";
  return 0;
}

int cmd_adapt(const Common& common, const std::string& windows_file,
              const std::string& ckpt_file, int subject, const std::string& out_ckpt,
              std::ostream& out) {
  const io::RunConfig cfg = effective_config(common);
  const eval::ProtocolDataset data = io::load_windows(windows_file);
  const io::Checkpoint ckpt = io::load_checkpoint(ckpt_file);
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.master_seed;
  const std::vector<emg::FeatureWindow> target = flow::subject_windows(data, subject);
  const model::Parameters adapted = train::domain_adapt(
      ckpt.params, ckpt.meta.normalizer, ckpt.meta.arch, target, tcfg);
  io::CheckpointMeta meta = ckpt.meta;
  meta.trained_subjects.push_back(subject);
  io::save_checkpoint(out_ckpt, adapted, meta);
  out << "adapted on subject " << subject << " ("
      << train::split_adaptation(target, tcfg.adapt_fraction).adapt.size()
      << " windows); checkpoint " << out_ckpt << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& windows_file,
             const std::string& out_prefix, std::ostream& out) {
  const io::RunConfig cfg = effective_config(common);
  const eval::ProtocolDataset data = io::load_windows(windows_file);
  const std::vector<eval::MetricsReport> reports = flow::run_protocol_suite(data, cfg);
  const std::string prefix = out_prefix.empty() ? cfg.paths.report_prefix : out_prefix;
  io::write_text_file(prefix + ".csv", io::render_report_csv(reports));
  io::write_text_file(prefix + ".json", io::render_report_json(reports));
  for (const eval::MetricsReport& r : reports)
    out << r.group << "/" << r.condition << "/" << r.arm << ": MTD "
        << eval::format_mean_std(r.mtd_mean_mm, r.mtd_std_mm) << " mm, ME "
        << eval::format_mean_std(r.me_mean_mm, r.me_std_mm) << " mm, ME% "
        << eval::format_mean_std(r.mepct_mean, r.mepct_std) << "\n";
  out << "wrote " << prefix << ".csv and " << prefix << ".json\n";
  return 0;
}

int cmd_infer(const std::string& windows_file, const std::string& ckpt_file,
              int subject, int stage, const std::string& out_csv, std::ostream& out) {
  const eval::ProtocolDataset data = io::load_windows(windows_file);
  const io::Checkpoint ckpt = io::load_checkpoint(ckpt_file);
  const flow::StitchedPair pair = flow::infer_stage(
      data, ckpt.params, ckpt.meta.arch, ckpt.meta.normalizer, subject, stage);
  std::string csv = "t_s,pred_mm,true_mm\n";
  char line[96];
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", pair.pred.t(i),
                  pair.pred.values[i], pair.truth.values[i]);
    csv += line;
  }
  io::write_text_file(out_csv, csv);
  out << "wrote " << pair.pred.size() << " samples to " << out_csv << "\n";
  return 0;
}

int cmd_gradcheck(int d_model, int heads, int channels, int ff_dim, double h,
                  double tol, std::uint64_t seed, std::ostream& out) {
  model::ArchConfig arch;
  arch.channels = channels;
  arch.d_model = d_model;
  arch.heads = heads;
  arch.ff_dim = ff_dim;
  arch.dropout = 0.0;
  arch.validate();

  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  ad::Tensor features({arch.channels, arch.feature_len()});
  for (std::size_t i = 0; i < features.numel(); ++i) features[i] = gauss(rng);
  ad::Tensor target({arch.out_len, 1});
  for (std::size_t i = 0; i < target.numel(); ++i) target[i] = 2.0 * gauss(rng);

  const model::Parameters params = model::init_params(arch, derive_seed(seed, 1));
  std::vector<ad::Tensor> tensors;
  std::vector<std::string> names;
  for (const auto& [name, t] : params.items()) {
    names.push_back(name);
    tensors.push_back(t);
  }
  auto build = [&](ad::Tape& tape, const std::vector<ad::NodeId>& ids) {
    model::BoundParams bound;
    bound.source = &params;
    bound.ids = ids;
    const ad::NodeId pred = model::forward(tape, bound, arch, features);
    return train::total_loss(tape, pred, tape.constant(target), 0.2);
  };
  const ad::GradCheckResult res = ad::grad_check(build, tensors, h, tol, -1, seed);
  out << "gradcheck: max relative error " << res.max_rel_err << " over "
      << res.n_checked << " coordinates (tolerance " << tol << "): "
      << (res.passed(tol) ? "PASS" : "FAIL") << "\n";
  for (const ad::GradCheckFailure& f : res.failures)
    out << "  mismatch in " << names[static_cast<std::size_t>(f.param_index)]
        << "[" << f.coord << "]: analytic " << f.analytic << " numeric " << f.numeric
        << "\n";
  return res.passed(tol) ? 0 : 2;
}

int cmd_plot(const std::string& trace_csv, const std::string& report_json,
             const std::string& out_svg, std::ostream& out) {
  if (trace_csv.empty() == report_json.empty())
    throw ConfigError("plot needs exactly one of --trace or --report");
  std::string svg;
  if (!trace_csv.empty()) {
    const std::string text = io::read_text_file(trace_csv);
    sim::ThicknessTrace pred, truth;
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos) throw DataError("empty trace csv");
    bool first = true;
    double prev_t = 0.0;
    for (std::size_t start = pos + 1; start < text.size();) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      double t = 0.0, p = 0.0, g = 0.0;
      if (std::sscanf(text.c_str() + start, "%lg,%lg,%lg", &t, &p, &g) == 3) {
        if (first) {
          pred.t0 = truth.t0 = t;
          first = false;
        } else {
          pred.dt = truth.dt = t - prev_t;
        }
        prev_t = t;
        pred.values.push_back(p);
        truth.values.push_back(g);
      }
      start = end + 1;
    }
    if (pred.values.empty()) throw DataError("no rows in trace csv " + trace_csv);
    svg = io::render_trace_svg(pred, truth, eval::segment_periods(truth));
  } else {
    svg = io::render_report_svg(
        io::reports_from_json(io::read_text_file(report_json)));
  }
  io::write_text_file(out_svg, svg);
  out << "wrote " << out_svg << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sEMG-driven muscle thickness deformation pipeline"};
  app.require_subcommand(1);

  Common common;
  int subjects = 0;
  double duration = 0.0;
  std::string out_dir, dataset_dir, windows_file, out_file, ckpt_file, history_file;
  std::string out_prefix, trace_csv, report_json, out_svg, out_csv;
  std::vector<int> subject_list;
  int subject = 0, stage = 1;
  int d_model = 8, heads = 1, channels = 2, ff_dim = 16;
  double h_step = 1e-5, tol = 1e-4;
  std::uint64_t gc_seed = 7;

  CLI::App* s_sim = app.add_subcommand("simulate", "generate a synthetic cohort dataset");
  add_common(s_sim, common);
  s_sim->add_option("--subjects", subjects, "number of subjects");
  s_sim->add_option("--duration", duration, "stage duration in seconds");
  s_sim->add_option("--out", out_dir, "dataset directory");

  CLI::App* s_pre = app.add_subcommand("preprocess", "dataset -> aligned feature windows");
  s_pre->add_option("--dataset", dataset_dir, "dataset directory")->required();
  s_pre->add_option("--out", out_file, "windows file")->required();

  CLI::App* s_train = app.add_subcommand("train", "fit the dual-attention model");
  add_common(s_train, common);
  s_train->add_option("--windows", windows_file, "windows file")->required();
  s_train->add_option("--subjects", subject_list, "training subject ids")->delimiter(',');
  s_train->add_option("--out", ckpt_file, "checkpoint path")->required();
  s_train->add_option("--history", history_file, "loss history JSON path");

  CLI::App* s_adapt = app.add_subcommand("adapt", "domain-adapt a checkpoint to one subject");
  add_common(s_adapt, common);
  s_adapt->add_option("--windows", windows_file, "windows file")->required();
  s_adapt->add_option("--checkpoint", ckpt_file, "input checkpoint")->required();
  s_adapt->add_option("--subject", subject, "target subject id")->required();
  s_adapt->add_option("--out", out_file, "adapted checkpoint path")->required();

  CLI::App* s_eval = app.add_subcommand("eval", "run the cross-subject protocol suite");
  add_common(s_eval, common);
  s_eval->add_option("--windows", windows_file, "windows file")->required();
  s_eval->add_option("--out-prefix", out_prefix, "report path prefix");

  CLI::App* s_infer = app.add_subcommand("infer", "stitched deformation trace for one stage");
  s_infer->add_option("--windows", windows_file, "windows file")->required();
  s_infer->add_option("--checkpoint", ckpt_file, "checkpoint")->required();
  s_infer->add_option("--subject", subject, "subject id")->required();
  s_infer->add_option("--stage", stage, "stage index (default 1)");
  s_infer->add_option("--out", out_csv, "output CSV")->required();

  CLI::App* s_gc = app.add_subcommand("gradcheck", "full-model finite-difference check");
  s_gc->add_option("--dmodel", d_model, "model width");
  s_gc->add_option("--heads", heads, "attention heads");
  s_gc->add_option("--channels", channels, "sEMG channels");
  s_gc->add_option("--ff", ff_dim, "feed-forward width");
  s_gc->add_option("--step", h_step, "finite-difference step");
  s_gc->add_option("--tol", tol, "max relative error threshold");
  s_gc->add_option("--seed", gc_seed, "seed for the probe window");

  CLI::App* s_plot = app.add_subcommand("plot", "render a trace pair or report as SVG");
  s_plot->add_option("--trace", trace_csv, "trace CSV from infer");
  s_plot->add_option("--report", report_json, "report JSON from eval");
  s_plot->add_option("--out", out_svg, "output SVG")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    out << app.help();
    return 1;
  }

  try {
    if (s_sim->parsed()) return cmd_simulate(common, subjects, duration, out_dir, out);
    if (s_pre->parsed()) return cmd_preprocess(dataset_dir, out_file, out);
    if (s_train->parsed())
      return cmd_train(common, windows_file, subject_list, ckpt_file, history_file, out);
    if (s_adapt->parsed())
      return cmd_adapt(common, windows_file, ckpt_file, subject, out_file, out);
    if (s_eval->parsed()) return cmd_eval(common, windows_file, out_prefix, out);
    if (s_infer->parsed())
      return cmd_infer(windows_file, ckpt_file, subject, stage, out_csv, out);
    if (s_gc->parsed())
      return cmd_gradcheck(d_model, heads, channels, ff_dim, h_step, tol, gc_seed, out);
    if (s_plot->parsed()) return cmd_plot(trace_csv, report_json, out_svg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace myoattn::cli
