#include "myoattn/io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats are little-endian");

namespace myoattn::io {

namespace fs = std::filesystem;
using nlohmann::json;  // std::map-backed, so object keys iterate sorted

namespace {

// --- canonical JSON dumping -------------------------------------------------

void dump_value(const json& j, const char* float_fmt, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        dump_value(it.value(), float_fmt, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_value(j[i], float_fmt, out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      char buf[40];
      std::snprintf(buf, sizeof buf, float_fmt, j.get<double>());
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

std::string dump_canonical(const json& j, const char* float_fmt) {
  std::string out;
  dump_value(j, float_fmt, out);
  return out;
}

// --- strict parsing ----------------------------------------------------------

// Tracks consumed keys; finish() rejects anything unknown so config typos
// fail loudly.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("expected an object at " + path_);
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for " + path_ + "." + key);
    }
  }

  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (seen_.find(it.key()) == seen_.end())
        throw ConfigError("unknown key: " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError("invalid JSON in " + what);
  return j;
}

// --- binary helpers ----------------------------------------------------------

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n, const fs::path& path) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n)
    throw DataError("truncated file: " + path.string());
}

void write_f64_file(const fs::path& path, const std::vector<double>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  write_bytes(f, data.data(), data.size() * sizeof(double));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<double> read_f64_file(const fs::path& path, std::size_t expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  if (bytes != expected * sizeof(double))
    throw DataError("truncated or oversized file: " + path.string() + " (" +
                    std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected * sizeof(double)) + ")");
  std::vector<double> data(expected);
  read_bytes(f, data.data(), bytes, path);
  return data;
}

constexpr char kWindowsMagic[8] = {'M', 'Y', 'O', 'A', 'W', 'N', 'D', '1'};
constexpr char kCheckpointMagic[8] = {'M', 'Y', 'O', 'A', 'C', 'K', 'P', '1'};

// --- config section (de)serialization ----------------------------------------

json arch_to_json(const model::ArchConfig& a) {
  json j;
  j["channels"] = a.channels;
  j["tokens_per_channel"] = a.tokens_per_channel;
  j["patch_len"] = a.patch_len;
  j["d_model"] = a.d_model;
  j["heads"] = a.heads;
  j["ff_dim"] = a.ff_dim;
  j["n_self"] = a.n_self;
  j["n_cross"] = a.n_cross;
  j["out_len"] = a.out_len;
  j["dropout"] = a.dropout;
  j["use_cross_attention"] = a.use_cross_attention;
  j["band_half_width"] = a.band_half_width;
  return j;
}

model::ArchConfig arch_from_json(const json& j, const std::string& path) {
  model::ArchConfig a;
  StrictObject o(j, path);
  o.get("channels", a.channels);
  o.get("tokens_per_channel", a.tokens_per_channel);
  o.get("patch_len", a.patch_len);
  o.get("d_model", a.d_model);
  o.get("heads", a.heads);
  o.get("ff_dim", a.ff_dim);
  o.get("n_self", a.n_self);
  o.get("n_cross", a.n_cross);
  o.get("out_len", a.out_len);
  o.get("dropout", a.dropout);
  o.get("use_cross_attention", a.use_cross_attention);
  o.get("band_half_width", a.band_half_width);
  o.finish();
  return a;
}

json train_to_json(const train::TrainConfig& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch"] = t.batch;
  j["lr_max"] = t.lr_max;
  j["lr_min"] = t.lr_min;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["eps"] = t.eps;
  j["clip_norm"] = t.clip_norm;
  j["lambda_contraction"] = t.lambda_contraction;
  j["val_fraction"] = t.val_fraction;
  j["adapt_epochs"] = t.adapt_epochs;
  j["adapt_lr"] = t.adapt_lr;
  j["adapt_fraction"] = t.adapt_fraction;
  j["freeze_encoder_on_adapt"] = t.freeze_encoder_on_adapt;
  return j;
}

train::TrainConfig train_from_json(const json& j, const std::string& path) {
  train::TrainConfig t;
  StrictObject o(j, path);
  o.get("epochs", t.epochs);
  o.get("batch", t.batch);
  o.get("lr_max", t.lr_max);
  o.get("lr_min", t.lr_min);
  o.get("beta1", t.beta1);
  o.get("beta2", t.beta2);
  o.get("eps", t.eps);
  o.get("clip_norm", t.clip_norm);
  o.get("lambda_contraction", t.lambda_contraction);
  o.get("val_fraction", t.val_fraction);
  o.get("adapt_epochs", t.adapt_epochs);
  o.get("adapt_lr", t.adapt_lr);
  o.get("adapt_fraction", t.adapt_fraction);
  o.get("freeze_encoder_on_adapt", t.freeze_encoder_on_adapt);
  o.finish();
  return t;
}

json profile_to_json(const sim::SubjectProfile& p) {
  json j;
  j["id"] = p.id;
  j["rest_thickness_mm"] = p.rest_thickness_mm;
  j["gain_mm"] = p.gain_mm;
  j["tau_s"] = p.tau_s;
  j["period_s"] = p.period_s;
  j["duty"] = p.duty;
  j["channel_weights"] = p.channel_weights;
  j["noise_floor"] = p.noise_floor;
  return j;
}

sim::SubjectProfile profile_from_json(const json& j, const std::string& path) {
  sim::SubjectProfile p;
  StrictObject o(j, path);
  o.get("id", p.id);
  o.get("rest_thickness_mm", p.rest_thickness_mm);
  o.get("gain_mm", p.gain_mm);
  o.get("tau_s", p.tau_s);
  o.get("period_s", p.period_s);
  o.get("duty", p.duty);
  o.get("channel_weights", p.channel_weights);
  o.get("noise_floor", p.noise_floor);
  o.finish();
  return p;
}

json sim_config_to_json(const sim::SimConfig& c) {
  json j;
  j["n_subjects"] = c.n_subjects;
  j["channels"] = c.channels;
  j["duration_s"] = c.duration_s;
  j["fs_semg_hz"] = c.fs_semg_hz;
  j["frame_rate_hz"] = c.frame_rate_hz;
  j["rest_lead_in_s"] = c.rest_lead_in_s;
  j["load_weighted"] = c.load_weighted;
  j["rf_fs_hz"] = c.rf_fs_hz;
  j["rf_fc_hz"] = c.rf_fc_hz;
  j["rf_frame_len"] = c.rf_frame_len;
  j["skin_depth_mm"] = c.skin_depth_mm;
  j["sound_speed_m_s"] = c.sound_speed_m_s;
  j["pulse_sigma_s"] = c.pulse_sigma_s;
  j["echo_amp_skin"] = c.echo_amp_skin;
  j["echo_amp_muscle"] = c.echo_amp_muscle;
  j["rf_noise_sigma"] = c.rf_noise_sigma;
  return j;
}

sim::SimConfig sim_config_from_json(const json& j, const std::string& path) {
  sim::SimConfig c;
  StrictObject o(j, path);
  o.get("n_subjects", c.n_subjects);
  o.get("channels", c.channels);
  o.get("duration_s", c.duration_s);
  o.get("fs_semg_hz", c.fs_semg_hz);
  o.get("frame_rate_hz", c.frame_rate_hz);
  o.get("rest_lead_in_s", c.rest_lead_in_s);
  o.get("load_weighted", c.load_weighted);
  o.get("rf_fs_hz", c.rf_fs_hz);
  o.get("rf_fc_hz", c.rf_fc_hz);
  o.get("rf_frame_len", c.rf_frame_len);
  o.get("skin_depth_mm", c.skin_depth_mm);
  o.get("sound_speed_m_s", c.sound_speed_m_s);
  o.get("pulse_sigma_s", c.pulse_sigma_s);
  o.get("echo_amp_skin", c.echo_amp_skin);
  o.get("echo_amp_muscle", c.echo_amp_muscle);
  o.get("rf_noise_sigma", c.rf_noise_sigma);
  o.finish();
  return c;
}

json normalizer_to_json(const emg::Normalizer& n) {
  json j;
  j["mean"] = n.mean;
  j["std"] = n.std_dev;
  j["degenerate"] = n.degenerate;
  return j;
}

emg::Normalizer normalizer_from_json(const json& j, const std::string& path) {
  emg::Normalizer n;
  StrictObject o(j, path);
  o.get("mean", n.mean);
  o.get("std", n.std_dev);
  o.get("degenerate", n.degenerate);
  o.finish();
  if (n.mean.size() != n.std_dev.size())
    throw DataError("normalizer mean/std length mismatch in " + path);
  return n;
}

int expected_version(const json& j, const std::string& what) {
  if (!j.contains("format_version"))
    throw DataError(what + ": missing format_version");
  const int v = j.at("format_version").get<int>();
  if (v != 1) throw DataError(what + ": unsupported format_version " + std::to_string(v));
  return v;
}

}  // namespace

sim::SimConfig SimSection::to_sim_config() const {
  sim::SimConfig c;
  c.n_subjects = n_subjects;
  c.channels = channels;
  c.duration_s = duration_s;
  c.rest_lead_in_s = rest_lead_in_s;
  c.load_weighted = load_weighted;
  c.rf_noise_sigma = rf_noise_sigma;
  return c;
}

RunConfig config_from_json(const std::string& text) {
  const json j = parse_json(text, "config");
  RunConfig cfg;
  StrictObject o(j, "config");
  o.get("format_version", cfg.format_version);
  if (cfg.format_version != 1)
    throw ConfigError("unsupported config format_version");
  o.get("master_seed", cfg.master_seed);
  if (o.has("sim")) {
    StrictObject s(o.child("sim"), "config.sim");
    s.get("n_subjects", cfg.sim.n_subjects);
    s.get("channels", cfg.sim.channels);
    s.get("duration_s", cfg.sim.duration_s);
    s.get("rest_lead_in_s", cfg.sim.rest_lead_in_s);
    s.get("load_weighted", cfg.sim.load_weighted);
    s.get("rf_noise_sigma", cfg.sim.rf_noise_sigma);
    s.finish();
  }
  if (o.has("arch")) cfg.arch = arch_from_json(o.child("arch"), "config.arch");
  if (o.has("train")) cfg.train = train_from_json(o.child("train"), "config.train");
  if (o.has("protocol")) {
    StrictObject p(o.child("protocol"), "config.protocol");
    p.get("pair_labels", cfg.protocol.pair_labels);
    p.get("adapt_fraction", cfg.protocol.adapt_fraction);
    p.get("ablation_no_contraction", cfg.protocol.ablation_no_contraction);
    p.get("ablation_no_cross_attention", cfg.protocol.ablation_no_cross_attention);
    p.get("emit_load_rows", cfg.protocol.emit_load_rows);
    p.finish();
  }
  if (o.has("paths")) {
    StrictObject p(o.child("paths"), "config.paths");
    p.get("dataset_dir", cfg.paths.dataset_dir);
    p.get("windows_file", cfg.paths.windows_file);
    p.get("checkpoint", cfg.paths.checkpoint);
    p.get("report_prefix", cfg.paths.report_prefix);
    p.finish();
  }
  o.finish();
  cfg.train.seed = cfg.master_seed;
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  return config_from_json(read_text_file(path));
}

std::string canonical_config_json(const RunConfig& cfg) {
  json j;
  j["format_version"] = cfg.format_version;
  j["master_seed"] = cfg.master_seed;
  json s;
  s["n_subjects"] = cfg.sim.n_subjects;
  s["channels"] = cfg.sim.channels;
  s["duration_s"] = cfg.sim.duration_s;
  s["rest_lead_in_s"] = cfg.sim.rest_lead_in_s;
  s["load_weighted"] = cfg.sim.load_weighted;
  s["rf_noise_sigma"] = cfg.sim.rf_noise_sigma;
  j["sim"] = s;
  j["arch"] = arch_to_json(cfg.arch);
  j["train"] = train_to_json(cfg.train);
  json p;
  p["pair_labels"] = cfg.protocol.pair_labels;
  p["adapt_fraction"] = cfg.protocol.adapt_fraction;
  p["ablation_no_contraction"] = cfg.protocol.ablation_no_contraction;
  p["ablation_no_cross_attention"] = cfg.protocol.ablation_no_cross_attention;
  p["emit_load_rows"] = cfg.protocol.emit_load_rows;
  j["protocol"] = p;
  json q;
  q["dataset_dir"] = cfg.paths.dataset_dir;
  q["windows_file"] = cfg.paths.windows_file;
  q["checkpoint"] = cfg.paths.checkpoint;
  q["report_prefix"] = cfg.paths.report_prefix;
  j["paths"] = q;
  return dump_canonical(j, "%.12g");
}

eval::ProtocolConfig protocol_from_label(const std::string& label, int n_subjects,
                                         const ProtocolSuiteConfig& suite) {
  if (label.size() != 2)
    throw ConfigError("protocol pair label must be two letters, got '" + label + "'");
  eval::ProtocolConfig p;
  for (char ch : label) {
    const int idx = ch - 'A';
    if (idx < 0 || idx >= n_subjects)
      throw ConfigError("pair label '" + label + "' names a subject outside the cohort");
    p.test_subjects.push_back(idx);
  }
  if (p.test_subjects[0] == p.test_subjects[1])
    throw ConfigError("pair label '" + label + "' repeats a subject");
  for (int s = 0; s < n_subjects && static_cast<int>(p.train_subjects.size()) < 4; ++s)
    if (s != p.test_subjects[0] && s != p.test_subjects[1])
      p.train_subjects.push_back(s);
  p.label = label;
  p.adapt_fraction = suite.adapt_fraction;
  p.run_no_contraction = suite.ablation_no_contraction;
  p.run_no_cross_attention = suite.ablation_no_cross_attention;
  p.emit_load_rows = suite.emit_load_rows;
  return p;
}

// --- dataset directory -------------------------------------------------------

void save_dataset(const fs::path& dir, const sim::Cohort& cohort) {
  fs::create_directories(dir);
  json cj;
  cj["format_version"] = 1;
  cj["master_seed"] = cohort.master_seed;
  cj["n_subjects"] = static_cast<int>(cohort.subjects.size());
  cj["sim"] = sim_config_to_json(cohort.config);
  write_text_file(dir / "cohort.json", dump_canonical(cj, "%.17g") + "\n");

  for (const sim::SubjectRecording& rec : cohort.subjects) {
    const fs::path sdir = dir / ("subject_" + std::to_string(rec.profile.id));
    fs::create_directories(sdir);
    json mj;
    mj["format_version"] = 1;
    mj["profile"] = profile_to_json(rec.profile);
    json stages = json::array();
    for (const sim::StageRecording& st : rec.stages) {
      json sj;
      sj["index"] = st.spec.index;
      sj["load"] = st.spec.load;
      sj["duration_s"] = st.spec.duration_s;
      sj["semg_samples"] = st.semg.empty() ? 0 : static_cast<long>(st.semg[0].size());
      sj["thickness_samples"] = static_cast<long>(st.thickness.size());
      stages.push_back(sj);
    }
    mj["stages"] = stages;
    write_text_file(sdir / "meta.json", dump_canonical(mj, "%.17g") + "\n");

    for (const sim::StageRecording& st : rec.stages) {
      const fs::path stdir = sdir / ("stage_" + std::to_string(st.spec.index));
      fs::create_directories(stdir);
      // sEMG channel-major
      std::vector<double> semg;
      for (const auto& ch : st.semg) semg.insert(semg.end(), ch.begin(), ch.end());
      write_f64_file(stdir / "semg.f64", semg);
      write_f64_file(stdir / "activation.f64", st.activation);
      // thickness as text: %.17g round-trips doubles exactly
      std::string csv = "t_s,mm\n";
      char line[80];
      for (std::size_t i = 0; i < st.thickness.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", st.thickness.t(i),
                      st.thickness.values[i]);
        csv += line;
      }
      write_text_file(stdir / "thickness.csv", csv);
      // RF frame-major
      std::vector<double> rf;
      rf.reserve(st.rf.frames.size() * (st.rf.frames.empty() ? 0 : st.rf.frames[0].size()));
      for (const auto& frame : st.rf.frames) rf.insert(rf.end(), frame.begin(), frame.end());
      write_f64_file(stdir / "rf.f64", rf);
      json rj;
      rj["format_version"] = 1;
      rj["fs_hz"] = st.rf.fs_hz;
      rj["fc_hz"] = st.rf.fc_hz;
      rj["frame_len"] = st.rf.frames.empty() ? 0 : static_cast<long>(st.rf.frames[0].size());
      rj["n_frames"] = static_cast<long>(st.rf.frames.size());
      rj["t0_s"] = st.rf.t0;
      rj["dt_s"] = st.rf.dt;
      write_text_file(stdir / "rf_meta.json", dump_canonical(rj, "%.17g") + "\n");
    }
  }
}

sim::Cohort load_dataset(const fs::path& dir) {
  const fs::path cohort_file = dir / "cohort.json";
  const json cj = parse_json(read_text_file(cohort_file), cohort_file.string());
  expected_version(cj, cohort_file.string());
  sim::Cohort cohort;
  cohort.master_seed = cj.at("master_seed").get<std::uint64_t>();
  cohort.config = sim_config_from_json(cj.at("sim"), cohort_file.string() + ":sim");
  const int n = cj.at("n_subjects").get<int>();

  for (int s = 0; s < n; ++s) {
    const fs::path sdir = dir / ("subject_" + std::to_string(s));
    const fs::path meta_file = sdir / "meta.json";
    const json mj = parse_json(read_text_file(meta_file), meta_file.string());
    expected_version(mj, meta_file.string());
    sim::SubjectRecording rec;
    rec.profile = profile_from_json(mj.at("profile"), meta_file.string() + ":profile");

    for (const json& sj : mj.at("stages")) {
      sim::StageRecording st;
      st.spec.index = sj.at("index").get<int>();
      st.spec.load = sj.at("load").get<double>();
      st.spec.duration_s = sj.at("duration_s").get<double>();
      const auto n_samples = sj.at("semg_samples").get<std::size_t>();
      const auto n_thick = sj.at("thickness_samples").get<std::size_t>();
      const fs::path stdir = sdir / ("stage_" + std::to_string(st.spec.index));

      const std::vector<double> semg = read_f64_file(
          stdir / "semg.f64", n_samples * static_cast<std::size_t>(cohort.config.channels));
      st.semg.resize(cohort.config.channels);
      for (int c = 0; c < cohort.config.channels; ++c)
        st.semg[c].assign(semg.begin() + static_cast<long>(c * n_samples),
                          semg.begin() + static_cast<long>((c + 1) * n_samples));
      st.activation = read_f64_file(stdir / "activation.f64", n_samples);

      const fs::path csv_file = stdir / "thickness.csv";
      std::ifstream csv(csv_file);
      if (!csv) throw DataError("cannot read " + csv_file.string());
      std::string line;
      std::getline(csv, line);  // header
      st.thickness.t0 = 0.0;
      st.thickness.dt = 1.0 / cohort.config.frame_rate_hz;
      bool first = true;
      while (std::getline(csv, line)) {
        double t = 0.0, mm = 0.0;
        if (std::sscanf(line.c_str(), "%lg,%lg", &t, &mm) != 2)
          throw DataError("malformed line in " + csv_file.string());
        if (first) {
          st.thickness.t0 = t;
          first = false;
        }
        st.thickness.values.push_back(mm);
      }
      if (st.thickness.size() != n_thick)
        throw DataError("row count mismatch in " + csv_file.string());

      const fs::path rf_meta_file = stdir / "rf_meta.json";
      const json rj = parse_json(read_text_file(rf_meta_file), rf_meta_file.string());
      expected_version(rj, rf_meta_file.string());
      st.rf.fs_hz = rj.at("fs_hz").get<double>();
      st.rf.fc_hz = rj.at("fc_hz").get<double>();
      st.rf.t0 = rj.at("t0_s").get<double>();
      st.rf.dt = rj.at("dt_s").get<double>();
      const auto frame_len = rj.at("frame_len").get<std::size_t>();
      const auto n_frames = rj.at("n_frames").get<std::size_t>();
      const std::vector<double> rf = read_f64_file(stdir / "rf.f64", frame_len * n_frames);
      st.rf.frames.resize(n_frames);
      for (std::size_t k = 0; k < n_frames; ++k)
        st.rf.frames[k].assign(rf.begin() + static_cast<long>(k * frame_len),
                               rf.begin() + static_cast<long>((k + 1) * frame_len));
      rec.stages.push_back(std::move(st));
    }
    cohort.subjects.push_back(std::move(rec));
  }
  return cohort;
}

// --- windows file --------------------------------------------------------------

void save_windows(const fs::path& path, const eval::ProtocolDataset& data) {
  json h;
  h["format_version"] = 1;
  h["channels"] = data.windows.channels;
  h["feature_len"] = data.windows.feature_len;
  h["target_len"] = data.windows.target_len;
  h["window_s"] = data.windows.window_s;
  h["stride_s"] = data.windows.stride_s;
  h["subjects"] = data.subjects;
  json traces = json::array();
  for (const auto& [key, trace] : data.traces) {
    json t;
    t["subject"] = key.first;
    t["stage"] = key.second;
    t["t0"] = trace.t0;
    t["dt"] = trace.dt;
    t["n"] = static_cast<long>(trace.size());
    t["flagged"] = trace.flagged;
    traces.push_back(t);
  }
  h["traces"] = traces;
  json windows = json::array();
  for (const emg::FeatureWindow& w : data.windows.windows)
    windows.push_back({w.subject, w.stage, w.t_start});
  h["windows"] = windows;
  const std::string header = dump_canonical(h, "%.17g");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  write_bytes(f, kWindowsMagic, sizeof kWindowsMagic);
  const std::uint64_t hlen = header.size();
  write_bytes(f, &hlen, sizeof hlen);
  write_bytes(f, header.data(), header.size());
  for (const auto& [key, trace] : data.traces)
    write_bytes(f, trace.values.data(), trace.values.size() * sizeof(double));
  for (const emg::FeatureWindow& w : data.windows.windows) {
    write_bytes(f, w.features.ptr(), w.features.numel() * sizeof(double));
    write_bytes(f, w.target.data(), w.target.size() * sizeof(double));
  }
  if (!f) throw DataError("write failed: " + path.string());
}

eval::ProtocolDataset load_windows(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  char magic[8];
  read_bytes(f, magic, sizeof magic, path);
  if (std::memcmp(magic, kWindowsMagic, sizeof magic) != 0)
    throw DataError("bad magic bytes in " + path.string());
  std::uint64_t hlen = 0;
  read_bytes(f, &hlen, sizeof hlen, path);
  std::string header(hlen, '\0');
  read_bytes(f, header.data(), hlen, path);
  const json h = parse_json(header, path.string());
  expected_version(h, path.string());

  eval::ProtocolDataset data;
  data.windows.channels = h.at("channels").get<int>();
  data.windows.feature_len = h.at("feature_len").get<int>();
  data.windows.target_len = h.at("target_len").get<int>();
  data.windows.window_s = h.at("window_s").get<double>();
  data.windows.stride_s = h.at("stride_s").get<double>();
  data.subjects = h.at("subjects").get<std::vector<int>>();
  data.stride_s = data.windows.stride_s;

  for (const json& t : h.at("traces")) {
    sim::ThicknessTrace trace;
    trace.t0 = t.at("t0").get<double>();
    trace.dt = t.at("dt").get<double>();
    trace.flagged = t.at("flagged").get<int>();
    trace.values.resize(t.at("n").get<std::size_t>());
    read_bytes(f, trace.values.data(), trace.values.size() * sizeof(double), path);
    data.traces[{t.at("subject").get<int>(), t.at("stage").get<int>()}] = std::move(trace);
  }
  const std::size_t feat_n =
      static_cast<std::size_t>(data.windows.channels) * data.windows.feature_len;
  for (const json& wj : h.at("windows")) {
    emg::FeatureWindow w;
    w.subject = wj.at(0).get<int>();
    w.stage = wj.at(1).get<int>();
    w.t_start = wj.at(2).get<double>();
    std::vector<double> feats(feat_n);
    read_bytes(f, feats.data(), feat_n * sizeof(double), path);
    w.features = ad::Tensor::matrix(data.windows.channels, data.windows.feature_len,
                                    std::move(feats));
    w.target.resize(static_cast<std::size_t>(data.windows.target_len));
    read_bytes(f, w.target.data(), w.target.size() * sizeof(double), path);
    data.windows.windows.push_back(std::move(w));
  }
  return data;
}

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const fs::path& path, const model::Parameters& params,
                     const CheckpointMeta& meta) {
  json h;
  h["format_version"] = 1;
  h["arch"] = arch_to_json(meta.arch);
  h["normalizer"] = normalizer_to_json(meta.normalizer);
  json prov;
  prov["seed"] = meta.seed;
  prov["epochs"] = meta.epochs;
  prov["history_digest"] = meta.history_digest;
  prov["subjects"] = meta.trained_subjects;
  h["provenance"] = prov;
  const std::string header = dump_canonical(h, "%.17g");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  write_bytes(f, kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t hlen = header.size();
  write_bytes(f, &hlen, sizeof hlen);
  write_bytes(f, header.data(), header.size());
  const std::uint64_t count = params.size();
  write_bytes(f, &count, sizeof count);
  for (const auto& [name, t] : params.items()) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    write_bytes(f, &name_len, sizeof name_len);
    write_bytes(f, name.data(), name.size());
    const std::uint32_t ndim = static_cast<std::uint32_t>(t.shape().size());
    write_bytes(f, &ndim, sizeof ndim);
    for (int d : t.shape()) {
      const std::int64_t dim = d;
      write_bytes(f, &dim, sizeof dim);
    }
    write_bytes(f, t.ptr(), t.numel() * sizeof(double));
  }
  if (!f) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  char magic[8];
  read_bytes(f, magic, sizeof magic, path);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("bad magic bytes in " + path.string());
  std::uint64_t hlen = 0;
  read_bytes(f, &hlen, sizeof hlen, path);
  std::string header(hlen, '\0');
  read_bytes(f, header.data(), hlen, path);
  const json h = parse_json(header, path.string());
  expected_version(h, path.string());

  Checkpoint ckpt;
  ckpt.meta.arch = arch_from_json(h.at("arch"), path.string() + ":arch");
  ckpt.meta.normalizer =
      normalizer_from_json(h.at("normalizer"), path.string() + ":normalizer");
  const json& prov = h.at("provenance");
  ckpt.meta.seed = prov.at("seed").get<std::uint64_t>();
  ckpt.meta.epochs = prov.at("epochs").get<int>();
  ckpt.meta.history_digest = prov.at("history_digest").get<std::string>();
  ckpt.meta.trained_subjects = prov.at("subjects").get<std::vector<int>>();

  std::uint64_t count = 0;
  read_bytes(f, &count, sizeof count, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    read_bytes(f, &name_len, sizeof name_len, path);
    std::string name(name_len, '\0');
    read_bytes(f, name.data(), name_len, path);
    std::uint32_t ndim = 0;
    read_bytes(f, &ndim, sizeof ndim, path);
    std::vector<int> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      std::int64_t dim = 0;
      read_bytes(f, &dim, sizeof dim, path);
      shape[d] = static_cast<int>(dim);
    }
    ad::Tensor t(shape);
    read_bytes(f, t.ptr(), t.numel() * sizeof(double), path);
    ckpt.params.add(std::move(name), std::move(t));
  }
  validate_checkpoint_arch(ckpt, ckpt.meta.arch);
  return ckpt;
}

void validate_checkpoint_arch(const Checkpoint& ckpt, const model::ArchConfig& expected) {
  std::size_t n_expected = 0;
  model::for_each_parameter_spec(
      expected, [&](const std::string& name, const std::vector<int>& shape, int) {
        ++n_expected;
        const int idx = ckpt.params.index_of(name);
        if (idx < 0)
          throw DataError("checkpoint is missing tensor '" + name + "'");
        const ad::Tensor& t = ckpt.params.items()[static_cast<std::size_t>(idx)].second;
        if (t.shape() != shape) {
          std::string want = "[";
          for (std::size_t i = 0; i < shape.size(); ++i)
            want += (i ? "x" : "") + std::to_string(shape[i]);
          want += "]";
          throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(t) +
                          ", expected " + want);
        }
      });
  if (n_expected != ckpt.params.size())
    throw DataError("checkpoint holds unexpected extra tensors");
}

std::string history_digest(const std::vector<train::EpochStats>& history) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const train::EpochStats& e : history) {
    const double vals[6] = {e.train_total, e.train_mse, e.train_contraction,
                            e.val_total, e.val_mse, e.val_contraction};
    h = fnv1a64(vals, sizeof vals, h);
  }
  return hex64(h);
}

// --- reports ----------------------------------------------------------------------

std::string render_report_csv(const std::vector<eval::MetricsReport>& reports) {
  if (reports.empty()) throw DataError("render_report_csv: no reports");
  std::string out =
      "group,condition,arm,mtd_mean_mm,mtd_std_mm,me_mean_mm,me_std_mm,"
      "mepct_mean,mepct_std,n_periods,n_samples\n";
  char buf[256];
  for (const eval::MetricsReport& r : reports) {
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%s,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%ld,%ld\n", r.group.c_str(),
                  r.condition.c_str(), r.arm.c_str(), r.mtd_mean_mm, r.mtd_std_mm,
                  r.me_mean_mm, r.me_std_mm, r.mepct_mean, r.mepct_std, r.n_periods,
                  r.n_samples);
    out += buf;
  }
  return out;
}

std::string render_report_json(const std::vector<eval::MetricsReport>& reports) {
  if (reports.empty()) throw DataError("render_report_json: no reports");
  json arr = json::array();
  for (const eval::MetricsReport& r : reports) {
    json j;
    j["group"] = r.group;
    j["condition"] = r.condition;
    j["arm"] = r.arm;
    j["mtd_mean_mm"] = r.mtd_mean_mm;
    j["mtd_std_mm"] = r.mtd_std_mm;
    j["me_mean_mm"] = r.me_mean_mm;
    j["me_std_mm"] = r.me_std_mm;
    j["mepct_mean"] = r.mepct_mean;
    j["mepct_std"] = r.mepct_std;
    j["n_periods"] = r.n_periods;
    j["n_samples"] = r.n_samples;
    arr.push_back(j);
  }
  json root;
  root["format_version"] = 1;
  root["reports"] = arr;
  return dump_canonical(root, "%.17g") + "\n";
}

std::vector<eval::MetricsReport> reports_from_json(const std::string& text) {
  const json root = parse_json(text, "report json");
  expected_version(root, "report json");
  std::vector<eval::MetricsReport> out;
  for (const json& j : root.at("reports")) {
    eval::MetricsReport r;
    r.group = j.at("group").get<std::string>();
    r.condition = j.at("condition").get<std::string>();
    r.arm = j.at("arm").get<std::string>();
    r.mtd_mean_mm = j.at("mtd_mean_mm").get<double>();
    r.mtd_std_mm = j.at("mtd_std_mm").get<double>();
    r.me_mean_mm = j.at("me_mean_mm").get<double>();
    r.me_std_mm = j.at("me_std_mm").get<double>();
    r.mepct_mean = j.at("mepct_mean").get<double>();
    r.mepct_std = j.at("mepct_std").get<double>();
    r.n_periods = j.at("n_periods").get<long>();
    r.n_samples = j.at("n_samples").get<long>();
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_history_json(const train::TrainState& state) {
  json arr = json::array();
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const train::EpochStats& e = state.history[i];
    json j;
    j["epoch"] = static_cast<int>(i);
    j["train_total"] = e.train_total;
    j["train_mse"] = e.train_mse;
    j["train_contraction"] = e.train_contraction;
    j["val_total"] = e.val_total;
    j["val_mse"] = e.val_mse;
    j["val_contraction"] = e.val_contraction;
    arr.push_back(j);
  }
  json root;
  root["format_version"] = 1;
  root["best_epoch"] = state.best_epoch;
  root["epochs"] = arr;
  return dump_canonical(root, "%.17g") + "\n";
}

// --- SVG --------------------------------------------------------------------------

namespace {

std::string svg_polyline(const std::vector<double>& values, double t0, double dt,
                         double t_min, double t_span, double v_min, double v_span,
                         double width, double height, const char* color) {
  std::string pts;
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = 40.0 + (t0 + dt * static_cast<double>(i) - t_min) / t_span * (width - 60.0);
    const double y = height - 30.0 - (values[i] - v_min) / v_span * (height - 60.0);
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
    pts += buf;
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"1.2\" points=\"" + pts + "\"/>\n";
}

}  // namespace

std::string render_trace_svg(const sim::ThicknessTrace& pred,
                             const sim::ThicknessTrace& truth,
                             const std::vector<std::pair<int, int>>& periods) {
  if (pred.values.empty() || truth.values.empty())
    throw DataError("render_trace_svg: empty trace");
  const double width = 900.0, height = 320.0;
  double v_min = truth.values[0], v_max = truth.values[0];
  for (double v : truth.values) {
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  }
  for (double v : pred.values) {
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  }
  const double v_span = (v_max - v_min) > 1e-9 ? (v_max - v_min) : 1.0;
  const double t_min = std::min(pred.t0, truth.t0);
  const double t_end = std::max(pred.t0 + pred.dt * static_cast<double>(pred.size()),
                                truth.t0 + truth.dt * static_cast<double>(truth.size()));
  const double t_span = (t_end - t_min) > 1e-9 ? (t_end - t_min) : 1.0;

  std::string svg =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"320\" "
      "viewBox=\"0 0 900 320\">\n"
      "<rect width=\"900\" height=\"320\" fill=\"white\"/>\n";
  char buf[160];
  for (const auto& [s, e] : periods) {
    const double x = 40.0 + (truth.t0 + truth.dt * s - t_min) / t_span * (width - 60.0);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"30\" x2=\"%.2f\" y2=\"%.0f\" "
                  "stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>\n",
                  x, x, height - 30.0);
    svg += buf;
  }
  svg += svg_polyline(truth.values, truth.t0, truth.dt, t_min, t_span, v_min, v_span,
                      width, height, "#1f77b4");
  svg += svg_polyline(pred.values, pred.t0, pred.dt, t_min, t_span, v_min, v_span,
                      width, height, "#d62728");
  svg +=
      "<text x=\"40\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">"
      "deformation (mm): true #1f77b4, predicted #d62728</text>\n"
      "</svg>\n";
  return svg;
}

std::string render_report_svg(const std::vector<eval::MetricsReport>& reports) {
  if (reports.empty()) throw DataError("render_report_svg: no reports");
  const double bar_h = 18.0, gap = 8.0;
  const double height = 50.0 + static_cast<double>(reports.size()) * (bar_h + gap);
  double max_v = 0.0;
  for (const auto& r : reports) max_v = std::max(max_v, r.mtd_mean_mm);
  if (max_v <= 0.0) max_v = 1.0;
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"%.0f\" "
                "viewBox=\"0 0 900 %.0f\">\n<rect width=\"900\" height=\"%.0f\" "
                "fill=\"white\"/>\n",
                height, height, height);
  std::string svg = buf;
  svg += "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">MTD mean "
         "absolute error (mm)</text>\n";
  double y = 40.0;
  for (const auto& r : reports) {
    const double w = r.mtd_mean_mm / max_v * 500.0;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"260\" y=\"%.1f\" width=\"%.1f\" height=\"%.0f\" "
                  "fill=\"#1f77b4\"/>\n"
                  "<text x=\"10\" y=\"%.1f\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%s/%s/%s</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%.3f</text>\n",
                  y, w, bar_h, y + 13.0, r.group.c_str(), r.condition.c_str(),
                  r.arm.c_str(), 268.0 + w, y + 13.0, r.mtd_mean_mm);
    svg += buf;
    y += bar_h + gap;
  }
  svg += "</svg>\n";
  return svg;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return text;
}

}  // namespace myoattn::io
