#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "myoattn/cli.hpp"
#include "myoattn/workflow.hpp"

namespace py = pybind11;
using namespace myoattn;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

ad::Tensor matrix_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  return ad::Tensor::matrix(
      static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
      std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> matrix_to_array(const ad::Tensor& t) {
  py::array_t<double> a({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  std::copy(t.ptr(), t.ptr() + t.numel(), a.mutable_data());
  return a;
}

py::dict report_to_dict(const eval::MetricsReport& r) {
  py::dict d;
  d["group"] = r.group;
  d["condition"] = r.condition;
  d["arm"] = r.arm;
  d["mtd_mean_mm"] = r.mtd_mean_mm;
  d["mtd_std_mm"] = r.mtd_std_mm;
  d["me_mean_mm"] = r.me_mean_mm;
  d["me_std_mm"] = r.me_std_mm;
  d["mepct_mean"] = r.mepct_mean;
  d["mepct_std"] = r.mepct_std;
  d["n_periods"] = r.n_periods;
  d["n_samples"] = r.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sEMG-driven muscle thickness deformation pipeline (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // --- simulation -----------------------------------------------------------
  m.def(
      "activation_profile",
      [](double t, double period, double duty, double amplitude, double load) {
        return sim::activation_profile(t, period, duty, amplitude, load);
      },
      py::arg("t"), py::arg("period"), py::arg("duty") = 0.5,
      py::arg("amplitude") = 1.0, py::arg("load") = 1.0);

  m.def(
      "thickness_dynamics",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& activation,
         double dt, double tau, double rest_mm, double gain_mm, double frame_rate) {
        const sim::ThicknessTrace tr = sim::thickness_dynamics(
            to_vector(activation), dt, tau, rest_mm, gain_mm, frame_rate);
        return py::make_tuple(to_array(tr.values), tr.t0, tr.dt);
      },
      py::arg("activation"), py::arg("dt"), py::arg("tau"), py::arg("rest_mm"),
      py::arg("gain_mm"), py::arg("frame_rate") = 20.0,
      "First-order thickness dynamics; returns (values_mm, t0, dt).");

  m.def(
      "simulate_dataset",
      [](const std::string& out_dir, int n_subjects, std::uint64_t seed,
         double duration_s) {
        sim::SimConfig cfg;
        cfg.n_subjects = n_subjects;
        cfg.duration_s = duration_s;
        const sim::Cohort cohort =
            sim::synth_cohort(cfg, sim::default_stages(duration_s), seed);
        io::save_dataset(out_dir, cohort);
        return static_cast<int>(cohort.subjects.size());
      },
      py::arg("out_dir"), py::arg("n_subjects") = 6, py::arg("seed") = 7,
      py::arg("duration_s") = 60.0,
      "Generate a synthetic cohort and write the dataset directory.");

  // --- ultrasound -------------------------------------------------------------
  m.def(
      "envelope",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& rf,
         double fc, double fs) { return to_array(us::envelope(to_vector(rf), fc, fs)); },
      py::arg("rf"), py::arg("fc") = 5e6, py::arg("fs") = 50e6);

  m.def(
      "detect_interfaces",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& env,
         double fs, double min_separation) {
        const us::EchoPair e = us::detect_interfaces(to_vector(env), fs, min_separation);
        return py::make_tuple(e.d1_s, e.d2_s, e.confidence);
      },
      py::arg("env"), py::arg("fs") = 50e6, py::arg("min_separation") = 3e-6);

  m.def("thickness_from_delays", &us::thickness_from_delays, py::arg("d1"),
        py::arg("d2"), py::arg("c") = 1540.0);

  // --- sEMG pipeline ------------------------------------------------------------
  m.def(
      "bandpass",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         double lo, double hi, double fs) {
        return to_array(emg::bandpass(to_vector(x), lo, hi, fs));
      },
      py::arg("x"), py::arg("lo") = 20.0, py::arg("hi") = 450.0, py::arg("fs") = 1000.0);

  m.def(
      "envelope_features",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         double fs) { return to_array(emg::envelope_features(to_vector(x), fs)); },
      py::arg("x"), py::arg("fs") = 1000.0);

  m.def(
      "preprocess_dataset",
      [](const std::string& dataset_dir, const std::string& windows_file) {
        const eval::ProtocolDataset data =
            flow::preprocess_cohort(io::load_dataset(dataset_dir));
        io::save_windows(windows_file, data);
        return static_cast<int>(data.windows.windows.size());
      },
      py::arg("dataset_dir"), py::arg("windows_file"),
      "Derive ultrasound labels and sEMG feature windows; returns the window count.");

  // --- losses ---------------------------------------------------------------------
  m.def("mse_loss", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
                       const py::array_t<double, py::array::c_style | py::array::forcecast>& t) {
    return train::mse_loss(to_vector(p), to_vector(t));
  });
  m.def("contraction_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& t) {
          return train::contraction_loss(to_vector(p), to_vector(t));
        });
  m.def(
      "total_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& t,
         double lambda_c) { return train::total_loss(to_vector(p), to_vector(t), lambda_c); },
      py::arg("pred"), py::arg("target"), py::arg("lambda_c") = 0.2);

  // --- evaluation --------------------------------------------------------------------
  m.def("muscle_excursion",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& seg) {
          return eval::muscle_excursion(to_vector(seg));
        });

  m.def(
      "segment_periods",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& trace,
         double dt) {
        sim::ThicknessTrace tr;
        tr.dt = dt;
        tr.values = to_vector(trace);
        return eval::segment_periods(tr);
      },
      py::arg("trace"), py::arg("dt") = 0.05);

  m.def(
      "compute_metrics",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& truth,
         const std::vector<std::pair<int, int>>& periods) {
        return report_to_dict(eval::compute_metrics(to_vector(pred), to_vector(truth), periods));
      },
      py::arg("pred"), py::arg("truth"), py::arg("periods"));

  // --- model / training ------------------------------------------------------------------
  m.def(
      "gradcheck",
      [](int d_model, int heads, int channels, int ff_dim, double h, double tol,
         std::uint64_t seed) {
        std::ostringstream out;
        const int rc = cli::run({"gradcheck", "--dmodel", std::to_string(d_model),
                                 "--heads", std::to_string(heads), "--channels",
                                 std::to_string(channels), "--ff", std::to_string(ff_dim),
                                 "--step", std::to_string(h), "--tol", std::to_string(tol),
                                 "--seed", std::to_string(seed)},
                                out, out);
        return py::make_tuple(rc == 0, out.str());
      },
      py::arg("d_model") = 8, py::arg("heads") = 1, py::arg("channels") = 2,
      py::arg("ff_dim") = 16, py::arg("h") = 1e-5, py::arg("tol") = 1e-4,
      py::arg("seed") = 7,
      "Finite-difference check of the full model; returns (passed, log).");

  m.def(
      "predict_window",
      [](const std::string& checkpoint,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& features) {
        const io::Checkpoint ckpt = io::load_checkpoint(checkpoint);
        const ad::Tensor feats = matrix_from_array(features);
        return to_array(model::predict(
            ckpt.params, ckpt.meta.arch,
            emg::apply_normalizer(ckpt.meta.normalizer, feats)));
      },
      py::arg("checkpoint"), py::arg("features"),
      "Deformation prediction (mm) for one raw feature window.");

  m.def(
      "train_model",
      [](const std::string& windows_file, const std::string& checkpoint_out,
         const std::vector<int>& subjects, const std::string& config_json) {
        const io::RunConfig cfg = config_json.empty()
                                      ? io::RunConfig{}
                                      : io::config_from_json(config_json);
        const eval::ProtocolDataset data = io::load_windows(windows_file);
        train::TrainConfig tcfg = cfg.train;
        tcfg.seed = cfg.master_seed;
        const std::vector<int> used = subjects.empty() ? data.subjects : subjects;
        const train::TrainState state = flow::train_on_subjects(data, used, tcfg, cfg.arch);
        io::CheckpointMeta meta;
        meta.arch = state.arch;
        meta.normalizer = state.normalizer;
        meta.seed = cfg.master_seed;
        meta.epochs = state.epochs_run;
        meta.history_digest = io::history_digest(state.history);
        meta.trained_subjects = used;
        io::save_checkpoint(checkpoint_out, state.params, meta);
        return state.history.empty() ? 0.0 : state.history.back().val_total;
      },
      py::arg("windows_file"), py::arg("checkpoint_out"),
      py::arg("subjects") = std::vector<int>{}, py::arg("config_json") = std::string{},
      "Train on a windows file; returns the final validation loss.");

  m.def(
      "run_protocol",
      [](const std::string& windows_file, const std::string& config_json) {
        const io::RunConfig cfg = config_json.empty()
                                      ? io::RunConfig{}
                                      : io::config_from_json(config_json);
        const eval::ProtocolDataset data = io::load_windows(windows_file);
        const std::vector<eval::MetricsReport> reports =
            flow::run_protocol_suite(data, cfg);
        py::list out;
        for (const eval::MetricsReport& r : reports) out.append(report_to_dict(r));
        return out;
      },
      py::arg("windows_file"), py::arg("config_json") = std::string{},
      "Run the cross-subject protocol suite; returns report rows as dicts.");

  m.def("default_config_json",
        []() { return io::canonical_config_json(io::RunConfig{}); });

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int rc = cli::run(args, out, err);
    return py::make_tuple(rc, out.str(), err.str());
  });
}
