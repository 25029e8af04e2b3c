#include "myoattn/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace myoattn::flow {

eval::ProtocolDataset preprocess_cohort(const sim::Cohort& cohort) {
  eval::ProtocolDataset data;
  for (const sim::SubjectRecording& rec : cohort.subjects) {
    const int subject = rec.profile.id;
    data.subjects.push_back(subject);

    // Ultrasound label pipeline, stage 1 first for the rest baseline.
    std::map<int, sim::ThicknessTrace> tracked;
    for (const sim::StageRecording& st : rec.stages)
      tracked[st.spec.index] = us::track_thickness(st.rf);
    const auto stage1 = tracked.find(1);
    if (stage1 == tracked.end())
      throw DataError("subject " + std::to_string(subject) + " has no stage 1");
    const double baseline =
        emg::rest_baseline(stage1->second, cohort.config.rest_lead_in_s);

    for (const sim::StageRecording& st : rec.stages) {
      sim::ThicknessTrace deformation = tracked.at(st.spec.index);
      for (double& v : deformation.values) v -= baseline;

      std::vector<std::vector<double>> features(st.semg.size());
      for (std::size_t c = 0; c < st.semg.size(); ++c)
        features[c] = emg::envelope_features(
            emg::bandpass(st.semg[c], 20.0, 450.0, cohort.config.fs_semg_hz),
            cohort.config.fs_semg_hz);

      emg::WindowedDataset ds =
          emg::make_windows(features, deformation, subject, st.spec.index);
      if (data.windows.windows.empty()) {
        data.windows.channels = ds.channels;
        data.windows.feature_len = ds.feature_len;
        data.windows.target_len = ds.target_len;
        data.windows.window_s = ds.window_s;
        data.windows.stride_s = ds.stride_s;
        data.stride_s = ds.stride_s;
      }
      data.windows.windows.insert(data.windows.windows.end(),
                                  std::make_move_iterator(ds.windows.begin()),
                                  std::make_move_iterator(ds.windows.end()));
      data.traces[{subject, st.spec.index}] = std::move(deformation);
    }
  }
  std::sort(data.subjects.begin(), data.subjects.end());
  return data;
}

std::vector<emg::FeatureWindow> subject_windows(const eval::ProtocolDataset& data,
                                                int subject) {
  std::vector<emg::FeatureWindow> out;
  for (const emg::FeatureWindow& w : data.windows.windows)
    if (w.subject == subject) out.push_back(w);
  return out;
}

train::TrainState train_on_subjects(const eval::ProtocolDataset& data,
                                    const std::vector<int>& subjects,
                                    const train::TrainConfig& cfg,
                                    const model::ArchConfig& arch) {
  emg::WindowedDataset ds = data.windows;
  if (!subjects.empty()) {
    ds.windows.clear();
    for (const emg::FeatureWindow& w : data.windows.windows)
      if (std::find(subjects.begin(), subjects.end(), w.subject) != subjects.end())
        ds.windows.push_back(w);
  }
  return train::train(ds, cfg, arch);
}

std::vector<eval::MetricsReport> run_protocol_suite(const eval::ProtocolDataset& data,
                                                    const io::RunConfig& cfg) {
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.master_seed;
  std::vector<eval::MetricsReport> reports;
  for (const std::string& label : cfg.protocol.pair_labels) {
    const eval::ProtocolConfig protocol = io::protocol_from_label(
        label, static_cast<int>(data.subjects.size()), cfg.protocol);
    const std::vector<eval::MetricsReport> pair_reports =
        eval::run_protocol(data, protocol, tcfg, cfg.arch);
    reports.insert(reports.end(), pair_reports.begin(), pair_reports.end());
  }
  return reports;
}

StitchedPair infer_stage(const eval::ProtocolDataset& data,
                         const model::Parameters& params,
                         const model::ArchConfig& arch,
                         const emg::Normalizer& normalizer, int subject, int stage) {
  std::vector<eval::PredictedWindow> preds;
  for (const emg::FeatureWindow& w : data.windows.windows) {
    if (w.subject != subject || w.stage != stage) continue;
    eval::PredictedWindow pw;
    pw.t_start = w.t_start;
    pw.values = model::predict(params, arch, emg::apply_normalizer(normalizer, w.features));
    preds.push_back(std::move(pw));
  }
  if (preds.empty())
    throw DataError("no windows for subject " + std::to_string(subject) + " stage " +
                    std::to_string(stage));
  StitchedPair pair;
  pair.pred = eval::stitch_predictions(preds);
  const auto it = data.traces.find({subject, stage});
  if (it == data.traces.end())
    throw DataError("missing deformation trace for subject " + std::to_string(subject));
  const sim::ThicknessTrace& full = it->second;
  const long offset = std::lround((pair.pred.t0 - full.t0) / full.dt);
  pair.truth.t0 = pair.pred.t0;
  pair.truth.dt = full.dt;
  pair.truth.values.assign(
      full.values.begin() + offset,
      full.values.begin() + offset + static_cast<long>(pair.pred.size()));
  return pair;
}

}  // namespace myoattn::flow
