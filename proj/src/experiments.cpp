#include "egoid/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"

namespace egoid::experiments {

Backend parse_backend(const std::string& name) {
  if (name == "lpc-svm") return Backend::kLpcSvm;
  if (name == "raw-svm") return Backend::kRawSvm;
  if (name == "cnn") return Backend::kCnn;
  fail(ErrorCode::kInvalidArgument, "unknown backend '" + name + "' (expected lpc-svm, raw-svm or cnn)");
}

std::string backend_name(Backend backend) {
  switch (backend) {
    case Backend::kLpcSvm: return "lpc-svm";
    case Backend::kRawSvm: return "raw-svm";
    case Backend::kCnn: return "cnn";
  }
  return "?";
}

const SequenceData* FeatureSet::find(const ingest::SequenceKey& key) const {
  for (const auto& s : sequences) {
    if (s.subject_id == key.first && s.sequence_id == key.second) return &s;
  }
  return nullptr;
}

std::vector<std::string> FeatureSet::subject_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sequences) ids.push_back(s.subject_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

ingest::DatasetManifest FeatureSet::as_manifest() const {
  ingest::DatasetManifest m;
  for (const auto& s : sequences) {
    auto it = std::find_if(m.subjects.begin(), m.subjects.end(),
                           [&](const ingest::SubjectRecord& r) { return r.subject_id == s.subject_id; });
    if (it == m.subjects.end()) {
      m.subjects.push_back({s.subject_id, {}});
      it = m.subjects.end() - 1;
    }
    ingest::SequenceRecord rec;
    rec.sequence_id = s.sequence_id;
    rec.camera_id = s.camera_id;
    rec.session_tag = s.session_tag;
    rec.frame_count = static_cast<std::uint32_t>(s.windows.size());
    it->sequences.push_back(std::move(rec));
  }
  return m;
}

std::vector<flowgrid::FeatureWindow> make_windows(std::span<const flowgrid::FlowField> flows,
                                                  Rational fps, bool stabilize,
                                                  const std::string& subject_id) {
  auto windows = flowgrid::build_windows(flows, fps);
  for (auto& w : windows) {
    if (stabilize) w = flowgrid::stabilize_mean_subtract(std::move(w));
    w.subject_id = subject_id;
  }
  return windows;
}

FeatureSet features_from_synthetic(const synth::SyntheticDataset& dataset, bool stabilize) {
  FeatureSet fs;
  fs.stabilized = stabilize;
  for (const auto& subject : dataset.subjects) {
    for (const auto& seq : subject.sequences) {
      SequenceData d;
      d.subject_id = subject.subject_id;
      d.sequence_id = seq.sequence_id;
      d.camera_id = seq.camera_id;
      d.session_tag = seq.session_tag;
      d.windows = make_windows(seq.flows, dataset.config.fps, stabilize, subject.subject_id);
      fs.sequences.push_back(std::move(d));
    }
  }
  return fs;
}

FeatureSet features_from_manifest(const ingest::DatasetManifest& manifest, bool stabilize) {
  FeatureSet fs;
  fs.stabilized = stabilize;
  for (const auto& subject : manifest.subjects) {
    for (const auto& seq : subject.sequences) {
      if (seq.flow_cache.empty()) {
        fail(ErrorCode::kValidation,
             subject.subject_id + "/" + seq.sequence_id + ": no flow cache (run extract first)");
      }
      const auto cache = flowgrid::read_flow_cache(seq.flow_cache.string());
      SequenceData d;
      d.subject_id = subject.subject_id;
      d.sequence_id = seq.sequence_id;
      d.camera_id = seq.camera_id;
      d.session_tag = seq.session_tag;
      try {
        d.windows = make_windows(cache.flows, cache.fps, stabilize, subject.subject_id);
      } catch (const Error& e) {
        fail(e.code(), subject.subject_id + "/" + seq.sequence_id + ": " + e.what());
      }
      fs.sequences.push_back(std::move(d));
    }
  }
  return fs;
}

std::vector<std::uint8_t> encode_features(const FeatureSet& features) {
  ByteWriter w;
  w.magic("EGFT");
  w.u16(kFeatureFileVersion);
  w.u8(features.stabilized ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(features.sequences.size()));
  for (const auto& s : features.sequences) {
    w.str(s.subject_id);
    w.str(s.sequence_id);
    w.str(s.camera_id);
    w.str(s.session_tag);
    w.u32(static_cast<std::uint32_t>(s.windows.size()));
    for (const auto& win : s.windows) {
      w.u16(static_cast<std::uint16_t>(win.m_x));
      w.u16(static_cast<std::uint16_t>(win.m_y));
      w.u32(static_cast<std::uint32_t>(win.frames));
      w.u32(static_cast<std::uint32_t>(win.fps.num));
      w.u32(static_cast<std::uint32_t>(win.fps.den));
      w.f64(win.t_start);
      for (double v : win.data) w.f32(static_cast<float>(v));
    }
  }
  return std::move(w.bytes());
}

FeatureSet decode_features(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic("EGFT");
  const auto version = r.u16();
  if (version != kFeatureFileVersion) {
    fail(ErrorCode::kVersionMismatch, source + ": feature file version " + std::to_string(version) +
                                          ", expected " + std::to_string(kFeatureFileVersion));
  }
  FeatureSet fs;
  fs.stabilized = r.u8() != 0;
  const auto n_seq = r.u32();
  for (std::uint32_t i = 0; i < n_seq; ++i) {
    SequenceData s;
    s.subject_id = r.str();
    s.sequence_id = r.str();
    s.camera_id = r.str();
    s.session_tag = r.str();
    const auto n_win = r.u32();
    for (std::uint32_t k = 0; k < n_win; ++k) {
      flowgrid::FeatureWindow win;
      win.m_x = r.u16();
      win.m_y = r.u16();
      win.frames = static_cast<int>(r.u32());
      win.fps.num = r.u32();
      win.fps.den = r.u32();
      win.t_start = r.f64();
      const std::size_t n = win.series_count() * static_cast<std::size_t>(win.frames);
      if (n == 0 || n > r.remaining() / 4) fail(ErrorCode::kFormat, source + ": bad window shape");
      if (!s.windows.empty() && (win.m_x != s.windows[0].m_x || win.m_y != s.windows[0].m_y ||
                                 win.frames != s.windows[0].frames)) {
        fail(ErrorCode::kShapeMismatch, source + ": inconsistent window shapes in " + s.sequence_id);
      }
      win.data.resize(n);
      for (double& v : win.data) v = r.f32();
      win.subject_id = s.subject_id;
      s.windows.push_back(std::move(win));
    }
    fs.sequences.push_back(std::move(s));
  }
  if (r.remaining() != 0) fail(ErrorCode::kFormat, source + ": trailing bytes");
  return fs;
}

void save_features(const std::string& path, const FeatureSet& features) {
  write_file_atomic(path, encode_features(features));
}

FeatureSet load_features(const std::string& path) {
  return decode_features(read_file_bytes(path), path);
}

std::string lpc_feature_kind(const lpc::LpcOptions& o) {
  return "lpc k=" + std::to_string(o.order) + " center=" + (o.subtract_mean ? "1" : "0") +
         " taper=" + (o.hamming ? "1" : "0");
}

lpc::LpcOptions parse_lpc_feature_kind(const std::string& kind) {
  lpc::LpcOptions o;
  std::istringstream in(kind);
  std::string token;
  in >> token;
  if (token != "lpc") fail(ErrorCode::kFormat, "not an LPC feature tag: '" + kind + "'");
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kFormat, "malformed LPC feature tag: '" + kind + "'");
    const std::string key = token.substr(0, eq);
    const int value = std::stoi(token.substr(eq + 1));
    if (key == "k") o.order = value;
    else if (key == "center") o.subtract_mean = value != 0;
    else if (key == "taper") o.hamming = value != 0;
    else fail(ErrorCode::kFormat, "unknown LPC feature option '" + key + "'");
  }
  return o;
}

std::vector<double> svm_features(Backend backend, const flowgrid::FeatureWindow& w,
                                 const lpc::LpcOptions& options) {
  if (backend == Backend::kLpcSvm) return lpc::lpc_descriptor(w, options);
  if (backend == Backend::kRawSvm) return w.data;
  fail(ErrorCode::kInvalidArgument, "svm_features called for the network back end");
}

Classifier Classifier::train(Backend backend, const WindowRefs& windows, std::span<const int> labels,
                             std::vector<std::string> class_names, const BackendConfig& cfg) {
  if (windows.size() != labels.size()) fail(ErrorCode::kShapeMismatch, "one label per window is required");
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "no training windows");
  Classifier c;
  c.backend_ = backend;
  c.class_names_ = std::move(class_names);
  c.lpc_ = cfg.lpc;
  if (backend == Backend::kCnn) {
    cnn::CnnConfig nc = cfg.cnn;
    nc.n_classes = c.n_classes();
    nc.m_x = windows.front()->m_x;
    nc.m_y = windows.front()->m_y;
    nc.frames = windows.front()->frames;
    c.cnn_ = cnn::train(std::span<const flowgrid::FeatureWindow* const>(windows), labels, nc);
    c.cnn_->class_names = c.class_names_;
    return c;
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(windows.size());
  for (const auto* w : windows) rows.push_back(svm_features(backend, *w, cfg.lpc));
  lpc::NormStats norm = lpc::fit_normalizer(rows);
  svm::Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(norm.dims()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lpc::apply_normalizer_inplace(norm, rows[i]);
    std::copy(rows[i].begin(), rows[i].end(), x.row(static_cast<Eigen::Index>(i)).data());
  }
  const svm::SvmConfig& sc = backend == Backend::kLpcSvm ? cfg.svm_lpc : cfg.svm_raw;
  c.svm_ = svm::train_multiclass(x, labels, sc, cfg.seed);
  c.svm_->norm = std::move(norm);
  c.svm_->feature_kind = backend == Backend::kLpcSvm ? lpc_feature_kind(cfg.lpc) : "raw";
  c.svm_->class_names = c.class_names_;
  if (static_cast<int>(c.svm_->classes.size()) != c.n_classes()) {
    fail(ErrorCode::kValidation, "every class needs training windows");
  }
  return c;
}

std::vector<fusion::Distribution> Classifier::predict(
    std::span<const flowgrid::FeatureWindow> windows) const {
  std::vector<fusion::Distribution> out;
  out.reserve(windows.size());
  if (cnn_) {
    const auto probs = cnn_->predict_proba(windows);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      fusion::Distribution d(static_cast<std::size_t>(probs.cols()));
      for (Eigen::Index k = 0; k < probs.cols(); ++k) d[k] = probs(i, k);
      out.push_back(std::move(d));
    }
    return out;
  }
  for (const auto& w : windows) {
    auto f = svm_features(backend_, w, lpc_);
    lpc::apply_normalizer_inplace(*svm_->norm, f);
    out.push_back(svm_->predict_proba(f));
  }
  return out;
}

fusion::Descriptors Classifier::describe(std::span<const flowgrid::FeatureWindow> windows) const {
  if (cnn_) return cnn_->extract_descriptor(windows).cast<double>();
  fusion::Descriptors out(static_cast<Eigen::Index>(windows.size()),
                          static_cast<Eigen::Index>(svm_->dims()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto f = svm_features(backend_, windows[i], lpc_);
    lpc::apply_normalizer_inplace(*svm_->norm, f);
    std::copy(f.begin(), f.end(), out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

void Classifier::save(const std::string& path) const {
  if (cnn_) cnn::save_model(path, *cnn_);
  else svm::save_model(path, *svm_);
}

Classifier Classifier::load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 4) fail(ErrorCode::kFormat, path + ": not a model file");
  const std::string magic(bytes.begin(), bytes.begin() + 4);
  Classifier c;
  if (magic == "EGNN") {
    c.cnn_ = cnn::decode_model(bytes, path);
    c.backend_ = Backend::kCnn;
    c.class_names_ = c.cnn_->class_names;
  } else if (magic == "EGSV") {
    c.svm_ = svm::decode_model(bytes, path);
    if (!c.svm_->norm) fail(ErrorCode::kFormat, path + ": SVM model lacks normalization statistics");
    if (c.svm_->feature_kind == "raw") {
      c.backend_ = Backend::kRawSvm;
    } else {
      c.backend_ = Backend::kLpcSvm;
      c.lpc_ = parse_lpc_feature_kind(c.svm_->feature_kind);
    }
    c.class_names_ = c.svm_->class_names;
  } else {
    fail(ErrorCode::kFormat, path + ": unknown model magic '" + magic + "'");
  }
  if (c.class_names_.size() < 2) fail(ErrorCode::kFormat, path + ": model lacks class names");
  return c;
}

int windows_for_duration(double duration_s) {
  const double n = (duration_s - flowgrid::kWindowSeconds) / flowgrid::kStrideSeconds + 1.0;
  if (n < 1.0 - 1e-9 || std::abs(n - std::round(n)) > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "video length " + std::to_string(duration_s) +
                                          " s is not 4 s plus a multiple of 2 s");
  }
  return static_cast<int>(std::lround(n));
}

std::vector<SequenceProbs> predict_sequences(const Classifier& model, const FeatureSet& features,
                                             std::span<const ingest::SequenceKey> keys) {
  std::vector<SequenceProbs> out;
  const auto& names = model.class_names();
  for (const auto& key : keys) {
    const SequenceData* seq = features.find(key);
    if (seq == nullptr) {
      fail(ErrorCode::kValidation, "no features for sequence " + key.first + "/" + key.second);
    }
    SequenceProbs sp;
    sp.subject_id = seq->subject_id;
    sp.sequence_id = seq->sequence_id;
    const auto it = std::find(names.begin(), names.end(), seq->subject_id);
    sp.truth = it == names.end() ? -1 : static_cast<int>(it - names.begin());
    sp.probs = model.predict(seq->windows);
    out.push_back(std::move(sp));
  }
  return out;
}

DurationResult evaluate_identification(std::span<const SequenceProbs> sequences, double duration_s,
                                       int n_classes) {
  DurationResult res;
  res.duration_s = duration_s;
  res.windows_per_group = windows_for_duration(duration_s);
  const std::size_t n = static_cast<std::size_t>(res.windows_per_group);
  std::vector<std::vector<int>> rankings;
  std::vector<int> truths;
  std::size_t map_hits = 0, mode_hits = 0;
  for (const auto& seq : sequences) {
    if (seq.truth < 0) continue;
    for (std::size_t start = 0; start + n <= seq.probs.size(); start += n) {
      const std::span<const fusion::Distribution> group(seq.probs.data() + start, n);
      for (const auto& p : group) {
        if (static_cast<int>(p.size()) != n_classes) {
          fail(ErrorCode::kShapeMismatch, "prediction length differs from the class count");
        }
      }
      GroupPrediction g;
      g.subject_id = seq.subject_id;
      g.sequence_id = seq.sequence_id;
      g.truth = seq.truth;
      g.first_window = static_cast<int>(start);
      g.ranking = fusion::map_ranking(group);
      g.map_label = g.ranking.front();
      std::vector<int> labels;
      for (const auto& p : group) labels.push_back(fusion::argmax(p));
      g.mode_label = fusion::mode_fuse(labels);
      map_hits += g.map_label == g.truth;
      mode_hits += g.mode_label == g.truth;
      rankings.push_back(g.ranking);
      truths.push_back(g.truth);
      res.predictions.push_back(std::move(g));
    }
  }
  res.groups = res.predictions.size();
  if (res.groups == 0) {
    fail(ErrorCode::kValidation, "no test sequence is long enough for " + std::to_string(duration_s) + " s groups");
  }
  res.map_accuracy = static_cast<double>(map_hits) / static_cast<double>(res.groups);
  res.mode_accuracy = static_cast<double>(mode_hits) / static_cast<double>(res.groups);
  res.cmc = fusion::cmc(rankings, truths);
  return res;
}

TrainingSet identification_training_set(const FeatureSet& features, const ingest::SplitPlan& plan) {
  TrainingSet ts;
  for (const auto& key : plan.train) ts.class_names.push_back(key.first);
  std::sort(ts.class_names.begin(), ts.class_names.end());
  ts.class_names.erase(std::unique(ts.class_names.begin(), ts.class_names.end()), ts.class_names.end());
  for (const auto& key : plan.train) {
    const SequenceData* seq = features.find(key);
    if (seq == nullptr) fail(ErrorCode::kValidation, "no features for sequence " + key.first + "/" + key.second);
    const int label = static_cast<int>(
        std::lower_bound(ts.class_names.begin(), ts.class_names.end(), key.first) - ts.class_names.begin());
    for (const auto& w : seq->windows) {
      ts.windows.push_back(&w);
      ts.labels.push_back(label);
    }
  }
  return ts;
}

TrainingSet verification_training_set(const FeatureSet& features, const ingest::SplitPlan& plan) {
  if (plan.target_subject.empty()) fail(ErrorCode::kInvalidArgument, "verification split without a target");
  TrainingSet ts;
  ts.class_names = {"non-target", plan.target_subject};
  Classifier::WindowRefs positives;
  for (const auto& key : plan.train) {
    const SequenceData* seq = features.find(key);
    if (seq == nullptr) fail(ErrorCode::kValidation, "no features for sequence " + key.first + "/" + key.second);
    for (const auto& w : seq->windows) {
      if (key.first == plan.target_subject) {
        positives.push_back(&w);
      } else {
        ts.windows.push_back(&w);
        ts.labels.push_back(0);
      }
    }
  }
  if (positives.empty() || ts.windows.empty()) {
    fail(ErrorCode::kValidation, "verification training needs target and non-target windows");
  }
  const std::size_t negatives = ts.windows.size();
  for (std::size_t i = 0; i < std::max(negatives, positives.size()); ++i) {
    ts.windows.push_back(positives[i % positives.size()]);
    ts.labels.push_back(1);
  }
  return ts;
}

VerificationResult evaluate_verification(const Classifier& model, const FeatureSet& features,
                                         const ingest::SplitPlan& plan, double duration_s) {
  if (model.n_classes() != 2) fail(ErrorCode::kShapeMismatch, "verification needs a two-class model");
  VerificationResult res;
  res.target = plan.target_subject;
  res.duration_s = duration_s;
  const std::size_t n = static_cast<std::size_t>(windows_for_duration(duration_s));
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& key : plan.test) {
    const SequenceData* seq = features.find(key);
    if (seq == nullptr) fail(ErrorCode::kValidation, "no features for sequence " + key.first + "/" + key.second);
    const auto probs = model.predict(seq->windows);
    for (std::size_t start = 0; start + n <= probs.size(); start += n) {
      double score = 0.0;
      for (std::size_t w = start; w < start + n; ++w) {
        score += std::log(std::max(probs[w][1], fusion::kProbFloor)) -
                 std::log(std::max(probs[w][0], fusion::kProbFloor));
      }
      VerificationTrial t{seq->subject_id, seq->sequence_id, static_cast<int>(start),
                          seq->subject_id == plan.target_subject, score};
      scores.push_back(score);
      labels.push_back(t.is_target ? 1 : 0);
      res.trials.push_back(std::move(t));
    }
  }
  res.roc = fusion::roc_and_eer(scores, labels);
  return res;
}

VerificationResult evaluate_nn_verification(const fusion::Descriptors& gallery,
                                            std::span<const SequenceData* const> probes,
                                            std::span<const fusion::Descriptors> probe_descriptors,
                                            const std::string& target, double duration_s) {
  if (probes.size() != probe_descriptors.size()) {
    fail(ErrorCode::kShapeMismatch, "one descriptor block per probe sequence is required");
  }
  VerificationResult res;
  res.target = target;
  res.duration_s = duration_s;
  const Eigen::Index n = windows_for_duration(duration_s);
  std::vector<fusion::Descriptors> groups;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto& d = probe_descriptors[p];
    for (Eigen::Index start = 0; start + n <= d.rows(); start += n) {
      groups.push_back(d.middleRows(start, n));
      res.trials.push_back({probes[p]->subject_id, probes[p]->sequence_id, static_cast<int>(start),
                            probes[p]->subject_id == target, 0.0});
    }
  }
  const auto scores = fusion::nn_scores(gallery, groups);
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    res.trials[i].score = scores[i];
    labels.push_back(res.trials[i].is_target ? 1 : 0);
  }
  res.roc = fusion::roc_and_eer(scores, labels);
  return res;
}

}  // namespace egoid::experiments
