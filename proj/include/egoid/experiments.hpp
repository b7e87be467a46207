#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egoid/cnn.hpp"
#include "egoid/flowgrid.hpp"
#include "egoid/fusion_eval.hpp"
#include "egoid/ingest.hpp"
#include "egoid/lpc.hpp"
#include "egoid/svm.hpp"
#include "egoid/synthgait.hpp"

namespace egoid::experiments {

enum class Backend { kLpcSvm, kRawSvm, kCnn };

/// "lpc-svm", "raw-svm" or "cnn"; throws kInvalidArgument otherwise.
Backend parse_backend(const std::string& name);
std::string backend_name(Backend backend);

struct SequenceData {
  std::string subject_id;
  std::string sequence_id;
  std::string camera_id;
  std::string session_tag;
  std::vector<flowgrid::FeatureWindow> windows;
};

struct FeatureSet {
  std::vector<SequenceData> sequences;
  bool stabilized = false;

  const SequenceData* find(const ingest::SequenceKey& key) const;
  /// Sorted, unique subject ids.
  std::vector<std::string> subject_ids() const;
  /// In-memory manifest (no frame data) used to materialize split plans.
  ingest::DatasetManifest as_manifest() const;
};

/// 4 s windows with 2 s stride, optionally mean-subtracted per frame.
std::vector<flowgrid::FeatureWindow> make_windows(std::span<const flowgrid::FlowField> flows,
                                                  Rational fps, bool stabilize,
                                                  const std::string& subject_id);

FeatureSet features_from_synthetic(const synth::SyntheticDataset& dataset, bool stabilize);

/// Windows every sequence of a manifest from its flow cache; throws
/// kValidation naming the sequence when a cache is missing.
FeatureSet features_from_manifest(const ingest::DatasetManifest& manifest, bool stabilize);

/// Feature file ("EGFT"): sequence metadata plus f32 window data.
inline constexpr std::uint16_t kFeatureFileVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureSet& features);
FeatureSet decode_features(std::span<const std::uint8_t> bytes, const std::string& source);
void save_features(const std::string& path, const FeatureSet& features);
FeatureSet load_features(const std::string& path);

struct BackendConfig {
  svm::SvmConfig svm_lpc;                 // C = 1
  svm::SvmConfig svm_raw = raw_default();  // C = 10
  cnn::CnnConfig cnn;
  lpc::LpcOptions lpc;
  std::uint64_t seed = 1;

  static svm::SvmConfig raw_default() {
    svm::SvmConfig c;
    c.C = 10.0;
    return c;
  }
};

/// Window-level classifier behind one interface for every back end.
class Classifier {
 public:
  using WindowRefs = std::vector<const flowgrid::FeatureWindow*>;

  static Classifier train(Backend backend, const WindowRefs& windows, std::span<const int> labels,
                          std::vector<std::string> class_names, const BackendConfig& cfg);

  Backend backend() const { return backend_; }
  int n_classes() const { return static_cast<int>(class_names_.size()); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::optional<svm::SvmEnsemble>& svm_model() const { return svm_; }
  const std::optional<cnn::CnnModel>& cnn_model() const { return cnn_; }

  /// One class distribution per window.
  std::vector<fusion::Distribution> predict(std::span<const flowgrid::FeatureWindow> windows) const;
  /// Descriptor rows: normalized LPC / raw flow for the SVM back ends,
  /// hidden-layer activations for the network.
  fusion::Descriptors describe(std::span<const flowgrid::FeatureWindow> windows) const;

  void save(const std::string& path) const;
  static Classifier load(const std::string& path);

 private:
  Backend backend_ = Backend::kLpcSvm;
  std::vector<std::string> class_names_;
  lpc::LpcOptions lpc_;
  std::optional<svm::SvmEnsemble> svm_;
  std::optional<cnn::CnnModel> cnn_;
};

/// Un-normalized SVM feature vector of a window.
std::vector<double> svm_features(Backend backend, const flowgrid::FeatureWindow& w,
                                 const lpc::LpcOptions& lpc);
/// "lpc k=9 center=1 taper=0" style tags stored in SVM models.
std::string lpc_feature_kind(const lpc::LpcOptions& options);
lpc::LpcOptions parse_lpc_feature_kind(const std::string& kind);

/// Windows per evaluation group for a video length: (L - 4) / 2 + 1.
int windows_for_duration(double duration_s);

struct SequenceProbs {
  std::string subject_id;
  std::string sequence_id;
  int truth = -1;  // class index, -1 when the subject is not enrolled
  std::vector<fusion::Distribution> probs;
};

struct GroupPrediction {
  std::string subject_id;
  std::string sequence_id;
  int truth = -1;
  int first_window = 0;
  int map_label = -1;
  int mode_label = -1;
  std::vector<int> ranking;  // by fused score
};

struct DurationResult {
  double duration_s = 4.0;
  int windows_per_group = 1;
  std::size_t groups = 0;
  double map_accuracy = 0.0;
  double mode_accuracy = 0.0;
  fusion::CmcCurve cmc;
  std::vector<GroupPrediction> predictions;
};

std::vector<SequenceProbs> predict_sequences(const Classifier& model, const FeatureSet& features,
                                             std::span<const ingest::SequenceKey> keys);

/// Non-overlapping groups of consecutive windows within each sequence; a
/// trailing partial group is dropped. Unenrolled subjects are skipped.
DurationResult evaluate_identification(std::span<const SequenceProbs> sequences, double duration_s,
                                       int n_classes);

/// Training windows and labels of a split; labels index `class_names`.
struct TrainingSet {
  Classifier::WindowRefs windows;
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

TrainingSet identification_training_set(const FeatureSet& features, const ingest::SplitPlan& plan);
/// Target windows (label 1) are replicated cyclically until they match the
/// non-target windows (label 0) in number.
TrainingSet verification_training_set(const FeatureSet& features, const ingest::SplitPlan& plan);

struct VerificationTrial {
  std::string subject_id;
  std::string sequence_id;
  int first_window = 0;
  bool is_target = false;
  double score = 0.0;
};

struct VerificationResult {
  std::string target;
  double duration_s = 4.0;
  std::vector<VerificationTrial> trials;
  fusion::RocCurve roc;
};

/// Score of a group: summed log-odds of the target class (index 1).
VerificationResult evaluate_verification(const Classifier& model, const FeatureSet& features,
                                         const ingest::SplitPlan& plan, double duration_s);

/// Nearest-neighbour verification: gallery = target training windows, probes
/// = groups of the test sequences, all described by `describe`.
VerificationResult evaluate_nn_verification(const fusion::Descriptors& gallery,
                                            std::span<const SequenceData* const> probes,
                                            std::span<const fusion::Descriptors> probe_descriptors,
                                            const std::string& target, double duration_s);

}  // namespace egoid::experiments
