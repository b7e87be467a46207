#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "egoid/image.hpp"
#include "egoid/rational.hpp"

namespace egoid::ingest {

struct SequenceRecord {
  std::string sequence_id;
  std::string camera_id;    // "D1", "D2", "D3", ...
  std::string session_tag;  // "same-day", "week-later", ...
  Rational fps;
  std::filesystem::path frame_dir;   // resolved; empty when only a flow cache exists
  std::uint32_t frame_count = 0;
  std::filesystem::path flow_cache;  // resolved; optional
};

struct SubjectRecord {
  std::string subject_id;
  std::vector<SequenceRecord> sequences;
};

/// Listing order of subjects and of each subject's sequences is chronological.
struct DatasetManifest {
  std::vector<SubjectRecord> subjects;
  std::filesystem::path base_dir;

  const SubjectRecord* find_subject(const std::string& subject_id) const;
  const SequenceRecord* find_sequence(const std::string& subject_id,
                                      const std::string& sequence_id) const;
};

struct FrameSequence {
  std::vector<Image> frames;
  Rational fps;

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
};

using SequenceKey = std::pair<std::string, std::string>;  // (subject_id, sequence_id)

struct SplitPlan {
  std::string protocol_name;
  std::vector<SequenceKey> train;
  std::vector<SequenceKey> test;
  std::string target_subject;         // verification protocols only
  std::vector<std::string> warnings;  // e.g. subjects dropped from the test set
};

struct SplitOptions {
  std::uint64_t seed = 1;
  std::string target_subject;          // evpr-verification; empty = first subject
  std::size_t train_nontargets = 15;   // evpr-verification
};

/// Reads and validates a JSON manifest. Relative paths are resolved against
/// the manifest's directory; frame directories must exist and hold exactly
/// frame_count frame files.
DatasetManifest parse_manifest(const std::filesystem::path& path);

/// Validates an in-memory manifest (uniqueness, fps, frame directories);
/// `origin` names the source in error messages.
void validate_manifest(const DatasetManifest& manifest,
                       const std::filesystem::path& origin = "manifest");

/// Serializes with paths made relative to `path`'s directory when possible.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Frame files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

FrameSequence load_sequence(const DatasetManifest& manifest, const std::string& subject_id,
                            const std::string& sequence_id);

/// Protocols: "evpr-identification", "fpsi-identification", "evpr-verification".
SplitPlan make_split(const DatasetManifest& manifest, const std::string& protocol_name,
                     const SplitOptions& options = {});

}  // namespace egoid::ingest
