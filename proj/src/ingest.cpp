#include "egoid/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"
#include "egoid/rng.hpp"

namespace egoid::ingest {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

std::string where(const fs::path& path, const std::string& subject,
                  const std::string& sequence = {}) {
  std::string s = path.string() + ": subject '" + subject + "'";
  if (!sequence.empty()) s += " sequence '" + sequence + "'";
  return s;
}

std::string get_string(const json& obj, const char* key, const std::string& context,
                       bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) fail(ErrorCode::kValidation, context + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string()) {
    fail(ErrorCode::kValidation, context + ": field '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

Rational get_fps(const json& obj, const std::string& context) {
  auto it = obj.find("fps");
  if (it == obj.end()) fail(ErrorCode::kValidation, context + ": missing field 'fps'");
  Rational fps{0, 1};
  bool ok = false;
  if (it->is_number_unsigned() || (it->is_number_integer() && it->get<long long>() > 0)) {
    fps = Rational{static_cast<std::uint32_t>(it->get<long long>()), 1};
    ok = fps.valid();
  } else if (it->is_string()) {
    ok = parse_rational(it->get<std::string>(), fps);
  }
  if (!ok) fail(ErrorCode::kValidation, context + ": fps must be a positive rational");
  return fps;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  if (base.empty()) return p.string();
  std::error_code ec;
  const fs::path rel = fs::relative(p, base, ec);
  return ec || rel.empty() ? p.string() : rel.generic_string();
}

bool has_camera(const SubjectRecord& s, const std::string& camera) {
  return std::any_of(s.sequences.begin(), s.sequences.end(),
                     [&](const SequenceRecord& q) { return q.camera_id == camera; });
}

void add_camera(const SubjectRecord& s, const std::string& camera,
                std::vector<SequenceKey>& out) {
  for (const auto& q : s.sequences) {
    if (q.camera_id == camera) out.emplace_back(s.subject_id, q.sequence_id);
  }
}

}  // namespace

const SubjectRecord* DatasetManifest::find_subject(const std::string& subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return &s;
  }
  return nullptr;
}

const SequenceRecord* DatasetManifest::find_sequence(const std::string& subject_id,
                                                     const std::string& sequence_id) const {
  const SubjectRecord* s = find_subject(subject_id);
  if (s == nullptr) return nullptr;
  for (const auto& q : s->sequences) {
    if (q.sequence_id == sequence_id) return &q;
  }
  return nullptr;
}

std::vector<fs::path> list_frame_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_frame_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

void validate_manifest(const DatasetManifest& manifest, const fs::path& origin) {
  std::set<std::string> subject_ids;
  for (const auto& subject : manifest.subjects) {
    if (subject.subject_id.empty()) {
      fail(ErrorCode::kValidation, origin.string() + ": empty subject_id");
    }
    if (!subject_ids.insert(subject.subject_id).second) {
      fail(ErrorCode::kValidation,
           origin.string() + ": duplicate subject '" + subject.subject_id + "'");
    }
    std::set<std::string> sequence_ids;
    for (const auto& seq : subject.sequences) {
      const std::string ctx = where(origin, subject.subject_id, seq.sequence_id);
      if (!sequence_ids.insert(seq.sequence_id).second) {
        fail(ErrorCode::kValidation, where(origin, subject.subject_id) +
                                         ": duplicate sequence '" + seq.sequence_id + "'");
      }
      if (!seq.fps.valid()) fail(ErrorCode::kValidation, ctx + ": fps must be positive");
      if (seq.frame_dir.empty() && seq.flow_cache.empty()) {
        fail(ErrorCode::kValidation, ctx + ": needs frame_dir or flow_cache");
      }
      if (!seq.frame_dir.empty()) {
        if (!fs::is_directory(seq.frame_dir)) {
          fail(ErrorCode::kIo, ctx + ": frame_dir does not exist: " + seq.frame_dir.string());
        }
        const std::size_t found = list_frame_files(seq.frame_dir).size();
        if (found != seq.frame_count) {
          fail(ErrorCode::kValidation, ctx + ": frame_count " + std::to_string(seq.frame_count) +
                                           " but " + std::to_string(found) + " frame files in " +
                                           seq.frame_dir.string());
        }
      } else if (!fs::is_regular_file(seq.flow_cache)) {
        fail(ErrorCode::kIo, ctx + ": flow_cache does not exist: " + seq.flow_cache.string());
      }
    }
  }
}

DatasetManifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, path.string() + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("subjects") || !doc["subjects"].is_array()) {
    fail(ErrorCode::kValidation, path.string() + ": expected an object with a 'subjects' array");
  }
  if (doc.contains("version") &&
      (!doc["version"].is_number_integer() || doc["version"].get<int>() != kManifestVersion)) {
    fail(ErrorCode::kVersionMismatch, path.string() + ": unsupported manifest version");
  }

  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  for (const auto& subj : doc["subjects"]) {
    if (!subj.is_object()) fail(ErrorCode::kValidation, path.string() + ": subject must be an object");
    SubjectRecord record;
    record.subject_id = get_string(subj, "subject_id", path.string());
    const std::string sctx = where(path, record.subject_id);
    if (!subj.contains("sequences") || !subj["sequences"].is_array()) {
      fail(ErrorCode::kValidation, sctx + ": missing 'sequences' array");
    }
    for (const auto& sq : subj["sequences"]) {
      SequenceRecord seq;
      seq.sequence_id = get_string(sq, "sequence_id", sctx);
      const std::string ctx = where(path, record.subject_id, seq.sequence_id);
      seq.camera_id = get_string(sq, "camera_id", ctx);
      seq.session_tag = get_string(sq, "session_tag", ctx, false);
      seq.fps = get_fps(sq, ctx);
      seq.frame_dir = resolve(manifest.base_dir, get_string(sq, "frame_dir", ctx, false));
      seq.flow_cache = resolve(manifest.base_dir, get_string(sq, "flow_cache", ctx, false));
      auto fc = sq.find("frame_count");
      if (fc == sq.end() || !fc->is_number_integer() || fc->get<long long>() < 0) {
        fail(ErrorCode::kValidation, ctx + ": frame_count must be a non-negative integer");
      }
      seq.frame_count = static_cast<std::uint32_t>(fc->get<long long>());
      record.sequences.push_back(std::move(seq));
    }
    manifest.subjects.push_back(std::move(record));
  }
  validate_manifest(manifest, path);
  return manifest;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = path.parent_path().empty() ? fs::current_path() : fs::absolute(path.parent_path());
  json doc;
  doc["version"] = kManifestVersion;
  doc["subjects"] = json::array();
  for (const auto& subject : manifest.subjects) {
    json s;
    s["subject_id"] = subject.subject_id;
    s["sequences"] = json::array();
    for (const auto& seq : subject.sequences) {
      json q;
      q["sequence_id"] = seq.sequence_id;
      q["camera_id"] = seq.camera_id;
      q["session_tag"] = seq.session_tag;
      q["fps"] = seq.fps.str();
      q["frame_dir"] = relative_to(seq.frame_dir.empty() ? seq.frame_dir : fs::absolute(seq.frame_dir), base);
      q["frame_count"] = seq.frame_count;
      if (!seq.flow_cache.empty()) {
        q["flow_cache"] = relative_to(fs::absolute(seq.flow_cache), base);
      }
      s["sequences"].push_back(std::move(q));
    }
    doc["subjects"].push_back(std::move(s));
  }
  write_text_atomic(path, doc.dump(2) + "\n");
}

FrameSequence load_sequence(const DatasetManifest& manifest, const std::string& subject_id,
                            const std::string& sequence_id) {
  const SequenceRecord* seq = manifest.find_sequence(subject_id, sequence_id);
  if (seq == nullptr) {
    fail(ErrorCode::kInvalidArgument,
         "unknown sequence '" + sequence_id + "' of subject '" + subject_id + "'");
  }
  if (seq->frame_dir.empty()) {
    fail(ErrorCode::kInvalidArgument, "sequence '" + sequence_id + "' of subject '" + subject_id +
                                          "' has no frame_dir");
  }
  FrameSequence out;
  out.fps = seq->fps;
  for (const auto& file : list_frame_files(seq->frame_dir)) {
    Image frame = read_gray_image(file);
    if (!out.frames.empty() &&
        (frame.width != out.width() || frame.height != out.height())) {
      fail(ErrorCode::kShapeMismatch, "frame " + file.string() + " is " +
                                          std::to_string(frame.width) + "x" +
                                          std::to_string(frame.height) + ", expected " +
                                          std::to_string(out.width()) + "x" +
                                          std::to_string(out.height()));
    }
    out.frames.push_back(std::move(frame));
  }
  if (out.frames.size() < 2) {
    fail(ErrorCode::kValidation, "sequence too short: '" + sequence_id + "' of subject '" +
                                     subject_id + "' has " + std::to_string(out.frames.size()) +
                                     " frame(s), need at least 2");
  }
  return out;
}

SplitPlan make_split(const DatasetManifest& manifest, const std::string& protocol_name,
                     const SplitOptions& options) {
  SplitPlan plan;
  plan.protocol_name = protocol_name;

  if (protocol_name == "fpsi-identification") {
    for (const auto& s : manifest.subjects) {
      const std::size_t n = s.sequences.size();
      if (n == 0) continue;
      std::size_t n_train = (8 * n + 5) / 10;
      n_train = std::clamp<std::size_t>(n_train, 1, n > 1 ? n - 1 : 1);
      for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? plan.train : plan.test).emplace_back(s.subject_id, s.sequences[i].sequence_id);
      }
      if (n_train == n) {
        plan.warnings.push_back("subject '" + s.subject_id +
                                "' has a single sequence; excluded from test");
      }
    }
  } else if (protocol_name == "evpr-identification") {
    for (const auto& s : manifest.subjects) {
      if (!has_camera(s, "D1")) {
        plan.warnings.push_back("subject '" + s.subject_id + "' has no D1 sequence; excluded");
        continue;
      }
      add_camera(s, "D1", plan.train);
      const std::size_t before = plan.test.size();
      add_camera(s, "D2", plan.test);
      add_camera(s, "D3", plan.test);
      if (plan.test.size() == before) {
        plan.warnings.push_back("subject '" + s.subject_id +
                                "' has only D1 data; excluded from test");
      }
    }
    if (plan.train.empty()) {
      fail(ErrorCode::kValidation, "protocol evpr-identification needs camera_id D1 sequences");
    }
  } else if (protocol_name == "evpr-verification") {
    std::vector<std::string> eligible;
    for (const auto& s : manifest.subjects) {
      if (has_camera(s, "D1") && has_camera(s, "D2")) eligible.push_back(s.subject_id);
    }
    if (eligible.empty()) {
      fail(ErrorCode::kValidation, "protocol evpr-verification needs subjects with D1 and D2");
    }
    const std::string target = options.target_subject.empty() ? eligible.front() : options.target_subject;
    if (std::find(eligible.begin(), eligible.end(), target) == eligible.end()) {
      fail(ErrorCode::kValidation, "target subject '" + target + "' lacks D1/D2 sequences");
    }
    std::vector<std::string> others;
    for (const auto& id : eligible) {
      if (id != target) others.push_back(id);
    }
    if (others.size() <= options.train_nontargets) {
      fail(ErrorCode::kValidation,
           "protocol evpr-verification needs more than " + std::to_string(options.train_nontargets) +
               " non-target subjects, manifest has " + std::to_string(others.size()));
    }
    Rng rng(derive_seed(options.seed, fnv1a64(target)));
    rng.shuffle(std::span(others));
    std::vector<std::string> train_ids(others.begin(), others.begin() + options.train_nontargets);
    std::vector<std::string> test_ids(others.begin() + options.train_nontargets, others.end());
    auto in = [](const std::vector<std::string>& v, const std::string& id) {
      return std::find(v.begin(), v.end(), id) != v.end();
    };
    plan.target_subject = target;
    for (const auto& s : manifest.subjects) {
      if (s.subject_id == target) {
        add_camera(s, "D1", plan.train);
        add_camera(s, "D2", plan.test);
      } else if (in(train_ids, s.subject_id)) {
        add_camera(s, "D1", plan.train);
      } else if (in(test_ids, s.subject_id)) {
        add_camera(s, "D2", plan.test);
      }
    }
  } else {
    fail(ErrorCode::kInvalidArgument, "unsupported protocol '" + protocol_name + "'");
  }
  return plan;
}

}  // namespace egoid::ingest
