// egoid: command-line front end for the egocentric gait identification pipeline.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "egoid/binary_io.hpp"
#include "egoid/cnn.hpp"
#include "egoid/error.hpp"
#include "egoid/experiments.hpp"
#include "egoid/image.hpp"
#include "egoid/ingest.hpp"
#include "egoid/rng.hpp"
#include "egoid/synthgait.hpp"
#include "run_config.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace egoid;
using namespace egoid::cli;
using namespace egoid::experiments;

namespace {

constexpr int kReportVersion = 1;

enum ExitCode : int { kOk = 0, kOther = 1, kUsage = 2, kInput = 3, kVersion = 4, kShape = 5 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return kUsage;
    case ErrorCode::kIo:
    case ErrorCode::kValidation:
    case ErrorCode::kFormat: return kInput;
    case ErrorCode::kVersionMismatch: return kVersion;
    case ErrorCode::kShapeMismatch: return kShape;
  }
  return kOther;
}

std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file_bytes(path))); }

void write_json(const std::string& path, const json& j) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  write_text_atomic(path, j.dump(2) + "\n");
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  write_text_atomic(path, text);
}

json report_header(const std::string& command, const RunConfig& cfg) {
  const json c = to_json(cfg);
  return {{"command", command}, {"report_version", kReportVersion}, {"config", c}, {"config_hash", config_hash(c)}};
}

// Options shared by every command.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed_set) cfg.seed = seed;
    cfg.propagate_seed();
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&common](std::uint64_t s) { common.seed = s, common.seed_set = true; },
      "Master seed (overrides the config)");
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  std::string out;
  int subjects = -1;
  std::uint64_t master_seed = 0;
  bool master_seed_set = false;
  std::vector<std::string> sessions;
  double noise = -1, shake = -1;
  std::string render;
  double render_seconds = 4.0;
};

synth::SessionSpec parse_session(const std::string& text) {
  // CAMERA:TAG:SECONDS
  std::vector<std::string> parts;
  std::stringstream in(text);
  for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
  if (parts.size() != 3) fail(ErrorCode::kInvalidArgument, "--session expects CAMERA:TAG:SECONDS, got '" + text + "'");
  synth::SessionSpec s{parts[0], parts[1], 0.0};
  try {
    s.duration_s = std::stod(parts[2]);
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "--session duration is not a number: '" + parts[2] + "'");
  }
  return s;
}

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = a.common.resolve();
  auto& pc = cfg.synth;
  if (a.subjects > 0) pc.n_subjects = a.subjects;
  if (a.master_seed_set) pc.master_seed = a.master_seed;
  if (!a.sessions.empty()) {
    pc.sessions.clear();
    for (const auto& s : a.sessions) pc.sessions.push_back(parse_session(s));
  }
  if (a.noise >= 0) pc.noise_sigma = a.noise;
  if (a.shake >= 0) pc.shake_sigma = a.shake;
  pc.grid = cfg.flowgrid;

  const auto dataset = synth::gen_population(pc);
  auto manifest = synth::write_dataset(dataset, a.out);

  if (!a.render.empty()) {
    // Frames for the first render_seconds of every sequence; the manifest then
    // points at frames only so that extract computes the flow.
    int w = 0, h = 0;
    if (std::sscanf(a.render.c_str(), "%dx%d", &w, &h) != 2 || w <= 0 || h <= 0) {
      fail(ErrorCode::kInvalidArgument, "--render expects WIDTHxHEIGHT, got '" + a.render + "'");
    }
    const auto n_flows = static_cast<std::size_t>(std::llround(a.render_seconds * pc.fps.value()));
    for (std::size_t si = 0; si < dataset.subjects.size(); ++si) {
      const auto& subject = dataset.subjects[si];
      for (std::size_t qi = 0; qi < subject.sequences.size(); ++qi) {
        const auto& seq = subject.sequences[qi];
        const std::size_t n = std::min(n_flows, seq.flows.size());
        const auto frames = synth::render_frames(std::span(seq.flows).first(n), w, h,
                                                 derive_seed(seq.session_seed, 11));
        const fs::path dir = fs::path(a.out) / "frames" / (subject.subject_id + "_" + seq.sequence_id);
        fs::create_directories(dir);
        for (std::size_t f = 0; f < frames.size(); ++f) {
          char name[32];
          std::snprintf(name, sizeof name, "%06zu.png", f);
          write_gray_png(dir / name, frames[f]);
        }
        auto& rec = manifest.subjects[si].sequences[qi];
        rec.frame_dir = dir;
        rec.frame_count = static_cast<std::uint32_t>(frames.size());
        fs::remove(rec.flow_cache);
        rec.flow_cache.clear();
      }
    }
    fs::remove_all(fs::path(a.out) / "flows");
    ingest::write_manifest(fs::path(a.out) / "manifest.json", manifest);
  }

  json profiles = json::array();
  for (const auto& s : dataset.subjects) {
    profiles.push_back({{"subject", s.subject_id},
                        {"step_freq", s.profile.step_freq},
                        {"rotation_amp", s.profile.rotation_amp},
                        {"bob", s.profile.harmonic_amps[0][0]},
                        {"sway", s.profile.harmonic_amps[0][1]},
                        {"seed", s.profile.seed}});
  }
  json report = report_header("synth", cfg);
  report["profiles"] = profiles;
  write_json((fs::path(a.out) / "synth.json").string(), report);
  std::cerr << "synth: " << dataset.subjects.size() << " subjects x " << pc.sessions.size() << " sessions -> "
            << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  Common common;
  std::string manifest;
  std::string out;
  int jobs = 1;
};

// Content hash of a sequence's frames plus every parameter that affects its flow.
std::string extraction_key(const ingest::SequenceRecord& rec, const flowgrid::FlowGridSpec& spec) {
  std::ostringstream params;
  params << "egfl" << flowgrid::kFlowCacheVersion << ' ' << spec.m_x << ' ' << spec.m_y << ' ' << spec.pyramid_levels
         << ' ' << spec.lk_window << ' ' << spec.lk_iterations << ' ' << spec.convergence_px << ' '
         << spec.min_eig_threshold << ' ' << rec.fps.str() << ' ' << flowgrid::kTargetFps;
  std::uint64_t h = fnv1a64(params.str());
  for (const auto& file : ingest::list_frame_files(rec.frame_dir)) {
    h = fnv1a64(file.filename().string(), h);
    h = fnv1a64(read_file_bytes(file), h);
  }
  return hex64(h);
}

int cmd_extract(const ExtractArgs& a) {
  const RunConfig cfg = a.common.resolve();
  cfg.flowgrid.validate();
  auto manifest = ingest::parse_manifest(a.manifest);
  const fs::path out(a.out);
  fs::create_directories(out / "flows");

  struct Job {
    std::size_t subject, sequence;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < manifest.subjects.size(); ++s) {
    for (std::size_t q = 0; q < manifest.subjects[s].sequences.size(); ++q) {
      const auto& rec = manifest.subjects[s].sequences[q];
      if (rec.frame_dir.empty()) {
        fail(ErrorCode::kValidation,
             manifest.subjects[s].subject_id + "/" + rec.sequence_id + ": no frame_dir to extract from");
      }
      jobs.push_back({s, q});
    }
  }

  std::vector<std::string> errors(jobs.size());
  std::vector<ErrorCode> codes(jobs.size(), ErrorCode::kIo);
  std::vector<char> failed(jobs.size(), 0), computed(jobs.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& subject = manifest.subjects[jobs[i].subject];
      auto& rec = manifest.subjects[jobs[i].subject].sequences[jobs[i].sequence];
      const std::string name = subject.subject_id + "/" + rec.sequence_id;
      const fs::path cache = out / "flows" / (subject.subject_id + "_" + rec.sequence_id + ".egfl");
      const fs::path key_file = cache.string() + ".key";
      try {
        const std::string key = extraction_key(rec, cfg.flowgrid);
        bool fresh = false;
        if (fs::exists(cache) && fs::exists(key_file)) {
          const auto stored = read_file_bytes(key_file);
          fresh = std::string(stored.begin(), stored.end()) == key + "\n";
        }
        if (!fresh) {
          auto seq = ingest::load_sequence(manifest, subject.subject_id, rec.sequence_id);
          Rational fps = seq.fps;
          if (std::abs(fps.value() - flowgrid::kTargetFps) > 1e-9) {
            std::vector<Image> kept;
            for (auto idx : flowgrid::resample_indices(seq.frames.size(), seq.fps)) kept.push_back(seq.frames[idx]);
            seq.frames = std::move(kept);
            fps = Rational{static_cast<std::uint32_t>(flowgrid::kTargetFps), 1};
          }
          flowgrid::FlowCache fc;
          fc.fps = fps;
          fc.m_x = cfg.flowgrid.m_x;
          fc.m_y = cfg.flowgrid.m_y;
          fc.flows = flowgrid::compute_sequence_flow(seq.frames, cfg.flowgrid);
          flowgrid::write_flow_cache(cache.string(), fc);
          write_text_atomic(key_file, key + "\n");
          computed[i] = 1;
        }
        rec.flow_cache = cache;
      } catch (const Error& e) {
        failed[i] = 1;
        codes[i] = e.code();
        errors[i] = name + ": " + e.what();
      } catch (const std::exception& e) {
        failed[i] = 1;
        errors[i] = name + ": " + e.what();
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(a.jobs, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (failed[i]) fail(codes[i], errors[i]);
  }
  ingest::write_manifest(out / "manifest.json", manifest);
  const auto n_computed = std::count(computed.begin(), computed.end(), 1);
  std::cerr << "extract: " << n_computed << " computed, " << jobs.size() - n_computed << " up to date\n";
  return kOk;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  Common common;
  std::string manifest;
  std::string out;
  bool stabilize = false;
  std::string csv;
  std::string csv_kind = "lpc";
};

int cmd_featurize(const FeaturizeArgs& a) {
  const RunConfig cfg = a.common.resolve();
  const auto manifest = ingest::parse_manifest(a.manifest);
  const FeatureSet features = features_from_manifest(manifest, a.stabilize);
  save_features(a.out, features);
  if (!a.csv.empty()) {
    if (a.csv_kind != "lpc" && a.csv_kind != "flow") {
      fail(ErrorCode::kInvalidArgument, "--csv-kind must be lpc or flow");
    }
    std::ostringstream o;
    o.precision(9);
    o << "subject,sequence,window,t_start";
    bool header_done = false;
    for (const auto& s : features.sequences) {
      for (std::size_t k = 0; k < s.windows.size(); ++k) {
        const auto& w = s.windows[k];
        const std::vector<double> row = a.csv_kind == "lpc" ? lpc::lpc_descriptor(w, cfg.backends.lpc) : w.data;
        if (!header_done) {
          for (std::size_t i = 0; i < row.size(); ++i) o << ",f" << i;
          o << "\n";
          header_done = true;
        }
        o << s.subject_id << ',' << s.sequence_id << ',' << k << ',' << w.t_start;
        for (double v : row) o << ',' << v;
        o << "\n";
      }
    }
    if (!header_done) o << "\n";
    write_text(a.csv, o.str());
  }
  std::size_t n_windows = 0;
  for (const auto& s : features.sequences) n_windows += s.windows.size();
  std::cerr << "featurize: " << features.sequences.size() << " sequences, " << n_windows << " windows"
            << (a.stabilize ? " (stabilized)" : "") << " -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct SplitArgs {
  std::string protocol;
  std::string target;
  std::size_t train_nontargets = 0;
};

void add_split(CLI::App* cmd, SplitArgs& s) {
  cmd->add_option("--protocol", s.protocol,
                  "evpr-identification | fpsi-identification | evpr-verification (default from config)");
  cmd->add_option("--target", s.target, "Verification target subject");
  cmd->add_option("--train-nontargets", s.train_nontargets, "Non-target subjects in verification training");
}

ingest::SplitPlan resolve_split(RunConfig& cfg, const SplitArgs& s, const FeatureSet& features) {
  if (!s.protocol.empty()) cfg.protocol = s.protocol;
  if (!s.target.empty()) cfg.target = s.target;
  if (s.train_nontargets > 0) cfg.train_nontargets = s.train_nontargets;
  ingest::SplitOptions opt;
  opt.seed = cfg.seed;
  opt.target_subject = cfg.target;
  opt.train_nontargets = cfg.train_nontargets;
  return ingest::make_split(features.as_manifest(), cfg.protocol, opt);
}

struct TrainArgs {
  Common common;
  SplitArgs split;
  std::string features;
  std::string backend;
  std::string out;
  int epochs = -1;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.common.resolve();
  const Backend backend = parse_backend(a.backend);
  if (a.epochs > 0) cfg.backends.cnn.epochs = a.epochs;
  const FeatureSet features = load_features(a.features);
  const auto plan = resolve_split(cfg, a.split, features);
  for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";
  const bool verification = cfg.protocol == "evpr-verification";
  const TrainingSet ts =
      verification ? verification_training_set(features, plan) : identification_training_set(features, plan);
  const Classifier model = Classifier::train(backend, ts.windows, ts.labels, ts.class_names, cfg.backends);
  if (const auto dir = fs::path(a.out).parent_path(); !dir.empty()) fs::create_directories(dir);
  model.save(a.out);
  std::cerr << "train: " << backend_name(backend) << " on " << ts.windows.size() << " windows, "
            << model.n_classes() << " classes -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- identify

struct IdentifyArgs {
  Common common;
  SplitArgs split;
  std::string model;
  std::string features;
  std::string fuse = "map";
  std::vector<double> durations;
  std::string out;
  std::string csv;
};

int cmd_identify(const IdentifyArgs& a) {
  RunConfig cfg = a.common.resolve();
  if (a.fuse != "map" && a.fuse != "mode") fail(ErrorCode::kInvalidArgument, "--fuse must be map or mode");
  if (!a.durations.empty()) cfg.durations = a.durations;
  const Classifier model = Classifier::load(a.model);
  const FeatureSet features = load_features(a.features);
  const auto plan = resolve_split(cfg, a.split, features);
  if (cfg.protocol == "evpr-verification") {
    fail(ErrorCode::kInvalidArgument, "identify needs an identification protocol");
  }
  const auto probs = predict_sequences(model, features, plan.test);

  json report = report_header("identify", cfg);
  report["inputs"] = {{"model", a.model},
                      {"model_hash", file_hash(a.model)},
                      {"features", a.features},
                      {"features_hash", file_hash(a.features)}};
  report["backend"] = backend_name(model.backend());
  report["protocol"] = cfg.protocol;
  report["fuse"] = a.fuse;
  report["stabilized"] = features.stabilized;
  report["classes"] = model.class_names();
  report["warnings"] = plan.warnings;
  json results = json::array();
  std::ostringstream csv;
  csv << "duration_s,subject,sequence,first_window,truth,map,mode\n";
  for (double d : cfg.durations) {
    const auto r = evaluate_identification(probs, d, model.n_classes());
    results.push_back({{"duration_s", d},
                       {"windows_per_group", r.windows_per_group},
                       {"groups", r.groups},
                       {"accuracy", a.fuse == "map" ? r.map_accuracy : r.mode_accuracy},
                       {"map_accuracy", r.map_accuracy},
                       {"mode_accuracy", r.mode_accuracy},
                       {"cmc", r.cmc.top_k}});
    const auto& names = model.class_names();
    for (const auto& p : r.predictions) {
      csv << d << ',' << p.subject_id << ',' << p.sequence_id << ',' << p.first_window << ','
          << names[static_cast<std::size_t>(p.truth)] << ',' << names[static_cast<std::size_t>(p.map_label)] << ','
          << names[static_cast<std::size_t>(p.mode_label)] << "\n";
    }
    std::cerr << "identify: " << d << " s (" << r.windows_per_group << " windows, " << r.groups
              << " groups): " << a.fuse << " accuracy "
              << (a.fuse == "map" ? r.map_accuracy : r.mode_accuracy) << "\n";
  }
  report["results"] = results;
  write_json(a.out, report);
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  Common common;
  SplitArgs split;
  std::string model;
  std::string features;
  bool nn = false;
  std::vector<double> durations;
  std::string out;
  std::string csv;
};

json roc_json(const fusion::RocCurve& roc) {
  json pts = json::array();
  for (const auto& p : roc.points) pts.push_back({p.far, p.tpr});
  return pts;
}

int cmd_verify(const VerifyArgs& a) {
  RunConfig cfg = a.common.resolve();
  if (!a.durations.empty()) cfg.durations = a.durations;
  SplitArgs split = a.split;
  if (split.protocol.empty()) split.protocol = "evpr-verification";
  const Classifier model = Classifier::load(a.model);
  const FeatureSet features = load_features(a.features);
  const auto plan = resolve_split(cfg, split, features);
  if (cfg.protocol != "evpr-verification") fail(ErrorCode::kInvalidArgument, "verify needs the evpr-verification protocol");

  std::vector<VerificationResult> results;
  std::vector<std::string> warnings = plan.warnings;
  if (a.nn) {
    // Gallery: the target's training windows described by the model.
    std::vector<flowgrid::FeatureWindow> gallery_windows;
    for (const auto& key : plan.train) {
      if (key.first != plan.target_subject) continue;
      const auto* seq = features.find(key);
      if (seq == nullptr) fail(ErrorCode::kValidation, "no features for " + key.first + "/" + key.second);
      gallery_windows.insert(gallery_windows.end(), seq->windows.begin(), seq->windows.end());
    }
    const auto& names = model.class_names();
    if (std::find(names.begin(), names.end(), plan.target_subject) != names.end()) {
      warnings.push_back("target '" + plan.target_subject + "' was seen when training the descriptor model");
    }
    const auto gallery = model.describe(gallery_windows);
    std::vector<const SequenceData*> probes;
    std::vector<fusion::Descriptors> probe_desc;
    for (const auto& key : plan.test) {
      const auto* seq = features.find(key);
      if (seq == nullptr) fail(ErrorCode::kValidation, "no features for " + key.first + "/" + key.second);
      probes.push_back(seq);
      probe_desc.push_back(model.describe(seq->windows));
    }
    for (double d : cfg.durations) {
      results.push_back(evaluate_nn_verification(gallery, probes, probe_desc, plan.target_subject, d));
    }
  } else {
    for (double d : cfg.durations) results.push_back(evaluate_verification(model, features, plan, d));
  }

  json report = report_header("verify", cfg);
  report["inputs"] = {{"model", a.model},
                      {"model_hash", file_hash(a.model)},
                      {"features", a.features},
                      {"features_hash", file_hash(a.features)}};
  report["backend"] = backend_name(model.backend());
  report["mode"] = a.nn ? "nn" : "trained";
  report["target"] = plan.target_subject;
  report["stabilized"] = features.stabilized;
  report["warnings"] = warnings;
  json rs = json::array();
  std::ostringstream csv;
  csv.precision(10);
  csv << "duration_s,subject,sequence,first_window,is_target,score\n";
  for (const auto& r : results) {
    std::size_t n_target = 0;
    for (const auto& t : r.trials) n_target += t.is_target ? 1 : 0;
    rs.push_back({{"duration_s", r.duration_s},
                  {"eer", r.roc.eer},
                  {"eer_threshold", r.roc.eer_threshold},
                  {"target_trials", n_target},
                  {"nontarget_trials", r.trials.size() - n_target},
                  {"roc", roc_json(r.roc)}});
    for (const auto& t : r.trials) {
      csv << r.duration_s << ',' << t.subject_id << ',' << t.sequence_id << ',' << t.first_window << ','
          << (t.is_target ? 1 : 0) << ',' << t.score << "\n";
    }
    std::cerr << "verify" << (a.nn ? " (nn)" : "") << ": " << r.duration_s << " s EER " << r.roc.eer << "\n";
  }
  report["results"] = rs;
  write_json(a.out, report);
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::vector<std::string> reports;
  std::vector<std::string> labels;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.reports.size()) {
    fail(ErrorCode::kInvalidArgument, "--label must be given once per report");
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "report,command,backend,mode,duration_s,metric,value\n";
  json summary = {{"command", "eval"}, {"report_version", kReportVersion}, {"reports", json::array()}};
  std::vector<Series> accuracy, cmc, eer;
  std::map<double, std::vector<Series>> rocs;
  double max_len = 4.0;
  std::size_t max_rank = 1;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const auto bytes = read_file_bytes(a.reports[i]);
    const json r = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (r.is_discarded() || !r.is_object() || !r.contains("command") || !r.contains("results")) {
      fail(ErrorCode::kFormat, a.reports[i] + ": not an egoid report");
    }
    if (r.value("report_version", 0) != kReportVersion) {
      fail(ErrorCode::kVersionMismatch, a.reports[i] + ": unsupported report version");
    }
    const std::string command = r["command"];
    const std::string backend = r.value("backend", "");
    const std::string mode = command == "identify" ? r.value("fuse", "") : r.value("mode", "");
    const std::string label = a.labels.empty() ? fs::path(a.reports[i]).stem().string() : a.labels[i];
    json entry = {{"label", label}, {"report", a.reports[i]}, {"command", command}, {"backend", backend},
                  {"mode", mode}, {"config_hash", r.value("config_hash", "")}, {"results", json::array()}};
    Series acc{label, {}}, er{label, {}};
    for (const auto& res : r["results"]) {
      const double d = res.at("duration_s");
      max_len = std::max(max_len, d);
      if (command == "identify") {
        const double v = res.at("accuracy");
        csv << label << ",identify," << backend << ',' << mode << ',' << d << ",accuracy," << v << "\n";
        acc.points.emplace_back(d, v);
        entry["results"].push_back({{"duration_s", d}, {"accuracy", v}});
        Series c{label + " " + std::to_string(static_cast<int>(d)) + "s", {}, false};
        const auto top = res.at("cmc").get<std::vector<double>>();
        for (std::size_t k = 0; k < top.size(); ++k) c.points.emplace_back(static_cast<double>(k + 1), top[k]);
        max_rank = std::max(max_rank, top.size());
        cmc.push_back(std::move(c));
      } else if (command == "verify") {
        const double v = res.at("eer");
        csv << label << ",verify," << backend << ',' << mode << ',' << d << ",eer," << v << "\n";
        er.points.emplace_back(d, v);
        entry["results"].push_back({{"duration_s", d}, {"eer", v}});
        Series roc{label, {}, false};
        for (const auto& p : res.at("roc")) roc.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        rocs[d].push_back(std::move(roc));
      } else {
        fail(ErrorCode::kFormat, a.reports[i] + ": cannot evaluate a '" + command + "' report");
      }
    }
    if (!acc.points.empty()) accuracy.push_back(std::move(acc));
    if (!er.points.empty()) eer.push_back(std::move(er));
    summary["reports"].push_back(entry);
  }
  write_text((out / "summary.csv").string(), csv.str());
  write_json((out / "summary.json").string(), summary);
  if (!accuracy.empty()) {
    write_text((out / "accuracy_vs_length.svg").string(),
               line_plot_svg({"Identification accuracy vs video length", "video length (s)", "accuracy", 0.0,
                              max_len, 0.0, 1.0, false},
                             accuracy));
    write_text((out / "cmc.svg").string(),
               line_plot_svg({"Cumulative match characteristic", "rank", "identification rate", 1.0,
                              static_cast<double>(max_rank), 0.0, 1.0, false},
                             cmc));
  }
  if (!eer.empty()) {
    write_text((out / "eer_vs_length.svg").string(),
               line_plot_svg({"Equal error rate vs video length", "video length (s)", "EER", 0.0, max_len, 0.0,
                              0.5, false},
                             eer));
    for (const auto& [d, series] : rocs) {
      const std::string name = "roc_" + std::to_string(static_cast<int>(std::lround(d))) + "s.svg";
      write_text((out / name).string(),
                 line_plot_svg({"ROC, " + std::to_string(static_cast<int>(std::lround(d))) + " s videos",
                                "false accept rate", "true accept rate", 0.0, 1.0, 0.0, 1.0, true},
                               series));
    }
  }
  std::cerr << "eval: " << a.reports.size() << " reports -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- visualize-filters

struct VisualizeArgs {
  Common common;
  std::string model;
  std::string out;
  int count = 8;
  int scale = 8;
};

Image upscale(const Image& im, int s) {
  Image out(im.width * s, im.height * s);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = im.at(x / s, y / s);
  }
  return out;
}

int cmd_visualize(const VisualizeArgs& a) {
  if (a.scale < 1) fail(ErrorCode::kInvalidArgument, "--scale must be at least 1");
  const Classifier model = Classifier::load(a.model);
  if (!model.cnn_model()) fail(ErrorCode::kInvalidArgument, a.model + ": filters exist only for the cnn back end");
  const auto& net = *model.cnn_model();
  // Strongest kernels first.
  std::vector<std::pair<double, int>> order;
  for (Eigen::Index k = 0; k < net.params.conv_w.rows(); ++k) {
    order.emplace_back(-static_cast<double>(net.params.conv_w.row(k).norm()), static_cast<int>(k));
  }
  std::sort(order.begin(), order.end());
  const int n = std::clamp(a.count, 1, static_cast<int>(order.size()));
  fs::create_directories(a.out);
  json listing = json::array();
  for (int i = 0; i < n; ++i) {
    const int k = order[static_cast<std::size_t>(i)].second;
    const auto [hor, ver] = visualize_filter(net, k);
    char base[32];
    std::snprintf(base, sizeof base, "filter_%03d", k);
    write_gray_png(fs::path(a.out) / (std::string(base) + "_u.png"), upscale(hor, a.scale));
    write_gray_png(fs::path(a.out) / (std::string(base) + "_v.png"), upscale(ver, a.scale));
    listing.push_back({{"kernel", k}, {"norm", -order[static_cast<std::size_t>(i)].first}});
  }
  write_json((fs::path(a.out) / "filters.json").string(), {{"model", a.model}, {"filters", listing}});
  std::cerr << "visualize-filters: " << n << " kernels -> " << a.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"egoid: identify the wearer of an egocentric camera from its motion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "egoid 1.0");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic walker population (flow caches + manifest)");
  add_common(synth, synth_args.common);
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--subjects", synth_args.subjects, "Number of subjects");
  synth->add_option_function<std::uint64_t>(
      "--master-seed", [&](std::uint64_t s) { synth_args.master_seed = s, synth_args.master_seed_set = true; },
      "Population seed");
  synth->add_option("--session", synth_args.sessions, "CAMERA:TAG:SECONDS, repeatable");
  synth->add_option("--noise", synth_args.noise, "Per-cell noise sigma, px/frame");
  synth->add_option("--shake", synth_args.shake, "Common-mode shake sigma, px/frame");
  synth->add_option("--render", synth_args.render, "Also render frames WIDTHxHEIGHT (manifest then lists frames)");
  synth->add_option("--render-seconds", synth_args.render_seconds, "Rendered length per sequence, s");

  ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract", "Compute grid optical flow for every sequence");
  add_common(extract, extract_args.common);
  extract->add_option("--manifest", extract_args.manifest, "Dataset manifest")->required();
  extract->add_option("--out", extract_args.out, "Output directory")->required();
  extract->add_option("--jobs", extract_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

  FeaturizeArgs feat_args;
  auto* featurize = app.add_subcommand("featurize", "Cut flow caches into 4 s windows");
  add_common(featurize, feat_args.common);
  featurize->add_option("--manifest", feat_args.manifest, "Manifest with flow caches")->required();
  featurize->add_option("--out", feat_args.out, "Feature file (.egft)")->required();
  featurize->add_flag("--stabilize", feat_args.stabilize, "Subtract the per-frame mean flow");
  featurize->add_option("--csv", feat_args.csv, "Also write one CSV row per window");
  featurize->add_option("--csv-kind", feat_args.csv_kind, "lpc | flow");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a classifier on a split");
  add_common(train, train_args.common);
  add_split(train, train_args.split);
  train->add_option("--features", train_args.features, "Feature file")->required();
  train->add_option("--backend", train_args.backend, "lpc-svm | raw-svm | cnn")->required();
  train->add_option("--out", train_args.out, "Model file")->required();
  train->add_option("--epochs", train_args.epochs, "Network epochs (overrides the config)");

  IdentifyArgs id_args;
  auto* identify = app.add_subcommand("identify", "Identify test videos and report accuracy per length");
  add_common(identify, id_args.common);
  add_split(identify, id_args.split);
  identify->add_option("--model", id_args.model, "Model file")->required();
  identify->add_option("--features", id_args.features, "Feature file")->required();
  identify->add_option("--fuse", id_args.fuse, "map | mode");
  identify->add_option("--durations", id_args.durations, "Video lengths in s (4 + 2k)")->delimiter(',');
  identify->add_option("--out", id_args.out, "Report (.json)")->required();
  identify->add_option("--csv", id_args.csv, "Per-group predictions");

  VerifyArgs ver_args;
  auto* verify = app.add_subcommand("verify", "Verify a target subject and report EER per length");
  add_common(verify, ver_args.common);
  add_split(verify, ver_args.split);
  verify->add_option("--model", ver_args.model, "Verifier, or identification model with --nn")->required();
  verify->add_option("--features", ver_args.features, "Feature file")->required();
  verify->add_flag("--nn", ver_args.nn, "Nearest-neighbour verification on model descriptors");
  verify->add_option("--durations", ver_args.durations, "Video lengths in s (4 + 2k)")->delimiter(',');
  verify->add_option("--out", ver_args.out, "Report (.json)")->required();
  verify->add_option("--csv", ver_args.csv, "Per-trial scores");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Summarize reports as CSV, JSON and SVG plots");
  add_common(eval, eval_args.common);
  eval->add_option("--reports", eval_args.reports, "identify/verify reports")->required()->check(CLI::ExistingFile);
  eval->add_option("--label", eval_args.labels, "Legend label per report");
  eval->add_option("--out", eval_args.out, "Output directory")->required();

  VisualizeArgs vis_args;
  auto* visualize = app.add_subcommand("visualize-filters", "Write first-layer kernels as PNG images");
  add_common(visualize, vis_args.common);
  visualize->add_option("--model", vis_args.model, "Network model")->required();
  visualize->add_option("--out", vis_args.out, "Output directory")->required();
  visualize->add_option("--count", vis_args.count, "Number of kernels, strongest first");
  visualize->add_option("--scale", vis_args.scale, "Pixel upscaling factor");

  Common config_common;
  auto* config = app.add_subcommand("config", "Print the effective configuration as JSON");
  add_common(config, config_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_args);
    if (*extract) return cmd_extract(extract_args);
    if (*featurize) return cmd_featurize(feat_args);
    if (*train) return cmd_train(train_args);
    if (*identify) return cmd_identify(id_args);
    if (*verify) return cmd_verify(ver_args);
    if (*eval) return cmd_eval(eval_args);
    if (*visualize) return cmd_visualize(vis_args);
    if (*config) {
      const json c = to_json(config_common.resolve());
      std::cout << c.dump(2) << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kUsage;
}
