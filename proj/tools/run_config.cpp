#include "run_config.hpp"

#include <fstream>
#include <set>

#include "egoid/binary_io.hpp"
#include "egoid/error.hpp"

namespace egoid::cli {

using nlohmann::json;

namespace {

json svm_json(const svm::SvmConfig& c) {
  return {{"C", c.C},
          {"gamma", c.gamma},
          {"tol", c.tol},
          {"max_passes", c.max_passes},
          {"cache_bytes", c.cache_bytes},
          {"strategy", c.strategy == svm::Multiclass::kOneVsOne ? "ovo" : "ovr"}};
}

// Reads `key` of object `j` into `out` when present.
template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!seen.count(item.key())) fail(ErrorCode::kValidation, "unknown config key '" + where + item.key() + "'");
  }
}

const json& object_at(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) fail(ErrorCode::kValidation, std::string("config key '") + key + "' must be an object");
  return j.at(key);
}

void read_svm(const json& j, svm::SvmConfig& c, const std::string& where) {
  std::set<std::string> seen;
  take(j, "C", c.C, seen);
  take(j, "gamma", c.gamma, seen);
  take(j, "tol", c.tol, seen);
  take(j, "max_passes", c.max_passes, seen);
  take(j, "cache_bytes", c.cache_bytes, seen);
  std::string strategy = c.strategy == svm::Multiclass::kOneVsOne ? "ovo" : "ovr";
  take(j, "strategy", strategy, seen);
  if (strategy == "ovr") c.strategy = svm::Multiclass::kOneVsRest;
  else if (strategy == "ovo") c.strategy = svm::Multiclass::kOneVsOne;
  else fail(ErrorCode::kValidation, "config key '" + where + "strategy' must be ovr or ovo");
  reject_unknown(j, seen, where);
}

Rational parse_fps(const json& j) {
  Rational r;
  if (j.is_string()) {
    if (!parse_rational(j.get<std::string>(), r)) fail(ErrorCode::kValidation, "bad fps in config");
  } else if (j.is_number_unsigned()) {
    r = {j.get<std::uint32_t>(), 1};
  } else {
    fail(ErrorCode::kValidation, "fps must be a string like \"15/1\" or an integer");
  }
  return r;
}

}  // namespace

void RunConfig::propagate_seed() {
  backends.seed = seed;
  backends.cnn.seed = seed;
}

json to_json(const RunConfig& cfg) {
  const auto& g = cfg.flowgrid;
  const auto& b = cfg.backends;
  const auto& n = b.cnn;
  const auto& s = cfg.synth;
  json sessions = json::array();
  for (const auto& ss : s.sessions) {
    sessions.push_back({{"camera", ss.camera_id}, {"tag", ss.session_tag}, {"duration_s", ss.duration_s}});
  }
  return {
      {"seed", cfg.seed},
      {"flowgrid",
       {{"m_x", g.m_x},
        {"m_y", g.m_y},
        {"pyramid_levels", g.pyramid_levels},
        {"lk_window", g.lk_window},
        {"lk_iterations", g.lk_iterations},
        {"convergence_px", g.convergence_px},
        {"min_eig_threshold", g.min_eig_threshold}}},
      {"lpc", {{"order", b.lpc.order}, {"subtract_mean", b.lpc.subtract_mean}, {"hamming", b.lpc.hamming}}},
      {"svm_lpc", svm_json(b.svm_lpc)},
      {"svm_raw", svm_json(b.svm_raw)},
      {"cnn",
       {{"k_t", n.k_t},
        {"m", n.m},
        {"pool_len", n.pool_len},
        {"pool_stride", n.pool_stride},
        {"n1", n.n1},
        {"lr", n.lr},
        {"batch", n.batch},
        {"epochs", n.epochs},
        {"average_pool", n.average_pool},
        {"early_stop", n.early_stop},
        {"plateau_rel", n.plateau_rel},
        {"plateau_epochs", n.plateau_epochs}}},
      {"protocol", {{"name", cfg.protocol}, {"target", cfg.target}, {"train_nontargets", cfg.train_nontargets}}},
      {"durations", cfg.durations},
      {"synth",
       {{"n_subjects", s.n_subjects},
        {"sessions", sessions},
        {"master_seed", s.master_seed},
        {"fps", s.fps.str()},
        {"freq_lo", s.freq_lo},
        {"freq_hi", s.freq_hi},
        {"min_separation", s.min_separation},
        {"adapt_separation", s.adapt_separation},
        {"bob", {s.bob_lo, s.bob_hi}},
        {"sway", {s.sway_lo, s.sway_hi}},
        {"harmonic", {s.harmonic_lo, s.harmonic_hi}},
        {"rotation", {s.rotation_lo, s.rotation_hi}},
        {"noise_sigma", s.noise_sigma},
        {"shake_sigma", s.shake_sigma},
        {"cadence_jitter", s.cadence_jitter},
        {"amp_jitter", s.amp_jitter},
        {"session_perturbation", s.session_perturbation}}},
  };
}

RunConfig from_json(const json& j, RunConfig cfg) {
  if (!j.is_object()) fail(ErrorCode::kValidation, "config must be a JSON object");
  std::set<std::string> top;
  take(j, "seed", cfg.seed, top);
  take(j, "durations", cfg.durations, top);
  for (const char* key : {"flowgrid", "lpc", "svm_lpc", "svm_raw", "cnn", "protocol", "synth"}) top.insert(key);
  reject_unknown(j, top, "");

  {
    const json& o = object_at(j, "flowgrid");
    std::set<std::string> seen;
    auto& g = cfg.flowgrid;
    take(o, "m_x", g.m_x, seen);
    take(o, "m_y", g.m_y, seen);
    take(o, "pyramid_levels", g.pyramid_levels, seen);
    take(o, "lk_window", g.lk_window, seen);
    take(o, "lk_iterations", g.lk_iterations, seen);
    take(o, "convergence_px", g.convergence_px, seen);
    take(o, "min_eig_threshold", g.min_eig_threshold, seen);
    reject_unknown(o, seen, "flowgrid.");
  }
  {
    const json& o = object_at(j, "lpc");
    std::set<std::string> seen;
    take(o, "order", cfg.backends.lpc.order, seen);
    take(o, "subtract_mean", cfg.backends.lpc.subtract_mean, seen);
    take(o, "hamming", cfg.backends.lpc.hamming, seen);
    reject_unknown(o, seen, "lpc.");
  }
  read_svm(object_at(j, "svm_lpc"), cfg.backends.svm_lpc, "svm_lpc.");
  read_svm(object_at(j, "svm_raw"), cfg.backends.svm_raw, "svm_raw.");
  {
    const json& o = object_at(j, "cnn");
    std::set<std::string> seen;
    auto& n = cfg.backends.cnn;
    take(o, "k_t", n.k_t, seen);
    take(o, "m", n.m, seen);
    take(o, "pool_len", n.pool_len, seen);
    take(o, "pool_stride", n.pool_stride, seen);
    take(o, "n1", n.n1, seen);
    take(o, "lr", n.lr, seen);
    take(o, "batch", n.batch, seen);
    take(o, "epochs", n.epochs, seen);
    take(o, "average_pool", n.average_pool, seen);
    take(o, "early_stop", n.early_stop, seen);
    take(o, "plateau_rel", n.plateau_rel, seen);
    take(o, "plateau_epochs", n.plateau_epochs, seen);
    reject_unknown(o, seen, "cnn.");
  }
  {
    const json& o = object_at(j, "protocol");
    std::set<std::string> seen;
    take(o, "name", cfg.protocol, seen);
    take(o, "target", cfg.target, seen);
    take(o, "train_nontargets", cfg.train_nontargets, seen);
    reject_unknown(o, seen, "protocol.");
  }
  {
    const json& o = object_at(j, "synth");
    std::set<std::string> seen;
    auto& s = cfg.synth;
    take(o, "n_subjects", s.n_subjects, seen);
    take(o, "master_seed", s.master_seed, seen);
    take(o, "freq_lo", s.freq_lo, seen);
    take(o, "freq_hi", s.freq_hi, seen);
    take(o, "min_separation", s.min_separation, seen);
    take(o, "adapt_separation", s.adapt_separation, seen);
    take(o, "noise_sigma", s.noise_sigma, seen);
    take(o, "shake_sigma", s.shake_sigma, seen);
    take(o, "cadence_jitter", s.cadence_jitter, seen);
    take(o, "amp_jitter", s.amp_jitter, seen);
    take(o, "session_perturbation", s.session_perturbation, seen);
    std::pair<double, double> range;
    auto take_range = [&](const char* key, double& lo, double& hi) {
      range = {lo, hi};
      take(o, key, range, seen);
      lo = range.first;
      hi = range.second;
    };
    take_range("bob", s.bob_lo, s.bob_hi);
    take_range("sway", s.sway_lo, s.sway_hi);
    take_range("harmonic", s.harmonic_lo, s.harmonic_hi);
    take_range("rotation", s.rotation_lo, s.rotation_hi);
    seen.insert("fps");
    if (o.contains("fps")) s.fps = parse_fps(o.at("fps"));
    seen.insert("sessions");
    if (o.contains("sessions")) {
      if (!o.at("sessions").is_array()) fail(ErrorCode::kValidation, "synth.sessions must be an array");
      s.sessions.clear();
      for (const auto& e : o.at("sessions")) {
        synth::SessionSpec ss;
        std::set<std::string> seen_s;
        take(e, "camera", ss.camera_id, seen_s);
        take(e, "tag", ss.session_tag, seen_s);
        take(e, "duration_s", ss.duration_s, seen_s);
        reject_unknown(e, seen_s, "synth.sessions.");
        s.sessions.push_back(ss);
      }
    }
    reject_unknown(o, seen, "synth.");
  }
  cfg.propagate_seed();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kValidation, path + ": malformed JSON");
  return from_json(j);
}

std::string canonical(const json& j) { return j.dump(); }

std::string config_hash(const json& j) { return hex64(fnv1a64(canonical(j))); }

}  // namespace egoid::cli
