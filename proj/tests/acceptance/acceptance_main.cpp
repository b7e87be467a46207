// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// when any selected criterion fails. Usage: egoid_acceptance [N ...]

#include <sys/wait.h>

#include <Eigen/LU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "egoid/binary_io.hpp"
#include "egoid/cnn.hpp"
#include "egoid/experiments.hpp"
#include "egoid/fusion_eval.hpp"
#include "egoid/lpc.hpp"
#include "egoid/rng.hpp"
#include "egoid/svm.hpp"
#include "egoid/synthgait.hpp"

namespace fs = std::filesystem;
using namespace egoid;
using namespace egoid::experiments;

namespace {

// Tolerances.
constexpr double kLevinsonRelTol = 1e-8;
constexpr double kSinusoidTol = 1e-5;
constexpr double kLpcSeconds = 5.0;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kDualBalanceTol = 1e-10;
constexpr double kKktTol = 1e-3;
constexpr double kSingleWindowMin = 0.70;
constexpr double kFusionGainMin = 0.05;
constexpr double kLengthCurveSeconds = 15 * 60.0;
constexpr double kLengthGainMin = 0.08;
constexpr double kStabilizationDropMax = 0.15;
constexpr double kAboveChanceMin = 0.25;
constexpr double kEerMax = 0.20;
constexpr int kVerificationTargets = 4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Levinson-Durbin against a dense solve

// Step-up recursion: reflection coefficients -> AR coefficients of a stable process.
std::vector<double> ar_from_reflection(const std::vector<double>& kappa) {
  std::vector<double> a;
  for (double k : kappa) {
    std::vector<double> next(a.size() + 1);
    for (std::size_t j = 0; j < a.size(); ++j) next[j] = a[j] - k * a[a.size() - 1 - j];
    next[a.size()] = k;
    a = next;
  }
  return a;
}

Outcome criterion_lpc() {
  Timer timer;
  constexpr int kF = 60, kOrder = 9, kSeries = 1000;
  Rng rng(101);
  double worst = 0.0;
  for (int s = 0; s < kSeries; ++s) {
    const int p = 1 + static_cast<int>(rng.below(kOrder));
    std::vector<double> kappa(p);
    for (double& k : kappa) k = rng.uniform(-0.9, 0.9);
    const auto a = ar_from_reflection(kappa);
    std::vector<double> x(kF + 200, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
      double v = rng.normal();
      for (int j = 0; j < p; ++j)
        if (t > static_cast<std::size_t>(j)) v += a[j] * x[t - 1 - j];
      x[t] = v;
    }
    const std::vector<double> series(x.end() - kF, x.end());
    const auto r = lpc::autocorrelation(series, kOrder);
    const auto got = lpc::levinson_durbin(r, kOrder).coeffs;

    // Normal equations with the same diagonal loading as the recursion.
    const double r0 = r[0] + 1e-9 * std::max(r[0], 1.0);
    Eigen::MatrixXd R(kOrder, kOrder);
    Eigen::VectorXd rhs(kOrder);
    for (int i = 0; i < kOrder; ++i) {
      rhs(i) = r[i + 1];
      for (int j = 0; j < kOrder; ++j) R(i, j) = i == j ? r0 : r[std::abs(i - j)];
    }
    const Eigen::VectorXd want = R.fullPivLu().solve(rhs);
    double diff = 0.0;
    for (int i = 0; i < kOrder; ++i) diff += (got[i] - want(i)) * (got[i] - want(i));
    worst = std::max(worst, std::sqrt(diff) / want.norm());
  }

  double sin_err = 0.0;
  for (double w : {0.2, 0.75, 1.3, 2.0, 2.9}) {
    const std::vector<double> r{1.0, std::cos(w), std::cos(2 * w)};
    const auto c = lpc::levinson_durbin(r, 2).coeffs;
    sin_err = std::max({sin_err, std::abs(c[0] - 2 * std::cos(w)), std::abs(c[1] + 1.0)});
  }
  const double secs = timer.seconds();
  return {worst <= kLevinsonRelTol && sin_err <= kSinusoidTol && secs < kLpcSeconds,
          fmt("max rel err %.2e over %d series, sinusoid err %.2e, %.2f s", worst, kSeries, sin_err, secs)};
}

// ---------------------------------------------------------------------------
// 2. CNN gradient check

Outcome criterion_gradient() {
  Timer timer;
  cnn::CnnConfig cfg;
  cfg.n_classes = 8;
  cnn::Params<double> p = cnn::init_params(cfg, 202).cast<double>();
  Rng rng(203);
  for (auto* v : {&p.conv_b, &p.fc1_b, &p.fc2_b})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = 0.1 * rng.normal();
  cnn::Mat<double> x(3, cfg.series() * cfg.frames);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const std::vector<int> labels{1, 6, 3};

  cnn::Params<double> grads = cnn::Params<double>::zeros(cfg);
  cnn::loss_and_grads(cfg, p, x, labels, grads);

  std::vector<std::span<double>> tensors, grad_tensors;
  p.for_each([&](std::span<double> s) { tensors.push_back(s); });
  grads.for_each([&](std::span<double> s) { grad_tensors.push_back(s); });

  auto pattern = [&] {
    const auto f = cnn::forward(cfg, p, x);
    std::vector<bool> signs(f.conv.size());
    for (Eigen::Index i = 0; i < f.conv.size(); ++i) signs[i] = f.conv.data()[i] > 0;
    return std::make_pair(signs, f.argmax);
  };
  const auto base = pattern();

  constexpr int kSamples = 200;
  constexpr double h = 1e-4;
  int checked = 0, skipped = 0, bad = 0;
  double worst = 0.0;
  while (checked < kSamples && skipped < 10 * kSamples) {
    const std::size_t t = rng.below(tensors.size());
    const std::size_t i = rng.below(tensors[t].size());
    double& theta = tensors[t][i];
    const double saved = theta;
    theta = saved + h;
    const double up = cnn::loss_only(cfg, p, x, labels);
    const bool kink_up = pattern() != base;
    theta = saved - h;
    const double down = cnn::loss_only(cfg, p, x, labels);
    const bool kink_down = pattern() != base;
    theta = saved;
    if (kink_up || kink_down) {  // ReLU or max-pool switch inside the stencil
      ++skipped;
      continue;
    }
    const double numeric = (up - down) / (2 * h), analytic = grad_tensors[t][i];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-7});
    worst = std::max(worst, rel);
    if (rel > kGradRelTol) ++bad;
    ++checked;
  }
  const double secs = timer.seconds();
  return {checked == kSamples && bad == 0 && secs < kGradSeconds,
          fmt("%d parameters, max rel err %.2e, %d kinks skipped, %.1f s", checked, worst, skipped, secs)};
}

// ---------------------------------------------------------------------------
// 3. SMO

Outcome criterion_smo() {
  Rng rng(303);
  int kkt_violations = 0, unconverged = 0, box = 0;
  double worst_balance = 0.0;
  for (int problem = 0; problem < 20; ++problem) {
    const int n = 40 + 8 * (problem % 6), d = 2 + problem % 4;
    svm::Matrix x(n, d);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = rng.uniform(0, 1) < 0.5 ? 1 : -1;
      for (int j = 0; j < d; ++j) x(i, j) = rng.normal() + (j == 0 ? 0.8 * y[i] : 0.0);
    }
    svm::SvmConfig cfg;
    cfg.C = problem % 3 == 0 ? 0.5 : (problem % 3 == 1 ? 5.0 : 50.0);
    cfg.gamma = 0.2 + 0.1 * (problem % 4);
    svm::KernelCache cache(x, cfg.gamma, cfg.cache_bytes);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto r = svm::solve_smo(cache, idx, y, cfg, problem);
    if (!r.converged) ++unconverged;
    double balance = 0.0;
    for (int i = 0; i < n; ++i) {
      if (r.alphas[i] < 0.0 || r.alphas[i] > cfg.C) ++box;
      balance += r.alphas[i] * y[i];
    }
    worst_balance = std::max(worst_balance, std::abs(balance));
    for (int i = 0; i < n; ++i) {
      double f = -r.rho;
      for (int j = 0; j < n; ++j) {
        const double d2 = (x.row(i) - x.row(j)).squaredNorm();
        f += r.alphas[j] * y[j] * std::exp(-cfg.gamma * d2);
      }
      const double m = y[i] * f;
      const bool ok = r.alphas[i] <= 0.0 ? m >= 1.0 - kKktTol
                      : r.alphas[i] >= cfg.C ? m <= 1.0 + kKktTol
                                             : std::abs(m - 1.0) <= kKktTol;
      if (!ok) ++kkt_violations;
    }
  }

  svm::Matrix xor_x(4, 2);
  xor_x << 0, 0, 1, 1, 0, 1, 1, 0;
  const std::vector<int> xor_y{-1, -1, 1, 1};
  svm::SvmConfig xc;
  xc.C = 100.0;
  xc.gamma = 1.0;
  const auto m = svm::train_binary(xor_x, xor_y, xc, 1);
  int xor_wrong = 0;
  for (int i = 0; i < 4; ++i) {
    const double f = m.decision(std::span<const double>(xor_x.row(i).data(), 2));
    if (f * xor_y[i] <= 0.0) ++xor_wrong;
  }
  return {unconverged == 0 && box == 0 && worst_balance <= kDualBalanceTol && kkt_violations == 0 && xor_wrong == 0,
          fmt("20 problems: %d unconverged, %d box, max |sum a y| %.1e, %d KKT violations; XOR %d/4 correct",
              unconverged, box, worst_balance, kkt_violations, 4 - xor_wrong)};
}

// ---------------------------------------------------------------------------
// 4. MAP fusion

Outcome criterion_map() {
  Rng rng(404);
  constexpr int kLists = 10000;
  int disagree = 0;
  for (int list = 0; list < kLists; ++list) {
    const int T = 1 + static_cast<int>(rng.below(10)), C = 2 + static_cast<int>(rng.below(7));
    std::vector<fusion::Distribution> probs(T, fusion::Distribution(C));
    for (auto& d : probs) {
      double total = 0.0;
      for (double& v : d) total += v = rng.uniform(0.05, 1.0);
      for (double& v : d) v /= total;
    }
    int best = 0;
    long double best_product = -1.0L;
    for (int c = 0; c < C; ++c) {
      long double product = 1.0L;
      for (const auto& d : probs) product *= d[c];
      if (product > best_product) best_product = product, best = c;
    }
    if (fusion::map_fuse(probs) != best) ++disagree;
  }
  return {disagree == 0, fmt("%d/%d lists agree with the brute-force product", kLists - disagree, kLists)};
}

// ---------------------------------------------------------------------------
// 5. Accuracy versus video length

Outcome criterion_fusion_trend() {
  Timer timer;
  synth::PopulationConfig pc;
  pc.n_subjects = 6;
  pc.sessions = {{"D1", "same-day", 420.0}, {"D2", "same-day", 180.0}};
  pc.noise_sigma = 2.5;
  pc.shake_sigma = 2.2;
  pc.master_seed = 1;
  const auto features = features_from_synthetic(synth::gen_population(pc), false);
  const auto plan = ingest::make_split(features.as_manifest(), "evpr-identification");
  const auto ts = identification_training_set(features, plan);
  const auto model = Classifier::train(Backend::kCnn, ts.windows, ts.labels, ts.class_names, BackendConfig{});
  const auto probs = predict_sequences(model, features, plan.test);

  // Every length the evaluator supports: 4 s plus whole strides.
  bool monotone = true, map_ge_mode = true;
  double single = 0.0, at24 = 0.0, prev = -1.0;
  std::ostringstream curve, violations;
  for (int L = 4; L <= 50; L += 2) {
    const auto r = evaluate_identification(probs, L, model.n_classes());
    if (L == 4) single = r.map_accuracy;
    if (L == 24) at24 = r.map_accuracy;
    if (r.map_accuracy < prev) {
      monotone = false;
      violations << fmt(" drop at %d s (%.3f after %.3f);", L, r.map_accuracy, prev);
    }
    if (r.map_accuracy < r.mode_accuracy) {
      map_ge_mode = false;
      violations << fmt(" MAP<Mode at %d s (%.3f vs %.3f);", L, r.map_accuracy, r.mode_accuracy);
    }
    prev = r.map_accuracy;
    if (L % 8 == 4 || L == 50) curve << " " << L << "s:" << fmt("%.3f", r.map_accuracy);
  }
  const double secs = timer.seconds();
  const bool pass = single >= kSingleWindowMin && monotone && map_ge_mode && at24 - single >= kFusionGainMin &&
                    secs < kLengthCurveSeconds;
  return {pass, fmt("single %.3f, 24 s %.3f, %.0f s;", single, at24, secs) + violations.str() + " MAP" +
                    curve.str()};
}

// ---------------------------------------------------------------------------
// 6. Back ends, durations and stabilization on 32 subjects

Outcome criterion_backends() {
  synth::PopulationConfig pc;
  pc.sessions = {{"D1", "same-day", 180.0}, {"D2", "same-day", 120.0}};
  const auto ds = synth::gen_population(pc);
  // acc[stabilized][backend][duration index]
  double acc[2][2][2] = {};
  const double durations[2] = {4.0, 12.0};
  for (int stab = 0; stab < 2; ++stab) {
    const auto features = features_from_synthetic(ds, stab == 1);
    const auto plan = ingest::make_split(features.as_manifest(), "evpr-identification");
    const auto ts = identification_training_set(features, plan);
    for (int b = 0; b < 2; ++b) {
      const Backend backend = b == 0 ? Backend::kLpcSvm : Backend::kCnn;
      const auto model = Classifier::train(backend, ts.windows, ts.labels, ts.class_names, BackendConfig{});
      const auto probs = predict_sequences(model, features, plan.test);
      for (int d = 0; d < 2; ++d) acc[stab][b][d] = evaluate_identification(probs, durations[d], model.n_classes()).map_accuracy;
    }
  }
  const double chance = 1.0 / pc.n_subjects;
  bool a = true, b = true, c = true;
  for (int k = 0; k < 2; ++k) {
    a = a && acc[0][k][1] - acc[0][k][0] >= kLengthGainMin;
    b = b && acc[0][1][k] >= acc[0][0][k];
    for (int d = 0; d < 2; ++d) {
      const double drop = acc[0][k][d] - acc[1][k][d];
      c = c && drop > 0.0 && drop <= kStabilizationDropMax && acc[1][k][d] >= chance + kAboveChanceMin;
    }
  }
  return {a && b && c,
          fmt("(a)=%d (b)=%d (c)=%d; LPC %.3f->%.3f, CNN %.3f->%.3f; stabilized LPC %.3f->%.3f, CNN %.3f->%.3f", a, b,
              c, acc[0][0][0], acc[0][0][1], acc[0][1][0], acc[0][1][1], acc[1][0][0], acc[1][0][1], acc[1][1][0],
              acc[1][1][1])};
}

// ---------------------------------------------------------------------------
// 7 and 9. Verification

struct VerificationStudy {
  // [backend][duration index], averaged over targets
  double trained[2][2] = {};
  double nn[2][2] = {};
  std::vector<std::string> targets;
};

// 32 subjects; transfer identification models on 16 of them; targets are the
// first held-out subjects, each verified with its own 15/16 non-target split.
VerificationStudy run_verification(bool with_nn) {
  synth::PopulationConfig pc;
  pc.sessions = {{"D1", "same-day", 180.0}, {"D2", "same-day", 180.0}};
  const auto features = features_from_synthetic(synth::gen_population(pc), false);
  auto ids = features.subject_ids();
  Rng rng(derive_seed(1, 77));
  rng.shuffle(std::span(ids));
  const std::vector<std::string> transfer(ids.begin(), ids.begin() + 16);
  std::vector<std::string> held(ids.begin() + 16, ids.end());
  std::sort(held.begin(), held.end());

  const BackendConfig cfg;
  std::vector<Classifier> id_models;
  std::vector<const SequenceData*> probes;
  if (with_nn) {
    TrainingSet tid;
    for (std::size_t c = 0; c < transfer.size(); ++c) {
      for (const auto& w : features.find({transfer[c], "seq01"})->windows) {
        tid.windows.push_back(&w);
        tid.labels.push_back(static_cast<int>(c));
      }
      tid.class_names.push_back(transfer[c]);
    }
    for (Backend b : {Backend::kLpcSvm, Backend::kCnn})
      id_models.push_back(Classifier::train(b, tid.windows, tid.labels, tid.class_names, cfg));
    for (const auto& h : held) probes.push_back(features.find({h, "seq02"}));
  }

  VerificationStudy out;
  const double durations[2] = {4.0, 12.0};
  for (int t = 0; t < kVerificationTargets; ++t) {
    const std::string& target = held[t];
    out.targets.push_back(target);
    ingest::SplitOptions so;
    so.target_subject = target;
    const auto plan = ingest::make_split(features.as_manifest(), "evpr-verification", so);
    const auto ts = verification_training_set(features, plan);
    for (int b = 0; b < 2; ++b) {
      const Backend backend = b == 0 ? Backend::kLpcSvm : Backend::kCnn;
      const auto model = Classifier::train(backend, ts.windows, ts.labels, ts.class_names, cfg);
      for (int d = 0; d < 2; ++d)
        out.trained[b][d] += evaluate_verification(model, features, plan, durations[d]).roc.eer / kVerificationTargets;
      if (!with_nn) continue;
      const auto gallery = id_models[b].describe(features.find({target, "seq01"})->windows);
      std::vector<fusion::Descriptors> described;
      for (const auto* p : probes) described.push_back(id_models[b].describe(p->windows));
      for (int d = 0; d < 2; ++d)
        out.nn[b][d] +=
            evaluate_nn_verification(gallery, probes, described, target, durations[d]).roc.eer / kVerificationTargets;
    }
  }
  return out;
}

Outcome criterion_verification() {
  const std::vector<double> scores{0.9, 0.8, 0.3, 0.7, 0.2, 0.1};
  const std::vector<std::uint8_t> is_target{1, 1, 1, 0, 0, 0};
  const double example = fusion::roc_and_eer(scores, is_target).eer;
  const bool example_ok = std::abs(example - 1.0 / 3.0) <= 1e-12;

  const auto v = run_verification(false);
  bool ok = example_ok;
  for (int b = 0; b < 2; ++b) ok = ok && v.trained[b][1] < kEerMax && v.trained[b][1] <= v.trained[b][0];
  return {ok, fmt("mean EER over %d targets: LPC %.3f->%.3f, CNN %.3f->%.3f (4 s -> 12 s); example EER %.6f",
                  kVerificationTargets, v.trained[0][0], v.trained[0][1], v.trained[1][0], v.trained[1][1], example)};
}

Outcome criterion_transfer() {
  const auto v = run_verification(true);
  bool ok = true;
  for (int d = 0; d < 2; ++d) {
    ok = ok && v.nn[1][d] <= v.nn[0][d];
    for (int b = 0; b < 2; ++b) ok = ok && v.trained[b][d] <= v.nn[b][d];
  }
  return {ok, fmt("mean EER 4 s/12 s: NN LPC %.3f/%.3f, NN CNN %.3f/%.3f, trained LPC %.3f/%.3f, trained CNN "
                  "%.3f/%.3f",
                  v.nn[0][0], v.nn[0][1], v.nn[1][0], v.nn[1][1], v.trained[0][0], v.trained[0][1], v.trained[1][0],
                  v.trained[1][1])};
}

// ---------------------------------------------------------------------------
// 8. Window arithmetic

Outcome criterion_windows() {
  constexpr double kSeconds = 7 * 60.0, kFps = 15.0;
  const auto oracle = static_cast<std::size_t>(std::floor((kSeconds - 4.0) / 2.0)) + 1;
  synth::PopulationConfig pc;
  pc.n_subjects = 2;
  const auto profile = synth::draw_profiles(pc).front();
  const auto flows = synth::gen_flow_sequence(profile, kSeconds, Rational{15, 1}, pc.grid, 1);
  const auto windows = make_windows(flows, Rational{15, 1}, false, "S01");
  const std::size_t counted = flowgrid::window_count(flows.size(), kFps);
  return {oracle == 209 && windows.size() == oracle && counted == oracle,
          fmt("%zu flow fields -> %zu windows (count %zu, expected %zu)", flows.size(), windows.size(), counted,
              oracle)};
}

// ---------------------------------------------------------------------------
// 10. Determinism of the command-line pipeline

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EGOID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto bytes = read_file_bytes(e.path());
    files[fs::relative(e.path(), dir).string()] = std::string(bytes.begin(), bytes.end());
  }
  return files;
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "egoid_acceptance_determinism";
  fs::remove_all(root);
  const fs::path work = root / "work";
  auto p = [&](const std::string& name) { return (work / name).string(); };
  const std::vector<std::string> steps = {
      "synth --out " + p("ds") + " --subjects 6 --session D1:same-day:40 --session D2:same-day:24",
      "featurize --manifest " + p("ds/manifest.json") + " --out " + p("f.egft"),
      "featurize --manifest " + p("ds/manifest.json") + " --stabilize --out " + p("fs.egft"),
      "train --features " + p("f.egft") + " --backend lpc-svm --out " + p("lpc.egsv"),
      "train --features " + p("f.egft") + " --backend raw-svm --out " + p("raw.egsv"),
      "train --features " + p("f.egft") + " --backend cnn --epochs 3 --out " + p("cnn.egnn"),
      "train --features " + p("fs.egft") + " --backend cnn --epochs 3 --out " + p("cnn_s.egnn"),
      "train --features " + p("f.egft") + " --backend lpc-svm --protocol evpr-verification --target S01 "
      "--train-nontargets 3 --out " + p("ver.egsv"),
      "identify --model " + p("lpc.egsv") + " --features " + p("f.egft") + " --durations 4,8 --out " +
          p("id_lpc.json") + " --csv " + p("id_lpc.csv"),
      "identify --model " + p("raw.egsv") + " --features " + p("f.egft") + " --out " + p("id_raw.json"),
      "identify --model " + p("cnn.egnn") + " --features " + p("f.egft") + " --fuse mode --out " + p("id_cnn.json"),
      "identify --model " + p("cnn_s.egnn") + " --features " + p("fs.egft") + " --out " + p("id_cnn_s.json"),
      "verify --model " + p("ver.egsv") + " --features " + p("f.egft") + " --target S01 --train-nontargets 3 "
      "--durations 4,8 --out " + p("ver.json") + " --csv " + p("ver.csv"),
      "verify --model " + p("cnn.egnn") + " --features " + p("f.egft") + " --nn --target S06 --train-nontargets 3 "
      "--out " + p("nn.json"),
      "eval --reports " + p("id_lpc.json") + " " + p("id_cnn.json") + " " + p("ver.json") + " " + p("nn.json") +
          " --out " + p("eval"),
      "visualize-filters --model " + p("cnn.egnn") + " --count 2 --out " + p("filters"),
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(work);
    fs::create_directories(work);
    for (const auto& s : steps) {
      const int code = run_cli(s + " --seed 7");
      if (code != 0) return {false, fmt("exit %d from: egoid %s", code, s.c_str())};
    }
    runs.push_back(snapshot(work));
  }
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) differing.push_back(name);
  }
  if (runs[0].size() != runs[1].size()) differing.push_back("(file list)");
  fs::remove_all(root);
  std::string detail = fmt("%zu commands, %zu output files compared", steps.size(), runs[0].size());
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "LPC oracle", criterion_lpc},
      {2, "CNN gradient check", criterion_gradient},
      {3, "SMO correctness", criterion_smo},
      {4, "MAP fusion", criterion_map},
      {5, "accuracy vs video length", criterion_fusion_trend},
      {6, "back ends, durations, stabilization", criterion_backends},
      {7, "verification EER", criterion_verification},
      {8, "window arithmetic", criterion_windows},
      {9, "transfer verification", criterion_transfer},
      {10, "determinism", criterion_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.number) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
