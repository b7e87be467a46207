#include "egoid/synthgait.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "egoid/error.hpp"
#include "egoid/rng.hpp"

namespace egoid::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDriftTimeConstant = 2.0;  // s, for cadence and amplitude drift

// Stationary AR(1) step with unit-free std `sigma`.
double ar1(double prev, double rho, double sigma, Rng& rng) {
  return rho * prev + std::sqrt(1.0 - rho * rho) * sigma * rng.normal();
}

std::string padded_id(const char* prefix, int value, int count) {
  const int width = count >= 100 ? 3 : 2;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, value);
  return buf;
}

double wrap(double v, int n) {
  v = std::fmod(v, static_cast<double>(n));
  return v < 0 ? v + n : v;
}

float sample_periodic(const Image& tex, double x, double y) {
  x = wrap(x, tex.width);
  y = wrap(y, tex.height);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = (x0 + 1) % tex.width, y1 = (y0 + 1) % tex.height;
  const double ax = x - x0, ay = y - y0;
  const double top = (1 - ax) * tex.at(x0, y0) + ax * tex.at(x1, y0);
  const double bottom = (1 - ax) * tex.at(x0, y1) + ax * tex.at(x1, y1);
  return static_cast<float>((1 - ay) * top + ay * bottom);
}

}  // namespace

std::vector<flowgrid::FlowField> gen_flow_sequence(const WalkerProfile& profile, double duration_s,
                                                   Rational fps, const flowgrid::FlowGridSpec& spec,
                                                   std::uint64_t session_seed) {
  spec.validate();
  if (!fps.valid()) fail(ErrorCode::kInvalidArgument, "fps must be positive");
  if (!(profile.step_freq > 0.0)) fail(ErrorCode::kInvalidArgument, "step_freq must be positive");
  const double rate = fps.value();
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  if (n < 1) fail(ErrorCode::kInvalidArgument, "duration shorter than one frame");

  const std::uint64_t base = derive_seed(profile.seed, session_seed);
  Rng phase_rng(derive_seed(base, 1));
  Rng cadence_rng(derive_seed(base, 2));
  Rng amp_rng(derive_seed(base, 3));
  Rng noise_rng(derive_seed(base, 4));
  Rng shake_rng(derive_seed(base, 5));

  const double rho = std::exp(-1.0 / (rate * kDriftTimeConstant));
  double sway_norm = 0.0;
  for (const auto& a : profile.harmonic_amps) sway_norm += a[1];

  const double x_max = 0.5 * (spec.m_x - 1);
  std::vector<double> roll_weight(spec.m_x, 0.0);
  for (int c = 0; c < spec.m_x; ++c) roll_weight[c] = x_max > 0 ? (c - x_max) / x_max : 0.0;

  double theta = kTwoPi * phase_rng.uniform();
  double drift = profile.cadence_jitter > 0 ? profile.cadence_jitter * cadence_rng.normal() : 0.0;
  double amp_drift = profile.amp_jitter > 0 ? profile.amp_jitter * amp_rng.normal() : 0.0;

  std::vector<flowgrid::FlowField> flows;
  flows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sway = 0.0, bob = 0.0, roll_shape = 0.0;
    for (int h = 0; h < kHarmonics; ++h) {
      const auto& amp = profile.harmonic_amps[h];
      const auto& ph = profile.phase_offsets[h];
      bob += amp[0] * std::sin(2.0 * (h + 1) * theta + ph[0]);
      sway += amp[1] * std::sin((h + 1) * theta + ph[1]);
      roll_shape += amp[1] * std::sin((h + 1) * theta + ph[1] + profile.roll_lag);
    }
    roll_shape = sway_norm > 0 ? roll_shape / sway_norm : std::sin(theta + profile.roll_lag);
    const double gain = 1.0 + amp_drift;
    const double roll = profile.rotation_amp * roll_shape * gain;

    double shake_u = 0.0, shake_v = 0.0;
    if (profile.shake_sigma > 0) {
      shake_u = profile.shake_sigma * shake_rng.normal();
      shake_v = profile.shake_sigma * shake_rng.normal();
    }
    flowgrid::FlowField f(spec.m_x, spec.m_y);
    for (int r = 0; r < spec.m_y; ++r) {
      for (int c = 0; c < spec.m_x; ++c) {
        const std::size_t cell = static_cast<std::size_t>(r) * spec.m_x + c;
        f.u[cell] = gain * sway + shake_u;
        f.v[cell] = gain * bob + roll * roll_weight[c] + shake_v;
        if (profile.noise_sigma > 0) {
          f.u[cell] += profile.noise_sigma * noise_rng.normal();
          f.v[cell] += profile.noise_sigma * noise_rng.normal();
        }
      }
    }
    flows.push_back(std::move(f));

    theta += kTwoPi * profile.step_freq * (1.0 + drift) / rate;
    if (profile.cadence_jitter > 0) drift = ar1(drift, rho, profile.cadence_jitter, cadence_rng);
    if (profile.amp_jitter > 0) amp_drift = ar1(amp_drift, rho, profile.amp_jitter, amp_rng);
  }
  return flows;
}

double PopulationConfig::effective_separation() const {
  if (!adapt_separation || n_subjects < 2) return min_separation;
  return std::min(min_separation, 0.5 * (freq_hi - freq_lo) / (n_subjects - 1));
}

std::vector<WalkerProfile> draw_profiles(const PopulationConfig& config) {
  if (config.n_subjects < 2) fail(ErrorCode::kInvalidArgument, "population needs at least 2 subjects");
  if (!(config.freq_hi > config.freq_lo) || config.freq_lo <= 0) {
    fail(ErrorCode::kInvalidArgument, "invalid step-frequency range");
  }
  const double sep = config.effective_separation();
  const double range = config.freq_hi - config.freq_lo;
  if (sep * (config.n_subjects - 1) > range) {
    fail(ErrorCode::kValidation,
         "cannot place " + std::to_string(config.n_subjects) + " step frequencies " +
             std::to_string(sep) + " Hz apart in [" + std::to_string(config.freq_lo) + ", " +
             std::to_string(config.freq_hi) + "] Hz");
  }

  // Sequential rejection sampling, restarted from scratch when it jams.
  Rng freq_rng(derive_seed(config.master_seed, 2));
  std::vector<double> freqs;
  for (int attempt = 0; attempt < 1000 && freqs.size() < static_cast<std::size_t>(config.n_subjects);
       ++attempt) {
    freqs.clear();
    for (int s = 0; s < config.n_subjects; ++s) {
      bool placed = false;
      for (int tries = 0; tries < 10000 && !placed; ++tries) {
        const double f = freq_rng.uniform(config.freq_lo, config.freq_hi);
        placed = std::all_of(freqs.begin(), freqs.end(),
                             [&](double g) { return std::abs(f - g) >= sep; });
        if (placed) freqs.push_back(f);
      }
      if (!placed) break;
    }
  }
  if (freqs.size() < static_cast<std::size_t>(config.n_subjects)) {
    fail(ErrorCode::kValidation, "rejection sampling could not separate the step frequencies");
  }

  Rng rng(derive_seed(config.master_seed, 1));
  std::vector<WalkerProfile> profiles(config.n_subjects);
  for (int s = 0; s < config.n_subjects; ++s) {
    WalkerProfile& p = profiles[s];
    p.step_freq = freqs[s];
    const double bob = rng.uniform(config.bob_lo, config.bob_hi);
    const double sway = rng.uniform(config.sway_lo, config.sway_hi);
    for (int h = 0; h < kHarmonics; ++h) {
      const double rb = h == 0 ? 1.0 : rng.uniform(config.harmonic_lo, config.harmonic_hi);
      const double rs = h == 0 ? 1.0 : rng.uniform(config.harmonic_lo, config.harmonic_hi);
      p.harmonic_amps[h] = {bob * rb, sway * rs};
      p.phase_offsets[h] = {kTwoPi * rng.uniform(), kTwoPi * rng.uniform()};
    }
    p.rotation_amp = rng.uniform(config.rotation_lo, config.rotation_hi);
    p.roll_lag = kTwoPi * rng.uniform();
    p.noise_sigma = config.noise_sigma;
    p.shake_sigma = config.shake_sigma;
    p.cadence_jitter = config.cadence_jitter;
    p.amp_jitter = config.amp_jitter;
    p.seed = derive_seed(config.master_seed, 1000 + static_cast<std::uint64_t>(s));
  }
  return profiles;
}

SyntheticDataset gen_population(const PopulationConfig& config) {
  SyntheticDataset ds;
  ds.config = config;
  const auto profiles = draw_profiles(config);
  for (int s = 0; s < config.n_subjects; ++s) {
    SyntheticSubject subject;
    subject.subject_id = padded_id("S", s + 1, config.n_subjects);
    subject.profile = profiles[s];
    for (std::size_t k = 0; k < config.sessions.size(); ++k) {
      const SessionSpec& spec = config.sessions[k];
      SyntheticSequence seq;
      seq.sequence_id = padded_id("seq", static_cast<int>(k) + 1, 0);
      seq.camera_id = spec.camera_id;
      seq.session_tag = spec.session_tag;
      seq.session_seed = derive_seed(subject.profile.seed, 100 + k);
      seq.profile = subject.profile;
      Rng perturb(derive_seed(seq.session_seed, 7));
      const double e = config.session_perturbation;
      for (auto& amp : seq.profile.harmonic_amps) {
        amp[0] *= 1.0 + perturb.uniform(-e, e);
        amp[1] *= 1.0 + perturb.uniform(-e, e);
      }
      seq.profile.rotation_amp *= 1.0 + perturb.uniform(-e, e);
      seq.flows = gen_flow_sequence(seq.profile, spec.duration_s, config.fps, config.grid,
                                    seq.session_seed);
      subject.sequences.push_back(std::move(seq));
    }
    ds.subjects.push_back(std::move(subject));
  }
  return ds;
}

ingest::DatasetManifest write_dataset(const SyntheticDataset& dataset,
                                      const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "flows");
  ingest::DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& subject : dataset.subjects) {
    ingest::SubjectRecord rec;
    rec.subject_id = subject.subject_id;
    for (const auto& seq : subject.sequences) {
      const fs::path cache = out_dir / "flows" / (subject.subject_id + "_" + seq.sequence_id + ".egfl");
      flowgrid::FlowCache fc;
      fc.fps = dataset.config.fps;
      fc.m_x = dataset.config.grid.m_x;
      fc.m_y = dataset.config.grid.m_y;
      fc.flows = seq.flows;
      flowgrid::write_flow_cache(cache.string(), fc);
      ingest::SequenceRecord sr;
      sr.sequence_id = seq.sequence_id;
      sr.camera_id = seq.camera_id;
      sr.session_tag = seq.session_tag;
      sr.fps = dataset.config.fps;
      sr.frame_count = static_cast<std::uint32_t>(seq.flows.size() + 1);
      sr.flow_cache = cache;
      rec.sequences.push_back(std::move(sr));
    }
    manifest.subjects.push_back(std::move(rec));
  }
  ingest::write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

namespace {

// Three periodic box blurs of the given radius, in place.
void periodic_blur(Image& im, int radius) {
  const int width = im.width, height = im.height;
  Image tmp(width, height);
  for (int pass = 0; pass < 3; ++pass) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        float acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += im.at(((x + k) % width + width) % width, y);
        tmp.at(x, y) = acc / (2 * radius + 1);
      }
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        float acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += tmp.at(x, ((y + k) % height + height) % height);
        im.at(x, y) = acc / (2 * radius + 1);
      }
    }
  }
}

}  // namespace

Image make_texture(int width, int height, std::uint64_t seed) {
  if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "texture size must be positive");
  Rng rng(seed);
  Image tex(width, height);
  // Octaves at blur radii 2, 4 and 8 px so every pyramid level keeps texture.
  for (int radius : {2, 4, 8}) {
    Image octave(width, height);
    for (float& v : octave.pixels) v = static_cast<float>(rng.uniform());
    periodic_blur(octave, radius);
    const auto [lo, hi] = std::minmax_element(octave.pixels.begin(), octave.pixels.end());
    const float l = *lo, range = std::max(*hi - *lo, 1e-6f);
    for (std::size_t i = 0; i < tex.pixels.size(); ++i) tex.pixels[i] += (octave.pixels[i] - l) / range;
  }
  const auto [lo, hi] = std::minmax_element(tex.pixels.begin(), tex.pixels.end());
  const float l = *lo, range = std::max(*hi - *lo, 1e-6f);
  for (float& v : tex.pixels) v = (v - l) / range;
  return tex;
}

std::vector<Image> render_frames(std::span<const flowgrid::FlowField> flows, int width, int height,
                                 std::uint64_t seed) {
  const Image tex = make_texture(2 * width, 2 * height, seed);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  double tx = 0.0, ty = 0.0, angle = 0.0;
  std::vector<Image> frames;
  frames.reserve(flows.size() + 1);
  auto render = [&]() {
    Image img(width, height);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double px = x - cx - tx, py = y - cy - ty;
        const double qx = ca * px + sa * py + cx;
        const double qy = -sa * px + ca * py + cy;
        img.at(x, y) = sample_periodic(tex, qx, qy);
      }
    }
    frames.push_back(std::move(img));
  };
  render();
  for (const auto& f : flows) {
    // Least-squares translation plus rotation rate from the grid.
    double mu = 0, mv = 0;
    for (int c = 0; c < f.cells(); ++c) {
      mu += f.u[c];
      mv += f.v[c];
    }
    mu /= f.cells();
    mv /= f.cells();
    double num = 0, den = 0;
    for (int r = 0; r < f.m_y; ++r) {
      for (int c = 0; c < f.m_x; ++c) {
        const double xo = (c + 0.5) * width / f.m_x - 0.5 - cx;
        num += (f.v[static_cast<std::size_t>(r) * f.m_x + c] - mv) * xo;
        den += xo * xo;
      }
    }
    tx += mu;
    ty += mv;
    angle += den > 0 ? num / den : 0.0;
    render();
  }
  return frames;
}

}  // namespace egoid::synth
