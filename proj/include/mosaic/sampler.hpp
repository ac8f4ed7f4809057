#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mosaic/score_machines.hpp"

namespace mosaic {

/// Time-dependent locality scale P(t): one odd window size per reverse
/// step, nonincreasing as t decreases (large scales early, small late).
class ScaleSchedule {
 public:
  /// sizes[i] is the window size used when evaluating at step index i+1,
  /// so the vector is ordered from late (t -> 0) to early (t = 1).
  explicit ScaleSchedule(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    require(!sizes_.empty(), "ScaleSchedule: empty");
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      require(sizes_[i] >= 3 && sizes_[i] % 2 == 1, "ScaleSchedule: entries must be odd and >= 3");
      if (i > 0)
        require(sizes_[i - 1] <= sizes_[i],
                "ScaleSchedule: scale must be nonincreasing as t decreases");
    }
  }

  static ScaleSchedule constant(int size, int steps) {
    return ScaleSchedule(std::vector<int>(static_cast<std::size_t>(steps), size));
  }

  int steps() const { return static_cast<int>(sizes_.size()); }

  /// Scale for evaluating the machine at step index t_index (1..steps).
  int at_step(int t_index) const {
    require(t_index >= 1 && t_index <= steps(), "ScaleSchedule: step index out of range");
    return sizes_[static_cast<std::size_t>(t_index) - 1];
  }

  const std::vector<int>& sizes() const { return sizes_; }

 private:
  std::vector<int> sizes_;
};

struct TrajectoryStep {
  int t_index = 0;
  ImageGrid state;             // phi at t_index, before the integrator step
  ImageGrid noise_prediction;  // eta_hat predicted at this state
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<TrajectoryStep> steps;  // ordered t_index = T down to 1
  ImageGrid final_state;              // phi_0
  std::optional<int> label;
  std::string config_digest;
};

struct SampleResult {
  ImageGrid image;
  std::optional<Trajectory> trajectory;
};

/// Deterministic DDIM update: denoise to the x0 estimate, then renoise to
/// the target step with the same predicted noise.
inline ImageGrid ddim_step(const ImageGrid& state, int from, int to, const ScoreGrid& noise_hat,
                           const NoiseSchedule& sched) {
  require(from > to, "ddim_step: must integrate backwards in time");
  require(state.height() == noise_hat.height() && state.width() == noise_hat.width() &&
              state.channels() == noise_hat.channels(),
          "ddim_step: noise grid shape mismatch");
  const double abar_from = sched.alpha_bar(from);
  const double abar_to = sched.alpha_bar(to);
  require(abar_from < 1.0, "ddim_step: alpha_bar(from) = 1");

  const double sa_from = std::sqrt(abar_from);
  const double sn_from = std::sqrt(1.0 - abar_from);
  const double sa_to = std::sqrt(abar_to);
  const double sn_to = std::sqrt(1.0 - abar_to);

  ImageGrid out(state.height(), state.width(), state.channels());
  out.set_label(state.label());
  for (std::size_t i = 0; i < state.size(); ++i) {
    double eta = noise_hat.data()[i];
    double x0 = (static_cast<double>(state.data()[i]) - sn_from * eta) / sa_from;
    out.data()[i] = static_cast<float>(sa_to * x0 + sn_to * eta);
  }
  return out;
}

/// Explicit Euler step of the reverse flow -phi_dot = gamma_t (phi + s),
/// with gamma averaged over [to, from] by the finite difference
/// gamma = -d(alpha_bar)/dt / (2 alpha_bar) at the interval midpoint.
inline ImageGrid euler_step(const ImageGrid& state, int from, int to, const ScoreGrid& score,
                            const NoiseSchedule& sched) {
  require(from > to, "euler_step: must integrate backwards in time");
  require(state.height() == score.height() && state.width() == score.width() &&
              state.channels() == score.channels(),
          "euler_step: score grid shape mismatch");
  const double abar_from = sched.alpha_bar(from);
  const double abar_to = sched.alpha_bar(to);
  const double dt = sched.time(from) - sched.time(to);
  const double gamma_bar = (abar_to - abar_from) / (dt * (abar_from + abar_to));

  ImageGrid out(state.height(), state.width(), state.channels());
  out.set_label(state.label());
  for (std::size_t i = 0; i < state.size(); ++i) {
    double phi = state.data()[i];
    out.data()[i] = static_cast<float>(phi + dt * gamma_bar * (phi + score.data()[i]));
  }
  return out;
}

inline ImageGrid gaussian_image(int height, int width, int channels, std::uint64_t seed) {
  ImageGrid out(height, width, channels);
  GaussianRng rng(seed);
  for (auto& v : out.data()) v = static_cast<float>(rng.next());
  return out;
}

/// Runs the full reverse process: draw phi_T ~ N(0, I) from the seed, then
/// at each step evaluate the machine at the scheduled scale, convert the
/// score to a noise prediction, and take one DDIM step. Deterministic for
/// a fixed (seed, configuration) regardless of thread count.
inline SampleResult sample(const ScoreMachine& machine, const NoiseSchedule& sched,
                           const std::optional<ScaleSchedule>& scales, std::uint64_t seed,
                           int height, int width, int channels,
                           std::optional<int> label = std::nullopt, bool record = false) {
  const int steps = sched.steps();
  if (machine.uses_dictionary()) {
    require(scales.has_value(), "sample: locality machines need a scale schedule");
    require(scales->steps() == steps, "sample: scale schedule length must equal step count");
    for (int s : scales->sizes()) machine.dictionary(s);  // fail early on missing scales
  }

  ImageGrid state = gaussian_image(height, width, channels, seed);
  state.set_label(label);

  SampleResult result;
  if (record) {
    result.trajectory = Trajectory{};
    result.trajectory->seed = seed;
    result.trajectory->label = label;
    result.trajectory->steps.reserve(static_cast<std::size_t>(steps));
  }

  for (int k = steps; k >= 1; --k) {
    const int scale = machine.uses_dictionary() ? scales->at_step(k) : 0;
    ScoreGrid score = machine.score(state, k, sched, scale, label);
    // The prediction is carried at storage precision so a recorded
    // trajectory replays the integrator bit-exactly.
    ImageGrid eta_hat = score_to_noise(score, k, sched).cast<float>();
    if (record) {
      TrajectoryStep ts;
      ts.t_index = k;
      ts.state = state;
      ts.noise_prediction = eta_hat;
      result.trajectory->steps.push_back(std::move(ts));
    }
    state = ddim_step(state, k, k - 1, eta_hat.cast<double>(), sched);
    if (!state.all_finite())
      throw Error("sample: non-finite state after step index " + std::to_string(k));
  }

  state.set_label(label);
  result.image = state;
  if (record) result.trajectory->final_state = result.image;
  return result;
}

}  // namespace mosaic
