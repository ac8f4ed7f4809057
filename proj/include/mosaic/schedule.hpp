#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mosaic/grid.hpp"

namespace mosaic {

enum class ScheduleKind { Cosine, Linear, Custom };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Linear: return "linear";
    default: return "custom";
  }
}

/// Discretized alpha-bar sequence on the uniform grid t = i/steps,
/// i = 0..steps. Strictly decreasing from 1 toward 0; the reverse-time
/// drift gamma_t is never materialized (the DDIM stepper needs only
/// alpha-bar values).
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha_bar, ScheduleKind kind)
      : alpha_bar_(std::move(alpha_bar)), kind_(kind) {
    require(alpha_bar_.size() >= 2, "NoiseSchedule: need at least 2 grid points");
    require(alpha_bar_.front() > 0.999 && alpha_bar_.front() <= 1.0,
            "NoiseSchedule: alpha_bar(0) must lie in (0.999, 1]");
    require(alpha_bar_.back() >= 0.0 && alpha_bar_.back() < 0.01,
            "NoiseSchedule: alpha_bar(1) must lie in [0, 0.01)");
    for (std::size_t i = 0; i + 1 < alpha_bar_.size(); ++i)
      require(alpha_bar_[i] > alpha_bar_[i + 1], "NoiseSchedule: alpha_bar must be strictly decreasing");
    for (double a : alpha_bar_) require(a >= 0.0 && a <= 1.0, "NoiseSchedule: alpha_bar values must be in [0,1]");
  }

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }

  double alpha_bar(int t_index) const {
    require(t_index >= 0 && t_index <= steps(), "NoiseSchedule: step index out of range");
    return alpha_bar_[static_cast<std::size_t>(t_index)];
  }

  /// Normalized time of a step index.
  double time(int t_index) const { return static_cast<double>(t_index) / steps(); }

  const std::vector<double>& values() const { return alpha_bar_; }
  ScheduleKind kind() const { return kind_; }

 private:
  std::vector<double> alpha_bar_;
  ScheduleKind kind_;
};

/// Standard cosine schedule with offset s = 0.008:
///   alpha_bar(t) = cos^2(((t+s)/(1+s)) * pi/2) / cos^2((s/(1+s)) * pi/2)
/// Values are clamped to [1e-5, 1-1e-5] except alpha_bar(0) = 1. Where the
/// lower clamp would flatten the tail (large step counts), consecutive
/// values are nudged apart to keep the sequence strictly decreasing.
inline NoiseSchedule cosine_schedule(int steps) {
  require(steps >= 1, "cosine_schedule: steps must be >= 1");
  constexpr double s = 0.008;
  constexpr double half_pi = 1.5707963267948966;
  const double f0 = std::cos(s / (1.0 + s) * half_pi);
  const double denom = f0 * f0;

  std::vector<double> a(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    double c = std::cos((t + s) / (1.0 + s) * half_pi);
    double v = c * c / denom;
    if (i == 0) {
      a[0] = 1.0;
      continue;
    }
    if (v < 1e-5) v = 1e-5;
    if (v > 1.0 - 1e-5) v = 1.0 - 1e-5;
    a[static_cast<std::size_t>(i)] = v;
  }
  // The 1e-5 floor can tie consecutive tail values once steps is large;
  // lift each one just above its successor so strict monotonicity holds.
  for (int i = steps - 1; i >= 1; --i) {
    std::size_t k = static_cast<std::size_t>(i);
    if (a[k] <= a[k + 1]) a[k] = a[k + 1] * (1.0 + 1e-9);
  }
  return NoiseSchedule(std::move(a), ScheduleKind::Cosine);
}

/// Alpha-bar linear in t from 1 down to 1e-5.
inline NoiseSchedule linear_schedule(int steps) {
  require(steps >= 1, "linear_schedule: steps must be >= 1");
  std::vector<double> a(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    a[static_cast<std::size_t>(i)] = 1.0 - (1.0 - 1e-5) * t;
  }
  a[0] = 1.0;
  return NoiseSchedule(std::move(a), ScheduleKind::Linear);
}

inline NoiseSchedule custom_schedule(std::vector<double> alpha_bar) {
  return NoiseSchedule(std::move(alpha_bar), ScheduleKind::Custom);
}

inline NoiseSchedule make_schedule(const std::string& kind, int steps) {
  if (kind == "cosine") return cosine_schedule(steps);
  if (kind == "linear") return linear_schedule(steps);
  throw Error("unknown schedule kind: " + kind);
}

/// phi_t = sqrt(alpha_bar) * img + sqrt(1 - alpha_bar) * eta, elementwise.
inline ImageGrid forward_noise(const ImageGrid& img, int t_index, const ImageGrid& eta,
                               const NoiseSchedule& sched) {
  require(img.same_shape(eta), "forward_noise: eta shape must match image shape");
  const double abar = sched.alpha_bar(t_index);
  const double sa = std::sqrt(abar);
  const double sn = std::sqrt(1.0 - abar);
  ImageGrid out(img.height(), img.width(), img.channels());
  out.set_label(img.label());
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] = static_cast<float>(sa * img.data()[i] + sn * eta.data()[i]);
  return out;
}

/// Tweedie relation s_t(phi) = -eta_hat / sqrt(1 - alpha_bar), inverted:
/// eta_hat = -sqrt(1 - alpha_bar) * score.
inline ScoreGrid score_to_noise(const ScoreGrid& score, int t_index, const NoiseSchedule& sched) {
  const double abar = sched.alpha_bar(t_index);
  require(abar < 1.0, "score_to_noise: alpha_bar = 1 has zero noise variance");
  const double sn = std::sqrt(1.0 - abar);
  ScoreGrid out(score.height(), score.width(), score.channels());
  for (std::size_t i = 0; i < score.size(); ++i) out.data()[i] = -sn * score.data()[i];
  return out;
}

inline ScoreGrid noise_to_score(const ScoreGrid& noise, int t_index, const NoiseSchedule& sched) {
  const double abar = sched.alpha_bar(t_index);
  require(abar < 1.0, "noise_to_score: alpha_bar = 1 has zero noise variance");
  const double sn = std::sqrt(1.0 - abar);
  ScoreGrid out(noise.height(), noise.width(), noise.channels());
  for (std::size_t i = 0; i < noise.size(); ++i) out.data()[i] = -noise.data()[i] / sn;
  return out;
}

}  // namespace mosaic
