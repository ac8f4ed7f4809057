#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "mosaic/sampler.hpp"

namespace mosaic {

/// Recorded reverse trajectories of an external reference model: per step,
/// the state the model saw and the noise prediction it emitted there.
struct ReferenceTrajectory {
  std::vector<int> t_indices;
  std::vector<ImageGrid> states;
  std::vector<ImageGrid> noise_predictions;
  std::optional<int> label;
};

struct ReferenceSet {
  std::vector<ReferenceTrajectory> trajectories;
  std::string provenance;
};

inline ReferenceTrajectory to_reference(const Trajectory& traj) {
  ReferenceTrajectory out;
  out.label = traj.label;
  for (const auto& step : traj.steps) {
    out.t_indices.push_back(step.t_index);
    out.states.push_back(step.state);
    out.noise_predictions.push_back(step.noise_prediction);
  }
  return out;
}

template <typename T>
double cosine_similarity(const Grid<T>& a, const Grid<T>& b) {
  require(a.same_shape(b), "cosine_similarity: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = static_cast<double>(a.data()[i]);
    double y = static_cast<double>(b.data()[i]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  require(na > 0.0 && nb > 0.0, "cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct CalibrationOptions {
  bool isotonic = false;    // project medians onto a nonincreasing-in-t schedule
  bool accept_raw = false;  // keep raw medians even if they violate monotonicity
};

struct CalibrationResult {
  std::vector<int> raw_medians;          // indexed like ScaleSchedule (t_index 1..steps)
  std::optional<ScaleSchedule> schedule; // present when valid (possibly after projection)
  std::vector<std::string> exclusions;   // trajectories/steps skipped and why
  std::vector<std::string> violations;   // monotonicity problems in the raw medians
};

namespace detail {

/// Lower median: element at index (n-1)/2 of the sorted values.
inline int lower_median(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

/// Pool-adjacent-violators fit of a nondecreasing sequence (ordered from
/// late to early t), then snap each level to the nearest candidate scale.
inline std::vector<int> isotonic_nondecreasing(const std::vector<int>& raw,
                                               const std::vector<int>& candidates) {
  std::vector<double> level(raw.begin(), raw.end());
  std::vector<double> weight(raw.size(), 1.0);
  std::vector<std::size_t> len(raw.size(), 1);
  std::size_t m = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    level[m] = raw[i];
    weight[m] = 1.0;
    len[m] = 1;
    ++m;
    while (m > 1 && level[m - 2] > level[m - 1]) {
      double w = weight[m - 2] + weight[m - 1];
      level[m - 2] = (level[m - 2] * weight[m - 2] + level[m - 1] * weight[m - 1]) / w;
      weight[m - 2] = w;
      len[m - 2] += len[m - 1];
      --m;
    }
  }
  std::vector<int> out;
  for (std::size_t b = 0; b < m; ++b) {
    int best = candidates.front();
    for (int c : candidates)
      if (std::abs(c - level[b]) < std::abs(best - level[b])) best = c;
    out.insert(out.end(), len[b], best);
  }
  return out;
}

}  // namespace detail

/// App-level scale calibration: for every recorded step of every reference
/// trajectory, evaluate the machine's noise prediction at each candidate
/// scale on the recorded state and keep the scale maximizing cosine
/// similarity with the reference prediction; the per-step schedule entry is
/// the lower median of the per-trajectory optima.
inline CalibrationResult calibrate_scales(const ReferenceSet& ref, const ScoreMachine& machine,
                                          const std::vector<int>& candidates,
                                          const NoiseSchedule& sched,
                                          const CalibrationOptions& opts = {}) {
  require(!ref.trajectories.empty(), "calibrate_scales: empty reference set");
  require(!candidates.empty(), "calibrate_scales: empty candidate list");
  std::vector<int> sorted_candidates = candidates;
  std::sort(sorted_candidates.begin(), sorted_candidates.end());
  for (int c : sorted_candidates) machine.dictionary(c);  // all scales must be prebuilt

  const int steps = sched.steps();
  CalibrationResult result;
  result.raw_medians.resize(static_cast<std::size_t>(steps));

  for (int t = 1; t <= steps; ++t) {
    std::vector<int> optima;
    for (std::size_t traj_i = 0; traj_i < ref.trajectories.size(); ++traj_i) {
      const auto& traj = ref.trajectories[traj_i];
      // Locate this step in the trajectory.
      std::size_t pos = traj.t_indices.size();
      for (std::size_t k = 0; k < traj.t_indices.size(); ++k)
        if (traj.t_indices[k] == t) pos = k;
      if (pos == traj.t_indices.size()) continue;

      const ImageGrid& state = traj.states[pos];
      const ImageGrid& ref_pred = traj.noise_predictions[pos];

      int best_scale = sorted_candidates.front();
      double best_sim = -2.0;
      bool usable = true;
      for (int scale : sorted_candidates) {
        ImageGrid pred =
            machine.noise_prediction(state, t, sched, scale, traj.label).cast<float>();
        double sim;
        try {
          sim = cosine_similarity(pred, ref_pred);
        } catch (const Error&) {
          result.exclusions.push_back("trajectory " + std::to_string(traj_i) + " step " +
                                      std::to_string(t) + ": zero-norm prediction");
          usable = false;
          break;
        }
        if (sim > best_sim) {
          best_sim = sim;
          best_scale = scale;
        }
      }
      if (usable) optima.push_back(best_scale);
    }
    require(!optima.empty(),
            "calibrate_scales: no usable trajectory at step " + std::to_string(t));
    result.raw_medians[static_cast<std::size_t>(t) - 1] = detail::lower_median(optima);
  }

  // Nonincreasing as t decreases means nondecreasing in storage order.
  for (std::size_t i = 1; i < result.raw_medians.size(); ++i)
    if (result.raw_medians[i - 1] > result.raw_medians[i])
      result.violations.push_back("scale increases from step index " + std::to_string(i + 1) +
                                  " to " + std::to_string(i));

  if (result.violations.empty()) {
    result.schedule = ScaleSchedule(result.raw_medians);
  } else if (opts.isotonic) {
    result.schedule = ScaleSchedule(detail::isotonic_nondecreasing(result.raw_medians, sorted_candidates));
  } else if (!opts.accept_raw) {
    std::string msg = "calibrate_scales: raw medians violate scale monotonicity (";
    for (const auto& v : result.violations) msg += v + "; ";
    msg += "rerun with isotonic projection or accept raw medians)";
    throw Error(msg);
  }
  return result;
}

}  // namespace mosaic
