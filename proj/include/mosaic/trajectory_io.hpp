#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mosaic/calibration.hpp"
#include "mosaic/tensor_io.hpp"

namespace mosaic {

// Trajectory file = TNS1 two-record sequence:
//   record 0: states,            shape [n_steps + 1, H, W, C]
//             meta: t_indices (T..1 then 0 for the final state), seed,
//                   label, config_digest, plus whatever the caller adds
//   record 1: noise predictions, shape [n_steps, H, W, C]
//             meta: t_indices (T..1)

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                             const nlohmann::json& extra_meta = nlohmann::json::object()) {
  require(!traj.steps.empty(), "trajectory io: empty trajectory");

  std::vector<ImageGrid> states;
  std::vector<ImageGrid> preds;
  std::vector<int> t_indices;
  for (const auto& step : traj.steps) {
    states.push_back(step.state);
    preds.push_back(step.noise_prediction);
    t_indices.push_back(step.t_index);
  }
  states.push_back(traj.final_state);

  TensorRecord state_rec = stack_to_record(states);
  std::vector<int> state_t = t_indices;
  state_t.push_back(0);
  state_rec.meta["t_indices"] = state_t;
  state_rec.meta["seed"] = traj.seed;
  state_rec.meta["config_digest"] = traj.config_digest;
  if (traj.label) state_rec.meta["label"] = *traj.label;
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) state_rec.meta[it.key()] = it.value();

  TensorRecord pred_rec = stack_to_record(preds);
  pred_rec.meta["t_indices"] = t_indices;

  write_tensor_sequence(path, {state_rec, pred_rec});
}

inline ReferenceTrajectory read_reference_trajectory(const std::filesystem::path& path) {
  auto records = read_tensor_sequence(path);
  require(records.size() >= 2, "trajectory io: expected states + predictions records");

  ReferenceTrajectory out;
  std::vector<ImageGrid> states = stack_from_record(records[0]);
  std::vector<ImageGrid> preds = stack_from_record(records[1]);
  std::vector<int> state_t = records[0].meta.at("t_indices").get<std::vector<int>>();
  std::vector<int> pred_t = records[1].meta.at("t_indices").get<std::vector<int>>();
  require(state_t.size() == states.size(), "trajectory io: state t_indices mismatch");
  require(pred_t.size() == preds.size(), "trajectory io: prediction t_indices mismatch");
  if (records[0].meta.contains("label")) out.label = records[0].meta["label"].get<int>();

  // Keep only steps that carry a prediction (the final t = 0 state doesn't).
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(state_t[i] == pred_t[i], "trajectory io: interleaved step mismatch");
    out.t_indices.push_back(pred_t[i]);
    out.states.push_back(states[i]);
    out.noise_predictions.push_back(preds[i]);
  }
  return out;
}

/// Loads every .tns trajectory in a directory (sorted order) as a ReferenceSet.
inline ReferenceSet read_reference_set(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), "trajectory io: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tns") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "trajectory io: no .tns files in " + dir.string());

  ReferenceSet out;
  out.provenance = dir.string();
  for (const auto& file : files) out.trajectories.push_back(read_reference_trajectory(file));
  return out;
}

}  // namespace mosaic
