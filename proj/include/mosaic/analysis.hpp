#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "mosaic/score_machines.hpp"

namespace mosaic {

struct PixelConsistency {
  std::uint32_t nearest = 0;   // dictionary index of the L2-closest patch
  double distance_sq = 0.0;    // to the sample's window
  double deviation = 0.0;      // max-abs channel gap |phi(x) - varphi(0)|
  bool pass = false;           // deviation <= tau
  bool tie = false;            // near-equal distance with a differing center
};

/// Per-pixel nearest-patch assignment against the local-consistency
/// condition: at a locally consistent point every pixel equals the center
/// of the L2-nearest eligible patch to its window.
struct ConsistencyReport {
  double tau = 0.0;
  int height = 0;
  int width = 0;
  std::vector<PixelConsistency> pixels;   // row-major
  double pass_fraction = 0.0;
  double max_deviation = 0.0;
  std::vector<std::uint32_t> failing;     // linear pixel ids with pass = false
  std::vector<std::uint32_t> tied;        // linear pixel ids with cross-center ties
};

namespace detail {

/// Nearest patch among candidate rows at unit scale; ties within a 1e-9
/// relative gap are inspected: identical centers collapse (duplicates),
/// differing centers get reported.
inline PixelConsistency nearest_patch(const ImageGrid& sample, int row, int col,
                                      const ScoringSet& set, PaddingMode pad, int patch_size,
                                      double tau) {
  const std::size_t dim = set.dim;
  std::vector<double> q(dim);
  double qn = 0.0;
  extract_query(sample, row, col, patch_size, pad, q.data(), qn);

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  std::vector<double> dist(set.count());
  for (std::size_t i = 0; i < set.count(); ++i) {
    double dot = dot_f(q.data(), set.row(i), dim);
    double d = qn - 2.0 * dot + set.norms[i];
    dist[i] = d;
    if (d < best) {
      best = d;
      best_i = i;
    }
  }

  PixelConsistency out;
  out.nearest = set.rep[best_i];
  out.distance_sq = best;
  const int C = set.channels;
  double dev = 0.0;
  for (int ch = 0; ch < C; ++ch) {
    double gap = std::abs(static_cast<double>(sample.at(row, col, ch)) -
                          static_cast<double>(set.centers[best_i * C + ch]));
    dev = std::max(dev, gap);
  }
  out.deviation = dev;
  out.pass = dev <= tau;

  const double tie_gap = 1e-9 * std::max(best, 1e-30);
  for (std::size_t i = 0; i < set.count(); ++i) {
    if (i == best_i || dist[i] - best > tie_gap) continue;
    for (int ch = 0; ch < C; ++ch)
      if (std::abs(static_cast<double>(set.centers[i * C + ch]) -
                   static_cast<double>(set.centers[best_i * C + ch])) > 1e-12)
        out.tie = true;
  }
  return out;
}

}  // namespace detail

/// Checks the locally-consistent-point condition of a sample against an
/// LS / ELS / BELS dictionary at tolerance tau (per-pixel, raw patches:
/// the t -> 0 limit has no noise scaling).
inline ConsistencyReport verify_local_consistency(const ImageGrid& sample,
                                                  const PatchDictionary& dict,
                                                  MachineVariant variant, double tau,
                                                  std::optional<int> label = std::nullopt) {
  require(variant == MachineVariant::LS || variant == MachineVariant::ELS ||
              variant == MachineVariant::BELS,
          "verify_local_consistency: variant must be LS, ELS, or BELS");
  require(sample.channels() == dict.channels(), "verify_local_consistency: channel mismatch");
  if (variant == MachineVariant::ELS)
    require(dict.padding() == PaddingMode::Circular,
            "verify_local_consistency: ELS needs a circular dictionary");
  if (variant == MachineVariant::BELS)
    require(dict.padding() == PaddingMode::Zero,
            "verify_local_consistency: BELS needs a zero-padding dictionary");
  if (variant == MachineVariant::LS)
    require(sample.height() == dict.image_height() && sample.width() == dict.image_width(),
            "verify_local_consistency: LS sample shape must match dictionary geometry");

  const int H = sample.height();
  const int W = sample.width();
  const int P = dict.patch_size();
  const PaddingMode pad = dict.padding();

  ConsistencyReport report;
  report.tau = tau;
  report.height = H;
  report.width = W;
  report.pixels.resize(static_cast<std::size_t>(H) * W);

  if (variant == MachineVariant::ELS) {
    ScoringSet set = make_scoring_set(dict, detail::label_filtered_indices(dict, label), true);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        report.pixels[static_cast<std::size_t>(r) * W + c] =
            detail::nearest_patch(sample, r, c, set, pad, P, tau);
  } else if (variant == MachineVariant::BELS) {
    std::map<BorderSignature, ScoringSet> sets;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        BorderSignature sig = window_signature(Window{P, r, c}, H, W);
        auto it = sets.find(sig);
        if (it == sets.end())
          it = sets.emplace(sig, make_scoring_set(dict, eligible_patches(dict, sig, label), true))
                   .first;
        report.pixels[static_cast<std::size_t>(r) * W + c] =
            detail::nearest_patch(sample, r, c, it->second, pad, P, tau);
      }
  } else {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        auto view = location_restricted_view(dict, r, c, label);
        require(!view.empty(), "verify_local_consistency: no patches at location");
        ScoringSet set = make_scoring_set(dict, view, true);
        report.pixels[static_cast<std::size_t>(r) * W + c] =
            detail::nearest_patch(sample, r, c, set, pad, P, tau);
      }
  }

  std::size_t passed = 0;
  for (std::size_t i = 0; i < report.pixels.size(); ++i) {
    const auto& px = report.pixels[i];
    report.max_deviation = std::max(report.max_deviation, px.deviation);
    if (px.pass)
      ++passed;
    else
      report.failing.push_back(static_cast<std::uint32_t>(i));
    if (px.tie) report.tied.push_back(static_cast<std::uint32_t>(i));
  }
  report.pass_fraction = static_cast<double>(passed) / static_cast<double>(report.pixels.size());
  return report;
}

/// Coefficient of determination over all pixels and channels jointly,
/// with the second argument as the reference. Can be negative.
template <typename T>
double pixelwise_r2(const Grid<T>& candidate, const Grid<T>& reference) {
  require(candidate.same_shape(reference), "pixelwise_r2: shape mismatch");
  double mean = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) mean += static_cast<double>(reference.data()[i]);
  mean /= static_cast<double>(reference.size());

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    double r = static_cast<double>(reference.data()[i]);
    double c = static_cast<double>(candidate.data()[i]);
    ss_res += (c - r) * (c - r);
    ss_tot += (r - mean) * (r - mean);
  }
  require(ss_tot > 0.0, "pixelwise_r2: reference has zero variance");
  return 1.0 - ss_res / ss_tot;
}

/// Symmetric alternative: squared Pearson correlation.
template <typename T>
double pearson_r2(const Grid<T>& a, const Grid<T>& b) {
  require(a.same_shape(b), "pearson_r2: shape mismatch");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += static_cast<double>(a.data()[i]);
    mb += static_cast<double>(b.data()[i]);
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = static_cast<double>(a.data()[i]) - ma;
    double db = static_cast<double>(b.data()[i]) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, "pearson_r2: zero variance");
  return (sab * sab) / (saa * sbb);
}

struct MemorizationResult {
  double distance = 0.0;  // L2 over the whole image
  std::size_t argmin = 0; // lowest index on ties
};

inline MemorizationResult memorization_distance(const ImageGrid& sample,
                                                const std::vector<ImageGrid>& data) {
  require(!data.empty(), "memorization_distance: empty training set");
  MemorizationResult out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data[i].same_shape(sample), "memorization_distance: shape mismatch");
    double d = 0.0;
    for (std::size_t j = 0; j < sample.size(); ++j) {
      double diff = static_cast<double>(sample.data()[j]) - static_cast<double>(data[i].data()[j]);
      d += diff * diff;
    }
    if (d < best) {
      best = d;
      out.argmin = i;
    }
  }
  out.distance = std::sqrt(best);
  return out;
}

/// Finite-difference receptive-field probe: heatmap(y) is the L1 norm of
/// the Jacobian block of the machine output at pixel x with respect to the
/// input pixel y, estimated by central differences at step epsilon.
inline Grid<double> receptive_field_probe(const ScoreMachine& machine, const ImageGrid& phi,
                                          int t_index, const NoiseSchedule& sched, int x_row,
                                          int x_col, double epsilon, int scale = 0) {
  require(epsilon > 0.0, "receptive_field_probe: epsilon must be positive");
  const int H = phi.height();
  const int W = phi.width();
  const int C = phi.channels();
  Grid<double> heat(H, W, 1);

  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double total = 0.0;
      for (int ch_in = 0; ch_in < C; ++ch_in) {
        ImageGrid plus = phi;
        ImageGrid minus = phi;
        plus.at(r, c, ch_in) = static_cast<float>(plus.at(r, c, ch_in) + epsilon);
        minus.at(r, c, ch_in) = static_cast<float>(minus.at(r, c, ch_in) - epsilon);
        ScoreGrid sp = machine.score(plus, t_index, sched, scale);
        ScoreGrid sm = machine.score(minus, t_index, sched, scale);
        for (int ch_out = 0; ch_out < C; ++ch_out)
          total += std::abs(sp.at(x_row, x_col, ch_out) - sm.at(x_row, x_col, ch_out)) /
                   (2.0 * epsilon);
      }
      heat.at(r, c, 0) = total;
    }
  }
  return heat;
}

}  // namespace mosaic
