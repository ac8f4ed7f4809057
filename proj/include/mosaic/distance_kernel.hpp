#pragma once

#include <cstdint>
#include <cstring>
#include <limits>
#include <unordered_map>
#include <vector>

#include "mosaic/patch_dictionary.hpp"

namespace mosaic {

inline constexpr int kMaxChannels = 4;

/// Log-weight increments below this (relative to the running max) underflow
/// exp() to zero, so skipping them leaves sums bitwise unchanged.
inline constexpr double kExpCutoff = -746.0;

namespace detail {

inline double dot_f(const double* q, const float* p, std::size_t dim) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= dim; j += 4) {
    s0 += q[j] * static_cast<double>(p[j]);
    s1 += q[j + 1] * static_cast<double>(p[j + 1]);
    s2 += q[j + 2] * static_cast<double>(p[j + 2]);
    s3 += q[j + 3] * static_cast<double>(p[j + 3]);
  }
  for (; j < dim; ++j) s0 += q[j] * static_cast<double>(p[j]);
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

/// Candidate rows gathered for repeated per-pixel scoring. With dedup
/// enabled, bit-identical rows are merged and their multiplicity carried
/// as an additive log-count on the weight (observably equivalent to the
/// full sum). Representatives keep the lowest source index.
struct ScoringSet {
  std::size_t dim = 0;
  int channels = 0;
  std::vector<float> rows;              // count x dim
  std::vector<double> norms;            // ||row||^2
  std::vector<float> centers;           // count x channels (pull targets)
  std::vector<double> log_counts;       // log multiplicity
  std::vector<std::uint32_t> rep;       // lowest original dictionary index
  std::size_t total_multiplicity = 0;

  std::size_t count() const { return norms.size(); }
  const float* row(std::size_t i) const { return rows.data() + i * dim; }
};

inline ScoringSet make_scoring_set(const PatchDictionary& dict,
                                   const std::vector<std::uint32_t>& indices, bool dedup) {
  ScoringSet set;
  set.dim = dict.dim();
  set.channels = dict.channels();
  set.total_multiplicity = indices.size();
  require(dict.channels() <= kMaxChannels, "scoring set: too many channels");

  if (!dedup) {
    set.rows.reserve(indices.size() * set.dim);
    for (std::uint32_t i : indices) {
      set.rows.insert(set.rows.end(), dict.patch(i), dict.patch(i) + set.dim);
      set.norms.push_back(dict.norm_sq(i));
      set.centers.insert(set.centers.end(), dict.center(i), dict.center(i) + dict.channels());
      set.log_counts.push_back(0.0);
      set.rep.push_back(i);
    }
    return set;
  }

  std::unordered_map<std::string, std::size_t> seen;
  seen.reserve(indices.size());
  std::vector<std::size_t> counts;
  const std::size_t bytes = set.dim * sizeof(float);
  for (std::uint32_t i : indices) {
    std::string key(reinterpret_cast<const char*>(dict.patch(i)), bytes);
    auto [it, inserted] = seen.emplace(std::move(key), set.norms.size());
    if (inserted) {
      set.rows.insert(set.rows.end(), dict.patch(i), dict.patch(i) + set.dim);
      set.norms.push_back(dict.norm_sq(i));
      set.centers.insert(set.centers.end(), dict.center(i), dict.center(i) + dict.channels());
      set.rep.push_back(i);
      counts.push_back(1);
    } else {
      ++counts[it->second];
    }
  }
  set.log_counts.resize(counts.size());
  for (std::size_t g = 0; g < counts.size(); ++g)
    set.log_counts[g] = counts[g] == 1 ? 0.0 : std::log(static_cast<double>(counts[g]));
  return set;
}

/// Online log-sum-exp state for one query pixel.
struct PixelAccum {
  double max_logw = -std::numeric_limits<double>::infinity();
  double den = 0.0;
  double num[kMaxChannels] = {0.0, 0.0, 0.0, 0.0};
  std::uint32_t arg_rep = 0;

  void add(double logw, const float* center, int channels, std::uint32_t rep_index) {
    double delta = logw - max_logw;
    if (delta > 0.0) {
      // New max: rescale previous mass.
      double scale = std::exp(-delta);
      den *= scale;
      for (int c = 0; c < channels; ++c) num[c] *= scale;
      max_logw = logw;
      arg_rep = rep_index;
      delta = 0.0;
    }
    if (delta < kExpCutoff) return;
    double w = std::exp(delta);
    den += w;
    for (int c = 0; c < channels; ++c) num[c] += w * static_cast<double>(center[c]);
  }

  double weighted_center(int c) const { return num[c] / den; }
};

/// Scores one block of candidate rows against one query window:
/// logw_i = log_count_i - ||q - sa * row_i||^2 / (2 (1 - abar)),
/// with the squared distance expanded through precomputed norms.
inline void accumulate_rows(const ScoringSet& set, std::size_t begin, std::size_t end,
                            const double* query, double query_norm, double sqrt_abar,
                            double inv_two_var, PixelAccum& acc) {
  const double sa2 = sqrt_abar * sqrt_abar;
  for (std::size_t i = begin; i < end; ++i) {
    double dot = detail::dot_f(query, set.row(i), set.dim);
    double d = query_norm - 2.0 * sqrt_abar * dot + sa2 * set.norms[i];
    double logw = set.log_counts[i] - d * inv_two_var;
    acc.add(logw, set.centers.data() + i * set.channels, set.channels, set.rep[i]);
  }
}

/// Batch distance kernel: entry (q, m) = ||query_q - sqrt_abar * patch_m||^2
/// over the whole dictionary, via the norm expansion.
inline std::vector<double> squared_distance_matrix(const std::vector<Patch>& queries,
                                                   const PatchDictionary& dict, double sqrt_abar) {
  const std::size_t dim = dict.dim();
  const std::size_t m = dict.size();
  std::vector<double> out(queries.size() * m);
  std::vector<double> q(dim);
  const double sa2 = sqrt_abar * sqrt_abar;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Patch& patch = queries[qi];
    require(patch.size == dict.patch_size() && patch.channels == dict.channels(),
            "squared_distance_matrix: query/dictionary shape mismatch");
    double qn = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      q[j] = patch.data[j];
      qn += q[j] * q[j];
    }
    constexpr std::size_t kBlock = 512;
    for (std::size_t b = 0; b < m; b += kBlock) {
      std::size_t e = std::min(m, b + kBlock);
      for (std::size_t i = b; i < e; ++i) {
        double dot = detail::dot_f(q.data(), dict.patch(i), dim);
        out[qi * m + i] = qn - 2.0 * sqrt_abar * dot + sa2 * dict.norm_sq(i);
      }
    }
  }
  return out;
}

}  // namespace mosaic
