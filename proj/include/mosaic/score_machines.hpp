#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mosaic/distance_kernel.hpp"
#include "mosaic/schedule.hpp"

namespace mosaic {

enum class MachineVariant { IS, ES, LS, ELS, BELS };

inline const char* to_string(MachineVariant v) {
  switch (v) {
    case MachineVariant::IS: return "is";
    case MachineVariant::ES: return "es";
    case MachineVariant::LS: return "ls";
    case MachineVariant::ELS: return "els";
    default: return "bels";
  }
}

inline MachineVariant variant_from_string(const std::string& s) {
  if (s == "is") return MachineVariant::IS;
  if (s == "es") return MachineVariant::ES;
  if (s == "ls") return MachineVariant::LS;
  if (s == "els") return MachineVariant::ELS;
  if (s == "bels") return MachineVariant::BELS;
  throw Error("unknown machine variant: " + s);
}

struct MachineOptions {
  std::optional<int> label;
  std::optional<int> top_k;  // approximation, off by default
  bool dedup = true;         // observably equivalent grouping of identical patches
  int threads = 0;           // 0 = hardware concurrency
};

/// Softmax belief over candidate origins for one query: raw log-weights
/// -(||.||^2)/(2(1-abar)) and the normalized weights. Normalization goes
/// through log-sum-exp with max subtraction; weights sum to 1 within 1e-12.
struct PosteriorWeights {
  std::vector<std::uint32_t> candidates;  // original candidate indices
  std::vector<double> log_weights;        // unnormalized
  std::vector<double> weights;            // normalized
  std::size_t argmax = 0;                 // position of largest weight (lowest index on ties)
  double max_weight = 0.0;
};

namespace detail {

inline PosteriorWeights normalize_log_weights(std::vector<std::uint32_t> candidates,
                                              std::vector<double> logw) {
  PosteriorWeights pw;
  pw.candidates = std::move(candidates);
  pw.log_weights = std::move(logw);
  std::size_t arg = 0;
  double maxw = pw.log_weights[0];
  for (std::size_t i = 1; i < pw.log_weights.size(); ++i)
    if (pw.log_weights[i] > maxw) {
      maxw = pw.log_weights[i];
      arg = i;
    }
  double den = 0.0;
  pw.weights.resize(pw.log_weights.size());
  for (std::size_t i = 0; i < pw.log_weights.size(); ++i) {
    double delta = pw.log_weights[i] - maxw;
    pw.weights[i] = delta < kExpCutoff ? 0.0 : std::exp(delta);
    den += pw.weights[i];
  }
  for (double& w : pw.weights) w /= den;
  pw.argmax = arg;
  pw.max_weight = pw.weights[arg];
  return pw;
}

inline void check_query_inputs(const ImageGrid& phi, double abar) {
  require(abar < 1.0, "score machine: alpha_bar = 1 has zero noise variance");
  require(phi.channels() <= kMaxChannels, "score machine: unsupported channel count");
}

inline std::vector<std::uint32_t> label_filtered_indices(const PatchDictionary& dict,
                                                         std::optional<int> label) {
  std::vector<std::uint32_t> idx;
  if (label) {
    auto it = dict.label_index().find(*label);
    require(it != dict.label_index().end(), "score machine: no patches with requested label");
    idx = it->second;
  } else {
    idx.resize(dict.size());
    for (std::size_t i = 0; i < dict.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  }
  return idx;
}

inline std::vector<std::size_t> label_filtered_images(const std::vector<ImageGrid>& data,
                                                      std::optional<int> label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!label || (data[i].label() && *data[i].label() == *label)) idx.push_back(i);
  require(!idx.empty(), "score machine: no images with requested label");
  return idx;
}

inline void extract_query(const ImageGrid& img, int row, int col, int patch_size, PaddingMode pad,
                          double* out, double& norm_sq) {
  const int half = patch_size / 2;
  const int H = img.height();
  const int W = img.width();
  const int C = img.channels();
  std::size_t k = 0;
  double n = 0.0;
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc) {
      int r = row + dr;
      int c = col + dc;
      if (pad == PaddingMode::Circular) {
        r = ((r % H) + H) % H;
        c = ((c % W) + W) % W;
        for (int ch = 0; ch < C; ++ch) {
          double v = img.at(r, c, ch);
          out[k++] = v;
          n += v * v;
        }
      } else if (r >= 0 && r < H && c >= 0 && c < W) {
        for (int ch = 0; ch < C; ++ch) {
          double v = img.at(r, c, ch);
          out[k++] = v;
          n += v * v;
        }
      } else {
        for (int ch = 0; ch < C; ++ch) out[k++] = 0.0;
      }
    }
  }
  norm_sq = n;
}

/// Blocked per-pixel softmax scoring of a pixel set against one candidate
/// set. Each pixel's accumulation is sequential in candidate order, so
/// results are independent of the thread partition.
inline void locality_engine(const ImageGrid& phi, const std::vector<std::uint32_t>& pixels,
                            const ScoringSet& set, PaddingMode pad, int patch_size, double abar,
                            std::optional<int> top_k, int threads, ScoreGrid& out) {
  const int W = phi.width();
  const int C = phi.channels();
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));
  const double inv_var1 = 1.0 / (1.0 - abar);
  const std::size_t dim = set.dim;
  const std::size_t row_block = std::clamp<std::size_t>(16384 / std::max<std::size_t>(dim, 1), 32, 1024);
  constexpr std::size_t kPixelBlock = 48;

  parallel_for(pixels.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> queries(kPixelBlock * dim);
    std::vector<double> qnorms(kPixelBlock);
    std::vector<PixelAccum> accums(kPixelBlock);
    std::vector<double> logw_buf;

    for (std::size_t pb = begin; pb < end; pb += kPixelBlock) {
      const std::size_t pe = std::min(end, pb + kPixelBlock);
      const std::size_t q_count = pe - pb;
      for (std::size_t p = 0; p < q_count; ++p) {
        std::uint32_t pix = pixels[pb + p];
        extract_query(phi, static_cast<int>(pix) / W, static_cast<int>(pix) % W, patch_size, pad,
                      queries.data() + p * dim, qnorms[p]);
        accums[p] = PixelAccum{};
      }

      if (!top_k) {
        for (std::size_t rb = 0; rb < set.count(); rb += row_block) {
          std::size_t re = std::min(set.count(), rb + row_block);
          for (std::size_t p = 0; p < q_count; ++p)
            accumulate_rows(set, rb, re, queries.data() + p * dim, qnorms[p], sa, inv_two_var,
                            accums[p]);
        }
      } else {
        // Truncated posterior: keep the k largest log-weights per pixel.
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(*top_k), set.count());
        logw_buf.resize(set.count());
        const double sa2 = sa * sa;
        for (std::size_t p = 0; p < q_count; ++p) {
          const double* q = queries.data() + p * dim;
          for (std::size_t i = 0; i < set.count(); ++i) {
            double dot = detail::dot_f(q, set.row(i), dim);
            double d = qnorms[p] - 2.0 * sa * dot + sa2 * set.norms[i];
            logw_buf[i] = set.log_counts[i] - d * inv_two_var;
          }
          std::vector<std::size_t> order(set.count());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                            [&](std::size_t a, std::size_t b) {
                              if (logw_buf[a] != logw_buf[b]) return logw_buf[a] > logw_buf[b];
                              return a < b;
                            });
          for (std::size_t j = 0; j < k; ++j) {
            std::size_t i = order[j];
            accums[p].add(logw_buf[i], set.centers.data() + i * set.channels, set.channels,
                          set.rep[i]);
          }
        }
      }

      for (std::size_t p = 0; p < q_count; ++p) {
        std::uint32_t pix = pixels[pb + p];
        int r = static_cast<int>(pix) / W;
        int c = static_cast<int>(pix) % W;
        for (int ch = 0; ch < C; ++ch) {
          double mean_center = accums[p].weighted_center(ch);
          out.at(r, c, ch) = (sa * mean_center - static_cast<double>(phi.at(r, c, ch))) * inv_var1;
        }
      }
    }
  });
}

inline std::vector<std::uint32_t> all_pixels(const ImageGrid& phi) {
  std::vector<std::uint32_t> pixels(phi.pixel_count());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint32_t>(i);
  return pixels;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IS: exact score of the Gaussian mixture over whole training images.
// ---------------------------------------------------------------------------

inline PosteriorWeights ideal_weights(const ImageGrid& phi, int t_index,
                                      const std::vector<ImageGrid>& data, const NoiseSchedule& sched,
                                      std::optional<int> label = std::nullopt) {
  require(!data.empty(), "ideal score: empty training set");
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));
  auto images = detail::label_filtered_images(data, label);

  std::vector<std::uint32_t> cands;
  std::vector<double> logw;
  for (std::size_t i : images) {
    const ImageGrid& img = data[i];
    require(img.same_shape(phi), "ideal score: image shape mismatch");
    double d = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) {
      double diff = static_cast<double>(phi.data()[j]) - sa * static_cast<double>(img.data()[j]);
      d += diff * diff;
    }
    cands.push_back(static_cast<std::uint32_t>(i));
    logw.push_back(-d * inv_two_var);
  }
  return detail::normalize_log_weights(std::move(cands), std::move(logw));
}

inline ScoreGrid ideal_score(const ImageGrid& phi, int t_index, const std::vector<ImageGrid>& data,
                             const NoiseSchedule& sched, const MachineOptions& opts = {}) {
  PosteriorWeights pw = ideal_weights(phi, t_index, data, sched, opts.label);
  const double abar = sched.alpha_bar(t_index);
  const double sa = std::sqrt(abar);
  const double inv_var1 = 1.0 / (1.0 - abar);

  ScoreGrid mean(phi.height(), phi.width(), phi.channels());
  for (std::size_t k = 0; k < pw.candidates.size(); ++k) {
    const ImageGrid& img = data[pw.candidates[k]];
    const double w = pw.weights[k];
    for (std::size_t j = 0; j < mean.size(); ++j)
      mean.data()[j] += w * static_cast<double>(img.data()[j]);
  }
  ScoreGrid out(phi.height(), phi.width(), phi.channels());
  for (std::size_t j = 0; j < out.size(); ++j)
    out.data()[j] = (sa * mean.data()[j] - static_cast<double>(phi.data()[j])) * inv_var1;
  return out;
}

// ---------------------------------------------------------------------------
// ES: IS over the circular-translation orbit of the training set. The orbit
// is streamed, never materialized. Orbit candidate i*H*W + dr*W + dc is
// image i translated by (dr, dc).
// ---------------------------------------------------------------------------

inline PosteriorWeights equivariant_weights(const ImageGrid& phi, int t_index,
                                            const std::vector<ImageGrid>& data,
                                            const NoiseSchedule& sched,
                                            std::optional<int> label = std::nullopt) {
  require(!data.empty(), "equivariant score: empty training set");
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));
  auto images = detail::label_filtered_images(data, label);
  const int H = phi.height();
  const int W = phi.width();
  const int C = phi.channels();

  std::vector<std::uint32_t> cands;
  std::vector<double> logw;
  cands.reserve(images.size() * phi.pixel_count());
  for (std::size_t i : images) {
    const ImageGrid& img = data[i];
    require(img.same_shape(phi), "equivariant score: image shape mismatch");
    for (int dr = 0; dr < H; ++dr) {
      for (int dc = 0; dc < W; ++dc) {
        double d = 0.0;
        for (int r = 0; r < H; ++r) {
          int sr = (r - dr + H) % H;
          for (int c = 0; c < W; ++c) {
            int sc = (c - dc + W) % W;
            for (int ch = 0; ch < C; ++ch) {
              double diff = static_cast<double>(phi.at(r, c, ch)) -
                            sa * static_cast<double>(img.at(sr, sc, ch));
              d += diff * diff;
            }
          }
        }
        cands.push_back(static_cast<std::uint32_t>(i * phi.pixel_count() + dr * W + dc));
        logw.push_back(-d * inv_two_var);
      }
    }
  }
  return detail::normalize_log_weights(std::move(cands), std::move(logw));
}

inline ScoreGrid equivariant_score(const ImageGrid& phi, int t_index,
                                   const std::vector<ImageGrid>& data, const NoiseSchedule& sched,
                                   const MachineOptions& opts = {}) {
  PosteriorWeights pw = equivariant_weights(phi, t_index, data, sched, opts.label);
  const double abar = sched.alpha_bar(t_index);
  const double sa = std::sqrt(abar);
  const double inv_var1 = 1.0 / (1.0 - abar);
  const int H = phi.height();
  const int W = phi.width();
  const int C = phi.channels();

  ScoreGrid mean(H, W, C);
  for (std::size_t k = 0; k < pw.candidates.size(); ++k) {
    std::uint32_t cand = pw.candidates[k];
    std::size_t img_idx = cand / phi.pixel_count();
    int dr = static_cast<int>((cand % phi.pixel_count()) / W);
    int dc = static_cast<int>(cand % static_cast<std::size_t>(W));
    const ImageGrid& img = data[img_idx];
    const double w = pw.weights[k];
    for (int r = 0; r < H; ++r) {
      int sr = (r - dr + H) % H;
      for (int c = 0; c < W; ++c) {
        int sc = (c - dc + W) % W;
        for (int ch = 0; ch < C; ++ch)
          mean.at(r, c, ch) += w * static_cast<double>(img.at(sr, sc, ch));
      }
    }
  }
  ScoreGrid out(H, W, C);
  for (std::size_t j = 0; j < out.size(); ++j)
    out.data()[j] = (sa * mean.data()[j] - static_cast<double>(phi.data()[j])) * inv_var1;
  return out;
}

// ---------------------------------------------------------------------------
// LS: per-pixel posterior over same-location training patches.
// ---------------------------------------------------------------------------

inline PosteriorWeights local_weights(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                                      const NoiseSchedule& sched, int row, int col,
                                      std::optional<int> label = std::nullopt) {
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));
  std::vector<std::uint32_t> cands = location_restricted_view(dict, row, col, label);
  require(!cands.empty(), "local score: no patches recorded at this location");

  const std::size_t dim = dict.dim();
  std::vector<double> q(dim);
  double qn = 0.0;
  detail::extract_query(phi, row, col, dict.patch_size(), dict.padding(), q.data(), qn);

  std::vector<double> logw(cands.size());
  const double sa2 = sa * sa;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    double dot = detail::dot_f(q.data(), dict.patch(cands[k]), dim);
    logw[k] = -(qn - 2.0 * sa * dot + sa2 * dict.norm_sq(cands[k])) * inv_two_var;
  }
  return detail::normalize_log_weights(std::move(cands), std::move(logw));
}

inline ScoreGrid local_score(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                             const NoiseSchedule& sched, const MachineOptions& opts = {}) {
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  require(phi.channels() == dict.channels(), "local score: channel mismatch");
  require(phi.height() == dict.image_height() && phi.width() == dict.image_width(),
          "local score: image shape must match dictionary geometry");
  const double sa = std::sqrt(abar);
  const double inv_var1 = 1.0 / (1.0 - abar);
  const int W = phi.width();
  const int C = phi.channels();

  ScoreGrid out(phi.height(), phi.width(), C);
  auto pixels = detail::all_pixels(phi);
  parallel_for(pixels.size(), opts.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      int r = static_cast<int>(pixels[p]) / W;
      int c = static_cast<int>(pixels[p]) % W;
      PosteriorWeights pw = local_weights(phi, t_index, dict, sched, r, c, opts.label);
      for (int ch = 0; ch < C; ++ch) {
        double mean = 0.0;
        for (std::size_t k = 0; k < pw.candidates.size(); ++k)
          mean += pw.weights[k] * static_cast<double>(dict.center(pw.candidates[k])[ch]);
        out.at(r, c, ch) = (sa * mean - static_cast<double>(phi.at(r, c, ch))) * inv_var1;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// ELS: per-pixel posterior over all training patches at all locations.
// ---------------------------------------------------------------------------

inline PosteriorWeights els_weights(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                                    const NoiseSchedule& sched, int row, int col,
                                    std::optional<int> label = std::nullopt) {
  require(dict.padding() == PaddingMode::Circular, "els: dictionary must use circular padding");
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));
  std::vector<std::uint32_t> cands = detail::label_filtered_indices(dict, label);

  const std::size_t dim = dict.dim();
  std::vector<double> q(dim);
  double qn = 0.0;
  detail::extract_query(phi, row, col, dict.patch_size(), PaddingMode::Circular, q.data(), qn);

  std::vector<double> logw(cands.size());
  const double sa2 = sa * sa;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    double dot = detail::dot_f(q.data(), dict.patch(cands[k]), dim);
    logw[k] = -(qn - 2.0 * sa * dot + sa2 * dict.norm_sq(cands[k])) * inv_two_var;
  }
  return detail::normalize_log_weights(std::move(cands), std::move(logw));
}

inline ScoreGrid els_score_with_candidates(const ImageGrid& phi, int t_index,
                                           const PatchDictionary& dict, const NoiseSchedule& sched,
                                           const std::vector<std::uint32_t>& candidates,
                                           const MachineOptions& opts = {}) {
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  require(phi.channels() == dict.channels(), "els: channel mismatch");
  require(dict.patch_size() <= std::min(phi.height(), phi.width()),
          "els: window larger than image requires zero padding");
  require(!candidates.empty(), "els: empty candidate set");

  ScoringSet set = make_scoring_set(dict, candidates, opts.dedup && !opts.top_k);
  ScoreGrid out(phi.height(), phi.width(), phi.channels());
  auto pixels = detail::all_pixels(phi);
  detail::locality_engine(phi, pixels, set, PaddingMode::Circular, dict.patch_size(), abar,
                          opts.top_k, opts.threads, out);
  return out;
}

inline ScoreGrid els_score(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                           const NoiseSchedule& sched, const MachineOptions& opts = {}) {
  require(dict.padding() == PaddingMode::Circular, "els: dictionary must use circular padding");
  return els_score_with_candidates(phi, t_index, dict, sched,
                                   detail::label_filtered_indices(dict, opts.label), opts);
}

// ---------------------------------------------------------------------------
// BELS: ELS under zero padding; each pixel only sees patches whose border
// class matches the zeros visible in its own window.
// ---------------------------------------------------------------------------

inline PosteriorWeights bels_weights(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                                     const NoiseSchedule& sched, int row, int col,
                                     std::optional<int> label = std::nullopt) {
  require(dict.padding() == PaddingMode::Zero, "bels: dictionary must use zero padding");
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  const double sa = std::sqrt(abar);
  const double inv_two_var = 1.0 / (2.0 * (1.0 - abar));

  BorderSignature sig = window_signature(Window{dict.patch_size(), row, col}, phi.height(), phi.width());
  std::vector<std::uint32_t> cands = eligible_patches(dict, sig, label);

  const std::size_t dim = dict.dim();
  std::vector<double> q(dim);
  double qn = 0.0;
  detail::extract_query(phi, row, col, dict.patch_size(), PaddingMode::Zero, q.data(), qn);

  std::vector<double> logw(cands.size());
  const double sa2 = sa * sa;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    double dot = detail::dot_f(q.data(), dict.patch(cands[k]), dim);
    logw[k] = -(qn - 2.0 * sa * dot + sa2 * dict.norm_sq(cands[k])) * inv_two_var;
  }
  return detail::normalize_log_weights(std::move(cands), std::move(logw));
}

inline ScoreGrid bels_score(const ImageGrid& phi, int t_index, const PatchDictionary& dict,
                            const NoiseSchedule& sched, const MachineOptions& opts = {}) {
  require(dict.padding() == PaddingMode::Zero, "bels: dictionary must use zero padding");
  const double abar = sched.alpha_bar(t_index);
  detail::check_query_inputs(phi, abar);
  require(phi.channels() == dict.channels(), "bels: channel mismatch");

  const int H = phi.height();
  const int W = phi.width();
  const int P = dict.patch_size();

  // Pixels sharing a border signature share one candidate class.
  std::map<BorderSignature, std::vector<std::uint32_t>> groups;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      groups[window_signature(Window{P, r, c}, H, W)].push_back(static_cast<std::uint32_t>(r * W + c));

  ScoreGrid out(H, W, phi.channels());
  for (const auto& [sig, pixels] : groups) {
    std::vector<std::uint32_t> cands = eligible_patches(dict, sig, opts.label);
    ScoringSet set = make_scoring_set(dict, cands, opts.dedup && !opts.top_k);
    detail::locality_engine(phi, pixels, set, PaddingMode::Zero, P, abar, opts.top_k, opts.threads,
                            out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configured evaluator used by the sampler and CLI. Candidate scoring sets
// are prebuilt per (scale, border class), so evaluation is pure and
// thread-safe.
// ---------------------------------------------------------------------------

class ScoreMachine {
 public:
  static ScoreMachine ideal(std::vector<ImageGrid> data, MachineOptions opts = {}) {
    return ScoreMachine(MachineVariant::IS, std::move(data), {}, opts);
  }
  static ScoreMachine equivariant(std::vector<ImageGrid> data, MachineOptions opts = {}) {
    return ScoreMachine(MachineVariant::ES, std::move(data), {}, opts);
  }
  static ScoreMachine local(std::map<int, PatchDictionary> dicts, MachineOptions opts = {}) {
    return ScoreMachine(MachineVariant::LS, {}, std::move(dicts), opts);
  }
  static ScoreMachine els(std::map<int, PatchDictionary> dicts, MachineOptions opts = {}) {
    for (const auto& [p, d] : dicts)
      require(d.padding() == PaddingMode::Circular, "els machine: dictionaries must be circular");
    return ScoreMachine(MachineVariant::ELS, {}, std::move(dicts), opts);
  }
  static ScoreMachine bels(std::map<int, PatchDictionary> dicts, MachineOptions opts = {}) {
    for (const auto& [p, d] : dicts)
      require(d.padding() == PaddingMode::Zero, "bels machine: dictionaries must be zero-padded");
    return ScoreMachine(MachineVariant::BELS, {}, std::move(dicts), opts);
  }

  MachineVariant variant() const { return variant_; }
  const MachineOptions& options() const { return opts_; }
  bool uses_dictionary() const { return variant_ != MachineVariant::IS && variant_ != MachineVariant::ES; }
  const std::vector<ImageGrid>& images() const { return data_; }

  const PatchDictionary& dictionary(int scale) const {
    auto it = dicts_.find(scale);
    require(it != dicts_.end(),
            "score machine: no dictionary at scale " + std::to_string(scale));
    return it->second;
  }

  std::vector<int> scales() const {
    std::vector<int> out;
    for (const auto& [p, d] : dicts_) out.push_back(p);
    return out;
  }

  /// Evaluates the configured score at one reverse step. `scale` picks the
  /// locality window; IS and ES ignore it. A label override narrows the
  /// candidate set for class-conditional sampling.
  ScoreGrid score(const ImageGrid& phi, int t_index, const NoiseSchedule& sched, int scale = 0,
                  std::optional<int> label_override = std::nullopt) const {
    MachineOptions opts = opts_;
    if (label_override) opts.label = label_override;
    switch (variant_) {
      case MachineVariant::IS: return ideal_score(phi, t_index, data_, sched, opts);
      case MachineVariant::ES: return equivariant_score(phi, t_index, data_, sched, opts);
      case MachineVariant::LS: return local_score(phi, t_index, dictionary(scale), sched, opts);
      case MachineVariant::ELS: return els_score(phi, t_index, dictionary(scale), sched, opts);
      default: return bels_score(phi, t_index, dictionary(scale), sched, opts);
    }
  }

  /// Tweedie conversion of the score: eta_hat = -sqrt(1 - abar) * score.
  ScoreGrid noise_prediction(const ImageGrid& phi, int t_index, const NoiseSchedule& sched,
                             int scale = 0, std::optional<int> label_override = std::nullopt) const {
    return score_to_noise(score(phi, t_index, sched, scale, label_override), t_index, sched);
  }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a64(to_string(variant_), std::strlen(to_string(variant_)));
    for (const auto& img : data_) {
      h = fnv1a64(img.data().data(), img.data().size() * sizeof(float), h);
      int label = img.label().value_or(-1);
      h = fnv1a64(&label, sizeof(label), h);
    }
    for (const auto& [p, d] : dicts_) {
      std::uint64_t dh = d.digest();
      h = fnv1a64(&dh, sizeof(dh), h);
    }
    int label = opts_.label.value_or(-1);
    h = fnv1a64(&label, sizeof(label), h);
    int top_k = opts_.top_k.value_or(0);
    h = fnv1a64(&top_k, sizeof(top_k), h);
    return h;
  }

 private:
  ScoreMachine(MachineVariant variant, std::vector<ImageGrid> data,
               std::map<int, PatchDictionary> dicts, MachineOptions opts)
      : variant_(variant), data_(std::move(data)), dicts_(std::move(dicts)), opts_(opts) {
    if (uses_dictionary())
      require(!dicts_.empty(), "score machine: locality variants need at least one dictionary");
    else
      require(!data_.empty(), "score machine: IS/ES need whole-image data");
  }

  MachineVariant variant_;
  std::vector<ImageGrid> data_;
  std::map<int, PatchDictionary> dicts_;
  MachineOptions opts_;
};

}  // namespace mosaic
