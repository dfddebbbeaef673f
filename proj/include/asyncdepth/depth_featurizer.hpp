#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "asyncdepth/binary_io.hpp"
#include "asyncdepth/depth_renderer.hpp"
#include "asyncdepth/errors.hpp"

namespace asyncdepth {

inline constexpr std::uint32_t kDefaultFeatureScale = 8;

/// C x H' x W' feature map, channel-major then row-major.
struct FeatureTensor {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  static FeatureTensor filled(std::uint32_t c, std::uint32_t h, std::uint32_t w, float value) {
    return {c, h, w, std::vector<float>(std::size_t{c} * h * w, value)};
  }

  std::size_t plane() const noexcept { return std::size_t{height} * width; }
  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return data[c * plane() + std::size_t{y} * width + x];
  }
  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return data[c * plane() + std::size_t{y} * width + x];
  }

  bool same_shape(const FeatureTensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

/// Bilinear downsampling by an integer factor with empty (-1) pixels masked
/// out of the interpolation weights. Output cell (x, y) samples the input at
/// ((x + 0.5) * scale - 0.5, (y + 0.5) * scale - 0.5), clamped to the image.
/// Cells whose weighted support is all empty stay -1.
inline FeatureTensor downavg_featurize(const DepthMap& depth,
                                       std::uint32_t scale = kDefaultFeatureScale) {
  if (scale < 1) throw ContractViolation("downavg_featurize: scale must be >= 1");
  const std::uint32_t out_h = (depth.height + scale - 1) / scale;
  const std::uint32_t out_w = (depth.width + scale - 1) / scale;
  FeatureTensor out = FeatureTensor::filled(1, out_h, out_w, kEmptyDepth);
  if (depth.width == 0 || depth.height == 0) return out;

  struct Tap {
    std::uint32_t lo, hi;
    double w_lo, w_hi;
  };
  auto taps = [scale](std::uint32_t n_out, std::uint32_t n_in) {
    std::vector<Tap> t(n_out);
    const double max_coord = static_cast<double>(n_in - 1);
    for (std::uint32_t i = 0; i < n_out; ++i) {
      const double c = std::clamp((i + 0.5) * scale - 0.5, 0.0, max_coord);
      const auto lo = static_cast<std::uint32_t>(std::floor(c));
      const std::uint32_t hi = std::min(lo + 1, n_in - 1);
      const double frac = c - lo;
      t[i] = {lo, hi, 1.0 - frac, frac};
    }
    return t;
  };
  const auto ty = taps(out_h, depth.height);
  const auto tx = taps(out_w, depth.width);

  for (std::uint32_t y = 0; y < out_h; ++y) {
    for (std::uint32_t x = 0; x < out_w; ++x) {
      const std::uint32_t rows[2] = {ty[y].lo, ty[y].hi};
      const double wy[2] = {ty[y].w_lo, ty[y].w_hi};
      const std::uint32_t cols[2] = {tx[x].lo, tx[x].hi};
      const double wx[2] = {tx[x].w_lo, tx[x].w_hi};
      double acc = 0.0, weight = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const double w = wy[a] * wx[b];
          const float d = depth.at(cols[b], rows[a]);
          if (w > 0.0 && d != kEmptyDepth) {
            acc += w * d;
            weight += w;
          }
        }
      }
      if (weight > 0.0) out.at(0, y, x) = static_cast<float>(acc / weight);
    }
  }
  return out;
}

/// A depth feature tagged with the traversal it came from.
struct TraversalFeature {
  TraversalId traversal_id = 0;
  FeatureTensor tensor;
};

enum class PoolMode : std::uint8_t { mean, max };

/// Order-invariant pooling across traversals. Inputs are folded in ascending
/// traversal-id order (ties by tensor contents) with double accumulation, so
/// the result is bit-identical for any input permutation.
inline FeatureTensor pool_traversals(std::span<const TraversalFeature> feats,
                                     PoolMode mode = PoolMode::mean) {
  if (feats.empty()) throw ContractViolation("pool_traversals: empty input");
  for (const auto& f : feats) {
    if (!f.tensor.same_shape(feats.front().tensor)) {
      throw ContractViolation("pool_traversals: shape mismatch");
    }
  }
  std::vector<const TraversalFeature*> order;
  for (const auto& f : feats) order.push_back(&f);
  std::sort(order.begin(), order.end(), [](const TraversalFeature* a, const TraversalFeature* b) {
    if (a->traversal_id != b->traversal_id) return a->traversal_id < b->traversal_id;
    return std::lexicographical_compare(a->tensor.data.begin(), a->tensor.data.end(),
                                        b->tensor.data.begin(), b->tensor.data.end());
  });

  FeatureTensor out = order.front()->tensor;
  const std::size_t n = out.data.size();
  if (mode == PoolMode::max) {
    for (const auto* f : order) {
      for (std::size_t i = 0; i < n; ++i) out.data[i] = std::max(out.data[i], f->tensor.data[i]);
    }
    return out;
  }
  std::vector<double> acc(n, 0.0);
  for (const auto* f : order) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += f->tensor.data[i];
  }
  const auto count = static_cast<double>(order.size());
  for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(acc[i] / count);
  return out;
}

/// Pools untagged tensors, treating list position as the traversal id.
inline FeatureTensor pool_traversals(std::span<const FeatureTensor> feats,
                                     PoolMode mode = PoolMode::mean) {
  std::vector<TraversalFeature> tagged;
  for (std::size_t i = 0; i < feats.size(); ++i) tagged.push_back({i, feats[i]});
  return pool_traversals(std::span<const TraversalFeature>(tagged), mode);
}

/// Channel concatenation, image channels first.
inline FeatureTensor concat_features(const FeatureTensor& image, const FeatureTensor& depth) {
  if (image.height != depth.height || image.width != depth.width) {
    throw ContractViolation("concat_features: spatial size mismatch");
  }
  FeatureTensor out{image.channels + depth.channels, image.height, image.width, {}};
  out.data.reserve(image.data.size() + depth.data.size());
  out.data.insert(out.data.end(), image.data.begin(), image.data.end());
  out.data.insert(out.data.end(), depth.data.begin(), depth.data.end());
  return out;
}

/// Channels [first, first + count) of a tensor.
inline FeatureTensor slice_channels(const FeatureTensor& t, std::uint32_t first,
                                    std::uint32_t count) {
  if (first + count > t.channels) throw ContractViolation("slice_channels: out of range");
  FeatureTensor out{count, t.height, t.width, {}};
  const auto b = t.data.begin() + static_cast<std::ptrdiff_t>(first * t.plane());
  out.data.assign(b, b + static_cast<std::ptrdiff_t>(count * t.plane()));
  return out;
}

// ADTF file: magic, ndim u32, dims u32 (channels, height, width), f32 payload.

inline void write_tensor(std::ostream& os, const FeatureTensor& t) {
  io::write_magic(os, "ADTF");
  io::write_le(os, std::uint32_t{3});
  io::write_le(os, t.channels);
  io::write_le(os, t.height);
  io::write_le(os, t.width);
  io::write_f32_array(os, t.data);
}

inline void write_tensor(const std::filesystem::path& path, const FeatureTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_tensor(out, t);
}

/// Accepts ndim 3 (C, H, W) or ndim 2 (H, W, read as one channel).
inline FeatureTensor read_tensor(std::istream& is) {
  io::expect_magic(is, "ADTF");
  const auto ndim = io::read_le<std::uint32_t>(is);
  FeatureTensor t;
  if (ndim == 3) {
    t.channels = io::read_le<std::uint32_t>(is);
  } else if (ndim == 2) {
    t.channels = 1;
  } else {
    throw FormatError("ADTF: unsupported ndim " + std::to_string(ndim));
  }
  t.height = io::read_le<std::uint32_t>(is);
  t.width = io::read_le<std::uint32_t>(is);
  t.data.resize(std::size_t{t.channels} * t.height * t.width);
  io::read_f32_array(is, t.data);
  return t;
}

inline FeatureTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace asyncdepth
