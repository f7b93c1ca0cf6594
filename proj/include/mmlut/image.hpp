#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mmlut/common.hpp"

namespace mmlut {

// Single-channel raster, row-major, origin top-left. All pixel values across
// the pipeline live on the [0, 255] scale regardless of the scalar type; the
// scalar type is a template parameter so the same kernels can run in float
// for production and double for numerical checks.
template <class S>
struct PlaneT {
  int width = 0;
  int height = 0;
  std::vector<S> data;

  PlaneT() = default;
  PlaneT(int w, int h, S fill = S(0))
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  S& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const S& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  // at() with edge replication; used by every windowed operator.
  S at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
  }
};

template <class S>
struct ColorImageT {
  PlaneT<S> r, g, b;

  int width() const { return r.width; }
  int height() const { return r.height; }
};

// One registered infrared/visible capture. Both images share dimensions;
// loaders enforce this before a pair is constructed.
template <class S>
struct ImagePairT {
  PlaneT<S> ir;        // single-channel infrared intensity
  ColorImageT<S> vis;  // visible RGB
  std::string name;    // pairing key (filename stem)

  int width() const { return ir.width; }
  int height() const { return ir.height; }
};

using ImagePlane = PlaneT<float>;
using ColorImage = ColorImageT<float>;
using ImagePair = ImagePairT<float>;

template <class S>
inline S clamp255(S v) {
  return std::clamp(v, S(0), S(255));
}

// Full-range BT.601 luma. White maps to 255 exactly (after the clamp), which
// downstream code relies on for grid-aligned inputs.
template <class S>
inline S bt601_luma(S r, S g, S b) {
  return clamp255(S(0.299) * r + S(0.587) * g + S(0.114) * b);
}

template <class S>
struct YCbCrImageT {
  PlaneT<S> y, cb, cr;
};

using YCbCrImage = YCbCrImageT<float>;

// Full-range BT.601 with chroma offset 128. Outputs clamped to [0, 255];
// the round trip through both conversions stays within one level.
template <class S>
YCbCrImageT<S> rgb_to_ycbcr(const ColorImageT<S>& img) {
  YCbCrImageT<S> out;
  int w = img.width(), h = img.height();
  out.y = PlaneT<S>(w, h);
  out.cb = PlaneT<S>(w, h);
  out.cr = PlaneT<S>(w, h);
  for (size_t i = 0; i < out.y.size(); ++i) {
    S r = img.r.data[i], g = img.g.data[i], b = img.b.data[i];
    out.y.data[i] = bt601_luma(r, g, b);
    out.cb.data[i] =
        clamp255(S(128) - S(0.168735892) * r - S(0.331264108) * g + S(0.5) * b);
    out.cr.data[i] =
        clamp255(S(128) + S(0.5) * r - S(0.418687589) * g - S(0.081312411) * b);
  }
  return out;
}

template <class S>
ColorImageT<S> ycbcr_to_rgb(const PlaneT<S>& y, const PlaneT<S>& cb,
                            const PlaneT<S>& cr) {
  if (y.width != cb.width || y.height != cb.height || y.width != cr.width ||
      y.height != cr.height) {
    fail(ErrorCode::dimension_mismatch, "ycbcr_to_rgb: plane size mismatch");
  }
  ColorImageT<S> out;
  out.r = PlaneT<S>(y.width, y.height);
  out.g = PlaneT<S>(y.width, y.height);
  out.b = PlaneT<S>(y.width, y.height);
  for (size_t i = 0; i < y.size(); ++i) {
    S yy = y.data[i];
    S pb = cb.data[i] - S(128);
    S pr = cr.data[i] - S(128);
    out.r.data[i] = clamp255(yy + S(1.402) * pr);
    out.g.data[i] = clamp255(yy - S(0.344136286) * pb - S(0.714136286) * pr);
    out.b.data[i] = clamp255(yy + S(1.772) * pb);
  }
  return out;
}

// Crops aligned across both modalities of one pair.
template <class S>
struct PatchT {
  PlaneT<S> ir;
  ColorImageT<S> vis;
  int source_index = 0;  // dataset position the crop came from
  int x0 = 0, y0 = 0;    // top-left offset in the source image
};

template <class S>
using PatchBatchT = std::vector<PatchT<S>>;

using Patch = PatchT<float>;
using PatchBatch = PatchBatchT<float>;

template <class S>
PlaneT<S> crop_plane(const PlaneT<S>& src, int x0, int y0, int w, int h) {
  PlaneT<S> out(w, h);
  for (int y = 0; y < h; ++y) {
    const S* row = &src.at(x0, y0 + y);
    std::copy(row, row + w, &out.at(0, y));
  }
  return out;
}

// Draws `count` crops of size x size. Source image and top-left offset are
// both uniform draws from `rng`, so a fixed seed reproduces the batch
// sequence exactly on every platform.
template <class S>
PatchBatchT<S> sample_patches(const std::vector<ImagePairT<S>>& dataset,
                              int count, int size, Rng& rng) {
  if (dataset.empty()) fail(ErrorCode::empty_dataset, "sample_patches: empty dataset");
  for (const auto& pair : dataset) {
    if (pair.width() < size || pair.height() < size) {
      fail(ErrorCode::image_too_small,
           "sample_patches: image '" + pair.name + "' is " +
               std::to_string(pair.width()) + "x" + std::to_string(pair.height()) +
               ", need at least " + std::to_string(size) + "x" + std::to_string(size));
    }
  }
  PatchBatchT<S> batch;
  batch.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    int idx = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(dataset.size())));
    const auto& pair = dataset[static_cast<size_t>(idx)];
    int x0 = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(pair.width() - size + 1)));
    int y0 = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(pair.height() - size + 1)));
    PatchT<S> p;
    p.ir = crop_plane(pair.ir, x0, y0, size, size);
    p.vis.r = crop_plane(pair.vis.r, x0, y0, size, size);
    p.vis.g = crop_plane(pair.vis.g, x0, y0, size, size);
    p.vis.b = crop_plane(pair.vis.b, x0, y0, size, size);
    p.source_index = idx;
    p.x0 = x0;
    p.y0 = y0;
    batch.push_back(std::move(p));
  }
  return batch;
}

}  // namespace mmlut
