#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"

namespace mmlut {

// 4D fusion table. Axes in fixed order: visible luminance (v), infrared
// intensity (i), gradient magnitude (g), scene code (s). Storage is row-major
// with s fastest, then g, then i, then v. Entries are output luminance in
// [0, 255] levels; they are only clamped when a fused pixel is produced, so
// training may move them freely.
template <class S>
struct LutGridT {
  int points = 0;  // grid points per axis
  S bin = S(17);   // divisor mapping a [0,255] value to axis coordinates
  std::vector<S> entries;

  LutGridT() = default;
  LutGridT(int points_, S bin_)
      : points(points_),
        bin(bin_),
        entries(static_cast<size_t>(points_) * points_ * points_ * points_, S(0)) {}

  size_t index(int v, int i, int g, int s) const {
    return ((static_cast<size_t>(v) * points + i) * points + g) * points + s;
  }
  S& at(int v, int i, int g, int s) { return entries[index(v, i, g, s)]; }
  const S& at(int v, int i, int g, int s) const {
    return entries[index(v, i, g, s)];
  }
};

using LutGrid = LutGridT<float>;

// Identity-flavored start point: the average of the two intensity axes,
// constant along the gradient and scene axes.
template <class S>
LutGridT<S> make_average_grid(int points, S bin) {
  LutGridT<S> grid(points, bin);
  for (int v = 0; v < points; ++v) {
    for (int i = 0; i < points; ++i) {
      S value = clamp255(bin * S(v + i) / S(2));
      for (int g = 0; g < points; ++g) {
        for (int s = 0; s < points; ++s) grid.at(v, i, g, s) = value;
      }
    }
  }
  return grid;
}

// Continuous position along one axis: coordinate clamped to [0, points-1],
// cell index clamped to [0, points-2], fraction in [0, 1]. `interior` is
// false when the clamp was active, i.e. the coordinate no longer responds
// to the input value.
template <class S>
struct AxisCoordT {
  S coord = S(0);
  int cell = 0;
  S frac = S(0);
  bool interior = true;
};

template <class S>
inline AxisCoordT<S> axis_coord(S value, S bin, int points) {
  AxisCoordT<S> out;
  S raw = value / bin;
  S hi = S(points - 1);
  out.interior = raw > S(0) && raw < hi;
  out.coord = std::clamp(raw, S(0), hi);
  out.cell = std::min(static_cast<int>(out.coord), points - 2);
  if (out.cell < 0) out.cell = 0;
  out.frac = out.coord - S(out.cell);
  return out;
}

template <class S>
struct Coord4T {
  AxisCoordT<S> v, i, g, s;
};

template <class S>
inline Coord4T<S> to_coords(S n_v, S n_i, S g_v, S s_j, S bin, int points) {
  return Coord4T<S>{axis_coord(n_v, bin, points), axis_coord(n_i, bin, points),
                    axis_coord(g_v, bin, points), axis_coord(s_j, bin, points)};
}

// The 16 corner weights of the surrounding cell, ordered with the v-axis
// offset slowest and the s-axis offset fastest. Each weight is the product
// of per-axis factors frac (offset 1) or 1-frac (offset 0); they are all in
// [0, 1] and sum to 1.
template <class S>
inline std::array<S, 16> corner_weights(const Coord4T<S>& c) {
  const S wv[2] = {S(1) - c.v.frac, c.v.frac};
  const S wi[2] = {S(1) - c.i.frac, c.i.frac};
  const S wg[2] = {S(1) - c.g.frac, c.g.frac};
  const S ws[2] = {S(1) - c.s.frac, c.s.frac};
  std::array<S, 16> out;
  int n = 0;
  for (int h = 0; h < 2; ++h) {
    for (int p = 0; p < 2; ++p) {
      for (int q = 0; q < 2; ++q) {
        for (int r = 0; r < 2; ++r) out[n++] = wv[h] * wi[p] * wg[q] * ws[r];
      }
    }
  }
  return out;
}

// Quadrilinear interpolation over the 16 cell corners.
template <class S>
inline S lookup(const LutGridT<S>& grid, const Coord4T<S>& c) {
  const int P = grid.points;
  const size_t sg = static_cast<size_t>(P);
  const size_t si = sg * P;
  const size_t sv = si * P;
  const S* e = grid.entries.data() +
               grid.index(c.v.cell, c.i.cell, c.g.cell, c.s.cell);
  const S wv[2] = {S(1) - c.v.frac, c.v.frac};
  const S wi[2] = {S(1) - c.i.frac, c.i.frac};
  const S wg[2] = {S(1) - c.g.frac, c.g.frac};
  const S ws0 = S(1) - c.s.frac, ws1 = c.s.frac;
  S acc = S(0);
  for (int h = 0; h < 2; ++h) {
    for (int p = 0; p < 2; ++p) {
      for (int q = 0; q < 2; ++q) {
        const S* corner = e + h * sv + p * si + q * sg;
        acc += wv[h] * wi[p] * wg[q] * (ws0 * corner[0] + ws1 * corner[1]);
      }
    }
  }
  return acc;
}

// Derivatives of the interpolated value with respect to the four continuous
// coordinates (not the raw [0,255] inputs; divide by `bin` and gate on
// `interior` to chain further).
template <class S>
struct CoordGrad4T {
  S dv = S(0), di = S(0), dg = S(0), ds = S(0);
};

// Backward pass for one lookup. Adds upstream * weight into grad_entries for
// each of the 16 corners (pass nullptr to skip) and returns the coordinate
// derivatives scaled by upstream. The gradient buffer has its own scalar
// type so float grids can accumulate into 64-bit buffers.
template <class S, class GA>
inline CoordGrad4T<S> lookup_backward(const LutGridT<S>& grid,
                                      const Coord4T<S>& c, S upstream,
                                      GA* grad_entries) {
  const int P = grid.points;
  const size_t sg = static_cast<size_t>(P);
  const size_t si = sg * P;
  const size_t sv = si * P;
  const size_t base = grid.index(c.v.cell, c.i.cell, c.g.cell, c.s.cell);
  const S* e = grid.entries.data() + base;
  const S wv[2] = {S(1) - c.v.frac, c.v.frac};
  const S wi[2] = {S(1) - c.i.frac, c.i.frac};
  const S wg[2] = {S(1) - c.g.frac, c.g.frac};
  const S ws[2] = {S(1) - c.s.frac, c.s.frac};
  // Per-axis sign of the weight-factor derivative: -1 for offset 0, +1 for 1.
  const S dsign[2] = {S(-1), S(1)};

  CoordGrad4T<S> out;
  for (int h = 0; h < 2; ++h) {
    for (int p = 0; p < 2; ++p) {
      for (int q = 0; q < 2; ++q) {
        for (int r = 0; r < 2; ++r) {
          const size_t off = h * sv + p * si + q * sg + r;
          const S entry = e[off];
          const S w = wv[h] * wi[p] * wg[q] * ws[r];
          if (grad_entries) {
            grad_entries[base + off] += static_cast<GA>(upstream * w);
          }
          out.dv += dsign[h] * wi[p] * wg[q] * ws[r] * entry;
          out.di += wv[h] * dsign[p] * wg[q] * ws[r] * entry;
          out.dg += wv[h] * wi[p] * dsign[q] * ws[r] * entry;
          out.ds += wv[h] * wi[p] * wg[q] * dsign[r] * entry;
        }
      }
    }
  }
  out.dv *= upstream;
  out.di *= upstream;
  out.dg *= upstream;
  out.ds *= upstream;
  return out;
}

// Per-pixel table lookup over whole planes; the fused luminance. Rows are
// independent, so the thread count never changes the output bytes.
template <class S>
PlaneT<S> fuse_luminance(const LutGridT<S>& grid, const PlaneT<S>& n_v,
                         const PlaneT<S>& n_i, const PlaneT<S>& g_v,
                         const PlaneT<S>& s_j, int threads = 1) {
  if (n_v.width != n_i.width || n_v.height != n_i.height ||
      n_v.width != g_v.width || n_v.height != g_v.height ||
      n_v.width != s_j.width || n_v.height != s_j.height) {
    fail(ErrorCode::dimension_mismatch, "fuse_luminance: plane size mismatch");
  }
  PlaneT<S> out(n_v.width, n_v.height);
  const S bin = grid.bin;
  const int points = grid.points;
  parallel_for(n_v.height, threads, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y) {
      const size_t row = static_cast<size_t>(y) * n_v.width;
      for (int x = 0; x < n_v.width; ++x) {
        const size_t idx = row + x;
        Coord4T<S> c = to_coords(n_v.data[idx], n_i.data[idx], g_v.data[idx],
                                 s_j.data[idx], bin, points);
        out.data[idx] = clamp255(lookup(grid, c));
      }
    }
  });
  return out;
}

}  // namespace mmlut
