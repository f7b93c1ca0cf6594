#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"

namespace mmlut {

// Reference fusion rules the table is distilled from. All of them map the
// two intensity encodings to one fused luminance plane on [0, 255].
enum class TeacherKind {
  average,            // (n_v + n_i) / 2
  max_luminance,      // max(n_v, n_i)
  laplacian_pyramid,  // per-band max-magnitude blend, averaged base
};

inline TeacherKind parse_teacher(const std::string& name) {
  if (name == "avg") return TeacherKind::average;
  if (name == "maxlum") return TeacherKind::max_luminance;
  if (name == "lappyr") return TeacherKind::laplacian_pyramid;
  fail(ErrorCode::invalid_argument,
       "unknown teacher '" + name + "' (expected avg, maxlum or lappyr)");
}

inline const char* teacher_name(TeacherKind kind) {
  switch (kind) {
    case TeacherKind::average: return "avg";
    case TeacherKind::max_luminance: return "maxlum";
    case TeacherKind::laplacian_pyramid: return "lappyr";
  }
  return "?";
}

inline constexpr int kDefaultPyramidLevels = 4;

namespace detail {

// 5-tap binomial [1 4 6 4 1]/16 blur, separable, edge replicated.
template <class S>
PlaneT<S> binomial_blur(const PlaneT<S>& src) {
  PlaneT<S> tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      tmp.at(x, y) = (src.at_clamped(x - 2, y) + S(4) * src.at_clamped(x - 1, y) +
                      S(6) * src.at(x, y) + S(4) * src.at_clamped(x + 1, y) +
                      src.at_clamped(x + 2, y)) /
                     S(16);
    }
  }
  PlaneT<S> out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      out.at(x, y) = (tmp.at_clamped(x, y - 2) + S(4) * tmp.at_clamped(x, y - 1) +
                      S(6) * tmp.at(x, y) + S(4) * tmp.at_clamped(x, y + 1) +
                      tmp.at_clamped(x, y + 2)) /
                     S(16);
    }
  }
  return out;
}

// Blur then keep even samples; output is ceil(n/2) per axis.
template <class S>
PlaneT<S> pyramid_reduce(const PlaneT<S>& src) {
  PlaneT<S> blurred = binomial_blur(src);
  PlaneT<S> out((src.width + 1) / 2, (src.height + 1) / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = blurred.at(2 * x, 2 * y);
  }
  return out;
}

// Inverse of the decimation: zero-stuffed upsampling convolved with the
// doubled binomial kernel, expressed directly per output parity. Both
// phases have unit weight sums, so constants are preserved exactly.
template <class S>
PlaneT<S> expand_rows(const PlaneT<S>& src, int out_width) {
  PlaneT<S> out(out_width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      int t = x / 2;
      if (x % 2 == 0) {
        out.at(x, y) = (src.at_clamped(t - 1, y) + S(6) * src.at_clamped(t, y) +
                        src.at_clamped(t + 1, y)) /
                       S(8);
      } else {
        out.at(x, y) = (src.at_clamped(t, y) + src.at_clamped(t + 1, y)) / S(2);
      }
    }
  }
  return out;
}

template <class S>
PlaneT<S> expand_cols(const PlaneT<S>& src, int out_height) {
  PlaneT<S> out(src.width, out_height);
  for (int y = 0; y < out_height; ++y) {
    int t = y / 2;
    for (int x = 0; x < src.width; ++x) {
      if (y % 2 == 0) {
        out.at(x, y) = (src.at_clamped(x, t - 1) + S(6) * src.at_clamped(x, t) +
                        src.at_clamped(x, t + 1)) /
                       S(8);
      } else {
        out.at(x, y) = (src.at_clamped(x, t) + src.at_clamped(x, t + 1)) / S(2);
      }
    }
  }
  return out;
}

template <class S>
PlaneT<S> pyramid_expand(const PlaneT<S>& src, int out_width, int out_height) {
  return expand_cols(expand_rows(src, out_width), out_height);
}

}  // namespace detail

// Gaussian pyramid with `levels` reductions; level 0 is the input.
template <class S>
std::vector<PlaneT<S>> gaussian_pyramid(const PlaneT<S>& src, int levels) {
  if (levels < 1) fail(ErrorCode::invalid_argument, "pyramid: levels must be >= 1");
  int min_dim = std::min(src.width, src.height);
  if ((min_dim >> levels) < 1) {
    fail(ErrorCode::invalid_argument,
         "pyramid: " + std::to_string(levels) + " levels is too deep for " +
             std::to_string(src.width) + "x" + std::to_string(src.height));
  }
  std::vector<PlaneT<S>> pyr;
  pyr.reserve(static_cast<size_t>(levels) + 1);
  pyr.push_back(src);
  for (int l = 0; l < levels; ++l) pyr.push_back(detail::pyramid_reduce(pyr.back()));
  return pyr;
}

// Laplacian-pyramid fusion: band-pass coefficients keep whichever source has
// the larger magnitude (first argument wins ties), the residual base band is
// averaged, and the reconstruction is clamped to [0, 255].
template <class S>
PlaneT<S> fuse_laplacian_pyramid(const PlaneT<S>& a, const PlaneT<S>& b,
                                 int levels = kDefaultPyramidLevels) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorCode::dimension_mismatch, "pyramid fusion: plane size mismatch");
  }
  std::vector<PlaneT<S>> ga = gaussian_pyramid(a, levels);
  std::vector<PlaneT<S>> gb = gaussian_pyramid(b, levels);

  // Fused base band.
  PlaneT<S> current(ga.back().width, ga.back().height);
  for (size_t i = 0; i < current.size(); ++i) {
    current.data[i] = (ga.back().data[i] + gb.back().data[i]) / S(2);
  }

  // Walk back up, fusing one band per level.
  for (int l = levels - 1; l >= 0; --l) {
    const PlaneT<S>& la = ga[static_cast<size_t>(l)];
    const PlaneT<S>& lb = gb[static_cast<size_t>(l)];
    PlaneT<S> up_a = detail::pyramid_expand(ga[static_cast<size_t>(l) + 1], la.width, la.height);
    PlaneT<S> up_b = detail::pyramid_expand(gb[static_cast<size_t>(l) + 1], lb.width, lb.height);
    PlaneT<S> up_f = detail::pyramid_expand(current, la.width, la.height);
    PlaneT<S> next(la.width, la.height);
    for (size_t i = 0; i < next.size(); ++i) {
      S band_a = la.data[i] - up_a.data[i];
      S band_b = lb.data[i] - up_b.data[i];
      S band = std::abs(band_a) >= std::abs(band_b) ? band_a : band_b;
      next.data[i] = up_f.data[i] + band;
    }
    current = std::move(next);
  }
  for (auto& v : current.data) v = clamp255(v);
  return current;
}

// Dispatch over the teacher family.
template <class S>
PlaneT<S> teacher_fuse(TeacherKind kind, const PlaneT<S>& n_v, const PlaneT<S>& n_i,
                       int pyramid_levels = kDefaultPyramidLevels) {
  if (n_v.width != n_i.width || n_v.height != n_i.height) {
    fail(ErrorCode::dimension_mismatch, "teacher_fuse: plane size mismatch");
  }
  PlaneT<S> out(n_v.width, n_v.height);
  switch (kind) {
    case TeacherKind::average:
      for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = (n_v.data[i] + n_i.data[i]) / S(2);
      }
      return out;
    case TeacherKind::max_luminance:
      for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = std::max(n_v.data[i], n_i.data[i]);
      }
      return out;
    case TeacherKind::laplacian_pyramid:
      return fuse_laplacian_pyramid(n_v, n_i, pyramid_levels);
  }
  fail(ErrorCode::invalid_argument, "teacher_fuse: bad teacher kind");
}

}  // namespace mmlut
