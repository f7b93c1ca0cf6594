#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"
#include "mmlut/ssim.hpp"

namespace mmlut {

// Fusion-quality measures. Each takes the fused plane F and the two source
// planes (infrared A, visible luminance B); higher is better for all five.
// Histogram-based measures bin by the rounded 8-bit value.

namespace detail {

inline int bin_of(float v) {
  int b = static_cast<int>(std::lround(std::clamp(v, 0.0f, 255.0f)));
  return std::clamp(b, 0, 255);
}

inline std::array<double, 256> histogram256(const ImagePlane& img) {
  std::array<double, 256> h{};
  for (float v : img.data) h[static_cast<size_t>(bin_of(v))] += 1.0;
  double n = static_cast<double>(img.size());
  for (auto& v : h) v /= n;
  return h;
}

}  // namespace detail

// Shannon entropy (bits) of the 256-bin intensity histogram.
inline double entropy(const ImagePlane& img) {
  if (img.empty()) fail(ErrorCode::invalid_argument, "entropy: empty image");
  auto h = detail::histogram256(img);
  double e = 0.0;
  for (double p : h) {
    if (p > 0.0) e -= p * std::log2(p);
  }
  return e;
}

// Mutual information (bits) between two planes via the 256x256 joint
// histogram.
inline double mutual_information(const ImagePlane& a, const ImagePlane& b) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorCode::dimension_mismatch, "mutual_information: size mismatch");
  }
  if (a.empty()) fail(ErrorCode::invalid_argument, "mutual_information: empty image");
  std::vector<double> joint(256 * 256, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<size_t>(detail::bin_of(a.data[i])) * 256 +
          static_cast<size_t>(detail::bin_of(b.data[i]))] += 1.0;
  }
  double n = static_cast<double>(a.size());
  std::array<double, 256> pa{}, pb{};
  for (int i = 0; i < 256; ++i) {
    for (int j = 0; j < 256; ++j) {
      double p = joint[static_cast<size_t>(i) * 256 + j] / n;
      joint[static_cast<size_t>(i) * 256 + j] = p;
      pa[static_cast<size_t>(i)] += p;
      pb[static_cast<size_t>(j)] += p;
    }
  }
  double mi = 0.0;
  for (int i = 0; i < 256; ++i) {
    if (pa[static_cast<size_t>(i)] <= 0.0) continue;
    for (int j = 0; j < 256; ++j) {
      double p = joint[static_cast<size_t>(i) * 256 + j];
      if (p > 0.0 && pb[static_cast<size_t>(j)] > 0.0) {
        mi += p * std::log2(p / (pa[static_cast<size_t>(i)] * pb[static_cast<size_t>(j)]));
      }
    }
  }
  return mi;
}

// Total source-to-fused mutual information MI(F,A) + MI(F,B).
inline double fusion_mutual_information(const ImagePlane& fused,
                                        const ImagePlane& a, const ImagePlane& b) {
  return mutual_information(fused, a) + mutual_information(fused, b);
}

// Pearson correlation; a constant argument contributes 0 by convention.
inline double pearson_correlation(const ImagePlane& a, const ImagePlane& b) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorCode::dimension_mismatch, "correlation: size mismatch");
  }
  double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double da = a.data[i] - ma, db = b.data[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double fusion_correlation(const ImagePlane& fused, const ImagePlane& a,
                                 const ImagePlane& b) {
  return 0.5 * (pearson_correlation(fused, a) + pearson_correlation(fused, b));
}

// Mean of SSIM(F,A) and SSIM(F,B), computed in double precision.
inline double fusion_ssim(const ImagePlane& fused, const ImagePlane& a,
                          const ImagePlane& b) {
  auto to_double = [](const ImagePlane& p) {
    PlaneT<double> out(p.width, p.height);
    for (size_t i = 0; i < p.size(); ++i) out.data[i] = p.data[i];
    return out;
  };
  PlaneT<double> f = to_double(fused);
  return 0.5 * (ssim_mean(f, to_double(a)) + ssim_mean(f, to_double(b)));
}

// ---------------------------------------------------------------------------
// Gradient-preservation measure Q^AB/F (Xydeas-Petrovic). Edge strength and
// orientation come from the 3x3 Sobel operator; per-pixel preservation is the
// product of two logistic scores and the image score is the edge-strength
// weighted average over both sources.
// ---------------------------------------------------------------------------

inline constexpr double kQabfGammaG = 0.9994;
inline constexpr double kQabfKappaG = -15.0;
inline constexpr double kQabfSigmaG = 0.5;
inline constexpr double kQabfGammaA = 0.9879;
inline constexpr double kQabfKappaA = -22.0;
inline constexpr double kQabfSigmaA = 0.8;

namespace detail {

inline constexpr double kPi = std::numbers::pi;

struct EdgeField {
  std::vector<double> strength;
  std::vector<double> angle;  // edge orientation folded into (-pi/2, pi/2]
};

inline EdgeField sobel_edges(const ImagePlane& img) {
  EdgeField f;
  f.strength.resize(img.size());
  f.angle.resize(img.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double p00 = img.at_clamped(x - 1, y - 1), p10 = img.at_clamped(x, y - 1),
             p20 = img.at_clamped(x + 1, y - 1);
      double p01 = img.at_clamped(x - 1, y), p21 = img.at_clamped(x + 1, y);
      double p02 = img.at_clamped(x - 1, y + 1), p12 = img.at_clamped(x, y + 1),
             p22 = img.at_clamped(x + 1, y + 1);
      double sx = (p20 + 2 * p21 + p22) - (p00 + 2 * p01 + p02);
      double sy = (p02 + 2 * p12 + p22) - (p00 + 2 * p10 + p20);
      size_t i = static_cast<size_t>(y) * img.width + x;
      f.strength[i] = std::sqrt(sx * sx + sy * sy);
      double ang = (sx == 0.0 && sy == 0.0) ? 0.0 : std::atan2(sy, sx);
      if (ang > kPi / 2) ang -= kPi;
      if (ang <= -kPi / 2) ang += kPi;
      f.angle[i] = ang;
    }
  }
  return f;
}

inline double qabf_logistic(double gamma, double kappa, double sigma, double v) {
  return gamma / (1.0 + std::exp(kappa * (v - sigma)));
}

// Preservation of one source's edge at one pixel.
inline double qabf_preservation(double g_src, double ang_src, double g_fused,
                                double ang_fused) {
  double g_rel;
  if (g_src == g_fused) {
    g_rel = g_src == 0.0 ? 0.0 : 1.0;
  } else if (g_src > g_fused) {
    g_rel = g_fused / g_src;
  } else {
    g_rel = g_src / g_fused;
  }
  // Orientation distance on the mod-pi circle, normalized to [0, 1].
  double d = std::abs(ang_src - ang_fused);
  if (d > kPi / 2) d = kPi - d;
  double a_rel = 1.0 - d / (kPi / 2);
  return qabf_logistic(kQabfGammaG, kQabfKappaG, kQabfSigmaG, g_rel) *
         qabf_logistic(kQabfGammaA, kQabfKappaA, kQabfSigmaA, a_rel);
}

}  // namespace detail

// Edge-information preservation of both sources in the fused image. Returns
// 0 when no source pixel carries any edge energy.
inline double qabf(const ImagePlane& fused, const ImagePlane& a,
                   const ImagePlane& b) {
  if (a.width != fused.width || a.height != fused.height ||
      b.width != fused.width || b.height != fused.height) {
    fail(ErrorCode::dimension_mismatch, "qabf: size mismatch");
  }
  detail::EdgeField ef = detail::sobel_edges(fused);
  detail::EdgeField ea = detail::sobel_edges(a);
  detail::EdgeField eb = detail::sobel_edges(b);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ef.strength.size(); ++i) {
    double qa = detail::qabf_preservation(ea.strength[i], ea.angle[i],
                                          ef.strength[i], ef.angle[i]);
    double qb = detail::qabf_preservation(eb.strength[i], eb.angle[i],
                                          ef.strength[i], ef.angle[i]);
    num += qa * ea.strength[i] + qb * eb.strength[i];
    den += ea.strength[i] + eb.strength[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

struct MetricReport {
  double mi = 0.0;
  double en = 0.0;
  double cc = 0.0;
  double ssim = 0.0;
  double qabf = 0.0;
};

inline MetricReport compute_metrics(const ImagePlane& fused, const ImagePlane& ir,
                                    const ImagePlane& vis_luma) {
  MetricReport r;
  r.mi = fusion_mutual_information(fused, ir, vis_luma);
  r.en = entropy(fused);
  r.cc = fusion_correlation(fused, ir, vis_luma);
  r.ssim = fusion_ssim(fused, ir, vis_luma);
  r.qabf = mmlut::qabf(fused, ir, vis_luma);
  return r;
}

}  // namespace mmlut
