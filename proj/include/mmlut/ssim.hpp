#pragma once

#include <array>
#include <cmath>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"

namespace mmlut {

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5)
// and stabilizers C1 = (0.01*255)^2, C2 = (0.03*255)^2. Statistics use valid
// windows only, so inputs must be at least 11x11. The same code backs both
// the quality metric and the training loss; the loss variant also produces
// the analytic gradient with respect to the second argument.

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 6.5025;    // (0.01 * 255)^2
inline constexpr double kSsimC2 = 58.5225;   // (0.03 * 255)^2

template <class S>
std::array<S, kSsimWindow> ssim_kernel() {
  std::array<S, kSsimWindow> k;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    double d = i - (kSsimWindow - 1) / 2.0;
    double v = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    k[static_cast<size_t>(i)] = static_cast<S>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<S>(static_cast<double>(v) / sum);
  return k;
}

namespace detail {

// Separable valid-window correlation; output shrinks by window-1 per axis.
template <class S>
PlaneT<S> gauss_valid(const PlaneT<S>& src) {
  const auto k = ssim_kernel<S>();
  const int vw = src.width - kSsimWindow + 1;
  const int vh = src.height - kSsimWindow + 1;
  PlaneT<S> tmp(vw, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < vw; ++x) {
      S acc = S(0);
      const S* row = &src.at(x, y);
      for (int j = 0; j < kSsimWindow; ++j) acc += k[static_cast<size_t>(j)] * row[j];
      tmp.at(x, y) = acc;
    }
  }
  PlaneT<S> out(vw, vh);
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < vw; ++x) {
      S acc = S(0);
      for (int j = 0; j < kSsimWindow; ++j) {
        acc += k[static_cast<size_t>(j)] * tmp.at(x, y + j);
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Adjoint of gauss_valid: scatters a valid-size map back to full size.
template <class S>
PlaneT<S> gauss_valid_adjoint(const PlaneT<S>& grad_valid, int width, int height) {
  const auto k = ssim_kernel<S>();
  const int vw = grad_valid.width;
  const int vh = grad_valid.height;
  PlaneT<S> tmp(vw, height, S(0));
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < vw; ++x) {
      S g = grad_valid.at(x, y);
      for (int j = 0; j < kSsimWindow; ++j) {
        tmp.at(x, y + j) += k[static_cast<size_t>(j)] * g;
      }
    }
  }
  PlaneT<S> out(width, height, S(0));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < vw; ++x) {
      S g = tmp.at(x, y);
      if (g == S(0)) continue;
      S* row = &out.at(x, y);
      for (int j = 0; j < kSsimWindow; ++j) row[j] += k[static_cast<size_t>(j)] * g;
    }
  }
  return out;
}

template <class S>
PlaneT<S> hadamard(const PlaneT<S>& a, const PlaneT<S>& b) {
  PlaneT<S> out(a.width, a.height);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace detail

// Mean SSIM over all valid window positions of x against y.
template <class S>
S ssim_mean(const PlaneT<S>& x, const PlaneT<S>& y) {
  if (x.width != y.width || x.height != y.height) {
    fail(ErrorCode::dimension_mismatch, "ssim: plane size mismatch");
  }
  if (x.width < kSsimWindow || x.height < kSsimWindow) {
    fail(ErrorCode::invalid_argument, "ssim: inputs must be at least 11x11");
  }
  PlaneT<S> mu_x = detail::gauss_valid(x);
  PlaneT<S> mu_y = detail::gauss_valid(y);
  PlaneT<S> sxx = detail::gauss_valid(detail::hadamard(x, x));
  PlaneT<S> syy = detail::gauss_valid(detail::hadamard(y, y));
  PlaneT<S> sxy = detail::gauss_valid(detail::hadamard(x, y));
  const S c1 = S(kSsimC1), c2 = S(kSsimC2);
  S total = S(0);
  for (size_t i = 0; i < mu_x.size(); ++i) {
    S mx = mu_x.data[i], my = mu_y.data[i];
    S vx = sxx.data[i] - mx * mx;
    S vy = syy.data[i] - my * my;
    S cxy = sxy.data[i] - mx * my;
    S a = S(2) * mx * my + c1;
    S b = mx * mx + my * my + c1;
    S c = S(2) * cxy + c2;
    S d = vx + vy + c2;
    total += (a * c) / (b * d);
  }
  return total / S(mu_x.size());
}

// Dissimilarity loss 1 - mean SSIM(teacher, student). When grad_student is
// given it receives dLoss/d(student), derived by differentiating through the
// window statistics (the teacher is a constant).
template <class S>
S ssim_loss(const PlaneT<S>& teacher, const PlaneT<S>& student,
            PlaneT<S>* grad_student = nullptr) {
  if (teacher.width != student.width || teacher.height != student.height) {
    fail(ErrorCode::dimension_mismatch, "ssim_loss: plane size mismatch");
  }
  if (teacher.width < kSsimWindow || teacher.height < kSsimWindow) {
    fail(ErrorCode::invalid_argument, "ssim_loss: inputs must be at least 11x11");
  }
  const PlaneT<S>& x = teacher;
  const PlaneT<S>& y = student;
  PlaneT<S> mu_x = detail::gauss_valid(x);
  PlaneT<S> mu_y = detail::gauss_valid(y);
  PlaneT<S> sxx = detail::gauss_valid(detail::hadamard(x, x));
  PlaneT<S> syy = detail::gauss_valid(detail::hadamard(y, y));
  PlaneT<S> sxy = detail::gauss_valid(detail::hadamard(x, y));
  const S c1 = S(kSsimC1), c2 = S(kSsimC2);
  const size_t count = mu_x.size();

  // Partials of per-window SSIM with respect to the three y-dependent window
  // statistics: u = G*y, v = G*(y*y), t = G*(x*y).
  PlaneT<S> du(mu_x.width, mu_x.height);
  PlaneT<S> dv(mu_x.width, mu_x.height);
  PlaneT<S> dt(mu_x.width, mu_x.height);
  S total = S(0);
  for (size_t i = 0; i < count; ++i) {
    S mx = mu_x.data[i], my = mu_y.data[i];
    S vx = sxx.data[i] - mx * mx;
    S vy = syy.data[i] - my * my;
    S cxy = sxy.data[i] - mx * my;
    S a = S(2) * mx * my + c1;
    S b = mx * mx + my * my + c1;
    S c = S(2) * cxy + c2;
    S d = vx + vy + c2;
    S bd = b * d;
    total += (a * c) / bd;
    if (grad_student) {
      S inv_bd2 = S(1) / (bd * bd);
      du.data[i] = (S(2) * mx * (c - a) * bd - S(2) * my * a * c * (d - b)) * inv_bd2;
      dv.data[i] = -(a * c) / (b * d * d);
      dt.data[i] = S(2) * a / bd;
    }
  }

  if (grad_student) {
    PlaneT<S> su = detail::gauss_valid_adjoint(du, x.width, x.height);
    PlaneT<S> sv = detail::gauss_valid_adjoint(dv, x.width, x.height);
    PlaneT<S> st = detail::gauss_valid_adjoint(dt, x.width, x.height);
    *grad_student = PlaneT<S>(x.width, x.height);
    S scale = S(-1) / S(count);  // d(1 - mean)/d(ssim sum)
    for (size_t i = 0; i < su.size(); ++i) {
      grad_student->data[i] =
          scale * (su.data[i] + S(2) * y.data[i] * sv.data[i] + x.data[i] * st.data[i]);
    }
  }
  return S(1) - total / S(count);
}

}  // namespace mmlut
