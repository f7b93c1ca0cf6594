#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"

namespace mmlut {

// The three fixed per-pixel encodings plus the learned scene code. All four
// live on the [0, 255] scale and feed the four LUT axes in this order:
// visible luminance, infrared intensity, gradient magnitude, scene code.
template <class S>
struct EncodingsT {
  PlaneT<S> n_v;  // visible luminance
  PlaneT<S> n_i;  // infrared intensity
  PlaneT<S> g_v;  // gradient magnitude of n_v
  PlaneT<S> s_j;  // scene code
};

using Encodings = EncodingsT<float>;

// 3x3 Sobel magnitude with edge replication, clamped to [0, 255].
template <class S>
PlaneT<S> gradient_encoding(const PlaneT<S>& src) {
  PlaneT<S> out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      S p00 = src.at_clamped(x - 1, y - 1), p10 = src.at_clamped(x, y - 1),
        p20 = src.at_clamped(x + 1, y - 1);
      S p01 = src.at_clamped(x - 1, y), p21 = src.at_clamped(x + 1, y);
      S p02 = src.at_clamped(x - 1, y + 1), p12 = src.at_clamped(x, y + 1),
        p22 = src.at_clamped(x + 1, y + 1);
      S sx = (p20 + S(2) * p21 + p22) - (p00 + S(2) * p01 + p02);
      S sy = (p02 + S(2) * p12 + p22) - (p00 + S(2) * p10 + p20);
      out.at(x, y) = std::min(S(255), std::sqrt(sx * sx + sy * sy));
    }
  }
  return out;
}

// Fills n_v / n_i / g_v from a registered pair; the scene code is produced
// separately (learned encoder or box feature).
template <class S>
EncodingsT<S> make_encodings(const PlaneT<S>& ir, const ColorImageT<S>& vis) {
  EncodingsT<S> out;
  out.n_i = ir;
  out.n_v = PlaneT<S>(vis.width(), vis.height());
  for (size_t i = 0; i < out.n_v.size(); ++i) {
    out.n_v.data[i] = bt601_luma(vis.r.data[i], vis.g.data[i], vis.b.data[i]);
  }
  out.g_v = gradient_encoding(out.n_v);
  return out;
}

inline constexpr int kBoxFeatureWindow = 11;

// Training-free scene code: 11x11 box mean of (n_v + n_i) / 2 with edge
// replication. Used when the learned encoder is frozen out of the pipeline.
template <class S>
PlaneT<S> box_scene_feature(const PlaneT<S>& n_v, const PlaneT<S>& n_i) {
  if (n_v.width != n_i.width || n_v.height != n_i.height) {
    fail(ErrorCode::dimension_mismatch, "box_scene_feature: plane size mismatch");
  }
  const int r = kBoxFeatureWindow / 2;
  PlaneT<S> mean(n_v.width, n_v.height);
  for (size_t i = 0; i < mean.size(); ++i) {
    mean.data[i] = (n_v.data[i] + n_i.data[i]) / S(2);
  }
  PlaneT<S> tmp(mean.width, mean.height);
  for (int y = 0; y < mean.height; ++y) {
    for (int x = 0; x < mean.width; ++x) {
      S acc = S(0);
      for (int j = -r; j <= r; ++j) acc += mean.at_clamped(x + j, y);
      tmp.at(x, y) = acc / S(kBoxFeatureWindow);
    }
  }
  PlaneT<S> out(mean.width, mean.height);
  for (int y = 0; y < mean.height; ++y) {
    for (int x = 0; x < mean.width; ++x) {
      S acc = S(0);
      for (int j = -r; j <= r; ++j) acc += tmp.at_clamped(x, y + j);
      out.at(x, y) = acc / S(kBoxFeatureWindow);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene encoder: five 3x3 convolutions (stride 1, zero padding), channel plan
// 2 -> 16 -> 16 -> 16 -> 16 -> 1, leaky ReLU (slope 0.2) between blocks and a
// sigmoid scaled to [0, 255] at the output. It runs at a reduced resolution
// and the scene code is bilinearly upsampled back to full size.
// ---------------------------------------------------------------------------

inline constexpr int kSceneChannels[6] = {2, 16, 16, 16, 16, 1};
inline constexpr int kSceneBlocks = 5;
inline constexpr double kLeakySlope = 0.2;

template <class S>
struct ConvBlockT {
  int in_ch = 0;
  int out_ch = 0;
  std::vector<S> weights;  // [out_ch][in_ch][3][3]
  std::vector<S> bias;     // [out_ch]

  size_t weight_index(int oc, int ic, int ky, int kx) const {
    return ((static_cast<size_t>(oc) * in_ch + ic) * 3 + ky) * 3 + kx;
  }
};

template <class S>
struct SceneEncoderT {
  std::array<ConvBlockT<S>, kSceneBlocks> blocks;

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& b : blocks) n += b.weights.size() + b.bias.size();
    return n;
  }
};

using SceneEncoder = SceneEncoderT<float>;

template <class S>
SceneEncoderT<S> make_scene_encoder() {
  SceneEncoderT<S> enc;
  for (int b = 0; b < kSceneBlocks; ++b) {
    auto& blk = enc.blocks[static_cast<size_t>(b)];
    blk.in_ch = kSceneChannels[b];
    blk.out_ch = kSceneChannels[b + 1];
    blk.weights.assign(static_cast<size_t>(blk.out_ch) * blk.in_ch * 9, S(0));
    blk.bias.assign(static_cast<size_t>(blk.out_ch), S(0));
  }
  return enc;
}

// Uniform +-sqrt(1/fan_in) initialization, fan_in = in_ch * 9. The draw order
// (weights then biases, block by block) is part of the reproducibility
// contract: one seed, one parameter vector.
template <class S>
SceneEncoderT<S> init_scene_encoder(Rng& rng) {
  SceneEncoderT<S> enc = make_scene_encoder<S>();
  for (auto& blk : enc.blocks) {
    double limit = std::sqrt(1.0 / (blk.in_ch * 9));
    for (auto& w : blk.weights) w = static_cast<S>(rng.uniform(-limit, limit));
    for (auto& b : blk.bias) b = static_cast<S>(rng.uniform(-limit, limit));
  }
  return enc;
}

// Mean over factor x factor boxes; ragged right/bottom boxes average the
// pixels that exist. factor 1 is a copy.
template <class S>
PlaneT<S> box_downsample(const PlaneT<S>& src, int factor) {
  if (factor <= 1) return src;
  int w = (src.width + factor - 1) / factor;
  int h = (src.height + factor - 1) / factor;
  PlaneT<S> out(w, h);
  for (int y = 0; y < h; ++y) {
    int y0 = y * factor, y1 = std::min(y0 + factor, src.height);
    for (int x = 0; x < w; ++x) {
      int x0 = x * factor, x1 = std::min(x0 + factor, src.width);
      S acc = S(0);
      for (int yy = y0; yy < y1; ++yy) {
        for (int xx = x0; xx < x1; ++xx) acc += src.at(xx, yy);
      }
      out.at(x, y) = acc / S((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

// Bilinear resize to (width, height) with half-pixel centers and edge clamp.
// When sizes match this is an exact copy.
template <class S>
PlaneT<S> bilinear_upsample(const PlaneT<S>& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  PlaneT<S> out(width, height);
  S sx_scale = S(src.width) / S(width);
  S sy_scale = S(src.height) / S(height);
  for (int y = 0; y < height; ++y) {
    S sy = (S(y) + S(0.5)) * sy_scale - S(0.5);
    sy = std::clamp(sy, S(0), S(src.height - 1));
    int y0 = std::min(static_cast<int>(sy), src.height - 2 >= 0 ? src.height - 2 : 0);
    S fy = sy - S(y0);
    for (int x = 0; x < width; ++x) {
      S sx = (S(x) + S(0.5)) * sx_scale - S(0.5);
      sx = std::clamp(sx, S(0), S(src.width - 1));
      int x0 = std::min(static_cast<int>(sx), src.width - 2 >= 0 ? src.width - 2 : 0);
      S fx = sx - S(x0);
      int x1 = std::min(x0 + 1, src.width - 1);
      int y1 = std::min(y0 + 1, src.height - 1);
      out.at(x, y) = (S(1) - fy) * ((S(1) - fx) * src.at(x0, y0) + fx * src.at(x1, y0)) +
                     fy * ((S(1) - fx) * src.at(x0, y1) + fx * src.at(x1, y1));
    }
  }
  return out;
}

// Adjoint of bilinear_upsample: scatters a full-resolution gradient back to
// the source resolution with the same four weights per output pixel.
template <class S>
PlaneT<S> bilinear_upsample_adjoint(const PlaneT<S>& grad_out, int src_width,
                                    int src_height) {
  if (grad_out.width == src_width && grad_out.height == src_height) return grad_out;
  PlaneT<S> grad_src(src_width, src_height, S(0));
  S sx_scale = S(src_width) / S(grad_out.width);
  S sy_scale = S(src_height) / S(grad_out.height);
  for (int y = 0; y < grad_out.height; ++y) {
    S sy = (S(y) + S(0.5)) * sy_scale - S(0.5);
    sy = std::clamp(sy, S(0), S(src_height - 1));
    int y0 = std::min(static_cast<int>(sy), src_height - 2 >= 0 ? src_height - 2 : 0);
    S fy = sy - S(y0);
    int y1 = std::min(y0 + 1, src_height - 1);
    for (int x = 0; x < grad_out.width; ++x) {
      S sx = (S(x) + S(0.5)) * sx_scale - S(0.5);
      sx = std::clamp(sx, S(0), S(src_width - 1));
      int x0 = std::min(static_cast<int>(sx), src_width - 2 >= 0 ? src_width - 2 : 0);
      S fx = sx - S(x0);
      int x1 = std::min(x0 + 1, src_width - 1);
      S g = grad_out.at(x, y);
      grad_src.at(x0, y0) += (S(1) - fy) * (S(1) - fx) * g;
      grad_src.at(x1, y0) += (S(1) - fy) * fx * g;
      grad_src.at(x0, y1) += fy * (S(1) - fx) * g;
      grad_src.at(x1, y1) += fy * fx * g;
    }
  }
  return grad_src;
}

namespace detail {

// Zero-pads a plane by one pixel on each side.
template <class S>
PlaneT<S> zero_pad1(const PlaneT<S>& src) {
  PlaneT<S> out(src.width + 2, src.height + 2, S(0));
  for (int y = 0; y < src.height; ++y) {
    std::copy(&src.at(0, y), &src.at(0, y) + src.width, &out.at(1, y + 1));
  }
  return out;
}

// dst += coef * shifted window of padded source. The x loop is contiguous on
// both sides, which is what makes the whole encoder vectorize.
template <class S>
inline void accumulate_shifted(PlaneT<S>& dst, const PlaneT<S>& padded, S coef,
                               int ky, int kx) {
  const int w = dst.width, h = dst.height;
  for (int y = 0; y < h; ++y) {
    S* out_row = &dst.at(0, y);
    const S* in_row = &padded.at(kx, y + ky);
    for (int x = 0; x < w; ++x) out_row[x] += coef * in_row[x];
  }
}

}  // namespace detail

// Multi-channel feature map: one plane per channel.
template <class S>
using FeatureMapT = std::vector<PlaneT<S>>;

// Everything the backward pass needs from one forward run.
template <class S>
struct EncoderTapeT {
  int downsample = 1;
  int full_width = 0, full_height = 0;
  std::vector<FeatureMapT<S>> inputs;  // inputs[b] enters block b; size 5
  std::vector<FeatureMapT<S>> preact;  // preact[b] = conv output of block b
};

template <class S>
struct SceneEncoderGradT {
  std::array<std::vector<S>, kSceneBlocks> weights;
  std::array<std::vector<S>, kSceneBlocks> bias;

  static SceneEncoderGradT zeros_like(const SceneEncoderT<S>& enc) {
    SceneEncoderGradT g;
    for (int b = 0; b < kSceneBlocks; ++b) {
      g.weights[static_cast<size_t>(b)].assign(
          enc.blocks[static_cast<size_t>(b)].weights.size(), S(0));
      g.bias[static_cast<size_t>(b)].assign(
          enc.blocks[static_cast<size_t>(b)].bias.size(), S(0));
    }
    return g;
  }

  void accumulate(const SceneEncoderGradT& other) {
    for (int b = 0; b < kSceneBlocks; ++b) {
      auto& w = weights[static_cast<size_t>(b)];
      const auto& ow = other.weights[static_cast<size_t>(b)];
      for (size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
      auto& bi = bias[static_cast<size_t>(b)];
      const auto& ob = other.bias[static_cast<size_t>(b)];
      for (size_t i = 0; i < bi.size(); ++i) bi[i] += ob[i];
    }
  }
};

namespace detail {

template <class S>
FeatureMapT<S> conv_forward(const ConvBlockT<S>& blk, const FeatureMapT<S>& in,
                            int threads) {
  const int w = in[0].width, h = in[0].height;
  FeatureMapT<S> padded;
  padded.reserve(in.size());
  for (const auto& plane : in) padded.push_back(zero_pad1(plane));

  FeatureMapT<S> out(static_cast<size_t>(blk.out_ch));
  parallel_for(blk.out_ch, threads, [&](int64_t oc0, int64_t oc1) {
    for (int64_t oc = oc0; oc < oc1; ++oc) {
      PlaneT<S> acc(w, h, blk.bias[static_cast<size_t>(oc)]);
      for (int ic = 0; ic < blk.in_ch; ++ic) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            S coef = blk.weights[blk.weight_index(static_cast<int>(oc), ic, ky, kx)];
            accumulate_shifted(acc, padded[static_cast<size_t>(ic)], coef, ky, kx);
          }
        }
      }
      out[static_cast<size_t>(oc)] = std::move(acc);
    }
  });
  return out;
}

template <class S>
inline S leaky_relu(S z) {
  return z > S(0) ? z : S(kLeakySlope) * z;
}

template <class S>
inline S leaky_relu_grad(S z) {
  return z > S(0) ? S(1) : S(kLeakySlope);
}

}  // namespace detail

// Forward pass. Produces the full-resolution scene code in (0, 255); pass a
// tape to enable a later backward pass. `downsample` must be 1, 2 or 4.
template <class S>
PlaneT<S> scene_encode(const PlaneT<S>& n_v, const PlaneT<S>& n_i,
                       const SceneEncoderT<S>& enc, int downsample,
                       EncoderTapeT<S>* tape = nullptr, int threads = 1) {
  if (n_v.width != n_i.width || n_v.height != n_i.height) {
    fail(ErrorCode::dimension_mismatch, "scene_encode: plane size mismatch");
  }
  if (downsample != 1 && downsample != 2 && downsample != 4) {
    fail(ErrorCode::invalid_argument, "scene_encode: downsample must be 1, 2 or 4");
  }

  // Normalize to [0, 1] and reduce resolution before the conv stack.
  PlaneT<S> v_small = box_downsample(n_v, downsample);
  PlaneT<S> i_small = box_downsample(n_i, downsample);
  FeatureMapT<S> features(2);
  features[0] = PlaneT<S>(v_small.width, v_small.height);
  features[1] = PlaneT<S>(v_small.width, v_small.height);
  for (size_t i = 0; i < v_small.size(); ++i) {
    features[0].data[i] = v_small.data[i] / S(255);
    features[1].data[i] = i_small.data[i] / S(255);
  }

  if (tape) {
    tape->downsample = downsample;
    tape->full_width = n_v.width;
    tape->full_height = n_v.height;
    tape->inputs.clear();
    tape->preact.clear();
    tape->inputs.reserve(kSceneBlocks);
    tape->preact.reserve(kSceneBlocks);
  }

  for (int b = 0; b < kSceneBlocks; ++b) {
    if (tape) tape->inputs.push_back(features);
    FeatureMapT<S> z = detail::conv_forward(enc.blocks[static_cast<size_t>(b)],
                                            features, threads);
    if (tape) tape->preact.push_back(z);
    if (b + 1 < kSceneBlocks) {
      for (auto& plane : z) {
        for (auto& v : plane.data) v = detail::leaky_relu(v);
      }
      features = std::move(z);
    } else {
      PlaneT<S>& logits = z[0];
      PlaneT<S> code(logits.width, logits.height);
      for (size_t i = 0; i < logits.size(); ++i) {
        code.data[i] = S(255) / (S(1) + std::exp(-logits.data[i]));
      }
      return bilinear_upsample(code, n_v.width, n_v.height);
    }
  }
  fail(ErrorCode::numeric_failure, "scene_encode: unreachable");
}

// Backward pass. `grad_scene` is dLoss/d(scene code) at full resolution; the
// result is accumulated into `grads`. Only parameter gradients are produced;
// the input images are leaves.
template <class S>
void scene_encode_backward(const SceneEncoderT<S>& enc,
                           const EncoderTapeT<S>& tape,
                           const PlaneT<S>& grad_scene,
                           SceneEncoderGradT<S>& grads) {
  if (grad_scene.width != tape.full_width || grad_scene.height != tape.full_height) {
    fail(ErrorCode::dimension_mismatch, "scene_encode_backward: gradient size");
  }
  const PlaneT<S>& logits = tape.preact.back()[0];

  // Through the upsample, then through sigmoid * 255.
  PlaneT<S> g = bilinear_upsample_adjoint(grad_scene, logits.width, logits.height);
  FeatureMapT<S> grad_z(1);
  grad_z[0] = PlaneT<S>(logits.width, logits.height);
  for (size_t i = 0; i < logits.size(); ++i) {
    S sig = S(1) / (S(1) + std::exp(-logits.data[i]));
    grad_z[0].data[i] = g.data[i] * S(255) * sig * (S(1) - sig);
  }

  for (int b = kSceneBlocks - 1; b >= 0; --b) {
    const auto& blk = enc.blocks[static_cast<size_t>(b)];
    const FeatureMapT<S>& in = tape.inputs[static_cast<size_t>(b)];
    const int w = in[0].width, h = in[0].height;

    FeatureMapT<S> padded_in;
    padded_in.reserve(in.size());
    for (const auto& plane : in) padded_in.push_back(detail::zero_pad1(plane));

    auto& gw = grads.weights[static_cast<size_t>(b)];
    auto& gb = grads.bias[static_cast<size_t>(b)];

    // Padded input-gradient buffers; cropped after the scatter.
    FeatureMapT<S> grad_in_padded;
    if (b > 0) {
      grad_in_padded.assign(static_cast<size_t>(blk.in_ch),
                            PlaneT<S>(w + 2, h + 2, S(0)));
    }

    for (int oc = 0; oc < blk.out_ch; ++oc) {
      const PlaneT<S>& gz = grad_z[static_cast<size_t>(oc)];
      S bias_acc = S(0);
      for (const S& v : gz.data) bias_acc += v;
      gb[static_cast<size_t>(oc)] += bias_acc;
      for (int ic = 0; ic < blk.in_ch; ++ic) {
        const PlaneT<S>& pin = padded_in[static_cast<size_t>(ic)];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            S acc = S(0);
            for (int y = 0; y < h; ++y) {
              const S* gz_row = &gz.at(0, y);
              const S* in_row = &pin.at(kx, y + ky);
              for (int x = 0; x < w; ++x) acc += gz_row[x] * in_row[x];
            }
            gw[blk.weight_index(oc, ic, ky, kx)] += acc;
            if (b > 0) {
              // Adjoint of the shifted accumulation.
              PlaneT<S>& gip = grad_in_padded[static_cast<size_t>(ic)];
              S coef = blk.weights[blk.weight_index(oc, ic, ky, kx)];
              for (int y = 0; y < h; ++y) {
                S* gi_row = &gip.at(kx, y + ky);
                const S* gz_row = &gz.at(0, y);
                for (int x = 0; x < w; ++x) gi_row[x] += coef * gz_row[x];
              }
            }
          }
        }
      }
    }

    if (b == 0) break;

    // Crop the padding off and apply the previous block's activation grad.
    const FeatureMapT<S>& prev_z = tape.preact[static_cast<size_t>(b - 1)];
    FeatureMapT<S> next(static_cast<size_t>(blk.in_ch));
    for (int ic = 0; ic < blk.in_ch; ++ic) {
      PlaneT<S> cropped(w, h);
      const PlaneT<S>& gip = grad_in_padded[static_cast<size_t>(ic)];
      for (int y = 0; y < h; ++y) {
        const S* src = &gip.at(1, y + 1);
        S* dst = &cropped.at(0, y);
        const S* z_row = &prev_z[static_cast<size_t>(ic)].at(0, y);
        for (int x = 0; x < w; ++x) {
          dst[x] = src[x] * detail::leaky_relu_grad(z_row[x]);
        }
      }
      next[static_cast<size_t>(ic)] = std::move(cropped);
    }
    grad_z = std::move(next);
  }
}

}  // namespace mmlut
