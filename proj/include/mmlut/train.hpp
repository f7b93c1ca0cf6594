#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmlut/common.hpp"
#include "mmlut/encode.hpp"
#include "mmlut/image.hpp"
#include "mmlut/lut.hpp"
#include "mmlut/model.hpp"
#include "mmlut/serialize.hpp"
#include "mmlut/ssim.hpp"
#include "mmlut/teacher.hpp"

namespace mmlut {

// ---------------------------------------------------------------------------
// Distillation losses. All are means over their elements so the default
// weighting below stays meaningful for any patch or grid size.
// ---------------------------------------------------------------------------

// Mean absolute intensity difference. The subgradient with respect to the
// student is sign(student - teacher) / count, zero at exact ties.
template <class S>
S l1_loss(const PlaneT<S>& teacher, const PlaneT<S>& student,
          PlaneT<S>* grad_student = nullptr) {
  if (teacher.width != student.width || teacher.height != student.height) {
    fail(ErrorCode::dimension_mismatch, "l1_loss: plane size mismatch");
  }
  const S inv_n = S(1) / S(teacher.size());
  S total = S(0);
  if (grad_student) *grad_student = PlaneT<S>(teacher.width, teacher.height);
  for (size_t i = 0; i < teacher.size(); ++i) {
    S d = student.data[i] - teacher.data[i];
    total += std::abs(d);
    if (grad_student) {
      grad_student->data[i] = d > S(0) ? inv_n : (d < S(0) ? -inv_n : S(0));
    }
  }
  return total * inv_n;
}

namespace detail {

inline constexpr size_t kAxisCount = 4;

template <class S>
std::array<size_t, kAxisCount> grid_strides(const LutGridT<S>& grid) {
  size_t p = static_cast<size_t>(grid.points);
  return {p * p * p, p * p, p, 1};
}

}  // namespace detail

// Smoothness penalty: squared difference of every adjacent entry pair along
// each of the four axes, normalized by the entry count. The gradient
// (scaled by `grad_scale`) is accumulated into `grad` when given.
template <class S>
double tv_regularizer(const LutGridT<S>& grid, double* grad = nullptr,
                      double grad_scale = 1.0) {
  const int P = grid.points;
  const auto strides = detail::grid_strides(grid);
  const double inv_n = 1.0 / static_cast<double>(grid.entries.size());
  double total = 0.0;
  for (size_t axis = 0; axis < detail::kAxisCount; ++axis) {
    const size_t stride = strides[axis];
    int lim[4] = {P, P, P, P};
    lim[axis] -= 1;
    for (int v = 0; v < lim[0]; ++v) {
      for (int i = 0; i < lim[1]; ++i) {
        for (int g = 0; g < lim[2]; ++g) {
          for (int s = 0; s < lim[3]; ++s) {
            size_t idx = grid.index(v, i, g, s);
            double d = static_cast<double>(grid.entries[idx + stride]) -
                       static_cast<double>(grid.entries[idx]);
            total += d * d;
            if (grad) {
              double g2 = grad_scale * 2.0 * d * inv_n;
              grad[idx + stride] += g2;
              grad[idx] -= g2;
            }
          }
        }
      }
    }
  }
  return total * inv_n;
}

struct MonotonicityResult {
  double value = 0.0;
  uint64_t violations = 0;
};

// Hinge penalty on decreases along each axis: max(0, current - next),
// normalized by the entry count. Reports how many adjacent pairs violate
// monotonicity. Gradient is +-1/N on violating pairs (times `grad_scale`).
template <class S>
MonotonicityResult monotonicity_regularizer(const LutGridT<S>& grid,
                                            double* grad = nullptr,
                                            double grad_scale = 1.0) {
  const int P = grid.points;
  const auto strides = detail::grid_strides(grid);
  const double inv_n = 1.0 / static_cast<double>(grid.entries.size());
  MonotonicityResult out;
  for (size_t axis = 0; axis < detail::kAxisCount; ++axis) {
    const size_t stride = strides[axis];
    int lim[4] = {P, P, P, P};
    lim[axis] -= 1;
    for (int v = 0; v < lim[0]; ++v) {
      for (int i = 0; i < lim[1]; ++i) {
        for (int g = 0; g < lim[2]; ++g) {
          for (int s = 0; s < lim[3]; ++s) {
            size_t idx = grid.index(v, i, g, s);
            double d = static_cast<double>(grid.entries[idx]) -
                       static_cast<double>(grid.entries[idx + stride]);
            if (d > 0.0) {
              out.value += d * inv_n;
              out.violations += 1;
              if (grad) {
                grad[idx] += grad_scale * inv_n;
                grad[idx + stride] -= grad_scale * inv_n;
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay. Moments are kept in double regardless
// of the parameter type; updates are computed in double and stored back.
// ---------------------------------------------------------------------------

struct AdamHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamGroup {
  uint64_t step = 0;
  std::vector<double> m, v;

  void init(size_t n) {
    step = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

template <class S>
void adamw_step(S* params, const double* grads, size_t count, AdamGroup& group,
                const AdamHyper& hp, bool apply_decay) {
  if (group.m.size() != count || group.v.size() != count) {
    fail(ErrorCode::invalid_argument, "adamw_step: moment buffers wrong size");
  }
  group.step += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(group.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(group.step));
  for (size_t i = 0; i < count; ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      fail(ErrorCode::numeric_failure, "adamw_step: non-finite gradient");
    }
    group.m[i] = hp.beta1 * group.m[i] + (1.0 - hp.beta1) * g;
    group.v[i] = hp.beta2 * group.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = group.m[i] / bc1;
    const double v_hat = group.v[i] / bc2;
    double value = static_cast<double>(params[i]);
    double next = value - hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    if (apply_decay && hp.weight_decay != 0.0) {
      next -= hp.lr * hp.weight_decay * value;
    }
    params[i] = static_cast<S>(next);
  }
}

// ---------------------------------------------------------------------------
// One distillation step over a batch of patches.
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double l_int = 0.0;
  double l_ssim = 0.0;
  double r_tv = 0.0;
  double r_m = 0.0;
  double l_all = 0.0;
  uint64_t violations = 0;
};

template <class S>
struct DistillGrads {
  std::vector<double> grid;  // dLoss / d(entry), level units
  SceneEncoderGradT<S> encoder;

  static DistillGrads zeros(const LutGridT<S>& grid_shape,
                            const SceneEncoderT<S>& enc) {
    DistillGrads g;
    g.grid.assign(grid_shape.entries.size(), 0.0);
    g.encoder = SceneEncoderGradT<S>::zeros_like(enc);
    return g;
  }
};

struct DistillWeights {
  double lambda_ssim = 0.1;
  double lambda_tv = 1e-4;
  double lambda_m = 10.0;
};

// Forward (and optionally backward) for one batch: encode, scene-code,
// table lookup, teacher fuse, losses. Patch items are independent; each is
// processed in its own gradient buffer and the buffers are reduced in batch
// order, so the thread count never changes the resulting numbers. The two
// grid regularizers are evaluated once per batch, not per item.
template <class S>
LossBreakdown distill_batch(const LutGridT<S>& grid,
                            const SceneEncoderT<S>& encoder, int downsample,
                            bool frozen_box_feature, TeacherKind teacher,
                            int pyramid_levels, const DistillWeights& weights,
                            const PatchBatchT<S>& batch,
                            DistillGrads<S>* grads, int threads = 1) {
  if (batch.empty()) fail(ErrorCode::empty_dataset, "distill_batch: empty batch");
  const int n_items = static_cast<int>(batch.size());
  const S inv_batch = S(1) / S(n_items);

  struct ItemOut {
    double l_int = 0.0;
    double l_ssim = 0.0;
    DistillGrads<S> grads;
  };
  std::vector<ItemOut> items(static_cast<size_t>(n_items));

  parallel_for(n_items, threads, [&](int64_t i0, int64_t i1) {
    for (int64_t item = i0; item < i1; ++item) {
      const PatchT<S>& patch = batch[static_cast<size_t>(item)];
      ItemOut& out = items[static_cast<size_t>(item)];

      EncodingsT<S> enc = make_encodings(patch.ir, patch.vis);
      EncoderTapeT<S> tape;
      PlaneT<S> s_j;
      if (frozen_box_feature) {
        s_j = box_scene_feature(enc.n_v, enc.n_i);
      } else {
        s_j = scene_encode(enc.n_v, enc.n_i, encoder, downsample,
                           grads ? &tape : nullptr);
      }

      PlaneT<S> teach = teacher_fuse(teacher, enc.n_v, enc.n_i, pyramid_levels);

      // Student output: raw table lookups, unclamped so gradients keep
      // flowing outside [0, 255].
      const int w = enc.n_v.width, h = enc.n_v.height;
      PlaneT<S> student(w, h);
      for (size_t px = 0; px < student.size(); ++px) {
        Coord4T<S> c = to_coords(enc.n_v.data[px], enc.n_i.data[px],
                                 enc.g_v.data[px], s_j.data[px], grid.bin,
                                 grid.points);
        student.data[px] = lookup(grid, c);
      }

      PlaneT<S> g_l1, g_ssim;
      out.l_int = static_cast<double>(
          l1_loss(teach, student, grads ? &g_l1 : nullptr));
      out.l_ssim = static_cast<double>(
          ssim_loss(teach, student, grads ? &g_ssim : nullptr));

      if (grads) {
        out.grads = DistillGrads<S>::zeros(grid, encoder);
        PlaneT<S> grad_s(w, h);
        const S lam = S(weights.lambda_ssim);
        for (size_t px = 0; px < student.size(); ++px) {
          Coord4T<S> c = to_coords(enc.n_v.data[px], enc.n_i.data[px],
                                   enc.g_v.data[px], s_j.data[px], grid.bin,
                                   grid.points);
          S upstream = (g_l1.data[px] + lam * g_ssim.data[px]) * inv_batch;
          CoordGrad4T<S> cg =
              lookup_backward(grid, c, upstream, out.grads.grid.data());
          grad_s.data[px] = c.s.interior ? cg.ds / grid.bin : S(0);
        }
        if (!frozen_box_feature) {
          scene_encode_backward(encoder, tape, grad_s, out.grads.encoder);
        }
      }
    }
  });

  LossBreakdown total;
  for (const ItemOut& out : items) {
    total.l_int += out.l_int / n_items;
    total.l_ssim += out.l_ssim / n_items;
    if (grads) {
      for (size_t i = 0; i < grads->grid.size(); ++i) {
        grads->grid[i] += out.grads.grid[i];
      }
      grads->encoder.accumulate(out.grads.encoder);
    }
  }

  total.r_tv = tv_regularizer(grid, grads ? grads->grid.data() : nullptr,
                              weights.lambda_tv);
  MonotonicityResult mono = monotonicity_regularizer(
      grid, grads ? grads->grid.data() : nullptr, weights.lambda_m);
  total.r_m = mono.value;
  total.violations = mono.violations;
  total.l_all = total.l_int + weights.lambda_ssim * total.l_ssim +
                weights.lambda_tv * total.r_tv + weights.lambda_m * total.r_m;
  return total;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct TrainConfig {
  TeacherKind teacher = TeacherKind::average;
  int epochs = 500;
  int batch_size = 8;
  int patch_size = 96;
  AdamHyper adam;
  DistillWeights weights;
  uint64_t seed = 0;
  int grid_points = kDefaultGridPoints;
  float bin = kDefaultBin;
  int downsample = kDefaultDownsample;
  int pyramid_levels = kDefaultPyramidLevels;
  bool frozen_box_feature = false;
  bool deterministic = false;
  int threads = 1;
  int checkpoint_every = 0;          // epochs between checkpoints; 0 = off
  std::string checkpoint_prefix;     // writes <prefix>.mmlut / <prefix>.mmos
  std::string csv_path;              // loss-history CSV, written at the end
  bool verbose = false;              // per-epoch progress on stderr
};

struct TrainResult {
  Model model;
  std::vector<LossRow> history;
};

namespace detail {

inline std::vector<float> flatten_encoder(const SceneEncoder& enc) {
  std::vector<float> flat;
  flat.reserve(enc.parameter_count());
  for (const auto& blk : enc.blocks) {
    flat.insert(flat.end(), blk.weights.begin(), blk.weights.end());
    flat.insert(flat.end(), blk.bias.begin(), blk.bias.end());
  }
  return flat;
}

inline void unflatten_encoder(const std::vector<float>& flat, SceneEncoder& enc) {
  size_t pos = 0;
  for (auto& blk : enc.blocks) {
    std::copy(flat.begin() + pos, flat.begin() + pos + blk.weights.size(),
              blk.weights.begin());
    pos += blk.weights.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + blk.bias.size(),
              blk.bias.begin());
    pos += blk.bias.size();
  }
}

inline std::vector<double> flatten_encoder_grads(
    const SceneEncoderGradT<float>& grads) {
  std::vector<double> flat;
  for (int b = 0; b < kSceneBlocks; ++b) {
    const auto& w = grads.weights[static_cast<size_t>(b)];
    const auto& bi = grads.bias[static_cast<size_t>(b)];
    flat.insert(flat.end(), w.begin(), w.end());
    flat.insert(flat.end(), bi.begin(), bi.end());
  }
  return flat;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline std::string make_train_metadata(const TrainConfig& cfg) {
  nlohmann::json meta;
  meta["method"] = "distilled";
  meta["seed"] = cfg.seed;
  meta["teacher"] = teacher_name(cfg.teacher);
  meta["lambda_ssim"] = cfg.weights.lambda_ssim;
  meta["lambda_tv"] = cfg.weights.lambda_tv;
  meta["lambda_m"] = cfg.weights.lambda_m;
  meta["lr"] = cfg.adam.lr;
  meta["epochs"] = cfg.epochs;
  meta["batch"] = cfg.batch_size;
  meta["patch"] = cfg.patch_size;
  meta["scene_feature"] =
      cfg.frozen_box_feature ? "box-mean" : "encoder";
  return meta.dump();
}

inline void write_loss_csv(const std::string& path,
                           const std::vector<LossRow>& history) {
  atomic_write(path, [&history](const std::string& tmp) {
    std::ofstream out(tmp);
    if (!out) fail(ErrorCode::io_failure, "cannot create " + tmp);
    out << "epoch,L_int,L_ssim,R_TV,R_m,L_all,violations\n";
    for (const LossRow& row : history) {
      out << row.epoch << ',' << detail::format_double(row.l_int) << ','
          << detail::format_double(row.l_ssim) << ','
          << detail::format_double(row.r_tv) << ','
          << detail::format_double(row.r_m) << ','
          << detail::format_double(row.l_all) << ',' << row.violations << '\n';
    }
    out.flush();
    if (!out) fail(ErrorCode::io_failure, "write failed: " + tmp);
  });
}

// Distills the configured teacher into a fresh (or resumed) model.
//
// The trainable grid is optimized in a normalized parameterization
// (entry / 255); the stored table stays in [0, 255] levels. This keeps the
// published learning-rate defaults meaningful: an optimizer step moves a
// normalized entry by about `lr`, i.e. a quarter level per step at the
// default 5e-5, matching the regime the defaults were tuned for.
//
// One epoch performs one optimization step per dataset image, each on a
// fresh batch of random crops drawn from the whole dataset.
inline TrainResult train_loop(const TrainConfig& cfg,
                              const std::vector<ImagePair>& dataset,
                              const std::string& resume_prefix = "") {
  if (dataset.empty()) fail(ErrorCode::empty_dataset, "train_loop: empty dataset");
  if (cfg.patch_size < 17) {
    fail(ErrorCode::invalid_argument, "train_loop: patch size must be >= 17");
  }
  if (cfg.batch_size < 1 || cfg.epochs < 1) {
    fail(ErrorCode::invalid_argument, "train_loop: batch and epochs must be >= 1");
  }
  if (cfg.grid_points < 2) {
    fail(ErrorCode::invalid_argument, "train_loop: grid needs at least 2 points");
  }

  // Trainable state.
  std::vector<float> grid_master;  // normalized entries
  SceneEncoder encoder;
  AdamGroup grid_opt, enc_opt;
  Rng rng(cfg.seed);
  uint32_t start_epoch = 0;
  std::vector<LossRow> history;

  const size_t grid_count = static_cast<size_t>(cfg.grid_points) *
                            cfg.grid_points * cfg.grid_points * cfg.grid_points;

  if (!resume_prefix.empty()) {
    Model m = load_model(resume_prefix + ".mmlut");
    OptimizerSidecar side = load_optimizer_sidecar(resume_prefix + ".mmos");
    if (m.grid.points != cfg.grid_points || m.grid.bin != cfg.bin ||
        m.downsample != cfg.downsample) {
      fail(ErrorCode::invalid_argument,
           "resume: checkpoint grid shape does not match the configuration");
    }
    if (side.grid_master.size() != grid_count) {
      fail(ErrorCode::invalid_argument, "resume: sidecar grid size mismatch");
    }
    if (side.lr != cfg.adam.lr || side.beta1 != cfg.adam.beta1 ||
        side.beta2 != cfg.adam.beta2 || side.eps != cfg.adam.eps ||
        side.weight_decay != cfg.adam.weight_decay) {
      fail(ErrorCode::invalid_argument,
           "resume: optimizer hyper-parameters do not match the checkpoint");
    }
    encoder = m.encoder;
    grid_master = side.grid_master;
    grid_opt.step = side.step;
    grid_opt.m = side.grid_m;
    grid_opt.v = side.grid_v;
    enc_opt.step = side.step;
    enc_opt.m = side.enc_m;
    enc_opt.v = side.enc_v;
    rng.state = side.rng_state;
    start_epoch = side.next_epoch;
    history = side.history;
    if (enc_opt.m.size() != encoder.parameter_count()) {
      fail(ErrorCode::invalid_argument, "resume: sidecar encoder size mismatch");
    }
  } else {
    encoder = init_scene_encoder<float>(rng);
    LutGrid init = make_average_grid(cfg.grid_points, cfg.bin);
    grid_master.resize(grid_count);
    for (size_t i = 0; i < grid_count; ++i) {
      grid_master[i] = init.entries[i] / 255.0f;
    }
    grid_opt.init(grid_count);
    enc_opt.init(encoder.parameter_count());
  }

  const int item_threads = cfg.deterministic ? 1 : cfg.threads;
  const int steps_per_epoch = static_cast<int>(dataset.size());

  auto materialize = [&]() {
    LutGrid grid(cfg.grid_points, cfg.bin);
    for (size_t i = 0; i < grid_count; ++i) {
      grid.entries[i] = 255.0f * grid_master[i];
    }
    return grid;
  };

  auto save_checkpoint = [&](uint32_t next_epoch) {
    Model m;
    m.grid = materialize();
    m.encoder = encoder;
    m.downsample = cfg.downsample;
    m.scene_source = cfg.frozen_box_feature ? SceneSource::box_mean
                                            : SceneSource::encoder;
    m.metadata_json = make_train_metadata(cfg);
    save_model(cfg.checkpoint_prefix + ".mmlut", m);

    OptimizerSidecar side;
    side.step = grid_opt.step;
    side.next_epoch = next_epoch;
    side.rng_state = rng.state;
    side.lr = cfg.adam.lr;
    side.beta1 = cfg.adam.beta1;
    side.beta2 = cfg.adam.beta2;
    side.eps = cfg.adam.eps;
    side.weight_decay = cfg.adam.weight_decay;
    side.grid_master = grid_master;
    side.grid_m = grid_opt.m;
    side.grid_v = grid_opt.v;
    side.enc_m = enc_opt.m;
    side.enc_v = enc_opt.v;
    side.history = history;
    save_optimizer_sidecar(cfg.checkpoint_prefix + ".mmos", side);
  };

  std::vector<double> grid_grad_norm(grid_count);
  for (uint32_t epoch = start_epoch; epoch < static_cast<uint32_t>(cfg.epochs);
       ++epoch) {
    LossRow row;
    row.epoch = epoch + 1;
    for (int step = 0; step < steps_per_epoch; ++step) {
      PatchBatch batch =
          sample_patches(dataset, cfg.batch_size, cfg.patch_size, rng);
      LutGrid grid = materialize();
      DistillGrads<float> grads = DistillGrads<float>::zeros(grid, encoder);
      LossBreakdown losses = distill_batch(
          grid, encoder, cfg.downsample, cfg.frozen_box_feature, cfg.teacher,
          cfg.pyramid_levels, cfg.weights, batch, &grads, item_threads);

      // Chain level-unit grid gradients into the normalized parameters.
      for (size_t i = 0; i < grid_count; ++i) {
        grid_grad_norm[i] = grads.grid[i] * 255.0;
      }
      adamw_step(grid_master.data(), grid_grad_norm.data(), grid_count,
                 grid_opt, cfg.adam, /*apply_decay=*/false);
      if (!cfg.frozen_box_feature) {
        std::vector<float> enc_flat = detail::flatten_encoder(encoder);
        std::vector<double> enc_grads = detail::flatten_encoder_grads(grads.encoder);
        adamw_step(enc_flat.data(), enc_grads.data(), enc_flat.size(), enc_opt,
                   cfg.adam, /*apply_decay=*/true);
        detail::unflatten_encoder(enc_flat, encoder);
      }

      row.l_int += losses.l_int / steps_per_epoch;
      row.l_ssim += losses.l_ssim / steps_per_epoch;
      row.r_tv += losses.r_tv / steps_per_epoch;
      row.r_m += losses.r_m / steps_per_epoch;
      row.l_all += losses.l_all / steps_per_epoch;
    }
    {
      LutGrid grid = materialize();
      row.violations = monotonicity_regularizer(grid).violations;
    }
    history.push_back(row);

    if (cfg.verbose) {
      std::fprintf(stderr,
                   "epoch %u/%d  L_int=%.4f  L_ssim=%.4f  R_TV=%.3g  R_m=%.3g"
                   "  L_all=%.4f  violations=%llu\n",
                   row.epoch, cfg.epochs, row.l_int, row.l_ssim, row.r_tv,
                   row.r_m, row.l_all,
                   static_cast<unsigned long long>(row.violations));
    }

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        (epoch + 1) % static_cast<uint32_t>(cfg.checkpoint_every) == 0) {
      save_checkpoint(epoch + 1);
    }
  }

  TrainResult result;
  result.model.grid = materialize();
  result.model.encoder = encoder;
  result.model.downsample = cfg.downsample;
  result.model.scene_source =
      cfg.frozen_box_feature ? SceneSource::box_mean : SceneSource::encoder;
  result.model.metadata_json = make_train_metadata(cfg);
  result.history = std::move(history);
  if (!cfg.csv_path.empty()) write_loss_csv(cfg.csv_path, result.history);
  return result;
}

}  // namespace mmlut
