#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/encode.hpp"
#include "mmlut/image.hpp"
#include "mmlut/lut.hpp"
#include "mmlut/teacher.hpp"

namespace mmlut {

// Training-free baseline: run the teacher over the dataset, bin every pixel
// into its nearest table cell along each axis, and store the mean teacher
// output per cell. Cells never hit by any pixel are filled afterwards by
// repeated averaging of already-filled axis neighbors (8 per cell), each
// sweep reading only the values present when the sweep started, so the scan
// order inside a sweep does not matter.

struct QuantizeResult {
  LutGrid grid;
  double coverage = 0.0;   // fraction of cells observed directly
  uint64_t observed = 0;   // cells with at least one sample
  uint64_t propagated = 0; // cells filled by neighbor averaging
};

namespace detail {

inline int nearest_axis_index(float value, float bin, int points) {
  long idx = std::lround(value / bin);
  if (idx < 0) idx = 0;
  if (idx > points - 1) idx = points - 1;
  return static_cast<int>(idx);
}

}  // namespace detail

inline QuantizeResult build_quantized_lut(const std::vector<ImagePair>& dataset,
                                          TeacherKind teacher,
                                          int pyramid_levels, int points,
                                          float bin,
                                          const SceneEncoder* encoder = nullptr,
                                          int downsample = 4,
                                          int threads = 1) {
  if (dataset.empty()) {
    fail(ErrorCode::empty_dataset, "build_quantized_lut: empty dataset");
  }
  if (points < 2 || bin <= 0.0f) {
    fail(ErrorCode::invalid_argument, "build_quantized_lut: bad grid shape");
  }

  const size_t cell_count = static_cast<size_t>(points) * points * points * points;
  std::vector<double> sums(cell_count, 0.0);
  std::vector<uint64_t> counts(cell_count, 0);

  QuantizeResult result;
  result.grid = LutGrid(points, bin);

  for (const ImagePair& pair : dataset) {
    Encodings enc = make_encodings(pair.ir, pair.vis);
    ImagePlane s_j = encoder
                         ? scene_encode<float>(enc.n_v, enc.n_i, *encoder,
                                               downsample, nullptr, threads)
                         : box_scene_feature(enc.n_v, enc.n_i);
    ImagePlane target = teacher_fuse(teacher, enc.n_v, enc.n_i, pyramid_levels);

    for (size_t px = 0; px < target.size(); ++px) {
      int v = detail::nearest_axis_index(enc.n_v.data[px], bin, points);
      int i = detail::nearest_axis_index(enc.n_i.data[px], bin, points);
      int g = detail::nearest_axis_index(enc.g_v.data[px], bin, points);
      int s = detail::nearest_axis_index(s_j.data[px], bin, points);
      size_t cell = result.grid.index(v, i, g, s);
      sums[cell] += static_cast<double>(target.data[px]);
      counts[cell] += 1;
    }
  }

  std::vector<uint8_t> filled(cell_count, 0);
  for (size_t c = 0; c < cell_count; ++c) {
    if (counts[c] > 0) {
      result.grid.entries[c] = static_cast<float>(sums[c] / counts[c]);
      filled[c] = 1;
      result.observed += 1;
    }
  }
  result.coverage =
      static_cast<double>(result.observed) / static_cast<double>(cell_count);
  if (result.observed == 0) {
    fail(ErrorCode::empty_dataset, "build_quantized_lut: no samples landed");
  }

  // Propagate outward from the observed cells until the table is complete.
  const size_t strides[4] = {static_cast<size_t>(points) * points * points,
                             static_cast<size_t>(points) * points,
                             static_cast<size_t>(points), 1};
  uint64_t remaining = cell_count - result.observed;
  std::vector<float> snapshot_vals;
  std::vector<uint8_t> snapshot_filled;
  while (remaining > 0) {
    snapshot_vals = result.grid.entries;
    snapshot_filled = filled;
    uint64_t filled_this_pass = 0;
    for (int v = 0; v < points; ++v) {
      for (int i = 0; i < points; ++i) {
        for (int g = 0; g < points; ++g) {
          for (int s = 0; s < points; ++s) {
            size_t cell = result.grid.index(v, i, g, s);
            if (filled[cell]) continue;
            const int coords[4] = {v, i, g, s};
            double acc = 0.0;
            int n = 0;
            for (int axis = 0; axis < 4; ++axis) {
              if (coords[axis] > 0) {
                size_t nb = cell - strides[axis];
                if (snapshot_filled[nb]) { acc += snapshot_vals[nb]; ++n; }
              }
              if (coords[axis] < points - 1) {
                size_t nb = cell + strides[axis];
                if (snapshot_filled[nb]) { acc += snapshot_vals[nb]; ++n; }
              }
            }
            if (n > 0) {
              result.grid.entries[cell] = static_cast<float>(acc / n);
              filled[cell] = 1;
              ++filled_this_pass;
            }
          }
        }
      }
    }
    if (filled_this_pass == 0) {
      fail(ErrorCode::numeric_failure,
           "build_quantized_lut: fill pass made no progress");
    }
    remaining -= filled_this_pass;
    result.propagated += filled_this_pass;
  }

  return result;
}

}  // namespace mmlut
