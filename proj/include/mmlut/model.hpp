#pragma once

#include <cmath>
#include <string>

#include "json.hpp"
#include "mmlut/common.hpp"
#include "mmlut/encode.hpp"
#include "mmlut/image.hpp"
#include "mmlut/lut.hpp"
#include "mmlut/serialize.hpp"

namespace mmlut {

// Which plane feeds the scene axis at fusion time.
enum class SceneSource {
  encoder,   // learned conv encoder
  box_mean,  // fixed 11x11 box feature
};

inline const char* scene_source_name(SceneSource s) {
  return s == SceneSource::box_mean ? "box-mean" : "encoder";
}

// The deployable artifact: the 4D table, the scene encoder, the encoder's
// operating resolution and a free-form JSON provenance blob. The JSON string
// is preserved byte-for-byte across save/load; the scene-source choice is
// mirrored into it under the "scene_feature" key.
struct Model {
  LutGrid grid;
  SceneEncoder encoder;
  int downsample = 4;
  SceneSource scene_source = SceneSource::encoder;
  std::string metadata_json = "{}";
};

inline constexpr int kDefaultGridPoints = 17;
inline constexpr float kDefaultBin = 17.0f;
inline constexpr int kDefaultDownsample = 4;

// Fresh model: average-surface grid, seeded encoder, metadata recording the
// seed.
inline Model make_model(uint64_t seed, int grid_points = kDefaultGridPoints,
                        float bin = kDefaultBin,
                        int downsample = kDefaultDownsample) {
  Model m;
  m.grid = make_average_grid(grid_points, bin);
  Rng rng(seed);
  m.encoder = init_scene_encoder<float>(rng);
  m.downsample = downsample;
  nlohmann::json meta;
  meta["seed"] = seed;
  meta["scene_feature"] = scene_source_name(m.scene_source);
  m.metadata_json = meta.dump();
  return m;
}

inline SceneSource parse_scene_source(const std::string& metadata_json) {
  try {
    auto meta = nlohmann::json::parse(metadata_json);
    if (meta.contains("scene_feature") && meta["scene_feature"] == "box-mean") {
      return SceneSource::box_mean;
    }
  } catch (const nlohmann::json::exception&) {
    // Unparseable metadata falls back to the learned encoder.
  }
  return SceneSource::encoder;
}

inline void save_model(const std::string& path, const Model& m) {
  for (float v : m.grid.entries) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::numeric_failure, "save_model: non-finite grid entry");
    }
  }
  detail::ByteWriter w;
  w.tag(kModelMagic);
  w.u32(kContainerVersion);
  w.u32(static_cast<uint32_t>(m.grid.points));
  w.f32(m.grid.bin);
  w.tag(kAxisTag);
  for (float v : m.grid.entries) w.f32(v);
  w.u32(static_cast<uint32_t>(m.encoder.blocks.size()));
  for (const auto& blk : m.encoder.blocks) {
    w.u32(static_cast<uint32_t>(blk.in_ch));
    w.u32(static_cast<uint32_t>(blk.out_ch));
    w.u32(3);
    for (float v : blk.weights) w.f32(v);
    for (float v : blk.bias) w.f32(v);
  }
  w.u8(static_cast<uint8_t>(m.downsample));
  w.u32(static_cast<uint32_t>(m.metadata_json.size()));
  w.bytes(m.metadata_json.data(), m.metadata_json.size());
  w.finish_to_file(path);
}

inline Model load_model(const std::string& path) {
  std::vector<uint8_t> buf = detail::read_file_bytes(path);
  detail::ByteReader r = detail::open_container(buf, path, kModelMagic, kContainerVersion);

  Model m;
  uint32_t points = r.u32();
  float bin = r.f32();
  if (points < 2 || points > 256) {
    fail(ErrorCode::invalid_argument,
         path + ": grid size " + std::to_string(points) + " out of range");
  }
  if (!(bin > 0.0f) || !std::isfinite(bin)) {
    fail(ErrorCode::invalid_argument, path + ": bad bin scale");
  }
  char axis[4];
  r.bytes(axis, 4);
  if (std::memcmp(axis, kAxisTag, 4) != 0) {
    fail(ErrorCode::bad_magic, path + ": unexpected axis order tag");
  }
  m.grid = LutGrid(static_cast<int>(points), bin);
  for (auto& v : m.grid.entries) v = r.f32();

  uint32_t blocks = r.u32();
  if (blocks != kSceneBlocks) {
    fail(ErrorCode::unsupported_version,
         path + ": unexpected encoder block count " + std::to_string(blocks));
  }
  m.encoder = make_scene_encoder<float>();
  for (uint32_t b = 0; b < blocks; ++b) {
    auto& blk = m.encoder.blocks[b];
    uint32_t in_ch = r.u32(), out_ch = r.u32(), ksize = r.u32();
    if (static_cast<int>(in_ch) != blk.in_ch ||
        static_cast<int>(out_ch) != blk.out_ch || ksize != 3) {
      fail(ErrorCode::unsupported_version,
           path + ": encoder block " + std::to_string(b) + " has unexpected shape");
    }
    for (auto& v : blk.weights) v = r.f32();
    for (auto& v : blk.bias) v = r.f32();
  }
  int downsample = r.u8();
  if (downsample != 1 && downsample != 2 && downsample != 4) {
    fail(ErrorCode::invalid_argument,
         path + ": downsample " + std::to_string(downsample) + " not supported");
  }
  m.downsample = downsample;
  uint32_t meta_len = r.u32();
  m.metadata_json = r.string(meta_len);
  r.expect_exhausted(4);
  m.scene_source = parse_scene_source(m.metadata_json);
  return m;
}

// Produces the scene-code plane according to the model's configuration.
inline ImagePlane scene_code(const Model& m, const ImagePlane& n_v,
                             const ImagePlane& n_i, int threads = 1) {
  if (m.scene_source == SceneSource::box_mean) {
    return box_scene_feature(n_v, n_i);
  }
  return scene_encode<float>(n_v, n_i, m.encoder, m.downsample, nullptr, threads);
}

// Fused luminance for a registered pair (the y-channel of the final output).
inline ImagePlane fuse_to_luminance(const Model& m, const ImagePlane& ir,
                                    const ColorImageT<float>& vis,
                                    int threads = 1) {
  Encodings enc = make_encodings(ir, vis);
  ImagePlane s_j = scene_code(m, enc.n_v, enc.n_i, threads);
  return fuse_luminance(m.grid, enc.n_v, enc.n_i, enc.g_v, s_j, threads);
}

// Full fusion: fused luminance plus the visible chroma, back to RGB.
inline ColorImage fuse_image(const Model& m, const ImagePair& pair,
                             int threads = 1) {
  ImagePlane y_f = fuse_to_luminance(m, pair.ir, pair.vis, threads);
  YCbCrImage ycc = rgb_to_ycbcr(pair.vis);
  return ycbcr_to_rgb(y_f, ycc.cb, ycc.cr);
}

}  // namespace mmlut
