#pragma once

// Shared helpers for the unit and acceptance suites: temp dirs, a synthetic
// correlated ir/vis dataset generator, and small numeric utilities.

#include <sys/wait.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"
#include "mmlut/image_io.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  double scale = std::max({1e-12, std::abs(got), std::abs(want)});
  return std::abs(got - want) / scale;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("mmlut_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// --------------------------------------------------------------------------
// Synthetic dataset: smooth correlated fields with hard edges and hot spots,
// covering the full [0,255] range per image while keeping |vis - ir|
// moderate so the pair actually looks registered.
// --------------------------------------------------------------------------

inline constexpr double kPi = 3.141592653589793;

inline mmlut::ImagePlane sinusoid_field(mmlut::Rng& rng, int w, int h,
                                        int waves) {
  std::vector<double> amp(waves), fx(waves), fy(waves), ph(waves);
  for (int k = 0; k < waves; ++k) {
    amp[k] = rng.uniform(0.5, 1.0);
    double cycles = rng.uniform(0.5, 3.0);
    double theta = rng.uniform(0.0, 2.0 * kPi);
    fx[k] = cycles * std::cos(theta) / w;
    fy[k] = cycles * std::sin(theta) / h;
    ph[k] = rng.uniform(0.0, 2.0 * kPi);
  }
  mmlut::ImagePlane out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (int k = 0; k < waves; ++k) {
        v += amp[k] * std::sin(2.0 * kPi * (fx[k] * x + fy[k] * y) + ph[k]);
      }
      out.at(x, y) = static_cast<float>(v);
    }
  }
  return out;
}

inline void rescale_plane(mmlut::ImagePlane& p, float lo, float hi) {
  float mn = p.data[0], mx = p.data[0];
  for (float v : p.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  float span = mx - mn;
  if (span <= 0.0f) span = 1.0f;
  for (float& v : p.data) v = lo + (v - mn) * (hi - lo) / span;
}

inline void add_rect(mmlut::ImagePlane& p, mmlut::Rng& rng, float delta) {
  int w = p.width, h = p.height;
  int rw = 10 + static_cast<int>(rng.uniform_u32(41));
  int rh = 10 + static_cast<int>(rng.uniform_u32(41));
  int x0 = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(
      std::max(1, w - rw))));
  int y0 = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(
      std::max(1, h - rh))));
  for (int y = y0; y < std::min(h, y0 + rh); ++y) {
    for (int x = x0; x < std::min(w, x0 + rw); ++x) {
      p.at(x, y) = mmlut::clamp255(p.at(x, y) + delta);
    }
  }
}

inline mmlut::ImagePair synth_pair(uint64_t seed, int w = 144, int h = 144) {
  mmlut::Rng rng(seed * 0x9e3779b9u + 0x1234567u);

  // Visible luminance: low-frequency field over nearly the full range, plus
  // hard-edged rectangles for strong gradient responses.
  mmlut::ImagePlane vis_y = sinusoid_field(rng, w, h, 3);
  float lo = static_cast<float>(rng.uniform(0.0, 25.0));
  float hi = static_cast<float>(rng.uniform(230.0, 255.0));
  rescale_plane(vis_y, lo, hi);
  int n_rect = 2 + static_cast<int>(rng.uniform_u32(2));
  for (int k = 0; k < n_rect; ++k) {
    float mag = static_cast<float>(rng.uniform(40.0, 90.0));
    add_rect(vis_y, rng, rng.uniform_u32(2) ? mag : -mag);
  }

  // IR: the same scene plus a correlated low-frequency difference field and
  // a couple of hot spots.
  mmlut::ImagePlane diff = sinusoid_field(rng, w, h, 2);
  float amp = static_cast<float>(rng.uniform(25.0, 70.0));
  rescale_plane(diff, -amp, amp);
  mmlut::ImagePlane ir(w, h);
  for (size_t i = 0; i < ir.size(); ++i) {
    ir.data[i] = mmlut::clamp255(vis_y.data[i] + diff.data[i]);
  }
  int n_spot = 1 + static_cast<int>(rng.uniform_u32(2));
  for (int k = 0; k < n_spot; ++k) {
    add_rect(ir, rng, static_cast<float>(rng.uniform(30.0, 80.0)));
  }

  // Mild chroma so the visible image is a real color image.
  mmlut::YCbCrImage ycc;
  ycc.y = vis_y;
  ycc.cb = sinusoid_field(rng, w, h, 2);
  ycc.cr = sinusoid_field(rng, w, h, 2);
  float c1 = static_cast<float>(rng.uniform(5.0, 20.0));
  float c2 = static_cast<float>(rng.uniform(5.0, 20.0));
  rescale_plane(ycc.cb, 128.0f - c1, 128.0f + c1);
  rescale_plane(ycc.cr, 128.0f - c2, 128.0f + c2);

  mmlut::ImagePair pair;
  pair.ir = std::move(ir);
  pair.vis = mmlut::ycbcr_to_rgb(ycc.y, ycc.cb, ycc.cr);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth%04llu",
                static_cast<unsigned long long>(seed));
  pair.name = buf;
  return pair;
}

inline std::vector<mmlut::ImagePair> synth_dataset(int count,
                                                   uint64_t base_seed,
                                                   int w = 144, int h = 144) {
  std::vector<mmlut::ImagePair> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(synth_pair(base_seed + static_cast<uint64_t>(i), w, h));
  }
  return out;
}

// Writes a dataset in the on-disk layout the CLI consumes (ir/ and vis/
// subdirectories, names matched by stem).
inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<mmlut::ImagePair>& dataset) {
  std::filesystem::create_directories(dir / "ir");
  std::filesystem::create_directories(dir / "vis");
  for (const mmlut::ImagePair& pair : dataset) {
    mmlut::save_gray((dir / "ir" / (pair.name + ".png")).string(), pair.ir);
    mmlut::save_color((dir / "vis" / (pair.name + ".png")).string(), pair.vis);
  }
}

inline mmlut::ImagePlane random_plane(mmlut::Rng& rng, int w, int h,
                                      double lo = 0.0, double hi = 255.0) {
  mmlut::ImagePlane out(w, h);
  for (float& v : out.data) v = static_cast<float>(rng.uniform(lo, hi));
  return out;
}

// --------------------------------------------------------------------------
// Subprocess helper for CLI tests. MMLUT_CLI_PATH comes from the build.
// --------------------------------------------------------------------------

#ifdef MMLUT_CLI_PATH
struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined

  bool contains(const std::string& needle) const {
    return output.find(needle) != std::string::npos;
  }
};

inline CliResult run_cli(const std::string& args) {
  CliResult result;
  std::string cmd = std::string(MMLUT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return result;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) {
    result.output.append(buf, n);
  }
  int rc = pclose(pipe);
  result.exit_code = (rc >= 0 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -1;
  return result;
}
#endif

inline std::vector<uint8_t> read_bytes(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> out(static_cast<size_t>(size));
  size_t got = out.empty() ? 0 : std::fread(out.data(), 1, out.size(), f);
  std::fclose(f);
  out.resize(got);
  return out;
}

inline void write_bytes(const std::string& path,
                        const std::vector<uint8_t>& bytes) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) return;
  if (!bytes.empty()) std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
}

}  // namespace testutil
