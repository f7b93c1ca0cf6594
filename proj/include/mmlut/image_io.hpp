#pragma once

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image.hpp"

namespace mmlut {

namespace detail {

class FileHandle {
 public:
  FileHandle(const std::string& path, const char* mode)
      : f_(std::fopen(path.c_str(), mode)) {}
  ~FileHandle() {
    if (f_) std::fclose(f_);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;

  FILE* get() const { return f_; }

 private:
  FILE* f_ = nullptr;
};

// Interleaved 8-bit buffer; the intermediate between codecs and planes.
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 = gray, 3 = RGB
  std::vector<uint8_t> pixels;
};

inline Raster8 decode_png(const std::string& path) {
  FileHandle file(path, "rb");
  if (!file.get()) fail(ErrorCode::file_missing, "cannot open " + path);

  uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8)) {
    fail(ErrorCode::decode_failure, path + ": not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::decode_failure, path + ": libpng init failed");
  }

  Raster8 out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::decode_failure, path + ": PNG decode error");
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  if (png_get_bit_depth(png, info) > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::unsupported_bit_depth,
         path + ": 16-bit PNG is not supported");
  }

  // Normalize palette / low-bit-depth / alpha variants down to gray or RGB.
  png_set_expand(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  int channels = static_cast<int>(png_get_channels(png, info));
  if ((channels != 1 && channels != 3) || out.width <= 0 || out.height <= 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::decode_failure,
         path + ": unsupported channel layout after expansion");
  }
  out.channels = channels;
  out.pixels.resize(static_cast<size_t>(out.width) * out.height * channels);
  rows.resize(static_cast<size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    rows[static_cast<size_t>(y)] =
        out.pixels.data() + static_cast<size_t>(y) * out.width * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline Raster8 decode_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::file_missing, "cannot open " + path);

  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") {
    fail(ErrorCode::decode_failure, path + ": not a binary PGM/PPM file");
  }

  // Header tokens may be separated by whitespace and '#' comments.
  auto next_int = [&in, &path]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (c != EOF && std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) fail(ErrorCode::decode_failure, path + ": bad PNM header");
    return v;
  };

  long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0) fail(ErrorCode::decode_failure, path + ": bad PNM size");
  if (maxval > 255) {
    fail(ErrorCode::unsupported_bit_depth,
         path + ": PNM maxval " + std::to_string(maxval) + " is not supported");
  }
  if (maxval <= 0) fail(ErrorCode::decode_failure, path + ": bad PNM maxval");
  in.get();  // single whitespace byte before raster data

  Raster8 out;
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.channels = (magic == "P5") ? 1 : 3;
  out.pixels.resize(static_cast<size_t>(w) * h * out.channels);
  in.read(reinterpret_cast<char*>(out.pixels.data()),
          static_cast<std::streamsize>(out.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.pixels.size())) {
    fail(ErrorCode::decode_failure, path + ": truncated PNM raster");
  }
  return out;
}

inline Raster8 decode_image(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::file_missing, "no such file: " + path);
  }
  std::ifstream probe(path, std::ios::binary);
  uint8_t head[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(head), 2);
  probe.close();
  if (head[0] == 0x89 && head[1] == 'P') return decode_png(path);
  if (head[0] == 'P' && (head[1] == '5' || head[1] == '6')) return decode_pnm(path);
  fail(ErrorCode::decode_failure, path + ": unrecognized image format");
}

inline uint8_t quantize_u8(float v) {
  float r = std::nearbyint(std::clamp(v, 0.0f, 255.0f));
  return static_cast<uint8_t>(r);
}

inline void encode_png(const std::string& path, const Raster8& img) {
  FileHandle file(path, "wb");
  if (!file.get()) fail(ErrorCode::io_failure, "cannot create " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io_failure, path + ": libpng init failed");
  }
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io_failure, path + ": PNG encode error");
  }
  png_init_io(png, file.get());
  int color = (img.channels == 1) ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
        img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void encode_pnm(const std::string& path, const Raster8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_failure, "cannot create " + path);
  out << (img.channels == 1 ? "P5\n" : "P6\n")
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(ErrorCode::io_failure, "write failed: " + path);
}

}  // namespace detail

// Writes through a temp file in the destination directory and renames into
// place, so readers never observe a partially written file.
template <class WriteFn>
void atomic_write(const std::string& path, WriteFn&& write_fn) {
  std::string tmp = path + ".tmp";
  try {
    write_fn(tmp);
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

// Infrared loader: grayscale stays as-is, RGB is reduced to BT.601 luma.
inline ImagePlane load_gray(const std::string& path) {
  detail::Raster8 raw = detail::decode_image(path);
  ImagePlane out(raw.width, raw.height);
  if (raw.channels == 1) {
    for (size_t i = 0; i < out.size(); ++i) {
      out.data[i] = static_cast<float>(raw.pixels[i]);
    }
  } else {
    for (size_t i = 0; i < out.size(); ++i) {
      out.data[i] = bt601_luma(static_cast<float>(raw.pixels[3 * i]),
                               static_cast<float>(raw.pixels[3 * i + 1]),
                               static_cast<float>(raw.pixels[3 * i + 2]));
    }
  }
  return out;
}

// Color loader: grayscale input is promoted by channel replication.
inline ColorImage load_color(const std::string& path) {
  detail::Raster8 raw = detail::decode_image(path);
  ColorImage out;
  out.r = ImagePlane(raw.width, raw.height);
  out.g = ImagePlane(raw.width, raw.height);
  out.b = ImagePlane(raw.width, raw.height);
  if (raw.channels == 1) {
    for (size_t i = 0; i < out.r.size(); ++i) {
      float v = static_cast<float>(raw.pixels[i]);
      out.r.data[i] = v;
      out.g.data[i] = v;
      out.b.data[i] = v;
    }
  } else {
    for (size_t i = 0; i < out.r.size(); ++i) {
      out.r.data[i] = static_cast<float>(raw.pixels[3 * i]);
      out.g.data[i] = static_cast<float>(raw.pixels[3 * i + 1]);
      out.b.data[i] = static_cast<float>(raw.pixels[3 * i + 2]);
    }
  }
  return out;
}

inline void save_color(const std::string& path, const ColorImage& img) {
  detail::Raster8 raw;
  raw.width = img.width();
  raw.height = img.height();
  raw.channels = 3;
  raw.pixels.resize(static_cast<size_t>(raw.width) * raw.height * 3);
  for (size_t i = 0; i < img.r.size(); ++i) {
    raw.pixels[3 * i] = detail::quantize_u8(img.r.data[i]);
    raw.pixels[3 * i + 1] = detail::quantize_u8(img.g.data[i]);
    raw.pixels[3 * i + 2] = detail::quantize_u8(img.b.data[i]);
  }
  std::string ext = std::filesystem::path(path).extension().string();
  atomic_write(path, [&raw, &ext](const std::string& tmp) {
    if (ext == ".ppm") {
      detail::encode_pnm(tmp, raw);
    } else {
      detail::encode_png(tmp, raw);
    }
  });
}

inline void save_gray(const std::string& path, const ImagePlane& img) {
  detail::Raster8 raw;
  raw.width = img.width;
  raw.height = img.height;
  raw.channels = 1;
  raw.pixels.resize(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    raw.pixels[i] = detail::quantize_u8(img.data[i]);
  }
  std::string ext = std::filesystem::path(path).extension().string();
  atomic_write(path, [&raw, &ext](const std::string& tmp) {
    if (ext == ".pgm") {
      detail::encode_pnm(tmp, raw);
    } else {
      detail::encode_png(tmp, raw);
    }
  });
}

inline ImagePair load_image_pair(const std::string& ir_path,
                                 const std::string& vis_path) {
  ImagePair pair;
  pair.ir = load_gray(ir_path);
  pair.vis = load_color(vis_path);
  if (pair.ir.width != pair.vis.width() || pair.ir.height != pair.vis.height()) {
    fail(ErrorCode::dimension_mismatch,
         "pair size mismatch: " + ir_path + " is " + std::to_string(pair.ir.width) +
             "x" + std::to_string(pair.ir.height) + " but " + vis_path + " is " +
             std::to_string(pair.vis.width()) + "x" + std::to_string(pair.vis.height()));
  }
  pair.name = std::filesystem::path(ir_path).stem().string();
  return pair;
}

// Scans <dir>/ir and <dir>/vis, pairs files by stem, loads pairs in sorted
// name order. Files present on only one side are skipped with a warning.
inline std::vector<ImagePair> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path ir_dir = fs::path(dir) / "ir";
  fs::path vis_dir = fs::path(dir) / "vis";
  if (!fs::is_directory(ir_dir) || !fs::is_directory(vis_dir)) {
    fail(ErrorCode::file_missing,
         dir + ": expected ir/ and vis/ subdirectories");
  }

  auto scan = [](const fs::path& d) {
    std::map<std::string, fs::path> found;
    for (const auto& entry : fs::directory_iterator(d)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".pgm" || ext == ".ppm") {
        found[entry.path().stem().string()] = entry.path();
      }
    }
    return found;
  };

  std::map<std::string, fs::path> ir_files = scan(ir_dir);
  std::map<std::string, fs::path> vis_files = scan(vis_dir);

  std::vector<ImagePair> dataset;
  for (const auto& [stem, ir_path] : ir_files) {
    auto it = vis_files.find(stem);
    if (it == vis_files.end()) {
      std::cerr << "warning: skipping " << ir_path.string()
                << " (no matching visible image)\n";
      continue;
    }
    dataset.push_back(load_image_pair(ir_path.string(), it->second.string()));
  }
  for (const auto& [stem, vis_path] : vis_files) {
    if (!ir_files.count(stem)) {
      std::cerr << "warning: skipping " << vis_path.string()
                << " (no matching infrared image)\n";
    }
  }
  if (dataset.empty()) {
    fail(ErrorCode::empty_dataset, dir + ": no usable image pairs");
  }
  return dataset;
}

}  // namespace mmlut
