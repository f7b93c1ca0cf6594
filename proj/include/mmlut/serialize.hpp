#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmlut/common.hpp"
#include "mmlut/image_io.hpp"

namespace mmlut {

// Little-endian binary container plumbing shared by the model file (magic
// MMLT) and the optimizer-state sidecar (magic MMOS). Every file ends with a
// CRC32 (reflected 0xEDB88320, the usual zip polynomial) over all preceding
// bytes.

namespace detail {

inline uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

inline uint32_t crc32(const uint8_t* data, size_t len) {
  return crc32_update(0, data, len);
}

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void bytes(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
  }
  void tag(const char t[4]) { bytes(t, 4); }

  // Appends the checksum and writes the file through a temp + rename.
  void finish_to_file(const std::string& path) {
    u32(crc32(buf_.data(), buf_.size()));
    atomic_write(path, [this](const std::string& tmp) {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) fail(ErrorCode::io_failure, "cannot create " + tmp);
      out.write(reinterpret_cast<const char*>(buf_.data()),
                static_cast<std::streamsize>(buf_.size()));
      out.flush();
      if (!out) fail(ErrorCode::io_failure, "write failed: " + tmp);
    });
  }

  const std::vector<uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size, std::string name)
      : data_(data), size_(size), name_(std::move(name)) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void bytes(void* out, size_t len) {
    need(len);
    std::memcpy(out, data_ + pos_, len);
    pos_ += len;
  }
  std::string string(size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }
  size_t position() const { return pos_; }
  size_t size() const { return size_; }

  void expect_exhausted(size_t reserved_tail) {
    if (pos_ + reserved_tail != size_) {
      fail(ErrorCode::truncated_file, name_ + ": container size mismatch");
    }
  }

 private:
  void need(size_t n) {
    if (pos_ + n > size_) fail(ErrorCode::truncated_file, name_ + ": unexpected end of file");
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string name_;
};

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorCode::file_missing, "cannot open " + path);
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) fail(ErrorCode::io_failure, "read failed: " + path);
  return buf;
}

// Shared prologue: magic and version sit at fixed offsets and are checked
// first, then the trailing checksum is verified before any payload parsing.
inline ByteReader open_container(const std::vector<uint8_t>& buf,
                                 const std::string& path, const char magic[4],
                                 uint32_t expected_version) {
  if (buf.size() < 12) fail(ErrorCode::truncated_file, path + ": file too small");
  ByteReader r(buf.data(), buf.size(), path);
  char m[4];
  r.bytes(m, 4);
  if (std::memcmp(m, magic, 4) != 0) {
    fail(ErrorCode::bad_magic, path + ": bad magic");
  }
  uint32_t version = r.u32();
  if (version != expected_version) {
    fail(ErrorCode::unsupported_version,
         path + ": unsupported version " + std::to_string(version));
  }
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
  }
  if (crc32(buf.data(), buf.size() - 4) != stored) {
    fail(ErrorCode::checksum_mismatch, path + ": checksum mismatch");
  }
  return r;
}

}  // namespace detail

// One row of the training loss log.
struct LossRow {
  uint32_t epoch = 0;
  double l_int = 0.0;
  double l_ssim = 0.0;
  double r_tv = 0.0;
  double r_m = 0.0;
  double l_all = 0.0;
  uint64_t violations = 0;
};

// Optimizer-state sidecar contents; everything needed to continue a run
// bit-exactly. grid_master holds the trainable grid in its normalized
// parameterization (entry / 255).
struct OptimizerSidecar {
  uint64_t step = 0;
  uint32_t next_epoch = 0;
  uint64_t rng_state = 0;
  double lr = 0.0, beta1 = 0.0, beta2 = 0.0, eps = 0.0, weight_decay = 0.0;
  std::vector<float> grid_master;
  std::vector<double> grid_m, grid_v;
  std::vector<double> enc_m, enc_v;
  std::vector<LossRow> history;
};

inline constexpr char kModelMagic[4] = {'M', 'M', 'L', 'T'};
inline constexpr char kStateMagic[4] = {'M', 'M', 'O', 'S'};
inline constexpr char kAxisTag[4] = {'v', 'i', 'g', 's'};
inline constexpr uint32_t kContainerVersion = 1;

inline void save_optimizer_sidecar(const std::string& path,
                                   const OptimizerSidecar& s) {
  detail::ByteWriter w;
  w.tag(kStateMagic);
  w.u32(kContainerVersion);
  w.u64(s.step);
  w.u32(s.next_epoch);
  w.u64(s.rng_state);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.eps);
  w.f64(s.weight_decay);
  w.u32(static_cast<uint32_t>(s.grid_master.size()));
  for (float v : s.grid_master) w.f32(v);
  for (double v : s.grid_m) w.f64(v);
  for (double v : s.grid_v) w.f64(v);
  w.u32(static_cast<uint32_t>(s.enc_m.size()));
  for (double v : s.enc_m) w.f64(v);
  for (double v : s.enc_v) w.f64(v);
  w.u32(static_cast<uint32_t>(s.history.size()));
  for (const LossRow& row : s.history) {
    w.u32(row.epoch);
    w.f64(row.l_int);
    w.f64(row.l_ssim);
    w.f64(row.r_tv);
    w.f64(row.r_m);
    w.f64(row.l_all);
    w.u64(row.violations);
  }
  w.finish_to_file(path);
}

inline OptimizerSidecar load_optimizer_sidecar(const std::string& path) {
  std::vector<uint8_t> buf = detail::read_file_bytes(path);
  detail::ByteReader r = detail::open_container(buf, path, kStateMagic, kContainerVersion);
  OptimizerSidecar s;
  s.step = r.u64();
  s.next_epoch = r.u32();
  s.rng_state = r.u64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.eps = r.f64();
  s.weight_decay = r.f64();
  uint32_t grid_count = r.u32();
  s.grid_master.resize(grid_count);
  for (auto& v : s.grid_master) v = r.f32();
  s.grid_m.resize(grid_count);
  for (auto& v : s.grid_m) v = r.f64();
  s.grid_v.resize(grid_count);
  for (auto& v : s.grid_v) v = r.f64();
  uint32_t enc_count = r.u32();
  s.enc_m.resize(enc_count);
  for (auto& v : s.enc_m) v = r.f64();
  s.enc_v.resize(enc_count);
  for (auto& v : s.enc_v) v = r.f64();
  uint32_t rows = r.u32();
  s.history.resize(rows);
  for (auto& row : s.history) {
    row.epoch = r.u32();
    row.l_int = r.f64();
    row.l_ssim = r.f64();
    row.r_tv = r.f64();
    row.r_m = r.f64();
    row.l_all = r.f64();
    row.violations = r.u64();
  }
  r.expect_exhausted(4);
  return s;
}

}  // namespace mmlut
