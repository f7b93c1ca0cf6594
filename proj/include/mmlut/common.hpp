#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mmlut {

// Failure categories. The CLI maps each one to a distinct process exit code,
// so keep this list append-only.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,
  file_missing = 2,
  decode_failure = 3,
  dimension_mismatch = 4,
  unsupported_bit_depth = 5,
  bad_magic = 6,
  unsupported_version = 7,
  truncated_file = 8,
  checksum_mismatch = 9,
  image_too_small = 10,
  empty_dataset = 11,
  io_failure = 12,
  numeric_failure = 13,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

// Counter-based PRNG (splitmix64). One u64 of state, identical sequences on
// every platform, trivially serializable into checkpoints.
struct Rng {
  uint64_t state = 0;

  explicit Rng(uint64_t seed = 0) : state(seed) {}

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Unbiased bounded draw (multiply-shift with rejection).
  uint32_t uniform_u32(uint32_t bound) {
    if (bound == 0) return 0;
    uint64_t x = next_u64() & 0xffffffffull;
    uint64_t m = x * bound;
    uint32_t lo = static_cast<uint32_t>(m);
    if (lo < bound) {
      uint32_t threshold = (0u - bound) % bound;
      while (lo < threshold) {
        x = next_u64() & 0xffffffffull;
        m = x * bound;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

// Runs fn(begin, end) over [0, total) split into contiguous chunks. Each
// index is processed exactly once by exactly one invocation, so any kernel
// that writes only to its own output range produces results independent of
// the thread count.
template <class Fn>
void parallel_for(int64_t total, int threads, Fn&& fn) {
  if (total <= 0) return;
  if (threads <= 1 || total == 1) {
    fn(int64_t{0}, total);
    return;
  }
  int n = static_cast<int>(std::min<int64_t>(threads, total));
  int64_t chunk = (total + n - 1) / n;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min<int64_t>(begin + chunk, total);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mmlut
