#include <catch2/catch_amalgamated.hpp>

#include "mmlut/model.hpp"
#include "mmlut/serialize.hpp"
#include "testutil.hpp"

using namespace mmlut;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ok;
}

Model random_model(uint64_t seed) {
  Model m = make_model(seed);
  Rng rng(seed * 31 + 5);
  for (float& v : m.grid.entries) v = float(rng.uniform(0.0, 255.0));
  m.metadata_json = "{\"a\": 1, \"note\": \"kept verbatim\", \"zz\": [1,2,3]}";
  return m;
}

}  // namespace

TEST_CASE("crc32 matches the reference vector", "[serialize]") {
  const char* s = "123456789";
  CHECK(detail::crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
  CHECK(detail::crc32(nullptr, 0) == 0u);
}

TEST_CASE("model files round trip bit for bit", "[serialize]") {
  testutil::TempDir dir("model_rt");
  for (uint64_t seed = 0; seed < 4; ++seed) {
    Model m = random_model(seed);
    std::string path = dir.file("m.mmlut");
    save_model(path, m);
    Model back = load_model(path);
    REQUIRE(back.grid.points == m.grid.points);
    REQUIRE(back.grid.bin == m.grid.bin);
    REQUIRE(back.grid.entries == m.grid.entries);
    for (size_t b = 0; b < m.encoder.blocks.size(); ++b) {
      REQUIRE(back.encoder.blocks[b].weights == m.encoder.blocks[b].weights);
      REQUIRE(back.encoder.blocks[b].bias == m.encoder.blocks[b].bias);
    }
    REQUIRE(back.downsample == m.downsample);
    REQUIRE(back.metadata_json == m.metadata_json);
    REQUIRE(back.scene_source == m.scene_source);
  }
}

TEST_CASE("model file layout is pinned", "[serialize]") {
  testutil::TempDir dir("layout");
  Model m = random_model(9);
  std::string path = dir.file("m.mmlut");
  save_model(path, m);
  auto bytes = testutil::read_bytes(path);

  // magic, then axis order tag at its fixed offset
  REQUIRE(bytes.size() > 20);
  CHECK(std::memcmp(bytes.data(), "MMLT", 4) == 0);
  CHECK(std::memcmp(bytes.data() + 16, "vigs", 4) == 0);

  size_t p4 = size_t(m.grid.points) * m.grid.points * m.grid.points *
              size_t(m.grid.points);
  size_t expected = 8                                   // magic + version
                    + 12                                // points + bin + axis
                    + 4 * p4                            // grid entries
                    + 4 + 5 * 12                        // block count + shapes
                    + 4 * size_t(m.encoder.parameter_count())
                    + 1                                 // downsample
                    + 4 + m.metadata_json.size()        // metadata
                    + 4;                                // checksum
  CHECK(bytes.size() == expected);
}

TEST_CASE("load rejects damage in the documented order", "[serialize]") {
  testutil::TempDir dir("damage");
  Model m = random_model(17);
  std::string good = dir.file("good.mmlut");
  save_model(good, m);
  auto bytes = testutil::read_bytes(good);

  SECTION("missing file") {
    CHECK(code_of([&] { load_model(dir.file("absent.mmlut")); }) ==
          ErrorCode::file_missing);
  }

  SECTION("short file") {
    auto tiny = bytes;
    tiny.resize(8);
    std::string p = dir.file("tiny.mmlut");
    testutil::write_bytes(p, tiny);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::truncated_file);
  }

  SECTION("bad magic wins over the stale checksum") {
    auto bad = bytes;
    bad[0] = 'X';
    std::string p = dir.file("magic.mmlut");
    testutil::write_bytes(p, bad);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::bad_magic);
  }

  SECTION("unknown version wins over the stale checksum") {
    auto bad = bytes;
    bad[4] = 2;
    std::string p = dir.file("ver.mmlut");
    testutil::write_bytes(p, bad);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::unsupported_version);
  }

  SECTION("payload corruption fails the checksum") {
    auto bad = bytes;
    bad[25] ^= 0x40;  // inside the grid data
    std::string p = dir.file("flip.mmlut");
    testutil::write_bytes(p, bad);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::checksum_mismatch);
  }

  SECTION("checksum trailer corruption is caught") {
    auto bad = bytes;
    bad[bad.size() - 1] ^= 0x01;
    std::string p = dir.file("tail.mmlut");
    testutil::write_bytes(p, bad);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::checksum_mismatch);
  }

  SECTION("mid-file truncation never loads") {
    auto bad = bytes;
    bad.resize(bytes.size() / 2);
    std::string p = dir.file("half.mmlut");
    testutil::write_bytes(p, bad);
    ErrorCode c = code_of([&] { load_model(p); });
    bool rejected = c == ErrorCode::truncated_file ||
                    c == ErrorCode::checksum_mismatch;
    CHECK(rejected);
  }

  SECTION("sidecar magic on a model path is a magic error") {
    OptimizerSidecar s;
    std::string p = dir.file("state.mmos");
    save_optimizer_sidecar(p, s);
    CHECK(code_of([&] { load_model(p); }) == ErrorCode::bad_magic);
  }
}

TEST_CASE("save refuses non-finite grids", "[serialize]") {
  testutil::TempDir dir("nonfinite");
  Model m = make_model(3);
  m.grid.entries[7] = std::numeric_limits<float>::quiet_NaN();
  CHECK(code_of([&] { save_model(dir.file("nan.mmlut"), m); }) ==
        ErrorCode::numeric_failure);
}

TEST_CASE("optimizer sidecar round trips every field", "[serialize]") {
  testutil::TempDir dir("sidecar");
  OptimizerSidecar s;
  s.step = 1234;
  s.next_epoch = 56;
  s.rng_state = 0xDEADBEEFCAFEF00Dull;
  s.lr = 5e-5;
  s.beta1 = 0.9;
  s.beta2 = 0.999;
  s.eps = 1e-8;
  s.weight_decay = 0.25;
  Rng rng(91);
  s.grid_master.resize(81);
  for (auto& v : s.grid_master) v = float(rng.uniform());
  s.grid_m.resize(81);
  s.grid_v.resize(81);
  for (auto& v : s.grid_m) v = rng.uniform(-1.0, 1.0);
  for (auto& v : s.grid_v) v = rng.uniform(0.0, 1.0);
  s.enc_m.resize(7409);
  s.enc_v.resize(7409);
  for (auto& v : s.enc_m) v = rng.uniform(-1.0, 1.0);
  for (auto& v : s.enc_v) v = rng.uniform(0.0, 1.0);
  s.history = {{1, 10.5, 0.5, 1e-4, 0.0, 10.55, 3},
               {2, 9.0, 0.4, 2e-4, 1e-6, 9.04, 0}};

  std::string path = dir.file("state.mmos");
  save_optimizer_sidecar(path, s);
  OptimizerSidecar back = load_optimizer_sidecar(path);

  CHECK(back.step == s.step);
  CHECK(back.next_epoch == s.next_epoch);
  CHECK(back.rng_state == s.rng_state);
  CHECK(back.lr == s.lr);
  CHECK(back.beta1 == s.beta1);
  CHECK(back.beta2 == s.beta2);
  CHECK(back.eps == s.eps);
  CHECK(back.weight_decay == s.weight_decay);
  REQUIRE(back.grid_master == s.grid_master);
  REQUIRE(back.grid_m == s.grid_m);
  REQUIRE(back.grid_v == s.grid_v);
  REQUIRE(back.enc_m == s.enc_m);
  REQUIRE(back.enc_v == s.enc_v);
  REQUIRE(back.history.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.history[i].epoch == s.history[i].epoch);
    CHECK(back.history[i].l_int == s.history[i].l_int);
    CHECK(back.history[i].l_ssim == s.history[i].l_ssim);
    CHECK(back.history[i].r_tv == s.history[i].r_tv);
    CHECK(back.history[i].r_m == s.history[i].r_m);
    CHECK(back.history[i].l_all == s.history[i].l_all);
    CHECK(back.history[i].violations == s.history[i].violations);
  }

  // model magic on the sidecar path is rejected up front
  Model m = make_model(1);
  std::string mp = dir.file("m.mmlut");
  save_model(mp, m);
  CHECK(code_of([&] { load_optimizer_sidecar(mp); }) == ErrorCode::bad_magic);
}
