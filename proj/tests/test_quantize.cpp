#include <catch2/catch_amalgamated.hpp>

#include "mmlut/quantize.hpp"
#include "testutil.hpp"

using namespace mmlut;

namespace {

ImagePair constant_pair(float ir_val, float vis_val, int w = 24, int h = 24) {
  ImagePair p;
  p.ir = ImagePlane(w, h, ir_val);
  p.vis.r = ImagePlane(w, h, vis_val);
  p.vis.g = ImagePlane(w, h, vis_val);
  p.vis.b = ImagePlane(w, h, vis_val);
  p.name = "const";
  return p;
}

}  // namespace

TEST_CASE("constant input floods the whole table with its value",
          "[quantbuild]") {
  std::vector<ImagePair> data = {constant_pair(128.0f, 128.0f)};
  QuantizeResult r =
      build_quantized_lut(data, TeacherKind::average, 4, 5, 63.75f);
  CHECK(r.observed == 1);
  CHECK(r.propagated == 5 * 5 * 5 * 5 - 1);
  CHECK(r.coverage == Catch::Approx(1.0 / 625.0).margin(1e-15));
  for (float v : r.grid.entries) {
    REQUIRE(v == Catch::Approx(128.0).margin(1e-3));
  }
}

TEST_CASE("observed cells store the teacher mean exactly", "[quantbuild]") {
  // constant pairs land every pixel in one known cell
  std::vector<ImagePair> data = {constant_pair(102.0f, 204.0f),
                                 constant_pair(255.0f, 0.0f)};
  QuantizeResult r =
      build_quantized_lut(data, TeacherKind::max_luminance, 4, 17, 17.0f);
  // pair 1: v=204/17=12, i=102/17=6, g=0, s=(204+102)/2=153 -> 9
  CHECK(r.grid.at(12, 6, 0, 9) == Catch::Approx(204.0).margin(1e-2));
  // pair 2: v=0, i=255/17=15, g=0, s=127.5 -> 8 (half rounds away from zero)
  CHECK(r.grid.at(0, 15, 0, 8) == Catch::Approx(255.0).margin(1e-2));
  CHECK(r.observed == 2);
}

TEST_CASE("coverage counts distinct observed cells", "[quantbuild]") {
  std::vector<ImagePair> data = {constant_pair(60.0f, 60.0f),
                                 constant_pair(200.0f, 200.0f)};
  QuantizeResult r =
      build_quantized_lut(data, TeacherKind::average, 4, 3, 127.5f);
  CHECK(r.observed == 2);
  CHECK(r.coverage == Catch::Approx(2.0 / 81.0).margin(1e-15));
  // neighbor averaging can never leave the hull of the observed means
  for (float v : r.grid.entries) {
    REQUIRE(v >= 59.9f);
    REQUIRE(v <= 200.1f);
  }
}

TEST_CASE("every cell is filled and stays in range", "[quantbuild]") {
  auto data = testutil::synth_dataset(3, 4200, 96, 96);
  QuantizeResult r = build_quantized_lut(data, TeacherKind::laplacian_pyramid,
                                         4, 9, 255.0f / 8.0f);
  CHECK(r.coverage > 0.0);
  CHECK(r.coverage <= 1.0);
  CHECK(r.observed + r.propagated == 9ull * 9 * 9 * 9);
  for (float v : r.grid.entries) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 255.0f);
  }
}

TEST_CASE("quantized build is deterministic", "[quantbuild]") {
  auto data = testutil::synth_dataset(2, 4300, 96, 96);
  QuantizeResult a =
      build_quantized_lut(data, TeacherKind::max_luminance, 4, 7, 42.5f);
  QuantizeResult b =
      build_quantized_lut(data, TeacherKind::max_luminance, 4, 7, 42.5f);
  REQUIRE(a.grid.entries == b.grid.entries);
  CHECK(a.observed == b.observed);
  CHECK(a.propagated == b.propagated);
}

TEST_CASE("a donor encoder replaces the box scene feature", "[quantbuild]") {
  std::vector<ImagePair> data = {constant_pair(100.0f, 140.0f)};
  SceneEncoder zero = make_scene_encoder<float>();  // all-zero params -> 127.5
  QuantizeResult with_enc = build_quantized_lut(
      data, TeacherKind::max_luminance, 4, 17, 17.0f, &zero, 4);
  QuantizeResult with_box =
      build_quantized_lut(data, TeacherKind::max_luminance, 4, 17, 17.0f);
  // v=140/17=8, i=100/17=6, g=0; encoder s=127.5->8, box s=120->7
  CHECK(with_enc.grid.at(8, 6, 0, 8) == Catch::Approx(140.0).margin(1e-2));
  CHECK(with_box.grid.at(8, 6, 0, 7) == Catch::Approx(140.0).margin(1e-2));
}

TEST_CASE("quantized build validates its inputs", "[quantbuild]") {
  std::vector<ImagePair> empty;
  CHECK_THROWS_MATCHES(
      build_quantized_lut(empty, TeacherKind::average, 4, 17, 17.0f), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == ErrorCode::empty_dataset;
      }));
  std::vector<ImagePair> data = {constant_pair(10.0f, 10.0f)};
  CHECK_THROWS_MATCHES(
      build_quantized_lut(data, TeacherKind::average, 4, 1, 17.0f), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == ErrorCode::invalid_argument;
      }));
  CHECK_THROWS_MATCHES(
      build_quantized_lut(data, TeacherKind::average, 4, 17, 0.0f), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == ErrorCode::invalid_argument;
      }));
}
