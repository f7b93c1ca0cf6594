#include <catch2/catch_amalgamated.hpp>

#include "mmlut/teacher.hpp"
#include "testutil.hpp"

using namespace mmlut;

TEST_CASE("teacher parsing", "[teacher]") {
  CHECK(parse_teacher("avg") == TeacherKind::average);
  CHECK(parse_teacher("maxlum") == TeacherKind::max_luminance);
  CHECK(parse_teacher("lappyr") == TeacherKind::laplacian_pyramid);
  CHECK_THROWS_AS(parse_teacher("nope"), Error);
  CHECK(std::string(teacher_name(TeacherKind::average)) == "avg");
  CHECK(std::string(teacher_name(TeacherKind::max_luminance)) == "maxlum");
  CHECK(std::string(teacher_name(TeacherKind::laplacian_pyramid)) == "lappyr");
}

TEST_CASE("average and max teachers", "[teacher]") {
  Rng rng(71);
  ImagePlane a = testutil::random_plane(rng, 21, 17);
  ImagePlane b = testutil::random_plane(rng, 21, 17);
  ImagePlane avg = teacher_fuse(TeacherKind::average, a, b, 4);
  ImagePlane mx = teacher_fuse(TeacherKind::max_luminance, a, b, 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(avg.data[i] == Catch::Approx((a.data[i] + b.data[i]) / 2.0));
    CHECK(mx.data[i] == std::max(a.data[i], b.data[i]));
  }
}

TEST_CASE("binomial blur preserves constants", "[teacher]") {
  ImagePlane p(13, 9, 77.0f);
  ImagePlane blurred = detail::binomial_blur(p);
  for (float v : blurred.data) CHECK(v == Catch::Approx(77.0f));
}

TEST_CASE("pyramid reduce and expand sizes", "[teacher]") {
  ImagePlane p(13, 9, 50.0f);
  ImagePlane r = detail::pyramid_reduce(p);
  CHECK(r.width == 7);
  CHECK(r.height == 5);
  ImagePlane e = detail::pyramid_expand(r, 13, 9);
  CHECK(e.width == 13);
  CHECK(e.height == 9);
  for (float v : e.data) CHECK(v == Catch::Approx(50.0f));
}

TEST_CASE("laplacian fusion of identical inputs reconstructs the input",
          "[teacher]") {
  Rng rng(81);
  ImagePlane x = testutil::random_plane(rng, 48, 40);
  ImagePlane fused = teacher_fuse(TeacherKind::laplacian_pyramid, x, x, 4);
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, double(std::abs(fused.data[i] - x.data[i])));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("laplacian fusion of constants", "[teacher]") {
  ImagePlane a(32, 32, 60.0f);
  ImagePlane b(32, 32, 180.0f);
  ImagePlane fused = teacher_fuse(TeacherKind::laplacian_pyramid, a, b, 3);
  // both inputs are flat so every band is zero; the base averages
  for (float v : fused.data) CHECK(v == Catch::Approx(120.0f).margin(1e-3));
}

TEST_CASE("laplacian fusion keeps sharp detail from either side",
          "[teacher]") {
  ImagePlane flat(40, 40, 100.0f);
  ImagePlane detailp(40, 40, 100.0f);
  // strong line in one input only
  for (int x = 0; x < 40; ++x) detailp.at(x, 20) = 250.0f;
  ImagePlane fused =
      teacher_fuse(TeacherKind::laplacian_pyramid, detailp, flat, 3);
  // the line must survive fusion well above the flat average
  float on_line = fused.at(20, 20);
  float off_line = fused.at(20, 5);
  CHECK(on_line - off_line > 75.0f);
  for (float v : fused.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 255.0f);
  }
}

TEST_CASE("level validation", "[teacher]") {
  ImagePlane p(16, 16, 10.0f);
  CHECK_NOTHROW(gaussian_pyramid(p, 4));  // 16 >> 4 == 1
  CHECK_THROWS_AS(gaussian_pyramid(p, 5), Error);
  CHECK_THROWS_AS(gaussian_pyramid(p, 0), Error);
  ImagePlane tiny(3, 3, 1.0f);
  CHECK_NOTHROW(teacher_fuse(TeacherKind::laplacian_pyramid, tiny, tiny, 1));
}

TEST_CASE("pyramid fusion dimension checks", "[teacher]") {
  ImagePlane a(16, 16, 1.0f);
  ImagePlane b(16, 12, 1.0f);
  CHECK_THROWS_AS(teacher_fuse(TeacherKind::average, a, b, 4), Error);
}
