#include <catch2/catch_amalgamated.hpp>

#include "mmlut/encode.hpp"
#include "testutil.hpp"

using namespace mmlut;

TEST_CASE("sobel magnitude oracles", "[encode]") {
  SECTION("constant image has zero gradient") {
    ImagePlane p(9, 9, 137.0f);
    ImagePlane g = gradient_encoding(p);
    for (float v : g.data) CHECK(v == 0.0f);
  }

  SECTION("hard vertical step saturates to 255") {
    ImagePlane p(10, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 10; ++x) p.at(x, y) = x < 5 ? 0.0f : 255.0f;
    }
    ImagePlane g = gradient_encoding(p);
    // raw response next to the edge is 4*255 = 1020, clamped
    CHECK(g.at(4, 3) == 255.0f);
    CHECK(g.at(5, 3) == 255.0f);
    CHECK(g.at(1, 3) == 0.0f);
  }

  SECTION("unit ramp gives exactly 8") {
    ImagePlane p(12, 8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 12; ++x) p.at(x, y) = float(x);
    }
    ImagePlane g = gradient_encoding(p);
    // interior: sx = 8 (kernel weight sum 4, span 2), sy = 0
    CHECK(g.at(5, 4) == 8.0f);
    // replicate padding halves the response at the left/right borders
    CHECK(g.at(0, 4) == 4.0f);
  }

  SECTION("diagonal response combines both axes") {
    ImagePlane p(12, 12);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) p.at(x, y) = float(x + y);
    }
    ImagePlane g = gradient_encoding(p);
    CHECK(g.at(5, 5) == Catch::Approx(std::sqrt(128.0)));
  }
}

TEST_CASE("box scene feature", "[encode]") {
  SECTION("constant pair passes through") {
    ImagePlane a(20, 20, 80.0f);
    ImagePlane b(20, 20, 120.0f);
    ImagePlane s = box_scene_feature(a, b);
    for (float v : s.data) CHECK(v == Catch::Approx(100.0f));
  }

  SECTION("impulse response is 255/121 inside the window") {
    ImagePlane a(25, 25, 0.0f);
    ImagePlane b(25, 25, 0.0f);
    a.at(12, 12) = 255.0f;
    b.at(12, 12) = 255.0f;
    ImagePlane s = box_scene_feature(a, b);
    CHECK(s.at(12, 12) == Catch::Approx(255.0 / 121.0).epsilon(1e-5));
    CHECK(s.at(7, 7) == Catch::Approx(255.0 / 121.0).epsilon(1e-5));
    CHECK(s.at(6, 12) == 0.0f);
    CHECK(s.at(12, 18) == 0.0f);
  }
}

TEST_CASE("zeroed encoder emits the sigmoid midpoint", "[encode]") {
  SceneEncoder enc = make_scene_encoder<float>();
  ImagePlane n_v(16, 16, 40.0f);
  ImagePlane n_i(16, 16, 200.0f);
  for (int ds : {1, 2, 4}) {
    ImagePlane s = scene_encode<float>(n_v, n_i, enc, ds, nullptr);
    REQUIRE(s.width == 16);
    REQUIRE(s.height == 16);
    for (float v : s.data) CHECK(v == Catch::Approx(127.5f));
  }
}

TEST_CASE("encoder initialization shape and bounds", "[encode]") {
  Rng rng(21);
  SceneEncoder enc = init_scene_encoder<float>(rng);
  CHECK(enc.parameter_count() == 7409);
  REQUIRE(enc.blocks.size() == 5);
  CHECK(enc.blocks[0].in_ch == 2);
  CHECK(enc.blocks[0].out_ch == 16);
  CHECK(enc.blocks[4].in_ch == 16);
  CHECK(enc.blocks[4].out_ch == 1);
  for (const auto& blk : enc.blocks) {
    float bound = std::sqrt(1.0f / (float(blk.in_ch) * 9.0f));
    bool any_nonzero = false;
    for (float w : blk.weights) {
      CHECK(std::abs(w) <= bound);
      any_nonzero = any_nonzero || w != 0.0f;
    }
    CHECK(any_nonzero);
  }
}

TEST_CASE("scene encode rejects bad downsample", "[encode]") {
  SceneEncoder enc = make_scene_encoder<float>();
  ImagePlane p(8, 8, 1.0f);
  CHECK_THROWS_AS(scene_encode<float>(p, p, enc, 3, nullptr), Error);
}

TEST_CASE("receptive field stays within 11x11", "[encode]") {
  Rng rng(31);
  SceneEncoder enc = init_scene_encoder<float>(rng);
  ImagePlane n_v = testutil::random_plane(rng, 24, 24);
  ImagePlane n_i = testutil::random_plane(rng, 24, 24);
  ImagePlane base = scene_encode<float>(n_v, n_i, enc, 1, nullptr);

  ImagePlane poked = n_v;
  poked.at(0, 0) = clamp255(poked.at(0, 0) + 100.0f);
  ImagePlane after = scene_encode<float>(poked, n_i, enc, 1, nullptr);

  bool changed_near = false;
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      bool inside = x <= 5 && y <= 5;  // radius 5 of (0,0)
      if (after.at(x, y) != base.at(x, y)) {
        REQUIRE(inside);
        changed_near = true;
      }
    }
  }
  CHECK(changed_near);
}

TEST_CASE("box downsample", "[encode]") {
  ImagePlane p(4, 4, 9.0f);
  ImagePlane d = box_downsample(p, 4);
  REQUIRE(d.width == 1);
  REQUIRE(d.height == 1);
  CHECK(d.at(0, 0) == 9.0f);

  // ragged 5x5 by 2: sizes ceil to 3x3, edge boxes shrink
  ImagePlane q(5, 5);
  for (size_t i = 0; i < q.size(); ++i) q.data[i] = float(i);
  ImagePlane dq = box_downsample(q, 2);
  REQUIRE(dq.width == 3);
  REQUIRE(dq.height == 3);
  CHECK(dq.at(0, 0) == Catch::Approx((0 + 1 + 5 + 6) / 4.0));
  CHECK(dq.at(2, 0) == Catch::Approx((4 + 9) / 2.0));
  CHECK(dq.at(2, 2) == Catch::Approx(24.0));

  ImagePlane same = box_downsample(q, 1);
  CHECK(same.data == q.data);
}

TEST_CASE("bilinear upsample basics and adjoint", "[encode]") {
  Rng rng(41);

  SECTION("same size is a copy") {
    ImagePlane p = testutil::random_plane(rng, 6, 5);
    ImagePlane u = bilinear_upsample(p, 6, 5);
    CHECK(u.data == p.data);
  }

  SECTION("constant stays constant") {
    ImagePlane p(3, 3, 42.0f);
    ImagePlane u = bilinear_upsample(p, 12, 12);
    for (float v : u.data) CHECK(v == Catch::Approx(42.0f));
  }

  SECTION("adjoint identity <Ax,y> == <x,A'y>") {
    PlaneT<double> x(5, 4);
    PlaneT<double> y(20, 16);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : y.data) v = rng.uniform(-1.0, 1.0);
    PlaneT<double> ax = bilinear_upsample(x, 20, 16);
    PlaneT<double> aty = bilinear_upsample_adjoint(y, 5, 4);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < ax.size(); ++i) lhs += ax.data[i] * y.data[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("encoder weight gradients match finite differences", "[encode]") {
  Rng rng(51);
  SceneEncoderT<double> enc = init_scene_encoder<double>(rng);
  PlaneT<double> n_v(18, 14);
  PlaneT<double> n_i(18, 14);
  for (double& v : n_v.data) v = rng.uniform(0.0, 255.0);
  for (double& v : n_i.data) v = rng.uniform(0.0, 255.0);
  PlaneT<double> upstream(18, 14);
  for (double& v : upstream.data) v = rng.uniform(-1.0, 1.0);

  auto objective = [&](const SceneEncoderT<double>& e) {
    PlaneT<double> s = scene_encode<double>(n_v, n_i, e, 2, nullptr);
    double total = 0.0;
    for (size_t i = 0; i < s.size(); ++i) total += s.data[i] * upstream.data[i];
    return total;
  };

  EncoderTapeT<double> tape;
  scene_encode<double>(n_v, n_i, enc, 2, &tape);
  SceneEncoderGradT<double> grads = SceneEncoderGradT<double>::zeros_like(enc);
  scene_encode_backward(enc, tape, upstream, grads);

  const double h = 1e-4;
  for (int b = 0; b < kSceneBlocks; ++b) {
    auto& blk = enc.blocks[static_cast<size_t>(b)];
    // sample a handful of weights and one bias per block
    for (int probe = 0; probe < 4; ++probe) {
      size_t wi = rng.uniform_u32(static_cast<uint32_t>(blk.weights.size()));
      double keep = blk.weights[wi];
      blk.weights[wi] = keep + h;
      double up = objective(enc);
      blk.weights[wi] = keep - h;
      double down = objective(enc);
      blk.weights[wi] = keep;
      double fd = (up - down) / (2.0 * h);
      double an = grads.weights[static_cast<size_t>(b)][wi];
      INFO("block " << b << " weight " << wi);
      REQUIRE(testutil::rel_err(an, fd) < 1e-4);
    }
    size_t bi = rng.uniform_u32(static_cast<uint32_t>(blk.bias.size()));
    double keep = blk.bias[bi];
    blk.bias[bi] = keep + h;
    double up = objective(enc);
    blk.bias[bi] = keep - h;
    double down = objective(enc);
    blk.bias[bi] = keep;
    double fd = (up - down) / (2.0 * h);
    double an = grads.bias[static_cast<size_t>(b)][bi];
    INFO("block " << b << " bias " << bi);
    REQUIRE(testutil::rel_err(an, fd) < 1e-4);
  }
}

TEST_CASE("scene encode parallelism is bitwise stable", "[encode]") {
  Rng rng(61);
  SceneEncoder enc = init_scene_encoder<float>(rng);
  ImagePlane n_v = testutil::random_plane(rng, 33, 29);
  ImagePlane n_i = testutil::random_plane(rng, 33, 29);
  ImagePlane a = scene_encode<float>(n_v, n_i, enc, 2, nullptr, 1);
  ImagePlane b = scene_encode<float>(n_v, n_i, enc, 2, nullptr, 4);
  REQUIRE(a.data == b.data);
}
