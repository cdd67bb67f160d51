#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "projsynth/error.hpp"
#include "projsynth/metrics.hpp"

using namespace projsynth;
using testsupport::random_image;

namespace {

ProjectionImage constant(std::size_t n, float v) {
  ProjectionImage img(n, n);
  img.data.assign(n * n, v);
  return img;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("scale to unit range") {
    ProjectionImage p(3, 1);
    p.data = {0, 5, 10};
    const auto s = scale_to_unit_range(p);
    CHECK(s.data == std::vector<float>{-1, 0, 1});
    for (float v : scale_to_unit_range(constant(4, 3.5f)).data) CHECK(v == 0.0f);
    const auto r = random_image(20, 20, 1, -3, 7);
    const auto once = scale_to_unit_range(r);
    CHECK(scale_to_unit_range(once).data == once.data);
  }

  TEST_CASE("mse") {
    const auto l = random_image(9, 9, 2);
    CHECK(mse(l, l) == 0.0);
    ProjectionImage g = l;
    for (auto& v : g.data) v += 0.5f;
    CHECK(mse(l, g) == doctest::Approx(0.25).epsilon(1e-6));
    const auto h = random_image(9, 9, 3);
    CHECK(mse(l, h) == mse(h, l));
    CHECK(mse(l, h) > 0.0);
    CHECK_THROWS_AS(mse(l, random_image(9, 8, 4)), DimensionError);
  }

  TEST_CASE("ssim identity, symmetry and bounds") {
    for (std::size_t n : {11, 16, 32}) {
      const auto x = random_image(n, n, n);
      const auto y = random_image(n, n, n + 100);
      CHECK(ssim(x, x) == 1.0);
      CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
      CHECK(std::abs(ssim(x, y)) <= 1.0);
    }
  }

  TEST_CASE("ssim of constant images") {
    const double a = 0.3, b = -0.6;
    const SsimConfig cfg;
    const double expect = (2 * a * b + cfg.c1()) / (a * a + b * b + cfg.c1());
    CHECK(ssim(constant(16, float(a)), constant(16, float(b))) == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("ssim matches the per-patch oracle on 8x8 to 32x32 images") {
    SsimConfig small;
    small.window_size = 7;
    small.sigma = 1.0;
    for (std::size_t n = 8; n <= 32; n += 4) {
      const auto x = random_image(n, n, 10 + n), y = random_image(n, n, 20 + n);
      CHECK(std::abs(ssim(x, y, small) - testsupport::ssim_reference(x, y, small)) < 1e-6);
      if (n >= 11) CHECK(std::abs(ssim(x, y) - testsupport::ssim_reference(x, y)) < 1e-6);
    }
    SsimConfig uni;
    uni.window = SsimConfig::Window::uniform;
    uni.window_size = 8;
    const auto x = random_image(20, 24, 5), y = random_image(20, 24, 6);
    CHECK(std::abs(ssim(x, y, uni) - testsupport::ssim_reference(x, y, uni)) < 1e-6);
  }

  TEST_CASE("ssim window weights sum to one and constants") {
    const SsimConfig cfg;
    double s = 0;
    for (double w : cfg.weights()) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cfg.c1() == doctest::Approx(0.0004));
    CHECK(cfg.c2() == doctest::Approx(0.0036));
    CHECK_THROWS_AS(ssim(random_image(10, 10, 1), random_image(10, 10, 2)), DimensionError);
  }

  TEST_CASE("psnr") {
    // max(G) = 1 and MSE = 0.01.
    ProjectionImage l(10, 10), g(10, 10);
    for (std::size_t i = 0; i < 100; ++i) {
      g.data[i] = i == 0 ? 1.0f : 0.5f;
      l.data[i] = g.data[i] + (i % 2 ? 0.1f : -0.1f);
    }
    const double e = mse(l, g);
    CHECK(psnr(l, g, PsnrVariant::paper) == doctest::Approx(20 * std::log10(1.0 / e)).epsilon(1e-12));
    CHECK(e == doctest::Approx(0.01).epsilon(1e-5));
    CHECK(psnr(l, g, PsnrVariant::paper) == doctest::Approx(40.0).epsilon(1e-4));
    CHECK_THROWS_AS(psnr(l, l, PsnrVariant::paper), UndefinedValueError);
    CHECK_THROWS_AS(psnr(l, constant(10, -0.5f), PsnrVariant::standard), UndefinedValueError);
  }

  TEST_CASE("psnr variants differ by ten log10 mse") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto l = random_image(16, 16, s), g = random_image(16, 16, s + 1000, 0.0, 1.0);
      const double d = psnr(l, g, PsnrVariant::standard) - psnr(l, g, PsnrVariant::paper);
      CHECK(std::abs(d - 10 * std::log10(mse(l, g))) < 1e-9);
    }
  }

  TEST_CASE("evaluate_set") {
    const auto l = random_image(16, 16, 1);
    const auto id = evaluate_set({{"same", l, l}});
    REQUIRE(id.pairs.size() == 1);
    CHECK(id.pairs[0].mse == 0.0);
    CHECK(id.pairs[0].ssim == 1.0);
    CHECK(!id.pairs[0].psnr_paper.has_value());
    CHECK(to_json(id)["pairs"][0]["psnr_undefined"] == true);
    CHECK_THROWS_AS(evaluate_set({}), ParameterError);

    // Label [-1, 1, ...]; generated images already in range shift by fixed offsets.
    ProjectionImage base(4, 4);
    for (std::size_t i = 0; i < 16; ++i) base.data[i] = i == 0 ? -1.0f : (i == 1 ? 1.0f : 0.0f);
    auto offset_pair = [&](float delta) {
      ProjectionImage g = base;
      for (std::size_t i = 2; i < 16; ++i) g.data[i] += delta;
      return g;
    };
    SsimConfig small;
    small.window_size = 3;
    const auto r = evaluate_set({{"a", base, offset_pair(std::sqrt(0.1f * 16 / 14))},
                                 {"b", base, offset_pair(std::sqrt(0.3f * 16 / 14))}},
                                small);
    CHECK(r.pairs[0].mse == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(r.pairs[1].mse == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(r.mse.mean == doctest::Approx(0.2).epsilon(1e-5));
    CHECK(r.mse.std == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(r.mse.count == 2);
  }

  TEST_CASE("report JSON and CSV") {
    const auto a = random_image(16, 16, 1), b = random_image(16, 16, 2);
    const auto r = evaluate_set({{"p0", a, b}, {"p1", a, a}});
    const auto back = metrics_report_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
    const auto csv = to_csv(r);
    CHECK(csv.rfind("id,mse,ssim,psnr_paper,psnr_standard\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("p1,0,1,nan,nan") != std::string::npos);
  }
}
