#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mosaic/score_machines.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace mosaic;

namespace {

NoiseSchedule mid_schedule(double abar) { return custom_schedule({1.0, abar, 1e-4}); }

void check_grid(const ScoreGrid& got, const Grid<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    REQUIRE(got.data()[i] == Catch::Approx(want.data()[i]).epsilon(tol).margin(tol));
}

void check_weights(const std::vector<double>& got, const std::vector<double>& want) {
  REQUIRE(got.size() == want.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    REQUIRE(got[i] == Catch::Approx(want[i]).epsilon(1e-12).margin(1e-12));
    sum += got[i];
  }
  REQUIRE(std::abs(sum - 1.0) < 1e-12);
}

}  // namespace

// ---------------------------------------------------------------------- IS

TEST_CASE("IS at alpha_bar = 0 is the standard normal score") {
  NoiseSchedule s = custom_schedule({1.0, 0.0});
  auto data = fixtures::random_images(4, 3, 3, 1, 500);
  ImageGrid phi = fixtures::random_image(3, 3, 1, 501);

  PosteriorWeights w = ideal_weights(phi, 1, data, s);
  for (double v : w.weights) REQUIRE(v == 0.25);

  ScoreGrid score = ideal_score(phi, 1, data, s);
  for (std::size_t i = 0; i < phi.size(); ++i)
    REQUIRE(score.data()[i] == Catch::Approx(-static_cast<double>(phi.data()[i])).margin(1e-14));
}

TEST_CASE("IS with a singleton has unit weight") {
  NoiseSchedule s = mid_schedule(0.6);
  auto data = fixtures::random_images(1, 3, 3, 1, 510);
  ImageGrid phi = fixtures::random_image(3, 3, 1, 511);

  PosteriorWeights w = ideal_weights(phi, 1, data, s);
  REQUIRE(w.weights[0] == 1.0);

  double sa = std::sqrt(0.6);
  ScoreGrid score = ideal_score(phi, 1, data, s);
  for (std::size_t i = 0; i < phi.size(); ++i)
    REQUIRE(score.data()[i] ==
            Catch::Approx((sa * data[0].data()[i] - phi.data()[i]) / 0.4).epsilon(1e-13));
}

TEST_CASE("IS matches the brute-force mixture oracle on scalar images") {
  // Two scalar "images" {-1, +1}, abar = 0.5, phi = 0.3.
  NoiseSchedule s = mid_schedule(0.5);
  std::vector<ImageGrid> data = {ImageGrid(1, 1, 1, -1.0f), ImageGrid(1, 1, 1, 1.0f)};
  ImageGrid phi(1, 1, 1, 0.3f);

  check_weights(ideal_weights(phi, 1, data, s).weights, oracle::is_weights(phi, data, 0.5));
  check_grid(ideal_score(phi, 1, data, s), oracle::is_score(phi, data, 0.5), 1e-12);
}

TEST_CASE("IS matches the oracle on random sets") {
  auto data = fixtures::random_images(6, 4, 4, 3, 520);
  ImageGrid phi = fixtures::random_image(4, 4, 3, 521);
  for (double abar : {0.01, 0.5, 0.99, 0.9999}) {
    NoiseSchedule s = mid_schedule(abar);
    check_weights(ideal_weights(phi, 1, data, s).weights, oracle::is_weights(phi, data, abar));
    check_grid(ideal_score(phi, 1, data, s), oracle::is_score(phi, data, abar), 1e-10);
  }
}

TEST_CASE("IS rejects alpha_bar = 1 and empty data") {
  NoiseSchedule s = cosine_schedule(10);
  auto data = fixtures::random_images(2, 3, 3, 1, 530);
  ImageGrid phi = fixtures::random_image(3, 3, 1, 531);
  REQUIRE_THROWS_AS(ideal_score(phi, 0, data, s), Error);
  REQUIRE_THROWS_AS(ideal_score(phi, 1, {}, s), Error);
}

// ---------------------------------------------------------------------- ES

TEST_CASE("ES equals IS on 1x1 images") {
  NoiseSchedule s = mid_schedule(0.4);
  std::vector<ImageGrid> data = {ImageGrid(1, 1, 1, -0.7f), ImageGrid(1, 1, 1, 0.2f)};
  ImageGrid phi(1, 1, 1, 0.5f);
  check_grid(equivariant_score(phi, 1, data, s), oracle::is_score(phi, data, 0.4), 1e-12);
}

TEST_CASE("ES equals IS on constant images (orbit collapse)") {
  NoiseSchedule s = mid_schedule(0.7);
  std::vector<ImageGrid> data = {fixtures::constant_image(3, 4, 1, 0.25f)};
  ImageGrid phi = fixtures::random_image(3, 4, 1, 540);
  check_grid(equivariant_score(phi, 1, data, s), oracle::is_score(phi, data, 0.7), 1e-10);
}

TEST_CASE("ES on a 1x2 image equals IS over the explicit orbit") {
  NoiseSchedule s = mid_schedule(0.5);
  ImageGrid ab = ImageGrid::from_data(1, 2, 1, {0.8f, -0.3f});
  ImageGrid ba = ImageGrid::from_data(1, 2, 1, {-0.3f, 0.8f});
  ImageGrid phi = fixtures::random_image(1, 2, 1, 541);

  check_grid(equivariant_score(phi, 1, {ab}, s), oracle::is_score(phi, {ab, ba}, 0.5), 1e-12);
}

TEST_CASE("ES matches the orbit-enumeration oracle on random sets") {
  auto data = fixtures::random_images(2, 3, 4, 1, 550);
  ImageGrid phi = fixtures::random_image(3, 4, 1, 551);
  for (double abar : {0.05, 0.6, 0.995}) {
    NoiseSchedule s = mid_schedule(abar);
    check_grid(equivariant_score(phi, 1, data, s), oracle::es_score(phi, data, abar), 1e-10);
    auto got = equivariant_weights(phi, 1, data, s);
    check_weights(got.weights, oracle::is_weights(phi, oracle::orbit(data), abar));
  }
}

// ---------------------------------------------------------------------- LS

TEST_CASE("LS with a single image reduces to the singleton pull") {
  NoiseSchedule s = mid_schedule(0.5);
  auto data = fixtures::random_images(1, 4, 4, 1, 560);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 561);

  double sa = std::sqrt(0.5);
  ScoreGrid score = local_score(phi, 1, dict, s);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      REQUIRE(score.at(r, c, 0) ==
              Catch::Approx((sa * data[0].at(r, c, 0) - phi.at(r, c, 0)) / 0.5).epsilon(1e-12));
}

TEST_CASE("LS equals IS when the window sees the whole image and border") {
  // P >= 2*max(H,W)+1 under zero padding makes the locality constraint vacuous.
  NoiseSchedule s = mid_schedule(0.55);
  auto data = fixtures::random_images(3, 4, 4, 1, 570);
  PatchDictionary dict = build_dictionary(data, 9, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 571);

  check_grid(local_score(phi, 1, dict, s), oracle::is_score(phi, data, 0.55), 1e-10);
}

TEST_CASE("LS matches the per-pixel oracle (binary images)") {
  NoiseSchedule s = mid_schedule(0.45);
  std::mt19937 eng(580);
  std::vector<ImageGrid> data;
  for (int i = 0; i < 2; ++i) {
    ImageGrid img(4, 4, 1);
    for (auto& v : img.data()) v = (eng() & 1u) ? 1.0f : -1.0f;
    data.push_back(img);
  }
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 581);

  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      check_weights(local_weights(phi, 1, dict, s, r, c).weights,
                    oracle::ls_weights(phi, data, 3, PaddingMode::Circular, 0.45, r, c));
  check_grid(local_score(phi, 1, dict, s), oracle::ls_score(phi, data, 3, PaddingMode::Circular, 0.45),
             1e-10);
}

TEST_CASE("LS under zero padding matches the oracle") {
  NoiseSchedule s = mid_schedule(0.3);
  auto data = fixtures::random_images(3, 5, 5, 1, 590);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(5, 5, 1, 591);
  check_grid(local_score(phi, 1, dict, s), oracle::ls_score(phi, data, 3, PaddingMode::Zero, 0.3),
             1e-10);
}

TEST_CASE("LS rejects dictionaries with skipped locations") {
  NoiseSchedule s = mid_schedule(0.5);
  auto data = fixtures::random_images(2, 6, 6, 1, 595);
  DictionaryBuildOptions opts;
  opts.location_stride = 2;
  PatchDictionary strided = build_dictionary(data, 3, PaddingMode::Circular, opts);
  ImageGrid phi = fixtures::random_image(6, 6, 1, 596);
  REQUIRE_THROWS_AS(local_score(phi, 1, strided, s), Error);
}

// --------------------------------------------------------------------- ELS

TEST_CASE("ELS on the black/white set keeps black black") {
  NoiseSchedule s = mid_schedule(0.9);
  auto data = fixtures::black_white_set(6, 6);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::constant_image(6, 6, 1, -1.0f);

  const double sa = std::sqrt(0.9);
  ScoreGrid score = els_score(phi, 1, dict, s);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      // Posterior mass concentrates on black patches; the pull is toward
      // the shrunken black center pixel.
      PosteriorWeights w = els_weights(phi, 1, dict, s, r, c);
      REQUIRE(dict.center(w.candidates[w.argmax])[0] == -1.0f);
      double black_mass = 0.0;
      for (std::size_t k = 0; k < w.candidates.size(); ++k)
        if (dict.center(w.candidates[k])[0] == -1.0f) black_mass += w.weights[k];
      REQUIRE(black_mass > 1.0 - 1e-12);
      REQUIRE(score.at(r, c, 0) == Catch::Approx((sa * -1.0 + 1.0) / 0.1).epsilon(1e-9));
    }
}

TEST_CASE("ELS on constant training images equals the scalar mixture") {
  NoiseSchedule s = mid_schedule(0.5);
  std::vector<ImageGrid> data = {fixtures::constant_image(4, 4, 1, -0.6f),
                                 fixtures::constant_image(4, 4, 1, 0.4f)};
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 600);

  // All patches of a constant image are identical, so per pixel the sum
  // collapses to a two-component mixture over the constants.
  ScoreGrid score = els_score(phi, 1, dict, s);
  check_grid(score, oracle::els_score(phi, data, 3, 0.5), 1e-10);
}

TEST_CASE("ELS matches the full-patch-set oracle on random sets") {
  auto data = fixtures::random_images(2, 4, 4, 1, 610);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 611);

  for (double abar : {0.02, 0.5, 0.97}) {
    NoiseSchedule s = mid_schedule(abar);
    REQUIRE(els_weights(phi, 1, dict, s, 1, 2).candidates.size() == 32u);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        check_weights(els_weights(phi, 1, dict, s, r, c).weights,
                      oracle::els_weights(phi, data, 3, abar, r, c));
    check_grid(els_score(phi, 1, dict, s), oracle::els_score(phi, data, 3, abar), 1e-10);
  }
}

TEST_CASE("ELS with three channels matches the oracle") {
  auto data = fixtures::random_images(2, 4, 4, 3, 620);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  ImageGrid phi = fixtures::random_image(4, 4, 3, 621);
  NoiseSchedule s = mid_schedule(0.35);
  check_grid(els_score(phi, 1, dict, s), oracle::els_score(phi, data, 3, 0.35), 1e-10);
}

TEST_CASE("ELS rejects mismatched dictionaries") {
  auto data = fixtures::random_images(1, 4, 4, 1, 630);
  PatchDictionary zero = build_dictionary(data, 3, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 631);
  NoiseSchedule s = mid_schedule(0.5);
  REQUIRE_THROWS_AS(els_score(phi, 1, zero, s), Error);

  PatchDictionary rgb = build_dictionary(fixtures::random_images(1, 4, 4, 3, 632), 3,
                                         PaddingMode::Circular);
  REQUIRE_THROWS_AS(els_score(phi, 1, rgb, s), Error);
}

// -------------------------------------------------------------------- BELS

TEST_CASE("BELS candidate sets follow the border classes") {
  auto data = fixtures::random_images(2, 32, 32, 1, 640);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(32, 32, 1, 641);
  NoiseSchedule s = mid_schedule(0.5);

  REQUIRE(bels_weights(phi, 1, dict, s, 16, 16).candidates.size() == 1800u);
  REQUIRE(bels_weights(phi, 1, dict, s, 0, 0).candidates.size() == 2u);
  REQUIRE(bels_weights(phi, 1, dict, s, 0, 16).candidates.size() == 60u);
}

TEST_CASE("BELS corner with one image is a pure singleton pull") {
  auto data = fixtures::random_images(1, 8, 8, 1, 650);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 651);
  NoiseSchedule s = mid_schedule(0.45);

  PosteriorWeights w = bels_weights(phi, 1, dict, s, 0, 0);
  REQUIRE(w.weights.size() == 1u);
  REQUIRE(w.weights[0] == 1.0);

  double sa = std::sqrt(0.45);
  ScoreGrid score = bels_score(phi, 1, dict, s);
  REQUIRE(score.at(0, 0, 0) ==
          Catch::Approx((sa * data[0].at(0, 0, 0) - phi.at(0, 0, 0)) / 0.55).epsilon(1e-12));
}

TEST_CASE("BELS matches the signature-restricted oracle") {
  auto data = fixtures::random_images(2, 8, 8, 1, 660);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 661);

  for (double abar : {0.1, 0.5, 0.95}) {
    NoiseSchedule s = mid_schedule(abar);
    // Edge pixel: candidates are the 6 same-edge-distance patches per image.
    PosteriorWeights w = bels_weights(phi, 1, dict, s, 0, 3);
    REQUIRE(w.candidates.size() == 12u);
    check_weights(w.weights, oracle::bels_weights(phi, data, 3, abar, 0, 3));
    check_grid(bels_score(phi, 1, dict, s), oracle::bels_score(phi, data, 3, abar), 1e-10);
  }
}

TEST_CASE("BELS at P=5 handles double-sided border signatures") {
  // A 5x5 window one pixel from a corner overlaps two borders at different
  // depths; the candidate class is the exact-signature match.
  auto data = fixtures::random_images(2, 8, 8, 1, 665);
  PatchDictionary dict = build_dictionary(data, 5, PaddingMode::Zero);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 666);
  NoiseSchedule s = mid_schedule(0.5);

  PosteriorWeights corner = bels_weights(phi, 1, dict, s, 0, 1);
  REQUIRE(corner.candidates.size() == 2u);  // signature (2,0,1,0): one spot per image
  for (auto i : corner.candidates) {
    REQUIRE(dict.center_row(i) == 0);
    REQUIRE(dict.center_col(i) == 1);
  }
  check_weights(corner.weights, oracle::bels_weights(phi, data, 5, 0.5, 0, 1));
  check_grid(bels_score(phi, 1, dict, s), oracle::bels_score(phi, data, 5, 0.5), 1e-10);
}

// --------------------------------------------------------------- properties

TEST_CASE("ES and circular ELS are exactly equivariant") {
  std::mt19937 eng(670);
  auto data = fixtures::random_images(3, 8, 8, 1, 671);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(20);

  for (int trial = 0; trial < 8; ++trial) {
    ImageGrid phi = fixtures::random_image(8, 8, 1, 672 + static_cast<std::uint32_t>(trial));
    int dr = static_cast<int>(eng() % 8), dc = static_cast<int>(eng() % 8);
    int t = 1 + static_cast<int>(eng() % 20);

    ScoreGrid a = els_score(translate(phi, dr, dc), t, dict, s);
    ScoreGrid b = translate(els_score(phi, t, dict, s), dr, dc);
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(std::abs(a.data()[i] - b.data()[i]) <= 1e-10);

    ScoreGrid c = equivariant_score(translate(phi, dr, dc), t, data, s);
    ScoreGrid d = translate(equivariant_score(phi, t, data, s), dr, dc);
    for (std::size_t i = 0; i < c.size(); ++i)
      REQUIRE(std::abs(c.data()[i] - d.data()[i]) <= 1e-10);
  }
}

TEST_CASE("locality is bitwise exact") {
  auto data = fixtures::random_images(2, 8, 8, 1, 680);
  PatchDictionary circ = build_dictionary(data, 3, PaddingMode::Circular);
  PatchDictionary zero = build_dictionary(data, 3, PaddingMode::Zero);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 681);
  std::mt19937 eng(682);

  const int x_r = 4, x_c = 4;  // probe pixel; its 3x3 window is rows/cols 3..5
  ScoreGrid ls0 = local_score(phi, 5, zero, s);
  ScoreGrid els0 = els_score(phi, 5, circ, s);
  ScoreGrid bels0 = bels_score(phi, 5, zero, s);

  for (int trial = 0; trial < 40; ++trial) {
    int r, c;
    do {
      r = static_cast<int>(eng() % 8);
      c = static_cast<int>(eng() % 8);
    } while (std::abs(r - x_r) <= 1 && std::abs(c - x_c) <= 1);
    ImageGrid perturbed = phi;
    perturbed.at(r, c, 0) += 0.37f;

    REQUIRE(local_score(perturbed, 5, zero, s).at(x_r, x_c, 0) == ls0.at(x_r, x_c, 0));
    REQUIRE(els_score(perturbed, 5, circ, s).at(x_r, x_c, 0) == els0.at(x_r, x_c, 0));
    REQUIRE(bels_score(perturbed, 5, zero, s).at(x_r, x_c, 0) == bels0.at(x_r, x_c, 0));
  }
}

TEST_CASE("score and posterior-averaged noise satisfy the Tweedie identity") {
  auto data = fixtures::random_images(2, 5, 5, 1, 690);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(5, 5, 1, 691);
  const int t = 4;
  const double abar = s.alpha_bar(t);
  const double sa = std::sqrt(abar);
  const double sn = std::sqrt(1.0 - abar);

  ScoreGrid score = els_score(phi, t, dict, s);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      PosteriorWeights w = els_weights(phi, t, dict, s, r, c);
      double eta = 0.0;
      for (std::size_t k = 0; k < w.candidates.size(); ++k)
        eta += w.weights[k] *
               (static_cast<double>(phi.at(r, c, 0)) - sa * dict.center(w.candidates[k])[0]) / sn;
      REQUIRE(-sn * score.at(r, c, 0) == Catch::Approx(eta).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("posterior weight concentrates as t approaches 0") {
  NoiseSchedule s = cosine_schedule(50);
  auto data = fixtures::random_images(3, 6, 6, 1, 700);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  for (int trial = 0; trial < 5; ++trial) {
    ImageGrid phi = fixtures::random_image(6, 6, 1, 701 + static_cast<std::uint32_t>(trial));
    REQUIRE(ideal_weights(phi, 1, data, s).max_weight > 1.0 - 1e-6);
    REQUIRE(els_weights(phi, 1, dict, s, 2, 3).max_weight > 1.0 - 1e-6);
  }
}

TEST_CASE("LS equals ELS under the location-restricted view") {
  auto data = fixtures::random_images(3, 4, 4, 1, 710);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 711);
  const int t = 5;

  ScoreGrid ls = local_score(phi, t, dict, s);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      auto view = location_restricted_view(dict, r, c);
      ScoreGrid restricted = els_score_with_candidates(phi, t, dict, s, view);
      REQUIRE(std::abs(restricted.at(r, c, 0) - ls.at(r, c, 0)) <= 1e-10);
    }
}

TEST_CASE("BELS equals ELS on interior pixels") {
  auto data = fixtures::random_images(2, 8, 8, 1, 720);
  PatchDictionary zero = build_dictionary(data, 3, PaddingMode::Zero);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 721);
  const int t = 6;

  // ELS over exactly the zero dictionary's interior class.
  auto interior = eligible_patches(zero, BorderSignature{});
  ScoreGrid els_interior = els_score_with_candidates(phi, t, zero, s, interior);
  ScoreGrid bels = bels_score(phi, t, zero, s);
  for (int r = 1; r <= 6; ++r)
    for (int c = 1; c <= 6; ++c)
      REQUIRE(std::abs(els_interior.at(r, c, 0) - bels.at(r, c, 0)) <= 1e-10);
}

TEST_CASE("dedup grouping is observably equivalent") {
  // Heavy duplication: constant regions produce many identical patches.
  std::vector<ImageGrid> data = {fixtures::constant_image(6, 6, 1, -1.0f),
                                 fixtures::synthetic_digit(6, 6, 730)};
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(6, 6, 1, 731);

  MachineOptions with, without;
  with.dedup = true;
  without.dedup = false;
  for (int t : {1, 5, 10}) {
    ScoreGrid a = els_score(phi, t, dict, s, with);
    ScoreGrid b = els_score(phi, t, dict, s, without);
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(a.data()[i] == Catch::Approx(b.data()[i]).epsilon(1e-12).margin(1e-12));
  }
}

TEST_CASE("top_k = M is exact and top_k = 1 pulls to the nearest patch") {
  auto data = fixtures::random_images(2, 4, 4, 1, 740);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 741);
  const int t = 5;
  const double abar = s.alpha_bar(t);
  const double sa = std::sqrt(abar);

  MachineOptions exact;
  MachineOptions full_k;
  full_k.top_k = static_cast<int>(dict.size());
  ScoreGrid a = els_score(phi, t, dict, s, exact);
  ScoreGrid b = els_score(phi, t, dict, s, full_k);
  for (std::size_t i = 0; i < a.size(); ++i)
    REQUIRE(a.data()[i] == Catch::Approx(b.data()[i]).epsilon(1e-12).margin(1e-12));

  MachineOptions one;
  one.top_k = 1;
  ScoreGrid c = els_score(phi, t, dict, s, one);
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 4; ++col) {
      PosteriorWeights w = els_weights(phi, t, dict, s, r, col);
      double want = (sa * dict.center(w.candidates[w.argmax])[0] - phi.at(r, col, 0)) / (1.0 - abar);
      REQUIRE(c.at(r, col, 0) == Catch::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("label filtering restricts candidates") {
  auto data = fixtures::random_images(4, 4, 4, 1, 750, /*labeled=*/true);  // labels 0,1,2,0
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(4, 4, 1, 751);
  const int t = 5;
  const double abar = s.alpha_bar(t);

  MachineOptions opts;
  opts.label = 0;
  ScoreGrid got = els_score(phi, t, dict, s, opts);
  std::vector<ImageGrid> filtered = {data[0], data[3]};
  check_grid(got, oracle::els_score(phi, filtered, 3, abar), 1e-10);

  PosteriorWeights w = els_weights(phi, t, dict, s, 1, 1, 0);
  REQUIRE(w.candidates.size() == 32u);

  opts.label = 9;
  REQUIRE_THROWS_AS(els_score(phi, t, dict, s, opts), Error);
}

TEST_CASE("IS and ES honor the label filter over whole images") {
  auto data = fixtures::random_images(4, 3, 3, 1, 755, /*labeled=*/true);  // labels 0,1,2,0
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(3, 3, 1, 756);
  const double abar = s.alpha_bar(5);

  PosteriorWeights w = ideal_weights(phi, 5, data, s, 0);
  REQUIRE(w.candidates == std::vector<std::uint32_t>{0, 3});

  MachineOptions opts;
  opts.label = 0;
  std::vector<ImageGrid> filtered = {data[0], data[3]};
  check_grid(ideal_score(phi, 5, data, s, opts), oracle::is_score(phi, filtered, abar), 1e-10);
  check_grid(equivariant_score(phi, 5, data, s, opts), oracle::es_score(phi, filtered, abar), 1e-10);

  opts.label = 7;
  REQUIRE_THROWS_AS(ideal_score(phi, 5, data, s, opts), Error);
}

TEST_CASE("machine output is identical across thread counts") {
  auto data = fixtures::random_images(2, 8, 8, 1, 760);
  PatchDictionary dict = build_dictionary(data, 3, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(8, 8, 1, 761);

  MachineOptions t1, t4;
  t1.threads = 1;
  t4.threads = 4;
  ScoreGrid a = els_score(phi, 5, dict, s, t1);
  ScoreGrid b = els_score(phi, 5, dict, s, t4);
  REQUIRE(a.data() == b.data());
}

TEST_CASE("ScoreMachine dispatch matches the free functions") {
  auto data = fixtures::random_images(2, 6, 6, 1, 770);
  PatchDictionary d3 = build_dictionary(data, 3, PaddingMode::Circular);
  PatchDictionary d5 = build_dictionary(data, 5, PaddingMode::Circular);
  NoiseSchedule s = cosine_schedule(10);
  ImageGrid phi = fixtures::random_image(6, 6, 1, 771);

  ScoreMachine machine = ScoreMachine::els({{3, d3}, {5, d5}}, {});
  ScoreGrid a = machine.score(phi, 4, s, 5);
  ScoreGrid b = els_score(phi, 4, d5, s, {});
  REQUIRE(a.data() == b.data());
  REQUIRE_THROWS_AS(machine.score(phi, 4, s, 7), Error);

  ScoreMachine is_machine = ScoreMachine::ideal(data, {});
  ScoreGrid c = is_machine.noise_prediction(phi, 4, s);
  ScoreGrid d = score_to_noise(ideal_score(phi, 4, data, s), 4, s);
  REQUIRE(c.data() == d.data());

  REQUIRE_THROWS_AS(ScoreMachine::els({{3, build_dictionary(data, 3, PaddingMode::Zero)}}, {}), Error);
  REQUIRE_THROWS_AS(ScoreMachine::bels({{3, d3}}, {}), Error);
}
