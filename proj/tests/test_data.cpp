#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "last/data.hpp"
#include "last/numerics.hpp"
#include "last/rng.hpp"

using namespace last;
using Catch::Approx;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool pools_equal(const Pool& a, const Pool& b) {
  if (a.size() != b.size() || a.d != b.d || a.label_kind != b.label_kind ||
      a.classes != b.classes || a.seed != b.seed)
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].id != b[i].id || a[i].x != b[i].x || a[i].y != b[i].y) return false;
  return true;
}

}  // namespace

TEST_CASE("gen_linreg") {
  const Vec wstar{0.5, -1.0, 2.0, 0.25, 0.7};  // last entry is the bias

  SECTION("noiseless labels are exact") {
    const Pool p = gen_linreg(50, 4, wstar, 0.0, 1);
    for (const auto& e : p.examples) {
      double pred = wstar[4];
      for (int j = 0; j < 4; ++j) pred += wstar[j] * e.x[j];
      CHECK(e.y[0] == Approx(pred).margin(1e-15));
    }
  }

  SECTION("residual mean obeys the CLT bound at defaults") {
    const Pool p = gen_linreg(800, 4, wstar, 0.02, 7);
    double mean = 0.0;
    for (const auto& e : p.examples) {
      double pred = wstar[4];
      for (int j = 0; j < 4; ++j) pred += wstar[j] * e.x[j];
      mean += (e.y[0] - pred) / double(p.size());
    }
    CHECK(std::abs(mean) <= 4.0 * 0.02 / std::sqrt(800.0));
  }

  SECTION("fixed seed reproduces the pool") {
    CHECK(pools_equal(gen_linreg(100, 4, wstar, 0.02, 3),
                      gen_linreg(100, 4, wstar, 0.02, 3)));
  }

  CHECK_THROWS_AS(gen_linreg(0, 4, wstar, 0.02, 1), Error);
  CHECK_THROWS_AS(gen_linreg(10, 3, wstar, 0.02, 1), Error);
}

TEST_CASE("gen_gaussian_clusters") {
  SECTION("offset 0 is indistinguishable") {
    const Pool p = gen_gaussian_clusters(5000, 4, 0.0, 5);
    std::size_t correct = 0;
    for (const auto& e : p.examples) {
      double s = 0;
      for (double v : e.x) s += v;
      if ((s > 0 ? 1.0 : -1.0) == e.y[0]) ++correct;
    }
    CHECK(double(correct) / double(p.size()) == Approx(0.5).margin(0.05));
  }

  SECTION("large offset is separable") {
    const Pool p = gen_gaussian_clusters(5000, 4, 10.0, 6);
    std::size_t correct = 0;
    for (const auto& e : p.examples) {
      double s = 0;
      for (double v : e.x) s += v;
      if ((s > 0 ? 1.0 : -1.0) == e.y[0]) ++correct;
    }
    CHECK(double(correct) / double(p.size()) > 0.999);
  }

  SECTION("determinism") {
    CHECK(pools_equal(gen_gaussian_clusters(100, 4, 0.2, 9),
                      gen_gaussian_clusters(100, 4, 0.2, 9)));
  }
}

TEST_CASE("gen_half_moon") {
  SECTION("noiseless class +1 lies on the unit upper semicircle") {
    const Pool p = gen_half_moon(200, 0.0, 1);
    for (const auto& e : p.examples) {
      if (e.y[0] > 0) {
        CHECK(norm2(e.x) == Approx(1.0).margin(1e-12));
        CHECK(e.x[1] >= -1e-12);
      } else {
        // lower arc is the unit circle around (1, 0.5)
        const double r = std::hypot(e.x[0] - 1.0, e.x[1] - 0.5);
        CHECK(r == Approx(1.0).margin(1e-12));
      }
    }
  }
  SECTION("determinism") {
    CHECK(pools_equal(gen_half_moon(50, 0.2, 4), gen_half_moon(50, 0.2, 4)));
  }
}

TEST_CASE("idx ingestion and projection") {
  // synthesize a small idx pair: 40 8x8 images, labels 3 and 5
  const std::string img_path = tmp_path("last_test_images.idx");
  const std::string lab_path = tmp_path("last_test_labels.idx");
  SeededRng rng(12);
  IdxImages im;
  im.n = 40;
  im.rows = 8;
  im.cols = 8;
  im.pixels.resize(im.n * 64);
  for (auto& p : im.pixels) p = std::uint8_t(rng.uniform_index(256));
  std::vector<std::uint8_t> labels(im.n);
  for (std::size_t i = 0; i < im.n; ++i) labels[i] = i % 2 ? 3 : 5;
  write_idx_images(img_path, im);
  write_idx_labels(lab_path, labels);

  SECTION("identity projection returns scaled pixels") {
    const Pool p = load_mnist_projected(img_path, lab_path, {3, 5}, 0, 1, 40);
    CHECK(p.d == 64);
    CHECK(p.size() == 40);
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < 64; ++j)
        CHECK(p[i].x[j] == Approx(double(im.pixels[i * 64 + j]) / 255.0));
    }
    // binary convention: smaller digit (3) is class +1
    CHECK(p[1].y[0] == 1.0);   // file index 1 has label 3
    CHECK(p[0].y[0] == -1.0);  // file index 0 has label 5
  }

  SECTION("projection is deterministic in the seed") {
    const Pool a = load_mnist_projected(img_path, lab_path, {3, 5}, 24, 9, 40);
    const Pool b = load_mnist_projected(img_path, lab_path, {3, 5}, 24, 9, 40);
    const Pool c = load_mnist_projected(img_path, lab_path, {3, 5}, 24, 10, 40);
    CHECK(pools_equal(a, b));
    CHECK_FALSE(pools_equal(a, c));
  }

  SECTION("digit filter and subset size") {
    const Pool p = load_mnist_projected(img_path, lab_path, {3}, 24, 1, 10);
    CHECK(p.size() == 10);
    CHECK_THROWS_AS(load_mnist_projected(img_path, lab_path, {7}, 24, 1, 10), Error);
  }

  SECTION("malformed files are rejected") {
    CHECK_THROWS_AS(load_mnist_projected(lab_path, lab_path, {3, 5}, 24, 1, 10),
                    Error);  // wrong magic for images
    const std::string short_lab = tmp_path("last_test_short.idx");
    std::vector<std::uint8_t> too_few(im.n / 2, 3);
    write_idx_labels(short_lab, too_few);
    CHECK_THROWS_AS(load_mnist_projected(img_path, short_lab, {3, 5}, 24, 1, 10),
                    Error);  // count mismatch
    std::remove(short_lab.c_str());
  }

  SECTION("projected variance follows the 1/n_pixels scaling rule") {
    // empirical per-coordinate variance equals P_j' Cov P_j; its mean over
    // coordinates concentrates around tr(Cov)/n_pixels
    const std::size_t n_img = 40, n_pix = 64, proj = 24;
    std::vector<Vec> scaled(n_img, Vec(n_pix));
    for (std::size_t i = 0; i < n_img; ++i)
      for (std::size_t j = 0; j < n_pix; ++j)
        scaled[i][j] = double(im.pixels[i * n_pix + j]) / 255.0;
    Vec mean(n_pix, 0.0);
    for (const auto& s : scaled) axpy(mean, 1.0 / double(n_img), s);
    double trace = 0.0;
    Mat gram(n_img, n_img);
    for (std::size_t i = 0; i < n_img; ++i) {
      const Vec ci = sub(scaled[i], mean);
      trace += dot(ci, ci) / double(n_img);
      for (std::size_t k = 0; k < n_img; ++k)
        gram(i, k) = dot(ci, sub(scaled[k], mean)) / double(n_img);
    }
    const double frob2 = dot(gram.a, gram.a);  // |Cov|_F^2 via the gram trick

    const Pool p = load_mnist_projected(img_path, lab_path, {3, 5}, proj, 21, n_img);
    double mean_var = 0.0;
    for (std::size_t j = 0; j < proj; ++j) {
      double m = 0, m2 = 0;
      for (std::size_t i = 0; i < n_img; ++i) {
        m += p[i].x[j] / double(n_img);
        m2 += p[i].x[j] * p[i].x[j] / double(n_img);
      }
      mean_var += (m2 - m * m) / double(proj);
    }
    const double predicted = trace / double(n_pix);
    const double sigma = std::sqrt(2.0 * frob2 / double(proj)) / double(n_pix);
    CHECK(std::abs(mean_var - predicted) <= 3.0 * sigma);
  }

  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}

TEST_CASE("uniform sampling and splits") {
  SECTION("single-example pool") {
    Pool p;
    p.d = 1;
    p.examples.push_back({{1.0}, {2.0}, 0});
    SeededRng rng(1);
    for (int i = 0; i < 10; ++i) CHECK(sample_uniform(p, rng).id == 0);
    Pool empty;
    CHECK_THROWS_AS(sample_uniform(empty, rng), Error);
  }

  SECTION("chi-square uniformity over a 10-example pool") {
    Pool p;
    p.d = 1;
    for (std::size_t i = 0; i < 10; ++i) p.examples.push_back({{0.0}, {0.0}, i});
    SeededRng rng(33);
    std::vector<std::size_t> counts(10, 0);
    const std::size_t draws = 100000;
    for (std::size_t i = 0; i < draws; ++i) ++counts[sample_uniform(p, rng).id];
    const double expected = double(draws) / 10.0;
    double chi2 = 0.0;
    for (std::size_t c : counts) {
      const double d = double(c) - expected;
      chi2 += d * d / expected;
    }
    CHECK(chi2 < 27.877);  // chi-square critical value, 9 dof, p = 0.001
  }

  SECTION("split") {
    const Pool p = gen_gaussian_clusters(50, 2, 0.2, 5);
    SeededRng rng(2);
    const Split all = split(p, 1.0, 0.0, 0.0, rng);
    CHECK(all.train.size() == p.size());
    CHECK(all.val.empty());
    CHECK(all.test.empty());

    const Split s = split(p, 0.6, 0.2, 0.2, rng);
    CHECK(s.train.size() + s.val.size() + s.test.size() == p.size());
    std::vector<bool> seen(p.size(), false);
    for (auto idx : s.train) seen[idx] = true;
    for (auto idx : s.val) {
      CHECK_FALSE(seen[idx]);
      seen[idx] = true;
    }
    for (auto idx : s.test) {
      CHECK_FALSE(seen[idx]);
      seen[idx] = true;
    }
    CHECK_THROWS_AS(split(p, 0.5, 0.2, 0.2, rng), Error);
  }
}

TEST_CASE("pool serialization round trip") {
  const std::string path = tmp_path("last_test_pool.txt");
  const Vec wstar{0.5, -1.0, 2.0, 0.25};
  const Pool a = gen_linreg(64, 4, wstar, 0.02, 10);
  save_pool(a, path);
  const Pool b = load_pool(path);
  CHECK(pools_equal(a, b));

  const Pool c = gen_gaussian_clusters(16, 3, 0.2, 11);
  save_pool(c, path);
  CHECK(pools_equal(c, load_pool(path)));

  CHECK_THROWS_AS(load_pool(tmp_path("does_not_exist.txt")), Error);
  std::remove(path.c_str());
}
