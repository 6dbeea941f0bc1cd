#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "last/error.hpp"
#include "last/numerics.hpp"
#include "last/rng.hpp"

namespace last {

enum class LabelKind { Regression, BinaryPm1, OneHot };

inline std::string label_kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::Regression: return "regression";
    case LabelKind::BinaryPm1: return "binary";
    case LabelKind::OneHot: return "onehot";
  }
  return "?";
}

inline LabelKind label_kind_from(const std::string& s) {
  if (s == "regression") return LabelKind::Regression;
  if (s == "binary") return LabelKind::BinaryPm1;
  if (s == "onehot") return LabelKind::OneHot;
  throw Error("unknown label kind: " + s);
}

struct Example {
  Vec x;
  Vec y;  // length 1 for Regression/BinaryPm1, K for OneHot
  std::size_t id = 0;
};

/// Immutable-after-construction teaching pool.
struct Pool {
  std::vector<Example> examples;
  std::size_t d = 0;
  LabelKind label_kind = LabelKind::Regression;
  std::size_t classes = 1;  // label vector length
  std::uint64_t seed = 0;

  std::size_t size() const { return examples.size(); }
  const Example& operator[](std::size_t i) const { return examples[i]; }

  /// Binary +-1 label of example i as a 2-class one-hot vector;
  /// convention: class +1 maps to (1,0).
  Vec onehot2(std::size_t i) const {
    require(label_kind == LabelKind::BinaryPm1, "onehot2: pool is not binary");
    return examples[i].y[0] > 0 ? Vec{1.0, 0.0} : Vec{0.0, 1.0};
  }
};

inline const Example& sample_uniform(const Pool& pool, SeededRng& rng) {
  require(pool.size() > 0, "sample_uniform: empty pool");
  return pool.examples[rng.uniform_index(pool.size())];
}

/// Disjoint train/val/test partition; fractions must sum to 1.
struct Split {
  std::vector<std::size_t> train, val, test;
};

inline Split split(const Pool& pool, double f_train, double f_val, double f_test,
                   SeededRng& rng) {
  require(std::abs(f_train + f_val + f_test - 1.0) < 1e-9,
          "split: fractions must sum to 1");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  const std::size_t n_train = std::size_t(std::llround(f_train * double(pool.size())));
  const std::size_t n_val = std::size_t(std::llround(f_val * double(pool.size())));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + long(std::min(n_train, idx.size())));
  s.val.assign(idx.begin() + long(std::min(n_train, idx.size())),
               idx.begin() + long(std::min(n_train + n_val, idx.size())));
  s.test.assign(idx.begin() + long(std::min(n_train + n_val, idx.size())), idx.end());
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic generators. All are pure functions of (config, seed).
// ---------------------------------------------------------------------------

/// Linear-regression pool: x ~ N(0, I_d), y = <w*, x> + b + noise_sd * N(0,1).
/// w_star has length d, or d+1 with the bias b as the last entry.
inline Pool gen_linreg(std::size_t n, std::size_t d, const Vec& w_star, double noise_sd,
                       std::uint64_t seed) {
  require(n > 0 && d > 0, "gen_linreg: invalid sizes");
  require(noise_sd >= 0.0, "gen_linreg: negative noise");
  require(w_star.size() == d || w_star.size() == d + 1,
          "gen_linreg: w_star must have length d or d+1");
  const double b = (w_star.size() == d + 1) ? w_star[d] : 0.0;
  SeededRng rng(seed);
  Pool pool;
  pool.d = d;
  pool.label_kind = LabelKind::Regression;
  pool.classes = 1;
  pool.seed = seed;
  pool.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec x = rng.normal_vec(d);
    double y = b;
    for (std::size_t j = 0; j < d; ++j) y += w_star[j] * x[j];
    if (noise_sd > 0.0) y += noise_sd * rng.normal();
    pool.examples.push_back({std::move(x), Vec{y}, i});
  }
  return pool;
}

/// Two Gaussian clusters in R^d: class +1 mean (offset,...,offset),
/// class -1 mean (-offset,...,-offset), identity covariance.
inline Pool gen_gaussian_clusters(std::size_t n_per_class, std::size_t d, double offset,
                                  std::uint64_t seed) {
  require(n_per_class > 0 && d > 0, "gen_gaussian_clusters: invalid sizes");
  SeededRng rng(seed);
  Pool pool;
  pool.d = d;
  pool.label_kind = LabelKind::BinaryPm1;
  pool.classes = 1;
  pool.seed = seed;
  pool.examples.reserve(2 * n_per_class);
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const double sign = (i < n_per_class) ? 1.0 : -1.0;
    Vec x = rng.normal_vec(d, sign * offset, 1.0);
    pool.examples.push_back({std::move(x), Vec{sign}, i});
  }
  return pool;
}

/// Interleaved half moons in 2-D. Class +1 is the upper unit semicircle
/// (cos t, sin t), class -1 the lower arc (1 - cos t, 0.5 - sin t),
/// t on a uniform grid over [0, pi]; Gaussian noise added to both
/// coordinates. The arc constants follow the common half-moon
/// parameterization and are a documented knob of this generator.
inline Pool gen_half_moon(std::size_t n_per_class, double noise_sd, std::uint64_t seed) {
  require(n_per_class > 0, "gen_half_moon: invalid sizes");
  require(noise_sd >= 0.0, "gen_half_moon: negative noise");
  SeededRng rng(seed);
  Pool pool;
  pool.d = 2;
  pool.label_kind = LabelKind::BinaryPm1;
  pool.classes = 1;
  pool.seed = seed;
  pool.examples.reserve(2 * n_per_class);
  auto arc_t = [&](std::size_t i) {
    return n_per_class == 1 ? 0.0 : M_PI * double(i) / double(n_per_class - 1);
  };
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = arc_t(i);
    Vec x{std::cos(t), std::sin(t)};
    if (noise_sd > 0.0) {
      x[0] += noise_sd * rng.normal();
      x[1] += noise_sd * rng.normal();
    }
    pool.examples.push_back({std::move(x), Vec{1.0}, i});
  }
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = arc_t(i);
    Vec x{1.0 - std::cos(t), 0.5 - std::sin(t)};
    if (noise_sd > 0.0) {
      x[0] += noise_sd * rng.normal();
      x[1] += noise_sd * rng.normal();
    }
    pool.examples.push_back({std::move(x), Vec{-1.0}, n_per_class + i});
  }
  return pool;
}

// ---------------------------------------------------------------------------
// MNIST-style IDX ingestion with a fixed random projection.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(bool(in), "idx read failed: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

struct IdxImages {
  std::size_t n = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // n * rows * cols
};

inline IdxImages read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open idx image file: " + path);
  const std::uint32_t magic = detail::read_be32(in, path);
  require(magic == 0x00000803u, "bad idx image magic in " + path);
  IdxImages im;
  im.n = detail::read_be32(in, path);
  im.rows = detail::read_be32(in, path);
  im.cols = detail::read_be32(in, path);
  im.pixels.resize(im.n * im.rows * im.cols);
  in.read(reinterpret_cast<char*>(im.pixels.data()), long(im.pixels.size()));
  require(bool(in), "truncated idx image file: " + path);
  return im;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open idx label file: " + path);
  const std::uint32_t magic = detail::read_be32(in, path);
  require(magic == 0x00000801u, "bad idx label magic in " + path);
  const std::size_t n = detail::read_be32(in, path);
  std::vector<std::uint8_t> labels(n);
  in.read(reinterpret_cast<char*>(labels.data()), long(n));
  require(bool(in), "truncated idx label file: " + path);
  return labels;
}

inline void write_idx_images(const std::string& path, const IdxImages& im) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot write idx image file: " + path);
  auto be32 = [&](std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  be32(0x00000803u);
  be32(std::uint32_t(im.n));
  be32(std::uint32_t(im.rows));
  be32(std::uint32_t(im.cols));
  out.write(reinterpret_cast<const char*>(im.pixels.data()), long(im.pixels.size()));
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot write idx label file: " + path);
  auto be32 = [&](std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  be32(0x00000801u);
  be32(std::uint32_t(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), long(labels.size()));
}

/// Fixed Gaussian projection matrix with entries N(0, 1/n_pixels), so the
/// projected feature scale does not depend on the input dimension.
inline Mat projection_matrix(std::size_t n_pixels, std::size_t proj_dim,
                             std::uint64_t seed) {
  SeededRng rng(seed);
  Mat P(n_pixels, proj_dim);
  const double sd = 1.0 / std::sqrt(double(n_pixels));
  for (auto& v : P.a) v = rng.normal(0.0, sd);
  return P;
}

/// Load an IDX image/label pair, keep the requested digits, scale pixels
/// to [0,1], and project to proj_dim random features. Two digits yield a
/// BinaryPm1 pool (smallest digit is class +1); more yield a OneHot pool
/// with classes in ascending digit order. proj_dim = 0 keeps raw scaled
/// pixels (identity projection).
inline Pool load_mnist_projected(const std::string& image_path,
                                 const std::string& label_path,
                                 const std::set<int>& digits, std::size_t proj_dim,
                                 std::uint64_t seed, std::size_t subset = 1000) {
  require(!digits.empty(), "load_mnist_projected: empty digit set");
  const IdxImages im = read_idx_images(image_path);
  const std::vector<std::uint8_t> labels = read_idx_labels(label_path);
  require(im.n == labels.size(),
          "idx image/label count mismatch: " + image_path + " vs " + label_path);

  const std::size_t n_pixels = im.rows * im.cols;
  const bool identity = proj_dim == 0;
  const Mat P = identity ? Mat() : projection_matrix(n_pixels, proj_dim, seed);

  std::vector<int> digit_list(digits.begin(), digits.end());
  const bool binary = digit_list.size() == 2;

  Pool pool;
  pool.d = identity ? n_pixels : proj_dim;
  pool.label_kind = binary ? LabelKind::BinaryPm1 : LabelKind::OneHot;
  pool.classes = binary ? 1 : digit_list.size();
  pool.seed = seed;

  for (std::size_t i = 0; i < im.n && pool.size() < subset; ++i) {
    const int lab = labels[i];
    auto it = digits.find(lab);
    if (it == digits.end()) continue;
    Vec raw(n_pixels);
    for (std::size_t p = 0; p < n_pixels; ++p)
      raw[p] = double(im.pixels[i * n_pixels + p]) / 255.0;
    Vec x = identity ? std::move(raw) : matvec_t(P, raw);
    Vec y;
    if (binary) {
      y = Vec{lab == digit_list[0] ? 1.0 : -1.0};
    } else {
      y.assign(digit_list.size(), 0.0);
      for (std::size_t c = 0; c < digit_list.size(); ++c)
        if (digit_list[c] == lab) y[c] = 1.0;
    }
    pool.examples.push_back({std::move(x), std::move(y), pool.size()});
  }
  require(pool.size() > 0, "load_mnist_projected: no examples of the requested digits");
  return pool;
}

// ---------------------------------------------------------------------------
// Pool serialization: plain-text columnar format, lossless round trip.
//
//   last-pool 1
//   d=<d> n=<n> label_kind=<kind> classes=<K> seed=<seed>
//   <id> x0 ... x{d-1} y0 ... y{K-1}      (one line per example, %.17g)
// ---------------------------------------------------------------------------

inline void save_pool(const Pool& pool, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), "cannot write pool file: " + path);
  out << "last-pool 1\n";
  out << "d=" << pool.d << " n=" << pool.size()
      << " label_kind=" << label_kind_name(pool.label_kind)
      << " classes=" << pool.classes << " seed=" << pool.seed << "\n";
  char buf[32];
  for (const auto& e : pool.examples) {
    out << e.id;
    for (double v : e.x) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    for (double v : e.y) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  require(bool(out), "write failed: " + path);
}

inline Pool load_pool(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open pool file: " + path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  require(tag == "last-pool" && version == 1, "not a last-pool file: " + path);
  Pool pool;
  std::size_t n = 0;
  std::string field;
  for (int i = 0; i < 5; ++i) {
    in >> field;
    const auto eq = field.find('=');
    require(eq != std::string::npos, "malformed pool header: " + path);
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "d") pool.d = std::stoul(value);
    else if (key == "n") n = std::stoul(value);
    else if (key == "label_kind") pool.label_kind = label_kind_from(value);
    else if (key == "classes") pool.classes = std::stoul(value);
    else if (key == "seed") pool.seed = std::stoull(value);
    else throw Error("unknown pool header field '" + key + "' in " + path);
  }
  const std::size_t ylen = pool.label_kind == LabelKind::OneHot ? pool.classes : 1;
  pool.examples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example& e = pool.examples[i];
    in >> e.id;
    e.x.resize(pool.d);
    for (auto& v : e.x) in >> v;
    e.y.resize(ylen);
    for (auto& v : e.y) in >> v;
    require(bool(in), "truncated pool file: " + path);
  }
  return pool;
}

}  // namespace last
