#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "last/error.hpp"
#include "last/learners.hpp"
#include "last/numerics.hpp"
#include "last/rng.hpp"
#include "last/tape.hpp"

namespace last {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamBuffer {
  Vec m, v;
  std::size_t t = 0;
};

/// Bias-corrected adaptive-moment update with optional decoupled weight
/// decay. Returns the updated parameters.
inline Vec adam_step(const Vec& theta, const Vec& grad, AdamBuffer& st,
                     const AdamHyper& hp) {
  require(theta.size() == grad.size(), "adam_step: dimension mismatch");
  if (st.m.empty()) {
    st.m.assign(theta.size(), 0.0);
    st.v.assign(theta.size(), 0.0);
  }
  require(st.m.size() == theta.size(), "adam_step: state shape mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, double(st.t));
  Vec out = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = hp.beta1 * st.m[i] + (1.0 - hp.beta1) * grad[i];
    st.v[i] = hp.beta2 * st.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    out[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    if (hp.weight_decay != 0.0) out[i] -= hp.lr * hp.weight_decay * theta[i];
  }
  return out;
}

/// Feed-forward teaching policy pi_theta. The head determines how raw
/// outputs are interpreted downstream (soft label via softmax, action
/// logits, residual label, mu logits).
struct TeacherNet {
  enum class Head : std::uint8_t { Label, ActionLogits, ResidualLabel, MuLogits };

  std::vector<std::size_t> dims;  // input, hidden..., output
  Activation act = Activation::Relu;
  double act_slope = 0.01;
  Head head = Head::Label;
  std::vector<Mat> W;  // per layer, out x in
  std::vector<Vec> b;

  static TeacherNet make(std::vector<std::size_t> dims, Head head,
                         std::uint64_t seed, Activation act = Activation::Relu,
                         double slope = 0.01) {
    require(dims.size() >= 2, "TeacherNet: need at least input and output dims");
    TeacherNet net;
    net.dims = std::move(dims);
    net.head = head;
    net.act = act;
    net.act_slope = slope;
    SeededRng rng(seed);
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
      const std::size_t in = net.dims[l], out = net.dims[l + 1];
      const double sd = std::sqrt(2.0 / double(in));
      net.W.emplace_back(out, in, rng.normal_vec(out * in, 0.0, sd));
      net.b.emplace_back(out, 0.0);
    }
    return net;
  }

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t layers() const { return W.size(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += W[l].a.size() + b[l].size();
    return n;
  }

  /// Raw network output (head squashing applied by the caller).
  Vec forward(const Vec& s) const {
    require(s.size() == input_dim(), "TeacherNet: input size mismatch");
    Vec h = s;
    for (std::size_t l = 0; l < layers(); ++l) {
      h = add(matvec(W[l], h), b[l]);
      if (l + 1 < layers())
        for (auto& v : h) v = act_apply(v, act, act_slope);
    }
    return h;
  }

  /// Tape nodes for the current parameters (one var node per tensor).
  struct Binding {
    std::vector<int> w_nodes, b_nodes;
  };

  Binding bind(Tape& t) const {
    Binding bd;
    for (std::size_t l = 0; l < layers(); ++l) {
      bd.w_nodes.push_back(t.var(W[l].a));
      bd.b_nodes.push_back(t.var(b[l]));
    }
    return bd;
  }

  /// Raw output as a tape node (differentiable in the bound parameters
  /// and in the input node).
  int forward_tape(Tape& t, const Binding& bd, int input) const {
    int h = input;
    for (std::size_t l = 0; l < layers(); ++l) {
      h = t.affine(bd.w_nodes[l], dims[l + 1], dims[l], h, bd.b_nodes[l]);
      if (l + 1 < layers())
        h = act == Activation::Relu ? t.relu(h) : t.leaky_relu(h, act_slope);
    }
    return h;
  }
};

/// Adam state for a TeacherNet (one buffer per tensor).
struct TeacherOpt {
  AdamHyper hp;
  std::vector<AdamBuffer> w_buf, b_buf;

  explicit TeacherOpt(const TeacherNet& net, AdamHyper hp = {}) : hp(hp) {
    w_buf.resize(net.layers());
    b_buf.resize(net.layers());
  }

  /// Apply one Adam update from the adjoints accumulated on a tape.
  void apply(TeacherNet& net, const Tape& t, const TeacherNet::Binding& bd) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      net.W[l].a = adam_step(net.W[l].a, t.grad(bd.w_nodes[l]), w_buf[l], hp);
      net.b[l] = adam_step(net.b[l], t.grad(bd.b_nodes[l]), b_buf[l], hp);
    }
  }
};

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian binary):
//   magic "LASTTCH1", u32 n_dims, u64 dims..., u8 activation, f64 slope,
//   u8 head, per layer { f64 W row-major, f64 b }, u8 has_adam,
//   [ adam: f64 lr beta1 beta2 eps wd, u64 t per tensor, moments ]
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(bool(in), "truncated checkpoint: " + path);
  return v;
}
inline void put_vec(std::ofstream& out, const Vec& v) {
  out.write(reinterpret_cast<const char*>(v.data()), long(v.size() * sizeof(double)));
}
inline void get_vec(std::ifstream& in, Vec& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(v.data()), long(v.size() * sizeof(double)));
  require(bool(in), "truncated checkpoint: " + path);
}

}  // namespace detail

inline void save_teacher(const TeacherNet& net, const std::string& path,
                         const TeacherOpt* opt = nullptr) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot write checkpoint: " + path);
  out.write("LASTTCH1", 8);
  detail::put<std::uint32_t>(out, std::uint32_t(net.dims.size()));
  for (auto d : net.dims) detail::put<std::uint64_t>(out, d);
  detail::put<std::uint8_t>(out, std::uint8_t(net.act));
  detail::put<double>(out, net.act_slope);
  detail::put<std::uint8_t>(out, std::uint8_t(net.head));
  for (std::size_t l = 0; l < net.layers(); ++l) {
    detail::put_vec(out, net.W[l].a);
    detail::put_vec(out, net.b[l]);
  }
  detail::put<std::uint8_t>(out, opt ? 1 : 0);
  if (opt) {
    detail::put<double>(out, opt->hp.lr);
    detail::put<double>(out, opt->hp.beta1);
    detail::put<double>(out, opt->hp.beta2);
    detail::put<double>(out, opt->hp.eps);
    detail::put<double>(out, opt->hp.weight_decay);
    auto put_buf = [&](const AdamBuffer& buf, std::size_t n) {
      detail::put<std::uint64_t>(out, buf.t);
      Vec m = buf.m.empty() ? Vec(n, 0.0) : buf.m;
      Vec v = buf.v.empty() ? Vec(n, 0.0) : buf.v;
      detail::put_vec(out, m);
      detail::put_vec(out, v);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      put_buf(opt->w_buf[l], net.W[l].a.size());
      put_buf(opt->b_buf[l], net.b[l].size());
    }
  }
  require(bool(out), "checkpoint write failed: " + path);
}

inline TeacherNet load_teacher(const std::string& path, TeacherOpt* opt = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  require(bool(in) && std::string(magic, 8) == "LASTTCH1",
          "not a teacher checkpoint: " + path);
  TeacherNet net;
  const auto nd = detail::get<std::uint32_t>(in, path);
  require(nd >= 2 && nd < 64, "corrupt checkpoint header: " + path);
  for (std::uint32_t i = 0; i < nd; ++i)
    net.dims.push_back(std::size_t(detail::get<std::uint64_t>(in, path)));
  net.act = Activation(detail::get<std::uint8_t>(in, path));
  net.act_slope = detail::get<double>(in, path);
  net.head = TeacherNet::Head(detail::get<std::uint8_t>(in, path));
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    Mat w(net.dims[l + 1], net.dims[l]);
    detail::get_vec(in, w.a, path);
    Vec bias(net.dims[l + 1]);
    detail::get_vec(in, bias, path);
    net.W.push_back(std::move(w));
    net.b.push_back(std::move(bias));
  }
  const bool has_adam = detail::get<std::uint8_t>(in, path) != 0;
  if (has_adam && opt) {
    opt->hp.lr = detail::get<double>(in, path);
    opt->hp.beta1 = detail::get<double>(in, path);
    opt->hp.beta2 = detail::get<double>(in, path);
    opt->hp.eps = detail::get<double>(in, path);
    opt->hp.weight_decay = detail::get<double>(in, path);
    opt->w_buf.resize(net.layers());
    opt->b_buf.resize(net.layers());
    auto get_buf = [&](AdamBuffer& buf, std::size_t n) {
      buf.t = std::size_t(detail::get<std::uint64_t>(in, path));
      buf.m.resize(n);
      buf.v.resize(n);
      detail::get_vec(in, buf.m, path);
      detail::get_vec(in, buf.v, path);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      get_buf(opt->w_buf[l], net.W[l].a.size());
      get_buf(opt->b_buf[l], net.b[l].size());
    }
  }
  return net;
}

}  // namespace last
