#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "last/data.hpp"
#include "last/param_teachers.hpp"
#include "last/teacher_net.hpp"

using namespace last;
using Catch::Approx;

namespace {

double rel_err(const Vec& a, const Vec& b) {
  return dist2(a, b) / std::max(norm2(b), 1e-12);
}

Vec flatten_net(const TeacherNet& net) {
  Vec f;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    f.insert(f.end(), net.W[l].a.begin(), net.W[l].a.end());
    f.insert(f.end(), net.b[l].begin(), net.b[l].end());
  }
  return f;
}

void unflatten_net(TeacherNet& net, const Vec& f) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    std::copy(f.begin() + long(off), f.begin() + long(off + net.W[l].a.size()),
              net.W[l].a.begin());
    off += net.W[l].a.size();
    std::copy(f.begin() + long(off), f.begin() + long(off + net.b[l].size()),
              net.b[l].begin());
    off += net.b[l].size();
  }
}

Vec net_tape_grad(Tape& t, const TeacherNet::Binding& bd, const TeacherNet& net) {
  Vec g;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const Vec& gw = t.grad(bd.w_nodes[l]);
    g.insert(g.end(), gw.begin(), gw.end());
    const Vec& gb = t.grad(bd.b_nodes[l]);
    g.insert(g.end(), gb.begin(), gb.end());
  }
  return g;
}

}  // namespace

TEST_CASE("omniscient state layout") {
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = 3;
  spec.K = 2;

  SECTION("length arithmetic") {
    CHECK(omniscient_state_dim(spec, true) == 3 + 2 + 6 + 6 + 2);
    CHECK(omniscient_state_dim(spec, false) == 3 + 2 + 6 + 2);
  }

  SECTION("zero blocks land at the documented offsets") {
    const Vec x(3, 0.0), yt{1.0, 0.0};
    const Vec w(6, 0.0), ws(6, 7.0), pred{0.5, 0.5};
    const Vec s = build_state_omniscient(x, yt, w, &ws, pred);
    REQUIRE(s.size() == 19);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == 0.0);          // x
    CHECK(s[3] == 1.0);                                              // ytilde
    CHECK(s[4] == 0.0);
    for (std::size_t i = 5; i < 11; ++i) CHECK(s[i] == 0.0);         // w
    for (std::size_t i = 11; i < 17; ++i) CHECK(s[i] == 7.0);        // w*
    CHECK(s[17] == 0.5);                                             // prediction
    CHECK(s[18] == 0.5);
  }

  SECTION("slicing recovers every component bit-exactly") {
    SeededRng rng(41);
    const Vec x = rng.normal_vec(3);
    const Vec yt{0.0, 1.0};
    const Vec w = rng.normal_vec(6);
    const Vec ws = rng.normal_vec(6);
    const Vec pred = softmax(rng.normal_vec(2));
    const Vec s = build_state_omniscient(x, yt, w, &ws, pred);
    CHECK(Vec(s.begin(), s.begin() + 3) == x);
    CHECK(Vec(s.begin() + 3, s.begin() + 5) == yt);
    CHECK(Vec(s.begin() + 5, s.begin() + 11) == w);
    CHECK(Vec(s.begin() + 11, s.begin() + 17) == ws);
    CHECK(Vec(s.begin() + 17, s.end()) == pred);
  }
}

TEST_CASE("policy-gradient state features") {
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = 3;
  spec.K = 2;
  const std::vector<Vec> actions{{0.0, 1.0}, {0.5, 0.5}, {1.0, 0.0}};
  SeededRng rng(42);
  const Vec x = rng.normal_vec(3);
  const Vec yt{1.0, 0.0};

  SECTION("w = w* zeroes all alignment features") {
    const Vec w = rng.normal_vec(6);
    const Vec s = build_state_pg(w, w, x, yt, 0.01, actions, spec.ctx());
    REQUIRE(s.size() == 6 + 3);
    for (std::size_t i = 6; i < 9; ++i) CHECK(s[i] == 0.0);
  }

  SECTION("alignment of the ground-truth action matches a direct computation") {
    const Vec w = rng.normal_vec(6);
    const Vec ws = rng.normal_vec(6);
    const double eta = 0.01;
    const Vec s = build_state_pg(w, ws, x, yt, eta, actions, spec.ctx());
    const Vec g = spec.ctx().grad(x, actions[2], w);  // action (1,0) == ytilde
    const double direct = dot(sub(ws, w), scale(g, -eta));
    CHECK(s[6 + 2] == Approx(direct).margin(1e-15));
  }
}

TEST_CASE("adam step") {
  AdamHyper hp;
  hp.lr = 0.01;

  SECTION("zero gradient with fresh moments leaves parameters unchanged") {
    AdamBuffer st;
    const Vec theta{0.5, -0.25};
    CHECK(adam_step(theta, {0.0, 0.0}, st, hp) == theta);
  }

  SECTION("first step moves by -lr g / (|g| + eps) elementwise") {
    AdamBuffer st;
    const Vec theta{1.0, 2.0, -3.0};
    const Vec g{0.4, -2.0, 0.001};
    const Vec out = adam_step(theta, g, st, hp);
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect = theta[i] - hp.lr * g[i] / (std::abs(g[i]) + hp.eps);
      CHECK(out[i] == Approx(expect).margin(1e-12));
    }
  }

  SECTION("identical calls from identical state agree") {
    AdamBuffer s1, s2;
    const Vec theta{0.1, 0.2};
    const Vec g{1.0, -1.0};
    CHECK(adam_step(theta, g, s1, hp) == adam_step(theta, g, s2, hp));
  }

  SECTION("decoupled weight decay shrinks parameters at zero gradient") {
    AdamHyper wd = hp;
    wd.weight_decay = 0.1;
    AdamBuffer st;
    const Vec out = adam_step({1.0}, {0.0}, st, wd);
    CHECK(out[0] == Approx(1.0 - hp.lr * 0.1));
  }
}

TEST_CASE("unrolled objective gradient matches finite differences") {
  SeededRng rng(50);
  const std::size_t d = 3, K = 2;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = K;
  spec.lambda = 1e-3;

  const Pool pool = gen_gaussian_clusters(20, d, 0.4, 51);
  const Vec wstar = rng.normal_vec(d * K, 0.0, 0.5);
  const Vec w0 = rng.normal_vec(d * K, 0.0, 0.5);
  const double eta = 0.05, decay = 0.95;

  for (std::size_t v : {std::size_t(1), std::size_t(5), std::size_t(20)}) {
    TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, true), 4, K},
                                      TeacherNet::Head::Label, 52 + v);
    // freeze the drawn indices so the objective is a pure function of theta
    std::vector<std::size_t> draws(v);
    SeededRng draw_rng(53);
    for (auto& idx : draws) idx = draw_rng.uniform_index(pool.size());

    auto episode = [&](TeacherNet& teacher, Tape& t, const TeacherNet::Binding& bd) {
      const int wstar_c = t.constant(wstar);
      int w = t.var(w0);
      int total = -1;
      for (std::size_t step = 0; step < v; ++step) {
        const Example& e = pool.examples[draws[step]];
        const Vec yt = spec.pool_label(pool, draws[step]);
        const int xc = t.constant(e.x);
        const int pred = detail::prediction_tape(t, spec, w, xc);
        const int state = detail::state_tape(t, e.x, yt, w, &wstar, pred);
        const int label = detail::teacher_label_tape(t, teacher, bd, state, spec, yt, 1.0);
        w = detail::learner_step_tape(t, spec, w, xc, label, eta);
        const int term = t.scale(t.sq_norm(t.sub(w, wstar_c)),
                                 std::pow(decay, double(v - 1 - step)));
        total = total < 0 ? term : t.add(total, term);
      }
      return total;
    };

    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    t.backward(episode(net, t, bd));
    const Vec tape_grad = net_tape_grad(t, bd, net);

    const Vec theta0 = flatten_net(net);
    auto f = [&](const Vec& th) {
      TeacherNet tmp = net;
      unflatten_net(tmp, th);
      Tape tt;
      const TeacherNet::Binding bb = tmp.bind(tt);
      return tt.val(episode(tmp, tt, bb))[0];
    };
    const Vec num = finite_diff_grad(f, theta0, 1e-6);
    CHECK(rel_err(tape_grad, num) < 1e-4);
  }
}

TEST_CASE("unrolled gradcheck for the scalar-label learner") {
  SeededRng rng(54);
  const std::size_t d = 3;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::Lsr;
  spec.d = d;
  spec.K = 1;

  const Vec wgen{0.5, -1.0, 2.0};
  const Pool pool = gen_linreg(20, d, wgen, 0.05, 55);
  const Vec wstar = rng.normal_vec(d);
  const Vec w0 = rng.normal_vec(d);
  const double eta = 0.05;

  TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, true), 4, 1},
                                    TeacherNet::Head::Label, 56);
  std::vector<std::size_t> draws{3, 7, 11};

  auto episode = [&](TeacherNet& teacher, Tape& t, const TeacherNet::Binding& bd) {
    const int wstar_c = t.constant(wstar);
    int w = t.var(w0);
    for (std::size_t idx : draws) {
      const Example& e = pool.examples[idx];
      const int xc = t.constant(e.x);
      const int pred = detail::prediction_tape(t, spec, w, xc);
      const int state = detail::state_tape(t, e.x, e.y, w, &wstar, pred);
      const int label = detail::teacher_label_tape(t, teacher, bd, state, spec, e.y, 1.0);
      w = detail::learner_step_tape(t, spec, w, xc, label, eta);
    }
    return t.sq_norm(t.sub(w, wstar_c));
  };

  Tape t;
  const TeacherNet::Binding bd = net.bind(t);
  t.backward(episode(net, t, bd));
  const Vec tape_grad = net_tape_grad(t, bd, net);

  auto f = [&](const Vec& th) {
    TeacherNet tmp = net;
    unflatten_net(tmp, th);
    Tape tt;
    const TeacherNet::Binding bb = tmp.bind(tt);
    return tt.val(episode(tmp, tt, bb))[0];
  };
  CHECK(rel_err(tape_grad, finite_diff_grad(f, flatten_net(net), 1e-6)) < 1e-4);
}

TEST_CASE("frozen identity policies reproduce sgd bit-exactly") {
  const std::size_t d = 4;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  const Pool pool = gen_gaussian_clusters(50, d, 0.3, 60);
  SeededRng wr(61);
  const Vec wstar = wr.normal_vec(d * 2, 0.0, 0.5);
  const Vec w0 = wr.normal_vec(d * 2, 0.0, 0.5);

  SECTION("residual head at alpha = 1") {
    TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, false), 8, 2},
                                      TeacherNet::Head::ResidualLabel, 62);
    SeededRng r1(7), r2(7);
    RollCurves c1, c2;
    const Vec w_sgd = roll_teach(pool, spec, w0, 1e-3, 200, 1, identity_labeler(), r1,
                                 &wstar, nullptr, &c1);
    const Vec w_res = roll_teach(pool, spec, w0, 1e-3, 200, 1,
                                 teacher_labeler(net, spec, nullptr, 1.0), r2, &wstar,
                                 nullptr, &c2);
    CHECK(w_sgd == w_res);
    CHECK(c1.dist == c2.dist);
  }

  SECTION("mu = 1 label equals the ground truth bit-exactly") {
    const Vec yt{1.0, 0.0};
    const Vec pred{0.3, 0.7};
    CHECK(mu_label(1.0, yt, pred, BlastPgCfg::PSource::Uniform, 2) == yt);
    CHECK(mu_label(1.0, yt, pred, BlastPgCfg::PSource::Prediction, 2) == yt);
  }

  SECTION("single-mu grid rollout equals the sgd trajectory") {
    TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, false), 4, 1},
                                      TeacherNet::Head::MuLogits, 63);
    BlastPgCfg cfg;
    cfg.mu_grid = {1.0};
    cfg.ep.horizon = 150;
    cfg.learner_eta = 1e-3;
    SeededRng r1(9), r2(9);
    const BlastPgRollout roll = blast_pg_rollout(net, pool, pool, spec, w0, cfg, r1,
                                                 /*sample_actions=*/false);
    const Vec w_sgd = roll_teach(pool, spec, w0, 1e-3, 150, 1, identity_labeler(), r2);
    CHECK(roll.final_w == w_sgd);
  }
}

TEST_CASE("unrolled training improves the fixed-seed evaluation") {
  const std::size_t d = 4;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  spec.lambda = 5e-5;
  spec.init_sd = 0.1;
  const Pool pool = gen_gaussian_clusters(100, d, 0.3, 70);

  // reference weights: ridge-style full-batch descent on the pool
  Vec wstar(d * 2, 0.0);
  {
    const TeachCtx ctx = spec.ctx();
    for (int it = 0; it < 3000; ++it) {
      Vec g(wstar.size(), 0.0);
      for (std::size_t i = 0; i < pool.size(); ++i)
        axpy(g, 1.0 / double(pool.size()),
             ctx.grad(pool.examples[i].x, spec.pool_label(pool, i), wstar));
      axpy(wstar, -0.5, g);
    }
  }

  TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, true), 64, 2},
                                    TeacherNet::Head::Label, 71);
  TeacherOpt opt(net, AdamHyper{3e-3, 0.9, 0.999, 1e-8, 1e-4});
  UnrolledCfg cfg;
  cfg.ep.students = 5;
  cfg.ep.unroll = 5;
  cfg.ep.reset_rate = 0.5;
  cfg.episodes = 2000;
  cfg.learner_eta = 0.05;
  cfg.seed = 72;
  cfg.eval_every = 0;
  const TrainResult res = train_unrolled_omniscient(net, opt, pool, spec, wstar, cfg);
  CHECK(res.eval_final < res.eval_initial);
  CHECK(res.log.size() == cfg.episodes);
}

TEST_CASE("episode determinism: identical seeds give identical logs") {
  const std::size_t d = 3;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  const Pool pool = gen_gaussian_clusters(30, d, 0.3, 80);
  SeededRng wr(81);
  const Vec wstar = wr.normal_vec(d * 2, 0.0, 0.3);

  auto run = [&] {
    TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, true), 8, 2},
                                      TeacherNet::Head::Label, 82);
    TeacherOpt opt(net);
    UnrolledCfg cfg;
    cfg.ep.students = 3;
    cfg.ep.unroll = 4;
    cfg.episodes = 20;
    cfg.learner_eta = 0.05;
    cfg.seed = 83;
    cfg.eval_every = 5;
    return train_unrolled_omniscient(net, opt, pool, spec, wstar, cfg);
  };
  const TrainResult a = run(), b = run();
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].objective == b.log[i].objective);
    CHECK(a.log[i].eval_dist == b.log[i].eval_dist);
  }
  CHECK(a.eval_final == b.eval_final);
}

TEST_CASE("policy gradient: single action gives zero update") {
  const std::size_t d = 3;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  const Pool pool = gen_gaussian_clusters(20, d, 0.3, 90);
  SeededRng wr(91);
  const Vec wstar = wr.normal_vec(d * 2, 0.0, 0.3);

  TeacherNet net = TeacherNet::make({d * 2 + 1, 4, 1}, TeacherNet::Head::ActionLogits, 92);
  const Vec before = flatten_net(net);
  TeacherOpt opt(net);
  PgCfg cfg;
  cfg.ep.horizon = 10;
  cfg.ep.students = 2;
  cfg.episodes = 5;
  cfg.seed = 93;
  cfg.eval_every = 0;
  train_pg_omniscient(net, opt, pool, spec, wstar, {Vec{1.0, 0.0}}, cfg);
  CHECK(flatten_net(net) == before);
}

TEST_CASE("policy gradient learns to pick the dominating action") {
  // single-class pool: the correct one-hot label always beats the flipped one
  const std::size_t d = 3;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  spec.init_sd = 0.3;
  Pool pool;
  pool.d = d;
  pool.label_kind = LabelKind::BinaryPm1;
  SeededRng gen(100);
  for (std::size_t i = 0; i < 40; ++i)
    pool.examples.push_back({gen.normal_vec(d, 0.5, 1.0), {1.0}, i});

  // target: full-batch optimum with the correct labels
  Vec wstar(d * 2, 0.0);
  {
    const TeachCtx ctx = spec.ctx();
    for (int it = 0; it < 2000; ++it) {
      Vec g(wstar.size(), 0.0);
      for (std::size_t i = 0; i < pool.size(); ++i)
        axpy(g, 1.0 / double(pool.size()),
             ctx.grad(pool.examples[i].x, spec.pool_label(pool, i), wstar));
      axpy(wstar, -0.2, g);
      // keep the target bounded on this separable single-class pool
      if (norm2(wstar) > 3.0) break;
    }
  }

  const std::vector<Vec> actions{{1.0, 0.0}, {0.0, 1.0}};  // correct vs flipped
  TeacherNet net =
      TeacherNet::make({d * 2 + actions.size(), 8, actions.size()},
                       TeacherNet::Head::ActionLogits, 101);
  TeacherOpt opt(net);
  PgCfg cfg;
  cfg.ep.horizon = 20;
  cfg.ep.students = 5;
  cfg.ep.gamma = 0.99;
  cfg.ep.baseline = -1.0;
  cfg.episodes = 150;
  cfg.learner_eta = 0.1;
  cfg.seed = 102;
  cfg.eval_every = 0;
  train_pg_omniscient(net, opt, pool, spec, wstar, actions, cfg);

  // held-out states from fresh rollouts under the trained argmax policy
  SeededRng eval_rng(103);
  const TeachCtx ctx = spec.ctx();
  std::size_t prefer = 0, total = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Vec w = init_student(wstar, spec.init_sd, eval_rng);
    for (int t = 0; t < 10; ++t, ++total) {
      const std::size_t idx = eval_rng.uniform_index(pool.size());
      const Example& e = pool.examples[idx];
      const Vec st = build_state_pg(w, wstar, e.x, spec.pool_label(pool, idx),
                                    cfg.learner_eta, actions, ctx);
      const Vec logits = net.forward(st);
      const std::size_t a = logits[0] >= logits[1] ? 0 : 1;
      if (a == 0) ++prefer;
      axpy(w, -cfg.learner_eta, ctx.grad(e.x, actions[a], w));
    }
  }
  CHECK(double(prefer) / double(total) >= 0.95);
}

TEST_CASE("reward baseline reduces estimator variance") {
  // fixed 2-action instance with a large common reward offset
  TeacherNet net = TeacherNet::make({3, 2}, TeacherNet::Head::ActionLogits, 110);
  const Vec state{0.2, -0.4, 1.0};
  const Vec rewards{10.0, 11.0};

  auto sample_grads = [&](double baseline, SeededRng& rng) {
    // one-step REINFORCE sample: grad log pi(a) (R_a - b)
    const Vec logits = net.forward(state);
    const Vec probs = softmax(logits);
    const std::size_t a = sample_categorical(probs, rng);
    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    Vec onehot(2, 0.0);
    onehot[a] = 1.0;
    const int nll =
        t.cross_entropy(t.softmax(net.forward_tape(t, bd, t.constant(state))),
                        t.constant(onehot));
    t.backward(nll);
    Vec g = net_tape_grad(t, bd, net);
    return scale(g, -(rewards[a] - baseline));  // grad log pi = -grad nll
  };

  auto total_variance = [&](double baseline, std::uint64_t seed) {
    SeededRng rng(seed);
    const int n = 1000;
    std::vector<Vec> gs;
    for (int i = 0; i < n; ++i) gs.push_back(sample_grads(baseline, rng));
    Vec mean(gs[0].size(), 0.0);
    for (const auto& g : gs) axpy(mean, 1.0 / n, g);
    double var = 0.0;
    for (const auto& g : gs) var += sq_norm(sub(g, mean)) / double(n);
    return var;
  };

  const double mean_reward = 10.5;
  CHECK(total_variance(mean_reward, 7) <= total_variance(0.0, 7));
}

TEST_CASE("policy gradient estimator is unbiased on a 2-action instance") {
  TeacherNet net = TeacherNet::make({2, 2}, TeacherNet::Head::ActionLogits, 120);
  const Vec state{0.7, -0.3};
  const Vec rewards{1.0, 3.0};
  const Vec probs = softmax(net.forward(state));

  // exact gradient of J w.r.t. the output logits by enumeration:
  // sum_a pi_a (onehot(a) - pi) R_a
  Vec exact(2, 0.0);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < 2; ++k)
      exact[k] += probs[a] * ((k == a ? 1.0 : 0.0) - probs[k]) * rewards[a];

  // Monte-Carlo estimate of the same logit gradient
  SeededRng rng(121);
  const int n = 100000;
  Vec mean(2, 0.0), m2(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::size_t a = sample_categorical(probs, rng);
    for (std::size_t k = 0; k < 2; ++k) {
      const double g = ((k == a ? 1.0 : 0.0) - probs[k]) * rewards[a];
      mean[k] += g / n;
      m2[k] += g * g / n;
    }
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const double se = std::sqrt((m2[k] - mean[k] * mean[k]) / n);
    CHECK(std::abs(mean[k] - exact[k]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("blast unrolled gradcheck at v = 1") {
  SeededRng rng(130);
  const std::size_t d = 3, K = 2;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = K;
  const Pool pool = gen_gaussian_clusters(15, d, 0.4, 131);
  const Vec w0 = rng.normal_vec(d * K, 0.0, 0.5);
  const double eta = 0.05, alpha = 0.6;

  TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, false), 4, K},
                                    TeacherNet::Head::ResidualLabel, 132);
  const std::size_t train_idx = 3, val_idx = 7;

  auto episode = [&](TeacherNet& teacher, Tape& t, const TeacherNet::Binding& bd) {
    int w = t.var(w0);
    const Example& e = pool.examples[train_idx];
    const Vec yt = spec.pool_label(pool, train_idx);
    const int xc = t.constant(e.x);
    const int pred = detail::prediction_tape(t, spec, w, xc);
    const int state = detail::state_tape(t, e.x, yt, w, nullptr, pred);
    const int label = detail::teacher_label_tape(t, teacher, bd, state, spec, yt, alpha);
    w = detail::learner_step_tape(t, spec, w, xc, label, eta);
    const Example& v = pool.examples[val_idx];
    const int logits = t.affine(w, K, d, t.constant(v.x));
    return t.cross_entropy(t.softmax(logits), t.constant(spec.pool_label(pool, val_idx)));
  };

  Tape t;
  const TeacherNet::Binding bd = net.bind(t);
  t.backward(episode(net, t, bd));
  const Vec tape_grad = net_tape_grad(t, bd, net);

  auto f = [&](const Vec& th) {
    TeacherNet tmp = net;
    unflatten_net(tmp, th);
    Tape tt;
    const TeacherNet::Binding bb = tmp.bind(tt);
    return tt.val(episode(tmp, tt, bb))[0];
  };
  CHECK(rel_err(tape_grad, finite_diff_grad(f, flatten_net(net), 1e-6)) < 1e-4);
}

TEST_CASE("blast pg with unreachable accuracy target gives no update") {
  const std::size_t d = 3;
  ParamLearnerSpec spec;
  spec.kind = LearnerKind::MulticlassLinear;
  spec.d = d;
  spec.K = 2;
  const Pool pool = gen_gaussian_clusters(20, d, 0.0, 140);  // offset 0: ~chance
  SeededRng wr(141);
  const Vec wstar = wr.normal_vec(d * 2, 0.0, 0.3);

  TeacherNet net = TeacherNet::make({omniscient_state_dim(spec, false), 4, 3},
                                    TeacherNet::Head::MuLogits, 142);
  const Vec before = flatten_net(net);
  TeacherOpt opt(net);
  BlastPgCfg cfg;
  cfg.mu_grid = {0.5, 0.75, 1.0};
  cfg.ep.horizon = 15;
  cfg.ep.students = 3;
  cfg.episodes = 4;
  cfg.reward = BlastPgCfg::Reward::IterationsToAccuracy;
  cfg.zeta = 1.01;  // unreachable: reward is -T for every trajectory
  cfg.seed = 143;
  cfg.eval_every = 0;
  const TrainResult res = blast_pg(net, opt, pool, pool, spec, wstar, cfg);
  CHECK(flatten_net(net) == before);
  for (const auto& row : res.log) CHECK(row.objective == -15.0);
}

TEST_CASE("teacher checkpoint round trip") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "last_teacher.ckpt").string();
  TeacherNet net = TeacherNet::make({5, 8, 3}, TeacherNet::Head::Label, 150,
                                    Activation::LeakyRelu, 0.02);
  TeacherOpt opt(net, AdamHyper{2e-3, 0.8, 0.95, 1e-7, 1e-3});
  // take a couple of adam steps so the moments are nontrivial
  SeededRng rng(151);
  for (int it = 0; it < 3; ++it) {
    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    const int out = net.forward_tape(t, bd, t.constant(rng.normal_vec(5)));
    t.backward(t.sq_norm(out));
    opt.apply(net, t, bd);
  }
  save_teacher(net, path, &opt);

  TeacherOpt opt2(net);
  const TeacherNet loaded = load_teacher(path, &opt2);
  CHECK(loaded.dims == net.dims);
  CHECK(loaded.head == net.head);
  CHECK(loaded.act == net.act);
  CHECK(loaded.act_slope == net.act_slope);
  const Vec probe = rng.normal_vec(5);
  CHECK(loaded.forward(probe) == net.forward(probe));
  CHECK(opt2.hp.lr == 2e-3);
  CHECK(opt2.hp.weight_decay == 1e-3);
  REQUIRE(opt2.w_buf.size() == opt.w_buf.size());
  for (std::size_t l = 0; l < opt.w_buf.size(); ++l) {
    CHECK(opt2.w_buf[l].t == opt.w_buf[l].t);
    CHECK(opt2.w_buf[l].m == opt.w_buf[l].m);
    CHECK(opt2.w_buf[l].v == opt.w_buf[l].v);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_teacher("/nonexistent/teacher.ckpt"), Error);
}
