#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "last/data.hpp"
#include "last/error.hpp"
#include "last/greedy.hpp"
#include "last/learners.hpp"
#include "last/numerics.hpp"
#include "last/rng.hpp"
#include "last/tape.hpp"
#include "last/teacher_net.hpp"

namespace last {

/// Linear learner family taught by parameterized teachers: Lsr with a
/// scalar label or the multiclass linear head with a K-vector label.
struct ParamLearnerSpec {
  LearnerKind kind = LearnerKind::MulticlassLinear;
  std::size_t d = 0;
  std::size_t K = 2;   // classes (MulticlassLinear)
  double lambda = 0.0;
  double init_sd = 5e-2;  // students start at w* + N(0, sd^2)

  std::size_t weight_len() const {
    return kind == LearnerKind::Lsr ? d : d * K;
  }
  std::size_t label_len() const { return kind == LearnerKind::Lsr ? 1 : K; }

  TeachCtx ctx() const { return {kind, lambda, K}; }

  /// Pool label in this learner's label representation.
  Vec pool_label(const Pool& pool, std::size_t i) const {
    if (kind == LearnerKind::MulticlassLinear &&
        pool.label_kind == LabelKind::BinaryPm1)
      return pool.onehot2(i);
    return pool.examples[i].y;
  }

  Vec prediction(const Vec& x, const Vec& w) const {
    if (kind == LearnerKind::Lsr) return Vec{dot(w, x)};
    return softmax(mclinear_logits(w, K, x));
  }
};

// ---------------------------------------------------------------------------
// State features
// ---------------------------------------------------------------------------

/// Omniscient state layout: [x | ytilde | flat(w) | flat(w*)? | prediction].
inline std::size_t omniscient_state_dim(const ParamLearnerSpec& spec,
                                        bool include_target) {
  return spec.d + spec.label_len() + spec.weight_len() +
         (include_target ? spec.weight_len() : 0) + spec.label_len();
}

inline Vec build_state_omniscient(const Vec& x, const Vec& ytilde, const Vec& w,
                                  const Vec* wstar, const Vec& prediction) {
  Vec s;
  s.reserve(x.size() + ytilde.size() + w.size() + (wstar ? wstar->size() : 0) +
            prediction.size());
  s.insert(s.end(), x.begin(), x.end());
  s.insert(s.end(), ytilde.begin(), ytilde.end());
  s.insert(s.end(), w.begin(), w.end());
  if (wstar) s.insert(s.end(), wstar->begin(), wstar->end());
  s.insert(s.end(), prediction.begin(), prediction.end());
  return s;
}

/// Policy-gradient state: [flat(w) | per action a: <w* - w, -eta grad l(x,a|w)>].
inline Vec build_state_pg(const Vec& w, const Vec& wstar, const Vec& x,
                          const Vec& ytilde, double eta,
                          const std::vector<Vec>& actions, const TeachCtx& ctx) {
  (void)ytilde;
  Vec s = w;
  const Vec disp = sub(wstar, w);
  for (const Vec& a : actions) {
    const Vec g = ctx.grad(x, a, w);
    s.push_back(dot(disp, scale(g, -eta)));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shared rollout machinery
// ---------------------------------------------------------------------------

/// Produces the training label for a drawn example given the current
/// learner weights.
using Labeler = std::function<Vec(const Example&, const Vec& ytilde, const Vec& w)>;

inline Labeler identity_labeler() {
  return [](const Example&, const Vec& ytilde, const Vec&) { return ytilde; };
}

/// Deterministic labeler for a trained teacher (head applied).
inline Labeler teacher_labeler(const TeacherNet& net, const ParamLearnerSpec& spec,
                               const Vec* wstar, double alpha_residual = 1.0) {
  return [&net, spec, wstar, alpha_residual](const Example& e, const Vec& yt,
                                             const Vec& w) {
    const Vec state =
        build_state_omniscient(e.x, yt, w, wstar, spec.prediction(e.x, w));
    const Vec out = net.forward(state);
    switch (net.head) {
      case TeacherNet::Head::Label:
        return spec.kind == LearnerKind::Lsr ? out : softmax(out);
      case TeacherNet::Head::ResidualLabel: {
        Vec y = scale(softmax(out), 1.0 - alpha_residual);
        axpy(y, alpha_residual, yt);
        return y;
      }
      default:
        throw Error("teacher_labeler: head is not a label head");
    }
  };
}

struct RollCurves {
  Vec dist;      // per-iteration |w - w*| when w* is provided
  Vec val_loss;  // per-iteration mean loss on a validation pool, if any
};

/// Run `steps` teaching iterations: draw a batch, label it, apply the
/// averaged SGD step. Identical seeds and labelers give bit-identical
/// trajectories, which the reduction tests rely on.
inline Vec roll_teach(const Pool& pool, const ParamLearnerSpec& spec, Vec w,
                      double eta, std::size_t steps, std::size_t batch,
                      const Labeler& labeler, SeededRng& rng,
                      const Vec* wstar = nullptr, const Pool* val = nullptr,
                      RollCurves* curves = nullptr) {
  require(batch > 0, "roll_teach: batch must be positive");
  const TeachCtx ctx = spec.ctx();
  for (std::size_t t = 0; t < steps; ++t) {
    Vec gsum(w.size(), 0.0);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t idx = rng.uniform_index(pool.size());
      const Example& e = pool.examples[idx];
      const Vec yt = spec.pool_label(pool, idx);
      const Vec y = labeler(e, yt, w);
      axpy(gsum, 1.0 / double(batch), ctx.grad(e.x, y, w));
    }
    axpy(w, -eta, gsum);
    if (curves) {
      if (wstar) curves->dist.push_back(dist2(w, *wstar));
      if (val) {
        double l = 0.0;
        for (std::size_t i = 0; i < val->size(); ++i)
          l += ctx.loss(val->examples[i].x, spec.pool_label(*val, i), w) /
               double(val->size());
        curves->val_loss.push_back(l);
      }
    }
  }
  return w;
}

/// Classification accuracy of a linear learner over a pool.
inline double pool_accuracy(const Pool& pool, const ParamLearnerSpec& spec,
                            const Vec& w) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Example& e = pool.examples[i];
    if (spec.kind == LearnerKind::Lsr) continue;
    const Vec logits = mclinear_logits(w, spec.K, e.x);
    std::size_t pred = 0;
    for (std::size_t k = 1; k < spec.K; ++k)
      if (logits[k] > logits[pred]) pred = k;
    const Vec yt = spec.pool_label(pool, i);
    std::size_t truth = 0;
    for (std::size_t k = 1; k < spec.K; ++k)
      if (yt[k] > yt[truth]) truth = k;
    if (pred == truth) ++correct;
  }
  return pool.size() ? double(correct) / double(pool.size()) : 0.0;
}

inline Vec init_student(const Vec& wstar, double sd, SeededRng& rng) {
  Vec w = wstar;
  for (auto& v : w) v += sd * rng.normal();
  return w;
}

// ---------------------------------------------------------------------------
// Episode configuration shared by the trainers
// ---------------------------------------------------------------------------

struct EpisodeConfig {
  std::size_t horizon = 100;  // T (policy-gradient rollouts)
  double gamma = 0.999;
  double baseline = -0.1;
  std::size_t students = 10;
  double reset_rate = 0.2;
  std::size_t unroll = 20;  // v
  double decay = 0.95;      // per-step weight decay^(v-t) in unrolled losses

  void validate() const {
    require(horizon > 0, "EpisodeConfig: horizon must be positive");
    require(gamma > 0.0 && gamma <= 1.0, "EpisodeConfig: gamma must be in (0,1]");
    require(unroll >= 1, "EpisodeConfig: unroll must be >= 1");
    require(students >= 1, "EpisodeConfig: need at least one student");
  }
};

struct TrainLogRow {
  std::size_t episode = 0;
  double objective = 0.0;  // unrolled loss or mean episode reward
  double eval_dist = 0.0;
  bool has_eval = false;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double eval_initial = 0.0;  // fixed-seed v-step eval before training
  double eval_final = 0.0;
};

// ---------------------------------------------------------------------------
// Unrolled omniscient training (backprop through v learner steps)
// ---------------------------------------------------------------------------

struct UnrolledCfg {
  EpisodeConfig ep;
  std::size_t episodes = 1000;
  AdamHyper adam{1e-3, 0.9, 0.999, 1e-8, 1e-4};
  double learner_eta = 5e-4;
  std::size_t batch = 1;        // learner batch inside a step
  bool include_target = true;   // w* in the state (omniscient); off for BLAST
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
};

namespace detail {

/// One learner SGD update expressed on the tape; returns the new weight
/// node. The teacher's label node enters through `label`.
inline int learner_step_tape(Tape& t, const ParamLearnerSpec& spec, int w, int x_const,
                             int label, double eta, std::size_t batch_denom = 1) {
  int grad;
  if (spec.kind == LearnerKind::Lsr) {
    const int pred = t.dot(w, x_const);
    const int resid = t.sub(pred, label);
    grad = t.smul(resid, x_const);
  } else {
    const int logits = t.affine(w, spec.K, spec.d, x_const);
    const int p = t.softmax(logits);
    const int delta = t.sub(p, label);
    grad = t.outer(delta, x_const);
  }
  if (spec.lambda != 0.0) grad = t.add(grad, t.scale(w, spec.lambda));
  return t.sub(w, t.scale(grad, eta / double(batch_denom)));
}

/// Teacher label node from the current state (head applied).
inline int teacher_label_tape(Tape& t, const TeacherNet& net,
                              const TeacherNet::Binding& bd, int state,
                              const ParamLearnerSpec& spec, const Vec& ytilde,
                              double alpha_residual) {
  const int out = net.forward_tape(t, bd, state);
  switch (net.head) {
    case TeacherNet::Head::Label:
      return spec.kind == LearnerKind::Lsr ? out : t.softmax(out);
    case TeacherNet::Head::ResidualLabel: {
      const int soft = t.scale(t.softmax(out), 1.0 - alpha_residual);
      return t.add(soft, t.constant(scale(ytilde, alpha_residual)));
    }
    default:
      throw Error("teacher_label_tape: head is not a label head");
  }
}

inline int state_tape(Tape& t, const Vec& x, const Vec& ytilde, int w_node,
                      const Vec* wstar, int pred_node) {
  std::vector<int> parts{t.constant(x), t.constant(ytilde), w_node};
  if (wstar) parts.push_back(t.constant(*wstar));
  parts.push_back(pred_node);
  return t.concat(parts);
}

inline int prediction_tape(Tape& t, const ParamLearnerSpec& spec, int w, int x_const) {
  if (spec.kind == LearnerKind::Lsr) return t.dot(w, x_const);
  return t.softmax(t.affine(w, spec.K, spec.d, x_const));
}

}  // namespace detail

/// Fixed-seed v-step evaluation distance used for train-progress logging.
inline double eval_unroll_distance(const TeacherNet& net, const Pool& pool,
                                   const ParamLearnerSpec& spec, const Vec& wstar,
                                   double eta, std::size_t v, std::uint64_t seed,
                                   bool include_target = true,
                                   double alpha_residual = 1.0) {
  SeededRng rng(seed);
  Vec w0 = init_student(wstar, spec.init_sd, rng);
  const Labeler lab =
      teacher_labeler(net, spec, include_target ? &wstar : nullptr, alpha_residual);
  const Vec w = roll_teach(pool, spec, w0, eta, v, 1, lab, rng, &wstar);
  return dist2(w, wstar);
}

/// Train a label-head teacher by unrolling v learner SGD steps onto the
/// tape and descending the decay-weighted sum of per-step parameter
/// discrepancies with Adam.
inline TrainResult train_unrolled_omniscient(TeacherNet& net, TeacherOpt& opt,
                                             const Pool& pool,
                                             const ParamLearnerSpec& spec,
                                             const Vec& wstar,
                                             const UnrolledCfg& cfg) {
  cfg.ep.validate();
  require(net.head == TeacherNet::Head::Label,
          "train_unrolled_omniscient: teacher head must be Label");
  require(net.input_dim() == omniscient_state_dim(spec, cfg.include_target),
          "train_unrolled_omniscient: teacher input dim does not match the state");

  SeededRng base(cfg.seed);
  SeededRng init_rng = base.child(1);
  std::vector<SeededRng> streams;
  std::vector<Vec> students;
  for (std::size_t s = 0; s < cfg.ep.students; ++s) {
    streams.push_back(base.child(100 + s));
    students.push_back(init_student(wstar, spec.init_sd, init_rng));
  }
  const std::size_t n_reset =
      std::min(cfg.ep.students,
               std::size_t(std::ceil(cfg.ep.reset_rate * double(cfg.ep.students))));

  TrainResult result;
  const std::uint64_t eval_seed = cfg.seed ^ 0x5eedULL;
  result.eval_initial = eval_unroll_distance(net, pool, spec, wstar, cfg.learner_eta,
                                             cfg.ep.unroll, eval_seed, cfg.include_target);

  const Vec* state_target = cfg.include_target ? &wstar : nullptr;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    const int wstar_const = t.constant(wstar);
    int total = -1;
    std::vector<int> final_w(cfg.ep.students);
    for (std::size_t s = 0; s < cfg.ep.students; ++s) {
      int w = t.var(students[s]);
      for (std::size_t step = 0; step < cfg.ep.unroll; ++step) {
        int gsum = -1;
        for (std::size_t bi = 0; bi < cfg.batch; ++bi) {
          const std::size_t idx = streams[s].uniform_index(pool.size());
          const Example& e = pool.examples[idx];
          const Vec yt = spec.pool_label(pool, idx);
          const int xc = t.constant(e.x);
          const int pred = detail::prediction_tape(t, spec, w, xc);
          const int state = detail::state_tape(t, e.x, yt, w, state_target, pred);
          const int label = detail::teacher_label_tape(t, net, bd, state, spec, yt, 1.0);
          const int wn = detail::learner_step_tape(t, spec, w, xc, label,
                                                   cfg.learner_eta, cfg.batch);
          // batch > 1: accumulate the per-example step offsets
          const int offset = t.sub(wn, w);
          gsum = gsum < 0 ? offset : t.add(gsum, offset);
        }
        w = t.add(w, gsum);
        const double weight =
            std::pow(cfg.ep.decay, double(cfg.ep.unroll - 1 - step));
        const int term = t.scale(t.sq_norm(t.sub(w, wstar_const)), weight);
        total = total < 0 ? term : t.add(total, term);
      }
      final_w[s] = w;
    }
    const int loss = t.scale(total, 1.0 / double(cfg.ep.students));
    const double loss_val = t.val(loss)[0];
    if (!std::isfinite(loss_val))
      throw Error("train_unrolled_omniscient: non-finite loss at episode " +
                  std::to_string(ep));
    t.backward(loss);
    opt.apply(net, t, bd);

    for (std::size_t s = 0; s < cfg.ep.students; ++s) students[s] = t.val(final_w[s]);
    for (std::size_t s = 0; s < n_reset; ++s)
      students[s] = init_student(wstar, spec.init_sd, init_rng);

    TrainLogRow row{ep, loss_val, 0.0, false};
    if (cfg.eval_every && (ep % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      row.eval_dist = eval_unroll_distance(net, pool, spec, wstar, cfg.learner_eta,
                                           cfg.ep.unroll, eval_seed, cfg.include_target);
      row.has_eval = true;
    }
    result.log.push_back(row);
  }
  result.eval_final = eval_unroll_distance(net, pool, spec, wstar, cfg.learner_eta,
                                           cfg.ep.unroll, eval_seed, cfg.include_target);
  return result;
}

// ---------------------------------------------------------------------------
// Policy-gradient omniscient training (REINFORCE over a discrete label
// action space, per-step reward -|w - w*|^2)
// ---------------------------------------------------------------------------

struct PgCfg {
  EpisodeConfig ep;
  std::size_t episodes = 300;
  AdamHyper adam{1e-3, 0.9, 0.999, 1e-8, 0.0};  // no weight decay here
  double learner_eta = 5e-4;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
};

inline Vec pg_policy_logits(const TeacherNet& net, const Vec& state) {
  return net.forward(state);
}

inline std::size_t sample_categorical(const Vec& probs, SeededRng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

/// Greedy-policy (argmax) evaluation distance after `steps` iterations.
inline double eval_pg_distance(const TeacherNet& net, const Pool& pool,
                               const ParamLearnerSpec& spec, const Vec& wstar,
                               const std::vector<Vec>& actions, double eta,
                               std::size_t steps, std::uint64_t seed) {
  SeededRng rng(seed);
  Vec w = init_student(wstar, spec.init_sd, rng);
  const TeachCtx ctx = spec.ctx();
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t idx = rng.uniform_index(pool.size());
    const Example& e = pool.examples[idx];
    const Vec yt = spec.pool_label(pool, idx);
    const Vec state = build_state_pg(w, wstar, e.x, yt, eta, actions, ctx);
    const Vec logits = net.forward(state);
    std::size_t a = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[a]) a = i;
    axpy(w, -eta, ctx.grad(e.x, actions[a], w));
  }
  return dist2(w, wstar);
}

/// REINFORCE with per-step reward r_t = -|w^t - w*|^2 and the estimator
///   (1/N) sum_i sum_t grad log pi(a_t|s_t) sum_{tau>=t} gamma^tau (r_tau - b).
/// Students are fully reset every episode; actions are sampled from the
/// softmax policy during training and argmax at evaluation.
inline TrainResult train_pg_omniscient(TeacherNet& net, TeacherOpt& opt,
                                       const Pool& pool, const ParamLearnerSpec& spec,
                                       const Vec& wstar,
                                       const std::vector<Vec>& actions,
                                       const PgCfg& cfg) {
  cfg.ep.validate();
  require(!actions.empty(), "train_pg_omniscient: empty action space");
  require(net.output_dim() == actions.size(),
          "train_pg_omniscient: teacher output dim must match the action count");
  const TeachCtx ctx = spec.ctx();

  SeededRng base(cfg.seed);
  SeededRng init_rng = base.child(1);
  const std::uint64_t eval_seed = cfg.seed ^ 0x5eedULL;

  TrainResult result;
  result.eval_initial = eval_pg_distance(net, pool, spec, wstar, actions,
                                         cfg.learner_eta, cfg.ep.horizon, eval_seed);

  struct StepRec {
    Vec state;
    std::size_t action;
  };

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    std::vector<std::vector<StepRec>> recs(cfg.ep.students);
    std::vector<Vec> rewards(cfg.ep.students);
    double mean_reward = 0.0;

    for (std::size_t s = 0; s < cfg.ep.students; ++s) {
      SeededRng stream = base.child(100 + ep * cfg.ep.students + s);
      Vec w = init_student(wstar, spec.init_sd, init_rng);
      for (std::size_t t = 0; t < cfg.ep.horizon; ++t) {
        const std::size_t idx = stream.uniform_index(pool.size());
        const Example& e = pool.examples[idx];
        const Vec yt = spec.pool_label(pool, idx);
        Vec state = build_state_pg(w, wstar, e.x, yt, cfg.learner_eta, actions, ctx);
        const Vec probs = softmax(net.forward(state));
        const std::size_t a = sample_categorical(probs, stream);
        axpy(w, -cfg.learner_eta, ctx.grad(e.x, actions[a], w));
        recs[s].push_back({std::move(state), a});
        rewards[s].push_back(-sq_norm(sub(w, wstar)));
      }
      for (double r : rewards[s]) mean_reward += r / double(cfg.ep.students);
    }

    // sum_{tau >= t} gamma^tau (r_tau - b), tau 1-based as displayed
    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    int loss = -1;
    for (std::size_t s = 0; s < cfg.ep.students; ++s) {
      const std::size_t T = cfg.ep.horizon;
      Vec coef(T);
      double tail = 0.0;
      for (std::size_t step = T; step-- > 0;) {
        tail += std::pow(cfg.ep.gamma, double(step + 1)) *
                (rewards[s][step] - cfg.ep.baseline);
        coef[step] = tail;
      }
      for (std::size_t step = 0; step < T; ++step) {
        Vec onehot(actions.size(), 0.0);
        onehot[recs[s][step].action] = 1.0;
        const int logits = net.forward_tape(t, bd, t.constant(recs[s][step].state));
        const int nll = t.cross_entropy(t.softmax(logits), t.constant(onehot));
        const int term = t.scale(nll, coef[step] / double(cfg.ep.students));
        loss = loss < 0 ? term : t.add(loss, term);
      }
    }
    const double loss_val = t.val(loss)[0];
    if (!std::isfinite(loss_val))
      throw Error("train_pg_omniscient: non-finite objective at episode " +
                  std::to_string(ep));
    t.backward(loss);
    opt.apply(net, t, bd);

    TrainLogRow row{ep, mean_reward, 0.0, false};
    if (cfg.eval_every && (ep % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      row.eval_dist = eval_pg_distance(net, pool, spec, wstar, actions,
                                       cfg.learner_eta, cfg.ep.horizon, eval_seed);
      row.has_eval = true;
    }
    result.log.push_back(row);
  }
  result.eval_final = eval_pg_distance(net, pool, spec, wstar, actions,
                                       cfg.learner_eta, cfg.ep.horizon, eval_seed);
  return result;
}

// ---------------------------------------------------------------------------
// BLAST: black-box teaching. The teacher never sees w*; the surrogate is
// the learner loss with ground-truth labels on a validation set (unrolled)
// or a hold-out reward (policy gradient).
// ---------------------------------------------------------------------------

struct BlastUnrolledCfg {
  EpisodeConfig ep;
  std::size_t episodes = 300;
  AdamHyper adam{1e-3, 0.9, 0.999, 1e-8, 1e-4};
  double learner_eta = 1e-3;
  std::size_t batch_r = 20;  // teaching batch from D_r
  std::size_t batch_a = 20;  // surrogate batch from D_a
  double alpha_residual = 0.5;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
};

/// Mean ground-truth loss of the learner on a pool.
inline double surrogate_loss(const Pool& pool, const ParamLearnerSpec& spec,
                             const Vec& w) {
  const TeachCtx ctx = spec.ctx();
  double l = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    l += ctx.loss(pool.examples[i].x, spec.pool_label(pool, i), w) /
         double(pool.size());
  return l;
}

/// Unrolled BLAST: labels come from the residual head alpha y~ + (1-alpha) y',
/// the objective is the decay-weighted ground-truth loss on batches from
/// D_a after each unrolled step. wstar is used only to initialize students
/// (and for diagnostics); it never enters the teacher state.
inline TrainResult blast_unrolled(TeacherNet& net, TeacherOpt& opt, const Pool& d_r,
                                  const Pool& d_a, const ParamLearnerSpec& spec,
                                  const Vec& wstar, const BlastUnrolledCfg& cfg) {
  cfg.ep.validate();
  require(cfg.alpha_residual > 0.0 && cfg.alpha_residual <= 1.0,
          "blast_unrolled: alpha_residual must be in (0, 1]");
  require(net.head == TeacherNet::Head::ResidualLabel,
          "blast_unrolled: teacher head must be ResidualLabel");
  require(net.input_dim() == omniscient_state_dim(spec, /*include_target=*/false),
          "blast_unrolled: teacher input dim does not match the black-box state");
  require(d_a.size() > 0, "blast_unrolled: empty validation pool");

  SeededRng base(cfg.seed);
  SeededRng init_rng = base.child(1);
  std::vector<SeededRng> streams;
  std::vector<Vec> students;
  for (std::size_t s = 0; s < cfg.ep.students; ++s) {
    streams.push_back(base.child(100 + s));
    students.push_back(init_student(wstar, spec.init_sd, init_rng));
  }
  const std::size_t n_reset =
      std::min(cfg.ep.students,
               std::size_t(std::ceil(cfg.ep.reset_rate * double(cfg.ep.students))));

  auto eval_surrogate = [&](std::uint64_t seed) {
    SeededRng rng(seed);
    Vec w0 = init_student(wstar, spec.init_sd, rng);
    const Labeler lab = teacher_labeler(net, spec, nullptr, cfg.alpha_residual);
    const Vec w = roll_teach(d_r, spec, w0, cfg.learner_eta, cfg.ep.unroll,
                             cfg.batch_r, lab, rng);
    return surrogate_loss(d_a, spec, w);
  };

  TrainResult result;
  const std::uint64_t eval_seed = cfg.seed ^ 0x5eedULL;
  result.eval_initial = eval_surrogate(eval_seed);

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    int total = -1;
    std::vector<int> final_w(cfg.ep.students);
    for (std::size_t s = 0; s < cfg.ep.students; ++s) {
      int w = t.var(students[s]);
      for (std::size_t step = 0; step < cfg.ep.unroll; ++step) {
        int gsum = -1;
        for (std::size_t bi = 0; bi < cfg.batch_r; ++bi) {
          const std::size_t idx = streams[s].uniform_index(d_r.size());
          const Example& e = d_r.examples[idx];
          const Vec yt = spec.pool_label(d_r, idx);
          const int xc = t.constant(e.x);
          const int pred = detail::prediction_tape(t, spec, w, xc);
          const int state = detail::state_tape(t, e.x, yt, w, nullptr, pred);
          const int label = detail::teacher_label_tape(t, net, bd, state, spec, yt,
                                                       cfg.alpha_residual);
          const int wn = detail::learner_step_tape(t, spec, w, xc, label,
                                                   cfg.learner_eta, cfg.batch_r);
          const int offset = t.sub(wn, w);
          gsum = gsum < 0 ? offset : t.add(gsum, offset);
        }
        w = t.add(w, gsum);
        // surrogate: ground-truth loss on a batch from D_a at the new w
        int lsum = -1;
        for (std::size_t bi = 0; bi < cfg.batch_a; ++bi) {
          const std::size_t idx = streams[s].uniform_index(d_a.size());
          const Example& e = d_a.examples[idx];
          const Vec yt = spec.pool_label(d_a, idx);
          int term;
          if (spec.kind == LearnerKind::Lsr) {
            const int resid = t.sub(t.dot(w, t.constant(e.x)), t.constant(yt));
            term = t.scale(t.sq_norm(resid), 0.5);
          } else {
            const int logits = t.affine(w, spec.K, spec.d, t.constant(e.x));
            term = t.cross_entropy(t.softmax(logits), t.constant(yt));
          }
          lsum = lsum < 0 ? term : t.add(lsum, term);
        }
        const double weight =
            std::pow(cfg.ep.decay, double(cfg.ep.unroll - 1 - step)) /
            double(cfg.batch_a);
        const int term = t.scale(lsum, weight);
        total = total < 0 ? term : t.add(total, term);
      }
      final_w[s] = w;
    }
    const int loss = t.scale(total, 1.0 / double(cfg.ep.students));
    const double loss_val = t.val(loss)[0];
    if (!std::isfinite(loss_val))
      throw Error("blast_unrolled: non-finite loss at episode " + std::to_string(ep));
    t.backward(loss);
    opt.apply(net, t, bd);

    for (std::size_t s = 0; s < cfg.ep.students; ++s) students[s] = t.val(final_w[s]);
    for (std::size_t s = 0; s < n_reset; ++s)
      students[s] = init_student(wstar, spec.init_sd, init_rng);

    TrainLogRow row{ep, loss_val, 0.0, false};
    if (cfg.eval_every && (ep % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      row.eval_dist = eval_surrogate(eval_seed);
      row.has_eval = true;
    }
    result.log.push_back(row);
  }
  result.eval_final = eval_surrogate(eval_seed);
  return result;
}

struct BlastPgCfg {
  EpisodeConfig ep;
  std::size_t episodes = 200;
  AdamHyper adam{1e-3, 0.9, 0.999, 1e-8, 0.0};
  double learner_eta = 1e-3;
  std::vector<double> mu_grid{0.5, 0.625, 0.75, 0.875, 1.0};
  enum class PSource { Uniform, Prediction } p_source = PSource::Uniform;
  enum class Reward { HoldoutAccuracy, IterationsToAccuracy } reward =
      Reward::HoldoutAccuracy;
  double zeta = 0.9;  // target accuracy for reward mode (ii)
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
};

/// Black-box state: [x | ytilde | flat(w) | prediction].
inline Vec build_state_blast(const Vec& x, const Vec& ytilde, const Vec& w,
                             const Vec& prediction) {
  return build_state_omniscient(x, ytilde, w, nullptr, prediction);
}

/// Label y = mu ytilde + (1 - mu) p with p either the uniform distribution
/// or the learner's prediction.
inline Vec mu_label(double mu, const Vec& ytilde, const Vec& prediction,
                    BlastPgCfg::PSource source, std::size_t K) {
  Vec p = source == BlastPgCfg::PSource::Uniform ? Vec(K, 1.0 / double(K))
                                                 : prediction;
  Vec y = scale(std::move(p), 1.0 - mu);
  axpy(y, mu, ytilde);
  return y;
}

struct BlastPgRollout {
  std::vector<Vec> states;
  std::vector<std::size_t> actions;
  double reward = 0.0;
  Vec final_w;
};

inline BlastPgRollout blast_pg_rollout(const TeacherNet& net, const Pool& train,
                                       const Pool& holdout,
                                       const ParamLearnerSpec& spec, Vec w,
                                       const BlastPgCfg& cfg, SeededRng& rng,
                                       bool sample_actions) {
  const TeachCtx ctx = spec.ctx();
  BlastPgRollout roll;
  std::size_t reached = cfg.ep.horizon;
  for (std::size_t t = 0; t < cfg.ep.horizon; ++t) {
    const std::size_t idx = rng.uniform_index(train.size());
    const Example& e = train.examples[idx];
    const Vec yt = spec.pool_label(train, idx);
    const Vec pred = spec.prediction(e.x, w);
    Vec state = build_state_blast(e.x, yt, w, pred);
    const Vec logits = net.forward(state);
    std::size_t a;
    if (sample_actions) {
      a = sample_categorical(softmax(logits), rng);
    } else {
      a = 0;
      for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[a]) a = i;
    }
    const Vec y = mu_label(cfg.mu_grid[a], yt, pred, cfg.p_source, spec.K);
    axpy(w, -cfg.learner_eta, ctx.grad(e.x, y, w));
    roll.states.push_back(std::move(state));
    roll.actions.push_back(a);
    if (cfg.reward == BlastPgCfg::Reward::IterationsToAccuracy &&
        reached == cfg.ep.horizon &&
        pool_accuracy(holdout, spec, w) >= cfg.zeta)
      reached = t + 1;
  }
  roll.reward = cfg.reward == BlastPgCfg::Reward::HoldoutAccuracy
                    ? pool_accuracy(holdout, spec, w)
                    : -double(reached);
  roll.final_w = std::move(w);
  return roll;
}

/// Black-box policy gradient over a discretized mu grid with a terminal
/// hold-out reward and a batch-mean baseline.
inline TrainResult blast_pg(TeacherNet& net, TeacherOpt& opt, const Pool& train,
                            const Pool& holdout, const ParamLearnerSpec& spec,
                            const Vec& wstar, const BlastPgCfg& cfg) {
  cfg.ep.validate();
  require(holdout.size() > 0, "blast_pg: empty holdout pool");
  require(!cfg.mu_grid.empty(), "blast_pg: empty mu grid");
  require(net.output_dim() == cfg.mu_grid.size(),
          "blast_pg: teacher output dim must match the mu grid");

  SeededRng base(cfg.seed);
  SeededRng init_rng = base.child(1);
  const std::uint64_t eval_seed = cfg.seed ^ 0x5eedULL;

  auto eval_reward = [&](std::uint64_t seed) {
    SeededRng rng(seed);
    Vec w0 = init_student(wstar, spec.init_sd, rng);
    return blast_pg_rollout(net, train, holdout, spec, std::move(w0), cfg, rng,
                            /*sample_actions=*/false)
        .reward;
  };

  TrainResult result;
  result.eval_initial = eval_reward(eval_seed);

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    std::vector<BlastPgRollout> rolls;
    double mean_reward = 0.0;
    for (std::size_t s = 0; s < cfg.ep.students; ++s) {
      SeededRng stream = base.child(100 + ep * cfg.ep.students + s);
      Vec w0 = init_student(wstar, spec.init_sd, init_rng);
      rolls.push_back(blast_pg_rollout(net, train, holdout, spec, std::move(w0), cfg,
                                       stream, /*sample_actions=*/true));
      mean_reward += rolls.back().reward / double(cfg.ep.students);
    }

    Tape t;
    const TeacherNet::Binding bd = net.bind(t);
    int loss = -1;
    for (const auto& roll : rolls) {
      const double coef = (roll.reward - mean_reward) / double(cfg.ep.students);
      if (coef == 0.0) continue;
      for (std::size_t step = 0; step < roll.states.size(); ++step) {
        Vec onehot(cfg.mu_grid.size(), 0.0);
        onehot[roll.actions[step]] = 1.0;
        const int logits = net.forward_tape(t, bd, t.constant(roll.states[step]));
        const int nll = t.cross_entropy(t.softmax(logits), t.constant(onehot));
        const int term = t.scale(nll, coef);
        loss = loss < 0 ? term : t.add(loss, term);
      }
    }
    if (loss >= 0) {
      const double loss_val = t.val(loss)[0];
      if (!std::isfinite(loss_val))
        throw Error("blast_pg: non-finite objective at episode " + std::to_string(ep));
      t.backward(loss);
      opt.apply(net, t, bd);
    }

    TrainLogRow row{ep, mean_reward, 0.0, false};
    if (cfg.eval_every && (ep % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      row.eval_dist = eval_reward(eval_seed);
      row.has_eval = true;
    }
    result.log.push_back(row);
  }
  result.eval_final = eval_reward(eval_seed);
  return result;
}

}  // namespace last
