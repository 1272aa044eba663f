#include "hdlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hdlm/sampler.hpp"

namespace hdlm {

double sgd_step(param_set& params, const param_set& grads, double lr, double clip, double momentum, sgd_state& st) {
  if (!(lr > 0)) throw config_error("sgd_step: lr must be > 0");
  if (st.velocity.t.size() != params.t.size()) st.velocity = params.zeros_like();
  double norm = grads.norm();
  if (!std::isfinite(norm)) throw numeric_error("sgd_step: non-finite gradient norm");
  double scale = (clip > 0 && norm > clip) ? clip / norm : 1.0;
  for (size_t i = 0; i < params.t.size(); ++i) {
    auto& p = params.t[i].v;
    auto& v = st.velocity.t[i].v;
    const auto& g = grads.t[i].v;
    for (size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + scale * g[k];
      p[k] -= lr * v[k];
    }
  }
  return norm;
}

train_setup make_train_setup(const run_config& cfg) {
  cfg.validate();
  train_setup ts{cfg, hyperschedule::build(cfg.schedule_params()), {}, {}, vocab(cfg.num_real + 1), {}};
  ts.sigma = loglinear_sigma(ts.hs.levels(), cfg.sigma_min, cfg.sigma_max);
  ts.alpha = linear_alpha(ts.hs.levels());
  for (int t = 0; t < ts.hs.T(); ++t) ts.parts.push_back(ts.hs.partition_at(t));
  return ts;
}

namespace {

struct noisy_row {
  sequence x;
  std::vector<uint8_t> flags;
  std::vector<double> p_mask;
};

noisy_row corrupt_row(const train_setup& ts, const sequence& y, int t, const rng_stream& rng) {
  const int* row = ts.hs.row(t);
  const int d = ts.hs.d();
  noisy_row nr;
  nr.p_mask.resize(d);
  if (ts.cfg.has_gamma) {
    nr.x = corrupt_gamma_levels(y, row, t, ts.sigma, ts.cfg.gamma, ts.voc, rng);
    nr.flags.assign(d, flag_unchanged);
    for (int i = 0; i < d; ++i) {
      if (nr.x[i] == ts.voc.mask_id())
        nr.flags[i] = flag_masked;
      else if (nr.x[i] != y[i])
        nr.flags[i] = flag_shuffled;
      nr.p_mask[i] = p_mask_gamma(ts.cfg.gamma, ts.sigma.at(row[i]));
    }
  } else {
    auto c = corrupt_epsilon_levels(y, row, t, ts.cfg.epsilon, ts.alpha, ts.voc, rng);
    nr.x = std::move(c.tokens);
    nr.flags = std::move(c.flags);
    for (int i = 0; i < d; ++i) nr.p_mask[i] = 1 - ts.alpha.at(row[i]);
  }
  return nr;
}

double active_weight(const train_setup& ts, const noisy_row& nr, int i) {
  std::vector<uint8_t> f{nr.flags[i]};
  std::vector<double> p{nr.p_mask[i]};
  if (ts.cfg.has_gamma) return gamma_weights(f, p, ts.cfg.lambda)[0];
  return hdce_weights(f, p, ts.cfg.lambda, ts.cfg.epsilon)[0];
}

double keep_for(const train_setup& ts, int level) {
  return std::exp(-ts.cfg.gamma * ts.sigma.at(level));
}

}  // namespace

example make_example_at(const train_setup& ts, const sequence& y, int t, const rng_stream& rng) {
  const int d = ts.hs.d();
  const auto mc = ts.cfg.model_config();
  example ex;
  partition p = ts.parts.at(t);
  noisy_row nr = corrupt_row(ts, y, t, rng);
  ex.mask = std::make_unique<attention_mask>(inference_mask(mc.wire, p));
  embed_opts eo{&ts.sigma, ts.cfg.gamma};
  ex.slots = inference_slots(mc, nr.x, ts.hs.row(t), 0, d, eo);
  // settled inputs are clean by definition; the corruption leaves tau = 0 positions unchanged
  ex.slots.mask = ex.mask.get();
  auto rw = ts.cfg.reweight ? position_reweight(d, std::max(1, std::min(ts.hs.params().omega, d)))
                            : std::vector<double>(d, 1.0);
  loss_spec& sp = ex.spec;
  sp.beta1 = ts.cfg.beta1;
  sp.beta2 = ts.cfg.beta2;
  sp.variant = ts.cfg.variant();
  sp.d = d;
  sp.targets.assign(y.begin(), y.end());
  sp.group.assign(d, slot_group::none);
  sp.weight.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    if (j < p.s) {
      sp.group[j] = slot_group::settled;
      sp.weight[j] = rw[j];
    } else if (j < p.s + p.a) {
      sp.group[j] = slot_group::active;
      sp.weight[j] = active_weight(ts, nr, j);
    }
  }
  return ex;
}

example make_example(const train_setup& ts, const sequence& y, const rng_stream& rng) {
  rng_stream r = rng.fork(0x5EED);
  const bool windowed = ts.hs.kind() != hs_kind::flat;
  if (ts.cfg.efficient && windowed) {
    auto steps = pick_interval_steps(ts, r);
    return make_efficient_example(ts, y, steps, rng);
  }
  int t = static_cast<int>(r.below(ts.hs.T()));
  return make_example_at(ts, y, t, rng);
}

std::vector<int> pick_interval_steps(const train_setup& ts, rng_stream& rng) {
  const int d = ts.hs.d(), omega = ts.hs.params().omega, T = ts.hs.T();
  std::vector<int> chosen;
  if (ts.hs.kind() == hs_kind::block) {
    // one random step per block
    std::vector<std::vector<int>> by_block((d + omega - 1) / omega);
    for (int t = 0; t < T; ++t)
      if (ts.parts[t].a > 0) by_block[ts.parts[t].s / omega].push_back(t);
    for (auto& v : by_block)
      if (!v.empty()) chosen.push_back(v[rng.below(v.size())]);
    return chosen;
  }
  std::vector<int> order(T);
  for (int t = 0; t < T; ++t) order[t] = t;
  for (int i = T - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<char> used(d, 0);
  int total = 0;
  for (int t : order) {
    const auto& p = ts.parts[t];
    if (p.a == 0) continue;
    int a = p.s, b = std::min(p.s + omega, d);
    if (total + (b - a) > d) continue;
    bool clash = false;
    for (int i = a; i < b; ++i) clash |= used[i] != 0;
    // starts must be distinct even if ranges are disjoint
    if (clash) continue;
    for (int i = a; i < b; ++i) used[i] = 1;
    total += b - a;
    chosen.push_back(t);
  }
  std::sort(chosen.begin(), chosen.end(), [&](int x, int y) { return ts.parts[x].s < ts.parts[y].s; });
  return chosen;
}

example make_efficient_example(const train_setup& ts, const sequence& y, const std::vector<int>& steps,
                               const rng_stream& rng) {
  const int d = ts.hs.d(), omega = ts.hs.params().omega;
  const auto mc = ts.cfg.model_config();
  const int mask_id = ts.voc.mask_id();
  const bool shifted = mc.wire == wiring::shifted;
  std::vector<int> starts;
  for (int t : steps) starts.push_back(ts.parts.at(t).s);
  hs_kind mk = ts.hs.kind() == hs_kind::block ? hs_kind::block : hs_kind::slide;
  example ex;
  ex.mask = std::make_unique<attention_mask>(training_mask(mc.wire, mk, d, omega, starts));
  slot_batch& b = ex.slots;
  loss_spec& sp = ex.spec;
  sp.beta1 = ts.cfg.beta1;
  sp.beta2 = ts.cfg.beta2;
  sp.variant = ts.cfg.variant();
  sp.d = d;
  auto push = [&](int id, int pos, int level, int target, slot_group g, double w) {
    b.ids.push_back(id);
    b.pos.push_back(pos);
    b.level.push_back(level);
    if (mc.weighted_embedding) b.keep.push_back(keep_for(ts, level));
    sp.targets.push_back(target);
    sp.group.push_back(g);
    sp.weight.push_back(w);
  };
  for (int j = 0; j < d; ++j) {
    int id = shifted ? (j == 0 ? mask_id : y[j - 1]) : y[j];
    push(id, j, 0, y[j], slot_group::settled, 1.0);
  }
  for (size_t n = 0; n < steps.size(); ++n) {
    const int t = steps[n];
    const partition& p = ts.parts[t];
    const int* row = ts.hs.row(t);
    noisy_row nr = corrupt_row(ts, y, t, rng.fork(n));
    const int js = p.s, je = std::min(p.s + omega, d);
    for (int pos = js; pos < je; ++pos) {
      int id, lv;
      if (!shifted) {
        id = nr.x[pos];
        lv = row[pos];
      } else if (pos == js) {
        id = js == 0 ? mask_id : y[js - 1];
        lv = 0;
      } else {
        id = nr.x[pos - 1];
        lv = row[pos - 1];
      }
      bool act = pos < p.s + p.a;
      push(id, pos, lv, y[pos], act ? slot_group::active : slot_group::none, act ? active_weight(ts, nr, pos) : 0.0);
    }
  }
  b.mask = ex.mask.get();
  return ex;
}

step_log batch_loss_grad(const denoiser& m, const train_setup& ts, const std::vector<example>& batch,
                         param_set& grads) {
  (void)ts;
  step_log lg;
  const int V = m.config().vocab;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (size_t n = 0; n < batch.size(); ++n) {
    const example& ex = batch[n];
    loss_terms lt;
    m.forward_backward(
        ex.slots,
        [&](const std::vector<double>& logits, std::vector<double>& dlogits) {
          lt = combined_loss(logits, V, ex.spec, true);
          if (!std::isfinite(lt.total)) throw numeric_error("train: non-finite loss in batch element " + std::to_string(n));
          for (size_t i = 0; i < dlogits.size(); ++i) dlogits[i] = lt.dlogits[i] * inv;
        },
        grads);
    lg.ce_settled += lt.ce_settled * inv;
    lg.active_term += lt.active_term * inv;
    lg.total += lt.total * inv;
  }
  return lg;
}

trainer::trainer(denoiser& m, const run_config& cfg) : m_(m), ts_(make_train_setup(cfg)) {
  grads_ = m_.params().zeros_like();
}

double trainer::lr_at(int step) const {
  const auto& c = ts_.cfg;
  if (c.warmup > 0 && step < c.warmup) return c.lr * (step + 1) / c.warmup;
  double span = std::max(1, c.steps - c.warmup);
  double f = std::clamp((step - c.warmup) / span, 0.0, 1.0);
  return c.lr * (0.1 + 0.9 * 0.5 * (1 + std::cos(std::numbers::pi * f)));
}

step_log trainer::step(const std::vector<sequence>& corpus, int k) {
  if (corpus.empty()) throw config_error("train: empty corpus");
  rng_stream r = rng_stream(ts_.cfg.seed, 0x7EA1).fork(k);
  std::vector<example> batch;
  for (int b = 0; b < ts_.cfg.batch; ++b) {
    const sequence& y = corpus[r.below(corpus.size())];
    if (static_cast<int>(y.size()) != ts_.hs.d()) throw config_error("train: corpus length differs from d");
    batch.push_back(make_example(ts_, y, r.fork(b)));
  }
  grads_.set_zero();
  step_log lg = batch_loss_grad(m_, ts_, batch, grads_);
  lg.step = k;
  lg.lr = lr_at(k);
  lg.grad_norm = sgd_step(m_.params(), grads_, lg.lr, ts_.cfg.clip, ts_.cfg.momentum, opt_);
  return lg;
}

void trainer::run(const std::vector<sequence>& corpus, int steps, const std::function<void(const step_log&)>& on_log) {
  for (int k = 0; k < steps; ++k) {
    step_log lg = step(corpus, k);
    if (on_log) on_log(lg);
  }
}

}  // namespace hdlm
