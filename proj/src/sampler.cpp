#include "hdlm/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace hdlm {

slot_batch inference_slots(const denoiser_config& cfg, const sequence& x, const int* tau_row, int first, int last,
                           const embed_opts& eo) {
  const int mask_id = cfg.vocab - 1;
  slot_batch b;
  for (int j = first; j < last; ++j) {
    int src = cfg.wire == wiring::aligned ? j : j - 1;
    int id = src < 0 ? mask_id : x[src];
    int lv = src < 0 ? 0 : tau_row[src];
    b.ids.push_back(id);
    b.pos.push_back(j);
    b.level.push_back(lv);
    if (cfg.weighted_embedding && eo.sigma) b.keep.push_back(std::exp(-eo.gamma * eo.sigma->at(lv)));
  }
  return b;
}

void denoiser_source::reset() {
  cache_.clear(m_.config().layers);
  window_ = 0;
}

std::vector<double> denoiser_source::active_logits(const sequence& x, const int* tau_row, const partition& p,
                                                   bool use_cache, call_ledger& ledger) {
  const auto& cfg = m_.config();
  const int V = cfg.vocab, s = p.s, e = p.s + p.a;
  ledger.calls += 1;
  if (!use_cache) {
    partition pp{s, p.a, e};
    attention_mask mask = inference_mask(cfg.wire, pp);
    slot_batch b = inference_slots(cfg, x, tau_row, 0, e, eo_);
    b.mask = &mask;
    auto logits = m_.forward(b);
    ledger.query_slots += e;
    return std::vector<double>(logits.begin() + static_cast<size_t>(s) * V, logits.end());
  }
  if (static_cast<int>(cache_.k.size()) != cfg.layers) cache_.clear(cfg.layers);
  if (s < cache_.n) throw numeric_error("sampler: settled prefix shrank under the KV cache");
  const bool first = ledger.calls == 1;
  ledger.cache_hits += cache_.n;
  int appended = s - cache_.n;
  if (appended > 0) {
    slot_batch nb = inference_slots(cfg, x, tau_row, cache_.n, s, eo_);
    m_.cache_append(cache_, nb);
  }
  slot_batch wb = inference_slots(cfg, x, tau_row, s, e, eo_);
  auto logits = m_.cache_window(cache_, wb);
  ledger.query_slots += appended + p.a;
  (void)first;
  return logits;
}

double transfer_prob(double t, double s) {
  if (!(t > 0)) throw config_error("transfer_prob: t must be > 0");
  return std::clamp(1.0 - s / t, 0.0, 1.0);
}

void real_probs(const double* z, int V, double temperature, double* out) {
  const int nr = V - 1;
  double mx = -INFINITY;
  for (int c = 0; c < nr; ++c) mx = std::max(mx, z[c]);
  if (temperature <= 0) {
    for (int c = 0; c < nr; ++c) out[c] = 0;
    for (int c = 0; c < nr; ++c)
      if (z[c] == mx) {
        out[c] = 1;
        break;
      }
    return;
  }
  double s = 0;
  for (int c = 0; c < nr; ++c) {
    out[c] = std::exp((z[c] - mx) / temperature);
    s += out[c];
  }
  for (int c = 0; c < nr; ++c) out[c] /= s;
}

int gumbel_pick(const double* w, int n, rng_stream& r, bool fp32) {
  int best = -1;
  if (fp32) {
    float bs = -1;
    for (int k = 0; k < n; ++k) {
      float u = r.uniform_f32();
      float g = 1e-10f - std::log(u + 1e-10f);
      float sc = static_cast<float>(w[k]) / g;
      if (sc > bs) {
        bs = sc;
        best = k;
      }
    }
  } else {
    double bs = -1;
    for (int k = 0; k < n; ++k) {
      double u = r.uniform();
      double g = 1e-10 - std::log(u + 1e-10);
      double sc = w[k] / g;
      if (sc > bs) {
        bs = sc;
        best = k;
      }
    }
  }
  return best;
}

namespace {

int argmax_real(const double* z, int V) {
  int b = 0;
  for (int c = 1; c < V - 1; ++c)
    if (z[c] > z[b]) b = c;
  return b;
}

void update_masked(step_state& st, int i, double p, const double* z, int V, const sampler_opts& o, rng_stream& r,
                   std::vector<double>& w) {
  const int nr = V - 1;
  if (o.temperature <= 0) {
    if (r.uniform() < p) st.x[i] = argmax_real(z, V);
    return;
  }
  w.resize(nr + 1);
  real_probs(z, V, o.temperature, w.data());
  for (int c = 0; c < nr; ++c) w[c] *= p;
  w[nr] = 1 - p;
  int k = gumbel_pick(w.data(), nr + 1, r, o.fp32_gumbel);
  if (k < nr) st.x[i] = k;
}

void run_step(step_state& st, const hyperschedule& hs, const partition& p, const std::vector<double>& logits, int V,
              const sampler_opts& o, const rng_stream& rng, bool acs) {
  const int mask_id = V - 1, nr = V - 1;
  const int t = st.step;
  if (static_cast<int>(logits.size()) != p.a * V) throw config_error("sampler: logits shape mismatch");
  std::vector<double> w;
  for (int a = 0; a < p.a; ++a) {
    const int i = p.s + a;
    const int tc = hs.tau(t, i), tn = hs.tau(t + 1, i);
    if (tc == 0) continue;
    const double pt = transfer_prob(static_cast<double>(tc) / hs.levels(), static_cast<double>(tn) / hs.levels());
    const double* z = &logits[static_cast<size_t>(a) * V];
    rng_stream r = rng.fork(i, t);
    if (st.x[i] == mask_id) {
      update_masked(st, i, pt, z, V, o, r, w);
    } else if (acs) {
      st.correction_trials += 1;
      if (r.uniform() < o.eta * (1 - pt)) {
        st.corrections += 1;
        if (o.uniform_correction) {
          st.x[i] = static_cast<token>(r.below(nr));
        } else if (o.temperature <= 0) {
          st.x[i] = argmax_real(z, V);
        } else {
          w.resize(nr);
          real_probs(z, V, o.temperature, w.data());
          st.x[i] = gumbel_pick(w.data(), nr, r, o.fp32_gumbel);
        }
      }
    }
  }
  st.step += 1;
}

}  // namespace

void step_original(step_state& st, const hyperschedule& hs, const partition& p, const std::vector<double>& logits,
                   int V, const sampler_opts& o, const rng_stream& rng) {
  run_step(st, hs, p, logits, V, o, rng, false);
}

void step_acs(step_state& st, const hyperschedule& hs, const partition& p, const std::vector<double>& logits, int V,
              const sampler_opts& o, const rng_stream& rng) {
  if (!(o.eta >= 0 && o.eta <= 1)) throw config_error("step_acs: eta must be in [0,1]");
  run_step(st, hs, p, logits, V, o, rng, true);
}

generation generate(logits_source& model, const hyperschedule& hs, const sampler_opts& o, const rng_stream& rng) {
  const int V = model.vocab(), d = hs.d();
  const int omega = hs.window_width();
  model.reset();
  step_state st;
  st.x.assign(d, V - 1);
  generation g;
  int cached_before = 0;
  for (int t = 0; t < hs.T(); ++t) {
    partition p = hs.partition_at(t);
    if (p.a == 0) {
      st.step += 1;
      continue;
    }
    auto logits = model.active_logits(st.x, hs.row(t), p, o.cache, g.ledger);
    if (o.cache) {
      g.ledger.tokens += g.ledger.calls == 1 ? omega : p.s - cached_before;
      cached_before = p.s;
    } else {
      g.ledger.tokens += omega;
    }
    if (o.kind == sampler_kind::acs)
      step_acs(st, hs, p, logits, V, o, rng);
    else
      step_original(st, hs, p, logits, V, o, rng);
  }
  for (token x : st.x)
    if (x == V - 1) throw numeric_error("sampler: masked positions remain after the final step");
  g.tokens = std::move(st.x);
  g.corrections = st.corrections;
  return g;
}

}  // namespace hdlm
