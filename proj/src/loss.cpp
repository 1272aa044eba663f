#include "hdlm/loss.hpp"

#include <cmath>
#include <string>

#include "hdlm/core.hpp"
#include "hdlm/process.hpp"

namespace hdlm {

std::vector<double> hdce_weights(const std::vector<uint8_t>& flags, const std::vector<double>& p_mask, double lambda,
                                 double eps) {
  if (flags.size() != p_mask.size()) throw config_error("hdce_weights: size mismatch");
  std::vector<double> w(flags.size());
  for (size_t i = 0; i < flags.size(); ++i) {
    double p = p_mask[i];
    if (flags[i] == flag_masked) {
      if (!(p > 0)) throw numeric_error("hdce_weights: p_mask = 0 on masked position " + std::to_string(i));
      w[i] = 1.0 / p;
    } else {
      if (!(p < 1)) throw numeric_error("hdce_weights: p_mask = 1 on unmasked position " + std::to_string(i));
      w[i] = (flags[i] == flag_shuffled ? lambda * (1 - eps) : lambda * eps) / (1 - p);
    }
  }
  return w;
}

std::vector<double> gamma_weights(const std::vector<uint8_t>& flags, const std::vector<double>& p_mask, double lambda) {
  if (flags.size() != p_mask.size()) throw config_error("gamma_weights: size mismatch");
  std::vector<double> w(flags.size());
  for (size_t i = 0; i < flags.size(); ++i) {
    double p = p_mask[i];
    if (flags[i] == flag_masked) {
      if (!(p > 0)) throw numeric_error("gamma_weights: p_mask = 0 on masked position " + std::to_string(i));
      w[i] = 1.0 / p;
    } else {
      if (!(p < 1)) throw numeric_error("gamma_weights: p_mask = 1 on unmasked position " + std::to_string(i));
      w[i] = lambda / (1 - p);
    }
  }
  return w;
}

double log_softmax_at(const double* z, int V, int target) {
  double mx = z[0];
  for (int c = 1; c < V; ++c) mx = std::max(mx, z[c]);
  double s = 0;
  for (int c = 0; c < V; ++c) s += std::exp(z[c] - mx);
  return z[target] - mx - std::log(s);
}

ce_result weighted_ce(const std::vector<double>& logits, int V, const std::vector<int>& targets,
                      const std::vector<double>& weights, double norm, bool want_grad) {
  const size_t S = targets.size();
  if (logits.size() != S * V || weights.size() != S) throw config_error("weighted_ce: shape mismatch");
  ce_result r;
  if (want_grad) r.dlogits.assign(logits.size(), 0.0);
  for (size_t s = 0; s < S; ++s) {
    if (targets[s] < 0 || weights[s] == 0) continue;
    const double* z = &logits[s * V];
    double mx = z[0];
    for (int c = 1; c < V; ++c) mx = std::max(mx, z[c]);
    double sum = 0;
    for (int c = 0; c < V; ++c) sum += std::exp(z[c] - mx);
    double lse = mx + std::log(sum);
    r.loss += weights[s] * (lse - z[targets[s]]);
    if (want_grad) {
      double* g = &r.dlogits[s * V];
      double f = weights[s] / norm;
      for (int c = 0; c < V; ++c) g[c] = f * std::exp(z[c] - lse);
      g[targets[s]] -= f;
    }
  }
  r.loss /= norm;
  return r;
}

double hdce_loss(const std::vector<double>& logits, int V, const std::vector<int>& targets,
                 const std::vector<double>& weights, int N, int d) {
  return weighted_ce(logits, V, targets, weights, static_cast<double>(N) * d, false).loss;
}

ce_result settled_ce(const std::vector<double>& logits, int V, const std::vector<int>& targets,
                     const std::vector<int>& slot_position, const partition& p, const std::vector<double>* reweight,
                     bool want_grad) {
  const size_t S = targets.size();
  if (slot_position.size() != S) throw config_error("settled_ce: shape mismatch");
  std::vector<int> t(S, -1);
  std::vector<double> w(S, 0.0);
  int n = 0;
  for (size_t s = 0; s < S; ++s) {
    int pos = slot_position[s];
    if (pos >= 0 && pos < p.s && targets[s] >= 0) {
      t[s] = targets[s];
      w[s] = reweight ? (*reweight)[pos] : 1.0;
      ++n;
    }
  }
  if (n == 0) {
    ce_result r;
    if (want_grad) r.dlogits.assign(logits.size(), 0.0);
    return r;
  }
  return weighted_ce(logits, V, t, w, n, want_grad);
}

std::vector<double> position_reweight(int d, int omega) {
  if (omega < 1 || omega > d) throw config_error("position_reweight: need 1 <= omega <= d");
  int blocks = (d + omega - 1) / omega;
  std::vector<double> w(d, 1.0);
  if (blocks == 1) return w;
  for (int i = 0; i < d; ++i) w[i] = static_cast<double>(i / omega) / (blocks - 1);
  return w;
}

loss_terms combined_loss(const std::vector<double>& logits, int V, const loss_spec& spec, bool want_grad) {
  const size_t S = spec.targets.size();
  if (spec.group.size() != S || spec.weight.size() != S) throw config_error("combined_loss: spec shape mismatch");
  if (spec.beta1 < 0 || spec.beta2 < 0) throw config_error("combined_loss: betas must be >= 0");
  std::vector<int> ts(S, -1), ta(S, -1);
  std::vector<double> ws(S, 0.0), wa(S, 0.0);
  int ns = 0;
  for (size_t s = 0; s < S; ++s) {
    if (spec.targets[s] < 0) continue;
    if (spec.group[s] == slot_group::settled) {
      ts[s] = spec.targets[s];
      ws[s] = spec.weight[s];
      ++ns;
    } else if (spec.group[s] == slot_group::active) {
      ta[s] = spec.targets[s];
      wa[s] = spec.weight[s];
    }
  }
  loss_terms out;
  ce_result cs, ca;
  if (ns > 0) cs = weighted_ce(logits, V, ts, ws, ns, want_grad);
  ca = weighted_ce(logits, V, ta, wa, spec.d, want_grad);
  out.ce_settled = cs.loss;
  out.active_term = ca.loss;
  out.total = spec.beta1 * cs.loss + spec.beta2 * ca.loss;
  if (want_grad) {
    out.dlogits.assign(logits.size(), 0.0);
    for (size_t i = 0; i < logits.size(); ++i) {
      double g = spec.beta2 * ca.dlogits[i];
      if (ns > 0) g += spec.beta1 * cs.dlogits[i];
      out.dlogits[i] = g;
    }
  }
  return out;
}

}  // namespace hdlm
