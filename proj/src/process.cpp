#include "hdlm/process.hpp"

#include <cmath>

namespace hdlm {

cumulative_schedule loglinear_sigma(int levels, double sigma_min, double sigma_max) {
  if (levels < 1) throw config_error("loglinear_sigma: levels must be >= 1");
  if (!(sigma_min > 0) || !(sigma_max > sigma_min)) throw config_error("loglinear_sigma: need 0 < min < max");
  cumulative_schedule s;
  s.values.resize(levels + 1);
  s.values[0] = 0;
  for (int tau = 1; tau <= levels; ++tau) {
    double f = static_cast<double>(tau) / levels;
    s.values[tau] = std::pow(sigma_min, 1 - f) * std::pow(sigma_max, f);
  }
  s.values[levels] = sigma_max;
  return s;
}

alpha_schedule linear_alpha(int levels) {
  if (levels < 1) throw config_error("linear_alpha: levels must be >= 1");
  alpha_schedule a;
  a.values.resize(levels + 1);
  for (int tau = 0; tau <= levels; ++tau) a.values[tau] = 1.0 - static_cast<double>(tau) / levels;
  return a;
}

Eigen::MatrixXd q_absorb(int n) {
  if (n < 2) throw config_error("generator: n must be >= 2");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int x = 0; x < n - 1; ++x) {
    q(x, x) = -1;
    q(n - 1, x) = 1;
  }
  return q;
}

Eigen::MatrixXd q_uniform(int n) {
  if (n < 2) throw config_error("generator: n must be >= 2");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  const double off = 1.0 / (n - 1), diag = (2.0 - n) / (n - 1);
  for (int x = 0; x < n - 1; ++x)
    for (int y = 0; y < n - 1; ++y) q(y, x) = x == y ? diag : off;
  return q;
}

generator make_generator(gen_kind kind, int n, double gamma) {
  if (n < 2) throw config_error("generator: n must be >= 2");
  generator g;
  g.kind = kind;
  g.n = n;
  switch (kind) {
    case gen_kind::absorb:
      g.gamma = 0;
      g.m = q_absorb(n);
      break;
    case gen_kind::uniform:
      g.gamma = 1;
      g.m = q_uniform(n);
      break;
    case gen_kind::hybrid:
      if (!(gamma >= 0 && gamma <= 1)) throw config_error("generator: gamma must be in [0,1]");
      g.gamma = gamma;
      g.m = (1 - gamma) * q_absorb(n) + gamma * q_uniform(n);
      break;
  }
  return g;
}

Eigen::MatrixXd evolve_analytic(int n, double gamma, double delta) {
  if (!(delta >= 0)) throw config_error("evolve_analytic: delta must be >= 0");
  if (!(gamma >= 0 && gamma <= 1)) throw config_error("evolve_analytic: gamma must be in [0,1]");
  const double ea = std::exp(-(1 - gamma) * delta), e = std::exp(-delta);
  return Eigen::MatrixXd::Identity(n, n) + (1 - ea) * q_absorb(n) + (ea - e) * q_uniform(n);
}

evolve_column evolve_real_column(int n, double gamma, double delta) {
  if (!(delta >= 0)) throw config_error("evolve_analytic: delta must be >= 0");
  const double ea = std::exp(-(1 - gamma) * delta), e = std::exp(-delta);
  const double ca = 1 - ea, cu = ea - e;
  return {1 - ca + cu * (2.0 - n) / (n - 1), cu / (n - 1), ca};
}

Eigen::MatrixXd epsilon_kernel(int n, double eps, double alpha) {
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  return (I + eps * q_uniform(n)) * (I + (1 - alpha) * q_absorb(n));
}

double p_mask_gamma(double gamma, double sigma_bar) { return -std::expm1(-(1 - gamma) * sigma_bar); }

sequence corrupt_gamma_levels(const sequence& seq, const int* tau_row, int step, const cumulative_schedule& sigma,
                              double gamma, const vocab& v, const rng_stream& rng) {
  const int n = v.size_total, nr = v.num_real();
  sequence out = seq;
  for (size_t i = 0; i < seq.size(); ++i) {
    int tau = tau_row[i];
    if (tau == 0 || seq[i] == v.mask_id()) continue;
    rng_stream r = rng.fork(i, step);
    evolve_column c = evolve_real_column(n, gamma, sigma.at(tau) - sigma.at(0));
    double u = r.uniform();
    if (u < c.mask) {
      out[i] = v.mask_id();
    } else if (u < c.mask + c.other * (nr - 1)) {
      int k = static_cast<int>(r.below(nr - 1));
      out[i] = k >= seq[i] ? k + 1 : k;
    }
  }
  return out;
}

sequence corrupt_gamma(const sequence& seq, const hyperschedule& hs, int t, const cumulative_schedule& sigma,
                       double gamma, const vocab& v, const rng_stream& rng) {
  if (static_cast<int>(seq.size()) != hs.d()) throw config_error("corrupt_gamma: length mismatch");
  if (t < 0 || t > hs.T()) throw config_error("corrupt_gamma: step out of range");
  return corrupt_gamma_levels(seq, hs.row(t), t, sigma, gamma, v, rng);
}

corrupted corrupt_epsilon_levels(const sequence& seq, const int* tau_row, int step, double eps,
                                 const alpha_schedule& alpha, const vocab& v, const rng_stream& rng) {
  const int nr = v.num_real();
  corrupted out{seq, std::vector<uint8_t>(seq.size(), flag_unchanged)};
  for (size_t i = 0; i < seq.size(); ++i) {
    int tau = tau_row[i];
    if (tau == 0) continue;
    if (seq[i] == v.mask_id()) throw config_error("corrupt_epsilon: input contains MASK");
    rng_stream r = rng.fork(i, step);
    // uniform redraw over all real tokens: changes with probability eps (n-2)/(n-1)
    if (r.uniform() < eps) {
      token y = static_cast<token>(r.below(nr));
      if (y != seq[i]) {
        out.tokens[i] = y;
        out.flags[i] = flag_shuffled;
      }
    }
    if (r.uniform() < 1 - alpha.at(tau)) {
      out.tokens[i] = v.mask_id();
      out.flags[i] = flag_masked;
    }
  }
  return out;
}

corrupted corrupt_epsilon(const sequence& seq, const hyperschedule& hs, int t, double eps, const alpha_schedule& alpha,
                          const vocab& v, const rng_stream& rng) {
  if (static_cast<int>(seq.size()) != hs.d()) throw config_error("corrupt_epsilon: length mismatch");
  if (t < 0 || t > hs.T()) throw config_error("corrupt_epsilon: step out of range");
  if (!(eps >= 0 && eps < 1)) throw config_error("corrupt_epsilon: epsilon must be in [0,1)");
  return corrupt_epsilon_levels(seq, hs.row(t), t, eps, alpha, v, rng);
}

}  // namespace hdlm
