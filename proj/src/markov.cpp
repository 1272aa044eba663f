#include <cmath>
#include <random>

#include "hdlm/corpus.hpp"

namespace hdlm {

std::vector<double> draw_dirichlet(int n, double concentration, rng_stream& rng) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> row(n);
  double s = 0;
  for (auto& v : row) {
    v = g(rng);
    s += v;
  }
  if (!(s > 0)) {
    // all draws underflowed; fall back to a single point mass at a random index
    row.assign(n, 0.0);
    row[rng.below(n)] = 1.0;
    return row;
  }
  for (auto& v : row) v /= s;
  return row;
}

bool is_irreducible(int n, const std::vector<double>& P) {
  auto reach = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int y = 0; y < n; ++y) {
        double v = transpose ? P[static_cast<size_t>(y) * n + x] : P[static_cast<size_t>(x) * n + y];
        if (v > 0 && !seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
      }
    }
    for (char c : seen)
      if (!c) return false;
    return true;
  };
  return reach(false) && reach(true);
}

static void finish(markov_source& m) {
  const int n = m.n;
  std::vector<double> pi(n, 1.0 / n), next(n);
  bool converged = false;
  for (int it = 0; it < 100000; ++it) {
    // lazy chain (I+P)/2 shares the fixed point and is aperiodic
    for (int y = 0; y < n; ++y) next[y] = 0.5 * pi[y];
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) next[y] += 0.5 * pi[x] * m.p(x, y);
    double s = 0;
    for (double v : next) s += v;
    double diff = 0;
    for (int y = 0; y < n; ++y) {
      next[y] /= s;
      diff = std::max(diff, std::abs(next[y] - pi[y]));
    }
    pi.swap(next);
    if (diff < 1e-15) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    // accept if the fixed-point residual is already tight
    double res = 0;
    for (int y = 0; y < n; ++y) {
      double v = 0;
      for (int x = 0; x < n; ++x) v += pi[x] * m.p(x, y);
      res = std::max(res, std::abs(v - pi[y]));
    }
    if (res > 1e-12) throw numeric_error("markov: power iteration did not converge");
  }
  m.stationary = pi;
  double h = 0;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      double p = m.p(x, y);
      if (p > 0) h -= pi[x] * p * std::log(p);
    }
  m.entropy_rate = h;
}

markov_source markov_from_matrix(int n, std::vector<double> P) {
  if (n < 2) throw config_error("markov: need at least 2 real tokens");
  if (P.size() != static_cast<size_t>(n) * n) throw config_error("markov: matrix shape");
  for (int x = 0; x < n; ++x) {
    double s = 0;
    for (int y = 0; y < n; ++y) {
      double v = P[static_cast<size_t>(x) * n + y];
      if (!(v >= 0)) throw config_error("markov: negative transition entry");
      s += v;
    }
    if (std::abs(s - 1) > 1e-12) throw config_error("markov: row does not sum to 1");
  }
  if (!is_irreducible(n, P)) throw config_error("markov: chain is reducible");
  markov_source m;
  m.n = n;
  m.transition = std::move(P);
  finish(m);
  return m;
}

markov_source make_markov_source(int n, double concentration, rng_stream rng, const dirichlet_draw& draw) {
  if (n < 2) throw config_error("markov: num_real_tokens must be >= 2");
  if (!(concentration > 0)) throw config_error("markov: concentration must be > 0");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> P;
    P.reserve(static_cast<size_t>(n) * n);
    for (int x = 0; x < n; ++x) {
      rng_stream r = rng.fork(attempt, x);
      auto row = draw(n, concentration, r);
      double s = 0;
      for (double v : row) s += v;
      for (double v : row) P.push_back(v / s);
    }
    if (!is_irreducible(n, P)) continue;
    markov_source m;
    m.n = n;
    m.transition = std::move(P);
    finish(m);
    return m;
  }
  throw numeric_error("markov: could not draw an irreducible chain");
}

markov_source make_markov_source(int n, double concentration, rng_stream rng) {
  return make_markov_source(n, concentration, rng, draw_dirichlet);
}

std::vector<sequence> sample_corpus(const markov_source& src, int num_seqs, int d, rng_stream rng) {
  if (d < 1) throw config_error("sample_corpus: d must be >= 1");
  std::vector<sequence> out;
  out.reserve(num_seqs);
  for (int s = 0; s < num_seqs; ++s) {
    rng_stream r = rng.fork(s);
    sequence seq(d);
    seq[0] = sample_categorical(src.stationary.data(), src.n, r);
    for (int i = 1; i < d; ++i)
      seq[i] = sample_categorical(&src.transition[static_cast<size_t>(seq[i - 1]) * src.n], src.n, r);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace hdlm
