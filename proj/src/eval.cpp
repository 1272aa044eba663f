#include "hdlm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "hdlm/loss.hpp"

namespace hdlm {

std::vector<double> constant_logits::active_logits(const sequence&, const int*, const partition& p, bool,
                                                   call_ledger& l) {
  l.calls += 1;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(p.a) * z_.size());
  for (int a = 0; a < p.a; ++a) out.insert(out.end(), z_.begin(), z_.end());
  return out;
}

ppl_estimate mc_ppl(logits_source& model, const std::vector<sequence>& data, const hyperschedule& hs, int M,
                    const rng_stream& rng) {
  if (data.empty()) throw config_error("mc_ppl: empty dataset");
  if (M < 1) throw config_error("mc_ppl: M must be >= 1");
  const int V = model.vocab(), mask_id = V - 1, d = hs.d();
  const bool flat = hs.kind() == hs_kind::flat;
  double sum = 0, sumsq = 0;
  int64_t n = 0, tokens = 0;
  std::vector<int> row(d);
  call_ledger ledger;
  for (size_t si = 0; si < data.size(); ++si) {
    const sequence& y = data[si];
    if (static_cast<int>(y.size()) != d) throw config_error("mc_ppl: sequence length differs from schedule");
    for (int m = 0; m < M; ++m) {
      rng_stream r = rng.fork(si, m);
      sequence x = y;
      partition p{0, d, d};
      std::vector<char> masked(d, 0);
      int nm = 0;
      for (int attempt = 0; nm == 0; ++attempt) {
        if (attempt > 10000) throw numeric_error("mc_ppl: could not draw a masked position");
        x = y;
        std::fill(masked.begin(), masked.end(), 0);
        if (flat) {
          double t = r.uniform();
          int lv = std::max(1, round_level(hs.levels(), static_cast<int64_t>(t * (1 << 30)), 1 << 30));
          for (int i = 0; i < d; ++i) {
            row[i] = lv;
            if (r.uniform() < t) {
              x[i] = mask_id;
              masked[i] = 1;
              ++nm;
            }
          }
          p = {0, d, d};
        } else {
          int t = static_cast<int>(r.below(hs.T()));
          p = hs.partition_at(t);
          for (int i = 0; i < d; ++i) {
            row[i] = hs.tau(t, i);
            if (i >= p.s + p.a) {
              x[i] = mask_id;
            } else if (i >= p.s && r.uniform() < static_cast<double>(hs.tau(t, i)) / hs.levels()) {
              x[i] = mask_id;
              masked[i] = 1;
              ++nm;
            }
          }
        }
      }
      auto logits = model.active_logits(x, row.data(), p, false, ledger);
      double loss = 0;
      for (int a = 0; a < p.a; ++a) {
        int i = p.s + a;
        if (!masked[i]) continue;
        loss -= log_softmax_at(&logits[static_cast<size_t>(a) * V], V, y[i]);
      }
      loss /= nm;
      sum += loss;
      sumsq += loss * loss;
      ++n;
      tokens += nm;
    }
  }
  ppl_estimate e;
  e.per_token_nll = sum / n;
  e.ppl = std::exp(e.per_token_nll);
  e.mc_samples = M;
  e.token_count = tokens;
  double var = n > 1 ? (sumsq - sum * sum / n) / (n - 1) : 0.0;
  e.std_error = std::sqrt(std::max(var, 0.0) / n);
  return e;
}

ppl_estimate gen_ppl(const std::vector<sequence>& samples, const ngram_judge& judge) {
  if (samples.empty()) throw config_error("gen_ppl: empty samples");
  ppl_estimate e;
  double total = 0;
  int64_t count = 0;
  for (const auto& s : samples) {
    total += judge.nll(s);
    count += static_cast<int64_t>(s.size());
  }
  if (count == 0) throw config_error("gen_ppl: no tokens");
  e.per_token_nll = total / count;
  e.ppl = std::exp(e.per_token_nll);
  e.token_count = count;
  e.mc_samples = static_cast<int>(samples.size());
  return e;
}

double token_entropy(const std::vector<sequence>& samples, int num_real) {
  if (samples.empty()) throw config_error("token_entropy: empty samples");
  std::vector<double> c(num_real, 0.0);
  double n = 0;
  for (const auto& s : samples)
    for (token t : s) {
      if (t < 0 || t >= num_real) throw config_error("token_entropy: token out of range");
      c[t] += 1;
      n += 1;
    }
  if (n == 0) throw config_error("token_entropy: no tokens");
  double h = 0;
  for (double v : c)
    if (v > 0) h -= v / n * std::log(v / n);
  return h;
}

}  // namespace hdlm
