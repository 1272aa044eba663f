#include <cmath>

#include "hdlm/corpus.hpp"

namespace hdlm {

ngram_judge ngram_judge::fit(const std::vector<sequence>& corpus, int num_real, int order, double smoothing) {
  if (corpus.empty()) throw config_error("ngram: empty corpus");
  if (order != 1 && order != 2) throw config_error("ngram: order must be 1 or 2");
  if (!(smoothing > 0)) throw config_error("ngram: smoothing must be > 0");
  if (num_real < 1) throw config_error("ngram: num_real must be >= 1");
  ngram_judge j;
  j.order_ = order;
  j.n_ = num_real;
  j.k_ = smoothing;
  const size_t n = num_real;
  j.uni_.assign(n, 0);
  j.uni_tot_.assign(1, 0);
  j.bi_.assign(n * n, 0);
  j.bi_tot_.assign(n, 0);
  if (order == 2) {
    j.tri_.assign(n * n * n, 0);
    j.tri_tot_.assign(n * n, 0);
  }
  for (const auto& s : corpus) {
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= num_real) throw config_error("ngram: token out of range");
      j.uni_[s[i]] += 1;
      j.uni_tot_[0] += 1;
      if (i >= 1) {
        j.bi_[s[i - 1] * n + s[i]] += 1;
        j.bi_tot_[s[i - 1]] += 1;
      }
      if (order == 2 && i >= 2) {
        size_t c = s[i - 2] * n + s[i - 1];
        j.tri_[c * n + s[i]] += 1;
        j.tri_tot_[c] += 1;
      }
    }
  }
  return j;
}

double ngram_judge::cond(int ctx_len, const token* ctx, token y) const {
  const double V = n_;
  const size_t n = n_;
  if (y < 0 || y >= n_) throw config_error("ngram: token out of range");
  int use = std::min(ctx_len, order_);
  if (use == 0) return (uni_[y] + k_) / (uni_tot_[0] + k_ * V);
  if (use == 1) {
    token a = ctx[ctx_len - 1];
    return (bi_[a * n + y] + k_) / (bi_tot_[a] + k_ * V);
  }
  size_t c = ctx[ctx_len - 2] * n + ctx[ctx_len - 1];
  return (tri_[c * n + y] + k_) / (tri_tot_[c] + k_ * V);
}

double ngram_judge::prob(const sequence& s, size_t pos, token y) const {
  return cond(static_cast<int>(pos), s.data(), y);
}

double ngram_judge::nll(const sequence& s) const {
  double total = 0;
  for (size_t i = 0; i < s.size(); ++i) total -= std::log(prob(s, i, s[i]));
  return total;
}

double ngram_judge::mean_nll(const std::vector<sequence>& samples) const {
  double total = 0;
  size_t count = 0;
  for (const auto& s : samples) {
    total += nll(s);
    count += s.size();
  }
  if (count == 0) throw config_error("ngram: no tokens to score");
  return total / static_cast<double>(count);
}

}  // namespace hdlm
