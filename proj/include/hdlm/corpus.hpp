#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hdlm/core.hpp"

namespace hdlm {

struct markov_source {
  int order = 1;
  int n = 0;                        // real tokens
  std::vector<double> transition;   // row-major n x n, row = current token
  std::vector<double> stationary;
  double entropy_rate = 0;

  double p(int x, int y) const { return transition[static_cast<size_t>(x) * n + y]; }
};

using dirichlet_draw = std::function<std::vector<double>(int n, double concentration, rng_stream&)>;

std::vector<double> draw_dirichlet(int n, double concentration, rng_stream& rng);
markov_source make_markov_source(int num_real_tokens, double concentration, rng_stream rng);
markov_source make_markov_source(int num_real_tokens, double concentration, rng_stream rng,
                                 const dirichlet_draw& draw);
// rejects matrices that are not row-stochastic or not irreducible
markov_source markov_from_matrix(int n, std::vector<double> transition);
bool is_irreducible(int n, const std::vector<double>& transition);

std::vector<sequence> sample_corpus(const markov_source& src, int num_seqs, int d, rng_stream rng);

class ngram_judge {
public:
  // order = context length (1 conditions on the previous token)
  static ngram_judge fit(const std::vector<sequence>& corpus, int num_real, int order, double smoothing);

  int order() const { return order_; }
  int num_real() const { return n_; }
  double smoothing() const { return k_; }

  // probability of y given the tokens preceding position pos in s
  double prob(const sequence& s, size_t pos, token y) const;
  double cond(int ctx_len, const token* ctx, token y) const;
  double nll(const sequence& s) const;
  double mean_nll(const std::vector<sequence>& samples) const;

private:
  int order_ = 1, n_ = 0;
  double k_ = 1;
  std::vector<double> uni_, bi_, tri_;
  std::vector<double> uni_tot_, bi_tot_, tri_tot_;
};

struct corpus_file {
  int vocab_size = 0;
  int d = 0;
  std::vector<sequence> seqs;
};

void write_corpus(const std::string& path, int vocab_size, int d, const std::vector<sequence>& seqs);
corpus_file read_corpus(const std::string& path);
void write_markov(const std::string& path, const markov_source& src);
markov_source read_markov(const std::string& path);

uint32_t crc32_file(const std::string& path);
uint32_t crc32_bytes(const void* data, size_t len);

}  // namespace hdlm
