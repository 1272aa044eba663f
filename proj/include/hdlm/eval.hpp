#pragma once

#include <vector>

#include "hdlm/corpus.hpp"
#include "hdlm/hyperschedule.hpp"
#include "hdlm/sampler.hpp"

namespace hdlm {

struct ppl_estimate {
  double per_token_nll = 0;
  double ppl = 1;
  int mc_samples = 0;
  int64_t token_count = 0;
  double std_error = 0;  // of per_token_nll
};

// Flat: masking rate t ~ U(0,1) per draw, loss = mean CE over masked positions (draws with no mask are redrawn).
// Windowed kinds: step t uniform on the schedule grid, active positions masked with probability tau/levels.
ppl_estimate mc_ppl(logits_source& model, const std::vector<sequence>& data, const hyperschedule& hs, int M,
                    const rng_stream& rng);

ppl_estimate gen_ppl(const std::vector<sequence>& samples, const ngram_judge& judge);

double token_entropy(const std::vector<sequence>& samples, int num_real);

// Logits source returning identical logits everywhere.
class constant_logits : public logits_source {
public:
  explicit constant_logits(std::vector<double> z) : z_(std::move(z)) {}
  int vocab() const override { return static_cast<int>(z_.size()); }
  std::vector<double> active_logits(const sequence&, const int*, const partition& p, bool, call_ledger& l) override;

private:
  std::vector<double> z_;
};

}  // namespace hdlm
