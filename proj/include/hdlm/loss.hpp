#pragma once

#include <cstdint>
#include <vector>

#include "hdlm/hyperschedule.hpp"

namespace hdlm {

enum class loss_variant { gamma_surrogate, epsilon_hdce };

std::vector<double> hdce_weights(const std::vector<uint8_t>& flags, const std::vector<double>& p_mask, double lambda,
                                 double eps);
// masked -> 1/p, unmasked -> lambda/(1-p), p the masking marginal of the gamma process
std::vector<double> gamma_weights(const std::vector<uint8_t>& flags, const std::vector<double>& p_mask, double lambda);

// Rows of logits are slots (vocab wide); target < 0 means no loss on that slot.
struct ce_result {
  double loss = 0;
  std::vector<double> dlogits;  // empty unless requested
};

double log_softmax_at(const double* logits, int vocab, int target);

// sum_s w_s * (-log p_s[target_s]) / norm
ce_result weighted_ce(const std::vector<double>& logits, int vocab, const std::vector<int>& targets,
                      const std::vector<double>& weights, double norm, bool want_grad);

// (1/(N d)) sum w * nll ; logits hold N*d rows
double hdce_loss(const std::vector<double>& logits, int vocab, const std::vector<int>& targets,
                 const std::vector<double>& weights, int N, int d);

ce_result settled_ce(const std::vector<double>& logits, int vocab, const std::vector<int>& targets,
                     const std::vector<int>& slot_position, const partition& p, const std::vector<double>* reweight,
                     bool want_grad);

std::vector<double> position_reweight(int d, int omega);

enum class slot_group : uint8_t { none, settled, active };

struct loss_spec {
  double beta1 = 1, beta2 = 1;
  loss_variant variant = loss_variant::epsilon_hdce;
  int d = 1;                         // sequence length; active term is normalized by d
  std::vector<int> targets;          // per slot
  std::vector<slot_group> group;     // per slot
  std::vector<double> weight;        // per slot: active weight, or settled reweight
};

struct loss_terms {
  double ce_settled = 0, active_term = 0, total = 0;
  std::vector<double> dlogits;
};

loss_terms combined_loss(const std::vector<double>& logits, int vocab, const loss_spec& spec, bool want_grad);

}  // namespace hdlm
