#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hdlm/config.hpp"
#include "hdlm/denoiser.hpp"
#include "hdlm/loss.hpp"
#include "hdlm/process.hpp"

namespace hdlm {

struct sgd_state {
  param_set velocity;
};

// Global-norm clipping, then momentum SGD. Returns the pre-clip gradient norm.
double sgd_step(param_set& params, const param_set& grads, double lr, double clip, double momentum, sgd_state& st);

struct example {
  std::unique_ptr<attention_mask> mask;
  slot_batch slots;
  loss_spec spec;
};

struct train_setup {
  run_config cfg;
  hyperschedule hs;
  cumulative_schedule sigma;
  alpha_schedule alpha;
  vocab voc;
  std::vector<partition> parts;  // per step
};

train_setup make_train_setup(const run_config& cfg);

// Corrupts one clean sequence and lays it out for the loss. Non-efficient path uses the inference mask at a random
// step; the efficient path packs a clean causal half plus noisy intervals.
example make_example(const train_setup& ts, const sequence& y, const rng_stream& rng);
example make_example_at(const train_setup& ts, const sequence& y, int t, const rng_stream& rng);
example make_efficient_example(const train_setup& ts, const sequence& y, const std::vector<int>& steps,
                               const rng_stream& rng);
std::vector<int> pick_interval_steps(const train_setup& ts, rng_stream& rng);

struct step_log {
  int step = 0;
  double ce_settled = 0, active_term = 0, total = 0, grad_norm = 0, lr = 0;
};

// Loss and gradient averaged over the batch.
step_log batch_loss_grad(const denoiser& m, const train_setup& ts, const std::vector<example>& batch, param_set& grads);

class trainer {
public:
  trainer(denoiser& m, const run_config& cfg);
  const train_setup& setup() const { return ts_; }
  step_log step(const std::vector<sequence>& corpus, int step_index);
  double lr_at(int step) const;
  void run(const std::vector<sequence>& corpus, int steps, const std::function<void(const step_log&)>& on_log);

private:
  denoiser& m_;
  train_setup ts_;
  sgd_state opt_;
  param_set grads_;
};

}  // namespace hdlm
