#pragma once

#include <map>
#include <string>
#include <vector>

#include "hdlm/denoiser.hpp"
#include "hdlm/hyperschedule.hpp"
#include "hdlm/loss.hpp"
#include "hdlm/sampler.hpp"

namespace hdlm {

using kv_map = std::map<std::string, std::string>;

kv_map parse_kv_text(const std::string& text);
kv_map parse_kv_file(const std::string& path);

struct run_config {
  // process
  bool has_gamma = false, has_epsilon = true;
  double gamma = 0, epsilon = 0.01;
  double sigma_min = 1e-3, sigma_max = 20;
  // hyperschedule
  hs_kind kind = hs_kind::flat;
  int omega = 4;
  int levels = 32;
  int64_t rho_num = 1, rho_den = 1;
  // model
  wiring wire = wiring::aligned;
  bool time_conditioning = false;
  bool weighted_embedding = false;
  int dim = 64, heads = 4, layers = 2;
  double init_scale = 0.02;
  // loss
  double beta1 = 1, beta2 = 1, lambda = 1;
  bool efficient = true;
  bool reweight = false;
  // training
  int steps = 5000;
  int batch = 8;
  double lr = 0.1;
  double momentum = 0.9;
  double clip = 1.0;
  int warmup = 100;
  uint64_t seed = 1;
  // data
  int num_real = 16;
  double concentration = 0.5;
  int d = 32;
  int train_seqs = 4096;
  int eval_seqs = 128;
  int judge_seqs = 4096;
  int judge_order = 1;
  double judge_smoothing = 0.01;
  // sampling / eval
  sampler_kind sampler = sampler_kind::original;
  double eta = 0.25;
  double temperature = 1.0;
  bool cache = false;
  bool fp32_gumbel = false;
  bool uniform_correction = false;
  int num_samples = 256;
  int mc_samples = 8;
  int log_every = 100;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  loss_variant variant() const { return has_gamma ? loss_variant::gamma_surrogate : loss_variant::epsilon_hdce; }
  hs_params schedule_params() const;
  denoiser_config model_config() const;
  sampler_opts sampling() const;
  void validate() const;
  kv_map to_map() const;
};

// Unknown keys and malformed values raise config_error naming the key.
run_config make_run_config(const kv_map& kv);
std::string to_text(const run_config& c);

}  // namespace hdlm
