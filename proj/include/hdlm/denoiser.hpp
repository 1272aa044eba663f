#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hdlm/core.hpp"
#include "hdlm/masks.hpp"

namespace hdlm {

struct denoiser_config {
  int vocab = 17;  // |X| including MASK
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int d_max = 64;
  int mlp_mult = 4;
  wiring wire = wiring::aligned;
  bool time_conditioning = false;
  bool weighted_embedding = false;
  int levels = 1;  // size of the time-embedding table is levels + 1

  void validate() const;
  bool operator==(const denoiser_config&) const = default;
};

struct tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> v;
  size_t size() const { return v.size(); }
};

struct param_set {
  std::vector<tensor> t;
  tensor& get(const std::string& name);
  const tensor& get(const std::string& name) const;
  size_t count() const;
  param_set zeros_like() const;
  void set_zero();
  double norm() const;
};

// One sequence laid out as slots.
struct slot_batch {
  std::vector<int> ids;     // token fed into each slot
  std::vector<int> pos;     // positional-embedding index
  std::vector<int> level;   // noise level of the fed token (time conditioning)
  std::vector<double> keep; // weight on f(x) in the weighted embedding; empty = 1
  const attention_mask* mask = nullptr;
  int size() const { return static_cast<int>(ids.size()); }
};

struct forward_tape;

class denoiser {
public:
  denoiser() = default;
  denoiser(const denoiser_config& cfg, rng_stream rng, double init_scale = 0.02);

  const denoiser_config& config() const { return cfg_; }
  param_set& params() { return p_; }
  const param_set& params() const { return p_; }

  // logits: S x vocab, row-major
  std::vector<double> forward(const slot_batch& b) const;
  // dlogits: S x vocab; accumulates into grads
  std::vector<double> forward_backward(const slot_batch& b,
                                       const std::function<void(const std::vector<double>& logits,
                                                                std::vector<double>& dlogits)>& loss,
                                       param_set& grads) const;

  struct kv_cache {
    std::vector<std::vector<double>> k, v;  // per layer, n x dim
    int n = 0;
    void clear(int layers);
  };

  // Newly settled slots attend causally to the cache and to each other; their keys/values are appended.
  void cache_append(kv_cache& c, const slot_batch& b) const;
  // Window slots attend to every cached slot and densely to each other.
  std::vector<double> cache_window(const kv_cache& c, const slot_batch& b) const;

  void save(const std::string& path) const;
  static denoiser load(const std::string& path);
  void round_to_f32();

private:
  denoiser_config cfg_;
  param_set p_;
  struct layer_idx {
    int ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b, w1, b1, w2, b2;
  };
  int tok_ = -1, pos_ = -1, time_ = -1, lnfg_ = -1, lnfb_ = -1, wout_ = -1, bout_ = -1;
  std::vector<layer_idx> li_;

  void index();
  void run(const slot_batch& b, forward_tape& tp, const kv_cache* cache, bool causal_new) const;
};

}  // namespace hdlm
