#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hdlm/denoiser.hpp"
#include "hdlm/hyperschedule.hpp"
#include "hdlm/process.hpp"

namespace hdlm {

struct call_ledger {
  int64_t calls = 0;
  int64_t tokens = 0;       // KV accounting: first window + tokens appended to the cache (or calls x window)
  int64_t cache_hits = 0;   // cached keys reused, summed over calls
  int64_t query_slots = 0;  // rows actually pushed through the network
  bool operator==(const call_ledger&) const = default;
};

// Produces logits (a x vocab) for the active positions [s, s+a) of the current state.
class logits_source {
public:
  virtual ~logits_source() = default;
  virtual int vocab() const = 0;
  virtual void reset() {}
  virtual std::vector<double> active_logits(const sequence& x, const int* tau_row, const partition& p, bool use_cache,
                                            call_ledger& ledger) = 0;
};

struct embed_opts {
  const cumulative_schedule* sigma = nullptr;  // weighted embedding keep = exp(-gamma sigma_bar)
  double gamma = 0;
};

// Slot layout of a (partially noisy) sequence under the inference wiring.
slot_batch inference_slots(const denoiser_config& cfg, const sequence& x, const int* tau_row, int first, int last,
                           const embed_opts& eo);

class denoiser_source : public logits_source {
public:
  denoiser_source(const denoiser& m, embed_opts eo = {}) : m_(m), eo_(eo) {}
  int vocab() const override { return m_.config().vocab; }
  void reset() override;
  std::vector<double> active_logits(const sequence& x, const int* tau_row, const partition& p, bool use_cache,
                                    call_ledger& ledger) override;

private:
  const denoiser& m_;
  embed_opts eo_;
  denoiser::kv_cache cache_;
  int window_ = 0;
};

enum class sampler_kind { original, acs };

struct sampler_opts {
  sampler_kind kind = sampler_kind::original;
  double eta = 0;
  double temperature = 1;
  bool fp32_gumbel = false;
  bool uniform_correction = false;
  bool cache = false;
};

double transfer_prob(double t, double s);

struct step_state {
  sequence x;
  int step = 0;
  int64_t corrections = 0;
  int64_t correction_trials = 0;
};

// Updates active positions [s, s+a) in place from logits (a x vocab).
void step_original(step_state& st, const hyperschedule& hs, const partition& p, const std::vector<double>& logits,
                   int vocab, const sampler_opts& o, const rng_stream& rng);
void step_acs(step_state& st, const hyperschedule& hs, const partition& p, const std::vector<double>& logits, int vocab,
              const sampler_opts& o, const rng_stream& rng);

// Gumbel-argmax over weights (ratio form w / (1e-10 - log(u + 1e-10))).
int gumbel_pick(const double* w, int n, rng_stream& r, bool fp32);
void real_probs(const double* logits, int vocab, double temperature, double* out);

struct generation {
  sequence tokens;
  call_ledger ledger;
  int64_t corrections = 0;
};

generation generate(logits_source& model, const hyperschedule& hs, const sampler_opts& o, const rng_stream& rng);

}  // namespace hdlm
