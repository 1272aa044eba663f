#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdlm {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using token = int32_t;
using sequence = std::vector<token>;

struct vocab {
  int size_total = 2;

  vocab() = default;
  explicit vocab(int n) : size_total(n) {
    if (n < 2) throw config_error("vocab: size_total must be >= 2");
  }
  int mask_id() const { return size_total - 1; }
  int num_real() const { return size_total - 1; }
};

// Counter-based stream: draw k depends only on (seed, stream_id, k).
class rng_stream {
public:
  using result_type = uint64_t;

  rng_stream() = default;
  rng_stream(uint64_t seed, uint64_t stream_id = 0);

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64();
  double uniform();          // [0,1), 53 bits
  float uniform_f32();       // [0,1), 24 bits
  uint64_t below(uint64_t n);

  rng_stream fork(uint64_t key) const;
  rng_stream fork(uint64_t a, uint64_t b) const;
  rng_stream fork(uint64_t a, uint64_t b, uint64_t c) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<uint64_t>::max(); }
  result_type operator()() { return next_u64(); }

private:
  uint64_t seed_ = 0, stream_ = 0, counter_ = 0, base_ = 0;
};

uint64_t mix64(uint64_t x);
uint64_t hash_combine(uint64_t a, uint64_t b);

int sample_categorical(const double* p, int n, rng_stream& rng);

}  // namespace hdlm
