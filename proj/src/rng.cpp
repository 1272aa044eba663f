#include "hdlm/core.hpp"

namespace hdlm {

uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

uint64_t hash_combine(uint64_t a, uint64_t b) {
  return mix64(a ^ mix64(b + 0x632BE59BD9B4E019ull));
}

rng_stream::rng_stream(uint64_t seed, uint64_t stream_id)
    : seed_(seed), stream_(stream_id), counter_(0), base_(hash_combine(mix64(seed), stream_id)) {}

uint64_t rng_stream::next_u64() {
  uint64_t c = counter_++;
  return mix64(base_ + c * 0xD1B54A32D192ED03ull);
}

double rng_stream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

float rng_stream::uniform_f32() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

uint64_t rng_stream::below(uint64_t n) {
  if (n == 0) return 0;
  // Lemire's multiply-shift with rejection
  for (;;) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo >= n || lo >= (-n) % n) return static_cast<uint64_t>(m >> 64);
  }
}

rng_stream rng_stream::fork(uint64_t key) const {
  return rng_stream(seed_, hash_combine(stream_, key));
}
rng_stream rng_stream::fork(uint64_t a, uint64_t b) const { return fork(a).fork(b); }
rng_stream rng_stream::fork(uint64_t a, uint64_t b, uint64_t c) const { return fork(a).fork(b).fork(c); }

int sample_categorical(const double* p, int n, rng_stream& rng) {
  double total = 0;
  for (int i = 0; i < n; ++i) total += p[i];
  double u = rng.uniform() * total;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (p[i] > 0) return i;
  return n - 1;
}

}  // namespace hdlm
