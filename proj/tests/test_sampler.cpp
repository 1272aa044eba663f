#include <doctest.h>

#include <cmath>

#include "hdlm/eval.hpp"
#include "hdlm/sampler.hpp"
#include "oracles.hpp"

using namespace hdlm;

namespace {

hyperschedule two_row(int n, int L, int first, int second) {
  std::vector<int> tau;
  for (int v : {first, second, 0})
    for (int i = 0; i < n; ++i) tau.push_back(v);
  return hyperschedule::from_tau(hs_kind::flat, n, L, tau);
}

hyperschedule make_hs(hs_kind k, int d, int omega, int rho_num, int rho_den, int levels) {
  hs_params hp;
  hp.kind = k;
  hp.d = d;
  hp.omega = omega;
  hp.rho_num = rho_num;
  hp.rho_den = rho_den;
  hp.levels = levels;
  return hyperschedule::build(hp);
}

denoiser tiny(wiring w, bool tc = false) {
  denoiser_config c;
  c.vocab = 6;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.d_max = 16;
  c.wire = w;
  c.time_conditioning = tc;
  c.levels = 4;
  return denoiser(c, rng_stream(7), 0.5);
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("transfer probability") {
    CHECK(transfer_prob(0.8, 0.6) == doctest::Approx(0.25));
    CHECK(transfer_prob(0.5, 0.0) == 1.0);
    CHECK(transfer_prob(0.3, 0.3) == 0.0);
    CHECK_THROWS_AS(transfer_prob(0.0, 0.0), config_error);
  }

  TEST_CASE("gumbel choice frequency matches the categorical") {
    const int N = 100000, V = 3;
    auto hs = two_row(N, 1, 1, 0);
    std::vector<double> lg;
    for (int i = 0; i < N; ++i)
      for (double z : {std::log(0.75), std::log(0.25), 5.0}) lg.push_back(z);
    step_state st;
    st.x.assign(N, V - 1);
    sampler_opts o;
    step_original(st, hs, hs.partition_at(0), lg, V, o, rng_stream(101));
    double zeros = 0;
    for (auto t : st.x) {
      CHECK(t != V - 1);
      zeros += t == 0;
    }
    CHECK(oracle::within_3sigma(zeros, N, 0.75));
    CHECK(st.step == 1);

    step_state cold;
    cold.x.assign(N, V - 1);
    o.temperature = 0;
    step_original(cold, hs, hs.partition_at(0), lg, V, o, rng_stream(101));
    for (auto t : cold.x) CHECK(t == 0);
  }

  TEST_CASE("original step leaves unmasked tokens alone") {
    auto hs = two_row(5, 4, 4, 2);
    std::vector<double> lg(5 * 4, 0.0);
    step_state st;
    st.x = {0, 1, 2, 0, 1};
    auto before = st.x;
    step_original(st, hs, hs.partition_at(0), lg, 4, {}, rng_stream(3));
    CHECK(st.x == before);
    CHECK(st.step == 1);
  }

  TEST_CASE("acs correction frequency") {
    const int N = 100000, V = 4;
    auto hs = two_row(N, 4, 4, 3);  // p_transfer = 0.25
    std::vector<double> lg(static_cast<size_t>(N) * V, 0.0);
    step_state st;
    st.x.assign(N, 0);
    sampler_opts o;
    o.kind = sampler_kind::acs;
    o.eta = 0.5;
    step_acs(st, hs, hs.partition_at(0), lg, V, o, rng_stream(55));
    CHECK(st.correction_trials == N);
    CHECK(oracle::within_3sigma(static_cast<double>(st.corrections), N, 0.375));

    // final step: eta (1 - 1) = 0
    auto last = two_row(N, 4, 4, 0);
    step_state fin;
    fin.x.assign(N, 0);
    o.eta = 1;
    step_acs(fin, last, last.partition_at(0), lg, V, o, rng_stream(55));
    CHECK(fin.corrections == 0);
    o.eta = 1.5;
    CHECK_THROWS_AS(step_acs(fin, last, last.partition_at(0), lg, V, o, rng_stream(55)), config_error);
  }

  TEST_CASE("acs with eta 0 is the original sampler") {
    auto m = tiny(wiring::aligned);
    for (auto k : {hs_kind::flat, hs_kind::block, hs_kind::slide}) {
      auto hs = make_hs(k, 12, 4, 1, 1, 4);
      denoiser_source src(m);
      sampler_opts o;
      auto a = generate(src, hs, o, rng_stream(9));
      o.kind = sampler_kind::acs;
      o.eta = 0;
      auto b = generate(src, hs, o, rng_stream(9));
      CHECK(a.tokens == b.tokens);
      CHECK(a.ledger == b.ledger);
    }
  }

  TEST_CASE("quench with shifted wiring is ancestral sampling") {
    auto m = tiny(wiring::shifted);
    auto hs = make_hs(hs_kind::quench, 8, 1, 1, 1, 1);
    denoiser_source src(m);
    for (uint64_t seed : {1, 2, 3}) {
      auto g = generate(src, hs, {}, rng_stream(seed));
      CHECK(g.tokens == oracle::ar_sample(m, 8, rng_stream(seed), 1.0));
    }
  }

  TEST_CASE("kv ledger") {
    auto m = tiny(wiring::aligned);
    auto hs = make_hs(hs_kind::stride, 12, 4, 2, 1, 4);
    denoiser_source src(m);
    sampler_opts o;
    o.cache = true;
    auto c = generate(src, hs, o, rng_stream(4));
    auto want = kv_cost(12, 4, 2);
    CHECK(c.ledger.calls == want.calls);
    CHECK(c.ledger.calls == 5);
    CHECK(c.ledger.tokens == 12);
    o.cache = false;
    auto n = generate(src, hs, o, rng_stream(4));
    CHECK(n.ledger.calls == 5);
    CHECK(n.ledger.tokens == want.cost_nocache);
    CHECK(n.tokens == c.tokens);
  }

  TEST_CASE("cache on and off agree") {
    for (auto w : {wiring::aligned, wiring::shifted})
      for (bool tc : {false, true})
        for (auto k : {hs_kind::block, hs_kind::slide, hs_kind::stride, hs_kind::quench}) {
          auto m = tiny(w, tc);
          auto hs = make_hs(k, 12, k == hs_kind::quench ? 1 : 4, k == hs_kind::stride ? 2 : 1, 1, 4);
          denoiser_source src(m);
          sampler_opts o;
          o.kind = sampler_kind::acs;
          o.eta = 0.3;
          auto a = generate(src, hs, o, rng_stream(21));
          o.cache = true;
          auto b = generate(src, hs, o, rng_stream(21));
          CHECK(a.tokens == b.tokens);
          CHECK(a.ledger.calls == b.ledger.calls);
          CHECK(b.ledger.query_slots <= a.ledger.query_slots);
        }
  }

  TEST_CASE("flat sampler unmasks a binomial number per step") {
    const int d = 16, V = 5, runs = 1000;
    auto hs = make_hs(hs_kind::flat, d, 4, 1, 1, d);
    REQUIRE(hs.T() == d);
    std::vector<double> lg(static_cast<size_t>(d) * V, 0.0);
    std::vector<double> remaining(d, 0.0);
    rng_stream root(5);
    for (int r = 0; r < runs; ++r) {
      step_state st;
      st.x.assign(d, V - 1);
      for (int t = 0; t < d; ++t) {
        step_original(st, hs, hs.partition_at(t), lg, V, {}, root.fork(r));
        for (auto x : st.x) remaining[t] += x == V - 1;
      }
    }
    for (int t = 0; t < d; ++t) {
      // E[remaining after step t] = d (1 - (t+1)/d); per-run variance of a binomial path is bounded by d/4
      double mean = remaining[t] / runs, want = d - t - 1.0;
      CHECK(std::abs(mean - want) <= 3 * std::sqrt(d / 4.0 / runs) + 1e-12);
    }
    CHECK(remaining[d - 1] == 0);
  }

  TEST_CASE("generation never leaves a mask") {
    constant_logits src({0.1, 0.2, 0.3, 9.0});
    for (auto k : {hs_kind::flat, hs_kind::block, hs_kind::slide, hs_kind::quench}) {
      auto hs = make_hs(k, 10, k == hs_kind::quench ? 1 : 3, 1, 1, 5);
      auto g = generate(src, hs, {}, rng_stream(2));
      for (auto x : g.tokens) CHECK(x < 3);
    }
  }
}
