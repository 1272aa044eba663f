#include <doctest.h>

#include <cmath>

#include "hdlm/process.hpp"
#include "oracles.hpp"

using namespace hdlm;

TEST_SUITE("process") {
  TEST_CASE("log-linear sigma") {
    auto s1 = loglinear_sigma(1, 1e-3, 20);
    CHECK(s1.values == std::vector<double>{0, 20});
    auto s2 = loglinear_sigma(2, 1e-3, 20);
    CHECK(s2.values[1] == doctest::Approx(std::sqrt(1e-3 * 20)).epsilon(1e-14));
    rng_stream r(3);
    for (int k = 0; k < 100; ++k) {
      double lo = 1e-4 + r.uniform(), hi = lo + 1e-3 + 30 * r.uniform();
      int L = 1 + static_cast<int>(r.below(50));
      auto s = loglinear_sigma(L, lo, hi);
      for (int i = 1; i <= L; ++i) CHECK(s.values[i] >= s.values[i - 1]);
    }
    CHECK_THROWS_AS(loglinear_sigma(3, 2, 1), config_error);
  }

  TEST_CASE("linear alpha") {
    CHECK(linear_alpha(4).values == std::vector<double>{1, 0.75, 0.5, 0.25, 0});
    auto a = linear_alpha(7);
    CHECK(a.values.front() == 1);
    CHECK(a.values.back() == 0);
    for (int t = 1; t < 7; ++t) CHECK(a.values[t] / a.values[t - 1] < 1);
  }

  TEST_CASE("generators") {
    Eigen::MatrixXd a(3, 3), u(3, 3);
    a << -1, 0, 0, 0, -1, 0, 1, 1, 0;
    u << -0.5, 0.5, 0, 0.5, -0.5, 0, 0, 0, 0;
    CHECK(make_generator(gen_kind::absorb, 3).m == a);
    CHECK((make_generator(gen_kind::uniform, 3).m - u).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(make_generator(gen_kind::hybrid, 5, 0).m == q_absorb(5));
    CHECK(make_generator(gen_kind::hybrid, 5, 1).m == q_uniform(5));
    auto h = make_generator(gen_kind::hybrid, 3, 0.5).m;
    CHECK(h.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    for (int n = 2; n <= 9; ++n) {
      auto U = q_uniform(n);
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
          if (x != y) CHECK(U(y, x) >= 0);
      CHECK(U.col(n - 1).isZero());
      CHECK(q_absorb(n).col(n - 1).isZero());
    }
    CHECK_THROWS_AS(make_generator(gen_kind::absorb, 1), config_error);
  }

  TEST_CASE("evolution operator fixture") {
    CHECK(evolve_analytic(4, 0.3, 0).isApprox(Eigen::MatrixXd::Identity(4, 4)));
    auto E = evolve_analytic(3, 0.5, std::log(4.0));
    CHECK(E(0, 0) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK(E(1, 0) == doctest::Approx(0.125).epsilon(1e-14));
    CHECK(E(2, 0) == doctest::Approx(0.5).epsilon(1e-14));
    auto T = oracle::taylor_expm(std::log(4.0) * make_generator(gen_kind::hybrid, 3, 0.5).m);
    CHECK((E - T).cwiseAbs().maxCoeff() < 1e-12);
    auto c = evolve_real_column(3, 0.5, std::log(4.0));
    CHECK(c.stay == doctest::Approx(0.375));
    CHECK(c.other == doctest::Approx(0.125));
    CHECK(c.mask == doctest::Approx(0.5));
    CHECK_THROWS_AS(evolve_analytic(3, 0.5, -1), config_error);
  }

  TEST_CASE("SEDD limits") {
    for (double D : {0.0, 0.3, 2.0, 9.0}) {
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(6, 6);
      CHECK((evolve_analytic(6, 0, D) - (I - std::expm1(-D) * q_absorb(6))).cwiseAbs().maxCoeff() < 1e-15);
      CHECK((evolve_analytic(6, 1, D) - (I - std::expm1(-D) * q_uniform(6))).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  TEST_CASE("epsilon kernel is stochastic with the expected diagonal") {
    for (int n : {3, 6, 17})
      for (double eps : {0.0, 0.01, 0.3})
        for (double al : {0.0, 0.4, 1.0}) {
          auto K = epsilon_kernel(n, eps, al);
          CHECK(K.minCoeff() >= -1e-15);
          CHECK((K.colwise().sum().array() - 1).abs().maxCoeff() < 1e-10);
          if (al == 1.0) CHECK(K(0, 0) == doctest::Approx(1 - eps * (n - 2.0) / (n - 1)));
        }
  }

  TEST_CASE("corrupt_gamma") {
    vocab v(3);
    auto sig = loglinear_sigma(2, 1e-3, 20);
    hs_params hp;
    hp.kind = hs_kind::flat;
    hp.d = 32;
    hp.levels = 2;
    hp.rho_num = 16;
    auto hs = hyperschedule::build(hp);
    sequence y(32, 1);
    CHECK(corrupt_gamma(y, hs, hs.T(), sig, 0.5, v, rng_stream(1)) == y);
    auto x = corrupt_gamma(y, hs, 0, sig, 0.0, v, rng_stream(1));
    for (auto t : x) CHECK(t == v.mask_id());
    sequence with_mask{2, 0};
    int row[2] = {2, 2};
    auto m = corrupt_gamma_levels(with_mask, row, 0, sig, 0.7, v, rng_stream(5));
    CHECK(m[0] == 2);

    // stay / other / MASK frequencies at delta = ln 4, gamma = 1/2
    cumulative_schedule custom{{0, std::log(4.0)}};
    double stay = 0, other = 0, mask = 0;
    const int N = 100000;
    sequence one{0};
    int lvl[1] = {1};
    rng_stream root(77);
    for (int k = 0; k < N; ++k) {
      auto z = corrupt_gamma_levels(one, lvl, 0, custom, 0.5, v, root.fork(k));
      stay += z[0] == 0;
      other += z[0] == 1;
      mask += z[0] == 2;
    }
    CHECK(oracle::within_3sigma(stay, N, 0.375));
    CHECK(oracle::within_3sigma(other, N, 0.125));
    CHECK(oracle::within_3sigma(mask, N, 0.5));
  }

  TEST_CASE("corrupt_epsilon") {
    vocab v(17);
    auto al = linear_alpha(4);
    const int N = 100000;
    rng_stream root(9);
    double shuffled = 0, masked = 0;
    for (int k = 0; k < N; ++k) {
      sequence y{3};
      int lvl0[1] = {0};
      int lvl2[1] = {2};
      auto a = corrupt_epsilon_levels(y, lvl0, 0, 0.5, al, v, root.fork(k));
      CHECK(a.tokens == y);
      CHECK(a.flags[0] == flag_unchanged);
      auto b = corrupt_epsilon_levels(y, lvl2, 0, 0.0, al, v, root.fork(k));
      masked += b.flags[0] == flag_masked;
      CHECK((b.tokens[0] == 3 || b.tokens[0] == v.mask_id()));
    }
    CHECK(oracle::within_3sigma(masked, N, 0.5));
    // alpha = 1 via a schedule whose level 1 keeps everything
    alpha_schedule keep{{1.0, 1.0}};
    for (int k = 0; k < N; ++k) {
      sequence y{5};
      int lvl[1] = {1};
      auto c = corrupt_epsilon_levels(y, lvl, 0, 0.01, keep, v, root.fork(k, 1));
      CHECK(c.flags[0] != flag_masked);
      shuffled += c.flags[0] == flag_shuffled;
      CHECK((c.flags[0] == flag_shuffled) == (c.tokens[0] != 5));
    }
    CHECK(oracle::within_3sigma(shuffled, N, 0.01 * 15.0 / 16.0));
    alpha_schedule none{{1.0, 0.0}};
    sequence y(10, 4);
    std::vector<int> lv(10, 1);
    auto d = corrupt_epsilon_levels(y, lv.data(), 0, 0.2, none, v, root);
    for (auto t : d.tokens) CHECK(t == v.mask_id());
  }
}
