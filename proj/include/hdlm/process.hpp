#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "hdlm/core.hpp"
#include "hdlm/hyperschedule.hpp"

namespace hdlm {

struct cumulative_schedule {
  std::vector<double> values;  // sigma_bar at levels 0..L
  int levels() const { return static_cast<int>(values.size()) - 1; }
  double at(int tau) const { return values.at(tau); }
};

struct alpha_schedule {
  std::vector<double> values;
  int levels() const { return static_cast<int>(values.size()) - 1; }
  double at(int tau) const { return values.at(tau); }
};

cumulative_schedule loglinear_sigma(int levels, double sigma_min = 1e-3, double sigma_max = 20.0);
alpha_schedule linear_alpha(int levels);

enum class gen_kind { uniform, absorb, hybrid };

// Column x holds the rates out of source token x; MASK is the last index.
struct generator {
  gen_kind kind = gen_kind::absorb;
  int n = 2;
  double gamma = 0;
  Eigen::MatrixXd m;
};

generator make_generator(gen_kind kind, int n, double gamma = 0);
Eigen::MatrixXd q_absorb(int n);
Eigen::MatrixXd q_uniform(int n);

// closed form of exp(delta * Q_gamma)
Eigen::MatrixXd evolve_analytic(int n, double gamma, double delta);

struct evolve_column {
  double stay, other, mask;  // for a real source token
};
evolve_column evolve_real_column(int n, double gamma, double delta);

// one-step kernel (1 + eps Q_U)(1 + (1 - alpha) Q_A)
Eigen::MatrixXd epsilon_kernel(int n, double eps, double alpha);

enum corrupt_flag : uint8_t { flag_unchanged = 0, flag_shuffled = 1, flag_masked = 2 };

struct corrupted {
  sequence tokens;
  std::vector<uint8_t> flags;
};

// Randomness for position i is drawn from rng.fork(i, step) only.
sequence corrupt_gamma_levels(const sequence& seq, const int* tau_row, int step, const cumulative_schedule& sigma,
                              double gamma, const vocab& v, const rng_stream& rng);
sequence corrupt_gamma(const sequence& seq, const hyperschedule& hs, int t, const cumulative_schedule& sigma,
                       double gamma, const vocab& v, const rng_stream& rng);

corrupted corrupt_epsilon_levels(const sequence& seq, const int* tau_row, int step, double eps,
                                 const alpha_schedule& alpha, const vocab& v, const rng_stream& rng);
corrupted corrupt_epsilon(const sequence& seq, const hyperschedule& hs, int t, double eps, const alpha_schedule& alpha,
                          const vocab& v, const rng_stream& rng);

double p_mask_gamma(double gamma, double sigma_bar);

}  // namespace hdlm
