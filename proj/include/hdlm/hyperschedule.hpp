#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hdlm {

// Stride: window of width omega advancing rho positions per call (block-wise decoding with overlap).
enum class hs_kind { quench, flat, block, slide, stride };

hs_kind parse_hs_kind(const std::string& s);
std::string to_string(hs_kind k);

struct rational {
  int64_t num = 1, den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const rational&) const = default;
};
rational make_rational(int64_t num, int64_t den);

struct hs_params {
  hs_kind kind = hs_kind::flat;
  int d = 1;
  int levels = 1;
  int omega = 1;
  int64_t rho_num = 1, rho_den = 1;
};

struct partition {
  int s = 0, a = 0, d = 0;  // settled [0,s), active [s,s+a), worthless [s+a,d)
  int settled_end() const { return s; }
  int active_end() const { return s + a; }
};

class hyperschedule {
public:
  static hyperschedule build(const hs_params& p);
  // takes an arbitrary tau matrix ((T+1) x d, row-major); checks invariants
  static hyperschedule from_tau(hs_kind kind, int d, int levels, std::vector<int> tau);

  hs_kind kind() const { return p_.kind; }
  const hs_params& params() const { return p_; }
  int d() const { return p_.d; }
  int T() const { return T_; }
  int levels() const { return p_.levels; }
  int tau(int t, int i) const { return tau_[static_cast<size_t>(t) * p_.d + i]; }
  const int* row(int t) const { return &tau_[static_cast<size_t>(t) * p_.d]; }

  int window_width() const;
  rational generation_rate() const;
  partition partition_at(int t) const;

  void validate() const;
  std::string to_csv() const;
  std::string to_pgm() const;

private:
  hs_params p_;
  int T_ = 0;
  std::vector<int> tau_;
};

// round(levels * num / den) with halves rounded up, for 0 <= num <= den
int round_level(int levels, int64_t num, int64_t den);

}  // namespace hdlm
