#include "hdlm/hyperschedule.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hdlm/core.hpp"

namespace hdlm {

hs_kind parse_hs_kind(const std::string& s) {
  if (s == "quench") return hs_kind::quench;
  if (s == "flat") return hs_kind::flat;
  if (s == "block") return hs_kind::block;
  if (s == "slide") return hs_kind::slide;
  if (s == "stride") return hs_kind::stride;
  throw config_error("unknown hyperschedule kind '" + s + "'");
}

std::string to_string(hs_kind k) {
  switch (k) {
    case hs_kind::quench: return "quench";
    case hs_kind::flat: return "flat";
    case hs_kind::block: return "block";
    case hs_kind::slide: return "slide";
    case hs_kind::stride: return "stride";
  }
  return "?";
}

rational make_rational(int64_t num, int64_t den) {
  if (den == 0) throw config_error("rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g == 0) g = 1;
  return {num / g, den / g};
}

int round_level(int levels, int64_t num, int64_t den) {
  if (num <= 0) return 0;
  if (num >= den) return levels;
  // floor(levels*num/den + 1/2) = floor((2*levels*num + den) / (2*den))
  return static_cast<int>((2 * static_cast<int64_t>(levels) * num + den) / (2 * den));
}

static int64_t ceil_div(int64_t a, int64_t b) {
  if (b <= 0) throw config_error("ceil_div: non-positive divisor");
  if (a >= 0) return (a + b - 1) / b;
  return -((-a) / b);
}

static int64_t floor_div(int64_t a, int64_t b) {
  if (a >= 0) return a / b;
  return -ceil_div(-a, b);
}

hyperschedule hyperschedule::build(const hs_params& in) {
  hs_params p = in;
  if (p.d < 1) throw config_error("hyperschedule: d must be >= 1");
  if (p.levels < 1) throw config_error("hyperschedule: levels must be >= 1");
  if (p.rho_num <= 0 || p.rho_den <= 0) throw config_error("hyperschedule: rho must be > 0");
  rational rho = make_rational(p.rho_num, p.rho_den);
  p.rho_num = rho.num;
  p.rho_den = rho.den;
  const int d = p.d;
  hyperschedule hs;
  std::vector<int>& tau = hs.tau_;
  int T = 0;
  auto alloc = [&](int steps) {
    T = steps;
    tau.assign(static_cast<size_t>(T + 1) * d, 0);
  };
  auto at = [&](int t, int i) -> int& { return tau[static_cast<size_t>(t) * d + i]; };

  switch (p.kind) {
    case hs_kind::quench: {
      p.levels = 1;
      p.omega = 1;
      p.rho_num = p.rho_den = 1;
      alloc(d);
      for (int t = 0; t <= T; ++t)
        for (int i = 0; i < d; ++i) at(t, i) = i >= t ? 1 : 0;
      break;
    }
    case hs_kind::flat: {
      p.omega = d;
      alloc(static_cast<int>(ceil_div(d * rho.den, rho.num)));
      for (int t = 0; t <= T; ++t) {
        int v = round_level(p.levels, T - t, T);
        for (int i = 0; i < d; ++i) at(t, i) = v;
      }
      break;
    }
    case hs_kind::block: {
      if (p.omega < 1) throw config_error("hyperschedule: omega must be >= 1");
      if (p.omega > d) throw config_error("hyperschedule: omega > d");
      const int64_t k = ceil_div(p.omega * rho.den, rho.num);
      const int64_t blocks = ceil_div(d, p.omega);
      alloc(static_cast<int>(k * blocks));
      for (int t = 0; t <= T; ++t)
        for (int i = 0; i < d; ++i) {
          int64_t b = i / p.omega;
          int64_t r = t - b * k;  // steps elapsed inside the block's window
          at(t, i) = round_level(p.levels, k - std::clamp<int64_t>(r, 0, k), k);
        }
      break;
    }
    case hs_kind::slide: {
      if (p.omega < 1) throw config_error("hyperschedule: omega must be >= 1");
      if (p.omega > d) throw config_error("hyperschedule: omega > d");
      const int64_t w = p.omega;
      alloc(static_cast<int>(ceil_div(rho.den * (d + w - 1), rho.num)));
      for (int t = 0; t <= T; ++t)
        for (int i = 0; i < d; ++i) {
          int64_t num = rho.den * (i + w) - static_cast<int64_t>(t) * rho.num;
          at(t, i) = round_level(p.levels, std::clamp<int64_t>(num, 0, rho.den * w), rho.den * w);
        }
      break;
    }
    case hs_kind::stride: {
      if (p.omega < 1) throw config_error("hyperschedule: omega must be >= 1");
      if (p.omega > d) throw config_error("hyperschedule: omega > d");
      if (rho.den != 1) throw config_error("hyperschedule: stride needs an integer rho");
      const int64_t w = p.omega, r = rho.num;
      if (r > w) throw config_error("hyperschedule: stride needs rho <= omega");
      const int64_t N = ceil_div(d - w, r) + 1;
      alloc(static_cast<int>(N));
      for (int i = 0; i < d; ++i) {
        int64_t enter = std::max<int64_t>(0, ceil_div(i - w + 1, r));
        int64_t settle = std::min<int64_t>(floor_div(i, r) + 1, N);
        int64_t m = settle - enter;
        for (int t = 0; t <= T; ++t) {
          int64_t left = std::clamp<int64_t>(settle - t, 0, m);
          at(t, i) = round_level(p.levels, left, m);
        }
      }
      break;
    }
  }
  hs.p_ = p;
  hs.T_ = T;
  hs.validate();
  return hs;
}

hyperschedule hyperschedule::from_tau(hs_kind kind, int d, int levels, std::vector<int> tau) {
  if (d < 1 || levels < 1 || tau.size() % d != 0 || tau.size() < 2 * static_cast<size_t>(d))
    throw config_error("hyperschedule: bad tau shape");
  hyperschedule hs;
  hs.p_.kind = kind;
  hs.p_.d = d;
  hs.p_.levels = levels;
  hs.T_ = static_cast<int>(tau.size() / d) - 1;
  hs.tau_ = std::move(tau);
  hs.p_.omega = hs.window_width();
  hs.validate();
  return hs;
}

void hyperschedule::validate() const {
  const int d = p_.d, L = p_.levels;
  for (int i = 0; i < d; ++i) {
    if (tau(0, i) != L) throw numeric_error("hyperschedule: first row must be all levels");
    if (tau(T_, i) != 0) throw numeric_error("hyperschedule: last row must be all zero");
    for (int t = 0; t <= T_; ++t) {
      int v = tau(t, i);
      if (v < 0 || v > L) throw numeric_error("hyperschedule: entry out of range");
      if (t > 0 && v > tau(t - 1, i)) throw numeric_error("hyperschedule: tau increases in t");
    }
  }
}

int hyperschedule::window_width() const {
  const int d = p_.d, L = p_.levels;
  int best = 0;
  for (int t = 0; t < T_; ++t) {
    int c = 0;
    for (int i = 0; i < d; ++i) {
      int a = tau(t, i), b = tau(t + 1, i);
      if (!(a == 0 && b == 0) && !(a == L && b == L)) ++c;
    }
    best = std::max(best, c);
  }
  return best;
}

rational hyperschedule::generation_rate() const { return make_rational(p_.d, T_); }

partition hyperschedule::partition_at(int t) const {
  if (t < 0 || t >= T_) throw config_error("partition_at: step out of range");
  const int d = p_.d, L = p_.levels;
  if (p_.kind == hs_kind::flat) return {0, d, d};
  int i = 0;
  while (i < d && tau(t, i) == 0 && tau(t + 1, i) == 0) ++i;
  int s = i;
  while (i < d && !(tau(t, i) == L && tau(t + 1, i) == L)) {
    if (tau(t, i) == 0 && tau(t + 1, i) == 0) throw numeric_error("partition_at: non-contiguous tau rows");
    ++i;
  }
  int a = i - s;
  for (; i < d; ++i)
    if (!(tau(t, i) == L && tau(t + 1, i) == L)) throw numeric_error("partition_at: non-contiguous tau rows");
  return {s, a, d};
}

std::string hyperschedule::to_csv() const {
  std::ostringstream os;
  for (int t = 0; t <= T_; ++t) {
    for (int i = 0; i < p_.d; ++i) os << (i ? "," : "") << tau(t, i);
    os << "\n";
  }
  return os.str();
}

std::string hyperschedule::to_pgm() const {
  std::ostringstream os;
  os << "P2\n" << p_.d << " " << (T_ + 1) << "\n" << p_.levels << "\n";
  for (int t = 0; t <= T_; ++t) {
    for (int i = 0; i < p_.d; ++i) os << (i ? " " : "") << tau(t, i);
    os << "\n";
  }
  return os.str();
}

}  // namespace hdlm
