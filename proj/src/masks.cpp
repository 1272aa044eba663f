#include "hdlm/masks.hpp"

#include <sstream>

#include "hdlm/core.hpp"

namespace hdlm {

wiring parse_wiring(const std::string& s) {
  if (s == "aligned") return wiring::aligned;
  if (s == "shifted") return wiring::shifted;
  throw config_error("unknown wiring '" + s + "'");
}

std::string to_string(wiring w) { return w == wiring::aligned ? "aligned" : "shifted"; }

std::string to_string(slot_role r) {
  switch (r) {
    case slot_role::settled: return "settled";
    case slot_role::active: return "active";
    case slot_role::worthless: return "worthless";
    case slot_role::conditioning: return "conditioning";
    case slot_role::clean: return "clean";
    case slot_role::noisy: return "noisy";
  }
  return "?";
}

std::vector<int> attention_mask::keys_of(int q) const {
  std::vector<int> ks;
  for (int k = 0; k < k_len; ++k)
    if (at(q, k)) ks.push_back(k);
  return ks;
}

std::string attention_mask::to_pbm() const {
  std::ostringstream os;
  os << "P1\n" << k_len << " " << q_len << "\n";
  for (int q = 0; q < q_len; ++q) {
    for (int k = 0; k < k_len; ++k) os << (k ? " " : "") << (at(q, k) ? 1 : 0);
    os << "\n";
  }
  return os.str();
}

std::string attention_mask::to_csv() const {
  std::ostringstream os;
  for (int q = 0; q < q_len; ++q) {
    for (int k = 0; k < k_len; ++k) os << (k ? "," : "") << (at(q, k) ? 1 : 0);
    os << "\n";
  }
  return os.str();
}

std::string attention_mask::slots_csv() const {
  static const char* src[] = {"clean", "noisy", "mask"};
  std::ostringstream os;
  os << "slot,role,position,source,input_position\n";
  for (size_t j = 0; j < slots.size(); ++j) {
    const auto& s = slots[j];
    os << j << "," << to_string(s.role) << "," << s.position << "," << src[static_cast<int>(s.source)] << ","
       << s.input_position << "\n";
  }
  return os.str();
}

static attention_mask blank(int n) {
  attention_mask m;
  m.q_len = m.k_len = n;
  m.allowed.assign(static_cast<size_t>(n) * n, 0);
  m.slots.resize(n);
  return m;
}

attention_mask inference_mask(wiring w, const partition& p) {
  const int d = p.d, s = p.s, e = p.s + p.a;
  if (s < 0 || p.a < 0 || e > d || d < 1) throw config_error("inference_mask: invalid partition");
  attention_mask m = blank(d);
  for (int j = 0; j < d; ++j) {
    auto& si = m.slots[j];
    si.position = j;
    if (j < s) {
      si.role = slot_role::settled;
      for (int k = 0; k <= j; ++k) m.set(j, k);
    } else if (j < e) {
      si.role = slot_role::active;
      for (int k = 0; k < e; ++k) m.set(j, k);
    } else {
      si.role = slot_role::worthless;
      m.set(j, j);
    }
    if (w == wiring::aligned) {
      si.source = j < s ? slot_source::clean : slot_source::noisy;
      si.input_position = j;
    } else {
      si.input_position = j - 1;
      si.source = j == 0 ? slot_source::mask_token : (j - 1 < s ? slot_source::clean : slot_source::noisy);
    }
  }
  if (w == wiring::shifted) m.slots[0].role = slot_role::conditioning;
  return m;
}

std::vector<interval> training_intervals(hs_kind kind, int d, int omega, const std::vector<int>& starts) {
  if (kind != hs_kind::slide && kind != hs_kind::block)
    throw config_error("training_mask: kind must be slide or block");
  if (d < 1 || omega < 1 || omega > d) throw config_error("training_mask: need 1 <= omega <= d");
  std::vector<interval> out;
  int total = 0;
  for (size_t n = 0; n < starts.size(); ++n) {
    int j = starts[n];
    if (j < 0 || j >= d) throw config_error("training_mask: start out of range");
    if (n > 0 && j <= starts[n - 1]) throw config_error("training_mask: starts must be strictly increasing");
    if (kind == hs_kind::block && j % omega != 0) throw config_error("training_mask: block starts must be multiples of omega");
    interval iv{j, std::min(j + omega, d)};
    total += iv.end - iv.start;
    out.push_back(iv);
  }
  if (total > d) throw config_error("training_mask: intervals overflow the d denoising slots");
  return out;
}

attention_mask training_mask(wiring w, hs_kind kind, int d, int omega, const std::vector<int>& starts) {
  auto ivs = training_intervals(kind, d, omega, starts);
  int n = d;
  for (const auto& iv : ivs) n += iv.end - iv.start;
  attention_mask m = blank(n);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k <= j; ++k) m.set(j, k);
    auto& si = m.slots[j];
    si.role = slot_role::clean;
    si.position = j;
    si.source = slot_source::clean;
    si.input_position = w == wiring::aligned ? j : j - 1;
    if (w == wiring::shifted && j == 0) {
      si.source = slot_source::mask_token;
      si.role = slot_role::conditioning;
    }
  }
  int base = d;
  for (const auto& iv : ivs) {
    int width = iv.end - iv.start;
    for (int a = 0; a < width; ++a) {
      int q = base + a;
      for (int k = 0; k < iv.start; ++k) m.set(q, k);
      for (int b = 0; b < width; ++b) m.set(q, base + b);
      auto& si = m.slots[q];
      si.role = slot_role::noisy;
      si.position = iv.start + a;
      if (w == wiring::aligned) {
        si.source = slot_source::noisy;
        si.input_position = iv.start + a;
      } else {
        // first slot repeats the clean token before the interval; the last noisy token is never fed
        si.input_position = iv.start + a - 1;
        if (a == 0)
          si.source = iv.start == 0 ? slot_source::mask_token : slot_source::clean;
        else
          si.source = slot_source::noisy;
      }
    }
    base += width;
  }
  return m;
}

kv_cost_t kv_cost(int L, int omega, int rho) {
  if (L < 1) throw config_error("kv_cost: L must be >= 1");
  if (omega < 1) throw config_error("kv_cost: omega must be >= 1");
  if (omega > L) throw config_error("kv_cost: omega > L");
  if (rho < 1) throw config_error("kv_cost: rho must be >= 1");
  kv_cost_t c{L, omega, rho, 0, 0, 0};
  c.calls = (L - omega + rho - 1) / rho + 1;
  c.cost_nocache = c.calls * omega;
  c.cost_cache = omega + (c.calls - 1) * rho;
  return c;
}

}  // namespace hdlm
