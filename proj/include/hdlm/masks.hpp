#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdlm/hyperschedule.hpp"

namespace hdlm {

enum class wiring { aligned, shifted };
wiring parse_wiring(const std::string& s);
std::string to_string(wiring w);

enum class slot_role : uint8_t { settled, active, worthless, conditioning, clean, noisy };
std::string to_string(slot_role r);

// Where the token fed into a slot comes from.
enum class slot_source : uint8_t { clean, noisy, mask_token };

struct slot_info {
  slot_role role = slot_role::settled;
  int position = 0;        // position whose output this slot predicts
  slot_source source = slot_source::clean;
  int input_position = 0;  // position of the fed token (-1 for the conditioning MASK)
};

struct attention_mask {
  int q_len = 0, k_len = 0;
  std::vector<uint8_t> allowed;  // q_len x k_len, row-major
  std::vector<slot_info> slots;

  bool at(int q, int k) const { return allowed[static_cast<size_t>(q) * k_len + k] != 0; }
  void set(int q, int k, bool v = true) { allowed[static_cast<size_t>(q) * k_len + k] = v ? 1 : 0; }
  std::vector<int> keys_of(int q) const;

  std::string to_pbm() const;
  std::string to_csv() const;
  std::string slots_csv() const;
};

attention_mask inference_mask(wiring w, const partition& p);

struct interval {
  int start = 0, end = 0;  // positions [start, end)
};

std::vector<interval> training_intervals(hs_kind kind, int d, int omega, const std::vector<int>& starts);
attention_mask training_mask(wiring w, hs_kind kind, int d, int omega, const std::vector<int>& starts);

struct kv_cost_t {
  int L = 0, omega = 0, rho = 0;
  int calls = 0;
  int cost_nocache = 0;
  int cost_cache = 0;
};

kv_cost_t kv_cost(int L, int omega, int rho);

}  // namespace hdlm
