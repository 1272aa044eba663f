#include <cstring>
#include <fstream>

#include "hdlm/denoiser.hpp"

namespace hdlm {

namespace {

constexpr char kMagic[7] = {'H', 'D', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw config_error("checkpoint: truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void denoiser::round_to_f32() {
  for (auto& x : p_.t)
    for (auto& v : x.v) v = static_cast<double>(static_cast<float>(v));
}

void denoiser::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot open " + path);
  os.write(kMagic, 7);
  const denoiser_config& c = cfg_;
  uint32_t fields[] = {static_cast<uint32_t>(c.vocab),  static_cast<uint32_t>(c.dim),
                       static_cast<uint32_t>(c.heads),  static_cast<uint32_t>(c.layers),
                       static_cast<uint32_t>(c.d_max),  static_cast<uint32_t>(c.mlp_mult),
                       c.wire == wiring::shifted ? 1u : 0u, c.time_conditioning ? 1u : 0u,
                       c.weighted_embedding ? 1u : 0u,  static_cast<uint32_t>(c.levels)};
  put_u32(os, sizeof(fields) / sizeof(fields[0]));
  for (uint32_t f : fields) put_u32(os, f);
  put_u32(os, static_cast<uint32_t>(p_.t.size()));
  for (const auto& t : p_.t) {
    put_u32(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int s : t.shape) put_u32(os, static_cast<uint32_t>(s));
    for (double v : t.v) {
      float f = static_cast<float>(v);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(os, bits);
    }
  }
  if (!os) throw config_error("checkpoint: write failed for " + path);
}

denoiser denoiser::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open " + path);
  char m[7];
  if (!is.read(m, 7) || std::memcmp(m, kMagic, 7) != 0) throw config_error("checkpoint: bad magic in " + path);
  uint32_t nf = get_u32(is);
  if (nf != 10) throw config_error("checkpoint: unexpected config block size");
  uint32_t f[10];
  for (auto& x : f) x = get_u32(is);
  denoiser d;
  denoiser_config& c = d.cfg_;
  c.vocab = f[0];
  c.dim = f[1];
  c.heads = f[2];
  c.layers = f[3];
  c.d_max = f[4];
  c.mlp_mult = f[5];
  c.wire = f[6] ? wiring::shifted : wiring::aligned;
  c.time_conditioning = f[7] != 0;
  c.weighted_embedding = f[8] != 0;
  c.levels = f[9];
  c.validate();
  uint32_t nt = get_u32(is);
  for (uint32_t i = 0; i < nt; ++i) {
    tensor t;
    uint32_t nl = get_u32(is);
    if (nl > 4096) throw config_error("checkpoint: corrupt tensor name");
    t.name.resize(nl);
    if (!is.read(t.name.data(), nl)) throw config_error("checkpoint: truncated file");
    uint32_t nd = get_u32(is);
    if (nd > 8) throw config_error("checkpoint: corrupt tensor rank");
    size_t n = 1;
    for (uint32_t k = 0; k < nd; ++k) {
      t.shape.push_back(static_cast<int>(get_u32(is)));
      n *= t.shape.back();
    }
    t.v.resize(n);
    for (auto& v : t.v) {
      uint32_t bits = get_u32(is);
      float x;
      std::memcpy(&x, &bits, 4);
      v = x;
    }
    d.p_.t.push_back(std::move(t));
  }
  d.index();
  return d;
}

}  // namespace hdlm
