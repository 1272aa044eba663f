#include <zlib.h>

#include <cstring>
#include <fstream>

#include "hdlm/corpus.hpp"

namespace hdlm {

namespace {

constexpr char kCorpusMagic[7] = {'H', 'D', 'C', 'O', 'R', 'P', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw config_error("truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_header(std::ostream& os, uint32_t a, uint32_t b, uint32_t c) {
  os.write(kCorpusMagic, 7);
  put_u32(os, a);
  put_u32(os, b);
  put_u32(os, c);
}

void get_header(std::istream& is, uint32_t& a, uint32_t& b, uint32_t& c) {
  char m[7];
  if (!is.read(m, 7) || std::memcmp(m, kCorpusMagic, 7) != 0) throw config_error("bad magic, expected HDCORP1");
  a = get_u32(is);
  b = get_u32(is);
  c = get_u32(is);
}

}  // namespace

void write_corpus(const std::string& path, int vocab_size, int d, const std::vector<sequence>& seqs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot open " + path);
  put_header(os, vocab_size, d, static_cast<uint32_t>(seqs.size()));
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) != d) throw config_error("write_corpus: ragged sequence");
    for (token t : s) {
      unsigned char b[2] = {static_cast<unsigned char>(t), static_cast<unsigned char>(t >> 8)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  }
}

corpus_file read_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open " + path);
  uint32_t v, d, c;
  get_header(is, v, d, c);
  corpus_file out;
  out.vocab_size = v;
  out.d = d;
  out.seqs.assign(c, sequence(d));
  for (auto& s : out.seqs)
    for (auto& t : s) {
      unsigned char b[2];
      if (!is.read(reinterpret_cast<char*>(b), 2)) throw config_error("truncated corpus " + path);
      t = b[0] | (b[1] << 8);
      if (t >= static_cast<int>(v)) throw config_error("corpus token out of range");
    }
  return out;
}

// header fields: vocab size (real + MASK), rows, cols
void write_markov(const std::string& path, const markov_source& src) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot open " + path);
  put_header(os, src.n + 1, src.n, src.n);
  for (double p : src.transition) {
    uint64_t bits;
    std::memcpy(&bits, &p, 8);
    put_u32(os, static_cast<uint32_t>(bits));
    put_u32(os, static_cast<uint32_t>(bits >> 32));
  }
}

markov_source read_markov(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open " + path);
  uint32_t v, r, c;
  get_header(is, v, r, c);
  if (r != c || v != r + 1) throw config_error("markov file: inconsistent header");
  std::vector<double> P(static_cast<size_t>(r) * c);
  for (auto& p : P) {
    uint64_t lo = get_u32(is), hi = get_u32(is);
    uint64_t bits = lo | (hi << 32);
    std::memcpy(&p, &bits, 8);
  }
  return markov_from_matrix(r, std::move(P));
}

uint32_t crc32_bytes(const void* data, size_t len) {
  return static_cast<uint32_t>(::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

uint32_t crc32_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open " + path);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  char buf[1 << 15];
  while (is) {
    is.read(buf, sizeof buf);
    auto got = is.gcount();
    if (got > 0) crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got));
  }
  return static_cast<uint32_t>(crc);
}

}  // namespace hdlm
