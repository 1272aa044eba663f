#include "hdlm/denoiser.hpp"

#include <cmath>
#include <random>

namespace hdlm {

void denoiser_config::validate() const {
  if (vocab < 2) throw config_error("denoiser: vocab must be >= 2");
  if (dim < 1 || heads < 1 || dim % heads != 0) throw config_error("denoiser: dim must be divisible by heads");
  if (layers < 1) throw config_error("denoiser: layers must be >= 1");
  if (d_max < 1) throw config_error("denoiser: d_max must be >= 1");
  if (mlp_mult < 1) throw config_error("denoiser: mlp_mult must be >= 1");
  if (levels < 1) throw config_error("denoiser: levels must be >= 1");
}

tensor& param_set::get(const std::string& name) {
  for (auto& x : t)
    if (x.name == name) return x;
  throw config_error("no parameter named " + name);
}
const tensor& param_set::get(const std::string& name) const {
  for (auto& x : t)
    if (x.name == name) return x;
  throw config_error("no parameter named " + name);
}
size_t param_set::count() const {
  size_t n = 0;
  for (auto& x : t) n += x.size();
  return n;
}
param_set param_set::zeros_like() const {
  param_set z = *this;
  z.set_zero();
  return z;
}
void param_set::set_zero() {
  for (auto& x : t) std::fill(x.v.begin(), x.v.end(), 0.0);
}
double param_set::norm() const {
  double s = 0;
  for (auto& x : t)
    for (double v : x.v) s += v * v;
  return std::sqrt(s);
}

namespace {

constexpr double kLnEps = 1e-5;

// out[r, :] = bias + in[r, :] W ; W is in_dim x out_dim
void linear(const double* in, int rows, int in_dim, const double* W, const double* bias, int out_dim, double* out) {
  for (int r = 0; r < rows; ++r) {
    double* o = out + static_cast<size_t>(r) * out_dim;
    const double* a = in + static_cast<size_t>(r) * in_dim;
    for (int c = 0; c < out_dim; ++c) o[c] = bias[c];
    for (int k = 0; k < in_dim; ++k) {
      const double ak = a[k];
      const double* w = W + static_cast<size_t>(k) * out_dim;
      for (int c = 0; c < out_dim; ++c) o[c] += ak * w[c];
    }
  }
}

// dW += in^T dout ; db += sum dout ; din = dout W^T (din overwritten if non-null)
void linear_back(const double* in, int rows, int in_dim, const double* W, int out_dim, const double* dout, double* dW,
                 double* db, double* din) {
  for (int r = 0; r < rows; ++r) {
    const double* a = in + static_cast<size_t>(r) * in_dim;
    const double* g = dout + static_cast<size_t>(r) * out_dim;
    for (int c = 0; c < out_dim; ++c) db[c] += g[c];
    for (int k = 0; k < in_dim; ++k) {
      const double ak = a[k];
      double* dw = dW + static_cast<size_t>(k) * out_dim;
      for (int c = 0; c < out_dim; ++c) dw[c] += ak * g[c];
    }
    if (din) {
      double* di = din + static_cast<size_t>(r) * in_dim;
      for (int k = 0; k < in_dim; ++k) {
        const double* w = W + static_cast<size_t>(k) * out_dim;
        double s = 0;
        for (int c = 0; c < out_dim; ++c) s += g[c] * w[c];
        di[k] = s;
      }
    }
  }
}

void layernorm(const double* x, int rows, int dim, const double* g, const double* b, double* y, double* xhat,
               double* rstd) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<size_t>(r) * dim;
    double mu = 0;
    for (int c = 0; c < dim; ++c) mu += xr[c];
    mu /= dim;
    double var = 0;
    for (int c = 0; c < dim; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= dim;
    double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[r] = rs;
    for (int c = 0; c < dim; ++c) {
      double h = (xr[c] - mu) * rs;
      xhat[static_cast<size_t>(r) * dim + c] = h;
      y[static_cast<size_t>(r) * dim + c] = g[c] * h + b[c];
    }
  }
}

// dx += layernorm backward
void layernorm_back(const double* dy, int rows, int dim, const double* g, const double* xhat, const double* rstd,
                    double* dg, double* db, double* dx) {
  std::vector<double> dh(dim);
  for (int r = 0; r < rows; ++r) {
    const double* dyr = dy + static_cast<size_t>(r) * dim;
    const double* xh = xhat + static_cast<size_t>(r) * dim;
    double m1 = 0, m2 = 0;
    for (int c = 0; c < dim; ++c) {
      dg[c] += dyr[c] * xh[c];
      db[c] += dyr[c];
      dh[c] = dyr[c] * g[c];
      m1 += dh[c];
      m2 += dh[c] * xh[c];
    }
    m1 /= dim;
    m2 /= dim;
    double* dxr = dx + static_cast<size_t>(r) * dim;
    for (int c = 0; c < dim; ++c) dxr[c] += rstd[r] * (dh[c] - m1 - xh[c] * m2);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double u) { return 0.5 * u * (1 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }
inline double gelu_grad(double u) {
  double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1 + t) + 0.5 * u * (1 - t * t) * kGeluC * (1 + 3 * 0.044715 * u * u);
}

}  // namespace

struct forward_tape {
  int S = 0, nc = 0;  // new slots, cached slots
  std::vector<std::vector<int>> keys;  // per query, indices into [cache ; new]
  std::vector<double> x0;
  struct layer {
    std::vector<double> x_in, h1, xh1, rs1, q, k, v, att, o, x_mid, h2, xh2, rs2, u, g;
  };
  std::vector<layer> L;
  std::vector<double> x_out, hf, xhf, rsf, logits;
};

denoiser::denoiser(const denoiser_config& cfg, rng_stream rng, double init_scale) : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg.dim, V = cfg.vocab, F = cfg.dim * cfg.mlp_mult;
  auto add = [&](const std::string& name, std::vector<int> shape, double scale, double fill = 0.0) {
    tensor x;
    x.name = name;
    x.shape = shape;
    size_t n = 1;
    for (int s : shape) n *= s;
    x.v.assign(n, fill);
    if (scale > 0) {
      rng_stream r = rng.fork(std::hash<std::string>{}(name));
      std::normal_distribution<double> nd(0.0, scale);
      for (auto& v : x.v) v = nd(r);
    }
    p_.t.push_back(std::move(x));
  };
  add("tok_emb", {V, D}, init_scale);
  add("pos_emb", {cfg.d_max, D}, init_scale);
  if (cfg.time_conditioning) add("time_emb", {cfg.levels + 1, D}, init_scale);
  const double proj_scale = init_scale / std::sqrt(2.0 * cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.g", {D}, 0, 1.0);
    add(p + "ln1.b", {D}, 0);
    add(p + "wq", {D, D}, init_scale);
    add(p + "bq", {D}, 0);
    add(p + "wk", {D, D}, init_scale);
    add(p + "bk", {D}, 0);
    add(p + "wv", {D, D}, init_scale);
    add(p + "bv", {D}, 0);
    add(p + "wo", {D, D}, proj_scale);
    add(p + "bo", {D}, 0);
    add(p + "ln2.g", {D}, 0, 1.0);
    add(p + "ln2.b", {D}, 0);
    add(p + "w1", {D, F}, init_scale);
    add(p + "b1", {F}, 0);
    add(p + "w2", {F, D}, proj_scale);
    add(p + "b2", {D}, 0);
  }
  add("lnf.g", {D}, 0, 1.0);
  add("lnf.b", {D}, 0);
  add("w_out", {D, V}, init_scale);
  add("b_out", {V}, 0);
  index();
}

void denoiser::index() {
  auto find = [&](const std::string& n) -> int {
    for (size_t i = 0; i < p_.t.size(); ++i)
      if (p_.t[i].name == n) return static_cast<int>(i);
    return -1;
  };
  tok_ = find("tok_emb");
  pos_ = find("pos_emb");
  time_ = find("time_emb");
  lnfg_ = find("lnf.g");
  lnfb_ = find("lnf.b");
  wout_ = find("w_out");
  bout_ = find("b_out");
  li_.clear();
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    layer_idx x{find(p + "ln1.g"), find(p + "ln1.b"), find(p + "wq"), find(p + "bq"), find(p + "wk"),
                find(p + "bk"),    find(p + "wv"),    find(p + "bv"), find(p + "wo"), find(p + "bo"),
                find(p + "ln2.g"), find(p + "ln2.b"), find(p + "w1"), find(p + "b1"), find(p + "w2"),
                find(p + "b2")};
    const int* xs = &x.ln1g;
    for (int i = 0; i < 16; ++i)
      if (xs[i] < 0) throw config_error("denoiser: missing layer parameter");
    li_.push_back(x);
  }
  if (tok_ < 0 || pos_ < 0 || lnfg_ < 0 || lnfb_ < 0 || wout_ < 0 || bout_ < 0)
    throw config_error("denoiser: missing parameter");
  if (cfg_.time_conditioning && time_ < 0) throw config_error("denoiser: missing time_emb");
}

void denoiser::kv_cache::clear(int layers) {
  k.assign(layers, {});
  v.assign(layers, {});
  n = 0;
}

void denoiser::run(const slot_batch& b, forward_tape& tp, const kv_cache* cache, bool causal_new) const {
  const int S = b.size(), D = cfg_.dim, V = cfg_.vocab, H = cfg_.heads, dh = D / H, F = D * cfg_.mlp_mult;
  const int nc = cache ? cache->n : 0;
  const int nk = nc + S;
  if (static_cast<int>(b.pos.size()) != S) throw config_error("denoiser: pos size mismatch");
  if (cfg_.time_conditioning && static_cast<int>(b.level.size()) != S)
    throw config_error("denoiser: levels required for time conditioning");
  if (cfg_.weighted_embedding && !b.keep.empty() && static_cast<int>(b.keep.size()) != S)
    throw config_error("denoiser: keep size mismatch");
  tp.S = S;
  tp.nc = nc;
  tp.keys.assign(S, {});
  if (!cache) {
    if (!b.mask || b.mask->q_len != S || b.mask->k_len != S) throw config_error("denoiser: mask dimension mismatch");
    for (int q = 0; q < S; ++q) {
      tp.keys[q] = b.mask->keys_of(q);
      if (tp.keys[q].empty()) throw config_error("denoiser: query with no allowed key");
    }
  } else {
    for (int q = 0; q < S; ++q) {
      int lim = causal_new ? nc + q + 1 : nk;
      tp.keys[q].resize(lim);
      for (int k = 0; k < lim; ++k) tp.keys[q][k] = k;
    }
  }

  // embeddings
  const auto& E = p_.t[tok_].v;
  const auto& P = p_.t[pos_].v;
  tp.x0.assign(static_cast<size_t>(S) * D, 0);
  const int mask_id = cfg_.vocab - 1;
  for (int s = 0; s < S; ++s) {
    int id = b.ids[s], ps = b.pos[s];
    if (id < 0 || id >= V) throw config_error("denoiser: token id out of range");
    if (ps < 0 || ps >= cfg_.d_max) throw config_error("denoiser: position out of range");
    double keep = (cfg_.weighted_embedding && !b.keep.empty()) ? b.keep[s] : 1.0;
    double* x = &tp.x0[static_cast<size_t>(s) * D];
    const double* e = &E[static_cast<size_t>(id) * D];
    const double* em = &E[static_cast<size_t>(mask_id) * D];
    const double* pe = &P[static_cast<size_t>(ps) * D];
    if (keep == 1.0) {
      for (int c = 0; c < D; ++c) x[c] = e[c] + pe[c];
    } else {
      for (int c = 0; c < D; ++c) x[c] = keep * e[c] + (1 - keep) * em[c] + pe[c];
    }
    if (cfg_.time_conditioning) {
      int lv = b.level[s];
      if (lv < 0 || lv > cfg_.levels) throw config_error("denoiser: level out of range");
      const double* te = &p_.t[time_].v[static_cast<size_t>(lv) * D];
      for (int c = 0; c < D; ++c) x[c] += te[c];
    }
  }

  tp.L.resize(cfg_.layers);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* xin = tp.x0.data();
  std::vector<double> kall, vall, score;
  for (int l = 0; l < cfg_.layers; ++l) {
    const auto& ix = li_[l];
    auto& T = tp.L[l];
    auto W = [&](int i) { return p_.t[i].v.data(); };
    T.x_in.assign(xin, xin + static_cast<size_t>(S) * D);
    T.h1.resize(static_cast<size_t>(S) * D);
    T.xh1.resize(static_cast<size_t>(S) * D);
    T.rs1.resize(S);
    layernorm(T.x_in.data(), S, D, W(ix.ln1g), W(ix.ln1b), T.h1.data(), T.xh1.data(), T.rs1.data());
    T.q.resize(static_cast<size_t>(S) * D);
    T.k.resize(static_cast<size_t>(S) * D);
    T.v.resize(static_cast<size_t>(S) * D);
    linear(T.h1.data(), S, D, W(ix.wq), W(ix.bq), D, T.q.data());
    linear(T.h1.data(), S, D, W(ix.wk), W(ix.bk), D, T.k.data());
    linear(T.h1.data(), S, D, W(ix.wv), W(ix.bv), D, T.v.data());
    const double* K = T.k.data();
    const double* Vv = T.v.data();
    if (nc > 0) {
      kall.assign(cache->k[l].begin(), cache->k[l].end());
      kall.insert(kall.end(), T.k.begin(), T.k.end());
      vall.assign(cache->v[l].begin(), cache->v[l].end());
      vall.insert(vall.end(), T.v.begin(), T.v.end());
      K = kall.data();
      Vv = vall.data();
    }
    T.att.assign(static_cast<size_t>(H) * S * nk, 0.0);
    T.o.assign(static_cast<size_t>(S) * D, 0.0);
    for (int h = 0; h < H; ++h) {
      for (int q = 0; q < S; ++q) {
        const auto& ks = tp.keys[q];
        score.resize(ks.size());
        const double* qv = &T.q[static_cast<size_t>(q) * D + h * dh];
        double mx = -INFINITY;
        for (size_t j = 0; j < ks.size(); ++j) {
          const double* kv = K + static_cast<size_t>(ks[j]) * D + h * dh;
          double s = 0;
          for (int c = 0; c < dh; ++c) s += qv[c] * kv[c];
          s *= scale;
          score[j] = s;
          mx = std::max(mx, s);
        }
        double z = 0;
        for (size_t j = 0; j < ks.size(); ++j) {
          score[j] = std::exp(score[j] - mx);
          z += score[j];
        }
        double* arow = &T.att[(static_cast<size_t>(h) * S + q) * nk];
        double* o = &T.o[static_cast<size_t>(q) * D + h * dh];
        for (size_t j = 0; j < ks.size(); ++j) {
          double a = score[j] / z;
          arow[ks[j]] = a;
          const double* vv = Vv + static_cast<size_t>(ks[j]) * D + h * dh;
          for (int c = 0; c < dh; ++c) o[c] += a * vv[c];
        }
      }
    }
    T.x_mid.resize(static_cast<size_t>(S) * D);
    linear(T.o.data(), S, D, W(ix.wo), W(ix.bo), D, T.x_mid.data());
    for (size_t i = 0; i < T.x_mid.size(); ++i) T.x_mid[i] += T.x_in[i];
    T.h2.resize(static_cast<size_t>(S) * D);
    T.xh2.resize(static_cast<size_t>(S) * D);
    T.rs2.resize(S);
    layernorm(T.x_mid.data(), S, D, W(ix.ln2g), W(ix.ln2b), T.h2.data(), T.xh2.data(), T.rs2.data());
    T.u.resize(static_cast<size_t>(S) * F);
    T.g.resize(static_cast<size_t>(S) * F);
    linear(T.h2.data(), S, D, W(ix.w1), W(ix.b1), F, T.u.data());
    for (size_t i = 0; i < T.u.size(); ++i) T.g[i] = gelu(T.u[i]);
    std::vector<double> mlp(static_cast<size_t>(S) * D);
    linear(T.g.data(), S, F, W(ix.w2), W(ix.b2), D, mlp.data());
    for (size_t i = 0; i < mlp.size(); ++i) mlp[i] += T.x_mid[i];
    if (l + 1 < cfg_.layers) {
      tp.L[l + 1].x_in = std::move(mlp);
      xin = tp.L[l + 1].x_in.data();
    } else {
      tp.x_out = std::move(mlp);
    }
  }
  tp.hf.resize(static_cast<size_t>(S) * D);
  tp.xhf.resize(static_cast<size_t>(S) * D);
  tp.rsf.resize(S);
  layernorm(tp.x_out.data(), S, D, p_.t[lnfg_].v.data(), p_.t[lnfb_].v.data(), tp.hf.data(), tp.xhf.data(),
            tp.rsf.data());
  tp.logits.resize(static_cast<size_t>(S) * V);
  linear(tp.hf.data(), S, D, p_.t[wout_].v.data(), p_.t[bout_].v.data(), V, tp.logits.data());
}

std::vector<double> denoiser::forward(const slot_batch& b) const {
  forward_tape tp;
  run(b, tp, nullptr, false);
  return std::move(tp.logits);
}

std::vector<double> denoiser::forward_backward(
    const slot_batch& b,
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& loss, param_set& grads) const {
  forward_tape tp;
  run(b, tp, nullptr, false);
  const int S = tp.S, D = cfg_.dim, V = cfg_.vocab, H = cfg_.heads, dh = D / H, F = D * cfg_.mlp_mult;
  std::vector<double> dlogits(static_cast<size_t>(S) * V, 0.0);
  loss(tp.logits, dlogits);
  for (double g : dlogits)
    if (!std::isfinite(g)) throw numeric_error("denoiser: non-finite loss gradient");

  auto G = [&](int i) { return grads.t[i].v.data(); };
  auto W = [&](int i) { return p_.t[i].v.data(); };
  std::vector<double> dhf(static_cast<size_t>(S) * D);
  linear_back(tp.hf.data(), S, D, W(wout_), V, dlogits.data(), G(wout_), G(bout_), dhf.data());
  std::vector<double> dx(static_cast<size_t>(S) * D, 0.0);
  layernorm_back(dhf.data(), S, D, W(lnfg_), tp.xhf.data(), tp.rsf.data(), G(lnfg_), G(lnfb_), dx.data());

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dg(static_cast<size_t>(S) * F), dh2(static_cast<size_t>(S) * D), d_o(static_cast<size_t>(S) * D);
  std::vector<double> dq, dk, dv, dh1(static_cast<size_t>(S) * D), tmp(static_cast<size_t>(S) * D);
  std::vector<double> dp;
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const auto& ix = li_[l];
    const auto& T = tp.L[l];
    // MLP block; dx is gradient w.r.t. layer output
    linear_back(T.g.data(), S, F, W(ix.w2), D, dx.data(), G(ix.w2), G(ix.b2), dg.data());
    for (size_t i = 0; i < dg.size(); ++i) dg[i] *= gelu_grad(T.u[i]);
    linear_back(T.h2.data(), S, D, W(ix.w1), F, dg.data(), G(ix.w1), G(ix.b1), dh2.data());
    layernorm_back(dh2.data(), S, D, W(ix.ln2g), T.xh2.data(), T.rs2.data(), G(ix.ln2g), G(ix.ln2b), dx.data());
    // attention block; dx is now gradient w.r.t. x_mid
    linear_back(T.o.data(), S, D, W(ix.wo), D, dx.data(), G(ix.wo), G(ix.bo), d_o.data());
    dq.assign(static_cast<size_t>(S) * D, 0.0);
    dk.assign(static_cast<size_t>(S) * D, 0.0);
    dv.assign(static_cast<size_t>(S) * D, 0.0);
    for (int h = 0; h < H; ++h) {
      for (int q = 0; q < S; ++q) {
        const auto& ks = tp.keys[q];
        const double* arow = &T.att[(static_cast<size_t>(h) * S + q) * S];
        const double* go = &d_o[static_cast<size_t>(q) * D + h * dh];
        dp.resize(ks.size());
        double dot = 0;
        for (size_t j = 0; j < ks.size(); ++j) {
          const double* vv = &T.v[static_cast<size_t>(ks[j]) * D + h * dh];
          double s = 0;
          for (int c = 0; c < dh; ++c) s += go[c] * vv[c];
          dp[j] = s;
          double a = arow[ks[j]];
          dot += a * s;
          double* dvv = &dv[static_cast<size_t>(ks[j]) * D + h * dh];
          for (int c = 0; c < dh; ++c) dvv[c] += a * go[c];
        }
        const double* qv = &T.q[static_cast<size_t>(q) * D + h * dh];
        double* dqv = &dq[static_cast<size_t>(q) * D + h * dh];
        for (size_t j = 0; j < ks.size(); ++j) {
          double ds = arow[ks[j]] * (dp[j] - dot) * scale;
          const double* kv = &T.k[static_cast<size_t>(ks[j]) * D + h * dh];
          double* dkv = &dk[static_cast<size_t>(ks[j]) * D + h * dh];
          for (int c = 0; c < dh; ++c) {
            dqv[c] += ds * kv[c];
            dkv[c] += ds * qv[c];
          }
        }
      }
    }
    linear_back(T.h1.data(), S, D, W(ix.wq), D, dq.data(), G(ix.wq), G(ix.bq), dh1.data());
    linear_back(T.h1.data(), S, D, W(ix.wk), D, dk.data(), G(ix.wk), G(ix.bk), tmp.data());
    for (size_t i = 0; i < dh1.size(); ++i) dh1[i] += tmp[i];
    linear_back(T.h1.data(), S, D, W(ix.wv), D, dv.data(), G(ix.wv), G(ix.bv), tmp.data());
    for (size_t i = 0; i < dh1.size(); ++i) dh1[i] += tmp[i];
    layernorm_back(dh1.data(), S, D, W(ix.ln1g), T.xh1.data(), T.rs1.data(), G(ix.ln1g), G(ix.ln1b), dx.data());
  }

  // embeddings
  const int mask_id = cfg_.vocab - 1;
  double* gE = G(tok_);
  double* gP = G(pos_);
  for (int s = 0; s < S; ++s) {
    const double* g = &dx[static_cast<size_t>(s) * D];
    double keep = (cfg_.weighted_embedding && !b.keep.empty()) ? b.keep[s] : 1.0;
    double* ge = gE + static_cast<size_t>(b.ids[s]) * D;
    double* gm = gE + static_cast<size_t>(mask_id) * D;
    double* gp = gP + static_cast<size_t>(b.pos[s]) * D;
    for (int c = 0; c < D; ++c) {
      ge[c] += keep * g[c];
      gp[c] += g[c];
    }
    if (keep != 1.0)
      for (int c = 0; c < D; ++c) gm[c] += (1 - keep) * g[c];
    if (cfg_.time_conditioning) {
      double* gt = G(time_) + static_cast<size_t>(b.level[s]) * D;
      for (int c = 0; c < D; ++c) gt[c] += g[c];
    }
  }
  return std::move(tp.logits);
}

void denoiser::cache_append(kv_cache& c, const slot_batch& b) const {
  if (static_cast<int>(c.k.size()) != cfg_.layers) c.clear(cfg_.layers);
  if (b.size() == 0) return;
  forward_tape tp;
  run(b, tp, &c, true);
  for (int l = 0; l < cfg_.layers; ++l) {
    c.k[l].insert(c.k[l].end(), tp.L[l].k.begin(), tp.L[l].k.end());
    c.v[l].insert(c.v[l].end(), tp.L[l].v.begin(), tp.L[l].v.end());
  }
  c.n += b.size();
}

std::vector<double> denoiser::cache_window(const kv_cache& c, const slot_batch& b) const {
  kv_cache empty;
  empty.clear(cfg_.layers);
  forward_tape tp;
  run(b, tp, static_cast<int>(c.k.size()) == cfg_.layers ? &c : &empty, false);
  return std::move(tp.logits);
}

}  // namespace hdlm
