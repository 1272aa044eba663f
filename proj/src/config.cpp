#include "hdlm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace hdlm {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n"), b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw config_error("config: bad value for '" + key + "': " + v);
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t n = 0;
    double x = std::stod(v, &n);
    if (n != v.size()) throw config_error("");
    return x;
  } catch (...) {
    throw config_error("config: bad value for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw config_error("config: bad value for '" + key + "': " + v);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct field {
  std::function<void(run_config&, const std::string&)> set;
  std::function<std::string(const run_config&)> get;
};

#define INT_FIELD(name) \
  {#name, {[](run_config& c, const std::string& v) { c.name = parse_num<decltype(c.name)>(#name, v); }, \
           [](const run_config& c) { return std::to_string(c.name); }}}
#define REAL_FIELD(name) \
  {#name, {[](run_config& c, const std::string& v) { c.name = parse_real(#name, v); }, \
           [](const run_config& c) { return fmt(c.name); }}}
#define BOOL_FIELD(name) \
  {#name, {[](run_config& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
           [](const run_config& c) { return std::string(c.name ? "true" : "false"); }}}

const std::map<std::string, field>& fields() {
  static const std::map<std::string, field> f = {
      {"gamma",
       {[](run_config& c, const std::string& v) {
          c.has_gamma = true;
          c.gamma = parse_real("gamma", v);
        },
        [](const run_config& c) { return c.has_gamma ? fmt(c.gamma) : std::string(); }}},
      {"epsilon",
       {[](run_config& c, const std::string& v) {
          c.has_epsilon = true;
          c.epsilon = parse_real("epsilon", v);
        },
        [](const run_config& c) { return c.has_epsilon ? fmt(c.epsilon) : std::string(); }}},
      REAL_FIELD(sigma_min),
      REAL_FIELD(sigma_max),
      {"hyperschedule",
       {[](run_config& c, const std::string& v) {
          try {
            c.kind = parse_hs_kind(v);
          } catch (const config_error&) {
            throw config_error("config: bad value for 'hyperschedule': " + v);
          }
        },
        [](const run_config& c) { return to_string(c.kind); }}},
      INT_FIELD(omega),
      INT_FIELD(levels),
      {"rho",
       {[](run_config& c, const std::string& v) {
          auto slash = v.find('/');
          if (slash == std::string::npos) {
            c.rho_num = parse_num<int64_t>("rho", v);
            c.rho_den = 1;
          } else {
            c.rho_num = parse_num<int64_t>("rho", v.substr(0, slash));
            c.rho_den = parse_num<int64_t>("rho", v.substr(slash + 1));
          }
        },
        [](const run_config& c) {
          return c.rho_den == 1 ? std::to_string(c.rho_num) : std::to_string(c.rho_num) + "/" + std::to_string(c.rho_den);
        }}},
      {"wiring",
       {[](run_config& c, const std::string& v) {
          try {
            c.wire = parse_wiring(v);
          } catch (const config_error&) {
            throw config_error("config: bad value for 'wiring': " + v);
          }
        },
        [](const run_config& c) { return to_string(c.wire); }}},
      BOOL_FIELD(time_conditioning),
      BOOL_FIELD(weighted_embedding),
      INT_FIELD(dim),
      INT_FIELD(heads),
      INT_FIELD(layers),
      REAL_FIELD(init_scale),
      REAL_FIELD(beta1),
      REAL_FIELD(beta2),
      REAL_FIELD(lambda),
      BOOL_FIELD(efficient),
      BOOL_FIELD(reweight),
      INT_FIELD(steps),
      INT_FIELD(batch),
      REAL_FIELD(lr),
      REAL_FIELD(momentum),
      REAL_FIELD(clip),
      INT_FIELD(warmup),
      INT_FIELD(seed),
      INT_FIELD(num_real),
      REAL_FIELD(concentration),
      INT_FIELD(d),
      INT_FIELD(train_seqs),
      INT_FIELD(eval_seqs),
      INT_FIELD(judge_seqs),
      INT_FIELD(judge_order),
      REAL_FIELD(judge_smoothing),
      {"sampler",
       {[](run_config& c, const std::string& v) {
          if (v == "orig" || v == "original")
            c.sampler = sampler_kind::original;
          else if (v == "acs")
            c.sampler = sampler_kind::acs;
          else
            throw config_error("config: bad value for 'sampler': " + v);
        },
        [](const run_config& c) { return std::string(c.sampler == sampler_kind::acs ? "acs" : "orig"); }}},
      REAL_FIELD(eta),
      REAL_FIELD(temperature),
      BOOL_FIELD(cache),
      BOOL_FIELD(fp32_gumbel),
      BOOL_FIELD(uniform_correction),
      INT_FIELD(num_samples),
      INT_FIELD(mc_samples),
      INT_FIELD(log_every),
      INT_FIELD(checkpoint_every),
  };
  return f;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

}  // namespace

kv_map parse_kv_text(const std::string& text) {
  kv_map kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("config: line " + std::to_string(lineno) + " is not key=value");
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty()) throw config_error("config: empty key on line " + std::to_string(lineno));
    kv[k] = v;
  }
  return kv;
}

kv_map parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_kv_text(ss.str());
}

run_config make_run_config(const kv_map& kv) {
  run_config c;
  c.has_gamma = c.has_epsilon = false;
  const auto& f = fields();
  for (const auto& [k, v] : kv) {
    auto it = f.find(k);
    if (it == f.end()) throw config_error("config: unknown key '" + k + "'");
    it->second.set(c, v);
  }
  if (!c.has_gamma && !c.has_epsilon) throw config_error("config: one of 'gamma' or 'epsilon' must be specified");
  c.validate();
  return c;
}

void run_config::validate() const {
  auto bad = [](const std::string& k, const std::string& why) { throw config_error("config: '" + k + "' " + why); };
  if (has_gamma && has_epsilon) bad("gamma", "and 'epsilon' are mutually exclusive; specify exactly one");
  if (has_gamma && !(gamma >= 0 && gamma <= 1)) bad("gamma", "must be in [0,1]");
  if (has_epsilon && !(epsilon >= 0 && epsilon < 1)) bad("epsilon", "must be in [0,1)");
  if (!(sigma_min > 0)) bad("sigma_min", "must be > 0");
  if (!(sigma_max > sigma_min)) bad("sigma_max", "must exceed sigma_min");
  if (omega < 1) bad("omega", "must be >= 1");
  if (omega > d) bad("omega", "must be <= d");
  if (levels < 1) bad("levels", "must be >= 1");
  if (rho_num < 1 || rho_den < 1) bad("rho", "must be a positive rational");
  if (dim < 1 || heads < 1 || dim % heads) bad("dim", "must be a positive multiple of heads");
  if (layers < 1) bad("layers", "must be >= 1");
  if (!(init_scale > 0)) bad("init_scale", "must be > 0");
  if (beta1 < 0) bad("beta1", "must be >= 0");
  if (beta2 < 0) bad("beta2", "must be >= 0");
  if (lambda < 0) bad("lambda", "must be >= 0");
  if (steps < 0) bad("steps", "must be >= 0");
  if (batch < 1) bad("batch", "must be >= 1");
  if (!(lr > 0)) bad("lr", "must be > 0");
  if (!(momentum >= 0 && momentum < 1)) bad("momentum", "must be in [0,1)");
  if (!(clip > 0)) bad("clip", "must be > 0");
  if (warmup < 0) bad("warmup", "must be >= 0");
  if (num_real < 2) bad("num_real", "must be >= 2");
  if (num_real > 65534) bad("num_real", "must fit 16-bit token ids");
  if (!(concentration > 0)) bad("concentration", "must be > 0");
  if (d < 1) bad("d", "must be >= 1");
  if (train_seqs < 1) bad("train_seqs", "must be >= 1");
  if (eval_seqs < 1) bad("eval_seqs", "must be >= 1");
  if (judge_seqs < 1) bad("judge_seqs", "must be >= 1");
  if (judge_order != 1 && judge_order != 2) bad("judge_order", "must be 1 or 2");
  if (!(judge_smoothing > 0)) bad("judge_smoothing", "must be > 0");
  if (!(eta >= 0 && eta <= 1)) bad("eta", "must be in [0,1]");
  if (!(temperature >= 0)) bad("temperature", "must be >= 0");
  if (num_samples < 1) bad("num_samples", "must be >= 1");
  if (mc_samples < 1) bad("mc_samples", "must be >= 1");
  if (log_every < 1) bad("log_every", "must be >= 1");
  if (checkpoint_every < 0) bad("checkpoint_every", "must be >= 0");
  if (weighted_embedding && !has_gamma) bad("weighted_embedding", "requires the gamma variant");
  if (kind == hs_kind::stride && (rho_den != 1 || rho_num > omega)) bad("rho", "stride needs an integer rho <= omega");
}

hs_params run_config::schedule_params() const {
  hs_params p;
  p.kind = kind;
  p.d = d;
  p.levels = kind == hs_kind::quench ? 1 : levels;
  p.omega = omega;
  p.rho_num = rho_num;
  p.rho_den = rho_den;
  return p;
}

denoiser_config run_config::model_config() const {
  denoiser_config m;
  m.vocab = num_real + 1;
  m.dim = dim;
  m.heads = heads;
  m.layers = layers;
  m.d_max = d;
  m.wire = wire;
  m.time_conditioning = time_conditioning;
  m.weighted_embedding = weighted_embedding;
  m.levels = kind == hs_kind::quench ? 1 : levels;
  return m;
}

sampler_opts run_config::sampling() const {
  sampler_opts o;
  o.kind = sampler;
  o.eta = eta;
  o.temperature = temperature;
  o.cache = cache;
  o.fp32_gumbel = fp32_gumbel;
  o.uniform_correction = uniform_correction;
  return o;
}

kv_map run_config::to_map() const {
  kv_map kv;
  for (const auto& [k, f] : fields()) {
    std::string v = f.get(*this);
    if (!v.empty()) kv[k] = v;
  }
  return kv;
}

std::string to_text(const run_config& c) {
  std::ostringstream os;
  for (const auto& [k, v] : c.to_map()) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace hdlm
