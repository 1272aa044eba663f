#include "hdlm/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hdlm/eval.hpp"
#include "hdlm/train.hpp"

namespace hdlm {

namespace fs = std::filesystem;

json config_json(const run_config& c) {
  json j = json::object();
  for (const auto& [k, v] : c.to_map()) j[k] = v;
  return j;
}

json base_record(const std::string& kind, const run_config& c) {
  json r;
  r["kind"] = kind;
  r["tool_version"] = kToolVersion;
  r["config"] = config_json(c);
  return r;
}

void append_manifest(const std::string& path, const json& rec) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw config_error("cannot open manifest " + path);
  os << rec.dump() << "\n";
}

corpus_paths corpus_paths_in(const std::string& dir) {
  fs::path p(dir);
  return {(p / "markov.bin").string(), (p / "train.bin").string(), (p / "eval.bin").string(),
          (p / "judge.bin").string()};
}

static std::string crc_hex(uint32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", c);
  return buf;
}

json cmd_gen_corpus(const run_config& c, const std::string& dir) {
  fs::create_directories(dir);
  auto paths = corpus_paths_in(dir);
  rng_stream root(c.seed, 0xC0);
  markov_source src = make_markov_source(c.num_real, c.concentration, root.fork(1));
  write_markov(paths.markov, src);
  const int V = c.num_real + 1;
  write_corpus(paths.train, V, c.d, sample_corpus(src, c.train_seqs, c.d, root.fork(2)));
  write_corpus(paths.eval, V, c.d, sample_corpus(src, c.eval_seqs, c.d, root.fork(3)));
  write_corpus(paths.judge, V, c.d, sample_corpus(src, c.judge_seqs, c.d, root.fork(4)));
  json r = base_record("gen-corpus", c);
  r["entropy_rate"] = src.entropy_rate;
  r["ppl_floor"] = std::exp(src.entropy_rate);
  r["checksums"] = {{"markov", crc_hex(crc32_file(paths.markov))},
                    {"train", crc_hex(crc32_file(paths.train))},
                    {"eval", crc_hex(crc32_file(paths.eval))},
                    {"judge", crc_hex(crc32_file(paths.judge))}};
  return r;
}

json cmd_train(const run_config& c, const std::string& corpus, const std::string& checkpoint,
               const std::string& init_checkpoint, const std::string& loss_csv) {
  auto t0 = std::chrono::steady_clock::now();
  corpus_file cf = read_corpus(corpus);
  if (cf.d != c.d) throw config_error("config: 'd' does not match corpus length " + std::to_string(cf.d));
  if (cf.vocab_size != c.num_real + 1) throw config_error("config: 'num_real' does not match corpus vocabulary");
  denoiser m;
  if (init_checkpoint.empty()) {
    m = denoiser(c.model_config(), rng_stream(c.seed, 0x1A17), c.init_scale);
  } else {
    m = denoiser::load(init_checkpoint);
    if (m.config().vocab != c.num_real + 1) throw config_error("config: checkpoint vocabulary mismatch");
    if (m.config().d_max < c.d) throw config_error("config: checkpoint d_max smaller than d");
  }
  std::ofstream log;
  if (!loss_csv.empty()) {
    log.open(loss_csv);
    log << "step,ce_settled,active_term,total\n";
  }
  json r = base_record("train", c);
  r["corpus_crc32"] = crc_hex(crc32_file(corpus));
  if (!init_checkpoint.empty()) r["init_checkpoint_crc32"] = crc_hex(crc32_file(init_checkpoint));
  trainer tr(m, c);
  step_log last;
  double first_total = NAN;
  try {
    tr.run(cf.seqs, c.steps, [&](const step_log& lg) {
      if (lg.step == 0) first_total = lg.total;
      last = lg;
      if (log.is_open() && (lg.step % c.log_every == 0 || lg.step + 1 == c.steps))
        log << lg.step << "," << lg.ce_settled << "," << lg.active_term << "," << lg.total << "\n";
      if (c.checkpoint_every > 0 && (lg.step + 1) % c.checkpoint_every == 0 && lg.step + 1 < c.steps) {
        denoiser snap = m;
        snap.round_to_f32();
        snap.save(checkpoint + ".step" + std::to_string(lg.step + 1));
      }
    });
  } catch (const numeric_error& e) {
    r["status"] = "failed";
    r["error"] = e.what();
    r["metrics"] = {{"steps_completed", last.step + (c.steps > 0 && !std::isnan(first_total) ? 1 : 0)}};
    throw train_failure(e.what(), r);
  }
  m.round_to_f32();
  m.save(checkpoint);
  r["status"] = "ok";
  r["checkpoint_crc32"] = crc_hex(crc32_file(checkpoint));
  r["metrics"] = {{"steps", c.steps}, {"first_loss", c.steps > 0 ? json(first_total) : json(nullptr)},
                  {"final_loss", c.steps > 0 ? json(last.total) : json(nullptr)}};
  r["timing"] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return r;
}

std::vector<sequence> sample_many(const denoiser& m, const run_config& c, int count, uint64_t stream,
                                  call_ledger* total) {
  hyperschedule hs = hyperschedule::build(c.schedule_params());
  cumulative_schedule sigma = loglinear_sigma(hs.levels(), c.sigma_min, c.sigma_max);
  embed_opts eo{&sigma, c.has_gamma ? c.gamma : 0.0};
  denoiser_source src(m, eo);
  sampler_opts o = c.sampling();
  std::vector<sequence> out;
  rng_stream root(c.seed, stream);
  for (int n = 0; n < count; ++n) {
    generation g = generate(src, hs, o, root.fork(n));
    if (total) {
      total->calls += g.ledger.calls;
      total->tokens += g.ledger.tokens;
      total->cache_hits += g.ledger.cache_hits;
      total->query_slots += g.ledger.query_slots;
    }
    out.push_back(std::move(g.tokens));
  }
  return out;
}

void write_samples(const std::string& path, const std::vector<sequence>& s) {
  std::ofstream os(path);
  if (!os) throw config_error("cannot open " + path);
  for (const auto& q : s) {
    for (size_t i = 0; i < q.size(); ++i) os << (i ? " " : "") << q[i];
    os << "\n";
  }
}

std::vector<sequence> read_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open " + path);
  std::vector<sequence> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    sequence s;
    int t;
    while (ls >> t) s.push_back(t);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

json cmd_sample(const run_config& c, const std::string& checkpoint, const std::string& out_path) {
  auto t0 = std::chrono::steady_clock::now();
  denoiser m = denoiser::load(checkpoint);
  call_ledger total;
  auto s = sample_many(m, c, c.num_samples, 0x5A, &total);
  write_samples(out_path, s);
  json r = base_record("sample", c);
  r["checkpoint_crc32"] = crc_hex(crc32_file(checkpoint));
  r["samples_crc32"] = crc_hex(crc32_file(out_path));
  r["ledger"] = {{"calls", total.calls}, {"tokens", total.tokens}, {"cache_hits", total.cache_hits},
                 {"query_slots", total.query_slots}};
  r["timing"] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return r;
}

json cmd_eval(const run_config& c, const std::string& checkpoint, const std::string& corpus, const std::string& mode,
              const std::string& samples_path, const std::string& judge_corpus) {
  json r = base_record("eval", c);
  r["mode"] = mode;
  if (mode == "mc-ppl") {
    denoiser m = denoiser::load(checkpoint);
    corpus_file cf = read_corpus(corpus);
    hyperschedule hs = hyperschedule::build(c.schedule_params());
    cumulative_schedule sigma = loglinear_sigma(hs.levels(), c.sigma_min, c.sigma_max);
    denoiser_source src(m, {&sigma, c.has_gamma ? c.gamma : 0.0});
    auto e = mc_ppl(src, cf.seqs, hs, c.mc_samples, rng_stream(c.seed, 0xE7A1));
    r["checkpoint_crc32"] = crc_hex(crc32_file(checkpoint));
    r["corpus_crc32"] = crc_hex(crc32_file(corpus));
    r["metrics"] = {{"mc_ppl", e.ppl}, {"per_token_nll", e.per_token_nll}, {"std_error", e.std_error},
                    {"mc_samples", e.mc_samples}, {"token_count", e.token_count}};
  } else if (mode == "gen-ppl" || mode == "entropy") {
    if (samples_path.empty()) throw config_error("eval: --samples is required for " + mode);
    auto s = read_samples(samples_path);
    r["samples_crc32"] = crc_hex(crc32_file(samples_path));
    if (mode == "gen-ppl") {
      if (judge_corpus.empty()) throw config_error("eval: --judge-corpus is required for gen-ppl");
      corpus_file jc = read_corpus(judge_corpus);
      auto judge = ngram_judge::fit(jc.seqs, jc.vocab_size - 1, c.judge_order, c.judge_smoothing);
      auto e = gen_ppl(s, judge);
      r["judge_corpus_crc32"] = crc_hex(crc32_file(judge_corpus));
      r["metrics"] = {{"gen_ppl", e.ppl}, {"per_token_nll", e.per_token_nll}, {"token_count", e.token_count}};
    } else {
      r["metrics"] = {{"entropy", token_entropy(s, c.num_real)}};
    }
  } else {
    throw config_error("eval: unknown mode '" + mode + "'");
  }
  return r;
}

void cmd_pipeline(const run_config& c, const std::string& dir, const std::function<void(const json&)>& emit) {
  fs::create_directories(dir);
  fs::path p(dir);
  emit(cmd_gen_corpus(c, dir));
  auto paths = corpus_paths_in(dir);
  std::string ckpt = (p / "model.ckpt").string(), samples = (p / "samples.txt").string();
  emit(cmd_train(c, paths.train, ckpt, "", (p / "loss.csv").string()));
  emit(cmd_sample(c, ckpt, samples));
  emit(cmd_eval(c, ckpt, paths.eval, "mc-ppl", "", ""));
  emit(cmd_eval(c, ckpt, paths.eval, "gen-ppl", samples, paths.judge));
  emit(cmd_eval(c, ckpt, paths.eval, "entropy", samples, ""));
}

}  // namespace hdlm
