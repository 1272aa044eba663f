// hdlm: command-line front end for corpus generation, training, sampling, evaluation and exports.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hdlm/pipeline.hpp"
#include "hdlm/process.hpp"
#include "hdlm/train.hpp"

using namespace hdlm;
namespace fs = std::filesystem;

namespace {

struct common_opts {
  std::string config;
  std::vector<std::string> sets;
  std::string manifest;
};

void add_common(CLI::App* app, common_opts& o) {
  app->add_option("--config", o.config, "key=value config file");
  app->add_option("--set", o.sets, "override a config entry, key=value (repeatable)");
  app->add_option("--manifest", o.manifest, "append JSON-lines records to this file");
}

kv_map load_kv(const common_opts& o) {
  kv_map kv;
  if (!o.config.empty()) kv = parse_kv_file(o.config);
  for (const auto& s : o.sets) {
    auto m = parse_kv_text(s);
    if (m.empty()) throw config_error("--set expects key=value, got '" + s + "'");
    for (auto& [k, v] : m) kv[k] = v;
  }
  return kv;
}

void emit(const common_opts& o, const json& rec) {
  std::cout << rec.dump() << "\n";
  if (!o.manifest.empty()) append_manifest(o.manifest, rec);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw config_error("cannot open " + path);
  os << text;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char ch : s + ",") {
    if (ch == ',' || ch == ' ') {
      if (!cur.empty()) {
        try {
          out.push_back(std::stoi(cur));
        } catch (...) {
          throw config_error("bad integer list '" + s + "'");
        }
      }
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperschedule discrete diffusion toolkit"};
  app.require_subcommand(1);

  common_opts gc, tc, sc, ec, pc, cc;

  std::string gen_out = "corpus";
  auto* gen = app.add_subcommand("gen-corpus", "sample a Markov source and train/eval/judge corpora");
  add_common(gen, gc);
  gen->add_option("--out", gen_out, "output directory");

  std::string tr_corpus, tr_ckpt = "model.ckpt", tr_init, tr_csv;
  auto* train = app.add_subcommand("train", "train a denoiser");
  add_common(train, tc);
  train->add_option("--corpus", tr_corpus, "training corpus (HDCORP1)")->required();
  train->add_option("--checkpoint", tr_ckpt, "output checkpoint");
  train->add_option("--init", tr_init, "resume from this checkpoint (stage 2)");
  train->add_option("--loss-csv", tr_csv, "per-step loss log");

  std::string sa_ckpt, sa_out = "samples.txt", sa_hs, sa_sampler, sa_cache;
  int sa_omega = 0, sa_steps = 0;
  double sa_eta = -1, sa_temp = -1;
  int64_t sa_seed = -1;
  auto* sample = app.add_subcommand("sample", "generate sequences");
  add_common(sample, sc);
  sample->add_option("--checkpoint", sa_ckpt, "model checkpoint")->required();
  sample->add_option("--out", sa_out, "output text file, one sequence per line");
  sample->add_option("--hyperschedule", sa_hs, "flat|block|slide|quench|stride");
  sample->add_option("--omega", sa_omega, "window width");
  sample->add_option("--steps", sa_steps, "number of steps S (sets rho = d/S)");
  sample->add_option("--sampler", sa_sampler, "orig|acs");
  sample->add_option("--eta", sa_eta, "ACS correction strength");
  sample->add_option("--temperature", sa_temp, "sampling temperature");
  sample->add_option("--seed", sa_seed, "seed");
  sample->add_option("--cache", sa_cache, "on|off");

  std::string ev_ckpt, ev_corpus, ev_mode = "mc-ppl", ev_samples, ev_judge;
  int ev_m = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or samples");
  add_common(eval, ec);
  eval->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  eval->add_option("--corpus", ev_corpus, "evaluation corpus");
  eval->add_option("--mc-samples", ev_m, "Monte-Carlo draws per sequence");
  eval->add_option("--mode", ev_mode, "mc-ppl|gen-ppl|entropy");
  eval->add_option("--samples", ev_samples, "samples file for gen-ppl/entropy");
  eval->add_option("--judge-corpus", ev_judge, "corpus to fit the n-gram judge on");

  std::string hx_kind = "flat", hx_csv, hx_pgm, hx_rho = "1";
  int hx_d = 8, hx_omega = 1, hx_levels = 1;
  auto* exph = app.add_subcommand("export-hyperschedule", "write tau as CSV and PGM");
  exph->add_option("--kind", hx_kind, "quench|flat|block|slide|stride");
  exph->add_option("--d", hx_d, "sequence length");
  exph->add_option("--omega", hx_omega, "window width");
  exph->add_option("--levels", hx_levels, "number of noise levels");
  exph->add_option("--rho", hx_rho, "generation rate, integer or p/q");
  exph->add_option("--csv", hx_csv, "CSV output (stdout if omitted)");
  exph->add_option("--pgm", hx_pgm, "PGM output");

  std::string mx_config = "aligned", mx_kind = "block", mx_starts, mx_pbm, mx_csv, mx_slots;
  int mx_d = 12, mx_omega = 4;
  auto* expm = app.add_subcommand("export-mask", "write an efficient-training attention mask");
  expm->add_option("--config", mx_config, "aligned|shifted");
  expm->add_option("--kind", mx_kind, "slide|block");
  expm->add_option("--d", mx_d, "sequence length");
  expm->add_option("--omega", mx_omega, "window width");
  expm->add_option("--starts", mx_starts, "comma-separated interval starts");
  expm->add_option("--pbm", mx_pbm, "PBM output");
  expm->add_option("--csv", mx_csv, "CSV output (stdout if omitted)");
  expm->add_option("--slots", mx_slots, "per-slot wiring CSV");

  std::string kv_L = "8-64", kv_w = "1-8", kv_r = "1-4";
  auto* kvt = app.add_subcommand("kv-table", "transformer calls and token costs with and without KV cache");
  kvt->add_option("--L", kv_L, "lengths, list or a-b range");
  kvt->add_option("--omega", kv_w, "window widths, list or a-b range");
  kvt->add_option("--rho", kv_r, "rates, list or a-b range");

  std::string pl_out = "run";
  auto* pipe = app.add_subcommand("pipeline", "gen-corpus, train, sample and eval in one go");
  add_common(pipe, pc);
  pipe->add_option("--out", pl_out, "output directory");

  std::string co_corpus;
  int co_step = 0, co_count = 4;
  auto* corrupt = app.add_subcommand("corrupt", "print corrupted sequences with flags");
  add_common(corrupt, cc);
  corrupt->add_option("--corpus", co_corpus, "clean corpus")->required();
  corrupt->add_option("--step", co_step, "hyperschedule step t");
  corrupt->add_option("--count", co_count, "number of sequences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto range = [](const std::string& s) {
    auto dash = s.find('-');
    if (dash != std::string::npos && dash > 0) {
      int a = std::stoi(s.substr(0, dash)), b = std::stoi(s.substr(dash + 1));
      std::vector<int> v;
      for (int x = a; x <= b; ++x) v.push_back(x);
      return v;
    }
    return parse_int_list(s);
  };

  try {
    if (*gen) {
      run_config c = make_run_config(load_kv(gc));
      emit(gc, cmd_gen_corpus(c, gen_out));
    } else if (*train) {
      run_config c = make_run_config(load_kv(tc));
      emit(tc, cmd_train(c, tr_corpus, tr_ckpt, tr_init, tr_csv));
    } else if (*sample) {
      kv_map kv = load_kv(sc);
      if (!sa_hs.empty()) kv["hyperschedule"] = sa_hs;
      if (sa_omega > 0) kv["omega"] = std::to_string(sa_omega);
      if (!sa_sampler.empty()) kv["sampler"] = sa_sampler;
      if (sa_eta >= 0) kv["eta"] = std::to_string(sa_eta);
      if (sa_temp >= 0) kv["temperature"] = std::to_string(sa_temp);
      if (sa_seed >= 0) kv["seed"] = std::to_string(sa_seed);
      if (!sa_cache.empty()) kv["cache"] = sa_cache;
      run_config c = make_run_config(kv);
      if (sa_steps > 0) {
        c.rho_num = c.d;
        c.rho_den = sa_steps;
        c.validate();
      }
      emit(sc, cmd_sample(c, sa_ckpt, sa_out));
    } else if (*eval) {
      kv_map kv = load_kv(ec);
      if (ev_m > 0) kv["mc_samples"] = std::to_string(ev_m);
      run_config c = make_run_config(kv);
      if (ev_mode == "mc-ppl" && (ev_ckpt.empty() || ev_corpus.empty()))
        throw config_error("eval: mc-ppl needs --checkpoint and --corpus");
      emit(ec, cmd_eval(c, ev_ckpt, ev_corpus, ev_mode, ev_samples, ev_judge));
    } else if (*exph) {
      hs_params p;
      p.kind = parse_hs_kind(hx_kind);
      p.d = hx_d;
      p.omega = hx_omega;
      p.levels = hx_levels;
      auto slash = hx_rho.find('/');
      p.rho_num = std::stoll(hx_rho.substr(0, slash));
      p.rho_den = slash == std::string::npos ? 1 : std::stoll(hx_rho.substr(slash + 1));
      auto hs = hyperschedule::build(p);
      if (hx_csv.empty())
        std::cout << hs.to_csv();
      else
        write_text(hx_csv, hs.to_csv());
      if (!hx_pgm.empty()) write_text(hx_pgm, hs.to_pgm());
    } else if (*expm) {
      hs_kind k = parse_hs_kind(mx_kind);
      auto m = training_mask(parse_wiring(mx_config), k, mx_d, mx_omega, parse_int_list(mx_starts));
      if (mx_csv.empty())
        std::cout << m.to_csv();
      else
        write_text(mx_csv, m.to_csv());
      if (!mx_pbm.empty()) write_text(mx_pbm, m.to_pbm());
      if (!mx_slots.empty()) write_text(mx_slots, m.slots_csv());
    } else if (*kvt) {
      std::cout << "L,omega,rho,calls,cost_nocache,cost_cache\n";
      for (int L : range(kv_L))
        for (int w : range(kv_w))
          for (int r : range(kv_r)) {
            if (w > L) continue;
            auto c = kv_cost(L, w, r);
            std::cout << L << "," << w << "," << r << "," << c.calls << "," << c.cost_nocache << "," << c.cost_cache
                      << "\n";
          }
    } else if (*pipe) {
      run_config c = make_run_config(load_kv(pc));
      if (pc.manifest.empty()) pc.manifest = (fs::path(pl_out) / "manifest.jsonl").string();
      fs::create_directories(pl_out);
      std::ofstream(pc.manifest, std::ios::trunc).close();
      cmd_pipeline(c, pl_out, [&](const json& rec) { emit(pc, rec); });
    } else if (*corrupt) {
      run_config c = make_run_config(load_kv(cc));
      auto ts = make_train_setup(c);
      corpus_file cf = read_corpus(co_corpus);
      if (co_step < 0 || co_step > ts.hs.T()) throw config_error("corrupt: --step out of range");
      static const char tag[] = {'.', 's', 'm'};
      for (int n = 0; n < std::min<int>(co_count, cf.seqs.size()); ++n) {
        rng_stream r(c.seed, 0xC0221);
        const auto& y = cf.seqs[n];
        sequence x;
        std::vector<uint8_t> flags(y.size(), flag_unchanged);
        if (c.has_gamma) {
          x = corrupt_gamma(y, ts.hs, co_step, ts.sigma, c.gamma, ts.voc, r.fork(n));
          for (size_t i = 0; i < y.size(); ++i)
            flags[i] = x[i] == ts.voc.mask_id() ? flag_masked : (x[i] != y[i] ? flag_shuffled : flag_unchanged);
        } else {
          auto cr = corrupt_epsilon(y, ts.hs, co_step, c.epsilon, ts.alpha, ts.voc, r.fork(n));
          x = cr.tokens;
          flags = cr.flags;
        }
        for (size_t i = 0; i < x.size(); ++i) {
          if (x[i] == ts.voc.mask_id())
            std::cout << (i ? " " : "") << "M";
          else
            std::cout << (i ? " " : "") << x[i];
          std::cout << tag[flags[i]];
        }
        std::cout << "\n";
      }
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const train_failure& e) {
    // the failed run still gets its manifest line
    if (*train) emit(tc, e.record);
    if (*pipe) emit(pc, e.record);
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
