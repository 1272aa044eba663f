#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "hdlm/config.hpp"
#include "hdlm/corpus.hpp"
#include "hdlm/sampler.hpp"

namespace hdlm {

inline constexpr const char* kToolVersion = "hdlm 0.1.0";

using json = nlohmann::json;

json config_json(const run_config& c);
json base_record(const std::string& kind, const run_config& c);
void append_manifest(const std::string& path, const json& rec);

struct corpus_paths {
  std::string markov, train, eval, judge;
};
corpus_paths corpus_paths_in(const std::string& dir);

// Training hit a numerical failure; record holds the manifest entry marked failed.
struct train_failure : numeric_error {
  json record;
  train_failure(const std::string& what, json rec) : numeric_error(what), record(std::move(rec)) {}
};

json cmd_gen_corpus(const run_config& c, const std::string& dir);
// init_checkpoint empty = fresh initialization
json cmd_train(const run_config& c, const std::string& corpus, const std::string& checkpoint,
               const std::string& init_checkpoint, const std::string& loss_csv);
json cmd_sample(const run_config& c, const std::string& checkpoint, const std::string& out_path);
json cmd_eval(const run_config& c, const std::string& checkpoint, const std::string& corpus, const std::string& mode,
              const std::string& samples_path, const std::string& judge_corpus);
// each record is handed to emit as soon as its stage finishes
void cmd_pipeline(const run_config& c, const std::string& dir, const std::function<void(const json&)>& emit);

std::vector<sequence> read_samples(const std::string& path);
void write_samples(const std::string& path, const std::vector<sequence>& s);

std::vector<sequence> sample_many(const denoiser& m, const run_config& c, int count, uint64_t stream,
                                  call_ledger* total);

}  // namespace hdlm
