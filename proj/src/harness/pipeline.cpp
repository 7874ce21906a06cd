#include "livespeech/harness/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "livespeech/errors.hpp"

namespace livespeech::harness {

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << text;
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

// Dataset on disk must be the one the config describes.
Dataset load_matching_dataset(const RunConfig& cfg, const RunPaths& paths) {
  auto ds = load_dataset(paths.data());
  if (!(ds.spec == cfg.data)) {
    throw ValidationError("dataset in " + paths.data().string() + " was generated from a different [data] section");
  }
  return ds;
}

}  // namespace

std::filesystem::path RunPaths::default_checkpoint() const {
  const auto best = lm() / "best.lspc";
  return std::filesystem::exists(best) ? best : lm() / "last.lspc";
}

void run_synth(const RunConfig& cfg, const RunPaths& paths, const Log& log) {
  const auto ds = synth_dataset(cfg.data);
  save_dataset(paths.data(), ds);
  say(log, "synth-data: " + std::to_string(ds.utterances.size()) + " utterances (" +
               std::to_string(ds.train_ids().size()) + " train, " + std::to_string(ds.test_ids().size()) +
               " test) -> " + paths.data().string());
}

void run_train_codec(const RunConfig& cfg, const RunPaths& paths, const Log& log) {
  const auto ds = load_matching_dataset(cfg, paths);
  const auto cb = train_codec(ds, cfg.codec, cfg.seed);
  codec::save_codebooks(paths.codebooks(), cb);
  std::ostringstream os;
  os << "train-codec: Q=" << cb.num_stages() << " K=" << cb.codebook_size() << " -> " << paths.codebooks().string();
  say(log, os.str());
}

void run_tokenize(const RunConfig& cfg, const RunPaths& paths, const Log& log) {
  const auto ds = load_matching_dataset(cfg, paths);
  const auto cb = codec::load_codebooks(paths.codebooks());
  const auto grids = tokenize(ds, cb);
  save_tokens(paths.tokens(), grids);
  say(log, "tokenize: " + std::to_string(grids.size()) + " grids -> " + paths.tokens().string());
}

void run_train_lm(const RunConfig& cfg, const RunPaths& paths, const TrainLmOptions& opts, const Log& log) {
  const auto ds = load_matching_dataset(cfg, paths);
  const auto cb = codec::load_codebooks(paths.codebooks());
  const auto tokens = load_tokens(paths.tokens());
  TrainOptions to;
  to.out_dir = paths.lm();
  to.stop_after = opts.stop_after;
  to.log = log;
  if (opts.resume) to.resume = load_for(cfg, *opts.resume);
  const auto r = train_lm(cfg, ds, tokens, cb, to);
  say(log, "train-lm: " + std::to_string(r.last.adam.step) + " steps -> " + paths.lm().string());
}

Checkpoint load_for(const RunConfig& cfg, const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  check_model_compatible(cfg.model, ck.config.model);
  return ck;
}

EvalReport run_eval(const RunConfig& cfg, const RunPaths& paths, const std::filesystem::path& checkpoint, bool plots,
                    const Log& log) {
  const auto ds = load_matching_dataset(cfg, paths);
  const auto cb = codec::load_codebooks(paths.codebooks());
  const auto tokens = load_tokens(paths.tokens());
  const auto ck = load_for(cfg, checkpoint);
  const auto rep = evaluate(cfg, ds, cb, ck.params, tokens);
  const auto json = rep.to_json();
  validate_report_json(json);
  write_text(paths.report(), json + "\n");
  if (plots) write_training_plots(paths.metrics(), paths.root / "plots");
  std::ostringstream os;
  os << "eval: ser=" << rep.ser << " sim=" << rep.sim << " codec_ser=" << rep.ref_ser_codec << " -> "
     << paths.report().string();
  say(log, os.str());
  return rep;
}

sampler::SearchResult run_gridsearch(const RunConfig& cfg, const RunPaths& paths,
                                     const std::filesystem::path& checkpoint, const Log& log) {
  const auto ds = load_matching_dataset(cfg, paths);
  const auto cb = codec::load_codebooks(paths.codebooks());
  const auto ck = load_for(cfg, checkpoint);
  sampler::Decoder dec(cfg.model, ck.params);
  // Tuned on held-out training-speaker utterances, never on the test split.
  const auto split = split_training(ds, cfg.train);
  const auto items = default_items(ds, split.val, 0);
  const auto res = sampler::grid_search(cfg.grid, cfg.model.Q, cfg.sampler.seed, [&](const sampler::SamplerConfig& c) {
    const auto s = score_generation(dec, cb, ds, items, c);
    return s.sim - s.ser;
  });
  nlohmann::json j;
  j["objective"] = "speaker_similarity - symbol_error_rate";
  j["best"] = {{"temperature", res.best.temperature}, {"top_k", res.best.top_k}, {"n_sb", res.best.n_sb}};
  j["best_score"] = res.best_score;
  j["evaluated"] = nlohmann::json::array();
  for (const auto& e : res.evaluated) {
    j["evaluated"].push_back({{"temperature", e.config.temperature},
                              {"top_k", e.config.top_k},
                              {"n_sb", e.config.n_sb},
                              {"score", e.score}});
  }
  write_text(paths.root / "gridsearch.json", j.dump(2) + "\n");
  std::ostringstream os;
  os << "gridsearch: best temperature=" << res.best.temperature << " top_k=" << res.best.top_k
     << " n_sb=" << res.best.n_sb << " score=" << res.best_score;
  say(log, os.str());
  return res;
}

void run_pipeline(const RunConfig& cfg, const RunPaths& paths, const Log& log) {
  std::filesystem::create_directories(paths.root);
  write_text(paths.root / "config.ini", to_text(cfg));
  run_synth(cfg, paths, log);
  run_train_codec(cfg, paths, log);
  run_tokenize(cfg, paths, log);
  run_train_lm(cfg, paths, {}, log);
  const auto ds = load_dataset(paths.data());
  const auto cb = codec::load_codebooks(paths.codebooks());
  const auto tokens = load_tokens(paths.tokens());
  const auto ck = load_for(cfg, paths.default_checkpoint());
  EvalOptions eo;
  eo.stream_bench = false;
  const auto rep = evaluate(cfg, ds, cb, ck.params, tokens, eo);
  write_text(paths.report(), rep.to_json() + "\n");
  say(log, "pipeline: ser=" + std::to_string(rep.ser) + " sim=" + std::to_string(rep.sim));
}

}  // namespace livespeech::harness
