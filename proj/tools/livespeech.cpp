// livespeech command line: one subcommand per pipeline stage. Every command
// reads and writes inside the --out run directory.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/harness/pipeline.hpp"

using namespace livespeech;
using namespace livespeech::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (INI)")->required();
  cmd->add_option("--seed", c.seed, "override [run] seed");
  cmd->add_option("--out", c.out, "run directory")->capture_default_str();
}

RunConfig load(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.finalize();
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"livespeech: codec language model toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint;
  std::size_t stop_after = 0;
  std::string resume;
  bool plots = false;
  bool real_time = false;
  std::optional<std::size_t> utterance, enrollment;

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic corpus into <out>/data");
  auto* codec_cmd = app.add_subcommand("train-codec", "fit RVQ codebooks on the training speakers");
  auto* tok = app.add_subcommand("tokenize", "encode every utterance into a code grid");
  auto* train = app.add_subcommand("train-lm", "train the codec language model");
  auto* gen = app.add_subcommand("generate", "synthesize one test utterance");
  auto* bench = app.add_subcommand("stream-bench", "measure RTF and first-chunk latency");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test speakers");
  auto* grid = app.add_subcommand("gridsearch", "tune temperature, top_k and n_sb on validation utterances");
  auto* pipe = app.add_subcommand("pipeline", "run every stage from synth-data to eval");
  for (auto* c : {synth, codec_cmd, tok, train, gen, bench, eval, grid, pipe}) add_common(c, common);
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--stop-after", stop_after, "stop after this many steps (schedule unchanged)");
  for (auto* c : {gen, bench, eval, grid}) {
    c->add_option("--checkpoint", checkpoint, "default: <out>/lm/best.lspc, else last.lspc");
  }
  gen->add_option("--utterance", utterance, "target utterance id (default: first test utterance)");
  gen->add_option("--enrollment", enrollment, "enrollment utterance id (default: from the dataset)");
  eval->add_flag("--plots", plots, "write SVG loss/accuracy plots to <out>/plots");
  bench->add_flag("--real-time", real_time, "pace steps at the frame rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = load(common);
    const RunPaths paths{common.out};
    const auto ckpt = [&] { return checkpoint.empty() ? paths.default_checkpoint() : std::filesystem::path(checkpoint); };

    if (synth->parsed()) {
      run_synth(cfg, paths, log_line);
    } else if (codec_cmd->parsed()) {
      run_train_codec(cfg, paths, log_line);
    } else if (tok->parsed()) {
      run_tokenize(cfg, paths, log_line);
    } else if (train->parsed()) {
      TrainLmOptions o;
      o.stop_after = stop_after;
      if (!resume.empty()) o.resume = resume;
      run_train_lm(cfg, paths, o, log_line);
    } else if (gen->parsed()) {
      const auto ds = load_dataset(paths.data());
      const auto cb = codec::load_codebooks(paths.codebooks());
      const auto ck = load_for(cfg, ckpt());
      const auto test = ds.test_ids();
      if (!utterance && test.empty()) throw ValidationError("generate: no test utterances");
      EvalItem item;
      item.target = utterance ? *utterance : test.front();
      if (item.target >= ds.utterances.size()) throw ValidationError("generate: no utterance " + std::to_string(item.target));
      item.enrollment = enrollment ? *enrollment : ds.utterances[item.target].enrollment_of;
      check_eval_item(ds, item);
      sampler::Decoder dec(cfg.model, ck.params);
      const auto& u = ds.utterances[item.target];
      const auto prefix = dec.encode_condition(u.text, ds.utterances[item.enrollment].features);
      const auto grid_out = sampler::generate(dec, prefix, u.features.length(), cfg.sampler);
      const auto path = paths.root / ("generated_" + std::to_string(item.target) + ".grid");
      codec::save_grid(path, grid_out);
      const auto f = codec::rvq_decode(grid_out, cb, cb.num_stages());
      Generator g(ds.spec);
      std::cout << "utterance=" << item.target << " enrollment=" << item.enrollment
                << " frames=" << grid_out.T << " ser=" << oracle_symbol_error_rate(f, u.text, g)
                << " sim=" << speaker_similarity_proxy(f, ds.utterances[item.enrollment].features, g) << " -> "
                << path.string() << '\n';
    } else if (bench->parsed()) {
      auto c = cfg;
      if (real_time) c.stream.real_time = true;
      const auto ds = load_dataset(paths.data());
      const auto cb = codec::load_codebooks(paths.codebooks());
      const auto ck = load_for(c, ckpt());
      const auto rep = stream_bench(c, ds, cb, ck.params);
      std::filesystem::create_directories(paths.root);
      std::ofstream(paths.root / "stream.json") << rep.to_json() << '\n';
      std::cout << rep.summary() << '\n';
    } else if (eval->parsed()) {
      const auto rep = run_eval(cfg, paths, ckpt(), plots, log_line);
      std::cout << rep.to_json() << '\n';
    } else if (grid->parsed()) {
      run_gridsearch(cfg, paths, ckpt(), log_line);
    } else if (pipe->parsed()) {
      run_pipeline(cfg, paths, log_line);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
