#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "harness_fixtures.hpp"
#include "json.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/harness/checkpoint.hpp"
#include "livespeech/harness/eval.hpp"
#include "livespeech/harness/pipeline.hpp"

using namespace livespeech;
using namespace livespeech::harness;

namespace {

std::string bytes_of(const Checkpoint& ck) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ck);
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ls_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness_cli") {
  TEST_CASE("config: defaults, round trip and rejection") {
    const auto def = parse_config("");
    CHECK(def.model.Q == 8);
    CHECK(def.model.K == 64);
    CHECK(def.model.text_vocab == def.data.symbol_vocab);
    CHECK(def.loss.total_steps == def.train.steps);

    auto cfg = testing::tiny_run();
    cfg.loss.scheme = loss::Scheme::adaptive;
    cfg.loss.lambda = 0.1;
    cfg.loss.p_max = 0.5;
    cfg.model.group_of = {0, 0, 1, 1};
    cfg.sampler = {1.1, 15, 2, 7};
    cfg.grid.temperatures = {0.9, 1.3};
    cfg.train.lr = 1.0 / 3.0;
    cfg.finalize();
    CHECK(parse_config(to_text(cfg)) == cfg);

    CHECK_THROWS_WITH_AS(parse_config("[model]\nd_modle = 3\n"), doctest::Contains("d_modle"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_config("[optimiser]\nlr = 1\n"), doctest::Contains("optimiser"), ValidationError);
    CHECK_THROWS_AS(parse_config("seed = 3\n"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_config("[train]\nsteps = ten\n"), doctest::Contains("[train] steps"), ValidationError);
    CHECK_THROWS_AS(parse_config("[loss]\nscheme = fancy\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("[sampler]\nn_sb = 9\n"), ValidationError);  // Q = 8
    CHECK_THROWS_AS(parse_config("[train]\nlr = 1\nlr = 2\n"), ValidationError);
  }

  TEST_CASE("checkpoint: byte-identical round trip and integrity") {
    const auto cfg = testing::tiny_run();
    Checkpoint ck;
    ck.config = cfg;
    ck.params = model::init_params(cfg.model, 3);
    ck.adam.step = 17;
    util::Rng rng(1);
    for (const auto& [n, t] : ck.params.tensors()) {
      auto m = t, v = t;
      for (auto& x : m.values()) x = static_cast<float>(util::normal(rng));
      for (auto& x : v.values()) x = static_cast<float>(util::uniform01(rng));
      ck.adam.m.add(n, m);
      ck.adam.v.add(n, v);
    }
    const auto first = bytes_of(ck);
    std::istringstream is(first);
    const auto loaded = read_checkpoint(is);
    CHECK(loaded.config == cfg);
    CHECK(loaded.params == ck.params);
    CHECK(loaded.adam == ck.adam);
    CHECK(bytes_of(loaded) == first);

    const auto dir = scratch("ckpt");
    save_checkpoint(dir / "a.lspc", ck);
    save_checkpoint(dir / "b.lspc", load_checkpoint(dir / "a.lspc"));
    CHECK(slurp(dir / "a.lspc") == slurp(dir / "b.lspc"));

    auto reject = [](std::string bytes) {
      std::istringstream s(bytes);
      CHECK_THROWS_AS(read_checkpoint(s), ValidationError);
    };
    // One byte inside the last tensor payload (before its crc and the trailer).
    auto flipped = first;
    flipped[flipped.size() - 12] ^= 0x01;
    reject(flipped);
    // A byte inside the config text.
    flipped = first;
    flipped[20] ^= 0x04;
    reject(flipped);
    reject(first.substr(0, first.size() / 2));
    reject(first.substr(0, first.size() - 2));
    auto magic = first;
    magic[0] = 'X';
    reject(magic);
    auto version = first;
    version[4] = 9;
    {
      std::istringstream s(version);
      CHECK_THROWS_WITH_AS(read_checkpoint(s), doctest::Contains("version"), ValidationError);
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("checkpoint: G=8 into a G=4 config names group_of") {
    auto c8 = parse_config("[codec]\nQ = 16\n[model]\nG = 8\nL = 2\nM = 1\nd_model = 16\nd_ff = 32\n");
    auto c4 = parse_config("[codec]\nQ = 16\n[model]\nG = 4\nL = 2\nM = 1\nd_model = 16\nd_ff = 32\n");
    CHECK_THROWS_WITH_AS(check_model_compatible(c4.model, c8.model), doctest::Contains("group_of"), ValidationError);
    Checkpoint ck;
    ck.config = c8;
    ck.params = model::init_params(c8.model, 1);
    const auto dir = scratch("g8");
    save_checkpoint(dir / "g8.lspc", ck);
    CHECK_THROWS_WITH_AS(load_for(c4, dir / "g8.lspc"), doctest::Contains("group_of"), ValidationError);
    CHECK_NOTHROW(load_for(c8, dir / "g8.lspc"));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig t;
    t.steps = 1000;
    t.warmup = 100;
    t.lr = 1e-3;
    t.min_lr_ratio = 0.1;
    CHECK(lr_at(t, 1) == doctest::Approx(1e-5));
    CHECK(lr_at(t, 50) == doctest::Approx(5e-4));
    CHECK(lr_at(t, 100) == doctest::Approx(1e-3));
    CHECK(lr_at(t, 550) == doctest::Approx(1e-4 + 0.9e-3 * 0.5));
    CHECK(lr_at(t, 1000) == doctest::Approx(1e-4));
    for (std::size_t s = 101; s < 1000; ++s) CHECK(lr_at(t, s + 1) <= lr_at(t, s));
  }

  TEST_CASE("batches depend only on seed and step") {
    const std::vector<std::size_t> pool{3, 5, 8, 13, 21};
    CHECK(batch_for_step(1, 7, pool, 4) == batch_for_step(1, 7, pool, 4));
    CHECK(batch_for_step(1, 7, pool, 4) != batch_for_step(1, 8, pool, 4));
    for (auto id : batch_for_step(2, 1, pool, 50)) CHECK(std::find(pool.begin(), pool.end(), id) != pool.end());
  }

  TEST_CASE("training never touches test speakers or validation utterances") {
    testing::TinyRun run;
    const auto split = split_training(run.ds, run.cfg.train);
    CHECK(split.val.size() == run.cfg.train.val_utterances);
    for (auto id : split.pool) {
      CHECK_FALSE(run.ds.utterances[id].test);
      CHECK(std::find(split.val.begin(), split.val.end(), id) == split.val.end());
    }
  }

  TEST_CASE("lambda = 0 logs unit weights; lanes do not change results") {
    testing::TinyRun run;
    for (auto scheme : {loss::Scheme::uniform, loss::Scheme::adaptive}) {
      auto cfg = run.cfg;
      cfg.loss.scheme = scheme;
      cfg.loss.lambda = 0.0;
      TrainOptions o;
      o.lanes = 1;
      const auto r = train_lm(cfg, run.ds, run.tokens, run.cb, o);
      REQUIRE(r.metrics.size() == 2);
      for (const auto& row : r.metrics) {
        CHECK(row.w_min == 1.0);
        CHECK(row.w_max == 1.0);
        CHECK(row.w_mean == 1.0);
        CHECK(row.masked_frac == 0.0);
        CHECK(row.val_acc.size() == cfg.model.Q);
      }
      o.lanes = 3;
      const auto r3 = train_lm(cfg, run.ds, run.tokens, run.cb, o);
      CHECK(r3.step_losses == r.step_losses);
      CHECK(r3.metrics_csv == r.metrics_csv);
      CHECK(r3.last.params == r.last.params);
    }

    // Adaptive weights with lambda > 0 fall below 1 somewhere.
    auto cfg = run.cfg;
    cfg.loss.scheme = loss::Scheme::adaptive;
    cfg.loss.lambda = 1.0;
    const auto r = train_lm(cfg, run.ds, run.tokens, run.cb);
    CHECK(r.metrics.back().w_min < 1.0);
  }

  TEST_CASE("resume reproduces the next step bit-exactly, also through a file") {
    testing::TinyRun run;
    auto cfg = run.cfg;
    cfg.loss.scheme = loss::Scheme::adaptive;
    cfg.loss.lambda = 0.1;
    cfg.loss.p_max = 0.5;
    const auto full = train_lm(cfg, run.ds, run.tokens, run.cb);
    REQUIRE(full.step_losses.size() == 40);

    TrainOptions first;
    first.stop_after = 23;
    const auto part = train_lm(cfg, run.ds, run.tokens, run.cb, first);
    CHECK(part.last.adam.step == 23);
    const auto dir = scratch("resume");
    save_checkpoint(dir / "mid.lspc", part.last);

    TrainOptions second;
    second.resume = load_checkpoint(dir / "mid.lspc");
    const auto rest = train_lm(cfg, run.ds, run.tokens, run.cb, second);
    REQUIRE(rest.step_losses.size() == 17);
    CHECK(rest.step_losses[0] == full.step_losses[23]);
    for (std::size_t i = 0; i < 17; ++i) CHECK(rest.step_losses[i] == full.step_losses[23 + i]);
    CHECK(rest.last.params == full.last.params);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("non-finite loss aborts with diagnostics") {
    testing::TinyRun run;
    Checkpoint bad;
    bad.config = run.cfg;
    bad.params = model::init_params(run.cfg.model, 1);
    for (auto& v : bad.params.get("proj.q0.w").values()) v = std::numeric_limits<float>::quiet_NaN();
    for (const auto& [n, t] : bad.params.tensors()) {
      bad.adam.m.add(n, numerics::TensorF(t.shape()));
      bad.adam.v.add(n, numerics::TensorF(t.shape()));
    }
    TrainOptions o;
    o.resume = bad;
    CHECK_THROWS_WITH_AS(train_lm(run.cfg, run.ds, run.tokens, run.cb, o), doctest::Contains("non-finite loss at step 1"),
                         RuntimeFailure);
  }

  TEST_CASE("one-utterance dataset is memorized within 2000 steps") {
    auto cfg = testing::tiny_run();
    cfg.train.val_utterances = 11;  // leaves a pool of exactly one utterance
    cfg.train.val_generate = 0;
    cfg.train.steps = 2000;
    cfg.train.warmup = 100;
    cfg.train.eval_every = 2000;
    cfg.train.batch = 1;
    cfg.finalize();
    testing::TinyRun run(cfg);
    REQUIRE(split_training(run.ds, cfg.train).pool.size() == 1);
    const auto r = train_lm(cfg, run.ds, run.tokens, run.cb);
    CHECK(r.step_losses.back() < 0.1);
  }

  TEST_CASE("eval: enrollment leakage is rejected and the report validates") {
    testing::TinyRun run;
    const auto t = run.ds.test_ids()[0];
    CHECK_THROWS_WITH_AS(check_eval_item(run.ds, {t, t}), doctest::Contains("own enrollment"), ValidationError);
    const auto other = run.ds.train_ids()[0];
    CHECK_THROWS_AS(check_eval_item(run.ds, {t, other}), ValidationError);
    CHECK_NOTHROW(check_eval_item(run.ds, {t, run.ds.utterances[t].enrollment_of}));

    const auto params = model::init_params(run.cfg.model, 5);
    EvalOptions eo;
    eo.items = {{t, t}};
    CHECK_THROWS_AS(evaluate(run.cfg, run.ds, run.cb, params, run.tokens, eo), ValidationError);

    const auto rep = evaluate(run.cfg, run.ds, run.cb, params, run.tokens);
    CHECK(rep.codebook_accuracy.size() == run.cfg.model.Q);
    CHECK(rep.curve.size() == run.cfg.model.Q);
    REQUIRE(rep.stream.has_value());
    const auto json = rep.to_json();
    CHECK_NOTHROW(validate_report_json(json));
    auto j = nlohmann::json::parse(json);
    j["codebook_accuracy"].erase(0);
    CHECK_THROWS_AS(validate_report_json(j.dump()), ValidationError);
    j = nlohmann::json::parse(json);
    j.erase("symbol_error_rate");
    CHECK_THROWS_WITH_AS(validate_report_json(j.dump()), doctest::Contains("symbol_error_rate"), ValidationError);
    j = nlohmann::json::parse(json);
    j["reference"]["ser_codec"] = 1.5;
    CHECK_THROWS_AS(validate_report_json(j.dump()), ValidationError);
  }

  TEST_CASE("eval: codec round trip stays near the clean-feature oracle") {
    auto cfg = testing::tiny_run();
    cfg.data = DatasetSpec{};
    cfg.data.n_speakers = 10;
    cfg.data.test_speakers = 3;
    cfg.data.n_utterances = 120;
    cfg.codec = CodecConfig{};
    cfg.finalize();
    const auto ds = synth_dataset(cfg.data);
    const auto cb = train_codec(ds, cfg.codec, cfg.seed);
    const auto curve = codec_curve(ds, cb, ds.test_ids());
    // Clean features decode with zero error by construction.
    CHECK(curve.back().ser <= 0.02);
    for (std::size_t q = 1; q < curve.size(); ++q) CHECK(curve[q].mse <= curve[q - 1].mse + 1e-12);
  }

#ifdef LIVESPEECH_CLI
  TEST_CASE("CLI exit codes") {
    const auto dir = scratch("cli");
    const std::string cli = LIVESPEECH_CLI;
    auto run = [&](const std::string& args) {
      const int rc = std::system((cli + " " + args + " > " + (dir / "out.txt").string() + " 2>&1").c_str());
      return WEXITSTATUS(rc);
    };
    std::ofstream(dir / "bad.ini") << "[model]\nwidth = 3\n";
    std::ofstream(dir / "ok.ini") << to_text(testing::tiny_run());
    CHECK(run("synth-data --config " + (dir / "bad.ini").string() + " --out " + dir.string()) == 1);
    CHECK(run("train-codec --config " + (dir / "ok.ini").string() + " --out " + (dir / "empty").string()) == 1);
    CHECK(run("synth-data --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(run("train-codec --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(run("tokenize --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(run("train-lm --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(std::filesystem::exists(dir / "run" / "lm" / "metrics.csv"));
    CHECK(run("eval --plots --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(std::filesystem::exists(dir / "run" / "plots" / "loss.svg"));
    CHECK(run("generate --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(run("stream-bench --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(run("nonsense --config x") == 1);
    // A different seed is a different run; the dataset check still passes
    // because [data] has its own seed.
    CHECK(run("gridsearch --seed 5 --config " + (dir / "ok.ini").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(std::filesystem::exists(dir / "run" / "gridsearch.json"));
    std::filesystem::remove_all(dir);
  }
#endif
}
