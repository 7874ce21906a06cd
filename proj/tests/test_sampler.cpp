#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/sampler/sampler.hpp"
#include "model_fixtures.hpp"

using namespace livespeech;
using namespace livespeech::sampler;
using numerics::TensorF;

namespace {

TensorF random_logits(std::size_t Q, std::size_t K, std::uint64_t seed) {
  util::Rng rng(seed);
  TensorF t = TensorF::matrix(Q, K);
  for (auto& v : t.values()) v = static_cast<float>(2.0 * util::normal(rng));
  return t;
}

struct Fixture {
  model::ModelConfig cfg;
  model::Parameters<float> params;
  codec::Codebooks codebooks;
  std::optional<Decoder> dec;
  Prefix prefix;

  explicit Fixture(std::size_t Q = 4, std::size_t G = 2) {
    cfg = testing::tiny_config(G);
    cfg.Q = Q;
    cfg.max_positions = 512;
    params = testing::random_params(cfg, 3).cast<float>();
    dec.emplace(cfg, params);
    prefix = dec->encode_condition(std::vector<int>{1, 2, 3}, testing::random_enrollment(6, cfg.feat_dim, 4));
    util::Rng rng(5);
    for (std::size_t q = 0; q < Q; ++q) {
      TensorF s = TensorF::matrix(cfg.K, 3);
      for (std::size_t i = 3; i < s.numel(); ++i) s[i] = static_cast<float>(util::normal(rng));
      codebooks.stages.push_back(s);
    }
  }
};

}  // namespace

TEST_SUITE("sampler_streaming") {
  TEST_CASE("n_sb = 0 and top_k = 1 are greedy") {
    const auto logits = random_logits(5, 12, 1);
    util::Rng rng(2);
    std::vector<int> greedy;
    for (std::size_t q = 0; q < 5; ++q) greedy.push_back(argmax(logits.row(q)));
    CHECK(sample_step(logits, SamplerConfig{1.0, 10, 0, 0}, rng) == greedy);
    for (double tau : {0.3, 1.0, 5.0}) CHECK(sample_step(logits, SamplerConfig{tau, 1, 5, 0}, rng) == greedy);
  }

  TEST_CASE("sampling is deterministic for a seed and stays inside the top-k") {
    const auto logits = random_logits(2, 20, 3);
    SamplerConfig cfg{1.0, 3, 1, 9};
    util::Rng a(7), b(7);
    CHECK(sample_step(logits, cfg, a) == sample_step(logits, cfg, b));

    std::vector<int> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return logits.at(0, x) > logits.at(0, y); });
    const std::set<int> top3(order.begin(), order.begin() + 3);
    util::Rng rng(11);
    std::map<int, int> counts;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const int c = sample_step(logits, cfg, rng)[0];
      CHECK(top3.count(c) == 1);
      ++counts[c];
    }
    double z = 0.0;
    for (int c : top3) z += std::exp(static_cast<double>(logits.at(0, c)));
    for (int c : top3) {
      const double expected = std::exp(static_cast<double>(logits.at(0, c))) / z;
      CHECK(std::abs(counts[c] / static_cast<double>(n) - expected) < 0.015);
    }
  }

  TEST_CASE("temperature flattens the sampled distribution") {
    TensorF logits(numerics::Shape{1, 2}, {1.0f, 0.0f});
    auto freq = [&](double tau) {
      util::Rng rng(1);
      int zero = 0;
      for (int i = 0; i < 20000; ++i) zero += sample_step(logits, SamplerConfig{tau, 2, 1, 0}, rng)[0] == 0 ? 1 : 0;
      return zero / 20000.0;
    };
    CHECK(freq(1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(0.02));
    CHECK(freq(4.0) < freq(1.0));
  }

  TEST_CASE("invalid configs are rejected") {
    const auto logits = random_logits(3, 4, 1);
    util::Rng rng(1);
    CHECK_THROWS_AS(sample_step(logits, SamplerConfig{0.0, 2, 1, 0}, rng), ValidationError);
    CHECK_THROWS_AS(sample_step(logits, SamplerConfig{1.0, 0, 1, 0}, rng), ValidationError);
    CHECK_THROWS_AS(sample_step(logits, SamplerConfig{1.0, 2, 4, 0}, rng), ValidationError);
  }

  TEST_CASE("generate: step count, PAD-free output and determinism") {
    Fixture fx(3, 1);
    codec::CodeGrid grid;
    std::size_t events = 0;
    StreamOptions opts;
    opts.codebooks = &fx.codebooks;
    opts.on_event = [&](const StreamEvent&) { ++events; };
    auto r = generate_stream(*fx.dec, fx.prefix, 1, SamplerConfig{}, opts);
    CHECK(events == 3);
    CHECK(r.grid.T == 1);

    Fixture big;
    const auto a = generate(*big.dec, big.prefix, 25, SamplerConfig{});
    CHECK(a.Q == big.cfg.Q);
    CHECK(a.T == 25);
    CHECK_FALSE(a.has_pad());
    CHECK_NOTHROW(a.validate());
    CHECK(generate(*big.dec, big.prefix, 25, SamplerConfig{}) == a);
    SamplerConfig sampled{1.2, 4, 2, 17};
    CHECK(generate(*big.dec, big.prefix, 25, sampled) == generate(*big.dec, big.prefix, 25, sampled));
  }

  TEST_CASE("streaming matches batch generation and emits chunks on schedule") {
    Fixture fx;
    const std::size_t T = 12, Q = fx.cfg.Q;
    for (const auto& cfg : {SamplerConfig{}, SamplerConfig{1.1, 5, 2, 23}}) {
      StreamOptions opts;
      opts.codebooks = &fx.codebooks;
      auto r = generate_stream(*fx.dec, fx.prefix, T, cfg, opts);
      CHECK(r.grid == generate(*fx.dec, fx.prefix, T, cfg));
      REQUIRE(r.events.size() == T + Q - 1);
      std::vector<std::size_t> emitted;
      double prev = 0.0;
      for (const auto& ev : r.events) {
        CHECK(ev.completed_frame == patterns::frame_completion_index(ev.step, Q));
        CHECK(ev.chunk.has_value() == ev.completed_frame.has_value());
        CHECK(ev.t_wall >= prev);
        prev = ev.t_wall;
        if (!ev.chunk) continue;
        emitted.push_back(ev.step);
        // The chunk is exactly the decoded frame of the final grid.
        codec::CodeGrid col(Q, 1, fx.cfg.K);
        for (std::size_t q = 0; q < Q; ++q) col.at(q, 0) = r.grid.at(q, *ev.completed_frame - 1);
        CHECK(codec::rvq_decode(col, fx.codebooks, Q).frames == ev.chunk->frames);
      }
      std::vector<std::size_t> expected;
      for (std::size_t s = Q; s <= Q + T - 1; ++s) expected.push_back(s);
      CHECK(emitted == expected);

      double first_q = 0.0;
      for (std::size_t i = 0; i < Q; ++i) first_q += r.report.step_durations_s[i];
      CHECK(r.report.first_chunk_latency_s >= first_q);
      CHECK(r.report.rtf > 0.0);
    }
  }

  TEST_CASE("real-time pacing puts the first chunk on the frame grid") {
    Fixture fx(16, 1);
    StreamOptions opts;
    opts.codebooks = &fx.codebooks;
    opts.pacing = Pacing::real_time;
    auto r = generate_stream(*fx.dec, fx.prefix, 3, SamplerConfig{}, opts);
    CHECK(r.report.first_chunk_latency_s >= 16.0 / 75.0);
    CHECK(r.report.first_chunk_latency_s <= 16.0 / 75.0 + 0.010);
    // Pacing waits are not compute.
    CHECK(r.report.compute_s < 0.5 * r.report.first_chunk_latency_s);
  }

  TEST_CASE("fixed 5 ms steps give RTF near 0.375") {
    Fixture fx(4, 1);
    StreamOptions opts;
    opts.codebooks = &fx.codebooks;
    opts.min_step_compute_s = 0.005;
    auto r = generate_stream(*fx.dec, fx.prefix, 300, SamplerConfig{}, opts);
    CHECK(r.report.rtf == doctest::Approx(0.375 * 303.0 / 300.0).epsilon(0.03));
  }

  TEST_CASE("report JSON and summary line") {
    StreamReport rep;
    rep.frames = 3;
    rep.rtf = 0.5;
    rep.first_chunk_latency_s = 0.2;
    rep.step_durations_s = {0.001, 0.002, 0.003, 0.004};
    auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j["frames"] == 3);
    CHECK(j["step_durations_s"].size() == 4);
    CHECK(rep.step_percentile_ms(50) == doctest::Approx(2.5));
    CHECK(rep.summary().find("latency_ms=200.000") != std::string::npos);
  }

  TEST_CASE("grid search") {
    SearchGrid single{{1.1}, {15}, {2}};
    auto r = grid_search(single, 8, 1, [](const SamplerConfig&) { return 0.3; });
    CHECK(r.best == SamplerConfig{1.1, 15, 2, 1});

    auto objective = [](const SamplerConfig& c) {
      return -std::abs(c.temperature - 1.1) - 0.01 * std::abs(static_cast<double>(c.top_k) - 15.0) -
             0.1 * std::abs(static_cast<double>(c.n_sb) - 3.0);
    };
    SearchGrid full;
    auto best = grid_search(full, 8, 2, objective);
    // Brute force over the same grid, n_sb = 16 excluded for Q = 8.
    double top = -1e9;
    SamplerConfig arg;
    std::size_t count = 0;
    for (double tau : full.temperatures) {
      for (std::size_t k : full.top_ks) {
        for (std::size_t n : full.n_sbs) {
          if (n > 8) continue;
          ++count;
          SamplerConfig c{tau, k, n, 2};
          if (objective(c) > top) top = objective(c), arg = c;
        }
      }
    }
    CHECK(best.best == arg);
    CHECK(best.best_score == top);
    CHECK(best.evaluated.size() == count);
    for (const auto& e : best.evaluated) CHECK(e.score == objective(e.config));

    auto flat = grid_search(full, 16, 0, [](const SamplerConfig&) { return 1.0; });
    CHECK(flat.best.n_sb == 1);
    CHECK(flat.best.temperature == 1.0);
    CHECK(flat.evaluated.size() == 54);

    CHECK_THROWS_AS(grid_search(SearchGrid{{}, {10}, {1}}, 8, 0, objective), ValidationError);
    CHECK_THROWS_AS(grid_search(SearchGrid{{1.0}, {10}, {16}}, 8, 0, objective), ValidationError);
  }
}
