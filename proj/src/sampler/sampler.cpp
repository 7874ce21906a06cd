#include "livespeech/sampler/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/patterns/patterns.hpp"

namespace livespeech::sampler {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Top-k draw from softmax(row / tau); ties in the ranking go to the lower index.
int sample_top_k(std::span<const float> row, double tau, std::size_t k, util::Rng& rng) {
  std::vector<int> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, row.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
    return row[a] > row[b] || (row[a] == row[b] && a < b);
  });
  std::vector<double> p(k);
  const double top = row[idx[0]] / tau;
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += p[i] = std::exp(row[idx[i]] / tau - top);
  const double u = util::uniform01(rng) * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += p[i];
    if (u < acc) return idx[i];
  }
  return idx[k - 1];
}

void check_model_args(const Decoder& model, const Prefix& prefix, std::size_t frames) {
  if (frames == 0) throw ValidationError("generate: need at least one frame");
  const auto& cfg = model.config();
  if (prefix.vectors.rank() != 2 || prefix.vectors.cols() != cfg.d_model) {
    throw ValidationError("generate: condition prefix does not match the model (d_model " +
                          std::to_string(cfg.d_model) + ")");
  }
  if (prefix.length() + frames + cfg.Q - 1 > cfg.max_positions) {
    throw ValidationError("generate: " + std::to_string(frames) + " frames exceed max_positions " +
                          std::to_string(cfg.max_positions));
  }
}

// Shared decoding loop; `on_step` sees each finished column.
template <class OnStep>
codec::CodeGrid decode_loop(const Decoder& model, model::DecoderState<float>& state, std::size_t frames,
                            const SamplerConfig& cfg, OnStep&& on_step) {
  const auto& mc = model.config();
  cfg.validate(mc.Q);
  util::Rng rng(util::mix_seed(cfg.seed, 0x5a3));
  const std::size_t steps = frames + mc.Q - 1;
  patterns::ShiftedGrid shifted{codec::CodeGrid(mc.Q, steps, mc.K), frames};
  std::vector<int> prev;
  for (std::size_t i = 0; i < steps; ++i) {
    auto logits = i == 0 ? model.forward_step(state, std::nullopt)
                         : model.forward_step(state, std::span<const int>(prev));
    auto codes = sample_step(logits, cfg, rng);
    for (std::size_t q = 0; q < mc.Q; ++q) {
      if (!patterns::ShiftedGrid::is_code_slot(q, i, frames)) codes[q] = shifted.codes.pad();
      shifted.codes.at(q, i) = codes[q];
    }
    prev = codes;
    on_step(i + 1, codes, shifted);
  }
  return patterns::unshift_delayed(shifted);
}

}  // namespace

void SamplerConfig::validate(std::size_t Q) const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("sampler: temperature must be > 0");
  if (top_k < 1) throw ValidationError("sampler: top_k must be >= 1");
  if (n_sb > Q) {
    throw ValidationError("sampler: n_sb=" + std::to_string(n_sb) + " exceeds Q=" + std::to_string(Q));
  }
}

int argmax(std::span<const float> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> sample_step(const numerics::TensorF& logits, const SamplerConfig& cfg, util::Rng& rng) {
  if (logits.rank() != 2) throw ValidationError("sample_step: logits must be Q x K");
  const std::size_t Q = logits.rows();
  cfg.validate(Q);
  std::vector<int> out(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    out[q] = q < cfg.n_sb ? sample_top_k(logits.row(q), cfg.temperature, cfg.top_k, rng) : argmax(logits.row(q));
  }
  return out;
}

codec::CodeGrid generate(const Decoder& model, const Prefix& prefix, std::size_t frames, const SamplerConfig& cfg,
                         model::Routing routing) {
  check_model_args(model, prefix, frames);
  auto state = model.begin(prefix, routing);
  return decode_loop(model, state, frames, cfg, [](std::size_t, const std::vector<int>&, const auto&) {});
}

StreamResult generate_stream(const Decoder& model, const Prefix& prefix, std::size_t frames,
                             const SamplerConfig& cfg, const StreamOptions& options) {
  check_model_args(model, prefix, frames);
  if (!options.codebooks) throw ValidationError("generate_stream: codebooks are required to decode chunks");
  if (!(options.frame_rate_hz > 0.0f)) throw ValidationError("generate_stream: frame rate must be positive");
  const auto& mc = model.config();
  if (options.codebooks->num_stages() != mc.Q || options.codebooks->codebook_size() != mc.K) {
    throw ValidationError("generate_stream: codebooks do not match the model's Q/K");
  }

  StreamResult result;
  auto& report = result.report;
  const double period = 1.0 / options.frame_rate_hz;
  const auto start = Clock::now();
  auto state = model.begin(prefix, options.routing);
  auto step_start = start;
  bool first_chunk = true;

  result.grid = decode_loop(model, state, frames, cfg, [&](std::size_t step, const std::vector<int>& codes,
                                                           const patterns::ShiftedGrid& shifted) {
    StreamEvent ev;
    ev.step = step;
    ev.codes = codes;
    ev.completed_frame = patterns::frame_completion_index(step, mc.Q);
    if (ev.completed_frame) {
      const std::size_t f = *ev.completed_frame - 1;
      codec::CodeGrid col(mc.Q, 1, mc.K);
      for (std::size_t q = 0; q < mc.Q; ++q) col.at(q, 0) = shifted.codes.at(q, f + q);
      ev.chunk = codec::rvq_decode(col, *options.codebooks, mc.Q);
      ev.chunk->frame_rate_hz = options.frame_rate_hz;
    }
    if (options.min_step_compute_s > 0.0) {
      while (seconds_since(step_start) < options.min_step_compute_s) {
      }
    }
    const double took = seconds_since(step_start);
    report.step_durations_s.push_back(took);
    report.compute_s += took;
    if (options.pacing == Pacing::real_time) {
      std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                std::chrono::duration<double>(period * static_cast<double>(step))));
    }
    ev.t_wall = seconds_since(start);
    if (ev.chunk && first_chunk) {
      report.first_chunk_latency_s = ev.t_wall;
      first_chunk = false;
    }
    if (options.on_event) options.on_event(ev);
    result.events.push_back(std::move(ev));
    step_start = Clock::now();
  });

  report.frames = frames;
  report.audio_s = static_cast<double>(frames) / options.frame_rate_hz;
  report.rtf = report.compute_s / report.audio_s;
  return result;
}

double StreamReport::step_percentile_ms(double pct) const {
  if (step_durations_s.empty()) return 0.0;
  auto d = step_durations_s;
  std::sort(d.begin(), d.end());
  const double pos = pct / 100.0 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, d.size() - 1);
  return 1e3 * (d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]));
}

std::string StreamReport::to_json() const {
  nlohmann::json j;
  j["frames"] = frames;
  j["rtf"] = rtf;
  j["first_chunk_latency_s"] = first_chunk_latency_s;
  j["compute_s"] = compute_s;
  j["audio_s"] = audio_s;
  j["step_p50_ms"] = step_percentile_ms(50);
  j["step_p95_ms"] = step_percentile_ms(95);
  j["step_durations_s"] = step_durations_s;
  return j.dump(2);
}

std::string StreamReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << "frames=" << frames << " rtf=" << rtf
     << " latency_ms=" << 1e3 * first_chunk_latency_s << " step_p50_ms=" << step_percentile_ms(50)
     << " step_p95_ms=" << step_percentile_ms(95);
  return os.str();
}

SearchResult grid_search(const SearchGrid& grid, std::size_t Q, std::uint64_t seed,
                         const std::function<double(const SamplerConfig&)>& objective) {
  if (grid.temperatures.empty() || grid.top_ks.empty() || grid.n_sbs.empty()) {
    throw ValidationError("grid_search: every grid must be non-empty");
  }
  const std::set<std::size_t> n_sbs(grid.n_sbs.begin(), grid.n_sbs.end());
  const std::set<double> taus(grid.temperatures.begin(), grid.temperatures.end());
  const std::set<std::size_t> ks(grid.top_ks.begin(), grid.top_ks.end());
  SearchResult out;
  bool have = false;
  for (std::size_t n_sb : n_sbs) {
    if (n_sb > Q) continue;
    for (double tau : taus) {
      for (std::size_t k : ks) {
        SamplerConfig c{tau, k, n_sb, seed};
        c.validate(Q);
        const double score = objective(c);
        out.evaluated.push_back({c, score});
        if (!have || score > out.best_score) {
          out.best = c;
          out.best_score = score;
          have = true;
        }
      }
    }
  }
  if (!have) throw ValidationError("grid_search: no n_sb value is <= Q=" + std::to_string(Q));
  return out;
}

}  // namespace livespeech::sampler
