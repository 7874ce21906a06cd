#include "livespeech/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "livespeech/errors.hpp"
#include "livespeech/harness/eval.hpp"
#include "livespeech/io/binary.hpp"
#include "livespeech/loss/adaptive_loss.hpp"
#include "livespeech/model/decoder.hpp"
#include "livespeech/patterns/patterns.hpp"
#include "livespeech/util/random.hpp"

namespace livespeech::harness {

using codec::CodeGrid;
using model::Parameters;
using numerics::TensorF;
using numerics::Var;

codec::Codebooks train_codec(const Dataset& ds, const CodecConfig& cfg, std::uint64_t seed) {
  auto ids = ds.train_ids();
  util::Rng rng(util::mix_seed(seed, kSeedCodec));
  util::shuffle(ids, rng);
  std::vector<codec::FeatureSequence> corpus;
  std::size_t frames = 0;
  for (auto id : ids) {
    if (cfg.max_train_frames && frames >= cfg.max_train_frames) break;
    corpus.push_back(ds.utterances[id].features);
    frames += corpus.back().length();
  }
  codec::KMeansOptions km;
  km.iterations = cfg.iterations;
  km.zero_reserved = cfg.zero_reserved;
  return codec::train_codebooks(corpus, cfg.Q, cfg.K, util::mix_seed(seed, kSeedCodec + 100), km);
}

std::vector<CodeGrid> tokenize(const Dataset& ds, const codec::Codebooks& cb) {
  std::vector<CodeGrid> out;
  out.reserve(ds.utterances.size());
  for (const auto& u : ds.utterances) out.push_back(codec::rvq_encode(u.features, cb));
  return out;
}

void save_tokens(const std::filesystem::path& path, const std::vector<CodeGrid>& grids) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  io::write_magic(os, "TOKS");
  io::write_u32(os, static_cast<std::uint32_t>(grids.size()));
  for (const auto& g : grids) codec::write_grid(os, g);
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

std::vector<CodeGrid> load_tokens(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  io::expect_magic(is, "TOKS", "tokens");
  const auto n = io::read_u32(is, "token grid count");
  std::vector<CodeGrid> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(codec::read_grid(is));
  return out;
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
  const double s = static_cast<double>(step);
  if (cfg.warmup > 0 && step <= cfg.warmup) return cfg.lr * s / static_cast<double>(cfg.warmup);
  if (cfg.steps <= cfg.warmup) return cfg.lr;
  const double progress = (s - static_cast<double>(cfg.warmup)) / static_cast<double>(cfg.steps - cfg.warmup);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  return cfg.lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * cosine);
}

TrainSplit split_training(const Dataset& ds, const TrainConfig& cfg) {
  const auto ids = ds.train_ids();
  if (ids.size() <= cfg.val_utterances) {
    throw ValidationError("train: " + std::to_string(ids.size()) + " training utterances leave none after " +
                          std::to_string(cfg.val_utterances) + " validation ones");
  }
  TrainSplit s;
  const auto cut = ids.end() - static_cast<std::ptrdiff_t>(cfg.val_utterances);
  s.pool.assign(ids.begin(), cut);
  s.val.assign(cut, ids.end());
  return s;
}

std::vector<std::size_t> batch_for_step(std::uint64_t seed, std::size_t step, const std::vector<std::size_t>& pool,
                                        std::size_t batch) {
  util::Rng rng(util::mix_seed(util::mix_seed(seed, kSeedOrder), step));
  std::vector<std::size_t> out(batch);
  for (auto& id : out) id = pool[util::uniform_index(rng, pool.size())];
  return out;
}

std::size_t worker_lanes() {
  const char* env = std::getenv("LIVESPEECH_THREADS");
  if (!env) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n < 1 ? 1 : static_cast<std::size_t>(n);
}

std::string metrics_header(std::size_t Q) {
  std::string h = "step,lr,train_loss,val_loss,val_ser,val_sim";
  for (std::size_t q = 1; q <= Q; ++q) h += ",acc_q" + std::to_string(q);
  return h + ",w_mean,w_min,w_max,masked_frac";
}

std::string metrics_line(const MetricsRow& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.step << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ','
     << r.val_ser << ',' << r.val_sim;
  for (double a : r.val_acc) os << ',' << a;
  os << ',' << r.w_mean << ',' << r.w_min << ',' << r.w_max << ',' << r.masked_frac;
  return os.str();
}

namespace {

struct ItemGrad {
  double loss = 0.0;
  std::vector<TensorF> grads;  // parameter map order
  loss::FrameWeightMatrix weights;
  std::vector<double> mean_ce;
};

ItemGrad item_gradient(const sampler::Decoder& dec, const Dataset& ds, const std::vector<CodeGrid>& tokens,
                       std::size_t id, const loss::LossConfig& lc, std::size_t step) {
  const auto& u = ds.utterances[id];
  const auto shifted = patterns::shift_delayed(tokens[id]);
  numerics::Tape<float> tape;
  const auto bp = dec.bind(tape, true);
  Var prefix = dec.condition_graph(tape, bp, u.text, ds.utterances[u.enrollment_of].features);
  const auto logits = dec.logits_graph(tape, bp, prefix, u.text.size() + dec.config().cond_len, shifted);
  auto res = loss::weighted_ce_loss(tape, logits, shifted, lc, step);
  ItemGrad out;
  out.loss = static_cast<double>(tape.value(res.loss).item());
  out.weights = std::move(res.weights);
  out.mean_ce = res.mean_ce;
  if (!std::isfinite(out.loss)) return out;
  tape.backward(res.loss);
  for (const auto& [name, t] : dec.params().tensors()) out.grads.push_back(tape.grad(bp[name]));
  return out;
}

[[noreturn]] void abort_non_finite(std::size_t step, std::size_t id, const ItemGrad& g, const char* what) {
  std::ostringstream os;
  os << "train: non-finite " << what << " at step " << step << " (utterance " << id << ", loss " << g.loss
     << "); per-codebook CE:";
  for (double ce : g.mean_ce) os << ' ' << ce;
  throw RuntimeFailure(os.str());
}

struct WeightStats {
  double sum = 0.0, min = 0.0, max = 0.0;
  std::size_t used = 0, masked = 0, targets = 0;

  void add(const loss::FrameWeightMatrix& w, const CodeGrid& shifted_codes) {
    for (std::size_t q = 0; q < w.Q; ++q) {
      for (std::size_t i = 0; i < w.steps; ++i) {
        if (shifted_codes.at(q, i) == shifted_codes.pad()) continue;
        ++targets;
        if (w.masked(q, i)) {
          ++masked;
          continue;
        }
        const double v = w.at(q, i);
        min = used == 0 ? v : std::min(min, v);
        max = used == 0 ? v : std::max(max, v);
        sum += v;
        ++used;
      }
    }
  }
};

}  // namespace

TrainResult train_lm(const RunConfig& cfg, const Dataset& ds, const std::vector<CodeGrid>& tokens,
                     const codec::Codebooks& cb, const TrainOptions& options) {
  cfg.validate();
  ds.check_split();
  if (tokens.size() != ds.utterances.size()) {
    throw ValidationError("train: " + std::to_string(tokens.size()) + " token grids for " +
                          std::to_string(ds.utterances.size()) + " utterances");
  }
  for (const auto& g : tokens) {
    if (g.Q != cfg.model.Q || g.K != cfg.model.K) {
      throw ValidationError("train: token grids are Q=" + std::to_string(g.Q) + " K=" + std::to_string(g.K) +
                            ", config wants Q=" + std::to_string(cfg.model.Q) + " K=" + std::to_string(cfg.model.K));
    }
  }
  if (cb.num_stages() != cfg.model.Q || cb.codebook_size() != cfg.model.K) {
    throw ValidationError("train: codebooks do not match the config's Q/K");
  }
  const auto split = split_training(ds, cfg.train);
  const std::size_t lanes = options.lanes ? options.lanes : worker_lanes();
  const std::size_t total = cfg.train.steps;
  const std::size_t stop = options.stop_after ? std::min(options.stop_after, total) : total;

  TrainResult result;
  Checkpoint& ck = result.last;
  ck.config = cfg;
  if (options.resume) {
    const auto& r = *options.resume;
    check_model_compatible(cfg.model, r.config.model);
    ck.params = r.params;
    ck.adam = r.adam;
    if (ck.adam.m.size() == 0) throw ValidationError("train: resume checkpoint has no optimizer state");
  } else {
    ck.params = model::init_params(cfg.model, util::mix_seed(cfg.seed, kSeedInit));
    for (const auto& [name, t] : ck.params.tensors()) {
      ck.adam.m.add(name, TensorF(t.shape()));
      ck.adam.v.add(name, TensorF(t.shape()));
    }
  }
  model::check_params(cfg.model, ck.params);

  std::ofstream csv;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    csv.open(options.out_dir / "metrics.csv", options.resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw RuntimeFailure("cannot write metrics.csv in " + options.out_dir.string());
    if (!options.resume) csv << metrics_header(cfg.model.Q) << '\n';
  }
  result.metrics_csv = metrics_header(cfg.model.Q) + "\n";

  const auto val_items = default_items(ds, split.val, 0);
  const std::vector<EvalItem> gen_items(val_items.begin(),
                                        val_items.begin() + static_cast<std::ptrdiff_t>(cfg.train.val_generate));
  sampler::SamplerConfig greedy;
  greedy.seed = cfg.sampler.seed;
  double best_ser = 2.0;
  double window_loss = 0.0;
  std::size_t window_steps = 0;

  const auto names = [&] {
    std::vector<std::string> n;
    for (const auto& [name, t] : ck.params.tensors()) n.push_back(name);
    return n;
  }();

  for (std::size_t step = ck.adam.step + 1; step <= stop; ++step) {
    const auto batch = batch_for_step(cfg.seed, step, split.pool, cfg.train.batch);
    std::vector<ItemGrad> items(batch.size());
    {
      sampler::Decoder dec(cfg.model, ck.params);
      auto work = [&](std::size_t lane) {
        for (std::size_t b = lane; b < batch.size(); b += lanes) {
          items[b] = item_gradient(dec, ds, tokens, batch[b], cfg.loss, step - 1);
        }
      };
      if (lanes <= 1) {
        work(0);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t l = 0; l < lanes; ++l) threads.emplace_back(work, l);
        for (auto& t : threads) t.join();
      }
    }

    // Reduce in batch order regardless of lane count.
    double loss_sum = 0.0;
    std::vector<TensorF> grad;
    for (std::size_t b = 0; b < items.size(); ++b) {
      if (!std::isfinite(items[b].loss)) abort_non_finite(step, batch[b], items[b], "loss");
      loss_sum += items[b].loss;
      if (grad.empty()) {
        grad = std::move(items[b].grads);
        continue;
      }
      for (std::size_t k = 0; k < grad.size(); ++k) {
        auto dst = grad[k].values();
        const auto src = items[b].grads[k].values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    const double step_loss = loss_sum / static_cast<double>(batch.size());
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    double norm2 = 0.0;
    for (auto& g : grad) {
      for (auto& v : g.values()) {
        v *= inv_b;
        norm2 += static_cast<double>(v) * v;
      }
    }
    if (!std::isfinite(norm2)) abort_non_finite(step, batch[0], items[0], "gradient");
    const double norm = std::sqrt(norm2);
    const double clip_scale = cfg.train.clip > 0.0 && norm > cfg.train.clip ? cfg.train.clip / norm : 1.0;

    // Adam, moments kept in f32 like the parameters.
    const double lr = lr_at(cfg.train, step);
    const double b1 = cfg.train.beta1, b2 = cfg.train.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto p = ck.params.get(names[k]).values();
      auto m = ck.adam.m.get(names[k]).values();
      auto v = ck.adam.v.get(names[k]).values();
      const auto g = grad[k].values();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = static_cast<double>(g[j]) * clip_scale;
        const double mj = b1 * m[j] + (1.0 - b1) * gj;
        const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
        m[j] = static_cast<float>(mj);
        v[j] = static_cast<float>(vj);
        p[j] = static_cast<float>(p[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.train.adam_eps));
      }
    }
    ck.adam.step = step;
    result.step_losses.push_back(step_loss);
    window_loss += step_loss;
    ++window_steps;

    if (step % cfg.train.eval_every != 0 && step != total) continue;

    MetricsRow row;
    row.step = step;
    row.lr = lr;
    row.train_loss = window_loss / static_cast<double>(window_steps);
    window_loss = 0.0;
    window_steps = 0;
    sampler::Decoder dec(cfg.model, ck.params);
    WeightStats ws;
    std::optional<loss::FrameWeightMatrix> dump;
    {
      double vl = 0.0;
      std::vector<double> acc(cfg.model.Q, 0.0);
      for (const auto& item : val_items) {
        const auto& u = ds.utterances[item.target];
        const auto shifted = patterns::shift_delayed(tokens[item.target]);
        const auto prefix = dec.encode_condition(u.text, ds.utterances[item.enrollment].features);
        const auto logits = dec.forward_full(prefix, shifted);
        numerics::Tape<float> tape;
        std::vector<Var> per_q;
        const std::size_t Tp = shifted.codes.T, K = cfg.model.K;
        for (std::size_t q = 0; q < cfg.model.Q; ++q) {
          TensorF lq = TensorF::matrix(Tp, K);
          std::copy_n(logits.data() + q * Tp * K, Tp * K, lq.data());
          per_q.push_back(tape.constant(std::move(lq)));
        }
        // Validation loss is plain CE so runs with different schemes compare.
        const auto plain = loss::weighted_ce_loss(tape, per_q, shifted, loss::LossConfig{}, step);
        vl += static_cast<double>(tape.value(plain.loss).item());
        auto res = loss::weighted_ce_loss(tape, per_q, shifted, cfg.loss, step);
        for (std::size_t q = 0; q < cfg.model.Q; ++q) acc[q] += res.accuracy[q];
        ws.add(res.weights, shifted.codes);
        if (!dump) dump = res.weights;
      }
      const double n = static_cast<double>(val_items.size());
      row.val_loss = vl / n;
      for (auto& a : acc) a /= n;
      row.val_acc = acc;
    }
    row.w_mean = ws.used ? ws.sum / static_cast<double>(ws.used) : 0.0;
    row.w_min = ws.min;
    row.w_max = ws.max;
    row.masked_frac = ws.targets ? static_cast<double>(ws.masked) / static_cast<double>(ws.targets) : 0.0;
    if (!gen_items.empty()) {
      const auto score = score_generation(dec, cb, ds, gen_items, greedy);
      row.val_ser = score.ser;
      row.val_sim = score.sim;
    }
    result.metrics.push_back(row);
    const auto line = metrics_line(row);
    result.metrics_csv += line + "\n";
    if (csv.is_open()) csv << line << '\n' << std::flush;
    if (options.log) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << "step " << step << " lr " << lr << " train " << row.train_loss
         << " val " << row.val_loss << " ser " << row.val_ser << " sim " << row.val_sim;
      options.log(os.str());
    }
    if (!gen_items.empty() && row.val_ser < best_ser) {
      best_ser = row.val_ser;
      result.best = ck;
      if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "best.lspc", ck);
    }
    if (!options.out_dir.empty()) {
      save_checkpoint(options.out_dir / "last.lspc", ck);
      if (step == total && dump) {
        std::ofstream w(options.out_dir / "weights_final.csv");
        w << dump->to_csv();
      }
    }
  }
  return result;
}

}  // namespace livespeech::harness
