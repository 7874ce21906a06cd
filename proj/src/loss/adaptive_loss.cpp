#include "livespeech/loss/adaptive_loss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "livespeech/errors.hpp"
#include "livespeech/numerics/ops.hpp"

namespace livespeech::loss {

namespace nx = numerics;

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::uniform:
      return "uniform";
    case Scheme::adaptive:
      return "adaptive";
    case Scheme::static_priority:
      return "static_priority";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "uniform") return Scheme::uniform;
  if (s == "adaptive") return Scheme::adaptive;
  if (s == "static_priority") return Scheme::static_priority;
  throw ValidationError("loss scheme must be uniform, adaptive or static_priority, got '" + s + "'");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("loss config: lambda must be >= 0");
  if (p_max && !(*p_max > 0.0 && *p_max <= 1.0)) throw ValidationError("loss config: p_max must lie in (0, 1]");
  for (double w : static_init) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("loss config: static weights must be positive");
  }
}

std::vector<double> LossConfig::static_initial(std::size_t Q) const {
  std::vector<double> w(Q, 1.0);
  for (std::size_t q = 0; q < Q && q < static_init.size(); ++q) w[q] = static_init[q];
  return w;
}

CorrectProb correct_prob(std::span<const double> probs, std::size_t K, std::span<const int> targets, int pad) {
  const std::size_t Q = targets.size();
  if (probs.size() != Q * K) {
    throw ValidationError("correct_prob: probs of size " + std::to_string(probs.size()) + " for Q=" +
                          std::to_string(Q) + ", K=" + std::to_string(K));
  }
  CorrectProb out{std::vector<double>(Q, 0.0), std::vector<bool>(Q, false)};
  for (std::size_t q = 0; q < Q; ++q) {
    const int c = targets[q];
    if (c == pad) continue;
    if (c < 0 || static_cast<std::size_t>(c) >= K) {
      throw ValidationError("correct_prob: target " + std::to_string(c) + " outside [0, " + std::to_string(K) + ")");
    }
    out.p[q] = std::clamp(probs[q * K + static_cast<std::size_t>(c)], 0.0, 1.0);
    out.valid[q] = true;
  }
  return out;
}

std::vector<double> frame_weights(std::span<const double> p, double lambda) {
  std::vector<double> w(p.size(), 1.0);
  double running = 1.0;
  for (std::size_t q = 1; q < p.size(); ++q) {
    running *= std::pow(p[q - 1], lambda);
    w[q] = running;
  }
  return w;
}

WeightColumn apply_pmax(std::span<const double> weights, std::span<const double> p, std::optional<double> p_max) {
  if (weights.size() != p.size()) throw ValidationError("apply_pmax: weights and probabilities differ in length");
  WeightColumn out{std::vector<double>(weights.begin(), weights.end()), std::vector<bool>(weights.size(), false)};
  if (!p_max) return out;
  double largest = 0.0;
  for (std::size_t q = 0; q < p.size(); ++q) {
    out.masked[q] = p[q] > *p_max;
    if (!out.masked[q]) largest = std::max(largest, weights[q]);
  }
  for (std::size_t q = 0; q < p.size(); ++q) {
    if (out.masked[q]) {
      out.weights[q] = 0.0;
    } else if (largest > 0.0) {
      out.weights[q] = weights[q] / largest;
    }
  }
  return out;
}

std::vector<double> static_priority_weights(std::size_t step, const LossConfig& cfg, std::size_t Q) {
  const double frac = cfg.total_steps == 0
                          ? 0.0
                          : std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(cfg.total_steps));
  auto w = cfg.static_initial(Q);
  for (auto& v : w) v = std::pow(v, frac);
  return w;
}

std::string FrameWeightMatrix::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t i = 0; i < steps; ++i) {
      if (i) os << ',';
      if (!masked(q, i)) os << at(q, i);
    }
    os << '\n';
  }
  return os.str();
}

namespace {

// Probability of the target under softmax of one logits row.
template <class T>
double target_prob(std::span<const T> row, int target) {
  double mx = row[0];
  for (T v : row) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (T v : row) z += std::exp(static_cast<double>(v) - mx);
  return std::exp(static_cast<double>(row[static_cast<std::size_t>(target)]) - mx) / z;
}

}  // namespace

template <class T>
FrameWeightMatrix compute_weights(const std::vector<const nx::Tensor<T>*>& logits, const patterns::ShiftedGrid& targets,
                                  const LossConfig& cfg, std::size_t step) {
  cfg.validate();
  targets.validate_layout();
  const auto& grid = targets.codes;
  const std::size_t Q = grid.Q, steps = grid.T, K = grid.K;
  if (logits.size() != Q) {
    throw ValidationError("weighted_ce_loss: " + std::to_string(logits.size()) + " logit blocks for Q=" +
                          std::to_string(Q));
  }
  for (const auto* l : logits) {
    if (l->rank() != 2 || l->rows() != steps || l->cols() != K) {
      throw ValidationError("weighted_ce_loss: shape mismatch, logits " + nx::shape_str(l->shape()) + " vs targets " +
                            std::to_string(steps) + "x" + std::to_string(K));
    }
  }
  FrameWeightMatrix fw;
  fw.Q = Q;
  fw.steps = steps;
  fw.weights.assign(Q * steps, 0.0);
  fw.mask.assign(Q * steps, true);

  if (cfg.scheme != Scheme::adaptive) {
    const auto w = cfg.scheme == Scheme::static_priority ? static_priority_weights(step, cfg, Q)
                                                         : std::vector<double>(Q, 1.0);
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t i = 0; i < steps; ++i) {
        if (grid.at(q, i) == grid.pad()) continue;
        fw.weights[q * steps + i] = w[q];
        fw.mask[q * steps + i] = false;
      }
    }
    return fw;
  }

  std::vector<double> p(Q);
  for (std::size_t frame = 0; frame < targets.original_T; ++frame) {
    for (std::size_t q = 0; q < Q; ++q) {
      p[q] = target_prob<T>(logits[q]->row(frame + q), grid.at(q, frame + q));
    }
    const auto col = apply_pmax(frame_weights(p, cfg.lambda), p, cfg.p_max);
    for (std::size_t q = 0; q < Q; ++q) {
      fw.weights[q * steps + frame + q] = col.weights[q];
      fw.mask[q * steps + frame + q] = col.masked[q];
    }
  }
  return fw;
}

template <class T>
LossResult<T> weighted_ce_loss(nx::Tape<T>& tape, const std::vector<nx::Var>& logits,
                               const patterns::ShiftedGrid& targets, const LossConfig& cfg, std::size_t step) {
  std::vector<const nx::Tensor<T>*> values;
  for (auto v : logits) values.push_back(&tape.value(v));
  LossResult<T> out;
  out.weights = compute_weights<T>(values, targets, cfg, step);

  const auto& grid = targets.codes;
  const std::size_t Q = grid.Q, steps = grid.T;
  out.accuracy.assign(Q, 0.0);
  out.mean_ce.assign(Q, 0.0);
  // Pointers into the tape go stale once new nodes are recorded, so all
  // reads of the logits happen before the graph is extended.
  std::vector<std::size_t> row_valid(Q, 0);
  for (std::size_t q = 0; q < Q; ++q) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      const int target = grid.at(q, i);
      if (target == grid.pad()) continue;
      ++row_valid[q];
      const auto row = values[q]->row(i);
      correct += std::max_element(row.begin(), row.end()) - row.begin() == target ? 1 : 0;
    }
    out.accuracy[q] = row_valid[q] ? static_cast<double>(correct) / static_cast<double>(row_valid[q]) : 0.0;
  }
  values.clear();

  std::size_t valid = 0;
  nx::Var total;
  std::vector<int> row_targets(steps);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t i = 0; i < steps; ++i) row_targets[i] = grid.at(q, i);
    valid += row_valid[q];
    nx::Var ce = nx::cross_entropy_rows(tape, logits[q], row_targets, grid.pad());
    double ce_sum = 0.0;
    for (auto v : tape.value(ce).values()) ce_sum += v;
    out.mean_ce[q] = row_valid[q] ? ce_sum / static_cast<double>(row_valid[q]) : 0.0;

    nx::Tensor<T> w(nx::Shape{steps});
    for (std::size_t i = 0; i < steps; ++i) {
      w[i] = out.weights.masked(q, i) ? T{0} : static_cast<T>(out.weights.at(q, i));
    }
    nx::Var wq = nx::stop_gradient(tape, tape.constant(std::move(w)));
    nx::Var term = nx::sum(tape, nx::mul(tape, ce, wq));
    total = q == 0 ? term : nx::add(tape, total, term);
  }
  out.valid_count = valid;
  out.loss = nx::scale(tape, total, valid ? static_cast<T>(1.0 / static_cast<double>(valid)) : T{0});
  return out;
}

template <class T>
double weighted_ce_loss_value(const nx::Tensor<T>& logits, const patterns::ShiftedGrid& targets, const LossConfig& cfg,
                              std::size_t step) {
  if (logits.rank() != 3 || logits.dim(0) != targets.codes.Q) {
    throw ValidationError("weighted_ce_loss: shape mismatch, logits " + nx::shape_str(logits.shape()));
  }
  const std::size_t steps = logits.dim(1), K = logits.dim(2);
  nx::Tape<T> tape;
  std::vector<nx::Var> vars;
  for (std::size_t q = 0; q < logits.dim(0); ++q) {
    const T* base = logits.data() + q * steps * K;
    vars.push_back(tape.constant(nx::Tensor<T>(nx::Shape{steps, K}, std::vector<T>(base, base + steps * K))));
  }
  auto res = weighted_ce_loss(tape, vars, targets, cfg, step);
  return static_cast<double>(tape.value(res.loss).item());
}

template FrameWeightMatrix compute_weights<float>(const std::vector<const nx::Tensor<float>*>&,
                                                  const patterns::ShiftedGrid&, const LossConfig&, std::size_t);
template FrameWeightMatrix compute_weights<double>(const std::vector<const nx::Tensor<double>*>&,
                                                   const patterns::ShiftedGrid&, const LossConfig&, std::size_t);
template LossResult<float> weighted_ce_loss<float>(nx::Tape<float>&, const std::vector<nx::Var>&,
                                                   const patterns::ShiftedGrid&, const LossConfig&, std::size_t);
template LossResult<double> weighted_ce_loss<double>(nx::Tape<double>&, const std::vector<nx::Var>&,
                                                     const patterns::ShiftedGrid&, const LossConfig&, std::size_t);
template double weighted_ce_loss_value<float>(const nx::Tensor<float>&, const patterns::ShiftedGrid&,
                                              const LossConfig&, std::size_t);
template double weighted_ce_loss_value<double>(const nx::Tensor<double>&, const patterns::ShiftedGrid&,
                                               const LossConfig&, std::size_t);

}  // namespace livespeech::loss
