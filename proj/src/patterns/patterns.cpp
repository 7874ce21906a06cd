#include "livespeech/patterns/patterns.hpp"

#include "livespeech/errors.hpp"

namespace livespeech::patterns {

std::size_t decoding_steps(PatternKind kind, std::size_t Q, std::size_t T) {
  switch (kind) {
    case PatternKind::delayed:
      return T + Q - 1;
    case PatternKind::flatten:
      return Q * T;
    case PatternKind::vall_e:
      break;
  }
  throw ValidationError("decoding_steps: the VALL-E pattern is not implemented");
}

bool ShiftedGrid::is_code_slot(std::size_t q, std::size_t column, std::size_t original_T) {
  return column >= q && column - q < original_T;
}

void ShiftedGrid::validate_layout() const {
  const std::size_t Q = codes.Q;
  if (Q == 0 || original_T == 0 || codes.T != original_T + Q - 1 || codes.codes.size() != Q * codes.T) {
    throw ValidationError("shifted grid: T'=" + std::to_string(codes.T) + " inconsistent with T=" +
                          std::to_string(original_T) + ", Q=" + std::to_string(Q));
  }
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t i = 0; i < codes.T; ++i) {
      const int c = codes.at(q, i);
      const bool want_code = is_code_slot(q, i, original_T);
      const bool is_pad = c == codes.pad();
      const bool in_range = c >= 0 && static_cast<std::size_t>(c) < codes.K;
      if ((want_code && !in_range) || (!want_code && !is_pad)) {
        throw ValidationError("shifted grid: malformed PAD layout at (row " + std::to_string(q) + ", column " +
                              std::to_string(i) + ")");
      }
    }
  }
}

ShiftedGrid shift_delayed(const CodeGrid& grid) {
  grid.validate(false);
  if (grid.Q == 0 || grid.T == 0) throw ValidationError("shift_delayed: empty grid");
  ShiftedGrid out;
  out.original_T = grid.T;
  out.codes = CodeGrid(grid.Q, grid.T + grid.Q - 1, grid.K, grid.pad());
  for (std::size_t q = 0; q < grid.Q; ++q) {
    for (std::size_t t = 0; t < grid.T; ++t) out.codes.at(q, t + q) = grid.at(q, t);
  }
  return out;
}

CodeGrid unshift_delayed(const ShiftedGrid& shifted) {
  shifted.validate_layout();
  const auto& s = shifted.codes;
  CodeGrid out(s.Q, shifted.original_T, s.K);
  for (std::size_t q = 0; q < s.Q; ++q) {
    for (std::size_t t = 0; t < shifted.original_T; ++t) out.at(q, t) = s.at(q, t + q);
  }
  return out;
}

std::vector<int> flatten(const CodeGrid& grid) {
  grid.validate(false);
  std::vector<int> seq;
  seq.reserve(grid.Q * grid.T);
  for (std::size_t t = 0; t < grid.T; ++t) {
    for (std::size_t q = 0; q < grid.Q; ++q) seq.push_back(grid.at(q, t));
  }
  return seq;
}

CodeGrid unflatten(const std::vector<int>& seq, std::size_t Q, std::size_t T, std::size_t K) {
  if (Q == 0 || seq.size() % Q != 0 || seq.size() / Q != T) {
    throw ValidationError("unflatten: sequence of length " + std::to_string(seq.size()) +
                          " is not Q*T with Q=" + std::to_string(Q) + ", T=" + std::to_string(T));
  }
  CodeGrid out(Q, T, K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t q = 0; q < Q; ++q) out.at(q, t) = seq[t * Q + q];
  }
  out.validate(false);
  return out;
}

std::optional<std::size_t> frame_completion_index(std::size_t step, std::size_t Q) {
  if (step == 0 || Q == 0) throw ValidationError("frame_completion_index: step and Q must be >= 1");
  if (step + 1 <= Q) return std::nullopt;
  return step - Q + 1;
}

}  // namespace livespeech::patterns
