#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "livespeech/codec/code_grid.hpp"

namespace livespeech::patterns {

using codec::CodeGrid;

/// Decoding orders for a Q x T grid. Only delayed and flatten are
/// implemented; vall_e (autoregressive first codebook, non-autoregressive
/// rest) is listed for completeness and rejected by the helpers below.
enum class PatternKind { delayed, flatten, vall_e };

struct PatternLayout {
  PatternKind kind = PatternKind::delayed;
  std::size_t Q = 1;
  int pad_code = 0;  // always the codec K

  static PatternLayout for_grid(PatternKind kind, const CodeGrid& g) { return {kind, g.Q, g.pad()}; }
};

/// Number of decoder steps needed to emit a Q x T grid.
std::size_t decoding_steps(PatternKind kind, std::size_t Q, std::size_t T);

/// Delayed layout: row q (0-based) is shifted right by q columns, giving a
/// Q x (T + Q - 1) grid with PAD in the uncovered triangles.
struct ShiftedGrid {
  CodeGrid codes;  // codes.T == T' == original_T + Q - 1
  std::size_t original_T = 0;

  std::size_t steps() const { return codes.T; }
  /// Throws naming the first (row, column) that breaks the PAD layout.
  void validate_layout() const;
  /// True when the layout places a real code (not PAD) at (q, column).
  static bool is_code_slot(std::size_t q, std::size_t column, std::size_t original_T);

  friend bool operator==(const ShiftedGrid&, const ShiftedGrid&) = default;
};

ShiftedGrid shift_delayed(const CodeGrid& grid);
CodeGrid unshift_delayed(const ShiftedGrid& shifted);

/// Frame-major, codebook-minor: c_1^(1), ..., c_1^(Q), c_2^(1), ...
std::vector<int> flatten(const CodeGrid& grid);
CodeGrid unflatten(const std::vector<int>& seq, std::size_t Q, std::size_t T, std::size_t K);

/// Highest frame (1-based) whose Q codes are all available after the delayed
/// decoder has produced shifted column `step` (1-based); none before step Q.
std::optional<std::size_t> frame_completion_index(std::size_t step, std::size_t Q);

}  // namespace livespeech::patterns
