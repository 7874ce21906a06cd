#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace livespeech::codec {

/// Q x T matrix of codebook indices, stored codebook-major (row q holds the
/// codes of all frames for stage q). The PAD sentinel equals K.
struct CodeGrid {
  std::size_t Q = 0;
  std::size_t T = 0;
  std::size_t K = 0;
  std::vector<int> codes;

  CodeGrid() = default;
  CodeGrid(std::size_t q, std::size_t t, std::size_t k, int fill = 0) : Q(q), T(t), K(k), codes(q * t, fill) {}

  int pad() const { return static_cast<int>(K); }
  int& at(std::size_t q, std::size_t t) { return codes[q * T + t]; }
  int at(std::size_t q, std::size_t t) const { return codes[q * T + t]; }
  std::vector<int> column(std::size_t t) const;

  bool has_pad() const;
  /// Throws unless every entry is in [0, K) (or PAD when allow_pad).
  void validate(bool allow_pad = false) const;

  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

// GRID file: magic "GRID", u32 Q, u32 T, u32 K, u32 flags (bit 0 = shifted
// layout, PAD allowed), then Q*T u16 codes in row-major order.
inline constexpr unsigned kGridFlagShifted = 1u;

void write_grid(std::ostream& os, const CodeGrid& grid, unsigned flags = 0);
CodeGrid read_grid(std::istream& is, unsigned* flags = nullptr);
void save_grid(const std::filesystem::path& path, const CodeGrid& grid, unsigned flags = 0);
CodeGrid load_grid(const std::filesystem::path& path, unsigned* flags = nullptr);

}  // namespace livespeech::codec
