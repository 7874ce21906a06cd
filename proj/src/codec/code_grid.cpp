#include "livespeech/codec/code_grid.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "livespeech/errors.hpp"
#include "livespeech/io/binary.hpp"

namespace livespeech::codec {

std::vector<int> CodeGrid::column(std::size_t t) const {
  std::vector<int> out(Q);
  for (std::size_t q = 0; q < Q; ++q) out[q] = at(q, t);
  return out;
}

bool CodeGrid::has_pad() const {
  return std::any_of(codes.begin(), codes.end(), [this](int c) { return c == pad(); });
}

void CodeGrid::validate(bool allow_pad) const {
  if (codes.size() != Q * T) {
    throw ValidationError("code grid: " + std::to_string(codes.size()) + " codes for " + std::to_string(Q) + "x" +
                          std::to_string(T));
  }
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t t = 0; t < T; ++t) {
      const int c = at(q, t);
      const bool ok = (c >= 0 && static_cast<std::size_t>(c) < K) || (allow_pad && c == pad());
      if (!ok) {
        throw ValidationError("code grid: code " + std::to_string(c) + " at (" + std::to_string(q) + ", " +
                              std::to_string(t) + ") outside [0, " + std::to_string(K) + ")");
      }
    }
  }
}

void write_grid(std::ostream& os, const CodeGrid& grid, unsigned flags) {
  if (grid.K >= std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("grid file: K=" + std::to_string(grid.K) + " does not fit u16 codes");
  }
  grid.validate((flags & kGridFlagShifted) != 0);
  io::write_magic(os, "GRID");
  io::write_u32(os, static_cast<std::uint32_t>(grid.Q));
  io::write_u32(os, static_cast<std::uint32_t>(grid.T));
  io::write_u32(os, static_cast<std::uint32_t>(grid.K));
  io::write_u32(os, flags);
  for (int c : grid.codes) io::write_pod(os, static_cast<std::uint16_t>(c));
}

CodeGrid read_grid(std::istream& is, unsigned* flags_out) {
  io::expect_magic(is, "GRID", "grid file");
  CodeGrid g;
  g.Q = io::read_u32(is, "Q");
  g.T = io::read_u32(is, "T");
  g.K = io::read_u32(is, "K");
  const unsigned flags = io::read_u32(is, "flags");
  if (flags & ~kGridFlagShifted) throw ValidationError("grid file: unknown flag bits " + std::to_string(flags));
  if (g.Q == 0 || g.K < 2) throw ValidationError("grid file: invalid header Q/K");
  g.codes.resize(g.Q * g.T);
  for (auto& c : g.codes) c = io::read_pod<std::uint16_t>(is, "codes");
  g.validate((flags & kGridFlagShifted) != 0);
  if (flags_out) *flags_out = flags;
  return g;
}

void save_grid(const std::filesystem::path& path, const CodeGrid& grid, unsigned flags) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  write_grid(os, grid, flags);
}

CodeGrid load_grid(const std::filesystem::path& path, unsigned* flags) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  return read_grid(is, flags);
}

}  // namespace livespeech::codec
