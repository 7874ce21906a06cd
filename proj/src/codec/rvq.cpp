#include "livespeech/codec/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "livespeech/errors.hpp"
#include "livespeech/io/binary.hpp"
#include "livespeech/util/random.hpp"

namespace livespeech::codec {

namespace {

double squared_distance(const double* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return s;
}

// Nearest codeword, ties to the lowest index.
std::size_t nearest(const double* r, const TensorF& stage, double* best_dist = nullptr) {
  const std::size_t k = stage.rows(), d = stage.cols();
  std::size_t best = 0;
  double bd = squared_distance(r, stage.data(), d);
  for (std::size_t j = 1; j < k; ++j) {
    const double dist = squared_distance(r, stage.data() + j * d, d);
    if (dist < bd) {
      bd = dist;
      best = j;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

// k-means over n points (row-major, n x d, double). Entry 0 stays pinned at
// the origin when zero_reserved.
TensorF kmeans(const std::vector<double>& pts, std::size_t n, std::size_t d, std::size_t k, util::Rng& rng,
               const KMeansOptions& opt) {
  TensorF centroids = TensorF::matrix(k, d);
  const std::size_t first_free = opt.zero_reserved ? 1 : 0;

  // Initialization: distinct residual values in random order, falling back
  // to repeated values when the data has fewer than k distinct points.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  util::shuffle(order, rng);
  std::vector<std::size_t> chosen;
  auto same_point = [&](std::size_t a, std::size_t b) {
    return std::equal(pts.begin() + a * d, pts.begin() + (a + 1) * d, pts.begin() + b * d);
  };
  for (std::size_t idx : order) {
    if (chosen.size() == k - first_free) break;
    bool dup = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return same_point(c, idx); });
    if (!dup) chosen.push_back(idx);
  }
  for (std::size_t i = 0; chosen.size() < k - first_free; ++i) chosen.push_back(order[i % n]);
  for (std::size_t j = first_free; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) centroids.at(j, c) = static_cast<float>(pts[chosen[j - first_free] * d + c]);
  }

  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  std::vector<double> acc(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(pts.data() + i * d, centroids, &dist[i]);
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t c = 0; c < d; ++c) acc[assign[i] * d + c] += pts[i * d + c];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t j = first_free; j < k; ++j) {
      if (counts[j] > 0) {
        for (std::size_t c = 0; c < d; ++c) {
          centroids.at(j, c) = static_cast<float>(acc[j * d + c] / static_cast<double>(counts[j]));
        }
        continue;
      }
      // Empty cluster: reseed at the point farthest from its centroid.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > fd) {
          fd = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      dist[far] = 0.0;
      for (std::size_t c = 0; c < d; ++c) centroids.at(j, c) = static_cast<float>(pts[far * d + c]);
    }
  }
  return centroids;
}

}  // namespace

void FeatureSequence::validate() const {
  if (frames.rank() != 2 || frames.rows() == 0 || frames.cols() == 0) {
    throw ValidationError("feature sequence: expected T x D with T >= 1, got " + numerics::shape_str(frames.shape()));
  }
  if (!frames.all_finite()) throw ValidationError("feature sequence: non-finite entries");
  if (!(frame_rate_hz > 0.0f)) throw ValidationError("feature sequence: frame rate must be positive");
}

void Codebooks::validate() const {
  if (stages.empty()) throw ValidationError("codebooks: Q must be >= 1");
  const std::size_t k = codebook_size(), d = dim();
  if (k < 2 || d == 0) throw ValidationError("codebooks: need K >= 2 and D >= 1");
  for (std::size_t q = 0; q < stages.size(); ++q) {
    if (stages[q].rank() != 2 || stages[q].rows() != k || stages[q].cols() != d) {
      throw ValidationError("codebooks: stage " + std::to_string(q) + " has shape " +
                            numerics::shape_str(stages[q].shape()));
    }
    if (zero_reserved) {
      for (std::size_t c = 0; c < d; ++c) {
        if (stages[q].at(0, c) != 0.0f) {
          throw ValidationError("codebooks: zero_reserved but stage " + std::to_string(q) + " entry 0 is nonzero");
        }
      }
    }
  }
}

Codebooks train_codebooks(std::span<const FeatureSequence> corpus, std::size_t num_stages, std::size_t codebook_size,
                          std::uint64_t seed, const KMeansOptions& options) {
  if (corpus.empty()) throw ValidationError("train_codebooks: empty corpus");
  if (num_stages == 0) throw ValidationError("train_codebooks: Q must be >= 1");
  if (codebook_size < 2) throw ValidationError("train_codebooks: K must be >= 2");
  const std::size_t d = corpus[0].dim();
  std::size_t n = 0;
  for (const auto& seq : corpus) {
    seq.validate();
    if (seq.dim() != d) throw ValidationError("train_codebooks: mixed feature dimensions in corpus");
    n += seq.length();
  }
  if (codebook_size > n) {
    throw ValidationError("train_codebooks: K=" + std::to_string(codebook_size) + " exceeds frame count " +
                          std::to_string(n));
  }
  std::vector<double> residual;
  residual.reserve(n * d);
  for (const auto& seq : corpus) {
    for (auto v : seq.frames.values()) residual.push_back(v);
  }

  Codebooks cb;
  cb.zero_reserved = options.zero_reserved;
  for (std::size_t q = 0; q < num_stages; ++q) {
    util::Rng rng(util::mix_seed(seed, q));
    TensorF stage = kmeans(residual, n, d, codebook_size, rng, options);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(residual.data() + i * d, stage);
      for (std::size_t j = 0; j < d; ++j) residual[i * d + j] -= stage.at(c, j);
    }
    cb.stages.push_back(std::move(stage));
  }
  return cb;
}

CodeGrid rvq_encode(const FeatureSequence& z, const Codebooks& cb) {
  z.validate();
  cb.validate();
  const std::size_t d = cb.dim();
  if (z.dim() != d) {
    throw ValidationError("rvq_encode: feature dimension " + std::to_string(z.dim()) + " vs codebook dimension " +
                          std::to_string(d));
  }
  CodeGrid grid(cb.num_stages(), z.length(), cb.codebook_size());
  std::vector<double> r(d);
  for (std::size_t t = 0; t < z.length(); ++t) {
    for (std::size_t j = 0; j < d; ++j) r[j] = z.frames.at(t, j);
    for (std::size_t q = 0; q < cb.num_stages(); ++q) {
      const std::size_t c = nearest(r.data(), cb.stages[q]);
      grid.at(q, t) = static_cast<int>(c);
      for (std::size_t j = 0; j < d; ++j) r[j] -= cb.stages[q].at(c, j);
    }
  }
  return grid;
}

namespace {

void check_decode_args(const CodeGrid& grid, const Codebooks& cb, std::size_t q_used) {
  cb.validate();
  if (grid.has_pad()) throw ValidationError("rvq_decode: grid contains PAD; unshift it first");
  if (grid.Q != cb.num_stages() || grid.K != cb.codebook_size()) {
    throw ValidationError("rvq_decode: grid Q/K does not match codebooks");
  }
  if (q_used < 1 || q_used > cb.num_stages()) {
    throw ValidationError("rvq_decode: q_used=" + std::to_string(q_used) + " outside [1, " +
                          std::to_string(cb.num_stages()) + "]");
  }
  grid.validate();
}

}  // namespace

FeatureSequence rvq_decode(const CodeGrid& grid, const Codebooks& cb, std::size_t q_used) {
  check_decode_args(grid, cb, q_used);
  const std::size_t d = cb.dim();
  TensorF out = TensorF::matrix(grid.T, d);
  std::vector<double> acc(d);
  for (std::size_t t = 0; t < grid.T; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t q = 0; q < q_used; ++q) {
      const auto code = static_cast<std::size_t>(grid.at(q, t));
      for (std::size_t j = 0; j < d; ++j) acc[j] += cb.stages[q].at(code, j);
    }
    for (std::size_t j = 0; j < d; ++j) out.at(t, j) = static_cast<float>(acc[j]);
  }
  return FeatureSequence(std::move(out));
}

std::vector<double> frame_errors(const FeatureSequence& z, const Codebooks& cb, std::size_t q_used) {
  const CodeGrid grid = rvq_encode(z, cb);
  check_decode_args(grid, cb, q_used);
  const std::size_t d = cb.dim();
  std::vector<double> errs(z.length());
  std::vector<double> r(d);
  for (std::size_t t = 0; t < z.length(); ++t) {
    for (std::size_t j = 0; j < d; ++j) r[j] = z.frames.at(t, j);
    for (std::size_t q = 0; q < q_used; ++q) {
      const auto code = static_cast<std::size_t>(grid.at(q, t));
      for (std::size_t j = 0; j < d; ++j) r[j] -= cb.stages[q].at(code, j);
    }
    double e = 0.0;
    for (double v : r) e += v * v;
    errs[t] = e;
  }
  return errs;
}

float quantization_error(const FeatureSequence& z, const Codebooks& cb, std::size_t q_used) {
  const auto errs = frame_errors(z, cb, q_used);
  double total = 0.0;
  for (double e : errs) total += e;
  return static_cast<float>(total / static_cast<double>(z.length() * z.dim()));
}

void write_codebooks(std::ostream& os, const Codebooks& cb) {
  cb.validate();
  io::write_magic(os, "RVQ1");
  io::write_u32(os, static_cast<std::uint32_t>(cb.num_stages()));
  io::write_u32(os, static_cast<std::uint32_t>(cb.codebook_size()));
  io::write_u32(os, static_cast<std::uint32_t>(cb.dim()));
  io::write_u32(os, cb.zero_reserved ? 1u : 0u);
  for (const auto& s : cb.stages) {
    for (float v : s.values()) io::write_pod(os, v);
  }
}

Codebooks read_codebooks(std::istream& is) {
  io::expect_magic(is, "RVQ1", "codebook file");
  const std::size_t q = io::read_u32(is, "Q");
  const std::size_t k = io::read_u32(is, "K");
  const std::size_t d = io::read_u32(is, "D");
  const std::uint32_t flag = io::read_u32(is, "zero_reserved");
  if (flag > 1) throw ValidationError("codebook file: zero_reserved flag must be 0 or 1");
  Codebooks cb;
  cb.zero_reserved = flag == 1;
  for (std::size_t s = 0; s < q; ++s) {
    TensorF stage = TensorF::matrix(k, d);
    for (auto& v : stage.values()) v = io::read_pod<float>(is, "codewords");
    cb.stages.push_back(std::move(stage));
  }
  cb.validate();
  return cb;
}

void save_codebooks(const std::filesystem::path& path, const Codebooks& cb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  write_codebooks(os, cb);
}

Codebooks load_codebooks(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  return read_codebooks(is);
}

}  // namespace livespeech::codec
