#include "livespeech/harness/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/io/binary.hpp"
#include "livespeech/util/random.hpp"

namespace livespeech::harness {

using numerics::Shape;
using numerics::TensorD;

void DatasetSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("dataset spec: " + msg);
  };
  need(symbol_vocab >= 2, "symbol_vocab must be >= 2");
  need(theta_dim >= 1, "theta_dim must be >= 1");
  need(feature_dim >= 1, "feature_dim must be >= 1");
  need(min_frames >= 1 && min_frames <= max_frames, "need 1 <= min_frames <= max_frames");
  need(min_text >= 1 && min_text <= max_text, "need 1 <= min_text <= max_text");
  need(max_text <= symbol_vocab, "max_text cannot exceed symbol_vocab (symbols are drawn without replacement)");
  need(frame_rate > 0.0f, "frame_rate must be positive");
  need(n_speakers >= 1, "n_speakers must be >= 1");
  need(test_speakers < n_speakers, "test_speakers must leave at least one training speaker");
  need(n_utterances >= 2 * n_speakers, "need at least two utterances per speaker");
  need(noise_std >= 0.0 && mod_scale >= 0.0 && shift_scale >= 0.0, "scales must be non-negative");
}

Generator::Generator(const DatasetSpec& spec) : spec_(spec) {
  spec_.validate();
  const std::size_t S = spec.symbol_vocab, D = spec.feature_dim, P = spec.theta_dim;
  util::Rng rng(util::mix_seed(spec.seed, 0x9e4));
  prototypes_ = TensorD(Shape{S, D});
  for (auto& v : prototypes_.values()) v = util::normal(rng);
  mod_ = TensorD(Shape{D, P});
  for (auto& v : mod_.values()) v = util::normal(rng) / std::sqrt(static_cast<double>(P));
  // Offset directions: overall level, spectral tilt, then random timbre.
  shift_ = TensorD(Shape{D, P});
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t p = 0; p < P; ++p) {
      double v = util::normal(rng);
      if (p == 0) v = 1.0;
      if (p == 1) v = D > 1 ? std::sqrt(3.0) * (2.0 * static_cast<double>(d) / static_cast<double>(D - 1) - 1.0) : 0.0;
      shift_.at(d, p) = v;
    }
  }
  durations_.resize(S);
  for (auto& d : durations_) d = spec.min_frames + util::uniform_index(rng, spec.max_frames - spec.min_frames + 1);
}

std::vector<double> Generator::clean_frame(std::size_t s, std::span<const double> theta) const {
  const std::size_t D = spec_.feature_dim, P = spec_.theta_dim;
  std::vector<double> out(D);
  for (std::size_t d = 0; d < D; ++d) {
    double m = 0.0, b = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      m += mod_.at(d, p) * theta[p];
      b += shift_.at(d, p) * theta[p];
    }
    out[d] = prototypes_.at(s, d) * (1.0 + spec_.mod_scale * m) + spec_.shift_scale * b;
  }
  return out;
}

std::vector<double> Generator::theta_jacobian(std::size_t s) const {
  const std::size_t D = spec_.feature_dim, P = spec_.theta_dim;
  std::vector<double> j(D * P);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t p = 0; p < P; ++p) {
      j[d * P + p] = prototypes_.at(s, d) * spec_.mod_scale * mod_.at(d, p) + spec_.shift_scale * shift_.at(d, p);
    }
  }
  return j;
}

FeatureSequence Generator::render(std::span<const int> text, std::span<const double> theta, std::uint64_t seed,
                                  double noise_std, std::vector<int>* frame_symbols) const {
  if (text.empty()) throw ValidationError("render: empty text");
  if (theta.size() != spec_.theta_dim) throw ValidationError("render: theta has the wrong dimension");
  util::Rng rng(seed);
  std::vector<std::size_t> lengths;
  for (int s : text) {
    if (s < 0 || static_cast<std::size_t>(s) >= spec_.symbol_vocab) throw ValidationError("render: symbol out of range");
    const std::size_t jitter = util::uniform_index(rng, 3);  // -1, 0, +1
    const auto base = static_cast<long>(durations_[static_cast<std::size_t>(s)]);
    const long len = std::clamp(base + static_cast<long>(jitter) - 1, static_cast<long>(spec_.min_frames),
                                static_cast<long>(spec_.max_frames));
    lengths.push_back(static_cast<std::size_t>(len));
  }
  std::size_t T = 0;
  for (auto l : lengths) T += l;
  const std::size_t D = spec_.feature_dim;
  numerics::TensorF frames = numerics::TensorF::matrix(T, D);
  if (frame_symbols) frame_symbols->clear();
  std::size_t t = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto clean = clean_frame(static_cast<std::size_t>(text[i]), theta);
    for (std::size_t k = 0; k < lengths[i]; ++k, ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        frames.at(t, d) = static_cast<float>(clean[d] + noise_std * util::normal(rng));
      }
      if (frame_symbols) frame_symbols->push_back(text[i]);
    }
  }
  return FeatureSequence(std::move(frames), spec_.frame_rate);
}

std::vector<std::size_t> Dataset::train_ids() const {
  std::vector<std::size_t> out;
  for (const auto& u : utterances) {
    if (!u.test) out.push_back(u.id);
  }
  return out;
}

std::vector<std::size_t> Dataset::test_ids() const {
  std::vector<std::size_t> out;
  for (const auto& u : utterances) {
    if (u.test) out.push_back(u.id);
  }
  return out;
}

void Dataset::check_split() const {
  const std::size_t first_test = spec.n_speakers - spec.test_speakers;
  for (const auto& u : utterances) {
    if (u.test != (u.speaker >= first_test)) {
      throw ValidationError("dataset: utterance " + std::to_string(u.id) + " of speaker " + std::to_string(u.speaker) +
                            " is on the wrong side of the zero-shot split");
    }
    if (u.enrollment_of >= utterances.size() || u.enrollment_of == u.id ||
        utterances[u.enrollment_of].speaker != u.speaker) {
      throw ValidationError("dataset: utterance " + std::to_string(u.id) + " has an invalid enrollment reference");
    }
  }
}

Dataset synth_dataset(const DatasetSpec& spec) {
  Generator gen(spec);
  Dataset ds;
  ds.spec = spec;
  const std::size_t first_test = spec.n_speakers - spec.test_speakers;

  std::vector<std::vector<double>> thetas(spec.n_speakers, std::vector<double>(spec.theta_dim));
  util::Rng srng(util::mix_seed(spec.seed, 0x5be));
  for (auto& th : thetas) {
    for (auto& v : th) v = util::normal(srng);
  }

  ds.utterances.resize(spec.n_utterances);
  std::vector<std::vector<std::size_t>> by_speaker(spec.n_speakers);
  for (std::size_t i = 0; i < spec.n_utterances; ++i) {
    // Each utterance has its own stream, so generation order does not matter.
    util::Rng rng(util::mix_seed(spec.seed, 1000 + i));
    auto& u = ds.utterances[i];
    u.id = i;
    u.speaker = i % spec.n_speakers;
    u.test = u.speaker >= first_test;
    u.theta = thetas[u.speaker];
    std::vector<int> symbols(spec.symbol_vocab);
    for (std::size_t s = 0; s < symbols.size(); ++s) symbols[s] = static_cast<int>(s);
    util::shuffle(symbols, rng);
    const std::size_t len = spec.min_text + util::uniform_index(rng, spec.max_text - spec.min_text + 1);
    u.text.assign(symbols.begin(), symbols.begin() + static_cast<std::ptrdiff_t>(len));
    const std::uint64_t render_seed = rng();
    u.features = gen.render(u.text, u.theta, render_seed, spec.noise_std);
    const auto clean = gen.render(u.text, u.theta, render_seed, 0.0);
    if (oracle_symbol_error_rate(clean, u.text, gen) != 0.0) {
      throw RuntimeFailure("synth_dataset: oracle cannot decode clean utterance " + std::to_string(i) +
                           "; prototypes too close for this spec");
    }
    by_speaker[u.speaker].push_back(i);
  }
  for (const auto& ids : by_speaker) {
    for (std::size_t k = 0; k < ids.size(); ++k) ds.utterances[ids[k]].enrollment_of = ids[(k + 1) % ids.size()];
  }
  ds.check_split();
  return ds;
}

namespace {

nlohmann::json spec_json(const DatasetSpec& s) {
  return {{"symbol_vocab", s.symbol_vocab}, {"theta_dim", s.theta_dim},       {"min_frames", s.min_frames},
          {"max_frames", s.max_frames},     {"feature_dim", s.feature_dim},   {"frame_rate", s.frame_rate},
          {"n_speakers", s.n_speakers},     {"n_utterances", s.n_utterances}, {"test_speakers", s.test_speakers},
          {"min_text", s.min_text},         {"max_text", s.max_text},         {"noise_std", s.noise_std},
          {"mod_scale", s.mod_scale},       {"shift_scale", s.shift_scale},   {"seed", s.seed}};
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.symbol_vocab = j.at("symbol_vocab");
  s.theta_dim = j.at("theta_dim");
  s.min_frames = j.at("min_frames");
  s.max_frames = j.at("max_frames");
  s.feature_dim = j.at("feature_dim");
  s.frame_rate = j.at("frame_rate");
  s.n_speakers = j.at("n_speakers");
  s.n_utterances = j.at("n_utterances");
  s.test_speakers = j.at("test_speakers");
  s.min_text = j.at("min_text");
  s.max_text = j.at("max_text");
  s.noise_std = j.at("noise_std");
  s.mod_scale = j.at("mod_scale");
  s.shift_scale = j.at("shift_scale");
  s.seed = j.at("seed");
  s.validate();
  return s;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["spec"] = spec_json(ds.spec);
  meta["utterances"] = nlohmann::json::array();
  for (const auto& u : ds.utterances) {
    meta["utterances"].push_back({{"id", u.id},
                                  {"text", u.text},
                                  {"speaker", u.speaker},
                                  {"theta", u.theta},
                                  {"enrollment_of", u.enrollment_of},
                                  {"split", u.test ? "test" : "train"},
                                  {"frames", u.features.length()}});
  }
  std::ofstream js(dir / "dataset.json");
  if (!js) throw RuntimeFailure("cannot write " + (dir / "dataset.json").string());
  js << meta.dump(1) << '\n';

  std::ofstream fb(dir / "features.bin", std::ios::binary);
  if (!fb) throw RuntimeFailure("cannot write " + (dir / "features.bin").string());
  io::write_magic(fb, "FEAT");
  io::write_u32(fb, static_cast<std::uint32_t>(ds.utterances.size()));
  for (const auto& u : ds.utterances) {
    io::write_u32(fb, static_cast<std::uint32_t>(u.features.length()));
    io::write_u32(fb, static_cast<std::uint32_t>(u.features.dim()));
    fb.write(reinterpret_cast<const char*>(u.features.frames.data()),
             static_cast<std::streamsize>(u.features.frames.numel() * sizeof(float)));
  }
  if (!fb) throw RuntimeFailure("failed writing features.bin");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream js(dir / "dataset.json");
  if (!js) throw ValidationError("cannot open " + (dir / "dataset.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset.json: ") + e.what());
  }
  Dataset ds;
  std::ifstream fb(dir / "features.bin", std::ios::binary);
  if (!fb) throw ValidationError("cannot open " + (dir / "features.bin").string());
  try {
    ds.spec = spec_from_json(meta.at("spec"));
    io::expect_magic(fb, "FEAT", "features.bin");
    const std::size_t n = io::read_u32(fb, "utterance count");
    if (n != meta.at("utterances").size()) throw ValidationError("features.bin: utterance count disagrees with dataset.json");
    for (const auto& m : meta.at("utterances")) {
      Utterance u;
      u.id = m.at("id");
      u.text = m.at("text").get<std::vector<int>>();
      u.speaker = m.at("speaker");
      u.theta = m.at("theta").get<std::vector<double>>();
      u.enrollment_of = m.at("enrollment_of");
      u.test = m.at("split") == "test";
      const std::size_t T = io::read_u32(fb, "frame count");
      const std::size_t D = io::read_u32(fb, "feature dim");
      if (T != m.at("frames").get<std::size_t>() || D != ds.spec.feature_dim) {
        throw ValidationError("features.bin: shape of utterance " + std::to_string(u.id) + " disagrees with metadata");
      }
      numerics::TensorF f = numerics::TensorF::matrix(T, D);
      fb.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(T * D * sizeof(float)));
      if (!fb) throw ValidationError("features.bin: truncated at utterance " + std::to_string(u.id));
      u.features = FeatureSequence(std::move(f), ds.spec.frame_rate);
      if (u.id != ds.utterances.size()) throw ValidationError("dataset.json: utterance ids must be 0..n-1 in order");
      ds.utterances.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset.json: ") + e.what());
  }
  ds.check_split();
  return ds;
}

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::vector<int> classify(const FeatureSequence& f, const Generator& gen, std::span<const double> theta) {
  const std::size_t S = gen.spec().symbol_vocab, D = f.dim();
  std::vector<std::vector<double>> centers;
  for (std::size_t s = 0; s < S; ++s) centers.push_back(gen.clean_frame(s, theta));
  std::vector<int> labels(f.length());
  for (std::size_t t = 0; t < f.length(); ++t) {
    double best = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double e = static_cast<double>(f.frames.at(t, d)) - centers[s][d];
        d2 += e * e;
      }
      if (s == 0 || d2 < best) {
        best = d2;
        labels[t] = static_cast<int>(s);
      }
    }
  }
  return labels;
}

std::vector<double> fit_theta(const FeatureSequence& f, const Generator& gen, std::span<const int> labels) {
  const std::size_t P = gen.spec().theta_dim, D = f.dim();
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(P, P);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(P);
  const std::vector<double> zero(P, 0.0);
  for (std::size_t t = 0; t < f.length(); ++t) {
    const auto s = static_cast<std::size_t>(labels[t]);
    const auto j = gen.theta_jacobian(s);
    const auto base = gen.clean_frame(s, zero);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(j.data(), D, P);
    Eigen::VectorXd r(D);
    for (std::size_t d = 0; d < D; ++d) r[d] = static_cast<double>(f.frames.at(t, d)) - base[d];
    ata += J.transpose() * J;
    atb += J.transpose() * r;
  }
  Eigen::VectorXd th = ata.ldlt().solve(atb);
  return std::vector<double>(th.data(), th.data() + P);
}

}  // namespace

FrameAnalysis analyze_features(const FeatureSequence& f, const Generator& gen) {
  if (f.dim() != gen.spec().feature_dim) {
    throw ValidationError("analyze_features: feature dimension " + std::to_string(f.dim()) + " vs spec " +
                          std::to_string(gen.spec().feature_dim));
  }
  FrameAnalysis out;
  out.theta.assign(gen.spec().theta_dim, 0.0);
  out.labels = classify(f, gen, out.theta);
  if (f.length() < gen.spec().theta_dim) return out;
  for (int round = 0; round < 3; ++round) {
    out.theta = fit_theta(f, gen, out.labels);
    out.labels = classify(f, gen, out.theta);
  }
  out.theta_fitted = true;
  return out;
}

double oracle_symbol_error_rate(const FeatureSequence& f, std::span<const int> text, const Generator& gen) {
  if (text.empty()) throw ValidationError("symbol error rate: empty reference text");
  const auto a = analyze_features(f, gen);
  std::vector<int> hyp;
  for (int l : a.labels) {
    if (hyp.empty() || hyp.back() != l) hyp.push_back(l);
  }
  const double err = static_cast<double>(edit_distance(hyp, text)) / static_cast<double>(text.size());
  return std::min(1.0, err);
}

double speaker_similarity_proxy(const FeatureSequence& a, const FeatureSequence& b, const Generator& gen) {
  const std::size_t P = gen.spec().theta_dim;
  if (a.length() < P || b.length() < P) {
    throw ValidationError("speaker similarity: sequences need at least " + std::to_string(P) + " frames");
  }
  const auto ta = analyze_features(a, gen).theta;
  const auto tb = analyze_features(b, gen).theta;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    dot += ta[p] * tb[p];
    na += ta[p] * ta[p];
    nb += tb[p] * tb[p];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

}  // namespace livespeech::harness
