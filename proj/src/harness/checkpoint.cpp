#include "livespeech/harness/checkpoint.hpp"

#include <boost/crc.hpp>
#include <fstream>
#include <sstream>

#include "livespeech/errors.hpp"
#include "livespeech/io/binary.hpp"

namespace livespeech::harness {

namespace {

constexpr std::uint8_t kDtypeF32 = 1;
const std::string kAdamM = "adam.m/";
const std::string kAdamV = "adam.v/";

std::uint32_t crc32(const void* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

void write_tensor(std::ostream& os, const std::string& name, const numerics::TensorF& t) {
  io::write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_pod<std::uint8_t>(os, kDtypeF32);
  io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) io::write_u32(os, static_cast<std::uint32_t>(e));
  const std::size_t bytes = t.numel() * sizeof(float);
  io::write_pod<std::uint64_t>(os, bytes);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(bytes));
  io::write_u32(os, crc32(t.data(), bytes));
}

std::string read_string(std::istream& is, std::size_t n, const std::string& field) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw ValidationError("checkpoint: truncated while reading " + field);
  return s;
}

}  // namespace

void check_model_compatible(const model::ModelConfig& expected, const model::ModelConfig& found) {
  auto cmp = [](const char* field, std::size_t want, std::size_t got) {
    if (want != got) {
      throw ValidationError(std::string("checkpoint: ") + field + " mismatch (config " + std::to_string(want) +
                            ", checkpoint " + std::to_string(got) + ")");
    }
  };
  if (expected.groups() != found.groups()) {
    throw ValidationError("checkpoint: group_of mismatch (config G=" + std::to_string(expected.G) +
                          ", checkpoint G=" + std::to_string(found.G) + ")");
  }
  cmp("L", expected.L, found.L);
  cmp("M", expected.M, found.M);
  cmp("Q", expected.Q, found.Q);
  cmp("K", expected.K, found.K);
  cmp("d_model", expected.d_model, found.d_model);
  cmp("n_heads", expected.n_heads, found.n_heads);
  cmp("d_ff", expected.d_ff, found.d_ff);
  cmp("text_vocab", expected.text_vocab, found.text_vocab);
  cmp("cond_len", expected.cond_len, found.cond_len);
  cmp("feat_dim", expected.feat_dim, found.feat_dim);
  cmp("max_positions", expected.max_positions, found.max_positions);
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  model::check_params(ckpt.config.model, ckpt.params);
  io::write_magic(os, "LSPC");
  io::write_u32(os, kCheckpointVersion);
  const std::string text = to_text(ckpt.config);
  io::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_u32(os, crc32(text.data(), text.size()));
  io::write_pod<std::uint64_t>(os, ckpt.adam.step);
  const auto count = ckpt.params.size() + ckpt.adam.m.size() + ckpt.adam.v.size();
  io::write_u32(os, static_cast<std::uint32_t>(count));
  std::map<std::string, const numerics::TensorF*> all;
  for (const auto& [n, t] : ckpt.params.tensors()) all[n] = &t;
  for (const auto& [n, t] : ckpt.adam.m.tensors()) all[kAdamM + n] = &t;
  for (const auto& [n, t] : ckpt.adam.v.tensors()) all[kAdamV + n] = &t;
  for (const auto& [n, t] : all) write_tensor(os, n, *t);
  io::write_magic(os, "END!");
  if (!os) throw RuntimeFailure("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  io::expect_magic(is, "LSPC", "checkpoint");
  const auto version = io::read_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto text_len = io::read_u32(is, "config length");
  if (text_len > (1u << 20)) throw ValidationError("checkpoint: config length " + std::to_string(text_len) + " too large");
  const std::string text = read_string(is, text_len, "config");
  if (io::read_u32(is, "config crc") != crc32(text.data(), text.size())) {
    throw ValidationError("checkpoint: config checksum mismatch");
  }
  Checkpoint ckpt;
  ckpt.config = parse_config(text);
  ckpt.adam.step = io::read_pod<std::uint64_t>(is, "step");
  const auto count = io::read_u32(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = io::read_u32(is, "tensor name length");
    if (name_len > 4096) throw ValidationError("checkpoint: tensor name length " + std::to_string(name_len));
    const std::string name = read_string(is, name_len, "tensor name");
    const auto dtype = io::read_pod<std::uint8_t>(is, name + " dtype");
    if (dtype != kDtypeF32) throw ValidationError("checkpoint: " + name + " dtype tag " + std::to_string(dtype));
    const auto rank = io::read_u32(is, name + " rank");
    if (rank > 8) throw ValidationError("checkpoint: " + name + " rank " + std::to_string(rank));
    numerics::Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(io::read_u32(is, name + " extent"));
      numel *= shape.back();
    }
    const auto bytes = io::read_pod<std::uint64_t>(is, name + " payload length");
    if (bytes != numel * sizeof(float)) {
      throw ValidationError("checkpoint: " + name + " payload length " + std::to_string(bytes) +
                            " disagrees with shape " + numerics::shape_str(shape));
    }
    numerics::TensorF t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw ValidationError("checkpoint: truncated in payload of " + name);
    if (io::read_u32(is, name + " crc") != crc32(t.data(), bytes)) {
      throw ValidationError("checkpoint: checksum mismatch in " + name);
    }
    if (name.rfind(kAdamM, 0) == 0) {
      ckpt.adam.m.add(name.substr(kAdamM.size()), std::move(t));
    } else if (name.rfind(kAdamV, 0) == 0) {
      ckpt.adam.v.add(name.substr(kAdamV.size()), std::move(t));
    } else {
      ckpt.params.add(name, std::move(t));
    }
  }
  io::expect_magic(is, "END!", "checkpoint trailer");
  model::check_params(ckpt.config.model, ckpt.params);
  if (ckpt.adam.m.size() || ckpt.adam.v.size()) {
    model::check_params(ckpt.config.model, ckpt.adam.m);
    model::check_params(ckpt.config.model, ckpt.adam.v);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Serialize fully before touching the target so a failure leaves the old
  // file intact.
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(buf, ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw RuntimeFailure("cannot write " + tmp);
    const auto s = buf.str();
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!os) throw RuntimeFailure("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace livespeech::harness
