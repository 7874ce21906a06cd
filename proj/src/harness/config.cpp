#include "livespeech/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "livespeech/errors.hpp"

namespace livespeech::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_num(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ValidationError(key + ": cannot parse \"" + s + "\" as a number");
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError(key + ": expected true/false, got \"" + s + "\"");
}

template <class T>
std::vector<T> parse_list(const std::string& raw, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_num<T>(item, key));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

struct Section {
  std::string name;
  std::vector<Field> fields;
};

// Field builders keyed on a projection to the member.
template <class Proj>
Field size_field(std::string key, Proj proj) {
  return {key, [proj](const RunConfig& c) { return std::to_string(proj(const_cast<RunConfig&>(c))); },
          [proj, key](RunConfig& c, const std::string& s) { proj(c) = parse_num<std::size_t>(s, key); }};
}

template <class Proj>
Field u64_field(std::string key, Proj proj) {
  return {key, [proj](const RunConfig& c) { return std::to_string(proj(const_cast<RunConfig&>(c))); },
          [proj, key](RunConfig& c, const std::string& s) { proj(c) = parse_num<std::uint64_t>(s, key); }};
}

template <class Proj>
Field real_field(std::string key, Proj proj) {
  return {key, [proj](const RunConfig& c) { return fmt(static_cast<double>(proj(const_cast<RunConfig&>(c)))); },
          [proj, key](RunConfig& c, const std::string& s) {
            using V = std::remove_reference_t<decltype(proj(c))>;
            proj(c) = static_cast<V>(parse_num<double>(s, key));
          }};
}

template <class Proj>
Field bool_field(std::string key, Proj proj) {
  return {key, [proj](const RunConfig& c) { return std::string(proj(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [proj, key](RunConfig& c, const std::string& s) { proj(c) = parse_bool(s, key); }};
}

template <class T, class Proj>
Field list_field(std::string key, Proj proj) {
  return {key, [proj](const RunConfig& c) { return join(proj(const_cast<RunConfig&>(c))); },
          [proj, key](RunConfig& c, const std::string& s) { proj(c) = parse_list<T>(s, key); }};
}

#define LS_P(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Section>& schema() {
  static const std::vector<Section> sections = {
      {"run", {u64_field("seed", LS_P(seed))}},
      {"data",
       {size_field("symbol_vocab", LS_P(data.symbol_vocab)), size_field("theta_dim", LS_P(data.theta_dim)),
        size_field("min_frames", LS_P(data.min_frames)), size_field("max_frames", LS_P(data.max_frames)),
        size_field("feature_dim", LS_P(data.feature_dim)), real_field("frame_rate", LS_P(data.frame_rate)),
        size_field("n_speakers", LS_P(data.n_speakers)), size_field("n_utterances", LS_P(data.n_utterances)),
        size_field("test_speakers", LS_P(data.test_speakers)), size_field("min_text", LS_P(data.min_text)),
        size_field("max_text", LS_P(data.max_text)), real_field("noise_std", LS_P(data.noise_std)),
        real_field("mod_scale", LS_P(data.mod_scale)), real_field("shift_scale", LS_P(data.shift_scale)),
        u64_field("seed", LS_P(data.seed))}},
      {"codec",
       {size_field("Q", LS_P(codec.Q)), size_field("K", LS_P(codec.K)),
        size_field("iterations", LS_P(codec.iterations)), bool_field("zero_reserved", LS_P(codec.zero_reserved)),
        size_field("max_train_frames", LS_P(codec.max_train_frames))}},
      {"model",
       {size_field("L", LS_P(model.L)), size_field("M", LS_P(model.M)), size_field("G", LS_P(model.G)),
        size_field("d_model", LS_P(model.d_model)), size_field("n_heads", LS_P(model.n_heads)),
        size_field("d_ff", LS_P(model.d_ff)), size_field("cond_len", LS_P(model.cond_len)),
        size_field("max_positions", LS_P(model.max_positions)),
        list_field<std::size_t>("group_of", LS_P(model.group_of))}},
      {"loss",
       {{"scheme", [](const RunConfig& c) { return loss::to_string(c.loss.scheme); },
         [](RunConfig& c, const std::string& s) { c.loss.scheme = loss::parse_scheme(trim(s)); }},
        real_field("lambda", LS_P(loss.lambda)),
        {"p_max", [](const RunConfig& c) { return c.loss.p_max ? fmt(*c.loss.p_max) : std::string("none"); },
         [](RunConfig& c, const std::string& s) {
           if (trim(s) == "none") {
             c.loss.p_max.reset();
           } else {
             c.loss.p_max = parse_num<double>(s, "p_max");
           }
         }},
        list_field<double>("static_init", LS_P(loss.static_init))}},
      {"sampler",
       {real_field("temperature", LS_P(sampler.temperature)), size_field("top_k", LS_P(sampler.top_k)),
        size_field("n_sb", LS_P(sampler.n_sb)), u64_field("seed", LS_P(sampler.seed))}},
      {"train",
       {size_field("steps", LS_P(train.steps)), real_field("lr", LS_P(train.lr)),
        size_field("warmup", LS_P(train.warmup)), real_field("min_lr_ratio", LS_P(train.min_lr_ratio)),
        size_field("batch", LS_P(train.batch)), real_field("beta1", LS_P(train.beta1)),
        real_field("beta2", LS_P(train.beta2)), real_field("adam_eps", LS_P(train.adam_eps)),
        real_field("clip", LS_P(train.clip)), size_field("eval_every", LS_P(train.eval_every)),
        size_field("val_utterances", LS_P(train.val_utterances)),
        size_field("val_generate", LS_P(train.val_generate))}},
      {"gridsearch",
       {list_field<double>("temperatures", LS_P(grid.temperatures)),
        list_field<std::size_t>("top_ks", LS_P(grid.top_ks)), list_field<std::size_t>("n_sbs", LS_P(grid.n_sbs))}},
      {"eval",
       {size_field("test_utterances", LS_P(eval.test_utterances)),
        size_field("codec_utterances", LS_P(eval.codec_utterances))}},
      {"stream",
       {size_field("frames", LS_P(stream.frames)), bool_field("real_time", LS_P(stream.real_time)),
        size_field("repeats", LS_P(stream.repeats))}},
  };
  return sections;
}

#undef LS_P

}  // namespace

void RunConfig::finalize() {
  model.Q = codec.Q;
  model.K = codec.K;
  model.text_vocab = data.symbol_vocab;
  model.feat_dim = data.feature_dim;
  loss.total_steps = train.steps;
  validate();
}

void RunConfig::validate() const {
  data.validate();
  if (codec.Q < 1 || codec.K < 2) throw ValidationError("config: codec needs Q >= 1 and K >= 2");
  if (codec.iterations < 1) throw ValidationError("config: codec.iterations must be >= 1");
  if (model.Q != codec.Q || model.K != codec.K || model.text_vocab != data.symbol_vocab ||
      model.feat_dim != data.feature_dim) {
    throw ValidationError("config: model Q/K/vocab/feat_dim disagree with [codec]/[data]; call finalize()");
  }
  model.validate();
  loss.validate();
  sampler.validate(model.Q);
  if (train.steps < 1 || train.batch < 1) throw ValidationError("config: train.steps and train.batch must be >= 1");
  if (!(train.lr > 0.0)) throw ValidationError("config: train.lr must be positive");
  if (train.min_lr_ratio < 0.0 || train.min_lr_ratio > 1.0) {
    throw ValidationError("config: train.min_lr_ratio must be in [0, 1]");
  }
  if (train.beta1 < 0.0 || train.beta1 >= 1.0 || train.beta2 < 0.0 || train.beta2 >= 1.0) {
    throw ValidationError("config: Adam betas must be in [0, 1)");
  }
  if (train.clip < 0.0) throw ValidationError("config: train.clip must be >= 0");
  if (train.eval_every < 1) throw ValidationError("config: train.eval_every must be >= 1");
  if (train.val_generate > train.val_utterances) {
    throw ValidationError("config: train.val_generate cannot exceed train.val_utterances");
  }
  if (stream.frames < 1 || stream.repeats < 1) throw ValidationError("config: stream.frames and repeats must be >= 1");
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.seed == b.seed && a.data == b.data && a.codec == b.codec && a.model == b.model && a.loss == b.loss &&
         a.sampler == b.sampler && a.train == b.train && a.grid.temperatures == b.grid.temperatures &&
         a.grid.top_ks == b.grid.top_ks && a.grid.n_sbs == b.grid.n_sbs && a.eval == b.eval && a.stream == b.stream;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [name, body] : tree) {
    const Section* sec = nullptr;
    for (const auto& s : schema()) {
      if (s.name == name) sec = &s;
    }
    if (!sec) {
      if (body.empty()) throw ValidationError("config: key \"" + name + "\" outside any section");
      throw ValidationError("config: unknown section [" + name + "]");
    }
    for (const auto& [key, value] : body) {
      const Field* field = nullptr;
      for (const auto& f : sec->fields) {
        if (f.key == key) field = &f;
      }
      if (!field) throw ValidationError("config: unknown key \"" + key + "\" in [" + name + "]");
      try {
        field->set(cfg, value.data());
      } catch (const ValidationError& e) {
        throw ValidationError("config: [" + name + "] " + e.what());
      }
    }
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& s : schema()) {
    if (!out.empty()) out += "\n";
    out += "[" + s.name + "]\n";
    for (const auto& f : s.fields) out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace livespeech::harness
