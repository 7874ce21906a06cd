#include "livespeech/harness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "livespeech/errors.hpp"
#include "livespeech/loss/adaptive_loss.hpp"
#include "livespeech/patterns/patterns.hpp"

namespace livespeech::harness {

using numerics::TensorF;

void check_eval_item(const Dataset& ds, const EvalItem& item) {
  const std::size_t n = ds.utterances.size();
  if (item.target >= n || item.enrollment >= n) {
    throw ValidationError("eval: utterance id out of range (" + std::to_string(item.target) + ", " +
                          std::to_string(item.enrollment) + ")");
  }
  if (item.target == item.enrollment) {
    throw ValidationError("eval: utterance " + std::to_string(item.target) +
                          " cannot be its own enrollment; use another utterance of the same speaker");
  }
  if (ds.utterances[item.target].speaker != ds.utterances[item.enrollment].speaker) {
    throw ValidationError("eval: enrollment " + std::to_string(item.enrollment) + " is not from the speaker of " +
                          std::to_string(item.target));
  }
}

std::vector<EvalItem> default_items(const Dataset& ds, const std::vector<std::size_t>& ids, std::size_t limit) {
  std::vector<EvalItem> out;
  for (auto id : ids) {
    if (limit && out.size() == limit) break;
    out.push_back({id, ds.utterances.at(id).enrollment_of});
  }
  return out;
}

codec::FeatureSequence synthesize(const sampler::Decoder& model, const codec::Codebooks& cb, const Dataset& ds,
                                  const EvalItem& item, const sampler::SamplerConfig& sampler) {
  check_eval_item(ds, item);
  const auto& target = ds.utterances[item.target];
  const auto prefix = model.encode_condition(target.text, ds.utterances[item.enrollment].features);
  const auto grid = sampler::generate(model, prefix, target.features.length(), sampler);
  auto out = codec::rvq_decode(grid, cb, cb.num_stages());
  out.frame_rate_hz = ds.spec.frame_rate;
  return out;
}

GenerationScore score_generation(const sampler::Decoder& model, const codec::Codebooks& cb, const Dataset& ds,
                                 const std::vector<EvalItem>& items, const sampler::SamplerConfig& sampler) {
  if (items.empty()) throw ValidationError("eval: no items to score");
  Generator gen(ds.spec);
  GenerationScore s;
  for (const auto& item : items) {
    const auto f = synthesize(model, cb, ds, item, sampler);
    s.ser += oracle_symbol_error_rate(f, ds.utterances[item.target].text, gen);
    s.sim += speaker_similarity_proxy(f, ds.utterances[item.enrollment].features, gen);
  }
  s.ser /= static_cast<double>(items.size());
  s.sim /= static_cast<double>(items.size());
  return s;
}

std::vector<CodecCurvePoint> codec_curve(const Dataset& ds, const codec::Codebooks& cb,
                                         const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw ValidationError("codec curve: no utterances");
  Generator gen(ds.spec);
  const std::size_t Q = cb.num_stages();
  std::vector<CodecCurvePoint> curve(Q);
  for (std::size_t q = 0; q < Q; ++q) curve[q].q_used = q + 1;
  for (auto id : ids) {
    const auto& u = ds.utterances.at(id);
    const auto grid = codec::rvq_encode(u.features, cb);
    for (std::size_t q = 1; q <= Q; ++q) {
      const auto rec = codec::rvq_decode(grid, cb, q);
      auto& pt = curve[q - 1];
      pt.mse += codec::quantization_error(u.features, cb, q);
      pt.ser += oracle_symbol_error_rate(rec, u.text, gen);
      pt.sim += speaker_similarity_proxy(rec, u.features, gen);
    }
  }
  for (auto& pt : curve) {
    pt.mse /= static_cast<double>(ids.size());
    pt.ser /= static_cast<double>(ids.size());
    pt.sim /= static_cast<double>(ids.size());
  }
  return curve;
}

TeacherForcedStats teacher_forced(const sampler::Decoder& model, const Dataset& ds,
                                  const std::vector<codec::CodeGrid>& tokens, const std::vector<EvalItem>& items) {
  const auto& mc = model.config();
  TeacherForcedStats st;
  st.accuracy.assign(mc.Q, 0.0);
  for (const auto& item : items) {
    check_eval_item(ds, item);
    const auto& u = ds.utterances[item.target];
    const auto shifted = patterns::shift_delayed(tokens.at(item.target));
    const auto prefix = model.encode_condition(u.text, ds.utterances[item.enrollment].features);
    const auto logits = model.forward_full(prefix, shifted);
    numerics::Tape<float> tape;
    std::vector<numerics::Var> per_q;
    const std::size_t Tp = shifted.codes.T, K = mc.K;
    for (std::size_t q = 0; q < mc.Q; ++q) {
      TensorF lq = TensorF::matrix(Tp, K);
      std::copy_n(logits.data() + q * Tp * K, Tp * K, lq.data());
      per_q.push_back(tape.constant(std::move(lq)));
    }
    const auto res = loss::weighted_ce_loss(tape, per_q, shifted, loss::LossConfig{});
    st.loss += static_cast<double>(tape.value(res.loss).item());
    for (std::size_t q = 0; q < mc.Q; ++q) st.accuracy[q] += res.accuracy[q];
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, items.size()));
  st.loss /= n;
  for (auto& a : st.accuracy) a /= n;
  return st;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["Q"] = Q;
  j["utterances"] = utterances;
  j["sampler"] = {{"temperature", sampler.temperature},
                  {"top_k", sampler.top_k},
                  {"n_sb", sampler.n_sb},
                  {"seed", sampler.seed}};
  j["symbol_error_rate"] = ser;
  j["speaker_similarity"] = sim;
  j["teacher_forced_loss"] = tf_loss;
  j["codebook_accuracy"] = codebook_accuracy;
  j["reference"] = {{"ser_original", ref_ser_original}, {"ser_codec", ref_ser_codec}, {"sim_codec", ref_sim_codec}};
  j["codec_curve"] = nlohmann::json::array();
  for (const auto& p : curve) {
    j["codec_curve"].push_back({{"q_used", p.q_used}, {"mse", p.mse}, {"ser", p.ser}, {"sim", p.sim}});
  }
  if (stream) {
    j["stream"] = {{"rtf", stream->rtf},
                   {"first_chunk_latency_ms", 1e3 * stream->first_chunk_latency_s},
                   {"step_p50_ms", stream->step_percentile_ms(50)},
                   {"step_p95_ms", stream->step_percentile_ms(95)},
                   {"frames", stream->frames}};
  } else {
    j["stream"] = nullptr;
  }
  return j.dump(2);
}

void validate_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: not JSON: ") + e.what());
  }
  auto fail = [](const std::string& what) { throw ValidationError("report: " + what); };
  auto need_num = [&](const nlohmann::json& obj, const std::string& key, double lo, double hi) {
    if (!obj.contains(key) || !obj[key].is_number()) fail("\"" + key + "\" must be a number");
    const double v = obj[key].get<double>();
    if (!(v >= lo && v <= hi)) fail("\"" + key + "\" = " + std::to_string(v) + " out of range");
  };
  if (!j.is_object()) fail("top level must be an object");
  if (!j.contains("Q") || !j["Q"].is_number_unsigned() || j["Q"].get<std::size_t>() < 1) fail("\"Q\" must be >= 1");
  const auto Q = j["Q"].get<std::size_t>();
  if (!j.contains("utterances") || !j["utterances"].is_number_unsigned()) fail("\"utterances\" must be a count");
  if (!j.contains("sampler") || !j["sampler"].is_object()) fail("\"sampler\" must be an object");
  need_num(j["sampler"], "temperature", 0.0, 1e9);
  need_num(j["sampler"], "top_k", 1.0, 1e9);
  need_num(j["sampler"], "n_sb", 0.0, static_cast<double>(Q));
  need_num(j, "symbol_error_rate", 0.0, 1.0);
  need_num(j, "speaker_similarity", -1.0, 1.0);
  need_num(j, "teacher_forced_loss", 0.0, 1e9);
  if (!j.contains("codebook_accuracy") || !j["codebook_accuracy"].is_array() || j["codebook_accuracy"].size() != Q) {
    fail("\"codebook_accuracy\" must list Q values");
  }
  for (const auto& a : j["codebook_accuracy"]) {
    if (!a.is_number() || a.get<double>() < 0.0 || a.get<double>() > 1.0) fail("codebook accuracy outside [0, 1]");
  }
  if (!j.contains("reference") || !j["reference"].is_object()) fail("\"reference\" must be an object");
  need_num(j["reference"], "ser_original", 0.0, 1.0);
  need_num(j["reference"], "ser_codec", 0.0, 1.0);
  need_num(j["reference"], "sim_codec", -1.0, 1.0);
  if (!j.contains("codec_curve") || !j["codec_curve"].is_array() || j["codec_curve"].size() != Q) {
    fail("\"codec_curve\" must have Q points");
  }
  for (std::size_t q = 0; q < Q; ++q) {
    const auto& p = j["codec_curve"][q];
    if (!p.is_object() || !p.contains("q_used") || p["q_used"] != q + 1) fail("codec_curve q_used must run 1..Q");
    need_num(p, "mse", 0.0, 1e18);
    need_num(p, "ser", 0.0, 1.0);
    need_num(p, "sim", -1.0, 1.0);
  }
  if (!j.contains("stream")) fail("\"stream\" missing (null when not measured)");
  if (!j["stream"].is_null()) {
    need_num(j["stream"], "rtf", 0.0, 1e9);
    need_num(j["stream"], "first_chunk_latency_ms", 0.0, 1e9);
    need_num(j["stream"], "step_p50_ms", 0.0, 1e9);
    need_num(j["stream"], "step_p95_ms", 0.0, 1e9);
    need_num(j["stream"], "frames", 1.0, 1e12);
  }
}

sampler::StreamReport stream_bench(const RunConfig& cfg, const Dataset& ds, const codec::Codebooks& cb,
                                   const model::Parameters<float>& params) {
  const auto ids = ds.test_ids();
  if (ids.empty()) throw ValidationError("stream-bench: dataset has no test utterances");
  const auto item = default_items(ds, ids, 1).front();
  sampler::Decoder dec(cfg.model, params);
  const auto& u = ds.utterances[item.target];
  const auto prefix = dec.encode_condition(u.text, ds.utterances[item.enrollment].features);
  sampler::StreamOptions opts;
  opts.codebooks = &cb;
  opts.frame_rate_hz = ds.spec.frame_rate;
  opts.pacing = cfg.stream.real_time ? sampler::Pacing::real_time : sampler::Pacing::off;
  sampler::SamplerConfig greedy;
  std::vector<sampler::StreamReport> runs;
  for (std::size_t r = 0; r < cfg.stream.repeats; ++r) {
    runs.push_back(sampler::generate_stream(dec, prefix, cfg.stream.frames, greedy, opts).report);
  }
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.rtf < b.rtf; });
  return runs[runs.size() / 2];
}

EvalReport evaluate(const RunConfig& cfg, const Dataset& ds, const codec::Codebooks& cb,
                    const model::Parameters<float>& params, const std::vector<codec::CodeGrid>& tokens,
                    const EvalOptions& options) {
  cfg.validate();
  auto items = options.items.empty() ? default_items(ds, ds.test_ids(), cfg.eval.test_utterances) : options.items;
  if (items.empty()) throw ValidationError("eval: no test utterances");
  for (const auto& it : items) check_eval_item(ds, it);

  sampler::Decoder dec(cfg.model, params);
  Generator gen(ds.spec);
  EvalReport rep;
  rep.Q = cfg.model.Q;
  rep.utterances = items.size();
  rep.sampler = cfg.sampler;
  const auto score = score_generation(dec, cb, ds, items, cfg.sampler);
  rep.ser = score.ser;
  rep.sim = score.sim;
  const auto tf = teacher_forced(dec, ds, tokens, items);
  rep.tf_loss = tf.loss;
  rep.codebook_accuracy = tf.accuracy;

  for (const auto& it : items) {
    const auto& u = ds.utterances[it.target];
    const auto rec = codec::rvq_decode(codec::rvq_encode(u.features, cb), cb, cb.num_stages());
    rep.ref_ser_original += oracle_symbol_error_rate(u.features, u.text, gen);
    rep.ref_ser_codec += oracle_symbol_error_rate(rec, u.text, gen);
    rep.ref_sim_codec += speaker_similarity_proxy(rec, u.features, gen);
  }
  const double n = static_cast<double>(items.size());
  rep.ref_ser_original /= n;
  rep.ref_ser_codec /= n;
  rep.ref_sim_codec /= n;

  auto curve_ids = ds.test_ids();
  if (cfg.eval.codec_utterances && curve_ids.size() > cfg.eval.codec_utterances) {
    curve_ids.resize(cfg.eval.codec_utterances);
  }
  rep.curve = codec_curve(ds, cb, curve_ids);
  if (options.stream_bench) rep.stream = stream_bench(cfg, ds, cb, params);
  return rep;
}

namespace {

struct Series {
  std::string name;
  std::vector<double> y;
};

void write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
               const std::vector<Series>& series) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double xmin = x.empty() ? 0 : x.front(), xmax = x.empty() ? 1 : x.back();
  double ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (ymin > ymax) ymin = 0, ymax = 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0, xv = xmin + (xmax - xmin) * i / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << yv << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << xv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); ++i) {
      if (std::isfinite(series[k].y[i])) os << px(x[i]) << ',' << py(series[k].y[i]) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * k + 10 << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
       << c << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

void write_training_plots(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir) {
  std::ifstream is(metrics_csv);
  if (!is) throw ValidationError("cannot open " + metrics_csv.string());
  std::string line;
  if (!std::getline(is, line)) throw ValidationError(metrics_csv.string() + " is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::vector<std::vector<double>> data(cols.size());
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("step", 0) == 0) continue;
    std::stringstream ss(line);
    std::string c;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!std::getline(ss, c, ',')) throw ValidationError(metrics_csv.string() + ": short row");
      data[k].push_back(std::stod(c));
    }
  }
  auto col = [&](const std::string& name) -> const std::vector<double>& {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == name) return data[k];
    }
    throw ValidationError(metrics_csv.string() + ": no column " + name);
  };
  std::filesystem::create_directories(out_dir);
  const auto& step = col("step");
  write_svg(out_dir / "loss.svg", "loss", step, {{"train", col("train_loss")}, {"val (plain CE)", col("val_loss")}});
  std::vector<Series> acc;
  for (const auto& c : cols) {
    if (c.rfind("acc_q", 0) == 0) acc.push_back({c.substr(4), col(c)});
  }
  write_svg(out_dir / "accuracy.svg", "validation accuracy per codebook", step, acc);
  write_svg(out_dir / "val_generation.svg", "validation generation", step,
            {{"symbol error", col("val_ser")}, {"speaker sim", col("val_sim")}});
}

}  // namespace livespeech::harness
