#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "livespeech/codec/rvq.hpp"
#include "livespeech/harness/config.hpp"
#include "livespeech/harness/dataset.hpp"
#include "livespeech/sampler/sampler.hpp"

namespace livespeech::harness {

/// A test sentence and the utterance its speaker conditioning comes from.
struct EvalItem {
  std::size_t target = 0;
  std::size_t enrollment = 0;
};

/// Rejects items whose enrollment is the target utterance itself (its
/// features would leak the answer) or belongs to another speaker.
void check_eval_item(const Dataset& ds, const EvalItem& item);

/// Items for the first `limit` utterances of `ids` (0 = all), each paired
/// with its dataset enrollment.
std::vector<EvalItem> default_items(const Dataset& ds, const std::vector<std::size_t>& ids, std::size_t limit);

/// Generates as many frames as the target has and decodes them with all Q
/// codebooks.
codec::FeatureSequence synthesize(const sampler::Decoder& model, const codec::Codebooks& cb, const Dataset& ds,
                                  const EvalItem& item, const sampler::SamplerConfig& sampler);

struct GenerationScore {
  double ser = 0.0;
  double sim = 0.0;  // proxy between generated and enrollment features
};

/// Means over items.
GenerationScore score_generation(const sampler::Decoder& model, const codec::Codebooks& cb, const Dataset& ds,
                                 const std::vector<EvalItem>& items, const sampler::SamplerConfig& sampler);

struct CodecCurvePoint {
  std::size_t q_used = 0;
  double mse = 0.0;
  double ser = 0.0;
  double sim = 0.0;  // proxy between reconstruction and the original features
};

/// Reconstruction quality for q_used = 1..Q, averaged over utterances.
std::vector<CodecCurvePoint> codec_curve(const Dataset& ds, const codec::Codebooks& cb,
                                         const std::vector<std::size_t>& ids);

struct TeacherForcedStats {
  double loss = 0.0;  // uniform CE
  std::vector<double> accuracy;
};
TeacherForcedStats teacher_forced(const sampler::Decoder& model, const Dataset& ds,
                                  const std::vector<codec::CodeGrid>& tokens, const std::vector<EvalItem>& items);

struct EvalReport {
  std::size_t Q = 0;
  std::size_t utterances = 0;
  sampler::SamplerConfig sampler;
  double ser = 0.0;
  double sim = 0.0;
  double tf_loss = 0.0;
  std::vector<double> codebook_accuracy;
  // Codec round trip with no language model.
  double ref_ser_original = 0.0;
  double ref_ser_codec = 0.0;
  double ref_sim_codec = 0.0;
  std::vector<CodecCurvePoint> curve;
  std::optional<sampler::StreamReport> stream;

  std::string to_json() const;
};

/// Throws ValidationError listing the first violation of the report schema
/// (documented in the README).
void validate_report_json(const std::string& json);

struct EvalOptions {
  std::vector<EvalItem> items;  // empty = default test items
  bool stream_bench = true;
};

EvalReport evaluate(const RunConfig& cfg, const Dataset& ds, const codec::Codebooks& cb,
                    const model::Parameters<float>& params, const std::vector<codec::CodeGrid>& tokens,
                    const EvalOptions& options = {});

/// Greedy streaming run on the first test item; the repeat with the median
/// RTF is reported.
sampler::StreamReport stream_bench(const RunConfig& cfg, const Dataset& ds, const codec::Codebooks& cb,
                                   const model::Parameters<float>& params);

/// Line plots of metrics.csv columns against step.
void write_training_plots(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir);

}  // namespace livespeech::harness
