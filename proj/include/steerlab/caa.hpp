#pragma once

// Contrastive activation addition: per-layer steering vectors from the
// last-token residuals of matched behavior / anti-behavior sequences.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "steerlab/model.hpp"
#include "steerlab/tensor.hpp"
#include "steerlab/tokenizer.hpp"

namespace steerlab {

/// One record of the answer-matching dataset JSON.
struct BehaviorRecord {
    std::string question;
    std::string answer_matching_behavior;
    std::string answer_not_matching_behavior;
};

struct ContrastivePair {
    TokenSeq positive_tokens;  // question + behavior-matching answer
    TokenSeq negative_tokens;  // question + behavior-violating answer
    std::string pair_id;
};

/// Residual vectors, one per layer, at the final token.
struct PairResiduals {
    std::vector<Vector> positive;
    std::vector<Vector> negative;
};

inline constexpr const char* kCaptureSiteLabel = "block_output";
inline constexpr const char* kLastTokenRule = "final token of question + newline + answer";

struct SteeringVectorSet {
    std::vector<Vector> vectors;       // n_layers x d_model
    std::vector<double> raw_norms;     // |mean direction| per layer
    std::vector<double> target_norms;  // mean per-pair direction norm per layer
    std::string model_fingerprint;
    std::string dataset_fingerprint;
    std::size_t pair_count = 0;

    std::size_t n_layers() const noexcept { return vectors.size(); }
    std::size_t d_model() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }
    bool all_zero() const noexcept;

    friend bool operator==(const SteeringVectorSet&, const SteeringVectorSet&) = default;
};

/// Parses the dataset JSON text; IngestionError names the offending record.
std::vector<BehaviorRecord> parse_behavior_records(const std::string& json_text);
std::vector<BehaviorRecord> load_behavior_records(const std::filesystem::path& path);
std::string behavior_records_to_json(std::span<const BehaviorRecord> records);

/// Template: BOS, question, '\n', answer.
ContrastivePair make_pair(const BehaviorRecord& record, const ByteTokenizer& tokenizer,
                          std::string pair_id);
std::vector<ContrastivePair> load_pairs(const std::filesystem::path& path,
                                        const ByteTokenizer& tokenizer);

std::string dataset_fingerprint(std::span<const ContrastivePair> pairs);

/// block_output residual of the final token at every layer, for both members.
PairResiduals capture_pair_residuals(const ModelConfig& config, const TensorStore& weights,
                                     const ContrastivePair& pair);

/// Mean of per-pair differences per layer, rescaled to the mean per-pair
/// difference norm. A zero mean direction yields a zero vector.
/// Folds strictly in input order. Throws UsageError if `residuals` is empty.
SteeringVectorSet aggregate_directions(std::span<const PairResiduals> residuals);

/// Captures every pair (concurrently, up to `threads`), then aggregates.
SteeringVectorSet extract_steering_vectors(const ModelConfig& config, const TensorStore& weights,
                                           std::span<const ContrastivePair> pairs,
                                           std::size_t threads = 1);

}  // namespace steerlab
