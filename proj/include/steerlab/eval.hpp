#pragma once

// Answer-matching evaluation: two-way probability between the behavior
// matching and non-matching option tokens at the final prompt position.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "steerlab/caa.hpp"
#include "steerlab/model.hpp"

namespace steerlab {

struct EvalItem {
    TokenSeq prompt_tokens;
    TokenId matching_token = 0;
    TokenId non_matching_token = 0;

    /// Throws UsageError/VocabularyError when the option tokens are invalid.
    void validate(const ModelConfig& config) const;
};

/// The prompt is BOS, question, '\n' and the answer cue: everything in the
/// answer before the option letter (e.g. "(" for "(A) ..."). The option letter
/// is the first character after an opening parenthesis, else the first
/// character. Throws IngestionError if the two answers disagree on the cue.
EvalItem make_eval_item(const BehaviorRecord& record, const ByteTokenizer& tokenizer);
std::vector<EvalItem> load_eval_items(const std::filesystem::path& path,
                                      const ByteTokenizer& tokenizer);

struct ItemScore {
    double prob_correct = 0.5;
    bool is_correct = false;  // prob_correct > 0.5; ties are incorrect
};

/// Two-option softmax of two logits, matching first.
double two_way_probability(double z_match, double z_nonmatch);

ItemScore score_item(const ModelConfig& config, const TensorStore& weights, const EvalItem& item,
                     const TapPlan& taps = {});

struct EvalSummary {
    double accuracy = 0.0;
    double mean_prob_correct = 0.0;
    std::size_t item_count = 0;
};

/// Scores every item under `taps` and folds in item order.
EvalSummary evaluate_items(const ModelConfig& config, const TensorStore& weights,
                           std::span<const EvalItem> items, const TapPlan& taps,
                           std::size_t threads = 1);

/// Unsteered evaluation. Throws UsageError on an empty item list.
EvalSummary evaluate_baseline(const ModelConfig& config, const TensorStore& weights,
                              std::span<const EvalItem> items, std::size_t threads = 1);

struct SweepRecord {
    std::size_t layer = 0;
    double multiplier = 0.0;
    double accuracy = 0.0;
    double mean_prob_correct = 0.0;
    double delta_prob_vs_baseline = 0.0;
    double delta_accuracy_vs_baseline = 0.0;
    std::size_t item_count = 0;
};

struct SweepOptions {
    std::vector<double> multipliers{1.0, -1.0};
    /// Layers to steer (sorted, duplicates dropped); empty means every layer.
    std::vector<std::size_t> layers;
    HookSite site = HookSite::post_mlp_pre_add;
    InjectPositions positions = InjectPositions::all_tokens;
    std::size_t threads = 1;
};

struct SweepResult {
    EvalSummary baseline;
    std::vector<SweepRecord> records;  // layer ascending, then multiplier order
};

/// Injects vectors.v(L) * m at layer L for every (L, m) and compares against a
/// single shared baseline. Throws CompatibilityError when the vector set was
/// not extracted from this model.
SweepResult layer_sweep(const ModelConfig& config, const TensorStore& weights,
                        std::span<const EvalItem> items, const SteeringVectorSet& vectors,
                        const SweepOptions& options = {});

/// Header plus one row per record, floats with 9 significant digits.
std::string sweep_csv(std::span<const SweepRecord> records);

/// Printf-style %.9g.
std::string format_g9(double v);

}  // namespace steerlab
