#include "steerlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "steerlab/errors.hpp"
#include "steerlab/parallel.hpp"
#include "steerlab/weights_io.hpp"

namespace steerlab {

void EvalItem::validate(const ModelConfig& config) const {
    if (prompt_tokens.empty()) throw UsageError("eval item has an empty prompt");
    if (matching_token == non_matching_token) {
        throw UsageError("eval item option tokens must differ (both are " +
                         std::to_string(matching_token) + ")");
    }
    if (matching_token >= config.vocab_size || non_matching_token >= config.vocab_size) {
        throw VocabularyError("eval item option token outside vocab_size " +
                              std::to_string(config.vocab_size));
    }
}

namespace {

struct OptionSplit {
    std::string cue;
    char letter;
};

OptionSplit split_option(const std::string& answer) {
    std::size_t idx = 0;
    while (idx < answer.size() && answer[idx] == ' ') ++idx;
    if (idx < answer.size() && answer[idx] == '(') ++idx;
    if (idx >= answer.size()) {
        throw IngestionError("answer '" + answer + "' has no option letter");
    }
    return {answer.substr(0, idx), answer[idx]};
}

}  // namespace

EvalItem make_eval_item(const BehaviorRecord& record, const ByteTokenizer& tokenizer) {
    const auto match = split_option(record.answer_matching_behavior);
    const auto other = split_option(record.answer_not_matching_behavior);
    if (match.cue != other.cue) {
        throw IngestionError("answers '" + record.answer_matching_behavior + "' and '" +
                             record.answer_not_matching_behavior + "' use different cues");
    }
    if (match.letter == other.letter) {
        throw IngestionError("answers share option letter '" + std::string(1, match.letter) + "'");
    }
    return {tokenizer.encode(record.question + "\n" + match.cue),
            ByteTokenizer::byte_token(match.letter), ByteTokenizer::byte_token(other.letter)};
}

std::vector<EvalItem> load_eval_items(const std::filesystem::path& path,
                                      const ByteTokenizer& tokenizer) {
    const auto records = load_behavior_records(path);
    std::vector<EvalItem> items;
    items.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            items.push_back(make_eval_item(records[i], tokenizer));
        } catch (const IngestionError& e) {
            // Drop the category prefix the inner error already carries.
            const std::string inner = e.what();
            throw IngestionError("record " + std::to_string(i) + ": " +
                                 inner.substr(inner.find(": ") + 2));
        }
    }
    return items;
}

double two_way_probability(double z_match, double z_nonmatch) {
    const double mx = std::max(z_match, z_nonmatch);
    const double em = std::exp(z_match - mx);
    const double en = std::exp(z_nonmatch - mx);
    return em / (em + en);
}

ItemScore score_item(const ModelConfig& config, const TensorStore& weights, const EvalItem& item,
                     const TapPlan& taps) {
    item.validate(config);
    TapPlan plan = taps;
    plan.captures.clear();
    const ForwardResult fr = forward(config, weights, item.prompt_tokens, plan);
    const std::size_t last = fr.logits.rows() - 1;
    const double p =
        two_way_probability(fr.logits(last, item.matching_token), fr.logits(last, item.non_matching_token));
    return {p, p > 0.5};
}

EvalSummary evaluate_items(const ModelConfig& config, const TensorStore& weights,
                           std::span<const EvalItem> items, const TapPlan& taps,
                           std::size_t threads) {
    if (items.empty()) throw UsageError("evaluation needs at least one item");
    const auto scores = parallel_map<ItemScore>(
        items.size(), threads, [&](std::size_t i) { return score_item(config, weights, items[i], taps); });
    EvalSummary s;
    s.item_count = items.size();
    std::size_t correct = 0;
    double prob_sum = 0.0;
    for (const auto& sc : scores) {
        correct += sc.is_correct ? 1 : 0;
        prob_sum += sc.prob_correct;
    }
    const double n = static_cast<double>(items.size());
    s.accuracy = static_cast<double>(correct) / n;
    s.mean_prob_correct = prob_sum / n;
    return s;
}

EvalSummary evaluate_baseline(const ModelConfig& config, const TensorStore& weights,
                              std::span<const EvalItem> items, std::size_t threads) {
    return evaluate_items(config, weights, items, TapPlan{}, threads);
}

SweepResult layer_sweep(const ModelConfig& config, const TensorStore& weights,
                        std::span<const EvalItem> items, const SteeringVectorSet& vectors,
                        const SweepOptions& options) {
    if (options.multipliers.empty()) throw UsageError("layer sweep needs at least one multiplier");
    if (vectors.n_layers() != config.n_layers || vectors.d_model() != config.d_model) {
        throw CompatibilityError("steering vectors have " + std::to_string(vectors.n_layers()) +
                                 " layers x " + std::to_string(vectors.d_model()) +
                                 " dims, model has " + std::to_string(config.n_layers) + " x " +
                                 std::to_string(config.d_model));
    }
    const std::string fp = model_fingerprint(config, weights);
    if (vectors.model_fingerprint != fp) {
        throw CompatibilityError("steering vectors were extracted from model " +
                                 vectors.model_fingerprint + ", not " + fp);
    }
    std::vector<std::size_t> layers = options.layers;
    if (layers.empty()) {
        for (std::size_t l = 0; l < config.n_layers; ++l) layers.push_back(l);
    }
    for (std::size_t l : layers) {
        if (l >= config.n_layers) {
            throw UsageError("sweep layer " + std::to_string(l) + " out of range [0, " +
                             std::to_string(config.n_layers) + ")");
        }
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

    SweepResult out;
    out.baseline = evaluate_baseline(config, weights, items, options.threads);
    for (std::size_t l : layers) {
        for (double m : options.multipliers) {
            TapPlan plan;
            plan.injections.push_back({l, options.site, vectors.vectors[l], m, options.positions});
            const EvalSummary s = evaluate_items(config, weights, items, plan, options.threads);
            SweepRecord r;
            r.layer = l;
            r.multiplier = m;
            r.accuracy = s.accuracy;
            r.mean_prob_correct = s.mean_prob_correct;
            r.delta_prob_vs_baseline = s.mean_prob_correct - out.baseline.mean_prob_correct;
            r.delta_accuracy_vs_baseline = s.accuracy - out.baseline.accuracy;
            r.item_count = s.item_count;
            out.records.push_back(r);
        }
    }
    return out;
}

std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string sweep_csv(std::span<const SweepRecord> records) {
    std::string out = "layer,multiplier,accuracy,mean_prob_correct,delta_prob_vs_baseline,item_count\n";
    for (const auto& r : records) {
        out += std::to_string(r.layer) + "," + format_g9(r.multiplier) + "," + format_g9(r.accuracy) +
               "," + format_g9(r.mean_prob_correct) + "," + format_g9(r.delta_prob_vs_baseline) + "," +
               std::to_string(r.item_count) + "\n";
    }
    return out;
}

}  // namespace steerlab
