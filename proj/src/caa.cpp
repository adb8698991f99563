#include "steerlab/caa.hpp"

#include <json.hpp>

#include "steerlab/binary_io.hpp"
#include "steerlab/errors.hpp"
#include "steerlab/fingerprint.hpp"
#include "steerlab/parallel.hpp"
#include "steerlab/weights_io.hpp"

namespace steerlab {

using json = nlohmann::json;

bool SteeringVectorSet::all_zero() const noexcept {
    for (const auto& v : vectors)
        for (double x : v)
            if (x != 0.0) return false;
    return true;
}

std::vector<BehaviorRecord> parse_behavior_records(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw IngestionError("dataset is not valid JSON");
    if (!doc.is_array()) throw IngestionError("dataset must be a JSON array of records");
    std::vector<BehaviorRecord> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& rec = doc[i];
        if (!rec.is_object()) {
            throw IngestionError("record " + std::to_string(i) + " is not an object");
        }
        auto field = [&](const char* key) {
            if (!rec.contains(key) || !rec[key].is_string()) {
                throw IngestionError("record " + std::to_string(i) + ": field '" + key +
                                     "' missing or not a string");
            }
            return rec[key].get<std::string>();
        };
        out.push_back({field("question"), field("answer_matching_behavior"),
                       field("answer_not_matching_behavior")});
    }
    return out;
}

std::vector<BehaviorRecord> load_behavior_records(const std::filesystem::path& path) {
    return parse_behavior_records(read_text_file(path));
}

std::string behavior_records_to_json(std::span<const BehaviorRecord> records) {
    json doc = json::array();
    for (const auto& r : records) {
        doc.push_back({{"question", r.question},
                       {"answer_matching_behavior", r.answer_matching_behavior},
                       {"answer_not_matching_behavior", r.answer_not_matching_behavior}});
    }
    return doc.dump(2) + "\n";
}

ContrastivePair make_pair(const BehaviorRecord& record, const ByteTokenizer& tokenizer,
                          std::string pair_id) {
    const std::string prefix = record.question + "\n";
    return {tokenizer.encode(prefix + record.answer_matching_behavior),
            tokenizer.encode(prefix + record.answer_not_matching_behavior), std::move(pair_id)};
}

std::vector<ContrastivePair> load_pairs(const std::filesystem::path& path,
                                        const ByteTokenizer& tokenizer) {
    const auto records = load_behavior_records(path);
    std::vector<ContrastivePair> pairs;
    pairs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        pairs.push_back(make_pair(records[i], tokenizer, "pair-" + std::to_string(i)));
    }
    return pairs;
}

std::string dataset_fingerprint(std::span<const ContrastivePair> pairs) {
    Fnv1a64 h;
    h.update_u64(pairs.size());
    for (const auto& p : pairs) {
        for (const TokenSeq* seq : {&p.positive_tokens, &p.negative_tokens}) {
            h.update_u64(seq->size());
            for (TokenId t : *seq) h.update_u64(t);
        }
    }
    return h.hex();
}

namespace {

std::vector<Vector> last_token_residuals(const ModelConfig& config, const TensorStore& weights,
                                         const TokenSeq& tokens) {
    const ForwardResult fr = forward(config, weights, tokens, TapPlan::capture_all(config));
    std::vector<Vector> out;
    out.reserve(config.n_layers);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const Matrix& m = fr.captures.at(l, HookSite::block_output);
        auto last = m.row(m.rows() - 1);
        out.emplace_back(last.begin(), last.end());
    }
    return out;
}

}  // namespace

PairResiduals capture_pair_residuals(const ModelConfig& config, const TensorStore& weights,
                                     const ContrastivePair& pair) {
    return {last_token_residuals(config, weights, pair.positive_tokens),
            last_token_residuals(config, weights, pair.negative_tokens)};
}

SteeringVectorSet aggregate_directions(std::span<const PairResiduals> residuals) {
    if (residuals.empty()) throw UsageError("steering vector extraction needs at least one pair");
    const std::size_t n_layers = residuals.front().positive.size();
    const std::size_t d = n_layers == 0 ? 0 : residuals.front().positive.front().size();
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        const auto& r = residuals[i];
        bool ok = r.positive.size() == n_layers && r.negative.size() == n_layers;
        for (std::size_t l = 0; ok && l < n_layers; ++l)
            ok = r.positive[l].size() == d && r.negative[l].size() == d;
        if (!ok) throw DimensionError("pair " + std::to_string(i) + " residuals have inconsistent shape");
    }

    const double n = static_cast<double>(residuals.size());
    SteeringVectorSet out;
    out.pair_count = residuals.size();
    out.vectors.assign(n_layers, Vector(d, 0.0));
    out.raw_norms.assign(n_layers, 0.0);
    out.target_norms.assign(n_layers, 0.0);

    for (std::size_t l = 0; l < n_layers; ++l) {
        Vector sum(d, 0.0);
        double norm_sum = 0.0;
        Vector diff(d);
        for (const auto& r : residuals) {
            for (std::size_t i = 0; i < d; ++i) diff[i] = r.positive[l][i] - r.negative[l][i];
            for (std::size_t i = 0; i < d; ++i) sum[i] += diff[i];
            norm_sum += l2_norm(diff);
        }
        Vector mean(d);
        for (std::size_t i = 0; i < d; ++i) mean[i] = sum[i] / n;
        const double raw = l2_norm(mean);
        const double target = norm_sum / n;
        out.raw_norms[l] = raw;
        out.target_norms[l] = target;
        if (raw > 0.0) {
            const double scale = target / raw;
            for (std::size_t i = 0; i < d; ++i) out.vectors[l][i] = mean[i] * scale;
        }
    }
    return out;
}

SteeringVectorSet extract_steering_vectors(const ModelConfig& config, const TensorStore& weights,
                                           std::span<const ContrastivePair> pairs,
                                           std::size_t threads) {
    if (pairs.empty()) throw UsageError("steering vector extraction needs at least one pair");
    for (const auto& p : pairs) {
        if (p.positive_tokens.empty() || p.negative_tokens.empty()) {
            throw UsageError("pair '" + p.pair_id + "' has an empty sequence");
        }
    }
    auto residuals = parallel_map<PairResiduals>(pairs.size(), threads, [&](std::size_t i) {
        return capture_pair_residuals(config, weights, pairs[i]);
    });
    SteeringVectorSet out = aggregate_directions(residuals);
    out.dataset_fingerprint = dataset_fingerprint(pairs);
    out.model_fingerprint = model_fingerprint(config, weights);
    return out;
}

}  // namespace steerlab
