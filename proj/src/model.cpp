#include "steerlab/model.hpp"

#include <cmath>

#include "steerlab/errors.hpp"

namespace steerlab {

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw UsageError(std::string("invalid model config: ") + what);
    };
    need(n_layers >= 1, "n_layers must be >= 1");
    need(d_model >= 1, "d_model must be >= 1");
    need(n_heads >= 1, "n_heads must be >= 1");
    need(d_head >= 1, "d_head must be >= 1");
    need(d_mlp >= 1, "d_mlp must be >= 1");
    need(max_seq_len >= 1, "max_seq_len must be >= 1");
    need(vocab_size >= 4, "vocab_size must be >= 4");
    need(static_cast<std::uint64_t>(n_heads) * d_head == d_model,
         "n_heads * d_head must equal d_model");
    need(std::isfinite(norm_eps) && norm_eps > 0.0, "norm_eps must be > 0");
}

std::uint64_t ModelConfig::parameter_count() const {
    std::uint64_t total = 0;
    for (const auto& name : canonical_tensor_names(*this)) {
        auto [r, c] = expected_tensor_shape(*this, name);
        total += static_cast<std::uint64_t>(r) * c;
    }
    return total;
}

namespace tensor_name {
namespace {
std::string layer_name(std::size_t layer, const char* leaf) {
    return "layers." + std::to_string(layer) + "." + leaf;
}
}  // namespace
std::string attn_norm(std::size_t l) { return layer_name(l, "attn_norm"); }
std::string attn_q(std::size_t l) { return layer_name(l, "attn_q"); }
std::string attn_k(std::size_t l) { return layer_name(l, "attn_k"); }
std::string attn_v(std::size_t l) { return layer_name(l, "attn_v"); }
std::string attn_o(std::size_t l) { return layer_name(l, "attn_o"); }
std::string mlp_norm(std::size_t l) { return layer_name(l, "mlp_norm"); }
std::string mlp_up(std::size_t l) { return layer_name(l, "mlp_up"); }
std::string mlp_down(std::size_t l) { return layer_name(l, "mlp_down"); }
}  // namespace tensor_name

std::vector<std::string> canonical_tensor_names(const ModelConfig& config) {
    namespace tn = tensor_name;
    std::vector<std::string> names{tn::kTokEmbed, tn::kPosEmbed};
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        for (auto fn : {tn::attn_norm, tn::attn_q, tn::attn_k, tn::attn_v, tn::attn_o,
                        tn::mlp_norm, tn::mlp_up, tn::mlp_down}) {
            names.push_back(fn(l));
        }
    }
    names.emplace_back(tn::kFinalNorm);
    names.emplace_back(tn::kUnembed);
    return names;
}

std::pair<std::size_t, std::size_t> expected_tensor_shape(const ModelConfig& config,
                                                          const std::string& name) {
    const std::size_t d = config.d_model;
    if (name == tensor_name::kTokEmbed) return {config.vocab_size, d};
    if (name == tensor_name::kPosEmbed) return {config.max_seq_len, d};
    if (name == tensor_name::kFinalNorm) return {1, d};
    if (name == tensor_name::kUnembed) return {d, config.vocab_size};
    const auto dot = name.rfind('.');
    if (name.rfind("layers.", 0) == 0 && dot != std::string::npos) {
        const std::string leaf = name.substr(dot + 1);
        if (leaf == "attn_norm" || leaf == "mlp_norm") return {1, d};
        if (leaf == "attn_q" || leaf == "attn_k" || leaf == "attn_v" || leaf == "attn_o")
            return {d, d};
        if (leaf == "mlp_up") return {d, config.d_mlp};
        if (leaf == "mlp_down") return {config.d_mlp, d};
    }
    throw IntegrityError("unknown tensor name '" + name + "'");
}

const Matrix& TensorStore::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IntegrityError("missing tensor '" + name + "'");
    return it->second;
}

Matrix& TensorStore::get_mut(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IntegrityError("missing tensor '" + name + "'");
    return it->second;
}

void validate_store(const ModelConfig& config, const TensorStore& weights) {
    const auto names = canonical_tensor_names(config);
    if (weights.size() != names.size()) {
        throw IntegrityError("expected " + std::to_string(names.size()) + " tensors, found " +
                             std::to_string(weights.size()));
    }
    for (const auto& name : names) {
        const Matrix& m = weights.get(name);
        auto [r, c] = expected_tensor_shape(config, name);
        if (m.rows() != r || m.cols() != c) {
            throw IntegrityError("tensor '" + name + "' has shape " + m.shape_string() +
                                 ", expected (" + std::to_string(r) + ", " +
                                 std::to_string(c) + ")");
        }
    }
}

namespace {

bool is_norm_gain(const std::string& name) {
    return name == tensor_name::kFinalNorm || name.ends_with("_norm");
}

}  // namespace

TensorStore zero_weights(const ModelConfig& config) {
    config.validate();
    TensorStore store;
    for (const auto& name : canonical_tensor_names(config)) {
        auto [r, c] = expected_tensor_shape(config, name);
        store.set(name, Matrix(r, c, is_norm_gain(name) ? 1.0 : 0.0));
    }
    return store;
}

TensorStore random_weights(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    TensorStore store;
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    std::uint64_t index = 0;
    for (const auto& name : canonical_tensor_names(config)) {
        auto [r, c] = expected_tensor_shape(config, name);
        if (is_norm_gain(name)) {
            store.set(name, Matrix(r, c, 1.0));
        } else {
            Vector draws = seeded_gaussian(seed * 1000003ULL + index, r * c);
            for (double& v : draws) v *= scale;
            store.set(name, Matrix(r, c, std::move(draws)));
        }
        ++index;
    }
    return store;
}

const char* to_string(HookSite site) noexcept {
    switch (site) {
        case HookSite::block_output: return "block_output";
        case HookSite::post_mlp_pre_add: return "post_mlp_pre_add";
    }
    return "?";
}

void TapPlan::validate(const ModelConfig& config) const {
    for (const auto& c : captures) {
        if (c.layer >= config.n_layers) {
            throw TapError("capture layer " + std::to_string(c.layer) + " out of range [0, " +
                           std::to_string(config.n_layers) + ")");
        }
    }
    for (const auto& inj : injections) {
        if (inj.layer >= config.n_layers) {
            throw TapError("injection layer " + std::to_string(inj.layer) +
                           " out of range [0, " + std::to_string(config.n_layers) + ")");
        }
        if (inj.vector.size() != config.d_model) {
            throw TapError("injection vector has length " + std::to_string(inj.vector.size()) +
                           ", expected d_model = " + std::to_string(config.d_model));
        }
    }
}

TapPlan TapPlan::capture_all(const ModelConfig& config, HookSite site) {
    TapPlan plan;
    for (std::size_t l = 0; l < config.n_layers; ++l) plan.captures.push_back({l, site});
    return plan;
}

const Matrix& TapCapture::at(std::size_t layer, HookSite site) const {
    auto it = slots_.find({layer, site});
    if (it == slots_.end()) {
        throw TapError("no capture at layer " + std::to_string(layer) + ", site " +
                       to_string(site));
    }
    return it->second;
}

namespace {

Matrix rms_norm_rows(const Matrix& x, const Matrix& gain, double eps) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        Vector y = rms_norm(x.row(r), gain.row(0), eps);
        std::copy(y.begin(), y.end(), out.row(r).begin());
    }
    return out;
}

void add_in_place(Matrix& x, const Matrix& delta) {
    auto& xd = x.data();
    const auto& dd = delta.data();
    for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += dd[i];
}

void apply_injections(Matrix& stream, const TapPlan& taps, std::size_t layer, HookSite site) {
    for (const auto& inj : taps.injections) {
        if (inj.layer != layer || inj.site != site) continue;
        const std::size_t first =
            inj.positions == InjectPositions::last_token ? stream.rows() - 1 : 0;
        for (std::size_t t = first; t < stream.rows(); ++t) {
            auto row = stream.row(t);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += inj.multiplier * inj.vector[i];
        }
    }
}

void capture_if_requested(TapCapture& out, const TapPlan& taps, std::size_t layer,
                          HookSite site, const Matrix& value) {
    for (const auto& c : taps.captures) {
        if (c.layer == layer && c.site == site) {
            out.put(layer, site, value);
            return;
        }
    }
}

Matrix causal_attention(const ModelConfig& config, const Matrix& q, const Matrix& k,
                        const Matrix& v) {
    const std::size_t seq = q.rows();
    const std::size_t dh = config.d_head;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix out(seq, config.d_model);
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t t = 0; t < seq; ++t) {
            Matrix row_scores(1, t + 1);
            for (std::size_t s = 0; s <= t; ++s) {
                double acc = 0.0;
                for (std::size_t i = 0; i < dh; ++i) acc += q(t, off + i) * k(s, off + i);
                row_scores(0, s) = acc * scale;
            }
            const Matrix probs = softmax_rows(row_scores);
            for (std::size_t s = 0; s <= t; ++s) {
                const double p = probs(0, s);
                for (std::size_t i = 0; i < dh; ++i) out(t, off + i) += p * v(s, off + i);
            }
        }
    }
    return out;
}

}  // namespace

ForwardResult forward(const ModelConfig& config, const TensorStore& weights,
                      const TokenSeq& tokens, const TapPlan& taps,
                      const MlpInputObserver& observer) {
    if (tokens.empty()) throw LengthError("token sequence is empty");
    if (tokens.size() > config.max_seq_len) {
        throw LengthError("sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] >= config.vocab_size) {
            throw VocabularyError("token id " + std::to_string(tokens[t]) + " at position " +
                                  std::to_string(t) + " is outside vocab_size " +
                                  std::to_string(config.vocab_size));
        }
    }
    taps.validate(config);

    namespace tn = tensor_name;
    const std::size_t seq = tokens.size();
    const std::size_t d = config.d_model;
    const Matrix& tok = weights.get(tn::kTokEmbed);
    const Matrix& pos = weights.get(tn::kPosEmbed);

    Matrix x(seq, d);
    for (std::size_t t = 0; t < seq; ++t) {
        auto te = tok.row(tokens[t]);
        auto pe = pos.row(t);
        auto xr = x.row(t);
        for (std::size_t i = 0; i < d; ++i) xr[i] = te[i] + pe[i];
    }

    ForwardResult result;
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const Matrix a_in = rms_norm_rows(x, weights.get(tn::attn_norm(l)), config.norm_eps);
        const Matrix q = matmul(a_in, weights.get(tn::attn_q(l)));
        const Matrix k = matmul(a_in, weights.get(tn::attn_k(l)));
        const Matrix v = matmul(a_in, weights.get(tn::attn_v(l)));
        add_in_place(x, matmul(causal_attention(config, q, k, v), weights.get(tn::attn_o(l))));

        const Matrix m_in = rms_norm_rows(x, weights.get(tn::mlp_norm(l)), config.norm_eps);
        if (observer) observer(l, m_in);
        Matrix hidden = matmul(m_in, weights.get(tn::mlp_up(l)));
        for (double& h : hidden.data()) h = silu(h);
        Matrix mlp_out = matmul(hidden, weights.get(tn::mlp_down(l)));

        apply_injections(mlp_out, taps, l, HookSite::post_mlp_pre_add);
        capture_if_requested(result.captures, taps, l, HookSite::post_mlp_pre_add, mlp_out);
        add_in_place(x, mlp_out);

        apply_injections(x, taps, l, HookSite::block_output);
        capture_if_requested(result.captures, taps, l, HookSite::block_output, x);
    }

    const Matrix final_in = rms_norm_rows(x, weights.get(tn::kFinalNorm), config.norm_eps);
    result.logits = matmul(final_in, weights.get(tn::kUnembed));
    return result;
}

TokenSeq greedy_continuation(const ModelConfig& config, const TensorStore& weights,
                             const TokenSeq& prompt, const TapPlan& taps, std::size_t n_new) {
    if (prompt.size() + n_new > config.max_seq_len) {
        throw LengthError("prompt length " + std::to_string(prompt.size()) + " + " +
                          std::to_string(n_new) + " new tokens exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
    }
    TokenSeq out = prompt;
    TapPlan plan = taps;
    plan.captures.clear();
    for (std::size_t step = 0; step < n_new; ++step) {
        const ForwardResult fr = forward(config, weights, out, plan);
        auto last = fr.logits.row(fr.logits.rows() - 1);
        TokenId best = 0;
        for (std::size_t i = 1; i < last.size(); ++i) {
            if (last[i] > last[best]) best = static_cast<TokenId>(i);
        }
        out.push_back(best);
    }
    return out;
}

}  // namespace steerlab
