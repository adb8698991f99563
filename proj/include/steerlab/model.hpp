#pragma once

// Pre-norm decoder-only transformer with declarative residual-stream taps.
//
// Block l:
//   h   = x + Attn(rms_norm(x))
//   m   = MLP(rms_norm(h))            <- post_mlp_pre_add injections land here
//   out = h + m                       <- block_output injections land here
//
// Weights are stored (in_features x out_features) so every projection is a
// plain row-major matmul of the activations.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "steerlab/tensor.hpp"
#include "steerlab/tokenizer.hpp"

namespace steerlab {

struct ModelConfig {
    std::uint32_t n_layers = 1;
    std::uint32_t d_model = 8;
    std::uint32_t n_heads = 1;
    std::uint32_t d_head = 8;
    std::uint32_t d_mlp = 32;
    std::uint32_t vocab_size = ByteTokenizer::kVocabSize;
    std::uint32_t max_seq_len = 64;
    double norm_eps = kDefaultNormEps;

    /// Throws UsageError naming the violated constraint.
    void validate() const;
    std::uint64_t parameter_count() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Tensor names in canonical (file) order.
std::vector<std::string> canonical_tensor_names(const ModelConfig& config);
/// (rows, cols) expected for a canonical name; throws IntegrityError for unknown names.
std::pair<std::size_t, std::size_t> expected_tensor_shape(const ModelConfig& config,
                                                          const std::string& name);

namespace tensor_name {
inline constexpr const char* kTokEmbed = "tok_embed";
inline constexpr const char* kPosEmbed = "pos_embed";
inline constexpr const char* kFinalNorm = "final_norm";
inline constexpr const char* kUnembed = "unembed";
std::string attn_norm(std::size_t layer);
std::string attn_q(std::size_t layer);
std::string attn_k(std::size_t layer);
std::string attn_v(std::size_t layer);
std::string attn_o(std::size_t layer);
std::string mlp_norm(std::size_t layer);
std::string mlp_up(std::size_t layer);
std::string mlp_down(std::size_t layer);
}  // namespace tensor_name

class TensorStore {
public:
    void set(const std::string& name, Matrix m) { tensors_[name] = std::move(m); }
    /// Throws IntegrityError when missing.
    const Matrix& get(const std::string& name) const;
    Matrix& get_mut(const std::string& name);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    std::size_t size() const noexcept { return tensors_.size(); }
    const std::map<std::string, Matrix>& all() const noexcept { return tensors_; }

    friend bool operator==(const TensorStore&, const TensorStore&) = default;

private:
    std::map<std::string, Matrix> tensors_;
};

/// Exactly the canonical names, each with its expected shape.
void validate_store(const ModelConfig& config, const TensorStore& weights);

/// Store with every tensor present and zero-filled; norm gains are ones.
TensorStore zero_weights(const ModelConfig& config);
/// Seeded Gaussian init (std 1/sqrt(d_model)), norm gains ones.
TensorStore random_weights(const ModelConfig& config, std::uint64_t seed);

enum class HookSite { block_output, post_mlp_pre_add };
enum class InjectPositions { all_tokens, last_token };

const char* to_string(HookSite site) noexcept;

struct CaptureRequest {
    std::size_t layer = 0;
    HookSite site = HookSite::block_output;
};

struct Injection {
    std::size_t layer = 0;
    HookSite site = HookSite::post_mlp_pre_add;
    Vector vector;
    double multiplier = 1.0;
    InjectPositions positions = InjectPositions::all_tokens;
};

struct TapPlan {
    std::vector<CaptureRequest> captures;
    std::vector<Injection> injections;

    /// Throws TapError on out-of-range layers or wrong vector length.
    void validate(const ModelConfig& config) const;

    /// Every layer, block_output.
    static TapPlan capture_all(const ModelConfig& config,
                               HookSite site = HookSite::block_output);
};

class TapCapture {
public:
    void put(std::size_t layer, HookSite site, Matrix m) { slots_[{layer, site}] = std::move(m); }
    /// Throws TapError if the coordinate was not requested.
    const Matrix& at(std::size_t layer, HookSite site) const;
    bool contains(std::size_t layer, HookSite site) const {
        return slots_.count({layer, site}) != 0;
    }
    std::size_t size() const noexcept { return slots_.size(); }

private:
    std::map<std::pair<std::size_t, HookSite>, Matrix> slots_;
};

struct ForwardResult {
    Matrix logits;  // (seq_len, vocab_size)
    TapCapture captures;
};

/// Called once per layer with the normalized MLP input (seq_len, d_model).
using MlpInputObserver = std::function<void(std::size_t layer, const Matrix& mlp_input)>;

ForwardResult forward(const ModelConfig& config, const TensorStore& weights,
                      const TokenSeq& tokens, const TapPlan& taps = {},
                      const MlpInputObserver& observer = {});

/// Appends n_new argmax tokens (ties toward the lower id), re-running the full
/// forward pass with `taps` at every step.
TokenSeq greedy_continuation(const ModelConfig& config, const TensorStore& weights,
                             const TokenSeq& prompt, const TapPlan& taps, std::size_t n_new);

}  // namespace steerlab
