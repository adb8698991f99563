#pragma once

// Toy models with a planted behavior direction, plus matched synthetic
// datasets, so the extraction / injection / sweep pipeline can be checked
// against a known ground truth.
//
// Construction outline. The random base network is made blind to a small
// orthonormal "planted" subspace {u, q, n, c, w}: random readers and writers
// have that subspace projected out. Inside it:
//   q  request feature: the request token's embedding carries it and a
//      uniform-attention head in layer 0 spreads its context average.
//   n  compliance feature on the non-matching option token. A uniform head
//      in the planted layer subtracts its context mean, so a shift applied
//      to every position cancels.
//   c  cue feature: +1 on the answer cue token, -1 on every other token.
//   u  the planted direction. The planted layer's MLP writes about
//      +strength*u when a request is in context, and -strength*u at the
//      non-matching option token.
//   w  answer direction read by the unembedding (+ matching, - non-matching).
//      The next layer's MLP copies u into w at cue positions only, and writes
//      a request-gated offset of minus half the baseline signal, so that
//      removing the direction flips the answer.
// When the planted layer is the last layer the unembedding reads u directly.

#include <cstdint>
#include <vector>

#include "steerlab/caa.hpp"
#include "steerlab/eval.hpp"
#include "steerlab/model.hpp"

namespace steerlab {

struct OptionTokens {
    char matching = 'A';
    char non_matching = 'B';
};

struct PlantedSpec {
    std::uint64_t base_seed = 1;
    std::uint32_t n_layers = 8;
    std::uint32_t d_model = 64;
    std::uint32_t n_heads = 4;
    std::uint32_t d_mlp = 256;
    std::uint32_t max_seq_len = 64;
    std::uint32_t planted_layer = 3;
    /// Unit vector of length d_model; empty means "derive from base_seed".
    Vector planted_direction;
    double behavior_strength = 8.0;
    OptionTokens option_tokens;
    char request_token = '?';

    /// Throws UsageError.
    void validate() const;
    ModelConfig model_config() const;
    /// The explicit direction, or the seed-derived one.
    Vector resolved_direction() const;
};

struct PlantedModel {
    ModelConfig config;
    TensorStore weights;
    Vector planted_direction;
};

PlantedModel build_planted_model(const PlantedSpec& spec);

inline constexpr char kAnswerCue = '(';

/// Question text with the request token and both rendered options; answers
/// are the cue followed by the option letter, e.g. "(A".
std::vector<BehaviorRecord> gen_synthetic_records(const PlantedSpec& spec, std::size_t n,
                                                  std::uint64_t seed);
std::vector<ContrastivePair> gen_synthetic_pairs(const PlantedSpec& spec, std::size_t n_pairs,
                                                 std::uint64_t seed);
std::vector<EvalItem> gen_synthetic_items(const PlantedSpec& spec, std::size_t n_items,
                                          std::uint64_t seed);

}  // namespace steerlab
