#include <doctest.h>

#include <cmath>

#include "steerlab/binary_io.hpp"
#include "steerlab/errors.hpp"
#include "steerlab/model.hpp"
#include "steerlab/synth.hpp"
#include "steerlab/tokenizer.hpp"
#include "steerlab/weights_io.hpp"
#include "test_support.hpp"

using namespace steerlab;
using test_support::small_config;

namespace {

TokenSeq sample_tokens() { return ByteTokenizer{}.encode("is this ok? (A) (B)\n("); }

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c = small_config();
    CHECK_NOTHROW(c.validate());
    c.d_head = 7;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = small_config();
    c.n_layers = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("parameter count matches the tensor store") {
    const ModelConfig c = small_config(3);
    const TensorStore ws = random_weights(c, 4);
    std::uint64_t total = 0;
    for (const auto& [name, m] : ws.all()) total += m.size();
    CHECK(total == c.parameter_count());
    CHECK_NOTHROW(validate_store(c, ws));
}

TEST_CASE("zero-weight model gives zero logits and a uniform distribution") {
    ModelConfig c = small_config(1);
    const TensorStore ws = zero_weights(c);
    const auto res = forward(c, ws, sample_tokens());
    for (double v : res.logits.data()) CHECK(v == 0.0);
    const Matrix p = softmax_rows(res.logits);
    for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / c.vocab_size).epsilon(1e-12));
}

TEST_CASE("forward rejects bad input") {
    const ModelConfig c = small_config();
    const TensorStore ws = random_weights(c, 1);
    CHECK_THROWS_AS(forward(c, ws, TokenSeq{}), LengthError);
    CHECK_THROWS_AS(forward(c, ws, TokenSeq(c.max_seq_len + 1, 65)), LengthError);
    CHECK_THROWS_AS(forward(c, ws, TokenSeq{ByteTokenizer::kBos, 9999}), VocabularyError);
    TapPlan bad;
    bad.captures.push_back({c.n_layers, HookSite::block_output});
    CHECK_THROWS_AS(forward(c, ws, sample_tokens(), bad), TapError);
    TapPlan short_vec;
    short_vec.injections.push_back({0, HookSite::post_mlp_pre_add, Vector(3, 1.0), 1.0});
    CHECK_THROWS_AS(forward(c, ws, sample_tokens(), short_vec), TapError);
}

TEST_CASE("causality: trailing tokens never change earlier logits") {
    const ModelConfig c = small_config(3);
    const TensorStore ws = random_weights(c, 11);
    const TokenSeq base = sample_tokens();
    const Matrix ref = forward(c, ws, base).logits;
    SplitMix64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        TokenSeq t = base;
        const std::size_t cut = 1 + rng.below(t.size() - 1);
        for (std::size_t i = cut; i < t.size(); ++i) t[i] = static_cast<TokenId>(rng.below(256));
        const Matrix got = forward(c, ws, t).logits;
        for (std::size_t r = 0; r < cut; ++r)
            for (std::size_t k = 0; k < c.vocab_size; ++k) CHECK(got(r, k) == ref(r, k));
    }
}

TEST_CASE("zero injection is bit-exact at every layer and site") {
    const ModelConfig c = small_config(3);
    const TensorStore ws = random_weights(c, 2);
    const Matrix ref = forward(c, ws, sample_tokens()).logits;
    TapPlan all_zero;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        for (auto site : {HookSite::post_mlp_pre_add, HookSite::block_output}) {
            TapPlan one;
            one.injections.push_back({l, site, Vector(c.d_model, 0.0), 1.0});
            CHECK(forward(c, ws, sample_tokens(), one).logits == ref);
            all_zero.injections.push_back({l, site, Vector(c.d_model, 0.0), -3.0});
        }
    }
    CHECK(forward(c, ws, sample_tokens(), all_zero).logits == ref);
}

TEST_CASE("block_output injection adds exactly m*v to the capture") {
    const ModelConfig c = small_config(2);
    const TensorStore ws = random_weights(c, 3);
    const Vector v = seeded_gaussian(40, c.d_model);
    const double m = -1.5;
    TapPlan plain;
    plain.captures.push_back({1, HookSite::block_output});
    TapPlan steered = plain;
    steered.injections.push_back({1, HookSite::block_output, v, m});
    const Matrix a = forward(c, ws, sample_tokens(), plain).captures.at(1, HookSite::block_output);
    const Matrix b = forward(c, ws, sample_tokens(), steered).captures.at(1, HookSite::block_output);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = 0; k < c.d_model; ++k) CHECK(b(r, k) == a(r, k) + m * v[k]);
}

TEST_CASE("last_token injection touches only the final row") {
    const ModelConfig c = small_config(2);
    const TensorStore ws = random_weights(c, 3);
    TapPlan plain;
    plain.captures.push_back({0, HookSite::block_output});
    TapPlan steered = plain;
    steered.injections.push_back(
        {0, HookSite::block_output, Vector(c.d_model, 1.0), 1.0, InjectPositions::last_token});
    const Matrix a = forward(c, ws, sample_tokens(), plain).captures.at(0, HookSite::block_output);
    const Matrix b = forward(c, ws, sample_tokens(), steered).captures.at(0, HookSite::block_output);
    for (std::size_t r = 0; r + 1 < a.rows(); ++r)
        for (std::size_t k = 0; k < c.d_model; ++k) CHECK(b(r, k) == a(r, k));
    CHECK(b(a.rows() - 1, 0) == a(a.rows() - 1, 0) + 1.0);
}

TEST_CASE("injection locality: earlier layers are untouched") {
    const ModelConfig c = small_config(4);
    const TensorStore ws = random_weights(c, 5);
    const TapPlan all = TapPlan::capture_all(c);
    const auto ref = forward(c, ws, sample_tokens(), all);
    for (std::size_t L = 0; L < c.n_layers; ++L) {
        TapPlan steered = all;
        steered.injections.push_back({L, HookSite::post_mlp_pre_add, seeded_gaussian(L + 1, c.d_model), 2.0});
        const auto got = forward(c, ws, sample_tokens(), steered);
        for (std::size_t l = 0; l < L; ++l)
            CHECK(got.captures.at(l, HookSite::block_output) == ref.captures.at(l, HookSite::block_output));
        CHECK(got.captures.at(L, HookSite::block_output) != ref.captures.at(L, HookSite::block_output));
    }
}

TEST_CASE("capture completeness") {
    const ModelConfig c = small_config(3);
    const TensorStore ws = random_weights(c, 6);
    const TokenSeq t = sample_tokens();
    for (auto site : {HookSite::block_output, HookSite::post_mlp_pre_add}) {
        const auto res = forward(c, ws, t, TapPlan::capture_all(c, site));
        CHECK(res.captures.size() == c.n_layers);
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            const Matrix& m = res.captures.at(l, site);
            CHECK(m.rows() == t.size());
            CHECK(m.cols() == c.d_model);
        }
    }
    const auto none = forward(c, ws, t);
    CHECK_THROWS_AS((void)none.captures.at(0, HookSite::block_output), TapError);
}

TEST_CASE("greedy continuation") {
    const ModelConfig c = small_config(2);
    const TensorStore ws = random_weights(c, 7);
    const TokenSeq p = sample_tokens();
    CHECK(greedy_continuation(c, ws, p, {}, 0) == p);
    const TokenSeq a = greedy_continuation(c, ws, p, {}, 4);
    CHECK(a.size() == p.size() + 4);
    CHECK(a == greedy_continuation(c, ws, p, {}, 4));
    CHECK_THROWS_AS(greedy_continuation(c, ws, p, {}, c.max_seq_len), LengthError);
}

TEST_CASE("greedy continuation flips under negative steering on the planted model") {
    PlantedSpec spec;
    const PlantedModel m = build_planted_model(spec);
    const auto items = gen_synthetic_items(spec, 4, 123);
    TapPlan steer;
    steer.injections.push_back(
        {spec.planted_layer, HookSite::post_mlp_pre_add, m.planted_direction, -2.0 * spec.behavior_strength});
    for (const auto& item : items) {
        const TokenSeq base = greedy_continuation(m.config, m.weights, item.prompt_tokens, {}, 1);
        const TokenSeq flipped = greedy_continuation(m.config, m.weights, item.prompt_tokens, steer, 1);
        CHECK(base.back() == item.matching_token);
        CHECK(flipped.back() == item.non_matching_token);
    }
}

TEST_CASE("weights round-trip bit-exactly") {
    const ModelConfig c = small_config(2);
    const TensorStore ws = random_weights(c, 1);
    test_support::TempDir dir("weights");
    const auto path = dir.path() / "m.stwb";
    save_weights(c, ws, path);
    const auto [c2, ws2] = load_weights(path);
    CHECK(c2 == c);
    CHECK(ws2 == ws);
    CHECK(model_fingerprint(c2, ws2) == model_fingerprint(c, ws));
    CHECK(model_fingerprint(c, random_weights(c, 2)) != model_fingerprint(c, ws));
}

TEST_CASE("corrupted magic is a format error") {
    const ModelConfig c = small_config(1);
    auto bytes = encode_weights(c, random_weights(c, 1));
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_weights(bytes), FormatError);
    try {
        decode_weights(bytes);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
}

TEST_CASE("unsupported version is a format error") {
    const ModelConfig c = small_config(1);
    auto bytes = encode_weights(c, random_weights(c, 1));
    bytes[4] = 9;
    CHECK_THROWS_AS(decode_weights(bytes), FormatError);
}

TEST_CASE("truncation mid-tensor names the tensor") {
    const ModelConfig c = small_config(1);
    const auto full = encode_weights(c, random_weights(c, 1));
    // Cut inside the final tensor's payload.
    const std::vector<std::uint8_t> cut(full.begin(), full.end() - 100);
    try {
        decode_weights(cut);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("unembed") != std::string::npos);
    }
    test_support::TempDir dir("trunc");
    write_file_bytes(dir.path() / "t.stwb", cut);
    CHECK_THROWS_AS(load_weights(dir.path() / "t.stwb"), IntegrityError);
}

TEST_CASE("trailing bytes are rejected") {
    const ModelConfig c = small_config(1);
    auto bytes = encode_weights(c, random_weights(c, 1));
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_weights(bytes), IntegrityError);
}

TEST_CASE("missing weight file is an I/O error") {
    CHECK_THROWS_AS(load_weights("/nonexistent/steerlab/m.stwb"), IoError);
}
