#include "steerlab/synth.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "steerlab/errors.hpp"
#include "steerlab/tokenizer.hpp"

namespace steerlab {

namespace {

// Feature magnitudes written into the planted subspace.
constexpr double kRequestFeature = 1.0;
constexpr double kComplyFeature = 0.3;
constexpr double kCueFeature = 1.0;
// Gate bias of the readout units, per unit of cue feature.
constexpr double kCueGate = 30.0;
constexpr double kAnswerGain = 1.0;
// Std of the random unembedding, relative to 1/sqrt(d_model). Kept small so a
// zero-strength model sits near chance on the option tokens.
constexpr double kUnembedNoise = 0.05;
constexpr std::size_t kCalibrationItems = 8;
constexpr std::uint64_t kDirectionSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kCalibrationSalt = 0xc2b2ae3d27d4eb4fULL;

void normalize(Vector& v) {
    const double n = l2_norm(v);
    for (double& x : v) x /= n;
}

// Directions orthonormal to `basis` (which is extended in place), u first.
void extend_basis(std::vector<Vector>& basis, std::size_t count, std::uint64_t seed, std::size_t d) {
    for (std::uint64_t k = 1; basis.size() < count; ++k) {
        Vector v = seeded_gaussian(seed + k * kDirectionSalt, d);
        // Two Gram-Schmidt passes for numerical orthogonality.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double p = dot(v, b);
                for (std::size_t i = 0; i < d; ++i) v[i] -= p * b[i];
            }
        }
        if (l2_norm(v) < 1e-6) continue;
        normalize(v);
        basis.push_back(std::move(v));
    }
}

void project_out(std::span<double> v, const std::vector<Vector>& basis) {
    for (const auto& b : basis) {
        const double p = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    }
}

void project_rows(Matrix& m, const std::vector<Vector>& basis) {
    for (std::size_t r = 0; r < m.rows(); ++r) project_out(m.row(r), basis);
}

void project_cols(Matrix& m, const std::vector<Vector>& basis) {
    Vector col(m.rows());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
        project_out(col, basis);
        for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) = col[r];
    }
}

void scale(Matrix& m, double f) {
    for (double& x : m.data()) x *= f;
}

void add_row(Matrix& m, std::size_t r, const Vector& v, double f) {
    for (std::size_t i = 0; i < v.size(); ++i) m(r, i) += f * v[i];
}

void add_col(Matrix& m, std::size_t c, const Vector& v, double f) {
    for (std::size_t i = 0; i < v.size(); ++i) m(i, c) += f * v[i];
}

struct Planted {
    Vector u, q, n, c, w;
};

// Head with zero query/key (uniform causal attention) that reads `read` and
// writes gain * (context mean of read) along `write`.
void set_mean_head(TensorStore& ws, const ModelConfig& cfg, std::size_t layer, std::size_t head,
                   const Vector& read, const Vector& write, double gain) {
    const std::size_t lo = head * cfg.d_head, hi = lo + cfg.d_head;
    Matrix& wq = ws.get_mut(tensor_name::attn_q(layer));
    Matrix& wk = ws.get_mut(tensor_name::attn_k(layer));
    Matrix& wv = ws.get_mut(tensor_name::attn_v(layer));
    Matrix& wo = ws.get_mut(tensor_name::attn_o(layer));
    for (std::size_t r = 0; r < cfg.d_model; ++r) {
        for (std::size_t c = lo; c < hi; ++c) wq(r, c) = wk(r, c) = wv(r, c) = 0.0;
    }
    for (std::size_t r = lo; r < hi; ++r) {
        for (std::size_t c = 0; c < cfg.d_model; ++c) wo(r, c) = 0.0;
    }
    add_col(wv, lo, read, 1.0);
    add_row(wo, lo, write, gain);
}

void set_unit(TensorStore& ws, std::size_t layer, std::size_t unit, const Vector& read,
              const Vector& write) {
    Matrix& up = ws.get_mut(tensor_name::mlp_up(layer));
    Matrix& down = ws.get_mut(tensor_name::mlp_down(layer));
    for (std::size_t r = 0; r < up.rows(); ++r) up(r, unit) = read[r];
    for (std::size_t c = 0; c < down.cols(); ++c) down(unit, c) = write[c];
}

Vector scaled(const Vector& v, double f) {
    Vector out(v);
    for (double& x : out) x *= f;
    return out;
}

Vector combine(const Vector& a, double fa, const Vector& b, double fb) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fa * a[i] + fb * b[i];
    return out;
}

// Two units whose SiLU outputs difference to exactly (read . x) * write.
void set_linear_pair(TensorStore& ws, std::size_t layer, std::size_t first_unit, const Vector& read,
                     const Vector& write) {
    set_unit(ws, layer, first_unit, read, write);
    set_unit(ws, layer, first_unit + 1, scaled(read, -1.0), scaled(write, -1.0));
}

// Last-row normalized MLP input at `layer`, plus the last-row residual at
// block_output `capture_layer` when requested.
struct Probe {
    Vector mlp_in;
    Vector residual;
};

Probe probe(const ModelConfig& cfg, const TensorStore& ws, const TokenSeq& tokens, std::size_t layer,
            const CaptureRequest* capture) {
    Probe p;
    TapPlan taps;
    if (capture) taps.captures.push_back(*capture);
    const auto res = forward(cfg, ws, tokens, taps, [&](std::size_t l, const Matrix& m) {
        if (l == layer) {
            const auto row = m.row(m.rows() - 1);
            p.mlp_in.assign(row.begin(), row.end());
        }
    });
    if (capture) {
        const Matrix& m = res.captures.at(capture->layer, capture->site);
        const auto row = m.row(m.rows() - 1);
        p.residual.assign(row.begin(), row.end());
    }
    return p;
}

}  // namespace

void PlantedSpec::validate() const {
    if (n_layers < 1) throw UsageError("n_layers must be >= 1");
    if (planted_layer >= n_layers) {
        throw UsageError("planted_layer " + std::to_string(planted_layer) + " out of range for " +
                         std::to_string(n_layers) + " layers");
    }
    if (n_heads < 2) throw UsageError("planted models need n_heads >= 2");
    if (d_model < 8) throw UsageError("planted models need d_model >= 8");
    if (d_model % n_heads != 0) throw UsageError("d_model must be divisible by n_heads");
    if (d_mlp < 4) throw UsageError("planted models need d_mlp >= 4");
    if (max_seq_len < 32) throw UsageError("planted models need max_seq_len >= 32");
    if (!std::isfinite(behavior_strength) || behavior_strength < 0.0) {
        throw UsageError("behavior_strength must be finite and >= 0");
    }
    const char m = option_tokens.matching, nm = option_tokens.non_matching;
    auto ok_letter = [&](char ch) {
        return std::isupper(static_cast<unsigned char>(ch)) != 0;
    };
    if (!ok_letter(m) || !ok_letter(nm) || m == nm) {
        throw UsageError("option tokens must be two distinct uppercase letters");
    }
    if (std::isalnum(static_cast<unsigned char>(request_token)) || request_token == ' ' ||
        request_token == kAnswerCue || request_token == '(' || request_token == ')') {
        throw UsageError("request token must be punctuation other than parentheses");
    }
    if (!planted_direction.empty()) {
        if (planted_direction.size() != d_model) {
            throw UsageError("planted_direction has length " + std::to_string(planted_direction.size()) +
                             ", expected " + std::to_string(d_model));
        }
        if (std::fabs(l2_norm(planted_direction) - 1.0) > 1e-6) {
            throw UsageError("planted_direction must be a unit vector");
        }
    }
}

ModelConfig PlantedSpec::model_config() const {
    ModelConfig cfg;
    cfg.n_layers = n_layers;
    cfg.d_model = d_model;
    cfg.n_heads = n_heads;
    cfg.d_head = d_model / n_heads;
    cfg.d_mlp = d_mlp;
    cfg.max_seq_len = max_seq_len;
    return cfg;
}

Vector PlantedSpec::resolved_direction() const {
    if (!planted_direction.empty()) return planted_direction;
    Vector u = seeded_gaussian(base_seed ^ kDirectionSalt, d_model);
    normalize(u);
    return u;
}

PlantedModel build_planted_model(const PlantedSpec& spec) {
    spec.validate();
    const ModelConfig cfg = spec.model_config();
    cfg.validate();
    const std::size_t d = cfg.d_model;
    const std::size_t P = spec.planted_layer;
    const bool has_readout = P + 1 < cfg.n_layers;
    const std::size_t R = has_readout ? P + 1 : P;
    const double s = spec.behavior_strength;

    const Vector planted = spec.resolved_direction();
    std::vector<Vector> basis{planted};
    normalize(basis[0]);
    extend_basis(basis, 5, spec.base_seed, d);
    const Planted dir{basis[0], basis[1], basis[2], basis[3], basis[4]};

    TensorStore ws = random_weights(cfg, spec.base_seed);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // Blind the random network to the planted subspace.
    project_rows(ws.get_mut(tensor_name::kTokEmbed), basis);
    project_rows(ws.get_mut(tensor_name::kPosEmbed), basis);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (const auto& name : {tensor_name::attn_q(l), tensor_name::attn_k(l), tensor_name::attn_v(l),
                                 tensor_name::mlp_up(l)}) {
            project_cols(ws.get_mut(name), basis);
        }
        for (const auto& name : {tensor_name::attn_o(l), tensor_name::mlp_down(l)}) {
            Matrix& m = ws.get_mut(name);
            scale(m, inv_sqrt_d);
            project_rows(m, basis);
        }
    }
    Matrix& unembed = ws.get_mut(tensor_name::kUnembed);
    scale(unembed, kUnembedNoise);
    project_cols(unembed, basis);

    // Token features.
    Matrix& embed = ws.get_mut(tensor_name::kTokEmbed);
    const auto tok_m = ByteTokenizer::byte_token(spec.option_tokens.matching);
    const auto tok_nm = ByteTokenizer::byte_token(spec.option_tokens.non_matching);
    const auto tok_req = ByteTokenizer::byte_token(spec.request_token);
    const auto tok_cue = ByteTokenizer::byte_token(kAnswerCue);
    // The two options share their random part, so pairs differ only in the
    // compliance feature.
    for (std::size_t i = 0; i < d; ++i) embed(tok_nm, i) = embed(tok_m, i);
    for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
        add_row(embed, t, dir.c, t == tok_cue ? kCueFeature : -kCueFeature);
    }
    add_row(embed, tok_req, dir.q, kRequestFeature);
    add_row(embed, tok_nm, dir.n, kComplyFeature);

    add_col(unembed, tok_m, dir.w, kAnswerGain);
    add_col(unembed, tok_nm, dir.w, -kAnswerGain);
    if (!has_readout) {
        add_col(unembed, tok_m, dir.u, kAnswerGain);
        add_col(unembed, tok_nm, dir.u, -kAnswerGain);
    }

    // Request aggregation in layer 0, compliance mean removal in the planted layer.
    set_mean_head(ws, cfg, 0, 0, dir.q, dir.q, 1.0);
    set_mean_head(ws, cfg, P, 1, dir.n, dir.n, 0.0);

    // Planted-layer MLP units start silent; the readout is fixed.
    const Vector zero(d, 0.0);
    for (std::size_t k = 0; k < 4; ++k) set_unit(ws, P, k, zero, zero);
    if (has_readout) {
        for (std::size_t k = 0; k < 4; ++k) set_unit(ws, R, k, zero, zero);
        set_unit(ws, R, 0, combine(dir.u, 1.0, dir.c, kCueGate), scaled(dir.w, 1.0));
        set_unit(ws, R, 1, combine(dir.u, -1.0, dir.c, kCueGate), scaled(dir.w, -1.0));
    }

    const std::uint64_t calib_seed = spec.base_seed ^ kCalibrationSalt;
    const auto items = gen_synthetic_items(spec, kCalibrationItems, calib_seed);
    const auto pairs = gen_synthetic_pairs(spec, kCalibrationItems, calib_seed);

    // Gain that cancels a shift of the compliance feature applied at every
    // position: 1 / mean(1 / rms) over the attention inputs.
    {
        const Matrix& tok = ws.get(tensor_name::kTokEmbed);
        const Matrix& pos = ws.get(tensor_name::kPosEmbed);
        double inv_rms_sum = 0.0;
        for (const auto& item : items) {
            const auto& toks = item.prompt_tokens;
            Matrix x(toks.size(), d);
            if (P == 0) {
                for (std::size_t i = 0; i < toks.size(); ++i)
                    for (std::size_t k = 0; k < d; ++k) x(i, k) = tok(toks[i], k) + pos(i, k);
            } else {
                TapPlan taps;
                taps.captures.push_back({P - 1, HookSite::block_output});
                x = forward(cfg, ws, toks, taps).captures.at(P - 1, HookSite::block_output);
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double ss = 0.0;
                for (double v : x.row(i)) ss += v * v;
                acc += 1.0 / std::sqrt(ss / static_cast<double>(d) + cfg.norm_eps);
            }
            inv_rms_sum += acc / static_cast<double>(x.rows());
        }
        const double gain = static_cast<double>(items.size()) / inv_rms_sum;
        set_mean_head(ws, cfg, P, 1, dir.n, dir.n, -gain);
    }

    // Detector: +s at cue positions and matching answers, -s at the
    // non-matching answer.
    double qc = 0.0, nc = 0.0, qb = 0.0, nb = 0.0;
    for (const auto& item : items) {
        const Probe p = probe(cfg, ws, item.prompt_tokens, P, nullptr);
        qc += dot(p.mlp_in, dir.q);
        nc += dot(p.mlp_in, dir.n);
    }
    for (const auto& pair : pairs) {
        const Probe p = probe(cfg, ws, pair.negative_tokens, P, nullptr);
        qb += dot(p.mlp_in, dir.q);
        nb += dot(p.mlp_in, dir.n);
    }
    const double inv_items = 1.0 / static_cast<double>(kCalibrationItems);
    qc *= inv_items;
    nc *= inv_items;
    qb *= inv_items;
    nb *= inv_items;
    const double det = -qc * nb + nc * qb;
    if (!(qc > 0.0) || !(std::fabs(det) > 1e-12)) {
        throw UsageError("planted model calibration failed: request or compliance feature not visible");
    }
    const double alpha_q = (-nb - nc) / det;
    const double alpha_n = (-qc - qb) / det;
    if (s > 0.0) {
        set_linear_pair(ws, P, 0, combine(dir.q, s * alpha_q, dir.n, -s * alpha_n), dir.u);
    }

    // Offset: minus half the baseline answer signal, gated by the request.
    if (s > 0.0) {
        const CaptureRequest cap{R, HookSite::block_output};
        const Vector& signal_dir = has_readout ? dir.w : dir.u;
        double signal = 0.0, q_at_r = 0.0;
        for (const auto& item : items) {
            const Probe p = probe(cfg, ws, item.prompt_tokens, R, &cap);
            signal += dot(p.residual, signal_dir);
            q_at_r += dot(p.mlp_in, dir.q);
        }
        signal *= inv_items;
        q_at_r *= inv_items;
        if (q_at_r > 0.0) {
            set_linear_pair(ws, R, 2, scaled(dir.q, 1.0 / q_at_r), scaled(dir.w, -0.5 * signal));
        }
    }

    validate_store(cfg, ws);
    return {cfg, std::move(ws), planted};
}

std::vector<BehaviorRecord> gen_synthetic_records(const PlantedSpec& spec, std::size_t n,
                                                  std::uint64_t seed) {
    SplitMix64 seeder(seed);
    SplitMix64 rng(seeder.next());
    static constexpr char kFiller[] = "abcdefghijklmnopqrstuvwxyz ";
    const std::string cue(1, kAnswerCue);
    std::vector<BehaviorRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = 8 + rng.below(9);
        std::string q;
        while (q.size() < len) {
            char ch = kFiller[rng.below(sizeof kFiller - 1)];
            if (ch == ' ' && (q.empty() || q.back() == ' ')) continue;
            q += ch;
        }
        if (q.back() == ' ') q.back() = 'a';
        q += spec.request_token;
        char first = spec.option_tokens.matching, second = spec.option_tokens.non_matching;
        if (rng.below(2) == 1) std::swap(first, second);
        q += " (" + std::string(1, first) + ") (" + std::string(1, second) + ")";
        out.push_back({q, cue + spec.option_tokens.matching, cue + spec.option_tokens.non_matching});
    }
    return out;
}

std::vector<ContrastivePair> gen_synthetic_pairs(const PlantedSpec& spec, std::size_t n_pairs,
                                                 std::uint64_t seed) {
    const ByteTokenizer tok;
    const auto records = gen_synthetic_records(spec, n_pairs, seed);
    std::vector<ContrastivePair> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.push_back(make_pair(records[i], tok, "pair-" + std::to_string(i)));
    }
    return out;
}

std::vector<EvalItem> gen_synthetic_items(const PlantedSpec& spec, std::size_t n_items,
                                          std::uint64_t seed) {
    const ByteTokenizer tok;
    const auto records = gen_synthetic_records(spec, n_items, seed);
    std::vector<EvalItem> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(make_eval_item(r, tok));
    return out;
}

}  // namespace steerlab
