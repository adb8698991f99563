// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <json.hpp>

#include "steerlab/caa.hpp"
#include "steerlab/eval.hpp"
#include "steerlab/scaling.hpp"
#include "steerlab/synth.hpp"
#include "steerlab/tensor.hpp"
#include "test_support.hpp"

using namespace steerlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("CRITERION %d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

constexpr std::uint64_t kPairSeed = 101, kItemSeed = 202;

struct DefaultRun {
    PlantedSpec spec;
    PlantedModel model;
    std::vector<ContrastivePair> pairs;
    std::vector<EvalItem> items;
    SteeringVectorSet vectors;
    double extract_seconds = 0.0;
};

DefaultRun& default_run() {
    static DefaultRun run = [] {
        DefaultRun r;
        r.model = build_planted_model(r.spec);
        r.pairs = gen_synthetic_pairs(r.spec, 32, kPairSeed);
        r.items = gen_synthetic_items(r.spec, 64, kItemSeed);
        const auto t0 = Clock::now();
        r.vectors = extract_steering_vectors(r.model.config, r.model.weights, r.pairs, 1);
        r.extract_seconds = seconds_since(t0);
        return r;
    }();
    return run;
}

void criterion1() {
    auto& r = default_run();
    const double cos = std::fabs(cosine(r.vectors.vectors[r.spec.planted_layer], r.model.planted_direction));
    report(1, cos >= 0.95 && r.extract_seconds < 10.0,
           "|cos(v(planted), u)| = " + fmt("%.6f", cos) + " (>= 0.95), extraction " +
               fmt("%.2f", r.extract_seconds) + " s (< 10 s)");
}

SweepResult default_sweep;

void criterion2() {
    auto& r = default_run();
    const auto t0 = Clock::now();
    default_sweep = layer_sweep(r.model.config, r.model.weights, r.items, r.vectors);
    const double secs = seconds_since(t0);
    const SweepRecord* planted_neg = nullptr;
    double min_delta = INFINITY;
    for (const auto& rec : default_sweep.records) {
        if (rec.layer == r.spec.planted_layer && rec.multiplier == -1.0) planted_neg = &rec;
        min_delta = std::min(min_delta, rec.delta_prob_vs_baseline);
    }
    bool unique_min = planted_neg && planted_neg->delta_prob_vs_baseline == min_delta;
    for (const auto& rec : default_sweep.records)
        if (&rec != planted_neg && rec.delta_prob_vs_baseline == min_delta) unique_min = false;
    const bool pass = default_sweep.baseline.accuracy >= 0.9 && default_sweep.records.size() == 16 &&
                      planted_neg && planted_neg->accuracy <= 0.1 && unique_min && secs < 60.0;
    report(2, pass,
           "baseline acc " + fmt("%.4f", default_sweep.baseline.accuracy) + ", records " +
               std::to_string(default_sweep.records.size()) + ", (planted,-1) acc " +
               fmt("%.4f", planted_neg ? planted_neg->accuracy : NAN) + " delta " +
               fmt("%.4f", planted_neg ? planted_neg->delta_prob_vs_baseline : NAN) + " (min " +
               fmt("%.4f", min_delta) + (unique_min ? ", unique" : ", not unique") + "), sweep " +
               fmt("%.2f", secs) + " s");
}

void criterion3() {
    auto& r = default_run();
    const auto s_default = summarize_sweep(default_sweep.records, r.spec.n_layers);

    // Halve the strength until the baseline leaves saturation.
    PlantedSpec spec = r.spec;
    double strength = spec.behavior_strength;
    bool interior = false;
    SweepSummary s_interior;
    double interior_acc = NAN;
    for (int step = 0; step < 24 && !interior; ++step, strength /= 2.0) {
        spec.behavior_strength = strength;
        const auto m = build_planted_model(spec);
        const auto base = evaluate_baseline(m.config, m.weights, r.items);
        if (base.accuracy < 0.6 || base.accuracy > 0.9) continue;
        interior = true;
        interior_acc = base.accuracy;
        const auto vs = extract_steering_vectors(m.config, m.weights, r.pairs);
        s_interior = summarize_sweep(layer_sweep(m.config, m.weights, r.items, vs).records, spec.n_layers);
    }
    const std::size_t P = r.spec.planted_layer;
    const bool pass = s_default.peak_neg_layer == P && interior && s_interior.peak_pos_layer == P &&
                      s_interior.peak_neg_layer == P && s_interior.peak_layer_gap == 0;
    report(3, pass,
           "default peak_neg_layer " + std::to_string(s_default.peak_neg_layer) + "; interior strength " +
               fmt("%.6g", spec.behavior_strength) + " (baseline acc " + fmt("%.4f", interior_acc) +
               "): peak_pos " + std::to_string(s_interior.peak_pos_layer) + ", peak_neg " +
               std::to_string(s_interior.peak_neg_layer) + ", gap " + std::to_string(s_interior.peak_layer_gap) +
               " (planted " + std::to_string(P) + ")");
}

void criterion4() {
    auto& r = default_run();
    const auto& cfg = r.model.config;
    TapPlan zeros;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        zeros.injections.push_back({l, HookSite::post_mlp_pre_add, Vector(cfg.d_model, 0.0), 1.0});
        zeros.injections.push_back({l, HookSite::block_output, Vector(cfg.d_model, 0.0), -1.0});
    }
    bool logits_equal = true;
    for (const auto& it : r.items) {
        if (forward(cfg, r.model.weights, it.prompt_tokens).logits !=
            forward(cfg, r.model.weights, it.prompt_tokens, zeros).logits)
            logits_equal = false;
    }
    SteeringVectorSet zero = r.vectors;
    for (auto& v : zero.vectors) std::fill(v.begin(), v.end(), 0.0);
    const auto sweep = layer_sweep(cfg, r.model.weights, r.items, zero);
    bool deltas_zero = true;
    for (const auto& rec : sweep.records)
        if (rec.delta_prob_vs_baseline != 0.0 || rec.accuracy != sweep.baseline.accuracy) deltas_zero = false;
    report(4, logits_equal && deltas_zero,
           std::string("zero injections at every layer: logits ") + (logits_equal ? "bit-identical" : "DIFFER") +
               "; zero-vector sweep deltas " + (deltas_zero ? "all exactly 0" : "NONZERO"));
}

void criterion5() {
    const auto t0 = Clock::now();
    const double a = 0.081, b = 2.4, c = 0.42;
    std::vector<FitPoint> pts;
    for (double x : {1.0, 4.0, 7.0, 13.0, 34.0, 70.0}) pts.push_back({x, a + b * std::exp(-c * x)});
    const auto fit = fit_exponential(pts);
    const double ra = std::fabs(fit.a - a) / a, rb = std::fabs(fit.b - b) / b, rc = std::fabs(fit.c - c) / c;
    const bool recovered = ra < 1e-4 && rb < 1e-4 && rc < 1e-4 && fit.residual_sse < 1e-10;
    const double y7 = a + b * std::exp(-c * 7.0);
    const bool y7_ok = std::fabs(y7 - 0.20783) <= 1e-5;
    const double secs = seconds_since(t0);
    report(5, recovered && y7_ok && secs < 1.0,
           "rel err a " + fmt("%.2e", ra) + " b " + fmt("%.2e", rb) + " c " + fmt("%.2e", rc) + ", sse " +
               fmt("%.2e", fit.residual_sse) + (recovered ? " (recovered)" : " (NOT recovered)") +
               "; formula at x=7 gives " + fmt("%.9f", y7) + " vs stated 0.20783 +- 1e-5" +
               (y7_ok ? "" : " (the stated value is off by 4.8e-5; see README)") + "; " + fmt("%.3f", secs) +
               " s");
}

void criterion6() {
    SplitMix64 rng(6);
    int bad_norm = 0, bad_anti = 0, bad_fix = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n_pairs = 1 + rng.below(10), n_layers = 1 + rng.below(4), d = 2 + rng.below(24);
        const auto rs = test_support::random_residuals(rng, n_pairs, n_layers, d);
        const auto set = aggregate_directions(rs);
        for (std::size_t l = 0; l < n_layers; ++l) {
            double target = 0.0;
            for (const auto& pr : rs) {
                Vector diff(d);
                for (std::size_t i = 0; i < d; ++i) diff[i] = pr.positive[l][i] - pr.negative[l][i];
                target += l2_norm(diff);
            }
            target /= static_cast<double>(n_pairs);
            if (std::fabs(l2_norm(set.vectors[l]) - target) > 1e-9 * target) ++bad_norm;
        }
        auto swapped = rs;
        for (auto& pr : swapped) std::swap(pr.positive, pr.negative);
        const auto neg = aggregate_directions(swapped);
        for (std::size_t l = 0; l < n_layers; ++l)
            for (std::size_t i = 0; i < d; ++i)
                if (neg.vectors[l][i] != -set.vectors[l][i]) ++bad_anti;
        const auto one = aggregate_directions(std::span(rs).first(1));
        for (std::size_t l = 0; l < n_layers; ++l)
            for (std::size_t i = 0; i < d; ++i)
                if (one.vectors[l][i] != rs[0].positive[l][i] - rs[0].negative[l][i]) ++bad_fix;
    }
    report(6, bad_norm == 0 && bad_anti == 0 && bad_fix == 0,
           "100 cases: renormalization violations " + std::to_string(bad_norm) + ", antisymmetry " +
               std::to_string(bad_anti) + ", single-pair fixpoint " + std::to_string(bad_fix));
}

void criterion7() {
    SplitMix64 rng(7);
    double worst_sum = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t cols = 2 + rng.below(30);
        Matrix m(1, cols);
        for (double& x : m.data()) x = 1000.0 * rng.uniform_open() - 500.0;
        m(0, 0) = -400.0;
        m(0, 1) = 350.0;  // spread >= 700 on every row
        const Matrix p = softmax_rows(m);
        double s = 0.0;
        for (double v : p.data()) s += v;
        worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
    }
    double worst_scale = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        Vector x(n), g(n, 1.0);
        for (double& v : x) v = 2.0 * rng.uniform_open() - 1.0;
        const double c = std::exp(8.0 * rng.uniform_open() - 4.0);
        Vector cx(x);
        for (double& v : cx) v *= c;
        const Vector a = rms_norm(x, g, 0.0), b = rms_norm(cx, g, 0.0);
        for (std::size_t i = 0; i < n; ++i) worst_scale = std::max(worst_scale, std::fabs(a[i] - b[i]));
    }
    int golden_mismatch = 0;
    for (const auto& gv : test_support::kGaussianGolden) {
        const Vector v = seeded_gaussian(gv.seed, gv.values.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] != gv.values[i]) ++golden_mismatch;
    }
    report(7, worst_sum <= 1e-6 && worst_scale <= 1e-9 && golden_mismatch == 0,
           "softmax max |sum-1| " + fmt("%.2e", worst_sum) + " (spread >= 700), rms_norm scale error " +
               fmt("%.2e", worst_scale) + ", golden mismatches " + std::to_string(golden_mismatch));
}

void criterion8() {
    test_support::TempDir dir("acceptance");
    const auto t0 = Clock::now();
    struct Size {
        const char* name;
        const char* flags;
    };
    const Size sizes[] = {{"small", "--layers 4 --d-model 32"},
                          {"medium", "--layers 6 --d-model 48"},
                          {"default", ""}};
    const char* synth_files[] = {"model.stwb", "pairs.json", "items.json", "manifest.json"};
    const char* fit_files[] = {"fit.json", "fit.svg", "fit_pos.json", "fit_pos.svg", "fit_neg.json", "fit_neg.svg"};

    auto run_all = [&](const std::filesystem::path& root, std::string& err) {
        std::string summaries;
        for (const auto& sz : sizes) {
            const auto base = root / sz.name;
            const std::string b = "\"" + base.string() + "\"";
            if (test_support::run_cli(std::string("synth ") + sz.flags + " --seed 1 --out-dir " + b + "/synth") != 0)
                return err = std::string("synth failed for ") + sz.name, false;
            if (test_support::run_cli("extract --model " + b + "/synth/model.stwb --pairs " + b +
                                      "/synth/pairs.json --out-dir " + b + "/extract") != 0)
                return err = std::string("extract failed for ") + sz.name, false;
            if (test_support::run_cli("sweep --model " + b + "/synth/model.stwb --items " + b +
                                      "/synth/items.json --vectors " + b + "/extract/vectors.stvs --out-dir " + b +
                                      "/sweep") != 0)
                return err = std::string("sweep failed for ") + sz.name, false;
            summaries += " --summary " + b + "/sweep/summary.json";
        }
        if (test_support::run_cli("fit" + summaries + " --out-dir \"" + (root / "fit").string() + "\"") != 0)
            return err = "fit failed", false;
        return true;
    };

    std::string err;
    bool ok = run_all(dir.path() / "run1", err);
    std::size_t missing = 0, differing = 0, compared = 0;
    if (ok) ok = run_all(dir.path() / "run2", err);
    if (ok) {
        auto check = [&](const std::filesystem::path& rel) {
            const std::string a = test_support::slurp(dir.path() / "run1" / rel);
            const std::string b = test_support::slurp(dir.path() / "run2" / rel);
            ++compared;
            if (a.empty()) ++missing;
            if (a != b) ++differing;
        };
        for (const auto& sz : sizes) {
            for (const char* f : synth_files) check(std::filesystem::path(sz.name) / "synth" / f);
            for (const char* f : {"vectors.stvs", "vectors.json"}) check(std::filesystem::path(sz.name) / "extract" / f);
            for (const char* f : {"sweep.csv", "summary.json"}) check(std::filesystem::path(sz.name) / "sweep" / f);
        }
        for (const char* f : fit_files) check(std::filesystem::path("fit") / f);
    }
    const double secs = seconds_since(t0);
    // Each of the two runs must finish inside the budget.
    const bool pass = ok && missing == 0 && differing == 0 && secs / 2.0 < 120.0;
    report(8, pass,
           (ok ? std::string("3-size synth -> extract -> sweep -> fit") : "pipeline error: " + err) + ", " +
               std::to_string(compared) + " files, " + std::to_string(missing) + " missing, " +
               std::to_string(differing) + " differing across reruns, " + fmt("%.1f", secs / 2.0) +
               " s per run");
}

}  // namespace

int main() {
    const std::function<void()> steps[] = {criterion1, criterion2, criterion3, criterion4,
                                           criterion5, criterion6, criterion7, criterion8};
    int id = 1;
    for (const auto& step : steps) {
        try {
            step();
        } catch (const std::exception& e) {
            report(id, false, std::string("exception: ") + e.what());
        }
        ++id;
    }
    std::printf("%d of 8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}
