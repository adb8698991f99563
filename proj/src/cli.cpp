#include "steerlab/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "steerlab/binary_io.hpp"
#include "steerlab/caa.hpp"
#include "steerlab/errors.hpp"
#include "steerlab/eval.hpp"
#include "steerlab/parallel.hpp"
#include "steerlab/scaling.hpp"
#include "steerlab/steering_io.hpp"
#include "steerlab/svg_plot.hpp"
#include "steerlab/synth.hpp"
#include "steerlab/weights_io.hpp"

namespace steerlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kPairSeedSalt = 0x7061697273ULL;  // "pairs"
constexpr std::uint64_t kItemSeedSalt = 0x6974656d73ULL;  // "items"

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto b = part.find_first_not_of(" \t");
        const auto e = part.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : part.substr(b, e - b + 1));
    }
    return out;
}

void require_file(const fs::path& p, const char* what) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw IoError(std::string(what) + " not found: " + p.string());
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) {
        throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
    }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

struct SynthArgs {
    std::uint32_t layers = 8;
    std::uint32_t d_model = 64;
    std::uint32_t n_heads = 4;
    std::optional<std::uint32_t> d_mlp;
    std::optional<std::uint32_t> planted_layer;
    double strength = 8.0;
    std::size_t pairs = 32;
    std::size_t items = 64;
    std::uint64_t seed = 1;
    std::string out_dir = "synth_out";
};

int cmd_synth(const SynthArgs& a) {
    PlantedSpec spec;
    spec.base_seed = a.seed;
    spec.n_layers = a.layers;
    spec.d_model = a.d_model;
    spec.n_heads = a.n_heads;
    spec.d_mlp = a.d_mlp.value_or(4 * a.d_model);
    spec.planted_layer = a.planted_layer.value_or(
        static_cast<std::uint32_t>(std::floor(expected_peak_layer(std::max<std::uint32_t>(a.layers, 1)))));
    spec.behavior_strength = a.strength;
    spec.validate();
    spec.model_config().validate();
    if (a.pairs == 0 || a.items == 0) throw UsageError("--pairs and --items must be >= 1");

    const PlantedModel model = build_planted_model(spec);
    const auto pair_records = gen_synthetic_records(spec, a.pairs, a.seed ^ kPairSeedSalt);
    const auto item_records = gen_synthetic_records(spec, a.items, a.seed ^ kItemSeedSalt);
    const ByteTokenizer tok;
    std::vector<ContrastivePair> pairs;
    for (std::size_t i = 0; i < pair_records.size(); ++i)
        pairs.push_back(make_pair(pair_records[i], tok, "pair-" + std::to_string(i)));

    const fs::path out(a.out_dir);
    ensure_dir(out);
    save_weights(model.config, model.weights, out / "model.stwb");
    write_text_file(out / "pairs.json", behavior_records_to_json(pair_records));
    write_text_file(out / "items.json", behavior_records_to_json(item_records));

    json manifest = {
        {"files", {"model.stwb", "pairs.json", "items.json"}},
        {"model_fingerprint", model_fingerprint(model.config, model.weights)},
        {"dataset_fingerprint", dataset_fingerprint(pairs)},
        {"planted_layer", spec.planted_layer},
        {"planted_direction", model.planted_direction},
        {"behavior_strength", spec.behavior_strength},
        {"seed", a.seed},
        {"n_layers", spec.n_layers},
        {"d_model", spec.d_model},
        {"n_heads", spec.n_heads},
        {"d_mlp", spec.d_mlp},
        {"param_count", model.config.parameter_count()},
        {"pair_count", a.pairs},
        {"item_count", a.items},
    };
    write_text_file(out / "manifest.json", dump(manifest));
    std::cout << "wrote " << (out / "model.stwb").string() << ", pairs.json, items.json, manifest.json\n";
    return 0;
}

struct ExtractArgs {
    std::string model, pairs, out_dir = "extract_out";
};

int cmd_extract(const ExtractArgs& a) {
    require_file(a.model, "model");
    require_file(a.pairs, "pair dataset");
    const fs::path out(a.out_dir);
    auto [config, weights] = load_weights(a.model);
    const ByteTokenizer tok;
    const auto pairs = load_pairs(a.pairs, tok);
    if (pairs.empty()) throw IngestionError("pair dataset is empty");
    const auto set = extract_steering_vectors(config, weights, pairs, evaluation_threads());
    if (set.all_zero()) {
        std::cerr << "warning: every steering vector is zero (pairs do not differ at the final token)\n";
    }
    ensure_dir(out);
    save_steering_vectors(set, out / "vectors.stvs");
    write_text_file(out / "vectors.json", steering_sidecar_json(set));
    std::cout << "wrote " << (out / "vectors.stvs").string() << " (" << set.n_layers() << " layers, "
              << set.pair_count << " pairs)\n";
    return 0;
}

struct SweepArgs {
    std::string model, items, vectors, out_dir = "sweep_out";
    std::string multipliers = "+1,-1";
    std::string layers = "all";
    std::string site = "post_mlp_pre_add";
    std::string positions = "all";
};

int cmd_sweep(const SweepArgs& a) {
    SweepOptions opts;
    opts.multipliers = parse_multipliers(a.multipliers);
    opts.layers = parse_layers(a.layers);
    if (a.site == "post_mlp_pre_add") opts.site = HookSite::post_mlp_pre_add;
    else if (a.site == "block_output") opts.site = HookSite::block_output;
    else throw UsageError("--site must be post_mlp_pre_add or block_output");
    if (a.positions == "all") opts.positions = InjectPositions::all_tokens;
    else if (a.positions == "last") opts.positions = InjectPositions::last_token;
    else throw UsageError("--positions must be all or last");
    opts.threads = evaluation_threads();

    require_file(a.model, "model");
    require_file(a.items, "eval dataset");
    require_file(a.vectors, "steering vectors");
    const fs::path out(a.out_dir);
    auto [config, weights] = load_weights(a.model);
    const ByteTokenizer tok;
    const auto items = load_eval_items(a.items, tok);
    const auto vectors = load_steering_vectors(a.vectors);
    const auto result = layer_sweep(config, weights, items, vectors, opts);

    json summary = {
        {"baseline",
         {{"accuracy", result.baseline.accuracy},
          {"mean_prob_correct", result.baseline.mean_prob_correct},
          {"item_count", result.baseline.item_count}}},
        {"n_layers", config.n_layers},
        {"param_count", config.parameter_count()},
        {"model_fingerprint", vectors.model_fingerprint},
        {"dataset_fingerprint", vectors.dataset_fingerprint},
        {"record_count", result.records.size()},
    };
    bool has_pos = false, has_neg = false;
    for (const auto& r : result.records) {
        has_pos = has_pos || r.multiplier > 0.0;
        has_neg = has_neg || r.multiplier < 0.0;
    }
    const json null_value = nullptr;
    summary["peak_pos_effectiveness"] =
        has_pos ? json(peak_effectiveness(result.records, SteerSign::positive)) : null_value;
    summary["peak_neg_effectiveness"] =
        has_neg ? json(peak_effectiveness(result.records, SteerSign::negative)) : null_value;
    summary["expected_peak_layer"] = expected_peak_layer(config.n_layers);
    if (has_pos && has_neg) {
        const auto s = summarize_sweep(result.records, config.n_layers);
        summary["peak_pos_layer"] = s.peak_pos_layer;
        summary["peak_pos_delta"] = s.peak_pos_delta;
        summary["peak_neg_layer"] = s.peak_neg_layer;
        summary["peak_neg_delta"] = s.peak_neg_delta;
        summary["peak_layer_gap"] = s.peak_layer_gap;
    } else {
        for (const char* k : {"peak_pos_layer", "peak_pos_delta", "peak_neg_layer", "peak_neg_delta",
                              "peak_layer_gap"})
            summary[k] = null_value;
    }

    ensure_dir(out);
    write_text_file(out / "sweep.csv", sweep_csv(result.records));
    write_text_file(out / "summary.json", dump(summary));
    std::cout << "baseline accuracy " << format_g9(result.baseline.accuracy) << ", "
              << result.records.size() << " sweep records -> " << (out / "sweep.csv").string() << "\n";
    return 0;
}

struct FitArgs {
    std::string points;
    std::vector<std::string> summaries;
    std::vector<double> xs;
    std::string x_unit;
    std::string out_dir = "fit_out";
};

std::vector<FitPoint> read_points(const fs::path& path) {
    const json doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
        throw FormatError(path.string() + ": expected a JSON array of [x, y] pairs");
    }
    std::vector<FitPoint> pts;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& p = doc[i];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
            throw FormatError(path.string() + ": point " + std::to_string(i) + " is not [x, y]");
        }
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return pts;
}

void write_fit(const fs::path& out, const std::string& stem, const std::vector<FitPoint>& pts,
               const std::string& x_unit, const std::string& title, const std::string& y_label) {
    const auto fit = fit_exponential(pts, x_unit);
    write_text_file(out / (stem + ".json"), fit_report_json(fit, pts));
    write_text_file(out / (stem + ".svg"), render_fit_svg(pts, fit, title, y_label));
    std::cout << stem << ": a=" << format_g9(fit.a) << " b=" << format_g9(fit.b)
              << " c=" << format_g9(fit.c) << " sse=" << format_g9(fit.residual_sse) << "\n";
}

int cmd_fit(const FitArgs& a) {
    const fs::path out(a.out_dir);
    if (a.points.empty() == a.summaries.empty()) {
        throw UsageError("give exactly one of --points or --summary");
    }
    if (!a.points.empty()) {
        require_file(a.points, "points file");
        const auto pts = read_points(a.points);
        if (pts.size() < 3) throw UsageError("fit needs at least 3 points, got " + std::to_string(pts.size()));
        ensure_dir(out);
        write_fit(out, "fit", pts, a.x_unit.empty() ? "billions of parameters" : a.x_unit,
                  "Steering effectiveness vs. model size", "peak effectiveness");
        return 0;
    }

    if (!a.xs.empty() && a.xs.size() != a.summaries.size()) {
        throw UsageError("--x must be given once per --summary");
    }
    if (a.summaries.size() < 3) {
        throw UsageError("fit needs at least 3 summaries, got " + std::to_string(a.summaries.size()));
    }
    std::vector<FitPoint> pos, neg, combined;
    for (std::size_t i = 0; i < a.summaries.size(); ++i) {
        require_file(a.summaries[i], "summary");
        const json s = json::parse(read_text_file(a.summaries[i]), nullptr, false);
        auto number = [&](const char* key) {
            if (s.is_discarded() || !s.contains(key) || !s[key].is_number()) {
                throw FormatError(a.summaries[i] + ": field '" + key + "' missing or not a number");
            }
            return s[key].get<double>();
        };
        const double x = a.xs.empty() ? number("param_count") / 1e6 : a.xs[i];
        const double yp = number("peak_pos_effectiveness");
        const double yn = number("peak_neg_effectiveness");
        pos.push_back({x, yp});
        neg.push_back({x, yn});
        combined.push_back({x, std::max(yp, yn)});
    }
    const std::string unit =
        !a.x_unit.empty() ? a.x_unit : (a.xs.empty() ? "millions of parameters" : "billions of parameters");
    ensure_dir(out);
    write_fit(out, "fit_pos", pos, unit, "Positive steering effectiveness vs. model size", "peak |delta p|");
    write_fit(out, "fit_neg", neg, unit, "Negative steering effectiveness vs. model size", "peak |delta p|");
    write_fit(out, "fit", combined, unit, "Steering effectiveness vs. model size", "peak |delta p|");
    return 0;
}

}  // namespace

std::vector<double> parse_multipliers(const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split_commas(text)) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &used);
        } catch (...) {
            used = 0;
        }
        if (part.empty() || used != part.size() || !std::isfinite(v)) {
            throw UsageError("bad multiplier '" + part + "' in \"" + text + "\"");
        }
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("no multipliers given");
    return out;
}

std::vector<std::size_t> parse_layers(const std::string& text) {
    if (text == "all") return {};
    std::vector<std::size_t> out;
    for (const auto& part : split_commas(text)) {
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
            throw UsageError("bad layer '" + part + "' in \"" + text + "\" (use all or e.g. 0,3,5)");
        }
        out.push_back(static_cast<std::size_t>(std::stoull(part)));
    }
    if (out.empty()) throw UsageError("no layers given");
    return out;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"steerlab: steering-vector extraction and layer sweeps on small transformers"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "build a planted-direction model and datasets");
    synth->add_option("--layers", sa.layers, "number of layers")->capture_default_str();
    synth->add_option("--d-model", sa.d_model, "residual width")->capture_default_str();
    synth->add_option("--n-heads", sa.n_heads, "attention heads")->capture_default_str();
    synth->add_option("--d-mlp", sa.d_mlp, "MLP width (default 4 * d_model)");
    synth->add_option("--planted-layer", sa.planted_layer, "layer of the planted mechanism (default floor(0.4 * layers))");
    synth->add_option("--strength", sa.strength, "behavior strength")->capture_default_str();
    synth->add_option("--pairs", sa.pairs, "contrastive pairs")->capture_default_str();
    synth->add_option("--items", sa.items, "eval items")->capture_default_str();
    synth->add_option("--seed", sa.seed, "seed")->capture_default_str();
    synth->add_option("--out-dir", sa.out_dir, "output directory")->capture_default_str();

    ExtractArgs ea;
    auto* extract = app.add_subcommand("extract", "extract per-layer steering vectors");
    extract->add_option("--model", ea.model, "weight file (.stwb)")->required();
    extract->add_option("--pairs", ea.pairs, "pair dataset JSON")->required();
    extract->add_option("--out-dir", ea.out_dir, "output directory")->capture_default_str();

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep", "steer every layer and score the eval items");
    sweep->add_option("--model", wa.model, "weight file (.stwb)")->required();
    sweep->add_option("--items", wa.items, "eval dataset JSON")->required();
    sweep->add_option("--vectors", wa.vectors, "steering vectors (.stvs)")->required();
    sweep->add_option("--multipliers", wa.multipliers, "comma list, e.g. \"+1,-1\"")->capture_default_str();
    sweep->add_option("--layers", wa.layers, "all or a comma list")->capture_default_str();
    sweep->add_option("--site", wa.site, "post_mlp_pre_add or block_output")->capture_default_str();
    sweep->add_option("--positions", wa.positions, "all or last")->capture_default_str();
    sweep->add_option("--out-dir", wa.out_dir, "output directory")->capture_default_str();

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit y = a + b exp(-c x) to effectiveness points");
    fit->add_option("--points", fa.points, "JSON array of [x, y]");
    fit->add_option("--summary", fa.summaries, "sweep summary.json (repeatable)");
    fit->add_option("--x", fa.xs, "x value per summary (repeatable; default param_count / 1e6)");
    fit->add_option("--x-unit", fa.x_unit, "unit label for x");
    fit->add_option("--out-dir", fa.out_dir, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code_for(ErrorCategory::usage);
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*extract) return cmd_extract(ea);
        if (*sweep) return cmd_sweep(wa);
        if (*fit) return cmd_fit(fa);
    } catch (const Error& e) {
        std::cerr << "steerlab: " << e.what() << "\n";
        return exit_code_for(e.category());
    } catch (const json::exception& e) {
        std::cerr << "steerlab: format error: " << e.what() << "\n";
        return exit_code_for(ErrorCategory::data);
    }
    return exit_code_for(ErrorCategory::usage);
}

}  // namespace steerlab
