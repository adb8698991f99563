#include <doctest.h>

#include <cmath>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "steerlab/binary_io.hpp"
#include "steerlab/cli.hpp"
#include "steerlab/errors.hpp"
#include "steerlab/steering_io.hpp"
#include "test_support.hpp"

using namespace steerlab;
using nlohmann::json;
using test_support::run_cli;
using test_support::slurp;
using test_support::TempDir;

namespace {

const char* kSmall = "--layers 4 --d-model 32 --planted-layer 1 --pairs 8 --items 16";

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("multiplier and layer parsing") {
    CHECK(parse_multipliers("+1,-1") == std::vector<double>{1.0, -1.0});
    CHECK(parse_multipliers("0") == std::vector<double>{0.0});
    CHECK(parse_multipliers(" 2.5 , -0.5") == std::vector<double>{2.5, -0.5});
    CHECK_THROWS_AS(parse_multipliers("1,,2"), UsageError);
    CHECK_THROWS_AS(parse_multipliers("one"), UsageError);
    CHECK(parse_layers("all").empty());
    CHECK(parse_layers("0,3,5") == std::vector<std::size_t>{0, 3, 5});
    CHECK_THROWS_AS(parse_layers("1,-2"), UsageError);
    CHECK_THROWS_AS(parse_layers(""), UsageError);
}

TEST_CASE("usage errors exit 2") {
    TempDir dir("usage");
    CHECK(run_cli("") == 2);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("synth --no-such-flag") == 2);
    CHECK(run_cli("extract --pairs x.json") == 2);
    CHECK(run_cli("fit --out-dir " + q(dir.path())) == 2);
}

TEST_CASE("invalid planted layer writes nothing") {
    TempDir dir("badlayer");
    const auto out = dir.path() / "synth";
    CHECK(run_cli("synth --layers 8 --planted-layer 8 --out-dir " + q(out)) == 2);
    CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("missing inputs exit 4, corrupt inputs exit 3") {
    TempDir dir("io");
    CHECK(run_cli("extract --model /nonexistent/m.stwb --pairs /nonexistent/p.json --out-dir " +
                  q(dir.path() / "x")) == 4);
    write_text_file(dir.path() / "bad.stwb", "XXXXnot a weight file");
    write_text_file(dir.path() / "p.json", "[]");
    CHECK(run_cli("extract --model " + q(dir.path() / "bad.stwb") + " --pairs " + q(dir.path() / "p.json") +
                  " --out-dir " + q(dir.path() / "x")) == 3);
}

TEST_CASE("synth, extract and sweep on a small planted model") {
    TempDir dir("pipeline");
    const auto s = dir.path() / "synth";
    REQUIRE(run_cli(std::string("synth ") + kSmall + " --seed 3 --out-dir " + q(s)) == 0);
    for (const char* f : {"model.stwb", "pairs.json", "items.json", "manifest.json"})
        CHECK(std::filesystem::exists(s / f));
    const json manifest = json::parse(slurp(s / "manifest.json"));
    CHECK(manifest["planted_layer"] == 1);
    CHECK(manifest["n_layers"] == 4);

    // Idempotent: byte-identical rerun.
    const auto s2 = dir.path() / "synth2";
    REQUIRE(run_cli(std::string("synth ") + kSmall + " --seed 3 --out-dir " + q(s2)) == 0);
    for (const char* f : {"model.stwb", "pairs.json", "items.json", "manifest.json"})
        CHECK(slurp(s / f) == slurp(s2 / f));

    const auto e = dir.path() / "extract";
    REQUIRE(run_cli("extract --model " + q(s / "model.stwb") + " --pairs " + q(s / "pairs.json") +
                    " --out-dir " + q(e)) == 0);
    const SteeringVectorSet set = load_steering_vectors(e / "vectors.stvs");
    CHECK(set.n_layers() == 4);
    CHECK(set.model_fingerprint == manifest["model_fingerprint"].get<std::string>());
    CHECK(set.dataset_fingerprint == manifest["dataset_fingerprint"].get<std::string>());

    // Sidecar norms against norms recomputed from the binary vectors.
    const json sidecar = json::parse(slurp(e / "vectors.json"));
    for (std::size_t l = 0; l < set.n_layers(); ++l) {
        const double from_file = l2_norm(set.vectors[l]);
        const double listed = sidecar["layers"][l]["target_norm"].get<double>();
        CHECK(std::fabs(listed - from_file) <= 1e-9 * std::max(1.0, from_file));
    }

    const auto w = dir.path() / "sweep";
    REQUIRE(run_cli("sweep --model " + q(s / "model.stwb") + " --items " + q(s / "items.json") +
                    " --vectors " + q(e / "vectors.stvs") + " --out-dir " + q(w)) == 0);
    CHECK(count_lines(slurp(w / "sweep.csv")) == 1 + 4 * 2);
    const json summary = json::parse(slurp(w / "summary.json"));
    CHECK(summary["peak_neg_layer"] == 1);

    const auto z = dir.path() / "zero";
    REQUIRE(run_cli("sweep --model " + q(s / "model.stwb") + " --items " + q(s / "items.json") +
                    " --vectors " + q(e / "vectors.stvs") + " --multipliers 0 --layers 0,2 --out-dir " +
                    q(z)) == 0);
    const std::string csv = slurp(z / "sweep.csv");
    CHECK(count_lines(csv) == 1 + 2);
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        std::vector<std::string> cols;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
        REQUIRE(cols.size() == 6);
        CHECK(cols[4] == "0");
    }

    // Vectors from a different model are rejected.
    const auto other = dir.path() / "other";
    REQUIRE(run_cli(std::string("synth ") + kSmall + " --seed 4 --out-dir " + q(other)) == 0);
    CHECK(run_cli("sweep --model " + q(other / "model.stwb") + " --items " + q(s / "items.json") +
                  " --vectors " + q(e / "vectors.stvs") + " --out-dir " + q(dir.path() / "bad")) == 3);
    CHECK(run_cli("sweep --model " + q(s / "model.stwb") + " --items " + q(s / "items.json") +
                  " --vectors " + q(e / "vectors.stvs") + " --layers 9 --out-dir " + q(dir.path() / "bad")) == 2);
}

TEST_CASE("extract warns on identical pairs") {
    TempDir dir("zeros");
    const auto s = dir.path() / "synth";
    REQUIRE(run_cli(std::string("synth ") + kSmall + " --out-dir " + q(s)) == 0);
    write_text_file(dir.path() / "same.json",
                    R"([{"question": "a?", "answer_matching_behavior": "(A", "answer_not_matching_behavior": "(A"}])");
    const auto log = dir.path() / "log.txt";
    REQUIRE(run_cli("extract --model " + q(s / "model.stwb") + " --pairs " + q(dir.path() / "same.json") +
                        " --out-dir " + q(dir.path() / "e"),
                    log.string()) == 0);
    CHECK(slurp(log).find("warning") != std::string::npos);
    CHECK(load_steering_vectors(dir.path() / "e" / "vectors.stvs").all_zero());
    CHECK(json::parse(slurp(dir.path() / "e" / "vectors.json"))["all_zero"] == true);
}

TEST_CASE("fit from a points file") {
    TempDir dir("fit");
    json pts = json::array();
    for (double x : {0, 1, 2, 3, 4, 5}) pts.push_back({x, 2.0 + 3.0 * std::exp(-0.5 * x)});
    write_text_file(dir.path() / "pts.json", pts.dump());
    REQUIRE(run_cli("fit --points " + q(dir.path() / "pts.json") + " --out-dir " + q(dir.path() / "out")) == 0);
    const json fit = json::parse(slurp(dir.path() / "out" / "fit.json"));
    CHECK(std::fabs(fit["a"].get<double>() - 2.0) < 1e-6);
    CHECK(std::fabs(fit["b"].get<double>() - 3.0) < 1e-6);
    CHECK(std::fabs(fit["c"].get<double>() - 0.5) < 1e-6);

    boost::property_tree::ptree tree;
    std::istringstream svg(slurp(dir.path() / "out" / "fit.svg"));
    REQUIRE_NOTHROW(boost::property_tree::read_xml(svg, tree));
    std::size_t paths = 0;
    for (const auto& child : tree.get_child("svg"))
        if (child.first == "path") ++paths;
    CHECK(paths == 2);

    json paper = json::array();
    for (double x : {7.0, 13.0, 70.0}) paper.push_back({x, 0.081 + 2.4 * std::exp(-0.42 * x)});
    write_text_file(dir.path() / "paper.json", paper.dump());
    REQUIRE(run_cli("fit --points " + q(dir.path() / "paper.json") + " --out-dir " + q(dir.path() / "p")) == 0);
    const json pf = json::parse(slurp(dir.path() / "p" / "fit.json"));
    CHECK(pf["sse"].get<double>() < 1e-10);

    write_text_file(dir.path() / "two.json", "[[1, 2], [2, 3]]");
    CHECK(run_cli("fit --points " + q(dir.path() / "two.json") + " --out-dir " + q(dir.path() / "t")) == 2);
    write_text_file(dir.path() / "junk.json", "[[1, \"a\"]]");
    CHECK(run_cli("fit --points " + q(dir.path() / "junk.json") + " --out-dir " + q(dir.path() / "t")) == 3);
}
