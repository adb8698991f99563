#include "steerlab/steering_io.hpp"

#include <json.hpp>

#include "steerlab/binary_io.hpp"
#include "steerlab/errors.hpp"

namespace steerlab {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMagic = "STVS";

json metadata_json(const SteeringVectorSet& set) {
    return {{"model_fingerprint", set.model_fingerprint},
            {"dataset_fingerprint", set.dataset_fingerprint},
            {"pair_count", set.pair_count},
            {"n_layers", set.n_layers()},
            {"d_model", set.d_model()},
            {"target_norms", set.target_norms},
            {"raw_norms", set.raw_norms},
            {"capture_site", kCaptureSiteLabel},
            {"last_token", kLastTokenRule}};
}

std::vector<double> norm_list(const json& meta, const char* key, std::size_t n) {
    if (!meta.contains(key) || !meta[key].is_array() || meta[key].size() != n) {
        throw FormatError(std::string("steering metadata '") + key + "' missing or wrong length");
    }
    std::vector<double> out;
    for (const auto& v : meta[key]) {
        if (!v.is_number()) throw FormatError(std::string("steering metadata '") + key + "' has a non-number");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_steering_vectors(const SteeringVectorSet& set) {
    for (const auto& v : set.vectors) {
        if (v.size() != set.d_model()) throw DimensionError("steering vectors have unequal lengths");
    }
    if (set.raw_norms.size() != set.n_layers() || set.target_norms.size() != set.n_layers()) {
        throw DimensionError("steering norm lists do not match layer count");
    }
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put_u32(kSteeringFileVersion);
    const std::string meta = metadata_json(set).dump();
    w.put_u64(meta.size());
    w.put_bytes(meta);
    for (const auto& v : set.vectors)
        for (double x : v) w.put_f64(x);
    return w.bytes();
}

SteeringVectorSet decode_steering_vectors(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
        throw FormatError("bad magic at byte offset 0 (expected \"STVS\")");
    }
    ByteReader r(bytes);
    r.get_bytes(kMagic.size());
    r.set_context("steering header");
    const std::uint32_t version = r.get_u32();
    if (version != kSteeringFileVersion) {
        throw FormatError("unsupported steering file version " + std::to_string(version) +
                          " at byte offset 4");
    }
    const std::uint64_t meta_len = r.get_u64();
    if (meta_len > r.remaining()) throw FormatError("metadata length at byte offset 8 runs past end of file");
    const json meta = json::parse(r.get_bytes(meta_len), nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw FormatError("steering metadata is not a JSON object");

    auto count = [&](const char* key) -> std::size_t {
        if (!meta.contains(key) || !meta[key].is_number_unsigned())
            throw FormatError(std::string("steering metadata '") + key + "' missing");
        return meta[key].get<std::size_t>();
    };
    auto text = [&](const char* key) -> std::string {
        if (!meta.contains(key) || !meta[key].is_string())
            throw FormatError(std::string("steering metadata '") + key + "' missing");
        return meta[key].get<std::string>();
    };

    SteeringVectorSet set;
    const std::size_t n_layers = count("n_layers");
    const std::size_t d = count("d_model");
    set.pair_count = count("pair_count");
    set.model_fingerprint = text("model_fingerprint");
    set.dataset_fingerprint = text("dataset_fingerprint");
    set.target_norms = norm_list(meta, "target_norms", n_layers);
    set.raw_norms = norm_list(meta, "raw_norms", n_layers);
    set.vectors.assign(n_layers, Vector(d));
    for (std::size_t l = 0; l < n_layers; ++l) {
        r.set_context("vector for layer " + std::to_string(l));
        for (double& x : set.vectors[l]) x = r.get_f64();
    }
    if (r.remaining() != 0) {
        throw IntegrityError(std::to_string(r.remaining()) + " trailing bytes at byte offset " +
                             std::to_string(r.offset()));
    }
    return set;
}

void save_steering_vectors(const SteeringVectorSet& set, const std::filesystem::path& path) {
    write_file_bytes(path, encode_steering_vectors(set));
}

SteeringVectorSet load_steering_vectors(const std::filesystem::path& path) {
    return decode_steering_vectors(read_file_bytes(path));
}

std::string steering_sidecar_json(const SteeringVectorSet& set) {
    json layers = json::array();
    for (std::size_t l = 0; l < set.n_layers(); ++l) {
        layers.push_back({{"layer", l},
                          {"target_norm", set.target_norms[l]},
                          {"raw_mean_norm", set.raw_norms[l]},
                          {"vector_norm", l2_norm(set.vectors[l])}});
    }
    json doc = metadata_json(set);
    doc["layers"] = std::move(layers);
    doc["all_zero"] = set.all_zero();
    return doc.dump(2) + "\n";
}

}  // namespace steerlab
