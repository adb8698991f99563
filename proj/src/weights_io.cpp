#include "steerlab/weights_io.hpp"

#include <json.hpp>

#include "steerlab/binary_io.hpp"
#include "steerlab/errors.hpp"
#include "steerlab/fingerprint.hpp"

namespace steerlab {

using json = nlohmann::json;

namespace {
constexpr std::string_view kMagic = "STWB";
}

std::string config_to_json(const ModelConfig& c) {
    json j = {{"n_layers", c.n_layers},       {"d_model", c.d_model},
              {"n_heads", c.n_heads},         {"d_head", c.d_head},
              {"d_mlp", c.d_mlp},             {"vocab_size", c.vocab_size},
              {"max_seq_len", c.max_seq_len}, {"norm_eps", c.norm_eps}};
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("model config is not a JSON object");
    auto count = [&](const char* key) -> std::uint32_t {
        if (!j.contains(key) || !j[key].is_number_unsigned()) {
            throw FormatError(std::string("model config field '") + key +
                              "' missing or not an unsigned integer");
        }
        return j[key].get<std::uint32_t>();
    };
    ModelConfig c;
    c.n_layers = count("n_layers");
    c.d_model = count("d_model");
    c.n_heads = count("n_heads");
    c.d_head = count("d_head");
    c.d_mlp = count("d_mlp");
    c.vocab_size = count("vocab_size");
    c.max_seq_len = count("max_seq_len");
    if (!j.contains("norm_eps") || !j["norm_eps"].is_number()) {
        throw FormatError("model config field 'norm_eps' missing or not a number");
    }
    c.norm_eps = j["norm_eps"].get<double>();
    c.validate();
    return c;
}

std::vector<std::uint8_t> encode_weights(const ModelConfig& config, const TensorStore& weights) {
    config.validate();
    validate_store(config, weights);
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put_u32(kWeightFileVersion);
    const std::string cfg = config_to_json(config);
    w.put_u64(cfg.size());
    w.put_bytes(cfg);
    for (const auto& name : canonical_tensor_names(config)) {
        const Matrix& m = weights.get(name);
        w.put_u16(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name);
        w.put_u32(static_cast<std::uint32_t>(m.rows()));
        w.put_u32(static_cast<std::uint32_t>(m.cols()));
        for (double v : m.data()) w.put_f64(v);
    }
    return w.bytes();
}

std::pair<ModelConfig, TensorStore> decode_weights(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < kMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
        throw FormatError("bad magic at byte offset 0 (expected \"STWB\")");
    }
    r.get_bytes(kMagic.size());
    r.set_context("header");
    const std::size_t version_offset = r.offset();
    const std::uint32_t version = r.get_u32();
    if (version != kWeightFileVersion) {
        throw FormatError("unsupported version " + std::to_string(version) + " at byte offset " +
                          std::to_string(version_offset));
    }
    const std::uint64_t cfg_len = r.get_u64();
    if (cfg_len > r.remaining()) {
        throw FormatError("config length " + std::to_string(cfg_len) + " at byte offset " +
                          std::to_string(r.offset() - 8) + " runs past end of file");
    }
    const ModelConfig config = config_from_json(r.get_bytes(cfg_len));

    TensorStore store;
    for (const auto& expected : canonical_tensor_names(config)) {
        r.set_context("tensor '" + expected + "'");
        const std::size_t record_offset = r.offset();
        const std::string name = r.get_bytes(r.get_u16());
        if (name != expected) {
            throw IntegrityError("expected tensor '" + expected + "' at byte offset " +
                                 std::to_string(record_offset) + ", found '" + name + "'");
        }
        const std::uint32_t rows = r.get_u32();
        const std::uint32_t cols = r.get_u32();
        auto [er, ec] = expected_tensor_shape(config, name);
        if (rows != er || cols != ec) {
            throw IntegrityError("tensor '" + name + "' has shape (" + std::to_string(rows) +
                                 ", " + std::to_string(cols) + "), config implies (" +
                                 std::to_string(er) + ", " + std::to_string(ec) + ")");
        }
        std::vector<double> data(static_cast<std::size_t>(rows) * cols);
        for (double& v : data) v = r.get_f64();
        store.set(name, Matrix(rows, cols, std::move(data)));
    }
    if (r.remaining() != 0) {
        throw IntegrityError(std::to_string(r.remaining()) +
                             " trailing bytes after last tensor at byte offset " +
                             std::to_string(r.offset()));
    }
    return {config, std::move(store)};
}

void save_weights(const ModelConfig& config, const TensorStore& weights,
                  const std::filesystem::path& path) {
    write_file_bytes(path, encode_weights(config, weights));
}

std::pair<ModelConfig, TensorStore> load_weights(const std::filesystem::path& path) {
    return decode_weights(read_file_bytes(path));
}

std::string model_fingerprint(const ModelConfig& config, const TensorStore& weights) {
    Fnv1a64 h;
    h.update(encode_weights(config, weights));
    return h.hex();
}

}  // namespace steerlab
