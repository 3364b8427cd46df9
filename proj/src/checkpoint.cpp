#include "tlm/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "tlm/binary_io.hpp"
#include "tlm/error.hpp"

namespace tlm {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointHeader = "TLMCKPT1\n";

json config_to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden},           {"layers", c.layers},
            {"heads", c.heads},           {"ffn", c.ffn_size()},          {"max_seq_len", c.max_seq_len},
            {"num_classes", c.num_classes}, {"dropout", c.dropout}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn = j.at("ffn").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    json manifest = json::array();
    const auto& params = ckpt.params;
    for_each_tensor([&](const std::string& name, const auto& t) { manifest.push_back({name, t.rows(), t.cols()}); },
                    params);
    const std::string block = json{{"config", config_to_json(ckpt.config)},
                                   {"vocab", ckpt.vocab.terms()},
                                   {"label_names", ckpt.label_names},
                                   {"tensors", manifest}}
                                  .dump();
    out.write(kCheckpointHeader, 9);
    binio::write<std::uint64_t>(out, block.size());
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
    for_each_tensor(
        [&](const std::string&, const auto& t) {
            binio::write_span<float>(out, std::span<const float>(t.data(), static_cast<std::size_t>(t.size())));
        },
        params);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    save_checkpoint(ckpt, out);
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(std::istream& in) {
    binio::expect_header(in, kCheckpointHeader);
    const auto len = binio::read<std::uint64_t>(in);
    if (len > (1ULL << 34)) throw FormatError("checkpoint: config block too large");
    std::string block(len, '\0');
    if (!in.read(block.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint: truncated config block");
    Checkpoint ckpt;
    json meta;
    try {
        meta = json::parse(block);
        ckpt.config = config_from_json(meta.at("config"));
        ckpt.vocab = Vocabulary::from_terms(meta.at("vocab").get<std::vector<std::string>>());
        ckpt.label_names = meta.at("label_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
    }
    ckpt.config.validate();
    if (ckpt.vocab.size() != ckpt.config.vocab_size) throw FormatError("checkpoint: vocabulary size mismatch");
    ckpt.params = ModelParams<float>::zeros(ckpt.config);
    std::size_t i = 0;
    const auto& manifest = meta.at("tensors");
    for_each_tensor(
        [&](const std::string& name, auto& t) {
            if (i >= manifest.size() || manifest[i][0].get<std::string>() != name ||
                manifest[i][1].get<Eigen::Index>() != t.rows() || manifest[i][2].get<Eigen::Index>() != t.cols()) {
                throw FormatError("checkpoint: tensor manifest mismatch at " + name);
            }
            ++i;
            binio::read_span<float>(in, std::span<float>(t.data(), static_cast<std::size_t>(t.size())));
        },
        ckpt.params);
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return load_checkpoint(in);
}

std::uint64_t params_hash(const ModelParams<float>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_tensor(
        [&](const std::string&, const auto& t) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
            for (std::size_t k = 0; k < static_cast<std::size_t>(t.size()) * sizeof(float); ++k) {
                h ^= bytes[k];
                h *= 0x100000001b3ULL;
            }
        },
        params);
    return h;
}

}  // namespace tlm
