#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tlm/model.hpp"
#include "tlm/vocabulary.hpp"

namespace tlm {

struct Checkpoint {
    ModelConfig config;
    Vocabulary vocab;
    std::vector<std::string> label_names;
    ModelParams<float> params;
};

/// "TLMCKPT1\n", a u64 length + JSON config block (model config, vocabulary,
/// labels, tensor manifest), then every tensor as little-endian float32 in
/// for_each_tensor order.
void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over the raw tensor bytes; cheap identity for determinism checks.
std::uint64_t params_hash(const ModelParams<float>& params);

}  // namespace tlm
