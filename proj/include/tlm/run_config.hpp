#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlm/trainer.hpp"

namespace tlm {

inline constexpr const char* kRunSchema = "TLMRUN1";

/// Fully resolved description of one end-to-end run. Serialized verbatim as
/// config.json in the run directory; re-running from that file on the same
/// build reproduces metrics.jsonl byte for byte.
struct RunConfig {
    std::filesystem::path corpus;  // corpus JSONL or a TLMSTORE1 store
    std::filesystem::path index;   // optional TLMIDX1 index; built from the corpus when empty
    std::filesystem::path task_train;
    std::filesystem::path task_dev;  // optional
    std::filesystem::path task_test;
    std::vector<std::string> label_names;  // empty: sorted distinct labels of the training file
    std::filesystem::path run_dir;
    TrainPlan plan;
    ModelShape model;
};

/// Relative paths are resolved against `base_dir`. Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

/// Desk-scale defaults used by the synthetic end-to-end experiments:
/// 4 layers, hidden 64, 4 heads, sequence length 32, K = 20.
RunConfig tiny_profile();

struct LoadedInputs {
    DocumentStore corpus;
    InvertedIndex index;
    TaskData task;
};

/// Reads corpus, index and task files named by the config (label names are
/// resolved into the returned task data).
LoadedInputs load_inputs(const RunConfig& config);

struct RunResult {
    RunConfig resolved;  // label names and K filled in
    PreparedData data;
    RunOutcome outcome;
};

/// Runs retrieval, stage 1, stage 2 and evaluation, then writes config.json,
/// metrics.jsonl, flops.json, retrieval.jsonl and checkpoints/ under run_dir.
/// Progress goes to `log` when non-null. With dump_batches > 0 the first that
/// many stage-1 batches are also written to batches.jsonl.
RunResult execute_run(const RunConfig& config, std::ostream* log = nullptr, std::int64_t dump_batches = 0);

/// flops.json content for a report; `baseline` <= 0 omits the ratio.
nlohmann::json flops_json(const FlopsReport& report, double baseline = 0.0);

}  // namespace tlm
