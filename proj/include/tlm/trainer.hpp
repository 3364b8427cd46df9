#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlm/corpus.hpp"
#include "tlm/datapipe.hpp"
#include "tlm/flops.hpp"
#include "tlm/inverted_index.hpp"
#include "tlm/metrics.hpp"
#include "tlm/model.hpp"
#include "tlm/retrieval.hpp"

namespace tlm {

enum class Scale { small, medium, large };
std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// Documents retrieved per task example: 5000 below 5K training examples,
/// 50 above 100K, 500 otherwise; doubled at the large scale.
std::size_t default_k(std::size_t train_size, Scale scale);

enum class Metric { accuracy, micro_f1, macro_f1 };
std::string to_string(Metric m);
Metric parse_metric(const std::string& s);
double metric_value(const EvalResult& r, Metric m);

struct Stage1Config {
    std::int64_t rho1 = 3;
    double rho2 = 20.0;
    std::int64_t steps = 2000;
    std::size_t batch_size = 16;
    std::size_t seq_len = 32;
    double lr = 1e-3;
    double warmup_fraction = 0.06;
    double weight_decay = 0.01;
};

/// Task-only fine-tuning. There is no rho1/rho2 here: stage 2 always runs with
/// both set to zero.
struct Stage2Config {
    std::int64_t steps = 500;
    std::size_t batch_size = 16;
    std::size_t seq_len = 32;
    double lr = 3e-4;
    double warmup_fraction = 0.06;
    double weight_decay = 0.01;
};

/// The three sources of randomness in a run.
struct Seeds {
    std::uint64_t init = 1;     // parameter initialization
    std::uint64_t masking = 2;  // MLM corruption
    std::uint64_t data = 3;     // epoch shuffles and random retrieval

    Seeds offset(std::uint64_t r) const { return {init + r, masking + r, data + r}; }
    friend bool operator==(const Seeds&, const Seeds&) = default;
};

struct TrainPlan {
    Stage1Config stage1;
    Stage2Config stage2;
    RetrievalParams retrieval;  // retrieval.k == 0 selects default_k(train size, scale)
    Scale scale = Scale::small;
    bool skip_stage2 = false;
    bool external_only = false;
    Seeds seeds;
    Metric metric = Metric::accuracy;
    std::int64_t log_interval = 100;
    std::int64_t eval_interval = 100;  // stage-2 dev evaluation period
    std::size_t eval_batch_size = 64;
};

/// Architecture knobs that do not depend on the data.
struct ModelShape {
    std::size_t hidden = 128;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t ffn = 0;
    std::size_t max_vocab = 30000;
};

struct TaskData {
    std::vector<std::string> label_names;
    std::vector<TaskExample> train;
    std::vector<TaskExample> dev;
    std::vector<TaskExample> test;
};

struct EncodedExamples {
    std::vector<std::vector<TokenId>> ids;
    std::vector<int> labels;
};

/// Everything a training run consumes once retrieval is done.
struct PreparedData {
    RetrievalSet retrieval;
    Vocabulary vocab;
    ModelConfig model;
    std::vector<std::string> label_names;
    EncodedExamples train, dev, test;
    std::vector<std::vector<TokenId>> external;  // documents of S in doc id order
};

/// Vocabulary over the given token streams: reserved entries first, then
/// terms by descending frequency (ties by first occurrence), capped at
/// max_size entries in total.
Vocabulary build_training_vocabulary(const std::vector<const std::vector<std::string>*>& streams, std::size_t max_size);

/// Retrieves S for the training split, builds the training vocabulary from
/// T_train and S, and encodes every split.
PreparedData prepare_data(const DocumentStore& corpus, const InvertedIndex& index, const TaskData& task,
                          const TrainPlan& plan, const ModelShape& shape);

RowPool make_internal_pool(const EncodedExamples& examples, std::size_t seq_len);
RowPool make_external_pool(const std::vector<std::vector<TokenId>>& docs, std::size_t seq_len);

struct StepLog {
    Origin origin = Origin::internal;
    double loss = 0.0;
    double mlm = 0.0;
    double task = 0.0;
};

struct StageLog {
    std::vector<StepLog> steps;
    std::int64_t internal_updates = 0;
};

/// Mean task loss over consecutive groups of `group` internal steps.
std::vector<double> windowed_task_loss(const StageLog& log, std::size_t group);

/// The stage-1 batch stream: interleaved, masked, seeded by plan.seeds.
/// Keeps references to both pools.
BatchStream stage1_stream(const TrainPlan& plan, const ModelConfig& config, const RowPool& internal,
                          const RowPool& external);

/// Joint MLM + task training over the interleaved batch stream with AdamW and
/// linear warmup/decay. Throws DivergenceError on a non-finite loss.
StageLog run_stage1(const TrainPlan& plan, const ModelConfig& config, ModelParams<float>& params,
                    const RowPool& internal, const RowPool& external);

EvalResult evaluate(const ModelParams<float>& params, const ModelConfig& config, const RowPool& data,
                    std::size_t batch_size = 64);

struct EvalRecord {
    std::string stage;
    std::int64_t step = 0;
    std::string split;
    EvalResult result;
};

struct Stage2Result {
    StageLog log;
    std::vector<EvalRecord> dev_evals;
    std::int64_t selected_step = 0;
};

/// Task-only fine-tuning (rho1 = rho2 = 0, no MLM). With a dev pool the
/// parameters with the best dev metric (earliest on ties) are kept.
Stage2Result run_stage2(const TrainPlan& plan, const ModelConfig& config, ModelParams<float>& params,
                        const RowPool& internal, const RowPool* dev);

struct RunOutcome {
    ModelParams<float> stage1_params;
    ModelParams<float> final_params;
    StageLog stage1;
    std::optional<Stage2Result> stage2;
    EvalResult stage1_test;
    EvalResult final_test;
    std::string final_stage;  // "1" when stage 2 was skipped, else "2"
    FlopsReport flops;
    std::vector<std::string> metrics_lines;  // metrics.jsonl content
};

RunOutcome train_and_evaluate(const PreparedData& data, const TrainPlan& plan);

/// Stage-wise token accounting for a plan (stage 2 omitted when skipped).
FlopsReport flops_report(const TrainPlan& plan, const ModelConfig& config);

struct GridCell {
    std::int64_t rho1 = 0;
    double rho2 = 0.0;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1) standard deviation, 0 for a single seed
};

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

/// Full rho1 x rho2 cross product, each cell trained once per seed replicate
/// (replicate r uses plan.seeds.offset(r)). Rows sorted by (rho1, rho2).
std::vector<GridCell> grid_search(const DocumentStore& corpus, const InvertedIndex& index, const TaskData& task,
                                  const TrainPlan& base, const ModelShape& shape, std::span<const std::int64_t> rho1_grid,
                                  std::span<const double> rho2_grid, std::size_t num_seeds);

}  // namespace tlm
