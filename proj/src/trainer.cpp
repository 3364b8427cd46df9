#include "tlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "tlm/error.hpp"
#include "tlm/optimizer.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

using nlohmann::json;

std::string to_string(Scale s) {
    switch (s) {
        case Scale::small: return "small";
        case Scale::medium: return "medium";
        case Scale::large: return "large";
    }
    return "small";
}

Scale parse_scale(const std::string& s) {
    if (s == "small") return Scale::small;
    if (s == "medium") return Scale::medium;
    if (s == "large") return Scale::large;
    throw ConfigError("unknown scale '" + s + "' (expected small|medium|large)");
}

std::size_t default_k(std::size_t train_size, Scale scale) {
    if (train_size < 1) throw PreconditionError("train_size must be >= 1");
    std::size_t k = 500;
    if (train_size < 5000) {
        k = 5000;
    } else if (train_size > 100000) {
        k = 50;
    }
    return scale == Scale::large ? 2 * k : k;
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::micro_f1: return "micro_f1";
        case Metric::macro_f1: return "macro_f1";
    }
    return "accuracy";
}

Metric parse_metric(const std::string& s) {
    if (s == "accuracy") return Metric::accuracy;
    if (s == "micro_f1") return Metric::micro_f1;
    if (s == "macro_f1") return Metric::macro_f1;
    throw ConfigError("unknown metric '" + s + "' (expected accuracy|micro_f1|macro_f1)");
}

double metric_value(const EvalResult& r, Metric m) {
    switch (m) {
        case Metric::accuracy: return r.accuracy;
        case Metric::micro_f1: return r.micro_f1;
        case Metric::macro_f1: return r.macro_f1;
    }
    return r.accuracy;
}

Vocabulary build_training_vocabulary(const std::vector<const std::vector<std::string>*>& streams, std::size_t max_size) {
    struct Count {
        std::size_t freq = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string, Count> counts;
    std::size_t position = 0;
    for (const auto* s : streams) {
        for (const auto& t : *s) {
            auto [it, inserted] = counts.try_emplace(t, Count{0, position});
            ++it->second.freq;
            ++position;
        }
    }
    std::vector<std::pair<const std::string*, Count>> order;
    order.reserve(counts.size());
    for (const auto& [term, c] : counts) order.emplace_back(&term, c);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second.freq != b.second.freq) return a.second.freq > b.second.freq;
        return a.second.first < b.second.first;
    });
    Vocabulary vocab;
    for (const auto& [term, _] : order) {
        if (vocab.size() >= max_size) break;
        vocab.add(*term);
    }
    return vocab;
}

namespace {

std::vector<std::vector<std::string>> tokenize_all(std::span<const TaskExample> examples) {
    std::vector<std::vector<std::string>> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(tokenize(ex.text));
    return out;
}

EncodedExamples encode_examples(std::span<const TaskExample> examples, const Vocabulary& vocab) {
    EncodedExamples enc;
    for (const auto& ex : examples) {
        auto tokens = tokenize(ex.text);
        enc.ids.push_back(vocab.encode(tokens));
        enc.labels.push_back(ex.label);
    }
    return enc;
}

AdamWConfig adamw_config(double weight_decay) {
    AdamWConfig c;
    c.weight_decay = weight_decay;
    return c;
}

LinearSchedule schedule_for(double lr, double warmup_fraction, std::int64_t steps) {
    LinearSchedule s;
    s.peak_lr = lr;
    s.total_steps = steps;
    s.warmup_steps = static_cast<std::int64_t>(std::llround(warmup_fraction * static_cast<double>(steps)));
    return s;
}

json eval_json(const EvalRecord& rec) {
    const auto& r = rec.result;
    json per_class = json::array();
    for (const auto& c : r.per_class) {
        per_class.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
    }
    return {{"kind", "eval"},          {"stage", rec.stage},        {"step", rec.step},
            {"split", rec.split},      {"accuracy", r.accuracy},    {"micro_f1", r.micro_f1},
            {"macro_f1", r.macro_f1},  {"per_class", per_class},    {"confusion", r.confusion},
            {"count", r.count}};
}

void append_train_logs(const std::string& stage, const StageLog& log, std::int64_t interval,
                       std::vector<std::string>& lines) {
    if (interval <= 0) return;
    const auto n = static_cast<std::int64_t>(log.steps.size());
    for (std::int64_t start = 0; start < n; start += interval) {
        const auto end = std::min(n, start + interval);
        double loss = 0, mlm = 0, task = 0;
        std::int64_t internal = 0;
        for (auto s = start; s < end; ++s) {
            const auto& st = log.steps[static_cast<std::size_t>(s)];
            loss += st.loss;
            mlm += st.mlm;
            if (st.origin == Origin::internal) {
                task += st.task;
                ++internal;
            }
        }
        const auto count = static_cast<double>(end - start);
        json rec = {{"kind", "train"},
                    {"stage", stage},
                    {"step", end},
                    {"loss", loss / count},
                    {"mlm", mlm / count},
                    {"internal_batches", internal}};
        rec["task"] = internal > 0 ? json(task / static_cast<double>(internal)) : json(nullptr);
        lines.push_back(rec.dump());
    }
}

void check_finite(const LossBreakdown& loss, const std::string& stage, std::int64_t step) {
    if (!std::isfinite(loss.total)) throw DivergenceError(step, "stage " + stage + " loss is not finite");
}

}  // namespace

PreparedData prepare_data(const DocumentStore& corpus, const InvertedIndex& index, const TaskData& task,
                          const TrainPlan& plan, const ModelShape& shape) {
    if (task.train.empty()) throw PreconditionError("task training data is empty");
    if (task.label_names.empty()) throw PreconditionError("no label names");
    PreparedData data;
    data.label_names = task.label_names;

    RetrievalParams rp = plan.retrieval;
    if (rp.k == 0) rp.k = default_k(task.train.size(), plan.scale);
    rp.seed = plan.seeds.data;
    data.retrieval = rp.method == RetrievalMethod::random ? retrieve_random(index.doc_ids(), task.train, rp)
                                                          : retrieve_external(index, task.train, rp);

    const auto train_tokens = tokenize_all(task.train);
    std::vector<const std::vector<std::string>*> streams;
    for (const auto& t : train_tokens) streams.push_back(&t);
    std::vector<const Document*> docs;
    docs.reserve(data.retrieval.doc_ids.size());
    for (auto id : data.retrieval.doc_ids) {
        const Document* d = corpus.find(id);
        if (d == nullptr) throw PreconditionError("retrieved doc id " + std::to_string(id) + " not in corpus");
        docs.push_back(d);
        streams.push_back(&d->tokens);
    }
    data.vocab = build_training_vocabulary(streams, shape.max_vocab);

    data.train = encode_examples(task.train, data.vocab);
    data.dev = encode_examples(task.dev, data.vocab);
    data.test = encode_examples(task.test, data.vocab);
    for (const auto* d : docs) data.external.push_back(data.vocab.encode(d->tokens));

    data.model.vocab_size = data.vocab.size();
    data.model.hidden = shape.hidden;
    data.model.layers = shape.layers;
    data.model.heads = shape.heads;
    data.model.ffn = shape.ffn;
    data.model.max_seq_len = std::max(plan.stage1.seq_len, plan.stage2.seq_len);
    data.model.num_classes = task.label_names.size();
    data.model.validate();
    return data;
}

RowPool make_internal_pool(const EncodedExamples& examples, std::size_t seq_len) {
    RowPool pool;
    for (std::size_t i = 0; i < examples.ids.size(); ++i) {
        pool.rows.push_back(encode_sequence(examples.ids[i], seq_len));
        pool.labels.push_back(examples.labels[i]);
    }
    return pool;
}

RowPool make_external_pool(const std::vector<std::vector<TokenId>>& docs, std::size_t seq_len) {
    RowPool pool;
    for (const auto& d : docs) {
        for (auto& row : encode_chunks(d, seq_len)) pool.rows.push_back(std::move(row));
    }
    return pool;
}

std::vector<double> windowed_task_loss(const StageLog& log, std::size_t group) {
    std::vector<double> out;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : log.steps) {
        if (s.origin != Origin::internal) continue;
        sum += s.task;
        if (++n == group) {
            out.push_back(sum / static_cast<double>(group));
            sum = 0;
            n = 0;
        }
    }
    return out;
}

BatchStream stage1_stream(const TrainPlan& plan, const ModelConfig& config, const RowPool& internal,
                          const RowPool& external) {
    const auto& s1 = plan.stage1;
    const auto mode = plan.external_only ? PlanMode::external_only : PlanMode::normal;
    const auto interleave = make_plan(s1.rho1, s1.steps, s1.batch_size, s1.seq_len, mode, plan.seeds.data);
    return BatchStream(interleave, internal, external, config.vocab_size, plan.seeds.data, plan.seeds.masking);
}

StageLog run_stage1(const TrainPlan& plan, const ModelConfig& config, ModelParams<float>& params,
                    const RowPool& internal, const RowPool& external) {
    const auto& s1 = plan.stage1;
    const auto stream = stage1_stream(plan, config, internal, external);
    AdamW opt(config, adamw_config(s1.weight_decay));
    const auto schedule = schedule_for(s1.lr, s1.warmup_fraction, s1.steps);
    ModelParams<float> grads;

    StageLog log;
    log.steps.reserve(static_cast<std::size_t>(s1.steps));
    for (std::int64_t step = 0; step < s1.steps; ++step) {
        const auto batch = stream.next_batch(step);
        const auto loss = loss_and_gradients(params, config, batch, s1.rho2, grads);
        check_finite(loss, "1", step);
        opt.step(params, grads, schedule.at(step));
        log.steps.push_back({batch.origin, loss.total, loss.mlm, loss.task});
        if (batch.origin == Origin::internal) ++log.internal_updates;
    }
    return log;
}

EvalResult evaluate(const ModelParams<float>& params, const ModelConfig& config, const RowPool& data,
                    std::size_t batch_size) {
    if (data.rows.empty()) throw PreconditionError("evaluation data is empty");
    if (batch_size == 0) throw PreconditionError("evaluation batch size must be >= 1");
    std::vector<int> predicted;
    predicted.reserve(data.rows.size());
    for (std::size_t begin = 0; begin < data.rows.size(); begin += batch_size) {
        const auto end = std::min(data.rows.size(), begin + batch_size);
        const auto batch = make_eval_batch(data, begin, end);
        const auto out = forward(params, config, batch);
        for (int p : predict(out)) predicted.push_back(p);
    }
    return compute_metrics(data.labels, predicted, config.num_classes);
}

Stage2Result run_stage2(const TrainPlan& plan, const ModelConfig& config, ModelParams<float>& params,
                        const RowPool& internal, const RowPool* dev) {
    Stage2Result result;
    const auto& s2 = plan.stage2;
    if (plan.skip_stage2 || s2.steps == 0) return result;
    const auto interleave = make_plan(0, s2.steps, s2.batch_size, s2.seq_len, PlanMode::normal, plan.seeds.data);
    const RowPool no_external;
    const BatchStream stream(interleave, internal, no_external, config.vocab_size, plan.seeds.data, plan.seeds.masking,
                             /*mask=*/false);
    AdamW opt(config, adamw_config(s2.weight_decay));
    const auto schedule = schedule_for(s2.lr, s2.warmup_fraction, s2.steps);
    ModelParams<float> grads;

    const bool select = dev != nullptr && !dev->rows.empty();
    std::optional<ModelParams<float>> best;
    double best_score = -1.0;
    auto consider = [&](std::int64_t step) {
        EvalRecord rec{"2", step, "dev", evaluate(params, config, *dev, plan.eval_batch_size)};
        const double score = metric_value(rec.result, plan.metric);
        if (score > best_score) {
            best_score = score;
            best = params;
            result.selected_step = step;
        }
        result.dev_evals.push_back(std::move(rec));
    };

    result.log.steps.reserve(static_cast<std::size_t>(s2.steps));
    for (std::int64_t step = 0; step < s2.steps; ++step) {
        const auto batch = stream.next_batch(step);
        const auto loss = loss_and_gradients(params, config, batch, 0.0, grads);
        check_finite(loss, "2", step);
        opt.step(params, grads, schedule.at(step));
        result.log.steps.push_back({batch.origin, loss.total, loss.mlm, loss.task});
        ++result.log.internal_updates;
        const auto done = step + 1;
        if (select && ((plan.eval_interval > 0 && done % plan.eval_interval == 0) || done == s2.steps)) consider(done);
    }
    if (select) {
        params = std::move(*best);
    } else {
        result.selected_step = s2.steps;
    }
    return result;
}

RunOutcome train_and_evaluate(const PreparedData& data, const TrainPlan& plan) {
    if (data.test.ids.empty()) throw PreconditionError("task test data is empty");
    const auto& config = data.model;
    RunOutcome out;
    const auto s1_internal = make_internal_pool(data.train, plan.stage1.seq_len);
    const auto s1_external = make_external_pool(data.external, plan.stage1.seq_len);

    auto params = init_params<float>(config, plan.seeds.init);
    out.stage1 = run_stage1(plan, config, params, s1_internal, s1_external);
    append_train_logs("1", out.stage1, plan.log_interval, out.metrics_lines);
    out.stage1_params = params;

    const auto s1_test = make_internal_pool(data.test, plan.stage1.seq_len);
    if (!data.dev.ids.empty()) {
        const auto s1_dev = make_internal_pool(data.dev, plan.stage1.seq_len);
        out.metrics_lines.push_back(
            eval_json({"1", plan.stage1.steps, "dev", evaluate(params, config, s1_dev, plan.eval_batch_size)}).dump());
    }
    out.stage1_test = evaluate(params, config, s1_test, plan.eval_batch_size);
    out.metrics_lines.push_back(eval_json({"1", plan.stage1.steps, "test", out.stage1_test}).dump());

    const bool stage2 = !plan.skip_stage2 && plan.stage2.steps > 0;
    if (stage2) {
        const auto s2_internal = make_internal_pool(data.train, plan.stage2.seq_len);
        const auto s2_dev = make_internal_pool(data.dev, plan.stage2.seq_len);
        out.stage2 = run_stage2(plan, config, params, s2_internal, data.dev.ids.empty() ? nullptr : &s2_dev);
        append_train_logs("2", out.stage2->log, plan.log_interval, out.metrics_lines);
        for (const auto& rec : out.stage2->dev_evals) out.metrics_lines.push_back(eval_json(rec).dump());
        const auto s2_test = make_internal_pool(data.test, plan.stage2.seq_len);
        out.final_test = evaluate(params, config, s2_test, plan.eval_batch_size);
        out.final_stage = "2";
    } else {
        out.final_test = out.stage1_test;
        out.final_stage = "1";
    }
    out.final_params = std::move(params);

    auto final_rec = eval_json({out.final_stage, stage2 ? out.stage2->selected_step : plan.stage1.steps, "test",
                                out.final_test});
    final_rec["kind"] = "final";
    final_rec["metric"] = to_string(plan.metric);
    final_rec["score"] = metric_value(out.final_test, plan.metric);
    out.metrics_lines.push_back(final_rec.dump());

    out.flops = flops_report(plan, config);
    return out;
}

FlopsReport flops_report(const TrainPlan& plan, const ModelConfig& config) {
    std::vector<StageTokens> stages;
    stages.push_back({"1", static_cast<std::uint64_t>(plan.stage1.steps), plan.stage1.batch_size, plan.stage1.seq_len, 0});
    if (!plan.skip_stage2) {
        stages.push_back(
            {"2", static_cast<std::uint64_t>(plan.stage2.steps), plan.stage2.batch_size, plan.stage2.seq_len, 0});
    }
    return make_flops_report(stages, config.num_params());
}

std::pair<double, double> mean_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

std::vector<GridCell> grid_search(const DocumentStore& corpus, const InvertedIndex& index, const TaskData& task,
                                  const TrainPlan& base, const ModelShape& shape, std::span<const std::int64_t> rho1_grid,
                                  std::span<const double> rho2_grid, std::size_t num_seeds) {
    if (rho1_grid.empty() || rho2_grid.empty()) throw PreconditionError("grids must be non-empty");
    if (num_seeds == 0) throw PreconditionError("at least one seed is required");
    std::map<std::pair<std::int64_t, double>, GridCell> cells;
    for (auto r1 : rho1_grid) {
        for (auto r2 : rho2_grid) cells[{r1, r2}] = GridCell{r1, r2, {}, 0.0, 0.0};
    }
    for (std::size_t r = 0; r < num_seeds; ++r) {
        TrainPlan plan = base;
        plan.seeds = base.seeds.offset(r);
        const auto data = prepare_data(corpus, index, task, plan, shape);
        for (auto& [key, cell] : cells) {
            plan.stage1.rho1 = key.first;
            plan.stage1.rho2 = key.second;
            const auto outcome = train_and_evaluate(data, plan);
            cell.per_seed.push_back(metric_value(outcome.final_test, plan.metric));
        }
    }
    std::vector<GridCell> rows;
    for (auto& [_, cell] : cells) {
        std::tie(cell.mean, cell.stddev) = mean_std(cell.per_seed);
        rows.push_back(std::move(cell));
    }
    return rows;
}

}  // namespace tlm
