#include "tlm/run_config.hpp"

#include <fstream>
#include <ostream>
#include <set>

#include "tlm/checkpoint.hpp"
#include "tlm/error.hpp"

namespace tlm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    try {
        dst = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base) {
    std::string s;
    read_opt(j, key, s);
    if (s.empty()) return {};
    std::filesystem::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
}

bool looks_like_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string first;
    std::getline(in, first);
    return first == "TLMSTORE1";
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    reject_unknown(j,
                   {"schema", "corpus", "index", "task", "run_dir", "retrieval", "scale", "model", "stage1", "stage2",
                    "skip_stage2", "external_only", "seeds", "metric", "log_interval", "eval_interval",
                    "eval_batch_size"},
                   "");
    std::string schema = kRunSchema;
    read_opt(j, "schema", schema);
    if (schema != kRunSchema) throw ConfigError("unsupported config schema '" + schema + "'");

    RunConfig c;
    c.corpus = resolve(j, "corpus", base_dir);
    c.index = resolve(j, "index", base_dir);
    c.run_dir = resolve(j, "run_dir", base_dir);
    if (auto it = j.find("task"); it != j.end()) {
        reject_unknown(*it, {"train", "dev", "test", "label_names"}, "task.");
        c.task_train = resolve(*it, "train", base_dir);
        c.task_dev = resolve(*it, "dev", base_dir);
        c.task_test = resolve(*it, "test", base_dir);
        read_opt(*it, "label_names", c.label_names);
    }

    auto& p = c.plan;
    if (auto it = j.find("retrieval"); it != j.end()) {
        reject_unknown(*it, {"method", "k", "query_mode", "rake_threshold", "max_keywords", "k1", "b"}, "retrieval.");
        std::string method = to_string(p.retrieval.method), mode = to_string(p.retrieval.query_mode);
        read_opt(*it, "method", method);
        read_opt(*it, "query_mode", mode);
        p.retrieval.method = parse_retrieval_method(method);
        p.retrieval.query_mode = parse_query_mode(mode);
        read_opt(*it, "k", p.retrieval.k);
        read_opt(*it, "rake_threshold", p.retrieval.rake_threshold);
        read_opt(*it, "max_keywords", p.retrieval.max_keywords);
        read_opt(*it, "k1", p.retrieval.bm25.k1);
        read_opt(*it, "b", p.retrieval.bm25.b);
    }
    std::string scale = to_string(p.scale), metric = to_string(p.metric);
    read_opt(j, "scale", scale);
    read_opt(j, "metric", metric);
    p.scale = parse_scale(scale);
    p.metric = parse_metric(metric);

    if (auto it = j.find("model"); it != j.end()) {
        reject_unknown(*it, {"hidden", "layers", "heads", "ffn", "max_vocab"}, "model.");
        read_opt(*it, "hidden", c.model.hidden);
        read_opt(*it, "layers", c.model.layers);
        read_opt(*it, "heads", c.model.heads);
        read_opt(*it, "ffn", c.model.ffn);
        read_opt(*it, "max_vocab", c.model.max_vocab);
    }
    if (auto it = j.find("stage1"); it != j.end()) {
        reject_unknown(*it, {"rho1", "rho2", "steps", "batch_size", "seq_len", "lr", "warmup_fraction", "weight_decay"},
                       "stage1.");
        auto& s = p.stage1;
        read_opt(*it, "rho1", s.rho1);
        read_opt(*it, "rho2", s.rho2);
        read_opt(*it, "steps", s.steps);
        read_opt(*it, "batch_size", s.batch_size);
        read_opt(*it, "seq_len", s.seq_len);
        read_opt(*it, "lr", s.lr);
        read_opt(*it, "warmup_fraction", s.warmup_fraction);
        read_opt(*it, "weight_decay", s.weight_decay);
    }
    if (auto it = j.find("stage2"); it != j.end()) {
        reject_unknown(*it, {"steps", "batch_size", "seq_len", "lr", "warmup_fraction", "weight_decay"}, "stage2.");
        auto& s = p.stage2;
        read_opt(*it, "steps", s.steps);
        read_opt(*it, "batch_size", s.batch_size);
        read_opt(*it, "seq_len", s.seq_len);
        read_opt(*it, "lr", s.lr);
        read_opt(*it, "warmup_fraction", s.warmup_fraction);
        read_opt(*it, "weight_decay", s.weight_decay);
    }
    if (auto it = j.find("seeds"); it != j.end()) {
        reject_unknown(*it, {"init", "masking", "data"}, "seeds.");
        read_opt(*it, "init", p.seeds.init);
        read_opt(*it, "masking", p.seeds.masking);
        read_opt(*it, "data", p.seeds.data);
    }
    read_opt(j, "skip_stage2", p.skip_stage2);
    read_opt(j, "external_only", p.external_only);
    read_opt(j, "log_interval", p.log_interval);
    read_opt(j, "eval_interval", p.eval_interval);
    read_opt(j, "eval_batch_size", p.eval_batch_size);

    if (p.stage1.rho1 < 0) throw ConfigError("stage1.rho1 must be >= 0");
    if (p.stage1.rho2 < 0) throw ConfigError("stage1.rho2 must be >= 0");
    if (p.stage1.steps < 1) throw ConfigError("stage1.steps must be >= 1");
    if (p.stage2.steps < 0) throw ConfigError("stage2.steps must be >= 0");
    if (p.stage1.batch_size < 1 || p.stage2.batch_size < 1) throw ConfigError("batch sizes must be >= 1");
    if (p.stage1.seq_len < 3 || p.stage2.seq_len < 3) throw ConfigError("seq_len must be >= 3");
    if (p.eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
    return c;
}

json to_json(const RunConfig& c) {
    const auto& p = c.plan;
    return {
        {"schema", kRunSchema},
        {"corpus", c.corpus.string()},
        {"index", c.index.string()},
        {"task",
         {{"train", c.task_train.string()},
          {"dev", c.task_dev.string()},
          {"test", c.task_test.string()},
          {"label_names", c.label_names}}},
        {"run_dir", c.run_dir.string()},
        {"retrieval",
         {{"method", to_string(p.retrieval.method)},
          {"k", p.retrieval.k},
          {"query_mode", to_string(p.retrieval.query_mode)},
          {"rake_threshold", p.retrieval.rake_threshold},
          {"max_keywords", p.retrieval.max_keywords},
          {"k1", p.retrieval.bm25.k1},
          {"b", p.retrieval.bm25.b}}},
        {"scale", to_string(p.scale)},
        {"model",
         {{"hidden", c.model.hidden},
          {"layers", c.model.layers},
          {"heads", c.model.heads},
          {"ffn", c.model.ffn},
          {"max_vocab", c.model.max_vocab}}},
        {"stage1",
         {{"rho1", p.stage1.rho1},
          {"rho2", p.stage1.rho2},
          {"steps", p.stage1.steps},
          {"batch_size", p.stage1.batch_size},
          {"seq_len", p.stage1.seq_len},
          {"lr", p.stage1.lr},
          {"warmup_fraction", p.stage1.warmup_fraction},
          {"weight_decay", p.stage1.weight_decay}}},
        {"stage2",
         {{"steps", p.stage2.steps},
          {"batch_size", p.stage2.batch_size},
          {"seq_len", p.stage2.seq_len},
          {"lr", p.stage2.lr},
          {"warmup_fraction", p.stage2.warmup_fraction},
          {"weight_decay", p.stage2.weight_decay}}},
        {"skip_stage2", p.skip_stage2},
        {"external_only", p.external_only},
        {"seeds", {{"init", p.seeds.init}, {"masking", p.seeds.masking}, {"data", p.seeds.data}}},
        {"metric", to_string(p.metric)},
        {"log_interval", p.log_interval},
        {"eval_interval", p.eval_interval},
        {"eval_batch_size", p.eval_batch_size},
    };
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
    return run_config_from_json(j, std::filesystem::absolute(path).parent_path());
}

RunConfig tiny_profile() {
    RunConfig c;
    c.model.hidden = 64;
    c.model.layers = 4;
    c.model.heads = 4;
    c.model.ffn = 256;
    auto& p = c.plan;
    p.retrieval.k = 20;
    p.stage1.rho1 = 3;
    p.stage1.rho2 = 20.0;
    p.stage1.steps = 2000;
    p.stage1.batch_size = 16;
    p.stage1.seq_len = 32;
    p.stage1.lr = 1e-3;
    p.stage2.steps = 500;
    p.stage2.batch_size = 16;
    p.stage2.seq_len = 32;
    p.stage2.lr = 3e-4;
    return c;
}

LoadedInputs load_inputs(const RunConfig& config) {
    if (config.corpus.empty()) throw ConfigError("config: corpus path is required");
    if (config.task_train.empty() || config.task_test.empty()) throw ConfigError("config: task.train and task.test are required");
    LoadedInputs in;
    in.corpus = looks_like_store(config.corpus) ? DocumentStore::load(config.corpus) : ingest_corpus(config.corpus);
    in.index = config.index.empty() ? InvertedIndex::build(in.corpus) : InvertedIndex::load(config.index);
    in.task.label_names = config.label_names.empty() ? scan_label_names(config.task_train) : config.label_names;
    in.task.train = ingest_task(config.task_train, in.task.label_names);
    if (!config.task_dev.empty()) in.task.dev = ingest_task(config.task_dev, in.task.label_names);
    in.task.test = ingest_task(config.task_test, in.task.label_names);
    if (in.task.train.empty()) throw PreconditionError("task training data is empty");
    if (in.task.test.empty()) throw PreconditionError("task test data is empty");
    return in;
}

json flops_json(const FlopsReport& report, double baseline) {
    json stages = json::array();
    for (const auto& s : report.stages) {
        stages.push_back({{"stage", s.stage},
                          {"steps", s.steps},
                          {"batch_size", s.batch_size},
                          {"seq_len", s.seq_len},
                          {"tokens", to_decimal(s.tokens)}});
    }
    json j = {{"schema", kRunSchema},
              {"param_count", report.param_count},
              {"total_training_tokens", to_decimal(report.total_tokens)},
              {"est_flops", to_decimal(report.est_flops)},
              {"est_flops_approx", static_cast<double>(report.est_flops)},
              {"stages", std::move(stages)}};
    if (baseline > 0) {
        j["baseline_flops"] = baseline;
        j["ratio_to_baseline"] = report.ratio_to(baseline);
    }
    return j;
}

RunResult execute_run(const RunConfig& config, std::ostream* log, std::int64_t dump_batches) {
    if (config.run_dir.empty()) throw ConfigError("config: run_dir is required");
    auto say = [&](const std::string& msg) {
        if (log != nullptr) *log << msg << std::endl;
    };
    const auto& seeds = config.plan.seeds;
    say("seeds: init=" + std::to_string(seeds.init) + " masking=" + std::to_string(seeds.masking) +
        " data=" + std::to_string(seeds.data));

    auto inputs = load_inputs(config);
    say("corpus: " + std::to_string(inputs.corpus.size()) + " documents, " + std::to_string(inputs.index.num_terms()) +
        " indexed terms");

    RunResult result;
    result.resolved = config;
    result.resolved.label_names = inputs.task.label_names;
    result.data = prepare_data(inputs.corpus, inputs.index, inputs.task, config.plan, config.model);
    result.resolved.plan.retrieval.k = result.data.retrieval.params.k;
    say("retrieval: K=" + std::to_string(result.data.retrieval.params.k) + " |S|=" +
        std::to_string(result.data.retrieval.doc_ids.size()) + " vocab=" + std::to_string(result.data.vocab.size()));

    const auto& dir = config.run_dir;
    std::filesystem::create_directories(dir / "checkpoints");
    if (dump_batches > 0) {
        const auto internal = make_internal_pool(result.data.train, config.plan.stage1.seq_len);
        const auto external = make_external_pool(result.data.external, config.plan.stage1.seq_len);
        std::ofstream out(dir / "batches.jsonl", std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / "batches.jsonl").string());
        dump_batches_jsonl(stage1_stream(config.plan, result.data.model, internal, external), dump_batches, out);
    }

    result.outcome = train_and_evaluate(result.data, result.resolved.plan);
    say("final (stage " + result.outcome.final_stage + ") test " + to_string(config.plan.metric) + " = " +
        std::to_string(metric_value(result.outcome.final_test, config.plan.metric)));

    auto write_text = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out) throw IoError("write failed: " + path.string());
    };
    write_text(dir / "config.json", to_json(result.resolved).dump(2) + "\n");
    std::string metrics;
    for (const auto& line : result.outcome.metrics_lines) metrics += line + "\n";
    write_text(dir / "metrics.jsonl", metrics);
    write_text(dir / "flops.json", flops_json(result.outcome.flops).dump(2) + "\n");
    result.data.retrieval.save(dir / "retrieval.jsonl");

    Checkpoint ckpt{result.data.model, result.data.vocab, result.data.label_names, result.outcome.stage1_params};
    save_checkpoint(ckpt, dir / "checkpoints" / "stage1.ckpt");
    ckpt.params = result.outcome.final_params;
    save_checkpoint(ckpt, dir / "checkpoints" / "final.ckpt");
    return result;
}

}  // namespace tlm
