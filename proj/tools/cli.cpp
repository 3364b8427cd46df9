#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlm/analysis.hpp"
#include "tlm/checkpoint.hpp"
#include "tlm/corpus.hpp"
#include "tlm/error.hpp"
#include "tlm/inverted_index.hpp"
#include "tlm/retrieval.hpp"
#include "tlm/run_config.hpp"
#include "tlm/synthetic.hpp"

namespace tlm::cli {
namespace fs = std::filesystem;

namespace {

std::string format_double(double v, const char* fmt = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

/// Command-line values that, when given, replace the corresponding config keys.
struct Overrides {
    std::string run_dir;
    bool skip_stage2 = false;
    bool external_only = false;
    std::string retrieval;
    std::optional<std::size_t> k;
    std::optional<std::int64_t> rho1;
    std::optional<double> rho2;
    std::optional<std::int64_t> stage1_steps;
    std::optional<std::int64_t> stage2_steps;
    std::optional<std::uint64_t> seed_init, seed_masking, seed_data;

    void apply(RunConfig& c) const {
        auto& p = c.plan;
        if (!run_dir.empty()) c.run_dir = fs::absolute(run_dir);
        if (skip_stage2) p.skip_stage2 = true;
        if (external_only) p.external_only = true;
        if (!retrieval.empty()) p.retrieval.method = parse_retrieval_method(retrieval);
        if (k) p.retrieval.k = *k;
        if (rho1) p.stage1.rho1 = *rho1;
        if (rho2) p.stage1.rho2 = *rho2;
        if (stage1_steps) p.stage1.steps = *stage1_steps;
        if (stage2_steps) p.stage2.steps = *stage2_steps;
        if (seed_init) p.seeds.init = *seed_init;
        if (seed_masking) p.seeds.masking = *seed_masking;
        if (seed_data) p.seeds.data = *seed_data;
    }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_flag("--skip-stage2", o.skip_stage2, "Stop after stage 1 (metrics tagged stage \"1\")");
    cmd->add_flag("--external-only", o.external_only, "Stage 1 on retrieved data only, no task batches");
    cmd->add_option("--retrieval", o.retrieval, "Retrieval method override")->check(CLI::IsMember({"bm25", "random"}));
    cmd->add_option("--k", o.k, "Documents retrieved per task example (0 = size rule)");
    cmd->add_option("--stage1-steps", o.stage1_steps, "Stage-1 step count override");
    cmd->add_option("--stage2-steps", o.stage2_steps, "Stage-2 step count override");
    cmd->add_option("--seed-init", o.seed_init, "Parameter initialization seed override");
    cmd->add_option("--seed-masking", o.seed_masking, "MLM masking seed override");
    cmd->add_option("--seed-data", o.seed_data, "Data order / random retrieval seed override");
}

/// Prefix naming the failure class; preconditions and divergences carry their own.
std::string error_category(const Error& e) {
    if (dynamic_cast<const PreconditionError*>(&e) != nullptr) return "";
    if (dynamic_cast<const DivergenceError*>(&e) != nullptr) return "";
    if (dynamic_cast<const FormatError*>(&e) != nullptr) return "format: ";
    if (dynamic_cast<const IoError*>(&e) != nullptr) return "io: ";
    return "config: ";
}

void print_seeds(const RunConfig& c, std::ostream& out) {
    const auto& s = c.plan.seeds;
    out << "seeds: init=" << s.init << " masking=" << s.masking << " data=" << s.data << "\n";
}

void print_flops(const FlopsReport& r, double baseline, std::ostream& out) {
    for (const auto& s : r.stages) {
        out << "stage " << s.stage << ": steps=" << s.steps << " batch_size=" << s.batch_size << " seq_len=" << s.seq_len
            << " tokens=" << to_decimal(s.tokens) << "\n";
    }
    out << "params: " << r.param_count << "\n";
    out << "training_tokens: " << to_decimal(r.total_tokens) << "\n";
    out << "est_flops: " << to_decimal(r.est_flops) << " (" << format_double(static_cast<double>(r.est_flops), "%.4e")
        << ")\n";
    if (baseline > 0) out << "ratio_to_baseline: " << format_double(r.ratio_to(baseline), "%.6e") << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Task-driven language modeling: retrieval, joint training and analysis", "tlm"};
    app.require_subcommand(1);
    app.fallthrough(false);

    // ingest
    std::string ingest_in, ingest_out, ingest_tag = "general";
    auto* ingest = app.add_subcommand("ingest", "Load a JSONL corpus into a document store");
    ingest->add_option("corpus", ingest_in, "Corpus JSONL ({\"id\", \"text\"} per line)")->required();
    ingest->add_option("--out", ingest_out, "Output store path")->required();
    ingest->add_option("--tag", ingest_tag, "Source tag recorded on every document")->capture_default_str();

    // index
    std::string index_in, index_out;
    auto* index = app.add_subcommand("index", "Build a BM25 inverted index over a store");
    index->add_option("store", index_in, "Document store (or corpus JSONL)")->required();
    index->add_option("--out", index_out, "Output index path")->required();

    // retrieve
    std::string ret_index, ret_task, ret_out, ret_mode = "bm25", ret_query = "full";
    std::size_t ret_k = 0;
    RetrievalParams ret_params;
    std::vector<std::string> ret_labels;
    auto* retrieve = app.add_subcommand("retrieve", "Retrieve top-K documents per task example");
    retrieve->add_option("index", ret_index, "Inverted index")->required();
    retrieve->add_option("task", ret_task, "Task JSONL ({\"id\", \"text\", \"label\"} per line)")->required();
    retrieve->add_option("--k", ret_k, "Documents per task example")->required();
    retrieve->add_option("--mode", ret_mode, "Retrieval method")->check(CLI::IsMember({"bm25", "random"}))->capture_default_str();
    retrieve->add_option("--query", ret_query, "Query construction")->check(CLI::IsMember({"full", "rake"}))->capture_default_str();
    retrieve->add_option("--out", ret_out, "Output retrieval set (JSONL)")->required();
    retrieve->add_option("--seed", ret_params.seed, "Seed for random retrieval")->capture_default_str();
    retrieve->add_option("--rake-threshold", ret_params.rake_threshold, "Token count above which RAKE queries apply")
        ->capture_default_str();
    retrieve->add_option("--max-keywords", ret_params.max_keywords, "RAKE phrases kept per query")->capture_default_str();
    retrieve->add_option("--k1", ret_params.bm25.k1, "BM25 term saturation")->capture_default_str();
    retrieve->add_option("--b", ret_params.bm25.b, "BM25 length normalization")->capture_default_str();
    retrieve->add_option("--labels", ret_labels, "Label names (default: labels found in the task file)")->delimiter(',');

    // train
    std::string train_config;
    std::int64_t dump_batches = 0;
    Overrides train_over;
    auto* train = app.add_subcommand("train", "Retrieve, run stage 1 and stage 2, evaluate");
    train->add_option("--config", train_config, "Run config JSON")->required();
    train->add_option("--run-dir", train_over.run_dir, "Run directory override");
    add_overrides(train, train_over);
    train->add_option("--rho1", train_over.rho1, "External batches per internal batch override");
    train->add_option("--rho2", train_over.rho2, "Internal MLM weight override");
    train->add_option("--dump-batches", dump_batches, "Write the first N stage-1 batches to batches.jsonl");

    // grid
    std::string grid_config, grid_out;
    std::vector<std::int64_t> grid_rho1;
    std::vector<double> grid_rho2;
    std::size_t grid_seeds = 3;
    Overrides grid_over;
    auto* grid = app.add_subcommand("grid", "Grid search over rho1 x rho2 with seed replicates");
    grid->add_option("--config", grid_config, "Run config JSON")->required();
    grid->add_option("--rho1", grid_rho1, "rho1 values")->required()->delimiter(',');
    grid->add_option("--rho2", grid_rho2, "rho2 values")->required()->delimiter(',');
    grid->add_option("--seeds", grid_seeds, "Seed replicates per cell")->capture_default_str();
    grid->add_option("--out", grid_out, "Also write the table as JSONL");
    add_overrides(grid, grid_over);

    // flops
    std::string flops_config;
    double flops_baseline = 0.0;
    std::size_t flops_vocab = 0, flops_classes = 0;
    Overrides flops_over;
    auto* flops = app.add_subcommand("flops", "Training token and FLOPs estimate for a config");
    flops->add_option("--config", flops_config, "Run config JSON")->required();
    flops->add_option("--baseline", flops_baseline, "Baseline FLOPs to compare against");
    flops->add_option("--vocab-size", flops_vocab, "Use this vocabulary size instead of building it from the data");
    flops->add_option("--num-classes", flops_classes, "Class count with --vocab-size (default: config labels or 2)");
    add_overrides(flops, flops_over);

    // heads
    std::string heads_ckpt, heads_probe, heads_out, heads_tag = "model";
    auto* heads = app.add_subcommand("heads", "Classify attention heads on a probe sentence");
    heads->add_option("checkpoint", heads_ckpt, "Model checkpoint")->required();
    heads->add_option("--probe", heads_probe, "Probe sentence")->required();
    heads->add_option("--out", heads_out, "Output JSONL, one record per head")->required();
    heads->add_option("--tag", heads_tag, "Model tag recorded in the output")->capture_default_str();

    // synth
    std::string synth_out;
    SyntheticSpec synth_spec;
    auto* synth = app.add_subcommand("synth", "Generate the planted-topic corpus and task plus a run config");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_spec.seed, "Generator seed")->capture_default_str();
    synth->add_option("--docs", synth_spec.corpus_docs, "Corpus documents")->capture_default_str();
    synth->add_option("--train", synth_spec.train_examples, "Training examples")->capture_default_str();
    synth->add_option("--dev", synth_spec.dev_examples, "Dev examples")->capture_default_str();
    synth->add_option("--test", synth_spec.test_examples, "Test examples")->capture_default_str();
    synth->add_option("--topic-words", synth_spec.topic_words_per_class, "Topic words per class")->capture_default_str();
    synth->add_option("--topic-terms", synth_spec.topic_terms_per_example, "Topic terms planted per example")
        ->capture_default_str();

    // convert-text
    std::string conv_dir, conv_out;
    auto* convert = app.add_subcommand("convert-text", "Convert a directory of text files (one per document) to JSONL");
    convert->add_option("dir", conv_dir, "Directory of text files")->required();
    convert->add_option("--out", conv_out, "Output corpus JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        if (app.get_subcommands().empty()) {
            out << app.help("", CLI::AppFormatMode::All);
        } else {
            out << app.get_subcommands().front()->help();
        }
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "ERR: usage: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*ingest) {
            const auto store = ingest_corpus(fs::path(ingest_in), ingest_tag);
            store.save(fs::path(ingest_out));
            out << "ingested " << store.size() << " documents, vocabulary " << store.vocabulary().size() << "\n";
        } else if (*index) {
            const fs::path in(index_in);
            std::ifstream probe(in, std::ios::binary);
            std::string first;
            std::getline(probe, first);
            const auto store = first == "TLMSTORE1" ? DocumentStore::load(in) : ingest_corpus(in);
            const auto idx = InvertedIndex::build(store);
            idx.save(fs::path(index_out));
            out << "indexed " << idx.num_docs() << " documents, " << idx.num_terms() << " terms, avgdl "
                << format_double(idx.avg_doc_length()) << "\n";
        } else if (*retrieve) {
            ret_params.k = ret_k;
            ret_params.method = parse_retrieval_method(ret_mode);
            ret_params.query_mode = parse_query_mode(ret_query);
            if (ret_k == 0) throw PreconditionError("K must be >= 1");
            const auto idx = InvertedIndex::load(fs::path(ret_index));
            const auto labels = ret_labels.empty() ? scan_label_names(ret_task) : ret_labels;
            const auto task = ingest_task(fs::path(ret_task), labels);
            const auto set = ret_params.method == RetrievalMethod::bm25
                                 ? retrieve_external(idx, task, ret_params)
                                 : retrieve_random(idx.doc_ids(), task, ret_params);
            set.save(fs::path(ret_out));
            out << "retrieved " << set.doc_ids.size() << " distinct documents for " << task.size() << " examples\n";
        } else if (*train) {
            auto config = load_run_config(train_config);
            train_over.apply(config);
            const auto result = execute_run(config, &out, dump_batches);
            out << "run directory: " << config.run_dir.string() << "\n";
            (void)result;
        } else if (*grid) {
            auto config = load_run_config(grid_config);
            grid_over.apply(config);
            print_seeds(config, out);
            if (grid_seeds == 0) throw PreconditionError("--seeds must be >= 1");
            const auto inputs = load_inputs(config);
            const auto cells = grid_search(inputs.corpus, inputs.index, inputs.task, config.plan, config.model, grid_rho1,
                                           grid_rho2, grid_seeds);
            std::optional<std::ofstream> table;
            if (!grid_out.empty()) table = open_out(grid_out);
            out << "rho1\trho2\tmean\tstd\tper_seed\n";
            for (const auto& c : cells) {
                out << c.rho1 << "\t" << format_double(c.rho2) << "\t" << format_double(c.mean, "%.4f") << "\t"
                    << format_double(c.stddev, "%.4f") << "\t";
                for (std::size_t i = 0; i < c.per_seed.size(); ++i) {
                    out << (i ? "," : "") << format_double(c.per_seed[i], "%.4f");
                }
                out << "\n";
                if (table) {
                    *table << nlohmann::json{{"rho1", c.rho1},     {"rho2", c.rho2},     {"mean", c.mean},
                                             {"std", c.stddev},    {"per_seed", c.per_seed},
                                             {"metric", to_string(config.plan.metric)}}
                                  .dump()
                           << "\n";
                }
            }
        } else if (*flops) {
            auto config = load_run_config(flops_config);
            flops_over.apply(config);
            ModelConfig model;
            if (flops_vocab > 0) {
                model.vocab_size = flops_vocab;
                model.hidden = config.model.hidden;
                model.layers = config.model.layers;
                model.heads = config.model.heads;
                model.ffn = config.model.ffn;
                model.max_seq_len = std::max(config.plan.stage1.seq_len, config.plan.stage2.seq_len);
                model.num_classes = flops_classes > 0                 ? flops_classes
                                    : !config.label_names.empty() ? config.label_names.size()
                                                                  : 2;
                model.validate();
            } else {
                const auto inputs = load_inputs(config);
                model = prepare_data(inputs.corpus, inputs.index, inputs.task, config.plan, config.model).model;
            }
            print_flops(flops_report(config.plan, model), flops_baseline, out);
        } else if (*heads) {
            const auto ckpt = load_checkpoint(fs::path(heads_ckpt));
            const auto profile = probe_checkpoint(ckpt, heads_probe, heads_tag);
            auto file = open_out(heads_out);
            export_heads_jsonl(profile, file);
            const std::vector<AttentionProfile> one{profile};
            const auto counts = head_census(one).at(heads_tag);
            out << "heads: " << profile.heads.size() << " positional=" << counts.positional
                << " vertical=" << counts.vertical << " other=" << counts.other << "\n";
        } else if (*synth) {
            const fs::path dir(synth_out);
            const auto data = make_synthetic(synth_spec);
            write_synthetic(data, dir);
            auto config = tiny_profile();
            config.corpus = "corpus.jsonl";
            config.task_train = "train.jsonl";
            config.task_dev = "dev.jsonl";
            config.task_test = "test.jsonl";
            config.run_dir = "run";
            auto file = open_out(dir / "config.json");
            file << to_json(config).dump(2) << "\n";
            out << "wrote " << data.corpus.size() << " documents, " << data.task.train.size() << "/"
                << data.task.dev.size() << "/" << data.task.test.size() << " train/dev/test examples and config.json to "
                << dir.string() << "\n";
        } else if (*convert) {
            auto file = open_out(conv_out);
            const auto n = convert_text_directory(conv_dir, file);
            out << "converted " << n << " files\n";
        }
    } catch (const Error& e) {
        err << "ERR: " << error_category(e) << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::config: return kExitConfig;
            case ErrorKind::divergence: return kExitDivergence;
            case ErrorKind::io: return kExitIo;
        }
        return kExitConfig;
    } catch (const fs::filesystem_error& e) {
        err << "ERR: io: " << e.what() << "\n";
        return kExitIo;
    } catch (const nlohmann::json::exception& e) {
        err << "ERR: format: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "ERR: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

}  // namespace tlm::cli
