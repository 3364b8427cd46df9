#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tlm/checkpoint.hpp"
#include "tlm/error.hpp"
#include "tlm/run_config.hpp"
#include "tlm/synthetic.hpp"
#include "tlm/trainer.hpp"

using namespace tlm;

namespace {

struct SmallSetup {
    SyntheticData data;
    InvertedIndex index;
    TrainPlan plan;
    ModelShape shape;
};

const SmallSetup& small_setup() {
    static const SmallSetup setup = [] {
        SyntheticSpec spec;
        spec.corpus_docs = 400;
        spec.train_examples = 64;
        spec.dev_examples = 16;
        spec.test_examples = 32;
        spec.seed = 5;
        SmallSetup s{make_synthetic(spec), {}, {}, {}};
        s.index = InvertedIndex::build(s.data.corpus);
        s.plan.retrieval.k = 5;
        s.plan.stage1 = {.rho1 = 3, .rho2 = 20.0, .steps = 40, .batch_size = 4, .seq_len = 16, .lr = 1e-3};
        s.plan.stage2 = {.steps = 12, .batch_size = 4, .seq_len = 16, .lr = 3e-4};
        s.plan.eval_interval = 4;
        s.plan.log_interval = 10;
        s.shape = {.hidden = 16, .layers = 1, .heads = 2, .ffn = 32, .max_vocab = 2000};
        return s;
    }();
    return setup;
}

PreparedData prepare(const TrainPlan& plan) {
    const auto& s = small_setup();
    return prepare_data(s.data.corpus, s.index, s.data.task, plan, s.shape);
}

}  // namespace

TEST_CASE("default K follows the training-set size rule") {
    for (Scale scale : {Scale::small, Scale::medium, Scale::large}) {
        const std::size_t factor = scale == Scale::large ? 2 : 1;
        CHECK(default_k(1, scale) == 5000 * factor);
        CHECK(default_k(3000, scale) == 5000 * factor);
        CHECK(default_k(4999, scale) == 5000 * factor);
        CHECK(default_k(5000, scale) == 500 * factor);
        CHECK(default_k(50000, scale) == 500 * factor);
        CHECK(default_k(100000, scale) == 500 * factor);
        CHECK(default_k(100001, scale) == 50 * factor);
    }
    CHECK(default_k(200000, Scale::medium) == 50);
    CHECK(default_k(3000, Scale::large) == 10000);
    CHECK_THROWS_AS(default_k(0, Scale::small), PreconditionError);
    CHECK(parse_scale("large") == Scale::large);
    CHECK_THROWS_AS(parse_scale("huge"), ConfigError);
}

TEST_CASE("classification metrics") {
    SUBCASE("perfect predictions") {
        const std::vector<int> y{0, 1, 2, 1};
        const auto r = compute_metrics(y, y, 3);
        CHECK(r.accuracy == 1.0);
        CHECK(r.micro_f1 == 1.0);
        CHECK(r.macro_f1 == 1.0);
    }
    SUBCASE("constant predictor on balanced truth") {
        const std::vector<int> truth{0, 1, 0, 1}, pred{0, 0, 0, 0};
        const auto r = compute_metrics(truth, pred, 2);
        CHECK(r.accuracy == 0.5);
        CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
        CHECK(r.per_class[1].f1 == 0.0);
        CHECK(r.per_class[1].precision == 0.0);
        CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0));
        CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{2, 0}, {2, 0}});
    }
    SUBCASE("identities on random instances") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t classes = 2 + rng() % 4;
            const std::size_t n = 1 + rng() % 50;
            std::vector<int> truth(n), pred(n);
            for (std::size_t i = 0; i < n; ++i) {
                truth[i] = static_cast<int>(rng() % classes);
                pred[i] = static_cast<int>(rng() % classes);
            }
            const auto r = compute_metrics(truth, pred, classes);
            CHECK(r.micro_f1 == doctest::Approx(r.accuracy).epsilon(1e-12));
            for (double v : {r.accuracy, r.micro_f1, r.macro_f1}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            std::vector<int> perm(classes);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            auto t2 = truth, p2 = pred;
            for (auto& v : t2) v = perm[static_cast<std::size_t>(v)];
            for (auto& v : p2) v = perm[static_cast<std::size_t>(v)];
            CHECK(compute_metrics(t2, p2, classes).macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-12));
        }
    }
    const std::vector<int> none;
    CHECK_THROWS_AS(compute_metrics(none, none, 2), PreconditionError);
    const std::vector<int> a{0}, b{0, 1};
    CHECK_THROWS_AS(compute_metrics(a, b, 2), PreconditionError);
}

TEST_CASE("FLOPs accounting is integer exact") {
    const auto one = make_flops_report({{"1", 100, 8, 128, 0}}, 1000000);
    CHECK(one.total_tokens == 102400);
    CHECK(one.est_flops == static_cast<uint128>(614400000000ULL));
    CHECK(to_decimal(one.est_flops) == "614400000000");
    CHECK(one.ratio_to(4.36e21) == doctest::Approx(6.144e11 / 4.36e21));

    const auto two = make_flops_report({{"1", 100, 8, 128, 0}, {"2", 30, 4, 64, 0}}, 1000000);
    CHECK(two.total_tokens == 102400 + 7680);
    CHECK(two.est_flops == 6 * static_cast<uint128>(1000000) * (102400 + 7680));
    REQUIRE(two.stages.size() == 2);
    CHECK(two.stages[1].tokens == 7680);

    // 6 * 1e9 params * (1e6 * 1e4 * 1e4) tokens = 6e23, well past 64 bits.
    const auto big = make_flops_report({{"1", 1000000, 10000, 10000, 0}}, 1000000000);
    CHECK(to_decimal(big.est_flops) == "600000000000000000000000");
    const uint128 huge = ~static_cast<uint128>(0) / 2;
    CHECK(to_decimal(huge) == "170141183460469231731687303715884105727");
    CHECK_THROWS_AS(make_flops_report({{"1", ~0ULL, ~0ULL, ~0ULL, 0}}, ~0ULL), ConfigError);
}

TEST_CASE("FLOPs report for a plan") {
    TrainPlan plan;
    plan.stage1.steps = 100;
    plan.stage1.batch_size = 8;
    plan.stage1.seq_len = 128;
    plan.stage2.steps = 10;
    plan.stage2.batch_size = 2;
    plan.stage2.seq_len = 64;
    ModelConfig c;
    c.vocab_size = 100;
    c.hidden = 16;
    c.heads = 2;
    c.layers = 1;
    const auto r = flops_report(plan, c);
    CHECK(r.param_count == c.num_params());
    CHECK(r.total_tokens == 102400 + 1280);
    CHECK(r.est_flops == 6 * static_cast<uint128>(c.num_params()) * r.total_tokens);
    plan.skip_stage2 = true;
    CHECK(flops_report(plan, c).stages.size() == 1);
}

TEST_CASE("mean and sample standard deviation") {
    const std::vector<double> v{1, 2, 3, 4};
    const auto [m, s] = mean_std(v);
    CHECK(m == 2.5);
    CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
    const std::vector<double> one{0.7};
    CHECK(mean_std(one).second == 0.0);
}

TEST_CASE("training vocabulary orders by frequency then first occurrence") {
    const std::vector<std::string> a{"b", "a", "b", "c", "."}, b{"c", "d", "b"};
    const auto v = build_training_vocabulary({&a, &b}, 9);
    CHECK(v.size() == 9);
    CHECK(v.term_of(6) == "b");
    CHECK(v.term_of(7) == "c");
    CHECK(v.term_of(8) == "a");
    CHECK(v.lookup("d") == Vocabulary::kUnk);
}

TEST_CASE("windowed task loss groups internal steps") {
    StageLog log;
    for (int i = 0; i < 8; ++i) {
        log.steps.push_back({Origin::external, 1.0, 1.0, 0.0});
        log.steps.push_back({Origin::internal, 0.0, 0.0, static_cast<double>(i)});
    }
    log.internal_updates = 8;
    CHECK(windowed_task_loss(log, 2) == std::vector<double>{0.5, 2.5, 4.5, 6.5});
    CHECK(windowed_task_loss(log, 3) == std::vector<double>{1.0, 4.0});
}

TEST_CASE("data preparation") {
    const auto& s = small_setup();
    auto plan = s.plan;
    const auto data = prepare(plan);
    CHECK(data.retrieval.params.k == 5);
    CHECK(std::is_sorted(data.retrieval.doc_ids.begin(), data.retrieval.doc_ids.end()));
    CHECK(data.external.size() == data.retrieval.doc_ids.size());
    CHECK(data.train.ids.size() == s.data.task.train.size());
    CHECK(data.test.labels.size() == s.data.task.test.size());
    CHECK(data.model.vocab_size == data.vocab.size());
    CHECK(data.model.num_classes == 2);

    plan.retrieval.k = 0;
    CHECK(prepare(plan).retrieval.params.k == default_k(s.data.task.train.size(), plan.scale));
}

TEST_CASE("stage 1 performs one internal update per interleave cycle") {
    const auto data = prepare(small_setup().plan);
    for (std::int64_t rho1 : {0, 1, 3, 7}) {
        auto plan = small_setup().plan;
        plan.stage1.rho1 = rho1;
        plan.stage1.steps = (rho1 + 1) * 5;
        const auto internal = make_internal_pool(data.train, plan.stage1.seq_len);
        const auto external = make_external_pool(data.external, plan.stage1.seq_len);
        auto params = init_params<float>(data.model, 1);
        const auto log = run_stage1(plan, data.model, params, internal, external);
        CHECK(log.internal_updates == 5);
        CHECK(log.steps.size() == static_cast<std::size_t>(plan.stage1.steps));
        for (std::size_t t = 0; t < log.steps.size(); ++t) {
            const bool internal_step = static_cast<std::int64_t>(t) % (rho1 + 1) == rho1;
            CHECK((log.steps[t].origin == Origin::internal) == internal_step);
            if (!internal_step) CHECK(log.steps[t].task == 0.0);
        }
    }
}

TEST_CASE("end-to-end training is deterministic") {
    const auto data = prepare(small_setup().plan);
    const auto a = train_and_evaluate(data, small_setup().plan);
    const auto b = train_and_evaluate(data, small_setup().plan);
    CHECK(params_hash(a.final_params) == params_hash(b.final_params));
    CHECK(params_hash(a.stage1_params) == params_hash(b.stage1_params));
    CHECK(a.metrics_lines == b.metrics_lines);
    CHECK(a.final_stage == "2");
    REQUIRE(a.stage2.has_value());
    CHECK_FALSE(a.stage2->dev_evals.empty());

    auto reseeded = small_setup().plan;
    reseeded.seeds.init += 1;
    CHECK(params_hash(train_and_evaluate(data, reseeded).stage1_params) != params_hash(a.stage1_params));
}

TEST_CASE("skipping stage 2 returns the stage-1 parameters") {
    auto plan = small_setup().plan;
    plan.skip_stage2 = true;
    const auto data = prepare(plan);
    const auto r = train_and_evaluate(data, plan);
    CHECK(r.final_stage == "1");
    CHECK_FALSE(r.stage2.has_value());
    CHECK(params_hash(r.final_params) == params_hash(r.stage1_params));
    CHECK(r.final_test.accuracy == r.stage1_test.accuracy);
    bool final_line = false;
    for (const auto& line : r.metrics_lines) {
        if (line.find("\"kind\":\"final\"") != std::string::npos) {
            final_line = true;
            CHECK(line.find("\"stage\":\"1\"") != std::string::npos);
        }
    }
    CHECK(final_line);
}

TEST_CASE("stage 2 with zero steps is the identity") {
    auto plan = small_setup().plan;
    plan.stage2.steps = 0;
    const auto data = prepare(plan);
    const auto internal = make_internal_pool(data.train, plan.stage2.seq_len);
    auto params = init_params<float>(data.model, 9);
    const auto before = params_hash(params);
    const auto r = run_stage2(plan, data.model, params, internal, nullptr);
    CHECK(params_hash(params) == before);
    CHECK(r.log.steps.empty());
}

TEST_CASE("stage 2 keeps the best dev checkpoint") {
    const auto& plan = small_setup().plan;
    const auto data = prepare(plan);
    const auto internal = make_internal_pool(data.train, plan.stage2.seq_len);
    const auto dev = make_internal_pool(data.dev, plan.stage2.seq_len);
    auto params = init_params<float>(data.model, 9);
    const auto r = run_stage2(plan, data.model, params, internal, &dev);
    REQUIRE_FALSE(r.dev_evals.empty());
    double best = -1.0;
    std::int64_t best_step = -1;
    for (const auto& e : r.dev_evals) {
        CHECK(e.split == "dev");
        if (e.result.accuracy > best) {
            best = e.result.accuracy;
            best_step = e.step;
        }
    }
    CHECK(r.selected_step == best_step);
    CHECK(evaluate(params, data.model, dev).accuracy == best);
    for (const auto& s : r.log.steps) CHECK(s.mlm == 0.0);
}

TEST_CASE("a diverging run aborts") {
    auto plan = small_setup().plan;
    plan.stage1.lr = 1e30;
    plan.stage1.warmup_fraction = 0.0;
    const auto data = prepare(plan);
    CHECK_THROWS_AS(train_and_evaluate(data, plan), DivergenceError);
}

TEST_CASE("grid search covers the cross product") {
    const auto& s = small_setup();
    auto plan = s.plan;
    plan.stage1.steps = 8;
    plan.stage2.steps = 2;
    const std::vector<std::int64_t> one_rho1{1};
    const std::vector<double> one_rho2{20};
    const auto single = grid_search(s.data.corpus, s.index, s.data.task, plan, s.shape, one_rho1, one_rho2, 1);
    REQUIRE(single.size() == 1);
    CHECK(single[0].per_seed.size() == 1);
    CHECK(single[0].stddev == 0.0);

    const std::vector<std::int64_t> rho1s{1999, 1, 3, 7, 19, 99, 499, 999};
    const std::vector<double> rho2s{1000, 20, 100};
    plan.stage1.steps = 2;
    plan.stage2.steps = 1;
    const auto full = grid_search(s.data.corpus, s.index, s.data.task, plan, s.shape, rho1s, rho2s, 1);
    REQUIRE(full.size() == 24);
    for (std::size_t i = 1; i < full.size(); ++i) {
        CHECK(std::pair(full[i - 1].rho1, full[i - 1].rho2) < std::pair(full[i].rho1, full[i].rho2));
    }

    const auto three = grid_search(s.data.corpus, s.index, s.data.task, plan, s.shape, one_rho1, one_rho2, 3);
    REQUIRE(three[0].per_seed.size() == 3);
    const auto [m, sd] = mean_std(three[0].per_seed);
    CHECK(three[0].mean == m);
    CHECK(three[0].stddev == sd);
}

TEST_CASE("run config JSON round trip and validation") {
    auto config = tiny_profile();
    config.corpus = "/data/corpus.jsonl";
    config.task_train = "/data/train.jsonl";
    config.task_test = "/data/test.jsonl";
    config.run_dir = "/runs/a";
    config.label_names = {"neg", "pos"};
    const auto j = to_json(config);
    CHECK(j.at("schema") == kRunSchema);
    CHECK(to_json(run_config_from_json(j)) == j);

    auto extra = j;
    extra["stage1"]["momentum"] = 0.9;
    CHECK_THROWS_AS(run_config_from_json(extra), ConfigError);
    auto schema = j;
    schema["schema"] = "TLMRUN0";
    CHECK_THROWS_AS(run_config_from_json(schema), ConfigError);
    auto negative = j;
    negative["stage1"]["rho2"] = -1.0;
    CHECK_THROWS_AS(run_config_from_json(negative), ConfigError);

    auto relative = j;
    relative["corpus"] = "corpus.jsonl";
    CHECK(run_config_from_json(relative, "/base").corpus == std::filesystem::path("/base/corpus.jsonl"));
}
