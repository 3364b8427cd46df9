#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tlm/error.hpp"
#include "tlm/inverted_index.hpp"
#include "tlm/rake.hpp"
#include "tlm/retrieval.hpp"
#include "tlm/tokenizer.hpp"

using namespace tlm;
using Terms = std::vector<std::string>;

namespace {

DocumentStore make_store(const std::vector<std::string>& texts, DocId first_id = 0) {
    DocumentStore store;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Document d;
        d.doc_id = first_id + i;
        d.text = texts[i];
        d.tokens = tokenize(texts[i]);
        d.source_tag = "general";
        store.add(std::move(d));
    }
    return store;
}

std::string random_text(std::mt19937_64& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    // Skewed word choice so document frequencies vary.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string text;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) {
        const auto w = static_cast<std::size_t>(std::pow(u(rng), 2.0) * static_cast<double>(vocab));
        text += "w" + std::to_string(w) + (i % 7 == 6 ? " . " : " ");
    }
    return text;
}

using oracle::BruteForceBm25;

/// RAKE written straight from its definition over whitespace-separated
/// lowercase ASCII words.
Terms rake_oracle(const std::string& text, const std::set<std::string>& stop, std::size_t max_keywords) {
    std::vector<std::vector<std::string>> phrases;
    std::vector<std::string> cur;
    std::istringstream in(text);
    for (std::string w; in >> w;) {
        if (w == "." || w == "," || stop.count(w)) {
            if (!cur.empty()) phrases.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(w);
        }
    }
    if (!cur.empty()) phrases.push_back(cur);
    auto word_score = [&](const std::string& w) {
        double freq = 0, deg = 0;
        for (const auto& p : phrases) {
            for (const auto& x : p) {
                if (x == w) {
                    freq += 1;
                    deg += static_cast<double>(p.size());
                }
            }
        }
        return deg / freq;
    };
    std::vector<std::pair<std::string, double>> ranked;
    for (const auto& p : phrases) {
        std::string s;
        double score = 0;
        for (const auto& w : p) {
            s += (s.empty() ? "" : " ") + w;
            score += word_score(w);
        }
        if (std::none_of(ranked.begin(), ranked.end(), [&](const auto& r) { return r.first == s; })) {
            ranked.emplace_back(s, score);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Terms out;
    for (std::size_t i = 0; i < ranked.size() && i < max_keywords; ++i) out.push_back(ranked[i].first);
    return out;
}

std::vector<TaskExample> make_task(const std::vector<std::string>& texts) {
    std::vector<TaskExample> task;
    for (std::size_t i = 0; i < texts.size(); ++i) task.push_back({i, texts[i], static_cast<int>(i % 2)});
    return task;
}

}  // namespace

TEST_CASE("index statistics on a two-document corpus") {
    const auto idx = InvertedIndex::build(make_store({"a b a", "b c"}));
    CHECK(idx.num_docs() == 2);
    CHECK(idx.df("a") == 1);
    CHECK(idx.df("b") == 2);
    CHECK(idx.df("c") == 1);
    CHECK(idx.df("zzz") == 0);
    CHECK(idx.tf("a", 0) == 2);
    CHECK(idx.tf("a", 1) == 0);
    CHECK(idx.avg_doc_length() == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(idx.doc_length(0) == 3);
}

TEST_CASE("index of a single empty document") {
    const auto idx = InvertedIndex::build(make_store({""}));
    CHECK(idx.num_docs() == 1);
    CHECK(idx.avg_doc_length() == 0.0);
    CHECK(idx.num_terms() == 0);
    CHECK_THROWS_AS(InvertedIndex::build(DocumentStore{}), PreconditionError);
}

TEST_CASE("punctuation is not indexed") {
    const auto idx = InvertedIndex::build(make_store({"a , b .", "c !"}));
    CHECK(idx.df(".") == 0);
    CHECK(idx.df(",") == 0);
    CHECK(idx.doc_length(0) == 2);
    CHECK(idx.doc_length(1) == 1);
}

TEST_CASE("bm25 score matches the frozen oracle values") {
    const auto idx = InvertedIndex::build(make_store({"a b a", "b c"}));
    // Values from a standalone script evaluating the formula term by term.
    CHECK(bm25_score(idx, Terms{"a"}, 0) == doctest::Approx(0.902321773509988).epsilon(1e-12));
    CHECK(bm25_score(idx, Terms{"b"}, 1) == doctest::Approx(0.19856803215183175).epsilon(1e-12));
    // Repeated query terms count once.
    CHECK(bm25_score(idx, Terms{"a", "a"}, 0) == bm25_score(idx, Terms{"a"}, 0));
    CHECK(bm25_score(idx, Terms{"a"}, 1) == 0.0);
    CHECK(bm25_score(idx, Terms{"nothing"}, 0) == 0.0);
    CHECK_THROWS_AS(bm25_score(idx, Terms{"a"}, 42), PreconditionError);
    CHECK(top_k(idx, Terms{"nothing", "here"}, 5).empty());
    CHECK_THROWS_AS(top_k(idx, Terms{"a"}, 0), PreconditionError);
}

TEST_CASE("idf is non-increasing in df and scores are non-decreasing in tf") {
    for (std::uint64_t n : {1u, 2u, 10u, 1000u}) {
        for (std::uint64_t df = 0; df < n; ++df) {
            CHECK(bm25_idf(n, df) > 0.0);
            CHECK(bm25_idf(n, df + 1) <= bm25_idf(n, df));
        }
    }
    const Bm25Params p;
    for (double dl : {1.0, 5.0, 40.0}) {
        for (std::uint32_t tf = 0; tf < 50; ++tf) {
            CHECK(bm25_term_score(2.0, tf + 1, dl, 10.0, p) >= bm25_term_score(2.0, tf, dl, 10.0, p));
        }
    }
}

TEST_CASE("top_k returns every match when K exceeds the match count") {
    const auto idx = InvertedIndex::build(make_store({"x y", "y z", "q", "y y y"}));
    const auto hits = top_k(idx, Terms{"y"}, 10);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == 3);
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK_FALSE(ranks_before(hits[i], hits[i - 1]));
}

TEST_CASE("top_k equals brute-force scoring on a random corpus") {
    std::mt19937_64 rng(2024);
    std::vector<std::string> texts;
    for (int i = 0; i < 1000; ++i) texts.push_back(random_text(rng, 300, 0, 40));
    // Non-contiguous, unordered ids exercise the ordinal mapping.
    DocumentStore store;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Document d;
        d.doc_id = (i * 7919) % 1009 + 5;
        d.text = texts[i];
        d.tokens = tokenize(texts[i]);
        store.add(std::move(d));
    }
    const auto idx = InvertedIndex::build(store);
    const BruteForceBm25 oracle{store};
    for (int q = 0; q < 50; ++q) {
        const auto query = tokenize(random_text(rng, 330, 1, 8));
        const auto got = top_k(idx, query, 10);
        const auto want = oracle.rank(query, 10);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].doc_id == want[i].doc_id);
            CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
        }
    }
}

TEST_CASE("postings sums agree with naive counting on 10,000 documents") {
    std::mt19937_64 rng(99);
    std::vector<std::string> texts;
    for (int i = 0; i < 10000; ++i) texts.push_back(random_text(rng, 2000, 0, 30));
    const auto store = make_store(texts);
    const auto idx = InvertedIndex::build(store);

    std::map<std::string, std::uint64_t> df, tf_sum;
    std::uint64_t total_len = 0;
    for (const auto& d : store.documents()) {
        const auto w = BruteForceBm25::words(d);
        total_len += w.size();
        for (const auto& t : w) ++tf_sum[t];
        for (const auto& t : std::set<std::string>(w.begin(), w.end())) ++df[t];
    }
    CHECK(idx.num_terms() == df.size());
    CHECK(idx.total_length() == total_len);
    CHECK(idx.avg_doc_length() == doctest::Approx(static_cast<double>(total_len) / 10000.0).epsilon(1e-12));
    std::uint64_t all_tf = 0;
    for (const auto& term : idx.terms()) {
        const auto postings = idx.postings(term);
        CHECK(postings.size() == df[term]);
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < postings.size(); ++i) {
            s += postings[i].tf;
            if (i > 0) CHECK(postings[i].doc > postings[i - 1].doc);
        }
        CHECK(s == tf_sum[term]);
        all_tf += s;
    }
    CHECK(all_tf == total_len);
}

TEST_CASE("index save/load round trip") {
    std::mt19937_64 rng(5);
    std::vector<std::string> texts;
    for (int i = 0; i < 300; ++i) texts.push_back(random_text(rng, 100, 0, 20));
    const auto idx = InvertedIndex::build(make_store(texts, 40));
    std::stringstream buf;
    idx.save(buf);
    CHECK(buf.str().starts_with("TLMIDX1\n"));
    const auto back = InvertedIndex::load(buf);
    CHECK(back.doc_ids() == idx.doc_ids());
    CHECK(back.terms() == idx.terms());
    CHECK(back.avg_doc_length() == idx.avg_doc_length());
    const auto q = tokenize("w1 w2 w3 w50");
    CHECK(top_k(back, q, 20) == top_k(idx, q, 20));
    std::stringstream junk("TLMSTORE1\n");
    CHECK_THROWS_AS(InvertedIndex::load(junk), FormatError);
}

TEST_CASE("rake keywords follow degree over frequency") {
    const StopwordSet stop{"improves"};
    CHECK(rake_keywords("deep learning improves deep parsing", stop, 10) == Terms{"deep learning", "deep parsing"});
    CHECK(rake_keywords("deep learning improves deep parsing", stop, 1) == Terms{"deep learning"});
    CHECK(rake_keywords("the of and", StopwordSet{"the", "of", "and"}, 5).empty());
    CHECK(rake_keywords("", stop, 5).empty());
    // A longer phrase outranks isolated words.
    const auto kw = rake_keywords("fast retrieval engine, and cats", StopwordSet{"and"}, 5);
    CHECK(kw == Terms{"fast retrieval engine", "cats"});
}

TEST_CASE("rake agrees with a literal-definition oracle") {
    std::mt19937_64 rng(3);
    const Terms words{"alpha", "beta", "gamma", "delta", "of", "the", "and", ".", ","};
    const std::set<std::string> stop{"of", "the", "and"};
    const StopwordSet stop_set(stop.begin(), stop.end());
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        for (int i = 0; i < 25; ++i) text += words[rng() % words.size()] + " ";
        CHECK(rake_keywords(text, stop_set, 6) == rake_oracle(text, stop, 6));
    }
}

TEST_CASE("rake output ignores letter case and trailing whitespace") {
    const std::string text = "Compact Neural Models reduce the training cost of Language Models.";
    const auto base = rake_keywords(text, default_stopwords(), 20);
    CHECK_FALSE(base.empty());
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    CHECK(rake_keywords(upper, default_stopwords(), 20) == base);
    CHECK(rake_keywords(text + "   \n\t", default_stopwords(), 20) == base);
}

TEST_CASE("stopword hash identifies the list") {
    const StopwordSet a{"x", "y"}, b{"y", "x"}, c{"x", "z"};
    CHECK(stopword_list_hash(a) == stopword_list_hash(b));
    CHECK(stopword_list_hash(a) != stopword_list_hash(c));
    CHECK(default_stopwords().contains("the"));
}

TEST_CASE("retrieve_external unions and deduplicates") {
    const auto store = make_store({"apple banana", "apple cherry", "banana cherry", "durian", "apple apple"});
    const auto idx = InvertedIndex::build(store);
    RetrievalParams p;
    p.k = 2;
    const auto task = make_task({"apple", "apple banana"});
    const auto set = retrieve_external(idx, task, p);
    std::size_t total = 0;
    for (const auto& [_, hits] : set.provenance) {
        CHECK(hits.size() <= p.k);
        total += hits.size();
        for (std::size_t i = 1; i < hits.size(); ++i) CHECK_FALSE(ranks_before(hits[i], hits[i - 1]));
    }
    CHECK(set.doc_ids.size() < total);
    CHECK(std::is_sorted(set.doc_ids.begin(), set.doc_ids.end()));
    CHECK(std::adjacent_find(set.doc_ids.begin(), set.doc_ids.end()) == set.doc_ids.end());
    CHECK(set.params.stopwords_hash == stopword_list_hash(default_stopwords()));

    p.k = 0;
    CHECK_THROWS_WITH_AS(retrieve_external(idx, task, p), doctest::Contains("precondition"), PreconditionError);
    p.k = 2;
    CHECK_THROWS_AS(retrieve_external(idx, std::vector<TaskExample>{}, p), PreconditionError);
}

TEST_CASE("retrieval ignores labels and example order") {
    std::mt19937_64 rng(8);
    std::vector<std::string> texts;
    for (int i = 0; i < 500; ++i) texts.push_back(random_text(rng, 200, 1, 30));
    const auto idx = InvertedIndex::build(make_store(texts));
    std::vector<std::string> queries;
    for (int i = 0; i < 40; ++i) queries.push_back(random_text(rng, 220, 1, 12));
    auto task = make_task(queries);
    RetrievalParams p;
    p.k = 7;
    const auto base = retrieve_external(idx, task, p);

    auto relabeled = task;
    for (auto& ex : relabeled) ex.label = static_cast<int>(rng() % 5);
    const auto same = retrieve_external(idx, relabeled, p);
    CHECK(same == base);
    std::stringstream a, b;
    base.save(a);
    same.save(b);
    CHECK(a.str() == b.str());

    auto shuffled = task;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(retrieve_external(idx, shuffled, p).doc_ids == base.doc_ids);
}

TEST_CASE("long texts are queried through their RAKE phrases") {
    RetrievalParams p;
    p.query_mode = QueryMode::rake;
    p.rake_threshold = 5;
    const std::string short_text = "the quick fox";
    CHECK(build_query(short_text, p) == tokenize(short_text));
    const std::string long_text = "the quick brown fox jumps over the lazy dog .";
    const auto q = build_query(long_text, p);
    Terms expected;
    for (const auto& phrase : rake_keywords(long_text, default_stopwords(), p.max_keywords)) {
        for (const auto& t : tokenize(phrase)) expected.push_back(t);
    }
    CHECK(q == expected);
    CHECK(std::find(q.begin(), q.end(), "the") == q.end());
    p.query_mode = QueryMode::full_text;
    CHECK(build_query(long_text, p) == tokenize(long_text));
}

TEST_CASE("random retrieval is seeded and exact in size") {
    std::vector<std::string> texts;
    for (int i = 0; i < 50; ++i) texts.push_back("doc " + std::to_string(i));
    const auto store = make_store(texts, 100);
    const auto task = make_task({"q1", "q2", "q3"});
    RetrievalParams p;
    p.k = 10;
    p.seed = 17;
    const auto a = retrieve_random(store, task, p);
    const auto b = retrieve_random(store, task, p);
    CHECK(a == b);
    for (const auto& [_, hits] : a.provenance) {
        CHECK(hits.size() == 10);
        for (const auto& h : hits) CHECK(h.score == 0.0);
        for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i].doc_id > hits[i - 1].doc_id);
    }
    p.seed = 18;
    const auto c = retrieve_random(store, task, p);
    CHECK(c.doc_ids != a.doc_ids);
    for (const auto& [_, hits] : c.provenance) CHECK(hits.size() == 10);

    p.k = 50;
    const auto all = retrieve_random(store, task, p);
    CHECK(all.doc_ids.size() == 50);
    for (const auto& [_, hits] : all.provenance) CHECK(hits.size() == 50);
    p.k = 51;
    CHECK_THROWS_AS(retrieve_random(store, task, p), PreconditionError);
}

TEST_CASE("retrieval set JSONL round trip") {
    const auto store = make_store({"apple banana", "apple cherry", "banana cherry"});
    const auto idx = InvertedIndex::build(store);
    RetrievalParams p;
    p.k = 2;
    const auto set = retrieve_external(idx, make_task({"apple", "cherry banana"}), p);
    std::stringstream buf;
    set.save(buf);
    CHECK(RetrievalSet::load(buf) == set);
    std::stringstream truncated("{\"example_id\":0,\"hits\":[]}\n");
    CHECK_THROWS_AS(RetrievalSet::load(truncated), FormatError);
}

TEST_CASE("query mode and method names parse") {
    CHECK(parse_query_mode("full") == QueryMode::full_text);
    CHECK(parse_query_mode("rake") == QueryMode::rake);
    CHECK(parse_retrieval_method("bm25") == RetrievalMethod::bm25);
    CHECK(parse_retrieval_method("random") == RetrievalMethod::random);
    CHECK_THROWS_AS(parse_query_mode("dense"), ConfigError);
    CHECK(to_string(QueryMode::rake) == "rake");
}
