#include "tlm/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "tlm/error.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

using nlohmann::json;

std::string to_string(QueryMode m) { return m == QueryMode::rake ? "rake" : "full"; }
std::string to_string(RetrievalMethod m) { return m == RetrievalMethod::random ? "random" : "bm25"; }

QueryMode parse_query_mode(const std::string& s) {
    if (s == "full" || s == "full_text") return QueryMode::full_text;
    if (s == "rake") return QueryMode::rake;
    throw ConfigError("unknown query mode '" + s + "' (expected full|rake)");
}

RetrievalMethod parse_retrieval_method(const std::string& s) {
    if (s == "bm25") return RetrievalMethod::bm25;
    if (s == "random") return RetrievalMethod::random;
    throw ConfigError("unknown retrieval method '" + s + "' (expected bm25|random)");
}

namespace {

void check_common(std::span<const TaskExample> task, const RetrievalParams& params) {
    if (params.k == 0) throw PreconditionError("K must be >= 1");
    if (task.empty()) throw PreconditionError("task data is empty");
}

void finalize_union(RetrievalSet& set) {
    std::set<DocId> uniq;
    for (const auto& [_, hits] : set.provenance) {
        for (const auto& h : hits) uniq.insert(h.doc_id);
    }
    set.doc_ids.assign(uniq.begin(), uniq.end());
}

json params_to_json(const RetrievalParams& p) {
    return {{"k", p.k},
            {"method", to_string(p.method)},
            {"query_mode", to_string(p.query_mode)},
            {"k1", p.bm25.k1},
            {"b", p.bm25.b},
            {"rake_threshold", p.rake_threshold},
            {"max_keywords", p.max_keywords},
            {"stopwords_hash", p.stopwords_hash},
            {"seed", p.seed}};
}

RetrievalParams params_from_json(const json& j) {
    RetrievalParams p;
    p.k = j.at("k").get<std::size_t>();
    p.method = parse_retrieval_method(j.at("method").get<std::string>());
    p.query_mode = parse_query_mode(j.at("query_mode").get<std::string>());
    p.bm25.k1 = j.at("k1").get<double>();
    p.bm25.b = j.at("b").get<double>();
    p.rake_threshold = j.at("rake_threshold").get<std::size_t>();
    p.max_keywords = j.at("max_keywords").get<std::size_t>();
    p.stopwords_hash = j.at("stopwords_hash").get<std::uint64_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

}  // namespace

std::vector<std::string> build_query(const std::string& text, const RetrievalParams& params,
                                     const StopwordSet& stopwords) {
    auto tokens = tokenize(text);
    if (params.query_mode == QueryMode::full_text || tokens.size() <= params.rake_threshold) return tokens;
    std::vector<std::string> query;
    for (const auto& phrase : rake_keywords(text, stopwords, params.max_keywords)) {
        for (auto& t : tokenize(phrase)) query.push_back(std::move(t));
    }
    return query;
}

RetrievalSet retrieve_external(const InvertedIndex& index, std::span<const TaskExample> task, RetrievalParams params,
                               const StopwordSet& stopwords) {
    check_common(task, params);
    params.method = RetrievalMethod::bm25;
    params.stopwords_hash = stopword_list_hash(stopwords);
    RetrievalSet set;
    set.params = params;
    for (const auto& ex : task) {
        auto query = build_query(ex.text, params, stopwords);
        set.provenance[ex.example_id] = top_k(index, query, params.k, params.bm25);
    }
    finalize_union(set);
    return set;
}

RetrievalSet retrieve_random(std::span<const DocId> doc_ids, std::span<const TaskExample> task, RetrievalParams params) {
    check_common(task, params);
    if (params.k > doc_ids.size()) {
        throw PreconditionError("K=" + std::to_string(params.k) + " exceeds corpus size " + std::to_string(doc_ids.size()));
    }
    params.method = RetrievalMethod::random;
    std::vector<DocId> pool(doc_ids.begin(), doc_ids.end());
    std::sort(pool.begin(), pool.end());
    std::mt19937_64 rng(params.seed);
    RetrievalSet set;
    set.params = params;
    for (const auto& ex : task) {
        std::vector<DocId> picked;
        picked.reserve(params.k);
        std::sample(pool.begin(), pool.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(params.k), rng);
        std::sort(picked.begin(), picked.end());
        auto& hits = set.provenance[ex.example_id];
        for (auto id : picked) hits.push_back({id, 0.0});
    }
    finalize_union(set);
    return set;
}

RetrievalSet retrieve_random(const DocumentStore& store, std::span<const TaskExample> task, RetrievalParams params) {
    std::vector<DocId> ids;
    ids.reserve(store.size());
    for (const auto& d : store.documents()) ids.push_back(d.doc_id);
    return retrieve_random(ids, task, params);
}

void RetrievalSet::save(std::ostream& out) const {
    for (const auto& [example_id, hits] : provenance) {
        json arr = json::array();
        for (const auto& h : hits) arr.push_back({{"doc", h.doc_id}, {"score", h.score}});
        out << json{{"example_id", example_id}, {"hits", std::move(arr)}}.dump() << '\n';
    }
    out << json{{"footer", true}, {"doc_ids", doc_ids}, {"params", params_to_json(params)}}.dump() << '\n';
}

void RetrievalSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    save(out);
    if (!out) throw IoError("write failed: " + path.string());
}

RetrievalSet RetrievalSet::load(std::istream& in) {
    RetrievalSet set;
    bool have_footer = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (have_footer) throw FormatError("retrieval set: data after footer at line " + std::to_string(line_no));
        json j;
        try {
            j = json::parse(line);
            if (j.value("footer", false)) {
                set.doc_ids = j.at("doc_ids").get<std::vector<DocId>>();
                set.params = params_from_json(j.at("params"));
                have_footer = true;
                continue;
            }
            auto& hits = set.provenance[j.at("example_id").get<std::uint64_t>()];
            for (const auto& h : j.at("hits")) hits.push_back({h.at("doc").get<DocId>(), h.at("score").get<double>()});
        } catch (const json::exception& e) {
            throw FormatError("retrieval set: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_footer) throw FormatError("retrieval set: missing footer");
    return set;
}

RetrievalSet RetrievalSet::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return load(in);
}

}  // namespace tlm
