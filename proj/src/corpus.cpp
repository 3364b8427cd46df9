#include "tlm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tlm/error.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

using nlohmann::json;

namespace {

constexpr const char* kStoreHeader = "TLMSTORE1";

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::string line_prefix(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

json parse_line(const std::string& line, std::size_t line_no) {
    if (!is_valid_utf8(line)) throw FormatError(line_prefix(line_no) + "invalid UTF-8");
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError(line_prefix(line_no) + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw FormatError(line_prefix(line_no) + "expected a JSON object");
    return j;
}

std::string require_string(const json& j, const char* field, std::size_t line_no) {
    auto it = j.find(field);
    if (it == j.end()) throw FormatError(line_prefix(line_no) + "missing field " + field);
    if (!it->is_string()) throw FormatError(line_prefix(line_no) + "field " + field + " must be a string");
    return it->get<std::string>();
}

}  // namespace

void DocumentStore::add(Document doc) {
    if (by_id_.contains(doc.doc_id)) throw FormatError("duplicate document id " + std::to_string(doc.doc_id));
    for (const auto& t : doc.tokens) vocab_.add(t);
    by_id_.emplace(doc.doc_id, docs_.size());
    docs_.push_back(std::move(doc));
}

const Document* DocumentStore::find(DocId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

void DocumentStore::save(std::ostream& out) const {
    out << kStoreHeader << '\n';
    json meta = {{"documents", docs_.size()}, {"vocab", vocab_.terms()}};
    out << meta.dump() << '\n';
    for (const auto& d : docs_) {
        json row = {{"id", d.doc_id}, {"text", d.text}, {"source", d.source_tag}};
        out << row.dump() << '\n';
    }
}

void DocumentStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    save(out);
    if (!out) throw IoError("write failed: " + path.string());
}

DocumentStore DocumentStore::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kStoreHeader) throw FormatError("not a TLMSTORE1 file");
    if (!std::getline(in, line)) throw FormatError("store: missing metadata line");
    json meta = parse_line(line, 2);
    DocumentStore store;
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j = parse_line(line, line_no);
        Document d;
        d.doc_id = j.at("id").get<DocId>();
        d.text = require_string(j, "text", line_no);
        d.source_tag = j.value("source", std::string("general"));
        d.tokens = tokenize(d.text);
        store.add(std::move(d));
    }
    if (store.size() != meta.at("documents").get<std::size_t>()) throw FormatError("store: document count mismatch");
    // The saved vocabulary may contain terms beyond those re-derived from the
    // documents (never fewer), so it is restored verbatim.
    auto saved = Vocabulary::from_terms(meta.at("vocab").get<std::vector<std::string>>());
    for (std::size_t i = 0; i < store.vocab_.size(); ++i) {
        if (i >= saved.size() || saved.terms()[i] != store.vocab_.terms()[i]) throw FormatError("store: vocabulary mismatch");
    }
    store.vocab_ = std::move(saved);
    return store;
}

DocumentStore DocumentStore::load(const std::filesystem::path& path) {
    auto in = open_input(path);
    return load(in);
}

DocumentStore ingest_corpus(std::istream& in, const std::string& source_tag) {
    DocumentStore store;
    std::string line;
    std::size_t line_no = 0;
    DocId ordinal = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j = parse_line(line, line_no);
        Document d;
        if (auto it = j.find("id"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned()) throw FormatError(line_prefix(line_no) + "field id must be an unsigned integer");
            d.doc_id = it->get<DocId>();
        } else {
            d.doc_id = ordinal;
        }
        d.text = require_string(j, "text", line_no);
        d.tokens = tokenize(d.text);
        d.source_tag = source_tag;
        if (store.find(d.doc_id) != nullptr) {
            throw FormatError(line_prefix(line_no) + "duplicate document id " + std::to_string(d.doc_id));
        }
        store.add(std::move(d));
        ++ordinal;
    }
    return store;
}

DocumentStore ingest_corpus(const std::filesystem::path& path, const std::string& source_tag) {
    auto in = open_input(path);
    return ingest_corpus(in, source_tag);
}

std::vector<TaskExample> ingest_task(std::istream& in, const std::vector<std::string>& label_names) {
    std::vector<TaskExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j = parse_line(line, line_no);
        TaskExample ex;
        ex.example_id = out.size();
        ex.text = require_string(j, "text", line_no);
        auto label = require_string(j, "label", line_no);
        auto pos = std::find(label_names.begin(), label_names.end(), label);
        if (pos == label_names.end()) throw FormatError(line_prefix(line_no) + "unknown label '" + label + "'");
        ex.label = static_cast<int>(pos - label_names.begin());
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<TaskExample> ingest_task(const std::filesystem::path& path, const std::vector<std::string>& label_names) {
    auto in = open_input(path);
    return ingest_task(in, label_names);
}

std::vector<std::string> scan_label_names(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::set<std::string> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        labels.insert(require_string(parse_line(line, line_no), "label", line_no));
    }
    return {labels.begin(), labels.end()};
}

std::size_t convert_text_directory(const std::filesystem::path& dir, std::ostream& out) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t n = 0;
    for (const auto& f : files) {
        auto in = open_input(f);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string text = buf.str();
        if (!is_valid_utf8(text)) throw FormatError(f.string() + ": invalid UTF-8");
        out << json{{"id", n}, {"text", text}}.dump() << '\n';
        ++n;
    }
    return n;
}

}  // namespace tlm
