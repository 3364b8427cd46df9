#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tlm/vocabulary.hpp"

namespace tlm {

using DocId = std::uint64_t;

struct Document {
    DocId doc_id = 0;
    std::string text;
    std::vector<std::string> tokens;  // always tokenize(text)
    std::string source_tag;
};

struct TaskExample {
    std::uint64_t example_id = 0;
    std::string text;
    int label = 0;
};

/// Immutable collection of tokenized documents plus the vocabulary of every
/// term observed in them. Documents keep input order.
class DocumentStore {
public:
    DocumentStore() = default;

    /// Adds a document; throws on a duplicate id.
    void add(Document doc);

    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const std::vector<Document>& documents() const noexcept { return docs_; }
    const Document& at(std::size_t index) const { return docs_.at(index); }
    const Document* find(DocId id) const;
    const Vocabulary& vocabulary() const noexcept { return vocab_; }

    /// Writes the "TLMSTORE1" JSONL representation.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static DocumentStore load(std::istream& in);
    static DocumentStore load(const std::filesystem::path& path);

private:
    std::vector<Document> docs_;
    std::unordered_map<DocId, std::size_t> by_id_;
    Vocabulary vocab_;
};

/// Reads corpus JSONL: one {"id": <uint, optional>, "text": <string>} per
/// non-blank line. Missing ids are the 0-based ordinal of the document.
DocumentStore ingest_corpus(std::istream& in, const std::string& source_tag = "general");
DocumentStore ingest_corpus(const std::filesystem::path& path, const std::string& source_tag = "general");

/// Reads task JSONL: {"text": <string>, "label": <string>} per non-blank line;
/// labels map to their position in `label_names`.
std::vector<TaskExample> ingest_task(std::istream& in, const std::vector<std::string>& label_names);
std::vector<TaskExample> ingest_task(const std::filesystem::path& path, const std::vector<std::string>& label_names);

/// Distinct label strings of a task file, sorted.
std::vector<std::string> scan_label_names(const std::filesystem::path& path);

/// One document per regular file under `dir` (sorted by path), emitted as
/// corpus JSONL. Returns the number of documents written.
std::size_t convert_text_directory(const std::filesystem::path& dir, std::ostream& out);

}  // namespace tlm
