#pragma once

#include <cstdint>
#include <filesystem>

#include "tlm/corpus.hpp"
#include "tlm/trainer.hpp"

namespace tlm {

/// A planted-topic classification task plus a general corpus in which a small
/// fraction of documents mention the topic terms. A task example's label is the
/// topic whose terms were planted in it. Task examples and topic documents use
/// only common filler words, so their rare terms are the topic terms.
struct SyntheticSpec {
    std::size_t corpus_docs = 10000;
    double topic_doc_fraction = 0.05;
    std::size_t train_examples = 2000;
    std::size_t dev_examples = 200;
    std::size_t test_examples = 1000;
    std::size_t num_classes = 2;
    std::size_t filler_words = 800;
    std::size_t common_words = 60;  // filler words used in task examples and topic documents
    std::size_t topic_words_per_class = 10;
    std::size_t topic_terms_per_example = 4;
    std::uint64_t seed = 2022;
};

struct SyntheticData {
    DocumentStore corpus;
    TaskData task;
    std::vector<std::vector<std::string>> topic_words;  // per class
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Writes corpus.jsonl, train.jsonl, dev.jsonl and test.jsonl into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace tlm
