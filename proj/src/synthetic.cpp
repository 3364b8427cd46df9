#include "tlm/synthetic.hpp"

#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "tlm/error.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

namespace {

// Pronounceable pseudo-words: two or three consonant-vowel syllables.
std::string make_word(std::size_t index, std::size_t syllables) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    const std::size_t base = consonants.size() * vowels.size();
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        const std::size_t syl = index % base;
        index /= base;
        w.push_back(consonants[syl / vowels.size()]);
        w.push_back(vowels[syl % vowels.size()]);
    }
    return w;
}

class Generator {
public:
    Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
        for (std::size_t i = 0; i < spec.filler_words; ++i) filler_.push_back(make_word(i, 2) + make_word(i / 70, 1));
        std::vector<double> weights;
        for (std::size_t i = 0; i < spec.filler_words; ++i) weights.push_back(1.0 / static_cast<double>(i + 1));
        zipf_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
        const auto common = std::min(spec.common_words, spec.filler_words);
        common_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(common));
        std::set<std::string> used(filler_.begin(), filler_.end());
        std::size_t next = 0;
        topics_.resize(spec.num_classes);
        for (auto& topic : topics_) {
            while (topic.size() < spec.topic_words_per_class) {
                auto w = make_word(next++, 3);
                if (used.insert(w).second) topic.push_back(std::move(w));
            }
        }
    }

    // General text draws from the whole filler list, in-domain text (task
    // examples and topic documents) only from its most frequent words.
    std::string filler_sentence(std::size_t len, bool in_domain) {
        std::vector<std::string> words;
        for (std::size_t i = 0; i < len; ++i) words.push_back(filler_[in_domain ? common_(rng_) : zipf_(rng_)]);
        return join(words);
    }

    // `len` in-domain filler words with `planted` topic words inserted at random spots.
    std::string topic_sentence(std::size_t len, std::size_t topic, std::size_t planted) {
        std::vector<std::string> words;
        for (std::size_t i = 0; i < len; ++i) words.push_back(filler_[common_(rng_)]);
        std::uniform_int_distribution<std::size_t> pick(0, topics_[topic].size() - 1);
        for (std::size_t i = 0; i < planted; ++i) {
            std::uniform_int_distribution<std::size_t> where(0, words.size());
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(where(rng_)), topics_[topic][pick(rng_)]);
        }
        return join(words);
    }

    std::size_t uniform(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(rng_); }
    const std::vector<std::vector<std::string>>& topics() const { return topics_; }

private:
    static std::string join(const std::vector<std::string>& words) {
        std::string s;
        for (const auto& w : words) {
            if (!s.empty()) s.push_back(' ');
            s += w;
        }
        return s + " .";
    }

    const SyntheticSpec& spec_;
    std::mt19937_64 rng_;
    std::vector<std::string> filler_;
    std::discrete_distribution<std::size_t> zipf_;
    std::discrete_distribution<std::size_t> common_;
    std::vector<std::vector<std::string>> topics_;
};

std::vector<TaskExample> make_split(Generator& gen, const SyntheticSpec& spec, std::size_t n) {
    std::vector<TaskExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = i % spec.num_classes;
        std::string text = gen.topic_sentence(gen.uniform(8, 16), label, spec.topic_terms_per_example);
        if (gen.bernoulli(0.5)) text += " " + gen.filler_sentence(gen.uniform(4, 8), true);
        out.push_back({i, std::move(text), static_cast<int>(label)});
    }
    return out;
}

void write_task(const std::vector<TaskExample>& examples, const std::vector<std::string>& labels,
                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& ex : examples) {
        out << nlohmann::json{{"text", ex.text}, {"label", labels[static_cast<std::size_t>(ex.label)]}}.dump() << '\n';
    }
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2 || spec.topic_words_per_class == 0 || spec.filler_words == 0 || spec.common_words == 0) {
        throw ConfigError("synthetic spec needs >= 2 classes and non-empty word lists");
    }
    Generator gen(spec);
    SyntheticData data;
    data.topic_words = gen.topics();
    for (std::size_t c = 0; c < spec.num_classes; ++c) data.task.label_names.push_back("topic" + std::to_string(c));

    const auto n_topic = static_cast<std::size_t>(spec.topic_doc_fraction * static_cast<double>(spec.corpus_docs) + 0.5);
    // Topic documents are spread evenly through the corpus.
    const std::size_t stride = n_topic > 0 ? std::max<std::size_t>(spec.corpus_docs / n_topic, 1) : 0;
    for (std::size_t i = 0; i < spec.corpus_docs; ++i) {
        std::string text;
        if (stride > 0 && i % stride == 0 && i / stride < n_topic) {
            const auto topic = gen.uniform(0, spec.num_classes - 1);
            text = gen.topic_sentence(gen.uniform(10, 18), topic, gen.uniform(2, 4)) + " " +
                   gen.topic_sentence(gen.uniform(6, 12), topic, 1);
        } else {
            text = gen.filler_sentence(gen.uniform(10, 18), false) + " " + gen.filler_sentence(gen.uniform(6, 12), false);
        }
        Document d;
        d.doc_id = i;
        d.text = std::move(text);
        d.tokens = tokenize(d.text);
        d.source_tag = "general";
        data.corpus.add(std::move(d));
    }
    data.task.train = make_split(gen, spec, spec.train_examples);
    data.task.dev = make_split(gen, spec, spec.dev_examples);
    data.task.test = make_split(gen, spec, spec.test_examples);
    return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "corpus.jsonl", std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / "corpus.jsonl").string());
        for (const auto& d : data.corpus.documents()) out << nlohmann::json{{"id", d.doc_id}, {"text", d.text}}.dump() << '\n';
    }
    write_task(data.task.train, data.task.label_names, dir / "train.jsonl");
    write_task(data.task.dev, data.task.label_names, dir / "dev.jsonl");
    write_task(data.task.test, data.task.label_names, dir / "test.jsonl");
}

}  // namespace tlm
