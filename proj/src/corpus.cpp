// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mmalfm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "mmalfm/binary_io.hpp"
#include "mmalfm/random.hpp"

namespace mmalfm {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(const std::unordered_map<std::string, std::size_t>& counts,
                             std::size_t min_count) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [term, count] : counts) {
        if (count >= min_count) {
            kept.emplace_back(term, count);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> terms;
    terms.reserve(kept.size());
    for (auto& [term, count] : kept) {
        terms.push_back(std::move(term));
    }
    return from_terms(std::move(terms), min_count);
}

Vocabulary Vocabulary::from_terms(std::vector<std::string> terms, std::size_t min_count) {
    Vocabulary vocab;
    vocab.min_count_ = min_count;
    vocab.id_to_term_ = std::move(terms);
    vocab.term_to_id_.reserve(vocab.id_to_term_.size());
    for (std::size_t id = 0; id < vocab.id_to_term_.size(); ++id) {
        const auto [it, inserted] =
            vocab.term_to_id_.emplace(vocab.id_to_term_[id], static_cast<WordId>(id));
        if (!inserted) {
            throw std::invalid_argument("duplicate vocabulary term: " + vocab.id_to_term_[id]);
        }
    }
    return vocab;
}

std::optional<WordId> Vocabulary::find(std::string_view term) const {
    const auto it = term_to_id_.find(std::string(term));
    if (it == term_to_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Text processing

std::unordered_set<std::string> IngestOptions::default_stop_words() {
    return {
        "a",       "about",   "above",  "after",  "again",   "against", "all",     "am",
        "an",      "and",     "any",    "are",    "as",      "at",      "be",      "because",
        "been",    "before",  "being",  "below",  "between", "both",    "but",     "by",
        "can",     "could",   "did",    "do",     "does",    "doing",   "down",    "during",
        "each",    "few",     "for",    "from",   "further", "had",     "has",     "have",
        "having",  "he",      "her",    "here",   "hers",    "herself", "him",     "himself",
        "his",     "how",     "i",      "if",     "in",      "into",    "is",      "it",
        "its",     "itself",  "just",   "me",     "more",    "most",    "my",      "myself",
        "no",      "nor",     "not",    "now",    "of",      "off",     "on",      "once",
        "only",    "or",      "other",  "our",    "ours",    "ourselves", "out",   "over",
        "own",     "same",    "she",    "should", "so",      "some",    "such",    "than",
        "that",    "the",     "their",  "theirs", "them",    "themselves", "then", "there",
        "these",   "they",    "this",   "those",  "through", "to",      "too",     "under",
        "until",   "up",      "very",   "was",    "we",      "were",    "what",    "when",
        "where",   "which",   "while",  "who",    "whom",    "why",     "will",    "with",
        "would",   "you",     "your",   "yours",  "yourself", "yourselves", "im",  "ive",
        "its",     "dont",    "didnt",  "doesnt", "isnt",    "wasnt",   "cant",    "wont",
        "s",       "t",       "also",   "get",    "got",     "one",     "us",      "ll",
    };
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c) || c >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '\'' && !current.empty()) {
            continue;
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<std::string_view> split_sentences(std::string_view text) {
    std::vector<std::string_view> sentences;
    const auto keep = [&](std::string_view piece) {
        if (std::any_of(piece.begin(), piece.end(), [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)); })) {
            sentences.push_back(piece);
        }
    };
    std::size_t start = 0;
    for (std::size_t k = 0; k < text.size(); ++k) {
        const char c = text[k];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        const bool at_end = k + 1 == text.size();
        if (at_end || std::isspace(static_cast<unsigned char>(text[k + 1]))) {
            keep(text.substr(start, k + 1 - start));
            start = k + 1;
        }
    }
    if (start < text.size()) {
        keep(text.substr(start));
    }
    return sentences;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool usable(const RawInteraction& r) {
    return !r.user_id.empty() && !r.item_id.empty() && std::isfinite(r.rating);
}

}  // namespace

Corpus ingest(std::span<const RawInteraction> records, std::span<const ItemImages> images,
              const IngestOptions& options, IngestStats* stats) {
    IngestStats local;
    IngestStats& st = stats != nullptr ? *stats : local;
    st.records_read += records.size();

    Corpus corpus;
    std::unordered_map<std::string, std::uint32_t> user_index;
    std::unordered_map<std::string, std::uint32_t> item_index;
    std::unordered_set<std::uint64_t> seen_pairs;

    // Token strings per kept record, filtered against the vocabulary afterwards.
    std::vector<std::vector<std::vector<std::string>>> raw_reviews;
    std::unordered_map<std::string, std::size_t> counts;

    for (const auto& record : records) {
        if (!usable(record)) {
            ++st.records_skipped;
            continue;
        }
        const auto [uit, unew] =
            user_index.emplace(record.user_id, static_cast<std::uint32_t>(user_index.size()));
        if (unew) {
            corpus.user_ids.push_back(record.user_id);
        }
        const auto [iit, inew] =
            item_index.emplace(record.item_id, static_cast<std::uint32_t>(item_index.size()));
        if (inew) {
            corpus.item_ids.push_back(record.item_id);
        }
        const std::uint64_t key = (std::uint64_t{uit->second} << 32) | iit->second;
        if (!seen_pairs.insert(key).second) {
            ++st.duplicate_pairs;
            ++st.records_skipped;
            continue;
        }

        double value = record.rating;
        if (value < 1.0 || value > 5.0) {
            value = std::clamp(value, 1.0, 5.0);
            ++st.ratings_clamped;
        }
        corpus.ratings.push_back({uit->second, iit->second, value, record.timestamp.value_or(0)});

        std::vector<std::vector<std::string>> sentences;
        for (const auto sentence : split_sentences(record.review_text)) {
            std::vector<std::string> kept;
            for (auto& token : tokenize(sentence)) {
                if (options.stop_words.contains(token)) {
                    continue;
                }
                ++counts[token];
                kept.push_back(std::move(token));
            }
            if (!kept.empty()) {
                sentences.push_back(std::move(kept));
            }
        }
        raw_reviews.push_back(std::move(sentences));
    }

    if (corpus.ratings.empty()) {
        throw std::runtime_error("ingest: no usable review records");
    }

    corpus.text_vocab = Vocabulary::build(counts, options.min_count);
    corpus.reviews.reserve(raw_reviews.size());
    for (const auto& sentences : raw_reviews) {
        Review review;
        for (const auto& tokens : sentences) {
            Sentence ids;
            for (const auto& token : tokens) {
                if (const auto id = corpus.text_vocab.find(token)) {
                    ids.push_back(*id);
                }
            }
            // Sentences left without any vocabulary term are dropped.
            if (!ids.empty()) {
                review.push_back(std::move(ids));
            }
        }
        corpus.reviews.push_back(std::move(review));
    }

    corpus.visual_vocab_size = options.visual_vocab_size;
    corpus.image_docs.assign(corpus.num_items(), {});
    for (const auto& entry : images) {
        const auto it = item_index.find(entry.item_id);
        if (it == item_index.end()) {
            ++st.images_unmatched;
            continue;
        }
        auto& docs = corpus.image_docs[it->second];
        for (const auto& doc : entry.images) {
            for (const WordId v : doc) {
                if (v >= corpus.visual_vocab_size) {
                    throw std::invalid_argument("ingest: visual word id " + std::to_string(v) +
                                                " outside visual vocabulary of size " +
                                                std::to_string(corpus.visual_vocab_size));
                }
            }
            docs.push_back(doc);
        }
    }

    corpus.validate();
    return corpus;
}

void Corpus::validate() const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("corpus: " + what); };
    if (reviews.size() != ratings.size()) {
        fail("reviews and ratings differ in length");
    }
    if (image_docs.size() != num_items()) {
        fail("image_docs must hold one entry per item");
    }
    std::unordered_set<std::uint64_t> pairs;
    for (const auto& r : ratings) {
        if (r.user >= num_users() || r.item >= num_items()) {
            fail("rating index out of range");
        }
        if (!std::isfinite(r.value)) {
            fail("non-finite rating");
        }
        if (!pairs.insert((std::uint64_t{r.user} << 32) | r.item).second) {
            fail("duplicate (user, item) rating");
        }
    }
    const auto T = vocab_size();
    for (const auto& review : reviews) {
        for (const auto& sentence : review) {
            for (const WordId w : sentence) {
                if (w >= T) {
                    fail("text word id out of range");
                }
            }
        }
    }
    for (const auto& docs : image_docs) {
        for (const auto& doc : docs) {
            for (const WordId v : doc) {
                if (v >= visual_vocab_size) {
                    fail("visual word id out of range");
                }
            }
        }
    }
}

std::vector<RawInteraction> read_review_records(std::istream& in, IngestStats* stats) {
    IngestStats local;
    IngestStats& st = stats != nullptr ? *stats : local;
    std::vector<RawInteraction> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto json = nlohmann::json::parse(line, nullptr, false);
        if (json.is_discarded() || !json.is_object()) {
            ++st.records_skipped;
            continue;
        }
        try {
            RawInteraction r;
            r.user_id = json.at("user_id").get<std::string>();
            r.item_id = json.at("item_id").get<std::string>();
            r.rating = json.at("rating").get<double>();
            if (const auto it = json.find("review_text"); it != json.end() && !it->is_null()) {
                r.review_text = it->get<std::string>();
            }
            if (const auto it = json.find("timestamp"); it != json.end() && !it->is_null()) {
                r.timestamp = it->get<std::int64_t>();
            }
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception&) {
            ++st.records_skipped;
        }
    }
    return records;
}

std::unordered_set<std::string> read_stop_words(std::istream& in) {
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        for (auto& token : tokenize(line)) {
            words.insert(std::move(token));
        }
    }
    return words;
}

// ---------------------------------------------------------------------------
// Serialization

void save_corpus(const Corpus& corpus, std::ostream& out) {
    BinaryWriter w(out, FileKind::Corpus);
    w.write(corpus.user_ids);
    w.write(corpus.item_ids);
    w.write<std::uint64_t>(corpus.text_vocab.min_count());
    w.write(corpus.text_vocab.terms());
    w.write<std::uint64_t>(corpus.visual_vocab_size);
    w.write<std::uint64_t>(corpus.ratings.size());
    for (std::size_t r = 0; r < corpus.ratings.size(); ++r) {
        const auto& rating = corpus.ratings[r];
        w.write(rating.user);
        w.write(rating.item);
        w.write(rating.value);
        w.write(rating.timestamp);
        w.write<std::uint64_t>(corpus.reviews[r].size());
        for (const auto& sentence : corpus.reviews[r]) {
            w.write(sentence);
        }
    }
    for (const auto& docs : corpus.image_docs) {
        w.write<std::uint64_t>(docs.size());
        for (const auto& doc : docs) {
            w.write(doc);
        }
    }
}

Corpus load_corpus(std::istream& in) {
    BinaryReader r(in, FileKind::Corpus);
    Corpus corpus;
    corpus.user_ids = r.read_strings();
    corpus.item_ids = r.read_strings();
    const auto min_count = r.read<std::uint64_t>();
    corpus.text_vocab = Vocabulary::from_terms(r.read_strings(), min_count);
    corpus.visual_vocab_size = r.read<std::uint64_t>();
    const auto n = r.read<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) {
        Rating rating;
        rating.user = r.read<std::uint32_t>();
        rating.item = r.read<std::uint32_t>();
        rating.value = r.read<double>();
        rating.timestamp = r.read<std::int64_t>();
        corpus.ratings.push_back(rating);
        Review review(r.read<std::uint64_t>());
        for (auto& sentence : review) {
            sentence = r.read_vector<WordId>();
        }
        corpus.reviews.push_back(std::move(review));
    }
    corpus.image_docs.resize(corpus.item_ids.size());
    for (auto& docs : corpus.image_docs) {
        docs.resize(r.read<std::uint64_t>());
        for (auto& doc : docs) {
            doc = r.read_vector<WordId>();
        }
    }
    corpus.validate();
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    save_corpus(corpus, out);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return load_corpus(in);
}

// ---------------------------------------------------------------------------
// Splits

void SplitRatios::validate() const {
    if (train < 0.0 || validation < 0.0 || test < 0.0 ||
        std::abs(train + validation + test - 1.0) > 1e-9) {
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    }
}

namespace {

/// Rating indices sorted by (user, timestamp, item), then shuffled with the seed.
std::vector<std::size_t> canonical_shuffled_order(const Corpus& corpus, Rng& rng) {
    std::vector<std::size_t> order(corpus.ratings.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = corpus.ratings[a];
        const auto& y = corpus.ratings[b];
        return std::tie(x.user, x.timestamp, x.item) < std::tie(y.user, y.timestamp, y.item);
    });
    rng.shuffle(order);
    return order;
}

struct SliceSizes {
    std::size_t train;
    std::size_t validation;
    std::size_t test;
};

SliceSizes slice_sizes(std::size_t n, const SplitRatios& ratios) {
    const std::size_t slots = (ratios.train > 0.0) + (ratios.validation > 0.0) + (ratios.test > 0.0);
    if (n < slots) {
        return {n, 0, 0};
    }
    auto validation = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
    auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
    // Training keeps at least one rating whenever it has a non-zero share.
    const std::size_t min_train = ratios.train > 0.0 ? 1 : 0;
    while (validation + test + min_train > n) {
        if (test >= validation && test > 0) {
            --test;
        } else {
            --validation;
        }
    }
    return {n - validation - test, validation, test};
}

void assign_slices(std::span<const std::size_t> order, const SliceSizes& sizes, RatingSplit& split) {
    std::size_t k = 0;
    for (; k < sizes.train; ++k) {
        split.train.push_back(order[k]);
    }
    for (; k < sizes.train + sizes.validation; ++k) {
        split.validation.push_back(order[k]);
    }
    for (; k < order.size(); ++k) {
        split.test.push_back(order[k]);
    }
}

void sort_split(RatingSplit& split) {
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
}

}  // namespace

RatingSplit split_ratings(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed,
                          bool per_user) {
    ratios.validate();
    Rng rng(seed);
    const auto order = canonical_shuffled_order(corpus, rng);
    RatingSplit split;
    if (!per_user) {
        assign_slices(order, slice_sizes(order.size(), ratios), split);
        sort_split(split);
        return split;
    }
    std::vector<std::vector<std::size_t>> by_user(corpus.num_users());
    for (const auto r : order) {
        by_user[corpus.ratings[r].user].push_back(r);
    }
    for (const auto& user_order : by_user) {
        assign_slices(user_order, slice_sizes(user_order.size(), ratios), split);
    }
    sort_split(split);
    return split;
}

RatingSplit split_global(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
    auto split = split_ratings(corpus, ratios, seed, false);
    const auto counts = training_counts(corpus, split.train);
    const auto before = split.test.size();
    std::erase_if(split.test, [&](std::size_t r) { return counts[corpus.ratings[r].user] == 0; });
    split.dropped_test = before - split.test.size();
    return split;
}

std::vector<std::size_t> training_counts(const Corpus& corpus, std::span<const std::size_t> train) {
    std::vector<std::size_t> counts(corpus.num_users(), 0);
    for (const auto r : train) {
        ++counts[corpus.ratings[r].user];
    }
    return counts;
}

std::array<std::size_t, 10> training_count_histogram(const Corpus& corpus, const RatingSplit& split) {
    const auto counts = training_counts(corpus, split.train);
    std::vector<bool> seen(corpus.num_users(), false);
    std::array<std::size_t, 10> histogram{};
    for (const auto r : split.test) {
        const auto u = corpus.ratings[r].user;
        if (seen[u]) {
            continue;
        }
        seen[u] = true;
        if (counts[u] >= 1 && counts[u] <= 10) {
            ++histogram[counts[u] - 1];
        }
    }
    return histogram;
}

}  // namespace mmalfm
