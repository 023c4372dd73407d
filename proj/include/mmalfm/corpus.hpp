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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mmalfm {

using WordId = std::uint32_t;
using Sentence = std::vector<WordId>;
using Review = std::vector<Sentence>;
/// Visual-word document of one image (49 ids for a 7x7 block grid).
using VisualDoc = std::vector<WordId>;

struct RawInteraction {
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
    std::string review_text;
    std::optional<std::int64_t> timestamp;
};

/// Visual-word documents of one item, keyed by the external item id.
struct ItemImages {
    std::string item_id;
    std::vector<VisualDoc> images;
};

class Vocabulary {
public:
    Vocabulary() = default;

    /// Keeps terms with count >= min_count; ids ordered by descending count, then term.
    static Vocabulary build(const std::unordered_map<std::string, std::size_t>& counts,
                            std::size_t min_count);
    static Vocabulary from_terms(std::vector<std::string> terms, std::size_t min_count = 0);

    std::optional<WordId> find(std::string_view term) const;
    const std::string& term(WordId id) const { return id_to_term_.at(id); }
    std::size_t size() const { return id_to_term_.size(); }
    std::size_t min_count() const { return min_count_; }
    const std::vector<std::string>& terms() const { return id_to_term_; }

    bool operator==(const Vocabulary& other) const {
        return min_count_ == other.min_count_ && id_to_term_ == other.id_to_term_;
    }

private:
    std::unordered_map<std::string, WordId> term_to_id_;
    std::vector<std::string> id_to_term_;
    std::size_t min_count_ = 0;
};

struct Rating {
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    double value = 0.0;
    std::int64_t timestamp = 0;

    bool operator==(const Rating&) const = default;
};

/// Indexed corpus. reviews[r] is the review attached to ratings[r].
struct Corpus {
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<Rating> ratings;
    std::vector<Review> reviews;
    std::vector<std::vector<VisualDoc>> image_docs;
    Vocabulary text_vocab;
    std::size_t visual_vocab_size = 0;

    std::size_t num_users() const { return user_ids.size(); }
    std::size_t num_items() const { return item_ids.size(); }
    std::size_t vocab_size() const { return text_vocab.size(); }

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

    bool operator==(const Corpus&) const = default;
};

struct IngestOptions {
    std::size_t min_count = 10;
    std::unordered_set<std::string> stop_words = default_stop_words();
    std::size_t visual_vocab_size = 0;

    static std::unordered_set<std::string> default_stop_words();
};

struct IngestStats {
    std::size_t records_read = 0;
    std::size_t records_skipped = 0;
    std::size_t ratings_clamped = 0;
    std::size_t duplicate_pairs = 0;
    std::size_t images_unmatched = 0;
};

/// Lowercased word tokens of one sentence; apostrophes are dropped inside words.
std::vector<std::string> tokenize(std::string_view text);

/// Splits on '.', '!' or '?' followed by whitespace or end of text; pieces without
/// letters or digits are dropped.
std::vector<std::string_view> split_sentences(std::string_view text);

/// Builds the indexed corpus. Records with empty ids or non-finite ratings are
/// skipped and counted; ratings outside [1, 5] are clamped. Throws
/// std::runtime_error when no usable record remains.
Corpus ingest(std::span<const RawInteraction> records, std::span<const ItemImages> images,
              const IngestOptions& options, IngestStats* stats = nullptr);

/// Parses newline-delimited JSON review records; malformed lines are counted in
/// stats->records_skipped.
std::vector<RawInteraction> read_review_records(std::istream& in, IngestStats* stats = nullptr);

std::unordered_set<std::string> read_stop_words(std::istream& in);

void save_corpus(const Corpus& corpus, std::ostream& out);
Corpus load_corpus(std::istream& in);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

struct SplitRatios {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;

    void validate() const;
};

/// Partition of rating indices into disjoint train / validation / test sets.
struct RatingSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    /// split_global only: test ratings dropped because the user had no training rating.
    std::size_t dropped_test = 0;
};

/// Each user's ratings (or the whole rating multiset when per_user is false)
/// are shuffled after a (user, timestamp, item) sort and cut at the ratios.
RatingSplit split_ratings(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed,
                          bool per_user);

/// Cold-start protocol: global cut, then test ratings of users without any
/// training rating are dropped.
RatingSplit split_global(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

/// Number of training ratings per user.
std::vector<std::size_t> training_counts(const Corpus& corpus, std::span<const std::size_t> train);

/// Test users grouped by training count 1..10: slot g-1 holds the number of
/// distinct test users with exactly g training ratings.
std::array<std::size_t, 10> training_count_histogram(const Corpus& corpus, const RatingSplit& split);

}  // namespace mmalfm
