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

// Multi-modal aspect-aware topic model.
//
// Every review sentence carries a switch y, an aspect a and a topic z. With
// y = 0 the sentence comes from the author's own preferences (lambda_u, theta),
// with y = 1 from the reviewed item's characteristics (lambda_i, psi). Item
// images carry an aspect and a topic drawn from the item side only. Topics are
// shared distributions over text terms (phi_text) and visual terms (phi_visual).
//
// Count conventions used by the sampler and the estimates:
//   user_aspect(u, a)         y = 0 sentences of u with aspect a
//   user_switch(u, y)         sentences of u with switch y
//   user_aspect_topic(u,a,k)  y = 0 sentences of u with aspect a and topic k
//   item_aspect(i, a)         y = 1 sentences on i plus images of i, with aspect a
//   item_aspect_topic(i,a,k)  y = 1 sentences on i (one each) plus visual words
//                             of i's images (one per word), with aspect a, topic k
//   topic_term(k, t)          text words with term t in sentences of topic k
//   topic_visual(k, c)        visual words c in images of topic k

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmalfm/corpus.hpp"
#include "mmalfm/random.hpp"

namespace mmalfm {

struct MatmConfig {
    std::size_t topics = 5;
    std::size_t aspects = 5;
    double alpha_user = 0.1;
    double alpha_item = 0.1;
    double gamma_user = 0.1;
    double gamma_item = 0.1;
    double beta_text = 0.01;
    double beta_visual = 0.01;
    double eta0 = 1.0;
    double eta1 = 1.0;
    std::size_t iters = 1000;
    std::size_t burn_in = 500;
    /// Estimates are averaged over every sample_lag-th sweep after burn-in.
    std::size_t sample_lag = 10;
    std::uint64_t seed = 0;
    /// When false the sampler ignores item images (text-only mode).
    bool use_images = true;

    void validate() const;
};

struct SentenceAssignment {
    std::uint8_t switch_y = 0;
    std::uint32_t aspect = 0;
    std::uint32_t topic = 0;

    bool operator==(const SentenceAssignment&) const = default;
};

struct ImageAssignment {
    std::uint32_t aspect = 0;
    std::uint32_t topic = 0;

    bool operator==(const ImageAssignment&) const = default;
};

/// Posterior point estimates. All tables are row-major flat arrays.
struct MatmParams {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t aspects = 0;
    std::size_t topics = 0;
    std::size_t text_vocab = 0;
    std::size_t visual_vocab = 0;

    std::vector<double> theta;          // [user][aspect][topic]
    std::vector<double> psi;            // [item][aspect][topic]
    std::vector<double> lambda_user;    // [user][aspect]
    std::vector<double> lambda_item;    // [item][aspect]
    std::vector<double> pi;             // [user]
    std::vector<double> phi_text;       // [topic][term]
    std::vector<double> phi_visual;     // [topic][visual term]
    /// Users / items that contributed at least one observation to training.
    std::vector<std::uint8_t> user_observed;
    std::vector<std::uint8_t> item_observed;

    /// Zero-initialized tables of the right shapes.
    static MatmParams shaped(std::size_t users, std::size_t items, std::size_t aspects,
                             std::size_t topics, std::size_t text_vocab, std::size_t visual_vocab);

    std::span<const double> theta_row(std::size_t u, std::size_t a) const {
        return {theta.data() + (u * aspects + a) * topics, topics};
    }
    std::span<const double> psi_row(std::size_t i, std::size_t a) const {
        return {psi.data() + (i * aspects + a) * topics, topics};
    }
    std::span<const double> lambda_user_row(std::size_t u) const {
        return {lambda_user.data() + u * aspects, aspects};
    }
    std::span<const double> lambda_item_row(std::size_t i) const {
        return {lambda_item.data() + i * aspects, aspects};
    }
    std::span<const double> phi_text_row(std::size_t k) const {
        return {phi_text.data() + k * text_vocab, text_vocab};
    }
    std::span<const double> phi_visual_row(std::size_t k) const {
        return {phi_visual.data() + k * visual_vocab, visual_vocab};
    }

    bool operator==(const MatmParams&) const = default;
};

/// Collapsed Gibbs sampler over one corpus view.
class MatmSampler {
public:
    /// Uses the reviews of the ratings listed in review_ratings (all ratings
    /// when empty) and, when config.use_images is set, every item image.
    /// Assignments start uniformly at random; counts are built from them.
    MatmSampler(const Corpus& corpus, std::span<const std::size_t> review_ratings,
                const MatmConfig& config);

    std::size_t num_sentences() const { return sentences_.size(); }
    std::size_t num_images() const { return images_.size(); }

    struct SentenceRef {
        std::uint32_t user;
        std::uint32_t item;
        std::span<const WordId> words;
    };
    struct ImageRef {
        std::uint32_t item;
        std::span<const WordId> words;
    };
    SentenceRef sentence(std::size_t s) const;
    ImageRef image(std::size_t p) const;

    const SentenceAssignment& sentence_assignment(std::size_t s) const { return sentence_z_[s]; }
    const ImageAssignment& image_assignment(std::size_t p) const { return image_z_[p]; }

    /// Subtracts / adds a sentence's current assignment from / to the counts.
    void remove_sentence(std::size_t s);
    void add_sentence(std::size_t s, const SentenceAssignment& assignment);
    void remove_image(std::size_t p);
    void add_image(std::size_t p, const ImageAssignment& assignment);

    /// Unnormalized conditional over the 2*A*K cells of a removed sentence,
    /// laid out [y][a][k]. Values are scaled by a common positive factor.
    void sentence_weights(std::size_t s, std::vector<double>& out) const;
    /// Unnormalized conditional over the A*K cells of a removed image, laid out [a][k].
    void image_weights(std::size_t p, std::vector<double>& out) const;

    static SentenceAssignment sentence_cell(std::size_t cell, std::size_t aspects, std::size_t topics);
    static ImageAssignment image_cell(std::size_t cell, std::size_t topics);

    /// One draw from the conditional of a removed sentence / image.
    SentenceAssignment draw_sentence(std::size_t s, Rng& rng) const;
    ImageAssignment draw_image(std::size_t p, Rng& rng) const;

    /// Remove, draw, add.
    void sample_sentence(std::size_t s);
    void sample_image(std::size_t p);

    /// All sentences in order, then all images.
    void sweep();

    /// Recomputes every count table from the assignments and compares.
    bool counts_consistent() const;

    /// Point estimates from the current counts.
    MatmParams estimate() const;

    Rng& rng() { return rng_; }
    const MatmConfig& config() const { return config_; }

    // Count accessors (tests and diagnostics).
    std::uint32_t user_aspect(std::size_t u, std::size_t a) const { return user_aspect_[u * A_ + a]; }
    std::uint32_t user_switch(std::size_t u, std::size_t y) const { return user_switch_[u * 2 + y]; }
    std::uint32_t user_aspect_topic(std::size_t u, std::size_t a, std::size_t k) const {
        return user_aspect_topic_[(u * A_ + a) * K_ + k];
    }
    std::uint32_t item_aspect(std::size_t i, std::size_t a) const { return item_aspect_[i * A_ + a]; }
    std::uint32_t item_aspect_topic(std::size_t i, std::size_t a, std::size_t k) const {
        return item_aspect_topic_[(i * A_ + a) * K_ + k];
    }
    std::uint32_t topic_term(std::size_t k, std::size_t t) const { return topic_term_[k * T_ + t]; }
    std::uint32_t topic_visual(std::size_t k, std::size_t c) const { return topic_visual_[k * C_ + c]; }

private:
    void apply_sentence(std::size_t s, const SentenceAssignment& z, int delta);
    void apply_image(std::size_t p, const ImageAssignment& z, int delta);
    /// log of the collapsed predictive of a word sequence under each topic.
    void word_log_likelihoods(std::span<const WordId> words, const std::vector<std::uint32_t>& topic_word,
                              const std::vector<std::uint32_t>& topic_total, std::size_t vocab,
                              double beta, std::vector<double>& out) const;

    MatmConfig config_;
    std::size_t M_, N_, A_, K_, T_, C_;
    Rng rng_;

    struct SentenceEntry {
        std::uint32_t user;
        std::uint32_t item;
        std::size_t offset;
        std::size_t length;
    };
    struct ImageEntry {
        std::uint32_t item;
        std::size_t offset;
        std::size_t length;
    };
    std::vector<WordId> text_words_;
    std::vector<WordId> visual_words_;
    std::vector<SentenceEntry> sentences_;
    std::vector<ImageEntry> images_;
    std::vector<SentenceAssignment> sentence_z_;
    std::vector<ImageAssignment> image_z_;

    std::vector<std::uint32_t> user_aspect_, user_aspect_total_;
    std::vector<std::uint32_t> user_switch_;
    std::vector<std::uint32_t> user_aspect_topic_, user_aspect_topic_total_;
    std::vector<std::uint32_t> item_aspect_, item_aspect_total_;
    std::vector<std::uint32_t> item_aspect_topic_, item_aspect_topic_total_;
    std::vector<std::uint32_t> topic_term_, topic_term_total_;
    std::vector<std::uint32_t> topic_visual_, topic_visual_total_;
    std::vector<std::uint8_t> user_observed_, item_observed_;

    mutable std::vector<double> scratch_log_words_;
};

struct MatmRunStats {
    std::size_t sweeps = 0;
    std::size_t samples_averaged = 0;
    bool counts_checked = false;
};

/// Runs config.iters sweeps; estimates after burn-in (every sample_lag-th sweep)
/// are averaged. When no sweep qualifies, the final state's estimate is returned.
/// With check_counts set, count consistency is verified after every sweep and a
/// std::logic_error is thrown on the first mismatch.
MatmParams run_matm(const Corpus& corpus, std::span<const std::size_t> review_ratings,
                    const MatmConfig& config, MatmRunStats* stats = nullptr, bool check_counts = false);

/// Terms ranked by sum_k theta[u][a][k] * phi_text[k][t], highest first.
std::vector<std::pair<WordId, double>> aspect_term_distribution(const MatmParams& params,
                                                                std::size_t user, std::size_t aspect);

/// Top-n terms per topic, for the text export.
void write_topic_summary(const MatmParams& params, const Vocabulary& vocab, std::size_t top_n,
                         std::ostream& out);

void save_matm_params(const MatmParams& params, std::ostream& out);
MatmParams load_matm_params(std::istream& in);

// ---------------------------------------------------------------------------
// Synthetic corpora following the generative process.

struct SyntheticSizes {
    std::size_t users = 50;
    std::size_t items = 30;
    /// Reviews per user; each user reviews this many distinct items.
    std::size_t reviews_per_user = 10;
    std::size_t sentences_per_review = 4;
    std::size_t words_per_sentence = 6;
    std::size_t images_per_item = 1;
    std::size_t visual_words_per_image = kDefaultVisualWords;
    std::size_t text_vocab = 200;
    std::size_t visual_vocab = 32;
    /// When non-empty, overrides reviews_per_user per user.
    std::vector<std::size_t> reviews_of_user;

    static constexpr std::size_t kDefaultVisualWords = 49;
};

/// Ground-truth parameters drawn from the priors in config.
MatmParams draw_ground_truth(const MatmConfig& config, const SyntheticSizes& sizes, Rng& rng);

/// Samples a corpus from the generative process under the given parameters.
/// Ratings are set by rate(u, i) when supplied, 3.0 otherwise.
Corpus generate_corpus(const MatmParams& truth, const SyntheticSizes& sizes, std::uint64_t seed,
                       const std::function<double(std::size_t, std::size_t)>& rate = {});

}  // namespace mmalfm
