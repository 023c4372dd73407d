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

#include "mmalfm/matm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "mmalfm/binary_io.hpp"

namespace mmalfm {

namespace {

// Sentences longer than this are scored in log space.
constexpr std::size_t kDirectProductMaxWords = 20;

/// For each position, how many earlier positions hold the same word.
void earlier_repeats(std::span<const WordId> words, std::vector<std::uint32_t>& out) {
    out.assign(words.size(), 0);
    for (std::size_t j = 1; j < words.size(); ++j) {
        for (std::size_t m = 0; m < j; ++m) {
            out[j] += words[m] == words[j];
        }
    }
}

}  // namespace

void MatmConfig::validate() const {
    if (topics == 0 || aspects == 0) {
        throw std::invalid_argument("MATM: topic and aspect counts must be at least 1");
    }
    if (!(alpha_user > 0 && alpha_item > 0 && gamma_user > 0 && gamma_item > 0 && beta_text > 0 &&
          beta_visual > 0 && eta0 > 0 && eta1 > 0)) {
        throw std::invalid_argument("MATM: all priors must be positive");
    }
    if (iters <= burn_in) {
        throw std::invalid_argument("MATM: iters must exceed burn_in");
    }
    if (sample_lag == 0) {
        throw std::invalid_argument("MATM: sample_lag must be at least 1");
    }
}

MatmParams MatmParams::shaped(std::size_t users, std::size_t items, std::size_t aspects,
                              std::size_t topics, std::size_t text_vocab, std::size_t visual_vocab) {
    MatmParams p;
    p.num_users = users;
    p.num_items = items;
    p.aspects = aspects;
    p.topics = topics;
    p.text_vocab = text_vocab;
    p.visual_vocab = visual_vocab;
    p.theta.assign(users * aspects * topics, 0.0);
    p.psi.assign(items * aspects * topics, 0.0);
    p.lambda_user.assign(users * aspects, 0.0);
    p.lambda_item.assign(items * aspects, 0.0);
    p.pi.assign(users, 0.0);
    p.phi_text.assign(topics * text_vocab, 0.0);
    p.phi_visual.assign(topics * visual_vocab, 0.0);
    p.user_observed.assign(users, 0);
    p.item_observed.assign(items, 0);
    return p;
}

// ---------------------------------------------------------------------------
// Sampler

MatmSampler::MatmSampler(const Corpus& corpus, std::span<const std::size_t> review_ratings,
                         const MatmConfig& config)
    : config_(config),
      M_(corpus.num_users()),
      N_(corpus.num_items()),
      A_(config.aspects),
      K_(config.topics),
      T_(corpus.vocab_size()),
      C_(corpus.visual_vocab_size),
      rng_(config.seed) {
    config_.validate();

    const auto add_review = [&](std::size_t r) {
        const auto& rating = corpus.ratings.at(r);
        for (const auto& sentence : corpus.reviews[r]) {
            if (sentence.empty()) {
                continue;
            }
            sentences_.push_back({rating.user, rating.item, text_words_.size(), sentence.size()});
            text_words_.insert(text_words_.end(), sentence.begin(), sentence.end());
        }
    };
    if (review_ratings.empty()) {
        for (std::size_t r = 0; r < corpus.ratings.size(); ++r) {
            add_review(r);
        }
    } else {
        for (const auto r : review_ratings) {
            add_review(r);
        }
    }
    if (config_.use_images) {
        for (std::size_t i = 0; i < N_; ++i) {
            for (const auto& doc : corpus.image_docs[i]) {
                if (doc.empty()) {
                    continue;
                }
                images_.push_back({static_cast<std::uint32_t>(i), visual_words_.size(), doc.size()});
                visual_words_.insert(visual_words_.end(), doc.begin(), doc.end());
            }
        }
    }

    user_aspect_.assign(M_ * A_, 0);
    user_aspect_total_.assign(M_, 0);
    user_switch_.assign(M_ * 2, 0);
    user_aspect_topic_.assign(M_ * A_ * K_, 0);
    user_aspect_topic_total_.assign(M_ * A_, 0);
    item_aspect_.assign(N_ * A_, 0);
    item_aspect_total_.assign(N_, 0);
    item_aspect_topic_.assign(N_ * A_ * K_, 0);
    item_aspect_topic_total_.assign(N_ * A_, 0);
    topic_term_.assign(K_ * T_, 0);
    topic_term_total_.assign(K_, 0);
    topic_visual_.assign(K_ * C_, 0);
    topic_visual_total_.assign(K_, 0);
    user_observed_.assign(M_, 0);
    item_observed_.assign(N_, 0);

    sentence_z_.resize(sentences_.size());
    for (std::size_t s = 0; s < sentences_.size(); ++s) {
        SentenceAssignment z;
        z.switch_y = static_cast<std::uint8_t>(rng_.below(2));
        z.aspect = static_cast<std::uint32_t>(rng_.below(A_));
        z.topic = static_cast<std::uint32_t>(rng_.below(K_));
        add_sentence(s, z);
        user_observed_[sentences_[s].user] = 1;
        item_observed_[sentences_[s].item] = 1;
    }
    image_z_.resize(images_.size());
    for (std::size_t p = 0; p < images_.size(); ++p) {
        ImageAssignment z;
        z.aspect = static_cast<std::uint32_t>(rng_.below(A_));
        z.topic = static_cast<std::uint32_t>(rng_.below(K_));
        add_image(p, z);
        item_observed_[images_[p].item] = 1;
    }
}

MatmSampler::SentenceRef MatmSampler::sentence(std::size_t s) const {
    const auto& e = sentences_.at(s);
    return {e.user, e.item, {text_words_.data() + e.offset, e.length}};
}

MatmSampler::ImageRef MatmSampler::image(std::size_t p) const {
    const auto& e = images_.at(p);
    return {e.item, {visual_words_.data() + e.offset, e.length}};
}

void MatmSampler::apply_sentence(std::size_t s, const SentenceAssignment& z, int delta) {
    const auto& e = sentences_[s];
    const auto d = static_cast<std::uint32_t>(delta);  // wraps for -1; unsigned arithmetic is modular
    user_switch_[e.user * 2 + z.switch_y] += d;
    if (z.switch_y == 0) {
        user_aspect_[e.user * A_ + z.aspect] += d;
        user_aspect_total_[e.user] += d;
        user_aspect_topic_[(e.user * A_ + z.aspect) * K_ + z.topic] += d;
        user_aspect_topic_total_[e.user * A_ + z.aspect] += d;
    } else {
        item_aspect_[e.item * A_ + z.aspect] += d;
        item_aspect_total_[e.item] += d;
        item_aspect_topic_[(e.item * A_ + z.aspect) * K_ + z.topic] += d;
        item_aspect_topic_total_[e.item * A_ + z.aspect] += d;
    }
    for (std::size_t j = 0; j < e.length; ++j) {
        topic_term_[z.topic * T_ + text_words_[e.offset + j]] += d;
    }
    topic_term_total_[z.topic] += d * static_cast<std::uint32_t>(e.length);
}

void MatmSampler::apply_image(std::size_t p, const ImageAssignment& z, int delta) {
    const auto& e = images_[p];
    const auto d = static_cast<std::uint32_t>(delta);
    const auto words = d * static_cast<std::uint32_t>(e.length);
    item_aspect_[e.item * A_ + z.aspect] += d;
    item_aspect_total_[e.item] += d;
    item_aspect_topic_[(e.item * A_ + z.aspect) * K_ + z.topic] += words;
    item_aspect_topic_total_[e.item * A_ + z.aspect] += words;
    for (std::size_t j = 0; j < e.length; ++j) {
        topic_visual_[z.topic * C_ + visual_words_[e.offset + j]] += d;
    }
    topic_visual_total_[z.topic] += words;
}

void MatmSampler::remove_sentence(std::size_t s) { apply_sentence(s, sentence_z_[s], -1); }

void MatmSampler::add_sentence(std::size_t s, const SentenceAssignment& assignment) {
    sentence_z_[s] = assignment;
    apply_sentence(s, assignment, +1);
}

void MatmSampler::remove_image(std::size_t p) { apply_image(p, image_z_[p], -1); }

void MatmSampler::add_image(std::size_t p, const ImageAssignment& assignment) {
    image_z_[p] = assignment;
    apply_image(p, assignment, +1);
}

void MatmSampler::word_log_likelihoods(std::span<const WordId> words,
                                       const std::vector<std::uint32_t>& topic_word,
                                       const std::vector<std::uint32_t>& topic_total, std::size_t vocab,
                                       double beta, std::vector<double>& out) const {
    // Collapsed predictive of the whole word sequence under topic k: each word
    // sees the counts incremented by the sentence's earlier words.
    static thread_local std::vector<std::uint32_t> repeats;
    earlier_repeats(words, repeats);
    out.assign(K_, 0.0);
    const double vocab_mass = static_cast<double>(vocab) * beta;
    const bool direct = words.size() <= kDirectProductMaxWords;
    for (std::size_t k = 0; k < K_; ++k) {
        const double total = vocab_mass + topic_total[k];
        if (direct) {
            double product = 1.0;
            for (std::size_t j = 0; j < words.size(); ++j) {
                product *= (beta + topic_word[k * vocab + words[j]] + repeats[j]) /
                           (total + static_cast<double>(j));
            }
            out[k] = std::log(product);
        } else {
            double acc = 0.0;
            for (std::size_t j = 0; j < words.size(); ++j) {
                acc += std::log(beta + topic_word[k * vocab + words[j]] + repeats[j]) -
                       std::log(total + static_cast<double>(j));
            }
            out[k] = acc;
        }
    }
}

void MatmSampler::sentence_weights(std::size_t s, std::vector<double>& out) const {
    const auto& e = sentences_[s];
    word_log_likelihoods({text_words_.data() + e.offset, e.length}, topic_term_, topic_term_total_, T_,
                         config_.beta_text, scratch_log_words_);
    const double top = *std::max_element(scratch_log_words_.begin(), scratch_log_words_.end());
    std::vector<double>& word = scratch_log_words_;
    for (auto& v : word) {
        v = std::exp(v - top);
    }

    out.assign(2 * A_ * K_, 0.0);
    const double a_mass_u = static_cast<double>(A_) * config_.gamma_user + user_aspect_total_[e.user];
    const double a_mass_i = static_cast<double>(A_) * config_.gamma_item + item_aspect_total_[e.item];
    const double switch0 = config_.eta0 + user_switch_[e.user * 2 + 0];
    const double switch1 = config_.eta1 + user_switch_[e.user * 2 + 1];
    const double k_alpha_u = static_cast<double>(K_) * config_.alpha_user;
    const double k_alpha_i = static_cast<double>(K_) * config_.alpha_item;
    for (std::size_t a = 0; a < A_; ++a) {
        const double user_aspect =
            switch0 * (config_.gamma_user + user_aspect_[e.user * A_ + a]) / a_mass_u;
        const double item_aspect =
            switch1 * (config_.gamma_item + item_aspect_[e.item * A_ + a]) / a_mass_i;
        const double u_topic_mass = k_alpha_u + user_aspect_topic_total_[e.user * A_ + a];
        const double i_topic_mass = k_alpha_i + item_aspect_topic_total_[e.item * A_ + a];
        const std::uint32_t* u_topic = &user_aspect_topic_[(e.user * A_ + a) * K_];
        const std::uint32_t* i_topic = &item_aspect_topic_[(e.item * A_ + a) * K_];
        for (std::size_t k = 0; k < K_; ++k) {
            out[(0 * A_ + a) * K_ + k] =
                user_aspect * (config_.alpha_user + u_topic[k]) / u_topic_mass * word[k];
            out[(1 * A_ + a) * K_ + k] =
                item_aspect * (config_.alpha_item + i_topic[k]) / i_topic_mass * word[k];
        }
    }
}

void MatmSampler::image_weights(std::size_t p, std::vector<double>& out) const {
    const auto& e = images_[p];
    word_log_likelihoods({visual_words_.data() + e.offset, e.length}, topic_visual_, topic_visual_total_,
                         C_, config_.beta_visual, scratch_log_words_);
    const double top = *std::max_element(scratch_log_words_.begin(), scratch_log_words_.end());
    std::vector<double>& word = scratch_log_words_;
    for (auto& v : word) {
        v = std::exp(v - top);
    }

    out.assign(A_ * K_, 0.0);
    const double a_mass = static_cast<double>(A_) * config_.gamma_item + item_aspect_total_[e.item];
    const double k_alpha = static_cast<double>(K_) * config_.alpha_item;
    for (std::size_t a = 0; a < A_; ++a) {
        const double aspect = (config_.gamma_item + item_aspect_[e.item * A_ + a]) / a_mass;
        const double topic_mass = k_alpha + item_aspect_topic_total_[e.item * A_ + a];
        const std::uint32_t* topic = &item_aspect_topic_[(e.item * A_ + a) * K_];
        for (std::size_t k = 0; k < K_; ++k) {
            out[a * K_ + k] = aspect * (config_.alpha_item + topic[k]) / topic_mass * word[k];
        }
    }
}

SentenceAssignment MatmSampler::sentence_cell(std::size_t cell, std::size_t aspects, std::size_t topics) {
    SentenceAssignment z;
    z.topic = static_cast<std::uint32_t>(cell % topics);
    cell /= topics;
    z.aspect = static_cast<std::uint32_t>(cell % aspects);
    z.switch_y = static_cast<std::uint8_t>(cell / aspects);
    return z;
}

ImageAssignment MatmSampler::image_cell(std::size_t cell, std::size_t topics) {
    return {static_cast<std::uint32_t>(cell / topics), static_cast<std::uint32_t>(cell % topics)};
}

SentenceAssignment MatmSampler::draw_sentence(std::size_t s, Rng& rng) const {
    static thread_local std::vector<double> weights;
    sentence_weights(s, weights);
    return sentence_cell(rng.categorical(weights), A_, K_);
}

ImageAssignment MatmSampler::draw_image(std::size_t p, Rng& rng) const {
    static thread_local std::vector<double> weights;
    image_weights(p, weights);
    return image_cell(rng.categorical(weights), K_);
}

void MatmSampler::sample_sentence(std::size_t s) {
    remove_sentence(s);
    add_sentence(s, draw_sentence(s, rng_));
}

void MatmSampler::sample_image(std::size_t p) {
    remove_image(p);
    add_image(p, draw_image(p, rng_));
}

void MatmSampler::sweep() {
    for (std::size_t s = 0; s < sentences_.size(); ++s) {
        sample_sentence(s);
    }
    for (std::size_t p = 0; p < images_.size(); ++p) {
        sample_image(p);
    }
}

bool MatmSampler::counts_consistent() const {
    MatmSampler fresh = *this;
    for (auto* table : {&fresh.user_aspect_, &fresh.user_aspect_total_, &fresh.user_switch_,
                        &fresh.user_aspect_topic_, &fresh.user_aspect_topic_total_, &fresh.item_aspect_,
                        &fresh.item_aspect_total_, &fresh.item_aspect_topic_,
                        &fresh.item_aspect_topic_total_, &fresh.topic_term_, &fresh.topic_term_total_,
                        &fresh.topic_visual_, &fresh.topic_visual_total_}) {
        std::fill(table->begin(), table->end(), 0u);
    }
    for (std::size_t s = 0; s < sentences_.size(); ++s) {
        fresh.apply_sentence(s, sentence_z_[s], +1);
    }
    for (std::size_t p = 0; p < images_.size(); ++p) {
        fresh.apply_image(p, image_z_[p], +1);
    }
    return fresh.user_aspect_ == user_aspect_ && fresh.user_aspect_total_ == user_aspect_total_ &&
           fresh.user_switch_ == user_switch_ && fresh.user_aspect_topic_ == user_aspect_topic_ &&
           fresh.user_aspect_topic_total_ == user_aspect_topic_total_ &&
           fresh.item_aspect_ == item_aspect_ && fresh.item_aspect_total_ == item_aspect_total_ &&
           fresh.item_aspect_topic_ == item_aspect_topic_ &&
           fresh.item_aspect_topic_total_ == item_aspect_topic_total_ &&
           fresh.topic_term_ == topic_term_ && fresh.topic_term_total_ == topic_term_total_ &&
           fresh.topic_visual_ == topic_visual_ && fresh.topic_visual_total_ == topic_visual_total_;
}

MatmParams MatmSampler::estimate() const {
    auto p = MatmParams::shaped(M_, N_, A_, K_, T_, C_);
    const auto& c = config_;
    for (std::size_t u = 0; u < M_; ++u) {
        const double a_mass = static_cast<double>(A_) * c.gamma_user + user_aspect_total_[u];
        for (std::size_t a = 0; a < A_; ++a) {
            p.lambda_user[u * A_ + a] = (c.gamma_user + user_aspect_[u * A_ + a]) / a_mass;
            const double k_mass = static_cast<double>(K_) * c.alpha_user + user_aspect_topic_total_[u * A_ + a];
            for (std::size_t k = 0; k < K_; ++k) {
                p.theta[(u * A_ + a) * K_ + k] =
                    (c.alpha_user + user_aspect_topic_[(u * A_ + a) * K_ + k]) / k_mass;
            }
        }
        const double y0 = user_switch_[u * 2 + 0];
        const double y1 = user_switch_[u * 2 + 1];
        p.pi[u] = (c.eta0 + y0) / (c.eta1 + c.eta0 + y1 + y0);
    }
    for (std::size_t i = 0; i < N_; ++i) {
        const double a_mass = static_cast<double>(A_) * c.gamma_item + item_aspect_total_[i];
        for (std::size_t a = 0; a < A_; ++a) {
            p.lambda_item[i * A_ + a] = (c.gamma_item + item_aspect_[i * A_ + a]) / a_mass;
            const double k_mass = static_cast<double>(K_) * c.alpha_item + item_aspect_topic_total_[i * A_ + a];
            for (std::size_t k = 0; k < K_; ++k) {
                p.psi[(i * A_ + a) * K_ + k] =
                    (c.alpha_item + item_aspect_topic_[(i * A_ + a) * K_ + k]) / k_mass;
            }
        }
    }
    for (std::size_t k = 0; k < K_; ++k) {
        const double t_mass = static_cast<double>(T_) * c.beta_text + topic_term_total_[k];
        for (std::size_t t = 0; t < T_; ++t) {
            p.phi_text[k * T_ + t] = (c.beta_text + topic_term_[k * T_ + t]) / t_mass;
        }
        const double c_mass = static_cast<double>(C_) * c.beta_visual + topic_visual_total_[k];
        for (std::size_t v = 0; v < C_; ++v) {
            p.phi_visual[k * C_ + v] = (c.beta_visual + topic_visual_[k * C_ + v]) / c_mass;
        }
    }
    p.user_observed = user_observed_;
    p.item_observed = item_observed_;
    return p;
}

// ---------------------------------------------------------------------------
// Driver

MatmParams run_matm(const Corpus& corpus, std::span<const std::size_t> review_ratings,
                    const MatmConfig& config, MatmRunStats* stats, bool check_counts) {
    MatmSampler sampler(corpus, review_ratings, config);
    MatmRunStats local;
    MatmRunStats& st = stats != nullptr ? *stats : local;
    st = {};
    st.counts_checked = check_counts;

    std::optional<MatmParams> sum;
    const auto accumulate = [&](const MatmParams& sample) {
        if (!sum) {
            sum = sample;
            return;
        }
        const auto add = [](std::vector<double>& into, const std::vector<double>& from) {
            for (std::size_t k = 0; k < into.size(); ++k) {
                into[k] += from[k];
            }
        };
        add(sum->theta, sample.theta);
        add(sum->psi, sample.psi);
        add(sum->lambda_user, sample.lambda_user);
        add(sum->lambda_item, sample.lambda_item);
        add(sum->pi, sample.pi);
        add(sum->phi_text, sample.phi_text);
        add(sum->phi_visual, sample.phi_visual);
    };

    for (std::size_t it = 1; it <= config.iters; ++it) {
        sampler.sweep();
        ++st.sweeps;
        if (check_counts && !sampler.counts_consistent()) {
            throw std::logic_error("MATM count tables diverged from assignments after sweep " +
                                   std::to_string(it));
        }
        if (it > config.burn_in && (it - config.burn_in) % config.sample_lag == 0) {
            accumulate(sampler.estimate());
            ++st.samples_averaged;
        }
    }
    if (!sum) {
        return sampler.estimate();
    }
    const double scale = 1.0 / static_cast<double>(st.samples_averaged);
    for (auto* table : {&sum->theta, &sum->psi, &sum->lambda_user, &sum->lambda_item, &sum->pi,
                        &sum->phi_text, &sum->phi_visual}) {
        for (auto& v : *table) {
            v *= scale;
        }
    }
    return *sum;
}

// ---------------------------------------------------------------------------
// Summaries

std::vector<std::pair<WordId, double>> aspect_term_distribution(const MatmParams& params,
                                                                std::size_t user, std::size_t aspect) {
    if (user >= params.num_users || aspect >= params.aspects) {
        throw std::out_of_range("aspect_term_distribution: user or aspect out of range");
    }
    const auto theta = params.theta_row(user, aspect);
    std::vector<std::pair<WordId, double>> terms(params.text_vocab);
    for (std::size_t t = 0; t < params.text_vocab; ++t) {
        double prob = 0.0;
        for (std::size_t k = 0; k < params.topics; ++k) {
            prob += theta[k] * params.phi_text[k * params.text_vocab + t];
        }
        terms[t] = {static_cast<WordId>(t), prob};
    }
    std::stable_sort(terms.begin(), terms.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return terms;
}

void write_topic_summary(const MatmParams& params, const Vocabulary& vocab, std::size_t top_n,
                         std::ostream& out) {
    for (std::size_t k = 0; k < params.topics; ++k) {
        const auto row = params.phi_text_row(k);
        std::vector<std::size_t> order(row.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return row[a] > row[b]; });
        out << "topic " << k << ':';
        for (std::size_t n = 0; n < std::min(top_n, order.size()); ++n) {
            const auto t = order[n];
            out << ' ' << (t < vocab.size() ? vocab.term(static_cast<WordId>(t)) : std::to_string(t)) << '('
                << std::fixed << std::setprecision(4) << row[t] << ')';
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Serialization

void save_matm_params(const MatmParams& p, std::ostream& out) {
    BinaryWriter w(out, FileKind::MatmParams);
    for (const auto n : {p.num_users, p.num_items, p.aspects, p.topics, p.text_vocab, p.visual_vocab}) {
        w.write<std::uint64_t>(n);
    }
    w.write(p.theta);
    w.write(p.psi);
    w.write(p.lambda_user);
    w.write(p.lambda_item);
    w.write(p.pi);
    w.write(p.phi_text);
    w.write(p.phi_visual);
    w.write(p.user_observed);
    w.write(p.item_observed);
}

MatmParams load_matm_params(std::istream& in) {
    BinaryReader r(in, FileKind::MatmParams);
    MatmParams p;
    p.num_users = r.read<std::uint64_t>();
    p.num_items = r.read<std::uint64_t>();
    p.aspects = r.read<std::uint64_t>();
    p.topics = r.read<std::uint64_t>();
    p.text_vocab = r.read<std::uint64_t>();
    p.visual_vocab = r.read<std::uint64_t>();
    p.theta = r.read_vector<double>();
    p.psi = r.read_vector<double>();
    p.lambda_user = r.read_vector<double>();
    p.lambda_item = r.read_vector<double>();
    p.pi = r.read_vector<double>();
    p.phi_text = r.read_vector<double>();
    p.phi_visual = r.read_vector<double>();
    p.user_observed = r.read_vector<std::uint8_t>();
    p.item_observed = r.read_vector<std::uint8_t>();
    if (p.theta.size() != p.num_users * p.aspects * p.topics ||
        p.psi.size() != p.num_items * p.aspects * p.topics ||
        p.lambda_user.size() != p.num_users * p.aspects || p.lambda_item.size() != p.num_items * p.aspects ||
        p.pi.size() != p.num_users || p.phi_text.size() != p.topics * p.text_vocab ||
        p.phi_visual.size() != p.topics * p.visual_vocab || p.user_observed.size() != p.num_users ||
        p.item_observed.size() != p.num_items) {
        throw FormatError("MATM parameter file has inconsistent table shapes");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Generative process

MatmParams draw_ground_truth(const MatmConfig& config, const SyntheticSizes& sizes, Rng& rng) {
    config.validate();
    const auto A = config.aspects;
    const auto K = config.topics;
    auto p = MatmParams::shaped(sizes.users, sizes.items, A, K, sizes.text_vocab, sizes.visual_vocab);
    const auto put = [](std::vector<double>& table, std::size_t offset, const std::vector<double>& row) {
        std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(offset));
    };
    for (std::size_t k = 0; k < K; ++k) {
        put(p.phi_text, k * sizes.text_vocab, rng.dirichlet(sizes.text_vocab, config.beta_text));
        if (sizes.visual_vocab > 0) {
            put(p.phi_visual, k * sizes.visual_vocab, rng.dirichlet(sizes.visual_vocab, config.beta_visual));
        }
    }
    for (std::size_t u = 0; u < sizes.users; ++u) {
        for (std::size_t a = 0; a < A; ++a) {
            put(p.theta, (u * A + a) * K, rng.dirichlet(K, config.alpha_user));
        }
    }
    for (std::size_t i = 0; i < sizes.items; ++i) {
        for (std::size_t a = 0; a < A; ++a) {
            put(p.psi, (i * A + a) * K, rng.dirichlet(K, config.alpha_item));
        }
    }
    for (std::size_t u = 0; u < sizes.users; ++u) {
        put(p.lambda_user, u * A, rng.dirichlet(A, config.gamma_user));
        p.pi[u] = rng.beta(config.eta0, config.eta1);
    }
    for (std::size_t i = 0; i < sizes.items; ++i) {
        put(p.lambda_item, i * A, rng.dirichlet(A, config.gamma_item));
    }
    p.user_observed.assign(sizes.users, 1);
    p.item_observed.assign(sizes.items, 1);
    return p;
}

Corpus generate_corpus(const MatmParams& truth, const SyntheticSizes& sizes, std::uint64_t seed,
                       const std::function<double(std::size_t, std::size_t)>& rate) {
    if (truth.num_users != sizes.users || truth.num_items != sizes.items ||
        truth.text_vocab != sizes.text_vocab || truth.visual_vocab != sizes.visual_vocab) {
        throw std::invalid_argument("generate_corpus: ground truth does not match the requested sizes");
    }
    if (!sizes.reviews_of_user.empty() && sizes.reviews_of_user.size() != sizes.users) {
        throw std::invalid_argument("generate_corpus: reviews_of_user must list every user");
    }
    Rng rng(seed);
    Corpus corpus;
    for (std::size_t u = 0; u < sizes.users; ++u) {
        corpus.user_ids.push_back("u" + std::to_string(u));
    }
    for (std::size_t i = 0; i < sizes.items; ++i) {
        corpus.item_ids.push_back("i" + std::to_string(i));
    }
    std::vector<std::string> terms;
    for (std::size_t t = 0; t < sizes.text_vocab; ++t) {
        terms.push_back("w" + std::to_string(t));
    }
    corpus.text_vocab = Vocabulary::from_terms(std::move(terms));
    corpus.visual_vocab_size = sizes.visual_vocab;

    std::vector<std::size_t> items(sizes.items);
    std::int64_t clock = 0;
    for (std::size_t u = 0; u < sizes.users; ++u) {
        const auto wanted = sizes.reviews_of_user.empty() ? sizes.reviews_per_user : sizes.reviews_of_user[u];
        const auto count = std::min(wanted, sizes.items);
        // Partial Fisher-Yates: the first `count` entries become a uniform sample.
        std::iota(items.begin(), items.end(), std::size_t{0});
        for (std::size_t n = 0; n < count; ++n) {
            const auto j = n + static_cast<std::size_t>(rng.below(sizes.items - n));
            std::swap(items[n], items[j]);
        }
        std::vector<std::size_t> chosen(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(count));
        std::sort(chosen.begin(), chosen.end());
        for (const auto i : chosen) {
            Review review;
            for (std::size_t s = 0; s < sizes.sentences_per_review; ++s) {
                // pi_u is the probability of writing from the user's own preferences (y = 0).
                const bool own = rng.uniform() < truth.pi[u];
                const auto a = own ? rng.categorical(truth.lambda_user_row(u))
                                   : rng.categorical(truth.lambda_item_row(i));
                const auto k = own ? rng.categorical(truth.theta_row(u, a)) : rng.categorical(truth.psi_row(i, a));
                Sentence sentence(sizes.words_per_sentence);
                for (auto& w : sentence) {
                    w = static_cast<WordId>(rng.categorical(truth.phi_text_row(k)));
                }
                review.push_back(std::move(sentence));
            }
            const double value = rate ? rate(u, i) : 3.0;
            corpus.ratings.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i), value, clock++});
            corpus.reviews.push_back(std::move(review));
        }
    }
    corpus.image_docs.assign(sizes.items, {});
    if (sizes.visual_vocab > 0) {
        for (std::size_t i = 0; i < sizes.items; ++i) {
            for (std::size_t n = 0; n < sizes.images_per_item; ++n) {
                const auto a = rng.categorical(truth.lambda_item_row(i));
                const auto k = rng.categorical(truth.psi_row(i, a));
                VisualDoc doc(sizes.visual_words_per_image);
                for (auto& v : doc) {
                    v = static_cast<WordId>(rng.categorical(truth.phi_visual_row(k)));
                }
                corpus.image_docs[i].push_back(std::move(doc));
            }
        }
    }
    corpus.validate();
    return corpus;
}

}  // namespace mmalfm
