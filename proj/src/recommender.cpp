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

#include "mmalfm/recommender.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace mmalfm {

namespace {

// Background terms appear in the top lists of more than this many aspects.
constexpr std::size_t kBackgroundAspectLimit = 3;
constexpr std::size_t kBackgroundListLength = 50;

}  // namespace

Predictor::Predictor(const MatmParams& params, const AlfmModel& model) : params_(params), model_(model) {
    if (params.aspects != model.aspects) {
        throw std::invalid_argument("Predictor: topic model and factor model disagree on the aspect count");
    }
}

double Predictor::score(std::size_t user, std::size_t item) const {
    static thread_local std::vector<double> rho;
    static thread_local std::vector<double> s;
    rho.resize(params_.aspects);
    s.resize(params_.aspects);
    pair_context(params_, user, item, rho, s);
    return predict_raw(model_, rho, s, user, item);
}

double Predictor::predict(std::size_t user, std::size_t item) const {
    return std::clamp(score(user, item), 1.0, 5.0);
}

std::vector<std::vector<TermWeight>> user_aspect_terms(const MatmParams& params, const Vocabulary& vocab,
                                                       std::size_t user, std::size_t n_terms) {
    const auto A = params.aspects;
    std::vector<std::vector<std::pair<WordId, double>>> ranked(A);
    std::unordered_map<WordId, std::size_t> appearances;
    for (std::size_t a = 0; a < A; ++a) {
        ranked[a] = aspect_term_distribution(params, user, a);
        const auto head = std::min(kBackgroundListLength, ranked[a].size());
        for (std::size_t n = 0; n < head; ++n) {
            ++appearances[ranked[a][n].first];
        }
    }
    std::vector<std::vector<TermWeight>> out(A);
    for (std::size_t a = 0; a < A; ++a) {
        for (const auto& [term, prob] : ranked[a]) {
            if (out[a].size() == n_terms) {
                break;
            }
            if (const auto it = appearances.find(term);
                it != appearances.end() && it->second > kBackgroundAspectLimit) {
                continue;
            }
            out[a].push_back({term < vocab.size() ? vocab.term(term) : "#" + std::to_string(term), prob});
        }
    }
    return out;
}

Explanation explain(std::size_t user, std::size_t item, const MatmParams& params, const AlfmModel& model,
                    const Vocabulary& vocab, std::size_t n_terms) {
    if (user >= params.num_users || user >= model.num_users) {
        throw std::out_of_range("explain: unknown user index " + std::to_string(user));
    }
    if (item >= params.num_items || item >= model.num_items) {
        throw std::out_of_range("explain: unknown item index " + std::to_string(item));
    }
    const auto A = params.aspects;
    std::vector<double> rho(A);
    std::vector<double> s(A);
    pair_context(params, user, item, rho, s);

    Explanation ex;
    ex.user = user;
    ex.item = item;
    ex.predicted_rating = mmalfm::predict(model, rho, s, user, item);
    auto terms = user_aspect_terms(params, vocab, user, n_terms);
    for (std::size_t a = 0; a < A; ++a) {
        ex.aspects.push_back({a, rho[a], s[a], polarity(model, user, item, a), std::move(terms[a])});
    }
    return ex;
}

nlohmann::json to_json(const Explanation& ex) {
    nlohmann::json aspects = nlohmann::json::array();
    for (const auto& a : ex.aspects) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : a.top_terms) {
            terms.push_back({{"term", t.term}, {"probability", t.probability}});
        }
        aspects.push_back({{"aspect", a.aspect},
                           {"importance", a.importance},
                           {"matching", a.matching},
                           {"polarity", a.polarity},
                           {"top_terms", terms}});
    }
    return {{"user", ex.user}, {"item", ex.item}, {"predicted_rating", ex.predicted_rating}, {"aspects", aspects}};
}

void write_table(const Explanation& ex, std::ostream& out) {
    out << "user " << ex.user << "  item " << ex.item << "  predicted rating " << std::fixed
        << std::setprecision(3) << ex.predicted_rating << '\n';
    out << std::left << std::setw(8) << "aspect" << std::right << std::setw(12) << "importance"
        << std::setw(10) << "matching" << std::setw(10) << "polarity" << "  top terms\n";
    for (const auto& a : ex.aspects) {
        std::ostringstream terms;
        for (std::size_t n = 0; n < a.top_terms.size(); ++n) {
            terms << (n == 0 ? "" : ", ") << a.top_terms[n].term;
        }
        const char* sign = a.polarity > 0 ? "+" : (a.polarity < 0 ? "-" : "0");
        out << std::left << std::setw(8) << a.aspect << std::right << std::setw(12) << std::setprecision(4)
            << a.importance << std::setw(10) << a.matching << std::setw(10) << sign << "  " << terms.str()
            << '\n';
    }
}

RecommendationList recommend(std::size_t user, std::span<const std::size_t> candidates, std::size_t n,
                             const Predictor& predictor) {
    RecommendationList list;
    list.user = user;
    list.items.reserve(candidates.size());
    for (const auto item : candidates) {
        list.items.push_back({item, predictor.score(user, item)});
    }
    const auto better = [](const ScoredItem& a, const ScoredItem& b) {
        return a.score != b.score ? a.score > b.score : a.item < b.item;
    };
    const auto keep = std::min(n, list.items.size());
    std::partial_sort(list.items.begin(), list.items.begin() + static_cast<std::ptrdiff_t>(keep),
                      list.items.end(), better);
    list.items.resize(keep);
    return list;
}

std::vector<std::size_t> candidate_items(std::size_t user, std::size_t num_items,
                                         std::span<const Observation> train) {
    std::vector<std::uint8_t> rated(num_items, 0);
    for (const auto& obs : train) {
        if (obs.user == user && obs.item < num_items) {
            rated[obs.item] = 1;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < num_items; ++i) {
        if (rated[i] == 0) {
            out.push_back(i);
        }
    }
    return out;
}

}  // namespace mmalfm
