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

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmalfm/alfm.hpp"
#include "mmalfm/matm.hpp"

namespace mmalfm {

/// Topic-model parameters and fitted factors bundled for serving.
class Predictor {
public:
    Predictor(const MatmParams& params, const AlfmModel& model);

    /// Unclamped score, used for ranking.
    double score(std::size_t user, std::size_t item) const;
    /// Served rating in [1, 5].
    double predict(std::size_t user, std::size_t item) const;

    const MatmParams& params() const { return params_; }
    const AlfmModel& model() const { return model_; }

private:
    const MatmParams& params_;
    const AlfmModel& model_;
};

struct TermWeight {
    std::string term;
    double probability = 0.0;
};

struct AspectExplanation {
    std::size_t aspect = 0;
    double importance = 0.0;
    double matching = 0.0;
    int polarity = 0;
    std::vector<TermWeight> top_terms;
};

struct Explanation {
    std::size_t user = 0;
    std::size_t item = 0;
    double predicted_rating = 0.0;
    std::vector<AspectExplanation> aspects;
};

/// Terms of a user's aspects, most probable first, after dropping background
/// terms: those in the top-50 list of more than three of the user's aspects.
std::vector<std::vector<TermWeight>> user_aspect_terms(const MatmParams& params, const Vocabulary& vocab,
                                                       std::size_t user, std::size_t n_terms);

/// Throws std::out_of_range naming the unknown user or item.
Explanation explain(std::size_t user, std::size_t item, const MatmParams& params, const AlfmModel& model,
                    const Vocabulary& vocab, std::size_t n_terms);

nlohmann::json to_json(const Explanation& explanation);
/// Aligned table: one row per aspect with importance, matching, polarity, terms.
void write_table(const Explanation& explanation, std::ostream& out);

struct ScoredItem {
    std::size_t item = 0;
    double score = 0.0;
};

struct RecommendationList {
    std::size_t user = 0;
    std::vector<ScoredItem> items;
};

/// Top-n candidates by unclamped score; ties go to the lower item index.
RecommendationList recommend(std::size_t user, std::span<const std::size_t> candidates, std::size_t n,
                             const Predictor& predictor);

/// All items the user has no training rating for.
std::vector<std::size_t> candidate_items(std::size_t user, std::size_t num_items,
                                         std::span<const Observation> train);

}  // namespace mmalfm
