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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mmalfm/alfm.hpp"
#include "mmalfm/corpus.hpp"
#include "mmalfm/matm.hpp"
#include "mmalfm/recommender.hpp"

namespace mmalfm {

/// Root mean squared error. Throws std::invalid_argument on empty or
/// mismatched input.
double rmse(std::span<const double> truth, std::span<const double> predicted);

struct TopNMetrics {
    double hit_ratio = 0.0;
    double precision = 0.0;
    double ndcg = 0.0;
    std::size_t users_evaluated = 0;
    /// Users skipped because their held-out set was empty.
    std::size_t users_excluded = 0;
};

/// truth_by_user[u] holds the held-out items of user u. Per user: hits / n,
/// any-hit indicator and NDCG with binary gain, 1/log2(rank + 1) discount and
/// ideal DCG over min(|truth|, n) positions; all macro-averaged.
TopNMetrics topn_metrics(std::span<const RecommendationList> lists,
                         const std::vector<std::vector<std::size_t>>& truth_by_user, std::size_t n = 10);

struct ColdStartGroup {
    std::size_t training_count = 0;
    std::size_t users = 0;
    std::size_t ratings = 0;
    std::optional<double> rmse_baseline;
    std::optional<double> rmse_model;
    /// rmse_baseline - rmse_model; absent for empty groups.
    std::optional<double> gain;
};

/// Test ratings grouped by their user's training count (1..10).
std::array<ColdStartGroup, 10> coldstart_gain(std::span<const double> truth, std::span<const double> baseline,
                                              std::span<const double> model,
                                              std::span<const std::uint32_t> test_users,
                                              std::span<const std::size_t> user_training_counts);

/// Metric name, cutoff (0 when not a ranking metric) and user group ("all" by default).
struct MetricKey {
    std::string name;
    std::size_t cutoff = 0;
    std::string group = "all";

    auto operator<=>(const MetricKey&) const = default;
};

struct EvalReport {
    std::map<MetricKey, double> metrics;
    nlohmann::json metadata = nlohmann::json::object();

    void set(const std::string& name, double value, std::size_t cutoff = 0, const std::string& group = "all") {
        metrics[{name, cutoff, group}] = value;
    }
    std::optional<double> get(const std::string& name, std::size_t cutoff = 0,
                              const std::string& group = "all") const;

    nlohmann::json to_json() const;
    /// Aligned tables: rating-prediction RMSE, ranking metrics (x100), cold-start gains.
    void write_tables(std::ostream& out) const;
};

struct ProtocolConfig {
    MatmConfig matm;
    AlfmConfig alfm;
    SplitRatios rating_split{0.8, 0.1, 0.1};
    SplitRatios topn_split{0.7, 0.0, 0.3};
    std::size_t cutoff = 10;
    std::uint64_t seed = 0;
    bool rating = true;
    bool baseline = true;
    /// Also run with images disabled in the topic model.
    bool text_only = false;
    bool topn = false;
    bool coldstart = false;

    nlohmann::json to_json() const;
};

/// Topic model on training reviews, contexts, factor model, predictions.
struct PipelineModels {
    MatmParams params;
    AlfmTrainResult alfm;
};
PipelineModels fit_pipeline(const Corpus& corpus, std::span<const std::size_t> train, const MatmConfig& matm,
                            const AlfmConfig& alfm);

std::vector<Observation> observations(const Corpus& corpus, std::span<const std::size_t> indices);

/// Runs the configured protocols end to end. Stage failures are rethrown as
/// std::runtime_error prefixed with the stage name.
EvalReport run_experiment(const Corpus& corpus, const ProtocolConfig& config);

// ---------------------------------------------------------------------------
// Planted synthetic data

struct SyntheticSpec {
    std::size_t users = 500;
    std::size_t items = 200;
    std::size_t aspects = 3;
    std::size_t topics = 5;
    std::size_t factors = 5;
    std::size_t text_vocab = 300;
    std::size_t visual_vocab = 64;
    std::size_t sentences_per_review = 4;
    std::size_t words_per_sentence = 6;
    std::size_t images_per_item = 2;
    /// Ratings per user: min_reviews + floor(Exponential(mean_extra_reviews)), capped at max_reviews.
    std::size_t min_reviews = 2;
    double mean_extra_reviews = 12.0;
    std::size_t max_reviews = 60;
    /// Planted factor rows: shared mean plus Gaussian spread.
    double factor_mean = 0.6;
    double factor_spread = 0.5;
    double bias_spread = 0.25;
    double global_bias = 3.5;
    double noise = 0.25;
    std::uint64_t seed = 0;
    /// Priors for drawing the planted topic-model parameters.
    MatmConfig priors;
};

struct SyntheticData {
    Corpus corpus;
    MatmParams truth;
    AlfmModel planted;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace mmalfm
