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

// Aspect-aware latent factor model.
//
//   r_hat(u, i) = sum_a rho(u,i,a) * s(u,i,a) * (w_a .* p_u)^T (w_a .* q_i)
//                 + b_u + b_i + b_0
//
// rho (aspect importance) and s (aspect matching) come from the topic model
// and stay fixed while p, q, w and the biases are fitted by SGD.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmalfm/matm.hpp"

namespace mmalfm {

struct Observation {
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    double rating = 0.0;
};

struct AlfmConfig {
    std::size_t factors = 5;
    double reg_user = 0.1;
    double reg_item = 0.1;
    double reg_weight = 0.01;
    double reg_bias = 0.1;
    double learning_rate = 0.01;
    /// Smoothing of |w| as sqrt(w^2 + smoothing).
    double smoothing = 1e-6;
    std::size_t max_iters = 50;
    double min_learning_rate = 1e-8;
    /// Half-width of the uniform initialization of P and Q.
    double init_scale = 0.05;
    std::uint64_t seed = 0;
    /// When false W stays at its initial value.
    bool train_weights = true;

    void validate() const;
};

struct AlfmModel {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t aspects = 0;
    std::size_t factors = 0;
    std::vector<double> user_factors;    // P, [user][factor]
    std::vector<double> item_factors;    // Q, [item][factor]
    std::vector<double> aspect_weights;  // W, [aspect][factor]
    std::vector<double> user_bias;
    std::vector<double> item_bias;
    double global_bias = 0.0;

    std::span<const double> p(std::size_t u) const { return {user_factors.data() + u * factors, factors}; }
    std::span<const double> q(std::size_t i) const { return {item_factors.data() + i * factors, factors}; }
    std::span<const double> w(std::size_t a) const { return {aspect_weights.data() + a * factors, factors}; }

    bool operator==(const AlfmModel&) const = default;
};

/// Per-observation importance and matching, both laid out [observation][aspect].
struct AspectContext {
    std::size_t aspects = 0;
    std::vector<double> importance;
    std::vector<double> matching;

    std::size_t size() const { return aspects == 0 ? 0 : importance.size() / aspects; }
    std::span<const double> importance_row(std::size_t n) const {
        return {importance.data() + n * aspects, aspects};
    }
    std::span<const double> matching_row(std::size_t n) const { return {matching.data() + n * aspects, aspects}; }

    /// rho = 1 and s = 1 for every observation.
    static AspectContext uniform_unit(std::size_t observations, std::size_t aspects);
};

/// Jensen-Shannon divergence with base-2 logarithms, in [0, 1]; 0 log 0 = 0.
double jensen_shannon(std::span<const double> p, std::span<const double> q);

/// 1 - JSD(theta_{u,a}, psi_{i,a}). Throws std::invalid_argument unless both
/// inputs are probability vectors of equal length.
double matching_score(std::span<const double> user_topics, std::span<const double> item_topics);

/// pi_u * lambda_{u,a} + (1 - pi_u) * lambda_{i,a}.
inline double importance(double pi_user, double lambda_user, double lambda_item) {
    return pi_user * lambda_user + (1.0 - pi_user) * lambda_item;
}

/// rho and s of one (user, item) pair over all aspects. Users or items the
/// topic model never observed get rho = 1/A and s = 1.
void pair_context(const MatmParams& params, std::size_t user, std::size_t item, std::span<double> rho,
                  std::span<double> s);

AspectContext build_context(const MatmParams& params, std::span<const Observation> observations);

/// sum_a rho_a s_a (w_a .* p)^T (w_a .* q); no biases.
double interaction(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
                   std::size_t user, std::size_t item);

/// Unclamped prediction. Unknown users or items contribute only the biases
/// that are known.
double predict_raw(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
                   std::size_t user, std::size_t item);

/// Served prediction, clamped to [1, 5].
double predict(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
               std::size_t user, std::size_t item);

/// Sign of (w_a .* p_u)^T (w_a .* q_i): +1, -1 or 0.
int polarity(const AlfmModel& model, std::size_t user, std::size_t item, std::size_t aspect);

/// Initial model: P, Q uniform in +-init_scale (P drawn first, row-major, then
/// Q), W = 1/sqrt(A), b_u = b_i = 0, b_0 = mean training rating.
AlfmModel init_model(std::size_t users, std::size_t items, std::size_t aspects,
                     std::span<const Observation> train, const AlfmConfig& config, Rng& rng);

/// Objective with each regularizer counted once per entity:
///   1/2 sum (r - r_hat)^2 + mu_u/2 sum_u |p_u|^2 + mu_i/2 sum_i |q_i|^2
///   + mu_w sum_a sum_f sqrt(w_af^2 + eps) + mu_b/2 (sum_u b_u^2 + sum_i b_i^2)
/// Users and items without training observations add nothing.
double objective(const AlfmModel& model, std::span<const Observation> train, const AspectContext& ctx,
                 const AlfmConfig& config);

/// Gradient of objective() with the same layout as the model tables.
struct AlfmGradient {
    std::vector<double> user_factors;
    std::vector<double> item_factors;
    std::vector<double> aspect_weights;
    std::vector<double> user_bias;
    std::vector<double> item_bias;
};
AlfmGradient objective_gradient(const AlfmModel& model, std::span<const Observation> train,
                                const AspectContext& ctx, const AlfmConfig& config);

/// Per-observation regularizer weights that make one SGD epoch an unbiased
/// pass over objective(): mu_u / n_u, mu_i / n_i, mu_w / |train|.
struct RegularizerShares {
    std::vector<double> user;
    std::vector<double> item;
    double weight = 0.0;
};
RegularizerShares regularizer_shares(std::size_t users, std::size_t items,
                                     std::span<const Observation> train, const AlfmConfig& config);

/// One SGD step on observation n; every parameter's gradient is taken at the
/// pre-step values.
void sgd_step(AlfmModel& model, const Observation& obs, std::span<const double> rho,
              std::span<const double> s, const RegularizerShares& shares, const AlfmConfig& config,
              double learning_rate);

struct EpochRecord {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double objective = 0.0;
    double train_rmse = 0.0;
    bool accepted = false;
};

struct AlfmTrainResult {
    AlfmModel model;
    std::vector<EpochRecord> history;
    /// Objective of each accepted state, starting with the initial model.
    std::vector<double> accepted_objectives;
    std::string diagnostic;
};

/// SGD with the bold-driver schedule: after each epoch the objective is
/// evaluated; on improvement the rate grows by 5%, otherwise the epoch is
/// rolled back and the rate halved. Stops after max_iters epochs or when the
/// rate falls below min_learning_rate.
AlfmTrainResult train_alfm(std::size_t users, std::size_t items, std::span<const Observation> train,
                           const AspectContext& ctx, const AlfmConfig& config);

void save_alfm_model(const AlfmModel& model, std::ostream& out);
AlfmModel load_alfm_model(std::istream& in);

}  // namespace mmalfm
