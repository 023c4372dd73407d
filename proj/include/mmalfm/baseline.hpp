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

// Plain biased matrix factorization, r_hat = p_u^T q_i + b_u + b_i + b_0,
// trained with the same SGD conventions and bold-driver schedule as ALFM.
// Written independently of the ALFM code so it can serve as its reference in
// the single-aspect degenerate case.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mmalfm/alfm.hpp"
#include "mmalfm/random.hpp"

namespace mmalfm {

struct BiasedMf {
    std::size_t factors = 0;
    std::vector<std::vector<double>> p;
    std::vector<std::vector<double>> q;
    std::vector<double> bu;
    std::vector<double> bi;
    double b0 = 0.0;

    double predict_raw(std::size_t user, std::size_t item) const;
};

struct BiasedMfTrainResult {
    BiasedMf model;
    std::vector<double> accepted_objectives;
    std::vector<double> epoch_objectives;
};

/// Uses factors, reg_user, reg_item, reg_bias, learning_rate, max_iters,
/// min_learning_rate, init_scale and seed from config.
BiasedMf init_biased_mf(std::size_t users, std::size_t items, std::span<const Observation> train,
                        const AlfmConfig& config, Rng& rng);
double biased_mf_objective(const BiasedMf& model, std::span<const Observation> train, const AlfmConfig& config);
/// One SGD step; regularizers weighted by 1 / (observations of the user / item).
void biased_mf_step(BiasedMf& model, const Observation& obs, double user_share, double item_share,
                    const AlfmConfig& config, double learning_rate);
BiasedMfTrainResult train_biased_mf(std::size_t users, std::size_t items, std::span<const Observation> train,
                                    const AlfmConfig& config);

}  // namespace mmalfm
