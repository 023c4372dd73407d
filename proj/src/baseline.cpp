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

#include "mmalfm/baseline.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmalfm {

double BiasedMf::predict_raw(std::size_t user, std::size_t item) const {
    double dot = 0.0;
    for (std::size_t f = 0; f < factors; ++f) {
        dot += p[user][f] * q[item][f];
    }
    return b0 + bu[user] + bi[item] + dot;
}

BiasedMf init_biased_mf(std::size_t users, std::size_t items, std::span<const Observation> train,
                        const AlfmConfig& config, Rng& rng) {
    if (train.empty()) {
        throw std::invalid_argument("biased MF: empty training set");
    }
    BiasedMf m;
    m.factors = config.factors;
    m.p.assign(users, std::vector<double>(config.factors));
    m.q.assign(items, std::vector<double>(config.factors));
    for (auto& row : m.p) {
        for (auto& v : row) {
            v = rng.uniform(-config.init_scale, config.init_scale);
        }
    }
    for (auto& row : m.q) {
        for (auto& v : row) {
            v = rng.uniform(-config.init_scale, config.init_scale);
        }
    }
    m.bu.assign(users, 0.0);
    m.bi.assign(items, 0.0);
    double sum = 0.0;
    for (const auto& obs : train) {
        sum += obs.rating;
    }
    m.b0 = sum / static_cast<double>(train.size());
    return m;
}

double biased_mf_objective(const BiasedMf& m, std::span<const Observation> train, const AlfmConfig& config) {
    std::vector<bool> has_user(m.p.size(), false);
    std::vector<bool> has_item(m.q.size(), false);
    double loss = 0.0;
    for (const auto& obs : train) {
        const double e = m.predict_raw(obs.user, obs.item) - obs.rating;
        loss += e * e;
        has_user[obs.user] = true;
        has_item[obs.item] = true;
    }
    loss *= 0.5;
    double penalty = 0.0;
    for (std::size_t u = 0; u < m.p.size(); ++u) {
        if (has_user[u]) {
            double sq = 0.0;
            for (const double v : m.p[u]) {
                sq += v * v;
            }
            penalty += 0.5 * config.reg_user * sq + 0.5 * config.reg_bias * m.bu[u] * m.bu[u];
        }
    }
    for (std::size_t i = 0; i < m.q.size(); ++i) {
        if (has_item[i]) {
            double sq = 0.0;
            for (const double v : m.q[i]) {
                sq += v * v;
            }
            penalty += 0.5 * config.reg_item * sq + 0.5 * config.reg_bias * m.bi[i] * m.bi[i];
        }
    }
    return loss + penalty;
}

void biased_mf_step(BiasedMf& m, const Observation& obs, double user_share, double item_share,
                    const AlfmConfig& config, double learning_rate) {
    auto& p = m.p[obs.user];
    auto& q = m.q[obs.item];
    double dot = 0.0;
    for (std::size_t f = 0; f < m.factors; ++f) {
        dot += p[f] * q[f];
    }
    const double err = dot + m.bu[obs.user] + m.bi[obs.item] + m.b0 - obs.rating;
    for (std::size_t f = 0; f < m.factors; ++f) {
        const double pf = p[f];
        p[f] -= learning_rate * (err * q[f] + user_share * config.reg_user * pf);
        q[f] -= learning_rate * (err * pf + item_share * config.reg_item * q[f]);
    }
    const double bu = m.bu[obs.user];
    const double bi = m.bi[obs.item];
    m.bu[obs.user] -= learning_rate * (err + user_share * config.reg_bias * bu);
    m.bi[obs.item] -= learning_rate * (err + item_share * config.reg_bias * bi);
}

BiasedMfTrainResult train_biased_mf(std::size_t users, std::size_t items, std::span<const Observation> train,
                                    const AlfmConfig& config) {
    Rng rng(config.seed);
    BiasedMfTrainResult result;
    result.model = init_biased_mf(users, items, train, config, rng);

    std::vector<double> user_share(users, 0.0);
    std::vector<double> item_share(items, 0.0);
    for (const auto& obs : train) {
        user_share[obs.user] += 1.0;
        item_share[obs.item] += 1.0;
    }
    for (auto& v : user_share) {
        v = v > 0.0 ? 1.0 / v : 0.0;
    }
    for (auto& v : item_share) {
        v = v > 0.0 ? 1.0 / v : 0.0;
    }

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = biased_mf_objective(result.model, train, config);
    result.accepted_objectives.push_back(best);
    double rate = config.learning_rate;
    for (std::size_t epoch = 0; epoch < config.max_iters && rate >= config.min_learning_rate; ++epoch) {
        const BiasedMf before = result.model;
        rng.shuffle(order);
        for (const auto n : order) {
            const auto& obs = train[n];
            biased_mf_step(result.model, obs, user_share[obs.user], item_share[obs.item], config, rate);
        }
        const double current = biased_mf_objective(result.model, train, config);
        result.epoch_objectives.push_back(current);
        if (std::isfinite(current) && current < best) {
            best = current;
            result.accepted_objectives.push_back(best);
            rate *= 1.05;
        } else {
            result.model = before;
            rate *= 0.5;
        }
    }
    return result;
}

}  // namespace mmalfm
