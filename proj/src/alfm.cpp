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

#include "mmalfm/alfm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mmalfm/binary_io.hpp"

namespace mmalfm {

void AlfmConfig::validate() const {
    if (factors == 0) {
        throw std::invalid_argument("ALFM: factor count must be at least 1");
    }
    if (reg_user < 0 || reg_item < 0 || reg_weight < 0 || reg_bias < 0) {
        throw std::invalid_argument("ALFM: regularizers must be non-negative");
    }
    if (!(smoothing > 0)) {
        throw std::invalid_argument("ALFM: L1 smoothing must be positive");
    }
    if (!(learning_rate > 0)) {
        throw std::invalid_argument("ALFM: learning rate must be positive");
    }
}

AspectContext AspectContext::uniform_unit(std::size_t observations, std::size_t aspects) {
    AspectContext ctx;
    ctx.aspects = aspects;
    ctx.importance.assign(observations * aspects, 1.0);
    ctx.matching.assign(observations * aspects, 1.0);
    return ctx;
}

// ---------------------------------------------------------------------------
// Aspect importance and matching

namespace {

void require_distribution(std::span<const double> p, const char* name) {
    double total = 0.0;
    for (const double v : p) {
        if (!(v >= -1e-12) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("matching_score: ") + name +
                                        " has a negative or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw std::invalid_argument(std::string("matching_score: ") + name + " does not sum to 1");
    }
}

}  // namespace

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
    double divergence = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double m = 0.5 * (p[k] + q[k]);
        if (p[k] > 0.0) {
            divergence += 0.5 * p[k] * std::log2(p[k] / m);
        }
        if (q[k] > 0.0) {
            divergence += 0.5 * q[k] * std::log2(q[k] / m);
        }
    }
    return std::clamp(divergence, 0.0, 1.0);
}

double matching_score(std::span<const double> user_topics, std::span<const double> item_topics) {
    if (user_topics.size() != item_topics.size() || user_topics.empty()) {
        throw std::invalid_argument("matching_score: distributions differ in length");
    }
    require_distribution(user_topics, "user distribution");
    require_distribution(item_topics, "item distribution");
    return 1.0 - jensen_shannon(user_topics, item_topics);
}

void pair_context(const MatmParams& params, std::size_t user, std::size_t item, std::span<double> rho,
                  std::span<double> s) {
    const auto A = params.aspects;
    if (rho.size() != A || s.size() != A) {
        throw std::invalid_argument("pair_context: output spans must hold one value per aspect");
    }
    const bool known = user < params.num_users && item < params.num_items &&
                       params.user_observed[user] != 0 && params.item_observed[item] != 0;
    if (!known) {
        std::fill(rho.begin(), rho.end(), 1.0 / static_cast<double>(A));
        std::fill(s.begin(), s.end(), 1.0);
        return;
    }
    const double pi = params.pi[user];
    const auto lu = params.lambda_user_row(user);
    const auto li = params.lambda_item_row(item);
    for (std::size_t a = 0; a < A; ++a) {
        rho[a] = importance(pi, lu[a], li[a]);
        s[a] = 1.0 - jensen_shannon(params.theta_row(user, a), params.psi_row(item, a));
    }
}

AspectContext build_context(const MatmParams& params, std::span<const Observation> observations) {
    AspectContext ctx;
    ctx.aspects = params.aspects;
    ctx.importance.resize(observations.size() * params.aspects);
    ctx.matching.resize(observations.size() * params.aspects);
    for (std::size_t n = 0; n < observations.size(); ++n) {
        pair_context(params, observations[n].user, observations[n].item,
                     {ctx.importance.data() + n * params.aspects, params.aspects},
                     {ctx.matching.data() + n * params.aspects, params.aspects});
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

/// g_f = sum_a rho_a s_a w_af^2: the effective weight of factor f for this pair.
void factor_gates(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
                  std::vector<double>& gates) {
    gates.assign(model.factors, 0.0);
    for (std::size_t a = 0; a < model.aspects; ++a) {
        const double scale = rho[a] * s[a];
        const auto w = model.w(a);
        for (std::size_t f = 0; f < model.factors; ++f) {
            gates[f] += scale * w[f] * w[f];
        }
    }
}

double gated_dot(const AlfmModel& model, const std::vector<double>& gates, std::size_t user,
                 std::size_t item) {
    const auto p = model.p(user);
    const auto q = model.q(item);
    double value = 0.0;
    for (std::size_t f = 0; f < model.factors; ++f) {
        value += gates[f] * p[f] * q[f];
    }
    return value;
}

}  // namespace

double interaction(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
                   std::size_t user, std::size_t item) {
    static thread_local std::vector<double> gates;
    factor_gates(model, rho, s, gates);
    return gated_dot(model, gates, user, item);
}

double predict_raw(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
                   std::size_t user, std::size_t item) {
    const bool known_user = user < model.num_users;
    const bool known_item = item < model.num_items;
    double value = model.global_bias;
    if (known_user) {
        value += model.user_bias[user];
    }
    if (known_item) {
        value += model.item_bias[item];
    }
    if (known_user && known_item) {
        value += interaction(model, rho, s, user, item);
    }
    return value;
}

double predict(const AlfmModel& model, std::span<const double> rho, std::span<const double> s,
               std::size_t user, std::size_t item) {
    return std::clamp(predict_raw(model, rho, s, user, item), 1.0, 5.0);
}

int polarity(const AlfmModel& model, std::size_t user, std::size_t item, std::size_t aspect) {
    const auto p = model.p(user);
    const auto q = model.q(item);
    const auto w = model.w(aspect);
    double value = 0.0;
    for (std::size_t f = 0; f < model.factors; ++f) {
        value += (w[f] * p[f]) * (w[f] * q[f]);
    }
    return (value > 0.0) - (value < 0.0);
}

// ---------------------------------------------------------------------------
// Training

AlfmModel init_model(std::size_t users, std::size_t items, std::size_t aspects,
                     std::span<const Observation> train, const AlfmConfig& config, Rng& rng) {
    config.validate();
    if (aspects == 0) {
        throw std::invalid_argument("ALFM: aspect count must be at least 1");
    }
    if (train.empty()) {
        throw std::invalid_argument("ALFM: empty training set");
    }
    AlfmModel model;
    model.num_users = users;
    model.num_items = items;
    model.aspects = aspects;
    model.factors = config.factors;
    model.user_factors.resize(users * config.factors);
    model.item_factors.resize(items * config.factors);
    for (auto& v : model.user_factors) {
        v = rng.uniform(-config.init_scale, config.init_scale);
    }
    for (auto& v : model.item_factors) {
        v = rng.uniform(-config.init_scale, config.init_scale);
    }
    model.aspect_weights.assign(aspects * config.factors, 1.0 / std::sqrt(static_cast<double>(aspects)));
    model.user_bias.assign(users, 0.0);
    model.item_bias.assign(items, 0.0);
    double total = 0.0;
    for (const auto& obs : train) {
        total += obs.rating;
    }
    model.global_bias = total / static_cast<double>(train.size());
    return model;
}

namespace {

struct FitSummary {
    double objective = 0.0;
    double sse = 0.0;
};

void require_context(const AlfmModel& model, std::span<const Observation> train, const AspectContext& ctx) {
    if (ctx.aspects != model.aspects || ctx.importance.size() != train.size() * model.aspects ||
        ctx.matching.size() != ctx.importance.size()) {
        throw std::invalid_argument("ALFM: aspect context does not cover the training observations");
    }
}

FitSummary evaluate_fit(const AlfmModel& model, std::span<const Observation> train, const AspectContext& ctx,
                        const AlfmConfig& config) {
    require_context(model, train, ctx);
    FitSummary fit;
    std::vector<std::uint8_t> user_seen(model.num_users, 0);
    std::vector<std::uint8_t> item_seen(model.num_items, 0);
    for (std::size_t n = 0; n < train.size(); ++n) {
        const auto& obs = train[n];
        const double e = predict_raw(model, ctx.importance_row(n), ctx.matching_row(n), obs.user, obs.item) -
                         obs.rating;
        fit.sse += e * e;
        user_seen[obs.user] = 1;
        item_seen[obs.item] = 1;
    }
    double reg = 0.0;
    const auto F = model.factors;
    for (std::size_t u = 0; u < model.num_users; ++u) {
        if (user_seen[u] == 0) {
            continue;
        }
        double norm = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            norm += model.user_factors[u * F + f] * model.user_factors[u * F + f];
        }
        reg += 0.5 * config.reg_user * norm + 0.5 * config.reg_bias * model.user_bias[u] * model.user_bias[u];
    }
    for (std::size_t i = 0; i < model.num_items; ++i) {
        if (item_seen[i] == 0) {
            continue;
        }
        double norm = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            norm += model.item_factors[i * F + f] * model.item_factors[i * F + f];
        }
        reg += 0.5 * config.reg_item * norm + 0.5 * config.reg_bias * model.item_bias[i] * model.item_bias[i];
    }
    double l1 = 0.0;
    for (const double w : model.aspect_weights) {
        l1 += std::sqrt(w * w + config.smoothing);
    }
    fit.objective = 0.5 * fit.sse + reg + config.reg_weight * l1;
    return fit;
}

}  // namespace

double objective(const AlfmModel& model, std::span<const Observation> train, const AspectContext& ctx,
                 const AlfmConfig& config) {
    return evaluate_fit(model, train, ctx, config).objective;
}

AlfmGradient objective_gradient(const AlfmModel& model, std::span<const Observation> train,
                                const AspectContext& ctx, const AlfmConfig& config) {
    require_context(model, train, ctx);
    const auto F = model.factors;
    AlfmGradient g;
    g.user_factors.assign(model.user_factors.size(), 0.0);
    g.item_factors.assign(model.item_factors.size(), 0.0);
    g.aspect_weights.assign(model.aspect_weights.size(), 0.0);
    g.user_bias.assign(model.num_users, 0.0);
    g.item_bias.assign(model.num_items, 0.0);
    std::vector<std::uint8_t> user_seen(model.num_users, 0);
    std::vector<std::uint8_t> item_seen(model.num_items, 0);
    std::vector<double> gates;
    for (std::size_t n = 0; n < train.size(); ++n) {
        const auto& obs = train[n];
        const auto rho = ctx.importance_row(n);
        const auto s = ctx.matching_row(n);
        factor_gates(model, rho, s, gates);
        const double e = gated_dot(model, gates, obs.user, obs.item) + model.user_bias[obs.user] +
                         model.item_bias[obs.item] + model.global_bias - obs.rating;
        const auto p = model.p(obs.user);
        const auto q = model.q(obs.item);
        for (std::size_t f = 0; f < F; ++f) {
            g.user_factors[obs.user * F + f] += e * gates[f] * q[f];
            g.item_factors[obs.item * F + f] += e * gates[f] * p[f];
        }
        for (std::size_t a = 0; a < model.aspects; ++a) {
            const auto w = model.w(a);
            for (std::size_t f = 0; f < F; ++f) {
                g.aspect_weights[a * F + f] += e * rho[a] * s[a] * 2.0 * w[f] * p[f] * q[f];
            }
        }
        g.user_bias[obs.user] += e;
        g.item_bias[obs.item] += e;
        user_seen[obs.user] = 1;
        item_seen[obs.item] = 1;
    }
    for (std::size_t u = 0; u < model.num_users; ++u) {
        if (user_seen[u] == 0) {
            continue;
        }
        for (std::size_t f = 0; f < F; ++f) {
            g.user_factors[u * F + f] += config.reg_user * model.user_factors[u * F + f];
        }
        g.user_bias[u] += config.reg_bias * model.user_bias[u];
    }
    for (std::size_t i = 0; i < model.num_items; ++i) {
        if (item_seen[i] == 0) {
            continue;
        }
        for (std::size_t f = 0; f < F; ++f) {
            g.item_factors[i * F + f] += config.reg_item * model.item_factors[i * F + f];
        }
        g.item_bias[i] += config.reg_bias * model.item_bias[i];
    }
    for (std::size_t k = 0; k < model.aspect_weights.size(); ++k) {
        const double w = model.aspect_weights[k];
        g.aspect_weights[k] += config.reg_weight * w / std::sqrt(w * w + config.smoothing);
    }
    return g;
}

RegularizerShares regularizer_shares(std::size_t users, std::size_t items,
                                     std::span<const Observation> train, const AlfmConfig& config) {
    std::vector<std::size_t> user_count(users, 0);
    std::vector<std::size_t> item_count(items, 0);
    for (const auto& obs : train) {
        ++user_count[obs.user];
        ++item_count[obs.item];
    }
    RegularizerShares shares;
    shares.user.assign(users, 0.0);
    shares.item.assign(items, 0.0);
    for (std::size_t u = 0; u < users; ++u) {
        if (user_count[u] > 0) {
            shares.user[u] = 1.0 / static_cast<double>(user_count[u]);
        }
    }
    for (std::size_t i = 0; i < items; ++i) {
        if (item_count[i] > 0) {
            shares.item[i] = 1.0 / static_cast<double>(item_count[i]);
        }
    }
    shares.weight = train.empty() ? 0.0 : config.reg_weight / static_cast<double>(train.size());
    return shares;
}

void sgd_step(AlfmModel& model, const Observation& obs, std::span<const double> rho,
              std::span<const double> s, const RegularizerShares& shares, const AlfmConfig& config,
              double learning_rate) {
    static thread_local std::vector<double> gates;
    factor_gates(model, rho, s, gates);
    const auto F = model.factors;
    double* p = model.user_factors.data() + obs.user * F;
    double* q = model.item_factors.data() + obs.item * F;
    double& bu = model.user_bias[obs.user];
    double& bi = model.item_bias[obs.item];

    double dot = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
        dot += gates[f] * p[f] * q[f];
    }
    const double e = dot + bu + bi + model.global_bias - obs.rating;
    const double user_share = shares.user[obs.user];
    const double item_share = shares.item[obs.item];

    if (config.train_weights) {
        for (std::size_t a = 0; a < model.aspects; ++a) {
            const double scale = e * rho[a] * s[a] * 2.0;
            double* w = model.aspect_weights.data() + a * F;
            for (std::size_t f = 0; f < F; ++f) {
                const double grad = scale * w[f] * p[f] * q[f] +
                                    shares.weight * w[f] / std::sqrt(w[f] * w[f] + config.smoothing);
                w[f] -= learning_rate * grad;
            }
        }
    }
    for (std::size_t f = 0; f < F; ++f) {
        const double pf = p[f];
        const double qf = q[f];
        p[f] -= learning_rate * (e * gates[f] * qf + user_share * config.reg_user * pf);
        q[f] -= learning_rate * (e * gates[f] * pf + item_share * config.reg_item * qf);
    }
    const double bu_old = bu;
    const double bi_old = bi;
    bu -= learning_rate * (e + user_share * config.reg_bias * bu_old);
    bi -= learning_rate * (e + item_share * config.reg_bias * bi_old);
}

AlfmTrainResult train_alfm(std::size_t users, std::size_t items, std::span<const Observation> train,
                           const AspectContext& ctx, const AlfmConfig& config) {
    Rng rng(config.seed);
    AlfmTrainResult result;
    result.model = init_model(users, items, ctx.aspects, train, config, rng);
    require_context(result.model, train, ctx);
    for (const auto& obs : train) {
        if (obs.user >= users || obs.item >= items) {
            throw std::invalid_argument("ALFM: training observation outside the user/item range");
        }
    }
    const auto shares = regularizer_shares(users, items, train, config);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto& model = result.model;
    double accepted = objective(model, train, ctx, config);
    result.accepted_objectives.push_back(accepted);
    double rate = config.learning_rate;

    for (std::size_t epoch = 1; epoch <= config.max_iters; ++epoch) {
        if (rate < config.min_learning_rate) {
            result.diagnostic = "learning rate fell below " + std::to_string(config.min_learning_rate) +
                                " after " + std::to_string(epoch - 1) + " epochs; returning best model";
            break;
        }
        const AlfmModel snapshot = model;
        rng.shuffle(order);
        for (const auto n : order) {
            sgd_step(model, train[n], ctx.importance_row(n), ctx.matching_row(n), shares, config, rate);
        }
        const auto fit = evaluate_fit(model, train, ctx, config);
        EpochRecord record;
        record.epoch = epoch;
        record.learning_rate = rate;
        record.objective = fit.objective;
        record.train_rmse = std::sqrt(fit.sse / static_cast<double>(train.size()));
        if (std::isfinite(fit.objective) && fit.objective < accepted) {
            record.accepted = true;
            accepted = fit.objective;
            result.accepted_objectives.push_back(accepted);
            rate *= 1.05;
        } else {
            model = snapshot;
            rate *= 0.5;
        }
        result.history.push_back(record);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

void save_alfm_model(const AlfmModel& m, std::ostream& out) {
    BinaryWriter w(out, FileKind::AlfmModel);
    for (const auto n : {m.num_users, m.num_items, m.aspects, m.factors}) {
        w.write<std::uint64_t>(n);
    }
    w.write(m.user_factors);
    w.write(m.item_factors);
    w.write(m.aspect_weights);
    w.write(m.user_bias);
    w.write(m.item_bias);
    w.write(m.global_bias);
}

AlfmModel load_alfm_model(std::istream& in) {
    BinaryReader r(in, FileKind::AlfmModel);
    AlfmModel m;
    m.num_users = r.read<std::uint64_t>();
    m.num_items = r.read<std::uint64_t>();
    m.aspects = r.read<std::uint64_t>();
    m.factors = r.read<std::uint64_t>();
    m.user_factors = r.read_vector<double>();
    m.item_factors = r.read_vector<double>();
    m.aspect_weights = r.read_vector<double>();
    m.user_bias = r.read_vector<double>();
    m.item_bias = r.read_vector<double>();
    m.global_bias = r.read<double>();
    if (m.user_factors.size() != m.num_users * m.factors || m.item_factors.size() != m.num_items * m.factors ||
        m.aspect_weights.size() != m.aspects * m.factors || m.user_bias.size() != m.num_users ||
        m.item_bias.size() != m.num_items) {
        throw FormatError("ALFM model file has inconsistent table shapes");
    }
    return m;
}

}  // namespace mmalfm
