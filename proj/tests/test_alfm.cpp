#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "mmalfm/alfm.hpp"
#include "mmalfm/baseline.hpp"
#include "mmalfm/eval.hpp"
#include "mmalfm/random.hpp"
#include "oracles.hpp"

using namespace mmalfm;

namespace {

/// Scalar triple loop over aspects, factors.
double naive_predict(const AlfmModel& m, std::span<const double> rho, std::span<const double> s, std::size_t u,
                     std::size_t i) {
    double r = m.global_bias + m.user_bias[u] + m.item_bias[i];
    for (std::size_t a = 0; a < m.aspects; ++a) {
        double aspect_rating = 0.0;
        for (std::size_t f = 0; f < m.factors; ++f) {
            aspect_rating += m.aspect_weights[a * m.factors + f] * m.user_factors[u * m.factors + f] *
                             m.aspect_weights[a * m.factors + f] * m.item_factors[i * m.factors + f];
        }
        r += rho[a] * s[a] * aspect_rating;
    }
    return r;
}

}  // namespace

TEST_CASE("matching score") {
    const std::vector<double> p{0.2, 0.3, 0.5};
    CHECK(matching_score(p, p) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> b{0.0, 1.0};
    CHECK(matching_score(a, b) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    const std::vector<double> half{0.5, 0.5};
    // KL terms by hand: m = (0.75, 0.25).
    const double direct = 0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25)) +
                          0.5 * (1.0 * std::log2(1.0 / 0.75));
    CHECK(jensen_shannon(half, a) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(jensen_shannon(half, a) == doctest::Approx(oracle::jsd(half, a)).epsilon(1e-14));
    CHECK(matching_score(half, a) == doctest::Approx(1.0 - direct).epsilon(1e-14));
    Rng rng(3);
    for (int n = 0; n < 100; ++n) {
        const auto x = rng.dirichlet(6, 0.3);
        const auto y = rng.dirichlet(6, 0.3);
        const double s = matching_score(x, y);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK(std::abs(jensen_shannon(x, y) - oracle::jsd(x, y)) < 1e-12);
        CHECK(std::abs(jensen_shannon(x, y) - jensen_shannon(y, x)) < 1e-15);
    }
    CHECK_THROWS(matching_score(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("importance") {
    CHECK(importance(1.0, 0.7, 0.1) == doctest::Approx(0.7));
    CHECK(importance(0.5, 0.4, 0.2) == doctest::Approx(0.3));
    Rng rng(4);
    for (int n = 0; n < 50; ++n) {
        const auto lu = rng.dirichlet(4, 1.0);
        const auto li = rng.dirichlet(4, 1.0);
        const double pi = rng.uniform();
        double total = 0.0;
        for (std::size_t a = 0; a < 4; ++a) {
            total += importance(pi, lu[a], li[a]);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("context falls back to uniform importance and unit matching for unseen entities") {
    auto p = MatmParams::shaped(2, 2, 3, 2, 1, 0);
    std::fill(p.theta.begin(), p.theta.end(), 0.5);
    std::fill(p.psi.begin(), p.psi.end(), 0.5);
    std::fill(p.lambda_user.begin(), p.lambda_user.end(), 1.0 / 3);
    std::fill(p.lambda_item.begin(), p.lambda_item.end(), 1.0 / 3);
    std::fill(p.pi.begin(), p.pi.end(), 0.5);
    p.user_observed = {1, 0};
    p.item_observed = {1, 1};
    std::vector<double> rho(3);
    std::vector<double> s(3);
    pair_context(p, 1, 0, rho, s);
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(rho[a] == doctest::Approx(1.0 / 3));
        CHECK(s[a] == 1.0);
    }
}

TEST_CASE("prediction") {
    Rng rng(5);
    auto m = oracle::random_model(3, 4, 2, 3, rng);
    const std::vector<double> rho{0.3, 0.7};
    const std::vector<double> s{0.9, 0.4};
    SUBCASE("zero factors leave only biases") {
        std::fill(m.user_factors.begin(), m.user_factors.end(), 0.0);
        std::fill(m.item_factors.begin(), m.item_factors.end(), 0.0);
        CHECK(predict_raw(m, rho, s, 1, 2) == doctest::Approx(m.global_bias + m.user_bias[1] + m.item_bias[2]));
    }
    SUBCASE("matches the scalar loop") {
        for (std::size_t u = 0; u < 3; ++u) {
            for (std::size_t i = 0; i < 4; ++i) {
                CHECK(std::abs(predict_raw(m, rho, s, u, i) - naive_predict(m, rho, s, u, i)) < 1e-12);
                const double clamped = predict(m, rho, s, u, i);
                CHECK(clamped >= 1.0);
                CHECK(clamped <= 5.0);
            }
        }
    }
    SUBCASE("single aspect with unit weights is biased MF") {
        auto one = oracle::random_model(3, 4, 1, 3, rng);
        std::fill(one.aspect_weights.begin(), one.aspect_weights.end(), 1.0);
        const std::vector<double> unit{1.0};
        for (std::size_t u = 0; u < 3; ++u) {
            for (std::size_t i = 0; i < 4; ++i) {
                double dot = 0.0;
                for (std::size_t f = 0; f < 3; ++f) {
                    dot += one.p(u)[f] * one.q(i)[f];
                }
                CHECK(predict_raw(one, unit, unit, u, i) ==
                      doctest::Approx(dot + one.user_bias[u] + one.item_bias[i] + one.global_bias).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("polarity") {
    Rng rng(6);
    auto m = oracle::random_model(1, 2, 2, 3, rng);
    std::copy(m.user_factors.begin(), m.user_factors.end(), m.item_factors.begin());
    CHECK(polarity(m, 0, 0, 0) == 1);
    for (std::size_t f = 0; f < 3; ++f) {
        m.item_factors[3 + f] = -m.item_factors[f];
    }
    CHECK(polarity(m, 0, 1, 0) == -1);
    std::fill(m.aspect_weights.begin() + 3, m.aspect_weights.end(), 0.0);
    CHECK(polarity(m, 0, 0, 1) == 0);
}

TEST_CASE("gradient matches central differences") {
    Rng rng(7);
    AlfmConfig config;
    config.reg_user = 0.3;
    config.reg_item = 0.2;
    config.reg_weight = 0.05;
    config.reg_bias = 0.1;
    config.factors = 2;
    const auto m = oracle::random_model(3, 3, 2, 2, rng);
    const auto train = oracle::all_pairs(3, 3, rng);
    const auto ctx = oracle::random_context(train.size(), 2, rng);
    const auto g = objective_gradient(m, train, ctx, config);
    const double h = 1e-5;
    const auto check_table = [&](std::vector<double> AlfmModel::*table, const std::vector<double>& grad) {
        for (std::size_t k = 0; k < grad.size(); ++k) {
            auto plus = m;
            auto minus = m;
            (plus.*table)[k] += h;
            (minus.*table)[k] -= h;
            const double numeric = (objective(plus, train, ctx, config) - objective(minus, train, ctx, config)) / (2 * h);
            CHECK(oracle::rel_error(grad[k], numeric) < 1e-4);
        }
    };
    check_table(&AlfmModel::user_factors, g.user_factors);
    check_table(&AlfmModel::item_factors, g.item_factors);
    check_table(&AlfmModel::aspect_weights, g.aspect_weights);
    check_table(&AlfmModel::user_bias, g.user_bias);
    check_table(&AlfmModel::item_bias, g.item_bias);
}

TEST_CASE("one SGD epoch with per-rating shares sums to the full gradient at small rates") {
    // With every step taken at nearly the same point, the epoch displacement is
    // -rate * gradient of the objective.
    Rng rng(8);
    AlfmConfig config;
    config.factors = 2;
    config.reg_weight = 0.05;
    const auto m = oracle::random_model(3, 3, 2, 2, rng);
    const auto train = oracle::all_pairs(3, 3, rng);
    const auto ctx = oracle::random_context(train.size(), 2, rng);
    const auto shares = regularizer_shares(3, 3, train, config);
    const auto g = objective_gradient(m, train, ctx, config);
    const double rate = 1e-9;
    auto stepped = m;
    for (std::size_t n = 0; n < train.size(); ++n) {
        sgd_step(stepped, train[n], ctx.importance_row(n), ctx.matching_row(n), shares, config, rate);
    }
    for (std::size_t k = 0; k < m.user_factors.size(); ++k) {
        CHECK(oracle::rel_error((m.user_factors[k] - stepped.user_factors[k]) / rate, g.user_factors[k]) < 1e-4);
    }
    for (std::size_t k = 0; k < m.aspect_weights.size(); ++k) {
        CHECK(oracle::rel_error((m.aspect_weights[k] - stepped.aspect_weights[k]) / rate, g.aspect_weights[k]) < 1e-4);
    }
    for (std::size_t k = 0; k < m.item_bias.size(); ++k) {
        CHECK(oracle::rel_error((m.item_bias[k] - stepped.item_bias[k]) / rate, g.item_bias[k]) < 1e-4);
    }
}

TEST_CASE("initialization") {
    Rng rng(9);
    AlfmConfig config;
    config.factors = 4;
    const std::vector<Observation> train{{0, 0, 2.0}, {1, 1, 4.0}};
    const auto m = init_model(2, 3, 3, train, config, rng);
    CHECK(m.global_bias == doctest::Approx(3.0));
    for (const double w : m.aspect_weights) {
        CHECK(w == doctest::Approx(1.0 / std::sqrt(3.0)));
    }
    for (const double v : m.user_factors) {
        CHECK(std::abs(v) <= config.init_scale);
    }
    CHECK(std::all_of(m.user_bias.begin(), m.user_bias.end(), [](double b) { return b == 0.0; }));
}

TEST_CASE("bold driver: accepted objective is monotone and training is deterministic") {
    SyntheticSpec spec;
    spec.users = 60;
    spec.items = 40;
    spec.seed = 2;
    const auto data = make_synthetic(spec);
    const auto train = observations(data.corpus, split_ratings(data.corpus, {}, 2, true).train);
    const auto ctx = build_context(data.truth, train);
    AlfmConfig config;
    config.learning_rate = 0.2;  // large enough to force rollbacks
    config.max_iters = 40;
    const auto a = train_alfm(spec.users, spec.items, train, ctx, config);
    for (std::size_t k = 1; k < a.accepted_objectives.size(); ++k) {
        CHECK(a.accepted_objectives[k] < a.accepted_objectives[k - 1]);
    }
    CHECK(std::any_of(a.history.begin(), a.history.end(), [](const EpochRecord& r) { return !r.accepted; }));
    CHECK(objective(a.model, train, ctx, config) == a.accepted_objectives.back());
    const auto b = train_alfm(spec.users, spec.items, train, ctx, config);
    CHECK(a.model == b.model);
}

TEST_CASE("tiny learning rates stop with a diagnostic") {
    const std::vector<Observation> train{{0, 0, 5.0}, {0, 1, 1.0}};
    const auto ctx = AspectContext::uniform_unit(2, 1);
    AlfmConfig config;
    config.learning_rate = 1e-9;
    config.min_learning_rate = 1e-8;
    const auto r = train_alfm(1, 2, train, ctx, config);
    CHECK(r.history.empty());
    CHECK_FALSE(r.diagnostic.empty());
}

TEST_CASE("a strong l1 penalty shrinks the aspect weights") {
    Rng rng(10);
    const auto train = oracle::all_pairs(8, 8, rng);
    const auto ctx = oracle::random_context(train.size(), 3, rng);
    AlfmConfig config;
    config.factors = 3;
    config.max_iters = 200;
    config.learning_rate = 0.05;
    const auto mean_abs = [&](double mu) {
        config.reg_weight = mu;
        const auto r = train_alfm(8, 8, train, ctx, config);
        double total = 0.0;
        for (const double w : r.model.aspect_weights) {
            total += std::abs(w);
        }
        return total / static_cast<double>(r.model.aspect_weights.size());
    };
    CHECK(mean_abs(10.0) < mean_abs(0.0));
}

TEST_CASE("planted model is recovered from noiseless ratings") {
    SyntheticSpec spec;
    spec.users = 400;
    spec.items = 40;
    spec.noise = 0.0;
    spec.min_reviews = 30;
    spec.mean_extra_reviews = 0.0;
    // Mild planted scale keeps almost every rating inside [1, 5].
    spec.factor_mean = 0.5;
    spec.factor_spread = 0.4;
    spec.bias_spread = 0.1;
    spec.seed = 11;
    const auto data = make_synthetic(spec);
    const auto split = split_ratings(data.corpus, {}, 11, true);
    const auto train = observations(data.corpus, split.train);
    const auto test = observations(data.corpus, split.test);
    AlfmConfig config;
    config.factors = spec.factors;
    config.reg_user = config.reg_item = config.reg_bias = 1e-3;
    config.reg_weight = 1e-4;
    config.init_scale = 0.3;
    config.max_iters = 3000;
    config.learning_rate = 0.05;
    const auto r = train_alfm(spec.users, spec.items, train, build_context(data.truth, train), config);
    std::vector<double> truth;
    std::vector<double> pred;
    std::vector<double> rho(spec.aspects);
    std::vector<double> s(spec.aspects);
    for (const auto& o : test) {
        pair_context(data.truth, o.user, o.item, rho, s);
        truth.push_back(o.rating);
        pred.push_back(predict(r.model, rho, s, o.user, o.item));
    }
    CHECK(rmse(truth, pred) < 0.05);
}

TEST_CASE("model round trip") {
    Rng rng(12);
    const auto m = oracle::random_model(2, 3, 2, 2, rng);
    std::stringstream buf;
    save_alfm_model(m, buf);
    CHECK(load_alfm_model(buf) == m);
}

TEST_CASE("context shape is checked") {
    const std::vector<Observation> train{{0, 0, 3.0}};
    AlfmConfig config;
    CHECK_THROWS(train_alfm(1, 1, train, AspectContext::uniform_unit(2, 1), config));
    CHECK_THROWS(train_alfm(1, 1, std::vector<Observation>{{3, 0, 3.0}}, AspectContext::uniform_unit(1, 1), config));
}
