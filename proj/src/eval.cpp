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

#include "mmalfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "mmalfm/baseline.hpp"

namespace mmalfm {

// ---------------------------------------------------------------------------
// Metrics

double rmse(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.empty()) {
        throw std::invalid_argument("rmse: no predictions");
    }
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("rmse: truth and predictions differ in length");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double e = predicted[k] - truth[k];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

TopNMetrics topn_metrics(std::span<const RecommendationList> lists,
                         const std::vector<std::vector<std::size_t>>& truth_by_user, std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("topn_metrics: cutoff must be positive");
    }
    TopNMetrics m;
    double hr = 0.0;
    double precision = 0.0;
    double ndcg = 0.0;
    for (const auto& list : lists) {
        if (list.user >= truth_by_user.size() || truth_by_user[list.user].empty()) {
            ++m.users_excluded;
            continue;
        }
        const auto& truth_items = truth_by_user[list.user];
        const std::unordered_set<std::size_t> truth(truth_items.begin(), truth_items.end());
        std::size_t hits = 0;
        double dcg = 0.0;
        const auto shown = std::min(n, list.items.size());
        for (std::size_t rank = 1; rank <= shown; ++rank) {
            if (truth.contains(list.items[rank - 1].item)) {
                ++hits;
                dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
            }
        }
        double ideal = 0.0;
        for (std::size_t rank = 1; rank <= std::min(truth.size(), n); ++rank) {
            ideal += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
        hr += hits > 0 ? 1.0 : 0.0;
        precision += static_cast<double>(hits) / static_cast<double>(n);
        ndcg += dcg / ideal;
        ++m.users_evaluated;
    }
    if (m.users_evaluated > 0) {
        const double users = static_cast<double>(m.users_evaluated);
        m.hit_ratio = hr / users;
        m.precision = precision / users;
        m.ndcg = ndcg / users;
    }
    return m;
}

std::array<ColdStartGroup, 10> coldstart_gain(std::span<const double> truth, std::span<const double> baseline,
                                              std::span<const double> model,
                                              std::span<const std::uint32_t> test_users,
                                              std::span<const std::size_t> user_training_counts) {
    if (truth.size() != baseline.size() || truth.size() != model.size() || truth.size() != test_users.size()) {
        throw std::invalid_argument("coldstart_gain: inputs differ in length");
    }
    std::array<ColdStartGroup, 10> groups;
    std::array<std::vector<double>, 10> t;
    std::array<std::vector<double>, 10> a;
    std::array<std::vector<double>, 10> b;
    std::array<std::unordered_set<std::uint32_t>, 10> users;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const auto count = user_training_counts[test_users[k]];
        if (count < 1 || count > 10) {
            continue;
        }
        const auto g = count - 1;
        t[g].push_back(truth[k]);
        a[g].push_back(baseline[k]);
        b[g].push_back(model[k]);
        users[g].insert(test_users[k]);
    }
    for (std::size_t g = 0; g < 10; ++g) {
        auto& group = groups[g];
        group.training_count = g + 1;
        group.users = users[g].size();
        group.ratings = t[g].size();
        if (t[g].empty()) {
            continue;
        }
        group.rmse_baseline = rmse(t[g], a[g]);
        group.rmse_model = rmse(t[g], b[g]);
        group.gain = *group.rmse_baseline - *group.rmse_model;
    }
    return groups;
}

// ---------------------------------------------------------------------------
// Report

std::optional<double> EvalReport::get(const std::string& name, std::size_t cutoff, const std::string& group) const {
    const auto it = metrics.find({name, cutoff, group});
    if (it == metrics.end()) {
        return std::nullopt;
    }
    return it->second;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, value] : metrics) {
        rows.push_back({{"name", key.name}, {"cutoff", key.cutoff}, {"group", key.group}, {"value", value}});
    }
    return {{"metrics", rows}, {"metadata", metadata}};
}

void EvalReport::write_tables(std::ostream& out) const {
    out << std::fixed;
    bool any = false;
    for (const auto& [key, value] : metrics) {
        if (key.name.starts_with("rmse.") && key.group == "all") {
            if (!any) {
                out << "Rating prediction (RMSE)\n" << std::left << std::setw(24) << "model" << std::right
                    << std::setw(10) << "RMSE" << '\n';
                any = true;
            }
            out << std::left << std::setw(24) << key.name.substr(5) << std::right << std::setw(10)
                << std::setprecision(4) << value << '\n';
        }
    }
    any = false;
    for (const auto& [key, value] : metrics) {
        if (key.cutoff > 0) {
            if (!any) {
                out << "\nTop-n recommendation (x100)\n" << std::left << std::setw(24) << "metric" << std::right
                    << std::setw(8) << "@n" << std::setw(10) << "value" << '\n';
                any = true;
            }
            out << std::left << std::setw(24) << key.name << std::right << std::setw(8) << key.cutoff
                << std::setw(10) << std::setprecision(2) << 100.0 * value << '\n';
        }
    }
    std::vector<std::pair<std::size_t, double>> gains;
    for (const auto& [key, value] : metrics) {
        if (key.name == "gain.coldstart" && key.group.starts_with("train=")) {
            gains.emplace_back(std::stoul(key.group.substr(6)), value);
        }
    }
    std::sort(gains.begin(), gains.end());
    if (!gains.empty()) {
        out << "\nCold-start gain in RMSE (baseline - model)\n" << std::left << std::setw(24)
            << "training ratings" << std::right << std::setw(10) << "gain" << '\n';
    }
    for (const auto& [count, value] : gains) {
        out << std::left << std::setw(24) << count << std::right << std::setw(10) << std::setprecision(4)
            << value << '\n';
    }
}

nlohmann::json ProtocolConfig::to_json() const {
    return {
        {"seed", seed},
        {"rating_split", {rating_split.train, rating_split.validation, rating_split.test}},
        {"topn_split", {topn_split.train, topn_split.validation, topn_split.test}},
        {"cutoff", cutoff},
        {"candidate_policy", "all items not in the user's training set"},
        {"relevance", "every held-out item is relevant"},
        {"protocols", {{"rating", rating}, {"baseline", baseline}, {"text_only", text_only}, {"topn", topn},
                       {"coldstart", coldstart}}},
        {"matm",
         {{"topics", matm.topics}, {"aspects", matm.aspects}, {"alpha_user", matm.alpha_user},
          {"alpha_item", matm.alpha_item}, {"gamma_user", matm.gamma_user}, {"gamma_item", matm.gamma_item},
          {"beta_text", matm.beta_text}, {"beta_visual", matm.beta_visual}, {"eta0", matm.eta0},
          {"eta1", matm.eta1}, {"iters", matm.iters}, {"burn_in", matm.burn_in},
          {"sample_lag", matm.sample_lag}, {"seed", matm.seed}, {"use_images", matm.use_images}}},
        {"alfm",
         {{"factors", alfm.factors}, {"reg_user", alfm.reg_user}, {"reg_item", alfm.reg_item},
          {"reg_weight", alfm.reg_weight}, {"reg_bias", alfm.reg_bias}, {"learning_rate", alfm.learning_rate},
          {"smoothing", alfm.smoothing}, {"max_iters", alfm.max_iters}, {"seed", alfm.seed}}},
    };
}

// ---------------------------------------------------------------------------
// Pipeline

std::vector<Observation> observations(const Corpus& corpus, std::span<const std::size_t> indices) {
    std::vector<Observation> out;
    out.reserve(indices.size());
    for (const auto r : indices) {
        const auto& rating = corpus.ratings.at(r);
        out.push_back({rating.user, rating.item, rating.value});
    }
    return out;
}

PipelineModels fit_pipeline(const Corpus& corpus, std::span<const std::size_t> train, const MatmConfig& matm,
                            const AlfmConfig& alfm) {
    PipelineModels models;
    models.params = run_matm(corpus, train, matm);
    const auto obs = observations(corpus, train);
    const auto ctx = build_context(models.params, obs);
    models.alfm = train_alfm(corpus.num_users(), corpus.num_items(), obs, ctx, alfm);
    return models;
}

namespace {

template <typename F>
auto staged(const char* stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("[") + stage + "] " + e.what());
    }
}

std::vector<double> truths(std::span<const Observation> obs) {
    std::vector<double> out;
    out.reserve(obs.size());
    for (const auto& o : obs) {
        out.push_back(o.rating);
    }
    return out;
}

std::vector<double> predictions(std::span<const Observation> obs,
                                const std::function<double(std::size_t, std::size_t)>& score) {
    std::vector<double> out;
    out.reserve(obs.size());
    for (const auto& o : obs) {
        out.push_back(std::clamp(score(o.user, o.item), 1.0, 5.0));
    }
    return out;
}

std::vector<RecommendationList> rank_all(const Corpus& corpus, std::span<const Observation> train,
                                         const std::vector<std::vector<std::size_t>>& truth, std::size_t n,
                                         const std::function<double(std::size_t, std::size_t)>& score) {
    std::vector<std::vector<std::uint8_t>> rated(corpus.num_users());
    for (const auto& o : train) {
        if (rated[o.user].empty()) {
            rated[o.user].assign(corpus.num_items(), 0);
        }
        rated[o.user][o.item] = 1;
    }
    std::vector<RecommendationList> lists;
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        if (truth[u].empty()) {
            continue;
        }
        RecommendationList list;
        list.user = u;
        for (std::size_t i = 0; i < corpus.num_items(); ++i) {
            if (rated[u].empty() || rated[u][i] == 0) {
                list.items.push_back({i, score(u, i)});
            }
        }
        const auto keep = std::min(n, list.items.size());
        std::partial_sort(list.items.begin(), list.items.begin() + static_cast<std::ptrdiff_t>(keep),
                          list.items.end(), [](const ScoredItem& a, const ScoredItem& b) {
                              return a.score != b.score ? a.score > b.score : a.item < b.item;
                          });
        list.items.resize(keep);
        lists.push_back(std::move(list));
    }
    return lists;
}

}  // namespace

EvalReport run_experiment(const Corpus& corpus, const ProtocolConfig& config) {
    EvalReport report;
    report.metadata = config.to_json();
    report.metadata["corpus"] = {{"users", corpus.num_users()},
                                 {"items", corpus.num_items()},
                                 {"ratings", corpus.ratings.size()},
                                 {"text_vocab", corpus.vocab_size()},
                                 {"visual_vocab", corpus.visual_vocab_size}};

    if (config.rating) {
        const auto split = staged("split", [&] { return split_ratings(corpus, config.rating_split, config.seed, true); });
        const auto train = observations(corpus, split.train);
        const auto test = observations(corpus, split.test);
        const auto validation = observations(corpus, split.validation);
        report.metadata["rating_split_sizes"] = {split.train.size(), split.validation.size(), split.test.size()};

        const auto models = staged("train", [&] { return fit_pipeline(corpus, split.train, config.matm, config.alfm); });
        const Predictor predictor(models.params, models.alfm.model);
        const auto score = [&](std::size_t u, std::size_t i) { return predictor.score(u, i); };
        staged("evaluate", [&] {
            if (!test.empty()) {
                report.set("rmse.mmalfm", rmse(truths(test), predictions(test, score)));
            }
            if (!validation.empty()) {
                report.set("rmse.mmalfm", rmse(truths(validation), predictions(validation, score)), 0, "validation");
            }
            return 0;
        });
        if (config.text_only) {
            auto matm = config.matm;
            matm.use_images = false;
            const auto text = staged("train-text-only", [&] { return fit_pipeline(corpus, split.train, matm, config.alfm); });
            const Predictor text_predictor(text.params, text.alfm.model);
            if (!test.empty()) {
                report.set("rmse.talfm", rmse(truths(test), predictions(test, [&](std::size_t u, std::size_t i) {
                                                  return text_predictor.score(u, i);
                                              })));
            }
        }
        if (config.baseline) {
            const auto bmf = staged("train-baseline", [&] {
                return train_biased_mf(corpus.num_users(), corpus.num_items(), train, config.alfm);
            });
            if (!test.empty()) {
                report.set("rmse.bmf", rmse(truths(test), predictions(test, [&](std::size_t u, std::size_t i) {
                                                return bmf.model.predict_raw(u, i);
                                            })));
            }
        }
    }

    if (config.topn) {
        const auto split = staged("split-topn", [&] { return split_ratings(corpus, config.topn_split, config.seed, true); });
        const auto train = observations(corpus, split.train);
        std::vector<std::vector<std::size_t>> truth(corpus.num_users());
        for (const auto r : split.test) {
            truth[corpus.ratings[r].user].push_back(corpus.ratings[r].item);
        }
        const auto models = staged("train-topn", [&] { return fit_pipeline(corpus, split.train, config.matm, config.alfm); });
        const Predictor predictor(models.params, models.alfm.model);
        const auto n = config.cutoff;
        const auto mm = topn_metrics(
            rank_all(corpus, train, truth, n, [&](std::size_t u, std::size_t i) { return predictor.score(u, i); }),
            truth, n);
        report.set("hr.mmalfm", mm.hit_ratio, n);
        report.set("precision.mmalfm", mm.precision, n);
        report.set("ndcg.mmalfm", mm.ndcg, n);
        report.metadata["topn_users_evaluated"] = mm.users_evaluated;
        if (config.baseline) {
            const auto bmf = staged("train-topn-baseline", [&] {
                return train_biased_mf(corpus.num_users(), corpus.num_items(), train, config.alfm);
            });
            const auto bm = topn_metrics(rank_all(corpus, train, truth, n, [&](std::size_t u, std::size_t i) {
                                             return bmf.model.predict_raw(u, i);
                                         }),
                                         truth, n);
            report.set("hr.bmf", bm.hit_ratio, n);
            report.set("precision.bmf", bm.precision, n);
            report.set("ndcg.bmf", bm.ndcg, n);
        }
    }

    if (config.coldstart) {
        const auto split = staged("split-coldstart", [&] { return split_global(corpus, config.rating_split, config.seed); });
        const auto train = observations(corpus, split.train);
        const auto test = observations(corpus, split.test);
        const auto models = staged("train-coldstart", [&] { return fit_pipeline(corpus, split.train, config.matm, config.alfm); });
        const auto bmf = staged("train-coldstart-baseline", [&] {
            return train_biased_mf(corpus.num_users(), corpus.num_items(), train, config.alfm);
        });
        const Predictor predictor(models.params, models.alfm.model);
        std::vector<std::uint32_t> users;
        for (const auto& o : test) {
            users.push_back(o.user);
        }
        const auto counts = training_counts(corpus, split.train);
        const auto groups = coldstart_gain(
            truths(test), predictions(test, [&](std::size_t u, std::size_t i) { return bmf.model.predict_raw(u, i); }),
            predictions(test, [&](std::size_t u, std::size_t i) { return predictor.score(u, i); }), users, counts);
        nlohmann::json populations = nlohmann::json::array();
        std::size_t total_users = 0;
        for (const auto& g : groups) {
            total_users += g.users;
        }
        for (const auto& g : groups) {
            const std::string name = "train=" + std::to_string(g.training_count);
            if (g.gain) {
                report.set("gain.coldstart", *g.gain, 0, name);
            }
            populations.push_back({{"group", name},
                                   {"users", g.users},
                                   {"ratings", g.ratings},
                                   {"share_of_users", total_users == 0 ? 0.0 : static_cast<double>(g.users) / total_users},
                                   {"empty", !g.gain.has_value()}});
        }
        report.metadata["coldstart_groups"] = populations;
        report.metadata["coldstart_dropped_test"] = split.dropped_test;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Planted synthetic data

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    Rng rng(spec.seed);
    MatmConfig priors = spec.priors;
    priors.topics = spec.topics;
    priors.aspects = spec.aspects;

    SyntheticSizes sizes;
    sizes.users = spec.users;
    sizes.items = spec.items;
    sizes.sentences_per_review = spec.sentences_per_review;
    sizes.words_per_sentence = spec.words_per_sentence;
    sizes.images_per_item = spec.images_per_item;
    sizes.text_vocab = spec.text_vocab;
    sizes.visual_vocab = spec.visual_vocab;
    sizes.reviews_of_user.resize(spec.users);
    for (auto& n : sizes.reviews_of_user) {
        const double extra = -std::log(1.0 - rng.uniform()) * spec.mean_extra_reviews;
        n = std::min(spec.max_reviews, spec.min_reviews + static_cast<std::size_t>(extra));
    }

    SyntheticData data;
    data.truth = draw_ground_truth(priors, sizes, rng);

    auto& m = data.planted;
    m.num_users = spec.users;
    m.num_items = spec.items;
    m.aspects = spec.aspects;
    m.factors = spec.factors;
    m.user_factors.resize(spec.users * spec.factors);
    m.item_factors.resize(spec.items * spec.factors);
    for (auto& v : m.user_factors) {
        v = rng.normal(spec.factor_mean, spec.factor_spread);
    }
    for (auto& v : m.item_factors) {
        v = rng.normal(spec.factor_mean, spec.factor_spread);
    }
    // Each aspect owns the factors congruent to it modulo A.
    m.aspect_weights.assign(spec.aspects * spec.factors, 0.0);
    for (std::size_t f = 0; f < spec.factors; ++f) {
        m.aspect_weights[(f % spec.aspects) * spec.factors + f] = 1.0;
    }
    m.user_bias.resize(spec.users);
    m.item_bias.resize(spec.items);
    for (auto& v : m.user_bias) {
        v = rng.normal(0.0, spec.bias_spread);
    }
    for (auto& v : m.item_bias) {
        v = rng.normal(0.0, spec.bias_spread);
    }
    m.global_bias = spec.global_bias;

    Rng noise(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> rho(spec.aspects);
    std::vector<double> s(spec.aspects);
    const auto rate = [&](std::size_t u, std::size_t i) {
        pair_context(data.truth, u, i, rho, s);
        return std::clamp(predict_raw(m, rho, s, u, i) + noise.normal(0.0, spec.noise), 1.0, 5.0);
    };
    data.corpus = generate_corpus(data.truth, sizes, rng.next(), rate);
    return data;
}

}  // namespace mmalfm
