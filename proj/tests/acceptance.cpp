// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
//   acceptance            all criteria
//   acceptance 3 5        selected criteria only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmalfm/alfm.hpp"
#include "mmalfm/baseline.hpp"
#include "mmalfm/eval.hpp"
#include "mmalfm/matm.hpp"
#include "mmalfm/random.hpp"
#include "mmalfm/visualvocab.hpp"
#include "oracles.hpp"

using namespace mmalfm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, format, args...);
    return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// The synthetic design shared by the rating criteria: 500 users, 200 items,
// A = 3, K = 5, f = 5, default sampler schedule.
SyntheticSpec synthetic_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.users = 500;
    spec.items = 200;
    spec.aspects = 3;
    spec.topics = 5;
    spec.factors = 5;
    spec.seed = seed;
    return spec;
}

ProtocolConfig protocol(std::uint64_t seed) {
    ProtocolConfig config;
    config.seed = seed;
    config.matm.aspects = 3;
    config.matm.topics = 5;
    config.matm.seed = seed;
    config.alfm.factors = 5;
    config.alfm.seed = seed;
    return config;
}

struct RatingRun {
    double mmalfm = 0.0;
    double talfm = 0.0;
    double bmf = 0.0;
    double seconds = 0.0;
};

std::vector<RatingRun>& rating_runs() {
    static std::vector<RatingRun> runs;
    if (runs.empty()) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto start = std::chrono::steady_clock::now();
            const auto data = make_synthetic(synthetic_spec(seed));
            auto config = protocol(seed);
            config.text_only = true;
            const auto report = run_experiment(data.corpus, config);
            runs.push_back({*report.get("rmse.mmalfm"), *report.get("rmse.talfm"), *report.get("rmse.bmf"),
                            seconds_since(start)});
        }
    }
    return runs;
}

Outcome beats_baseline() {
    // Seed 1, timed from corpus generation to the final metric; the text-only
    // fit is included in the time but not needed here.
    const auto& run = rating_runs().front();
    const double relative = (run.bmf - run.mmalfm) / run.bmf;
    return {relative >= 0.05 && run.seconds < 600.0,
            fmt("rmse mmalfm %.4f bmf %.4f, improvement %.1f%% (need >= 5%%), %.1f s", run.mmalfm, run.bmf,
                100.0 * relative, run.seconds)};
}

Outcome images_help() {
    const auto& runs = rating_runs();
    int superior = 0;
    bool non_inferior = true;
    std::string per_seed;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        superior += r.mmalfm < r.talfm;
        non_inferior = non_inferior && r.mmalfm <= 1.005 * r.talfm;
        per_seed += fmt(" s%zu %+.2e", k + 1, r.mmalfm - r.talfm);
    }
    return {non_inferior && superior >= 3,
            fmt("superior in %d/5 seeds, non-inferior within 0.5%%: %s; mmalfm - talfm:", superior,
                non_inferior ? "yes" : "no") +
                per_seed};
}

Outcome gibbs_exact() {
    const auto start = std::chrono::steady_clock::now();
    VisualDoc image(49, 0);
    for (std::size_t w = 0; w < image.size(); ++w) {
        image[w] = static_cast<WordId>(w % 3 == 0 ? 1 : (w % 5 == 0 ? 2 : 0));
    }
    const auto tiny = oracle::tiny_corpus({{0, 1, 0}, {2, 3}, {1, 4, 4}}, {image}, 5, 3);
    MatmConfig config;
    config.aspects = 1;
    config.topics = 2;
    config.iters = 1;
    config.burn_in = 0;
    config.seed = 3;
    MatmSampler sampler(tiny, {}, config);
    sampler.sweep();

    const std::size_t draws = 100000;
    Rng rng(17);
    double worst = 0.0;
    for (std::size_t s = 0; s < sampler.num_sentences(); ++s) {
        const auto kept = sampler.sentence_assignment(s);
        sampler.remove_sentence(s);
        const auto exact = oracle::sentence_conditional(sampler, s, 1, 1, 5, 3);
        std::vector<double> freq(exact.size(), 0.0);
        for (std::size_t d = 0; d < draws; ++d) {
            const auto z = sampler.draw_sentence(s, rng);
            freq[(z.switch_y * config.aspects + z.aspect) * config.topics + z.topic] += 1.0 / draws;
        }
        for (std::size_t c = 0; c < exact.size(); ++c) {
            worst = std::max(worst, std::abs(freq[c] - exact[c]));
        }
        sampler.add_sentence(s, kept);
    }
    for (std::size_t p = 0; p < sampler.num_images(); ++p) {
        const auto kept = sampler.image_assignment(p);
        sampler.remove_image(p);
        const auto exact = oracle::image_conditional(sampler, p, 1, 1, 5, 3);
        std::vector<double> freq(exact.size(), 0.0);
        for (std::size_t d = 0; d < draws; ++d) {
            const auto z = sampler.draw_image(p, rng);
            freq[z.aspect * config.topics + z.topic] += 1.0 / draws;
        }
        for (std::size_t c = 0; c < exact.size(); ++c) {
            worst = std::max(worst, std::abs(freq[c] - exact[c]));
        }
        sampler.add_image(p, kept);
    }
    const double elapsed = seconds_since(start);
    return {worst <= 0.01 && elapsed < 30.0 && sampler.counts_consistent(),
            fmt("%zu sentences + %zu image, max |empirical - exact| %.4f over 100k draws, %.2f s",
                sampler.num_sentences(), sampler.num_images(), worst, elapsed)};
}

Outcome gradients() {
    Rng rng(2024);
    double worst = 0.0;
    std::size_t checked = 0;
    for (int instance = 0; instance < 20; ++instance) {
        const std::size_t users = 2 + rng.below(3);
        const std::size_t items = 2 + rng.below(3);
        const std::size_t A = 1 + rng.below(3);
        AlfmConfig config;
        config.factors = 1 + rng.below(4);
        config.reg_user = rng.uniform(0.0, 0.5);
        config.reg_item = rng.uniform(0.0, 0.5);
        config.reg_weight = rng.uniform(0.0, 0.1);
        config.reg_bias = rng.uniform(0.0, 0.5);
        const auto model = oracle::random_model(users, items, A, config.factors, rng);
        auto train = oracle::all_pairs(users, items, rng);
        // Drop some pairs so not every user and item has the same count.
        std::vector<Observation> kept;
        for (const auto& o : train) {
            if (rng.uniform() < 0.8 || kept.empty()) {
                kept.push_back(o);
            }
        }
        const auto ctx = oracle::random_context(kept.size(), A, rng);
        const auto g = objective_gradient(model, kept, ctx, config);
        const double h = 1e-5;
        const auto check = [&](std::vector<double> AlfmModel::*table, const std::vector<double>& grad) {
            for (std::size_t k = 0; k < grad.size(); ++k) {
                auto plus = model;
                auto minus = model;
                (plus.*table)[k] += h;
                (minus.*table)[k] -= h;
                const double numeric =
                    (objective(plus, kept, ctx, config) - objective(minus, kept, ctx, config)) / (2 * h);
                worst = std::max(worst, oracle::rel_error(grad[k], numeric));
                ++checked;
            }
        };
        check(&AlfmModel::user_factors, g.user_factors);
        check(&AlfmModel::item_factors, g.item_factors);
        check(&AlfmModel::aspect_weights, g.aspect_weights);
        check(&AlfmModel::user_bias, g.user_bias);
        check(&AlfmModel::item_bias, g.item_bias);
    }
    return {worst < 1e-4, fmt("20 instances, %zu partials, max relative error %.2e", checked, worst)};
}

Outcome reduces_to_mf() {
    SyntheticSpec spec;
    spec.users = 80;
    spec.items = 40;
    spec.seed = 5;
    const auto data = make_synthetic(spec);
    const auto train = observations(data.corpus, split_ratings(data.corpus, {}, 5, true).train);
    const auto U = data.corpus.num_users();
    const auto I = data.corpus.num_items();
    AlfmConfig config;
    config.train_weights = false;
    config.reg_weight = 0.0;
    config.max_iters = 40;
    config.learning_rate = 0.05;
    config.seed = 5;

    double worst = 0.0;
    const auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    const auto compare = [&](const AlfmModel& a, const BiasedMf& b) {
        for (std::size_t u = 0; u < U; ++u) {
            for (std::size_t f = 0; f < config.factors; ++f) {
                track(a.p(u)[f], b.p[u][f]);
            }
            track(a.user_bias[u], b.bu[u]);
        }
        for (std::size_t i = 0; i < I; ++i) {
            for (std::size_t f = 0; f < config.factors; ++f) {
                track(a.q(i)[f], b.q[i][f]);
            }
            track(a.item_bias[i], b.bi[i]);
        }
        track(a.global_bias, b.b0);
    };

    // Step by step.
    Rng ra(config.seed);
    Rng rb(config.seed);
    auto alfm = init_model(U, I, 1, train, config, ra);
    auto bmf = init_biased_mf(U, I, train, config, rb);
    const auto shares = regularizer_shares(U, I, train, config);
    const std::vector<double> unit{1.0};
    for (int epoch = 0; epoch < 3; ++epoch) {
        for (const auto& o : train) {
            sgd_step(alfm, o, unit, unit, shares, config, config.learning_rate);
            biased_mf_step(bmf, o, shares.user[o.user], shares.item[o.item], config, config.learning_rate);
            track(predict_raw(alfm, unit, unit, o.user, o.item), bmf.predict_raw(o.user, o.item));
        }
        compare(alfm, bmf);
    }

    // Whole training runs, bold driver included.
    const auto ctx = AspectContext::uniform_unit(train.size(), 1);
    const auto a = train_alfm(U, I, train, ctx, config);
    const auto b = train_biased_mf(U, I, train, config);
    bool same_length = a.accepted_objectives.size() == b.accepted_objectives.size();
    if (same_length) {
        for (std::size_t k = 0; k < a.accepted_objectives.size(); ++k) {
            track(a.accepted_objectives[k], b.accepted_objectives[k]);
        }
    }
    compare(a.model, b.model);
    return {same_length && worst <= 1e-9,
            fmt("%zu ratings, 3 stepped epochs + %zu trained epochs, max |difference| %.2e", train.size(),
                config.max_iters, worst)};
}

// Naive top-n metrics: per-user loops with set lookups.
TopNMetrics naive_topn(const std::vector<RecommendationList>& lists,
                       const std::vector<std::vector<std::size_t>>& truth, std::size_t n) {
    TopNMetrics m;
    double hr = 0.0;
    double precision = 0.0;
    double ndcg = 0.0;
    for (const auto& list : lists) {
        const std::set<std::size_t> relevant(truth[list.user].begin(), truth[list.user].end());
        if (relevant.empty()) {
            continue;
        }
        ++m.users_evaluated;
        double hits = 0.0;
        double dcg = 0.0;
        for (std::size_t r = 0; r < std::min(n, list.items.size()); ++r) {
            if (relevant.count(list.items[r].item)) {
                hits += 1.0;
                dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
            }
        }
        double idcg = 0.0;
        for (std::size_t r = 0; r < std::min(n, relevant.size()); ++r) {
            idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
        hr += hits > 0.0 ? 1.0 : 0.0;
        precision += hits / static_cast<double>(n);
        ndcg += dcg / idcg;
    }
    m.hit_ratio = hr / static_cast<double>(m.users_evaluated);
    m.precision = precision / static_cast<double>(m.users_evaluated);
    m.ndcg = ndcg / static_cast<double>(m.users_evaluated);
    return m;
}

Outcome invariants() {
    std::vector<std::string> failures;
    const auto require = [&](bool ok, const std::string& what) {
        if (!ok) {
            failures.push_back(what);
        }
    };

    SyntheticSpec spec;
    spec.users = 80;
    spec.items = 40;
    spec.seed = 8;
    const auto data = make_synthetic(spec);
    const auto& corpus = data.corpus;

    // Counts after every sweep.
    MatmConfig matm;
    matm.aspects = 3;
    matm.topics = 5;
    matm.iters = 60;
    matm.burn_in = 30;
    matm.seed = 8;
    const auto split = split_ratings(corpus, {}, 8, true);
    MatmParams params;
    try {
        params = run_matm(corpus, split.train, matm, nullptr, true);
    } catch (const std::logic_error& e) {
        require(false, std::string("counts: ") + e.what());
        params = run_matm(corpus, split.train, matm);
    }

    // Simplices.
    double simplex_error = 0.0;
    const auto rows = [&](const std::vector<double>& table, std::size_t width) {
        for (std::size_t r = 0; r * width < table.size(); ++r) {
            double total = 0.0;
            for (std::size_t k = 0; k < width; ++k) {
                total += table[r * width + k];
                require(table[r * width + k] >= 0.0, "negative probability");
            }
            simplex_error = std::max(simplex_error, std::abs(total - 1.0));
        }
    };
    rows(params.theta, params.topics);
    rows(params.psi, params.topics);
    rows(params.lambda_user, params.aspects);
    rows(params.lambda_item, params.aspects);
    rows(params.phi_text, params.text_vocab);
    rows(params.phi_visual, params.visual_vocab);
    for (const double pi : params.pi) {
        require(pi >= 0.0 && pi <= 1.0, "pi outside [0, 1]");
    }
    require(simplex_error <= 1e-9, fmt("simplex error %.2e", simplex_error));

    // Bold driver: accepted objective never rises, with and without rollbacks.
    const auto train = observations(corpus, split.train);
    const auto ctx = build_context(params, train);
    std::size_t rollbacks = 0;
    for (const double rate : {0.01, 0.3}) {
        AlfmConfig alfm;
        alfm.learning_rate = rate;
        alfm.max_iters = 60;
        const auto result = train_alfm(corpus.num_users(), corpus.num_items(), train, ctx, alfm);
        for (std::size_t k = 1; k < result.accepted_objectives.size(); ++k) {
            require(result.accepted_objectives[k] <= result.accepted_objectives[k - 1], "accepted objective rose");
        }
        for (const auto& e : result.history) {
            rollbacks += !e.accepted;
        }
    }
    require(rollbacks > 0, "no rollback exercised");

    // Splits: disjoint, covering, and sized by the rounding rule.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (const bool per_user : {true, false}) {
            const auto s = split_ratings(corpus, {}, seed, per_user);
            std::vector<int> seen(corpus.ratings.size(), 0);
            for (const auto* part : {&s.train, &s.validation, &s.test}) {
                for (const auto r : *part) {
                    ++seen[r];
                }
            }
            require(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }),
                    "split is not an exact partition");
            if (per_user) {
                std::vector<std::size_t> total(corpus.num_users()), val(corpus.num_users()), test(corpus.num_users());
                for (std::size_t r = 0; r < corpus.ratings.size(); ++r) {
                    ++total[corpus.ratings[r].user];
                }
                for (const auto r : s.validation) {
                    ++val[corpus.ratings[r].user];
                }
                for (const auto r : s.test) {
                    ++test[corpus.ratings[r].user];
                }
                for (std::size_t u = 0; u < corpus.num_users(); ++u) {
                    if (total[u] >= 5) {
                        const auto want = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(total[u])));
                        require(val[u] == want && test[u] == want, "per-user slice sizes");
                    } else if (total[u] < 3) {
                        require(val[u] == 0 && test[u] == 0, "tiny user not kept in training");
                    }
                }
            } else {
                const auto n = static_cast<double>(corpus.ratings.size());
                require(s.test.size() == static_cast<std::size_t>(std::llround(0.1 * n)), "global test size");
            }
        }
        const auto g = split_global(corpus, {}, seed);
        const auto counts = training_counts(corpus, g.train);
        for (const auto r : g.test) {
            require(counts[corpus.ratings[r].user] > 0, "cold test user kept");
        }
        require(g.train.size() + g.validation.size() + g.test.size() + g.dropped_test == corpus.ratings.size(),
                "global split loses ratings");
    }

    // Metrics against naive formulas.
    Rng rng(12);
    double metric_error = 0.0;
    std::vector<double> truth(5000);
    std::vector<double> pred(5000);
    for (std::size_t k = 0; k < truth.size(); ++k) {
        truth[k] = 1.0 + rng.below(5);
        pred[k] = rng.uniform(0.0, 6.0);
    }
    metric_error = std::max(metric_error, std::abs(rmse(truth, pred) - oracle::rmse(truth, pred)));
    std::vector<RecommendationList> lists;
    std::vector<std::vector<std::size_t>> relevant(200);
    for (std::size_t u = 0; u < 200; ++u) {
        std::vector<std::size_t> items(100);
        std::iota(items.begin(), items.end(), 0);
        rng.shuffle(items);
        RecommendationList list;
        list.user = u;
        for (std::size_t r = 0; r < 20; ++r) {
            list.items.push_back({items[r], 20.0 - static_cast<double>(r)});
        }
        lists.push_back(list);
        const auto held = rng.below(6);
        for (std::size_t h = 0; h < held; ++h) {
            relevant[u].push_back(rng.below(100));
        }
        std::sort(relevant[u].begin(), relevant[u].end());
        relevant[u].erase(std::unique(relevant[u].begin(), relevant[u].end()), relevant[u].end());
    }
    for (const std::size_t n : {1, 5, 10, 20}) {
        const auto got = topn_metrics(lists, relevant, n);
        const auto want = naive_topn(lists, relevant, n);
        metric_error = std::max({metric_error, std::abs(got.hit_ratio - want.hit_ratio),
                                 std::abs(got.precision - want.precision), std::abs(got.ndcg - want.ndcg)});
        require(got.users_evaluated == want.users_evaluated, "top-n user count");
    }
    require(metric_error <= 1e-12, fmt("metric error %.2e", metric_error));

    std::string detail = fmt("counts every sweep, simplex error %.1e, %zu rollbacks, 10 splits, metric error %.1e",
                             simplex_error, rollbacks, metric_error);
    for (const auto& f : failures) {
        detail += "; " + f;
    }
    return {failures.empty(), detail};
}

Outcome coldstart_groups() {
    std::array<double, 5> total{};
    std::array<int, 5> present{};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto data = make_synthetic(synthetic_spec(seed));
        auto config = protocol(seed);
        config.rating = false;
        config.coldstart = true;
        const auto report = run_experiment(data.corpus, config);
        for (std::size_t g = 0; g < 5; ++g) {
            if (const auto gain = report.get("gain.coldstart", 0, "train=" + std::to_string(g + 1))) {
                total[g] += *gain;
                ++present[g];
            }
        }
    }
    bool pass = true;
    std::string detail = "mean gain over seeds 1-5:";
    for (std::size_t g = 0; g < 5; ++g) {
        const double mean = present[g] > 0 ? total[g] / present[g] : 0.0;
        pass = pass && present[g] > 0 && mean > 0.0;
        detail += fmt(" g%zu %+.4f", g + 1, mean);
    }
    return {pass, detail};
}

Outcome determinism() {
    std::vector<std::string> differing;
    const auto same = [&](bool ok, const char* stage) {
        if (!ok) {
            differing.emplace_back(stage);
        }
    };
    SyntheticSpec spec;
    spec.users = 60;
    spec.items = 30;
    spec.seed = 21;
    const auto a = make_synthetic(spec);
    const auto b = make_synthetic(spec);
    same(a.corpus == b.corpus && a.truth == b.truth && a.planted == b.planted, "synthetic");

    const auto s1 = split_ratings(a.corpus, {}, 21, true);
    const auto s2 = split_ratings(a.corpus, {}, 21, true);
    const auto g1 = split_global(a.corpus, {}, 21);
    const auto g2 = split_global(a.corpus, {}, 21);
    same(s1.train == s2.train && s1.validation == s2.validation && s1.test == s2.test && g1.train == g2.train &&
             g1.test == g2.test,
         "split");

    Rng rng(21);
    std::vector<double> vectors(600 * 8);
    for (auto& v : vectors) {
        v = rng.normal();
    }
    KMeansOptions kmeans;
    kmeans.clusters = 16;
    kmeans.seed = 21;
    same(train_codebook(vectors, 8, kmeans) == train_codebook(vectors, 8, kmeans), "codebook");

    MatmConfig matm;
    matm.aspects = 3;
    matm.topics = 5;
    matm.iters = 40;
    matm.burn_in = 20;
    matm.seed = 21;
    const auto p1 = run_matm(a.corpus, s1.train, matm);
    const auto p2 = run_matm(a.corpus, s1.train, matm);
    same(p1 == p2, "matm");

    const auto train = observations(a.corpus, s1.train);
    const auto ctx = build_context(p1, train);
    AlfmConfig alfm;
    alfm.seed = 21;
    const auto m1 = train_alfm(a.corpus.num_users(), a.corpus.num_items(), train, ctx, alfm);
    const auto m2 = train_alfm(a.corpus.num_users(), a.corpus.num_items(), train, ctx, alfm);
    same(m1.model == m2.model && m1.accepted_objectives == m2.accepted_objectives, "alfm");
    const auto b1 = train_biased_mf(a.corpus.num_users(), a.corpus.num_items(), train, alfm);
    const auto b2 = train_biased_mf(a.corpus.num_users(), a.corpus.num_items(), train, alfm);
    same(b1.model.p == b2.model.p && b1.model.bu == b2.model.bu && b1.accepted_objectives == b2.accepted_objectives,
         "baseline");

    ProtocolConfig config;
    config.matm = matm;
    config.alfm = alfm;
    config.seed = 21;
    config.text_only = config.topn = config.coldstart = true;
    std::ostringstream t1;
    std::ostringstream t2;
    const auto r1 = run_experiment(a.corpus, config);
    const auto r2 = run_experiment(a.corpus, config);
    r1.write_tables(t1);
    r2.write_tables(t2);
    same(r1.to_json().dump() == r2.to_json().dump() && t1.str() == t2.str(), "evaluation");

    std::string detail = "synthetic, split, codebook, matm, alfm, baseline, evaluation";
    if (!differing.empty()) {
        detail = "differs:";
        for (const auto& d : differing) {
            detail += " " + d;
        }
    }
    return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, beats_baseline}, {2, images_help},      {3, gibbs_exact}, {4, gradients},
        {5, reduces_to_mf},  {6, invariants},       {7, coldstart_groups}, {8, determinism},
    };
    std::set<int> selected;
    for (int k = 1; k < argc; ++k) {
        selected.insert(std::stoi(argv[k]));
    }
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.count(id)) {
            continue;
        }
        Outcome outcome;
        const auto start = std::chrono::steady_clock::now();
        try {
            outcome = run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("error: ") + e.what()};
        }
        failed += !outcome.pass;
        std::cout << "criterion " << id << ": " << (outcome.pass ? "PASS" : "FAIL") << "  " << outcome.detail
                  << fmt("  [%.1f s]", seconds_since(start)) << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
