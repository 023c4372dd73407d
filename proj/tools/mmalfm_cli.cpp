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

// mmalfm: command-line front end.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmalfm/alfm.hpp"
#include "mmalfm/baseline.hpp"
#include "mmalfm/corpus.hpp"
#include "mmalfm/eval.hpp"
#include "mmalfm/matm.hpp"
#include "mmalfm/recommender.hpp"
#include "mmalfm/visualvocab.hpp"

namespace {

using namespace mmalfm;
using nlohmann::json;

constexpr const char* kVersion = "mmalfm 1.0.0";

/// Error raised by a pipeline stage; printed as "[stage] message".
struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message) {}
};

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    return out;
}

template <typename Save, typename T>
void save_to(const std::string& path, const T& value, Save save) {
    auto out = open_out(path);
    save(value, out);
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

template <typename Load>
auto load_from(const std::string& path, Load load) {
    auto in = open_in(path);
    return load(in);
}

// ---------------------------------------------------------------------------
// Options shared by several subcommands

struct Options {
    std::uint64_t seed = 0;

    std::string corpus_path;
    std::string matm_path;
    std::string alfm_path;
    std::string output;
    std::string manifest_path;

    // ingest
    std::string reviews_path;
    std::string features_path;
    std::string codebook_path;
    std::string stop_words_path;
    std::size_t min_count = 10;
    bool normalize = false;

    // codebook
    std::size_t clusters = 4096;
    std::size_t kmeans_iters = 100;
    std::size_t feature_dim = kBlockFeatureDim;

    MatmConfig matm;
    AlfmConfig alfm;
    bool no_images = false;
    bool use_split = false;
    std::string topic_summary;

    // serving
    std::string user;
    std::string item;
    std::size_t top_n = 10;
    std::size_t terms = 10;
    bool as_json = false;

    // evaluate
    std::vector<std::string> protocols{"rating"};
    std::size_t cutoff = 10;
    std::string tables;

    // generate
    SyntheticSpec synthetic;
    std::string truth_path;
    std::string planted_path;
};

void add_matm_flags(CLI::App& cmd, Options& o) {
    cmd.add_option("--topics", o.matm.topics, "Latent topics K")->capture_default_str();
    cmd.add_option("--aspects", o.matm.aspects, "Aspects A")->capture_default_str();
    cmd.add_option("--iters", o.matm.iters, "Gibbs sweeps")->capture_default_str();
    cmd.add_option("--burn-in", o.matm.burn_in, "Sweeps discarded before averaging")->capture_default_str();
    cmd.add_option("--lag", o.matm.sample_lag, "Sweeps between averaged samples")->capture_default_str();
    cmd.add_option("--alpha", o.matm.alpha_user, "Topic prior (users and items)")->capture_default_str();
    cmd.add_option("--gamma", o.matm.gamma_user, "Aspect prior (users and items)")->capture_default_str();
    cmd.add_option("--beta", o.matm.beta_text, "Word prior (text and visual)")->capture_default_str();
    cmd.add_option("--eta", o.matm.eta0, "Switch prior")->capture_default_str();
    cmd.add_flag("--no-images", o.no_images, "Ignore item images (text-only topic model)");
}

void add_alfm_flags(CLI::App& cmd, Options& o) {
    cmd.add_option("--factors", o.alfm.factors, "Latent factors f")->capture_default_str();
    cmd.add_option("--mu-user", o.alfm.reg_user, "User factor regularizer")->capture_default_str();
    cmd.add_option("--mu-item", o.alfm.reg_item, "Item factor regularizer")->capture_default_str();
    cmd.add_option("--mu-weight", o.alfm.reg_weight, "Aspect weight l1 regularizer")->capture_default_str();
    cmd.add_option("--mu-bias", o.alfm.reg_bias, "Bias regularizer")->capture_default_str();
    cmd.add_option("--lr", o.alfm.learning_rate, "Initial learning rate")->capture_default_str();
    cmd.add_option("--epsilon", o.alfm.smoothing, "l1 smoothing constant")->capture_default_str();
    cmd.add_option("--max-epochs", o.alfm.max_iters, "SGD epochs")->capture_default_str();
}

void sync_priors(Options& o) {
    o.matm.alpha_item = o.matm.alpha_user;
    o.matm.gamma_item = o.matm.gamma_user;
    o.matm.beta_visual = o.matm.beta_text;
    o.matm.eta1 = o.matm.eta0;
    o.matm.use_images = !o.no_images;
    o.matm.seed = o.seed;
    o.alfm.seed = o.seed;
}

json matm_json(const MatmConfig& c) {
    return {{"topics", c.topics}, {"aspects", c.aspects}, {"alpha", c.alpha_user}, {"gamma", c.gamma_user},
            {"beta", c.beta_text}, {"eta", c.eta0}, {"iters", c.iters}, {"burn_in", c.burn_in},
            {"lag", c.sample_lag}, {"use_images", c.use_images}};
}

json alfm_json(const AlfmConfig& c) {
    return {{"factors", c.factors}, {"mu_user", c.reg_user}, {"mu_item", c.reg_item},
            {"mu_weight", c.reg_weight}, {"mu_bias", c.reg_bias}, {"learning_rate", c.learning_rate},
            {"epsilon", c.smoothing}, {"max_epochs", c.max_iters}};
}

/// RunManifest: written before any long-running work so the run can be repeated.
void write_manifest(const Options& o, const std::string& command, const std::vector<std::string>& argv,
                    const json& inputs, const json& outputs, const json& config) {
    std::string path = o.manifest_path;
    if (path.empty()) {
        if (o.output.empty()) {
            return;
        }
        path = o.output + ".manifest.json";
    }
    const json manifest = {{"version", kVersion}, {"command", command}, {"argv", argv},
                           {"seed", o.seed},      {"inputs", inputs},   {"outputs", outputs},
                           {"config", config}};
    auto out = open_out(path);
    out << manifest.dump(2) << '\n';
}

std::size_t user_index(const Corpus& corpus, const std::string& id) {
    for (std::size_t u = 0; u < corpus.user_ids.size(); ++u) {
        if (corpus.user_ids[u] == id) {
            return u;
        }
    }
    throw std::out_of_range("unknown user id '" + id + "'");
}

std::size_t item_index(const Corpus& corpus, const std::string& id) {
    for (std::size_t i = 0; i < corpus.item_ids.size(); ++i) {
        if (corpus.item_ids[i] == id) {
            return i;
        }
    }
    throw std::out_of_range("unknown item id '" + id + "'");
}

std::vector<std::size_t> training_indices(const Corpus& corpus, const Options& o) {
    if (o.use_split) {
        return split_ratings(corpus, {}, o.seed, true).train;
    }
    std::vector<std::size_t> all(corpus.ratings.size());
    for (std::size_t r = 0; r < all.size(); ++r) {
        all[r] = r;
    }
    return all;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_ingest(const Options& o, const std::vector<std::string>& argv) {
    write_manifest(o, "ingest", argv,
                   {{"reviews", o.reviews_path}, {"features", o.features_path}, {"codebook", o.codebook_path},
                    {"stop_words", o.stop_words_path}},
                   {{"corpus", o.output}}, {{"min_count", o.min_count}, {"normalize", o.normalize}});
    IngestStats stats;
    const auto records = stage("read-reviews", [&] {
        auto in = open_in(o.reviews_path);
        return read_review_records(in, &stats);
    });
    IngestOptions options;
    options.min_count = o.min_count;
    if (!o.stop_words_path.empty()) {
        options.stop_words = stage("read-stop-words", [&] {
            auto in = open_in(o.stop_words_path);
            return read_stop_words(in);
        });
    }
    std::vector<ItemImages> images;
    if (!o.features_path.empty()) {
        if (o.codebook_path.empty()) {
            throw StageError("quantize", "--features requires --codebook");
        }
        const auto codebook = stage("load-codebook", [&] { return load_from(o.codebook_path, load_codebook); });
        images = stage("quantize", [&] {
            auto in = open_in(o.features_path);
            const auto features = read_block_features_csv(in, codebook.dim());
            return quantize_images(features, codebook, o.normalize);
        });
        options.visual_vocab_size = codebook.size();
    }
    const auto corpus = stage("ingest", [&] { return ingest(records, images, options, &stats); });
    stage("write", [&] {
        save_corpus(corpus, o.output);
        return 0;
    });
    std::cout << "users " << corpus.num_users() << "  items " << corpus.num_items() << "  ratings "
              << corpus.ratings.size() << "  vocabulary " << corpus.vocab_size() << "  skipped "
              << stats.records_skipped << "  clamped " << stats.ratings_clamped << "  duplicates "
              << stats.duplicate_pairs << '\n';
}

void cmd_codebook(const Options& o, const std::vector<std::string>& argv) {
    write_manifest(o, "codebook", argv, {{"features", o.features_path}}, {{"codebook", o.output}},
                   {{"clusters", o.clusters}, {"max_iters", o.kmeans_iters}, {"dim", o.feature_dim},
                    {"normalize", o.normalize}});
    const auto features = stage("read-features", [&] {
        auto in = open_in(o.features_path);
        return read_block_features_csv(in, o.feature_dim);
    });
    KMeansOptions options;
    options.clusters = o.clusters;
    options.max_iters = o.kmeans_iters;
    options.seed = o.seed;
    options.normalize = o.normalize;
    KMeansTrace trace;
    const auto codebook = stage("kmeans", [&] { return train_codebook(features, options, &trace); });
    stage("write", [&] {
        save_to(o.output, codebook, [](const VisualCodebook& c, std::ostream& out) { save_codebook(c, out); });
        return 0;
    });
    std::cout << "clusters " << codebook.size() << "  iterations " << trace.iterations << "  objective "
              << (trace.objective.empty() ? 0.0 : trace.objective.back())
              << (trace.converged ? "  converged" : "") << '\n';
}

void cmd_train_matm(const Options& o, const std::vector<std::string>& argv) {
    write_manifest(o, "train-matm", argv, {{"corpus", o.corpus_path}}, {{"matm", o.output}},
                   {{"matm", matm_json(o.matm)}, {"split", o.use_split}});
    const auto corpus = stage("load-corpus", [&] { return load_corpus(o.corpus_path); });
    const auto train = training_indices(corpus, o);
    MatmRunStats stats;
    const auto params = stage("train-matm", [&] { return run_matm(corpus, train, o.matm, &stats); });
    stage("write", [&] {
        save_to(o.output, params, [](const MatmParams& p, std::ostream& out) { save_matm_params(p, out); });
        if (!o.topic_summary.empty()) {
            auto out = open_out(o.topic_summary);
            write_topic_summary(params, corpus.text_vocab, 10, out);
        }
        return 0;
    });
    std::cout << "sweeps " << stats.sweeps << "  samples averaged " << stats.samples_averaged << '\n';
}

void cmd_train_alfm(const Options& o, const std::vector<std::string>& argv) {
    write_manifest(o, "train-alfm", argv, {{"corpus", o.corpus_path}, {"matm", o.matm_path}},
                   {{"alfm", o.output}}, {{"alfm", alfm_json(o.alfm)}, {"split", o.use_split}});
    const auto corpus = stage("load-corpus", [&] { return load_corpus(o.corpus_path); });
    const auto params = stage("load-matm", [&] { return load_from(o.matm_path, load_matm_params); });
    if (params.num_users != corpus.num_users() || params.num_items != corpus.num_items()) {
        throw StageError("load-matm", "topic model does not match the corpus");
    }
    const auto obs = observations(corpus, training_indices(corpus, o));
    const auto ctx = build_context(params, obs);
    auto config = o.alfm;
    const auto result = stage("train-alfm", [&] {
        return train_alfm(corpus.num_users(), corpus.num_items(), obs, ctx, config);
    });
    stage("write", [&] {
        save_to(o.output, result.model, [](const AlfmModel& m, std::ostream& out) { save_alfm_model(m, out); });
        return 0;
    });
    for (const auto& epoch : result.history) {
        std::cout << "epoch " << std::setw(3) << epoch.epoch << "  rate " << std::scientific << std::setprecision(3)
                  << epoch.learning_rate << std::fixed << "  objective " << std::setprecision(4) << epoch.objective
                  << "  train RMSE " << epoch.train_rmse << (epoch.accepted ? "" : "  (rolled back)") << '\n';
    }
    if (!result.diagnostic.empty()) {
        std::cout << result.diagnostic << '\n';
    }
}

struct Served {
    Corpus corpus;
    MatmParams params;
    AlfmModel model;
};

Served load_served(const Options& o) {
    Served s;
    s.corpus = stage("load-corpus", [&] { return load_corpus(o.corpus_path); });
    s.params = stage("load-matm", [&] { return load_from(o.matm_path, load_matm_params); });
    s.model = stage("load-alfm", [&] { return load_from(o.alfm_path, load_alfm_model); });
    if (s.params.aspects != s.model.aspects || s.model.num_users != s.corpus.num_users() ||
        s.model.num_items != s.corpus.num_items()) {
        throw StageError("load-alfm", "model files do not match each other or the corpus");
    }
    return s;
}

void cmd_predict(const Options& o) {
    const auto s = load_served(o);
    const auto u = stage("lookup", [&] { return user_index(s.corpus, o.user); });
    const auto i = stage("lookup", [&] { return item_index(s.corpus, o.item); });
    const Predictor predictor(s.params, s.model);
    const double rating = predictor.predict(u, i);
    if (o.as_json) {
        std::cout << json{{"user", o.user}, {"item", o.item}, {"rating", rating}}.dump(2) << '\n';
    } else {
        std::cout << std::fixed << std::setprecision(4) << rating << '\n';
    }
}

void cmd_recommend(const Options& o) {
    const auto s = load_served(o);
    const auto u = stage("lookup", [&] { return user_index(s.corpus, o.user); });
    const auto all = observations(s.corpus, training_indices(s.corpus, o));
    const auto candidates = candidate_items(u, s.corpus.num_items(), all);
    const Predictor predictor(s.params, s.model);
    const auto list = recommend(u, candidates, o.top_n, predictor);
    if (o.as_json) {
        json items = json::array();
        for (const auto& it : list.items) {
            items.push_back({{"item", s.corpus.item_ids[it.item]}, {"score", it.score}});
        }
        std::cout << json{{"user", o.user}, {"items", items}}.dump(2) << '\n';
        return;
    }
    std::cout << std::left << std::setw(6) << "rank" << std::setw(24) << "item" << std::right << std::setw(10)
              << "score" << '\n';
    for (std::size_t r = 0; r < list.items.size(); ++r) {
        std::cout << std::left << std::setw(6) << r + 1 << std::setw(24) << s.corpus.item_ids[list.items[r].item]
                  << std::right << std::setw(10) << std::fixed << std::setprecision(4) << list.items[r].score
                  << '\n';
    }
}

void cmd_explain(const Options& o) {
    const auto s = load_served(o);
    const auto u = stage("lookup", [&] { return user_index(s.corpus, o.user); });
    const auto i = stage("lookup", [&] { return item_index(s.corpus, o.item); });
    const auto ex = stage("explain", [&] { return explain(u, i, s.params, s.model, s.corpus.text_vocab, o.terms); });
    if (o.as_json) {
        auto j = to_json(ex);
        j["user_id"] = o.user;
        j["item_id"] = o.item;
        std::cout << j.dump(2) << '\n';
    } else {
        write_table(ex, std::cout);
    }
}

void cmd_evaluate(const Options& o, const std::vector<std::string>& argv) {
    ProtocolConfig config;
    config.matm = o.matm;
    config.alfm = o.alfm;
    config.seed = o.seed;
    config.cutoff = o.cutoff;
    config.rating = config.baseline = config.text_only = config.topn = config.coldstart = false;
    for (const auto& p : o.protocols) {
        if (p == "rating") {
            config.rating = true;
        } else if (p == "baseline") {
            config.baseline = true;
        } else if (p == "text-only") {
            config.text_only = true;
        } else if (p == "topn") {
            config.topn = true;
        } else if (p == "coldstart") {
            config.coldstart = true;
        } else {
            throw StageError("config", "unknown protocol '" + p + "'");
        }
    }
    if (config.text_only || config.baseline) {
        config.rating = true;
    }
    write_manifest(o, "evaluate", argv, {{"corpus", o.corpus_path}}, {{"report", o.output}, {"tables", o.tables}},
                   config.to_json());
    const auto corpus = stage("load-corpus", [&] { return load_corpus(o.corpus_path); });
    const auto report = run_experiment(corpus, config);
    stage("write", [&] {
        if (!o.output.empty()) {
            auto out = open_out(o.output);
            out << report.to_json().dump(2) << '\n';
        }
        if (!o.tables.empty()) {
            auto out = open_out(o.tables);
            report.write_tables(out);
        }
        return 0;
    });
    report.write_tables(std::cout);
}

void cmd_generate(Options o, const std::vector<std::string>& argv) {
    auto& spec = o.synthetic;
    spec.seed = o.seed;
    spec.aspects = o.matm.aspects;
    spec.topics = o.matm.topics;
    spec.factors = o.alfm.factors;
    write_manifest(o, "generate", argv, json::object(),
                   {{"corpus", o.output}, {"truth", o.truth_path}, {"planted", o.planted_path}},
                   {{"users", spec.users}, {"items", spec.items}, {"aspects", spec.aspects}, {"topics", spec.topics},
                    {"factors", spec.factors}, {"text_vocab", spec.text_vocab},
                    {"visual_vocab", spec.visual_vocab}, {"images_per_item", spec.images_per_item},
                    {"noise", spec.noise}});
    const auto data = stage("generate", [&] { return make_synthetic(spec); });
    stage("write", [&] {
        save_corpus(data.corpus, o.output);
        if (!o.truth_path.empty()) {
            save_to(o.truth_path, data.truth, [](const MatmParams& p, std::ostream& out) { save_matm_params(p, out); });
        }
        if (!o.planted_path.empty()) {
            save_to(o.planted_path, data.planted,
                    [](const AlfmModel& m, std::ostream& out) { save_alfm_model(m, out); });
        }
        return 0;
    });
    std::cout << "users " << data.corpus.num_users() << "  items " << data.corpus.num_items() << "  ratings "
              << data.corpus.ratings.size() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal aspect-aware latent factor model"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "key=value configuration file; flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--manifest", o.manifest_path, "Where to write the run manifest (default: <output>.manifest.json)");

    auto* ingest_cmd = app.add_subcommand("ingest", "Build a corpus from JSONL reviews and block features");
    ingest_cmd->add_option("--reviews", o.reviews_path, "JSONL review records")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--features", o.features_path, "Block feature CSV")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--codebook", o.codebook_path, "Visual codebook")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--stop-words", o.stop_words_path, "Stop-word list, one per line")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--min-count", o.min_count, "Minimum term frequency")->capture_default_str();
    ingest_cmd->add_flag("--normalize", o.normalize, "L2-normalize block features");
    ingest_cmd->add_option("-o,--output", o.output, "Corpus file")->required();

    auto* codebook_cmd = app.add_subcommand("codebook", "Cluster block features into a visual vocabulary");
    codebook_cmd->add_option("--features", o.features_path, "Block feature CSV")->required()->check(CLI::ExistingFile);
    codebook_cmd->add_option("--clusters", o.clusters, "Visual words C")->capture_default_str();
    codebook_cmd->add_option("--kmeans-iters", o.kmeans_iters, "Lloyd iterations")->capture_default_str();
    codebook_cmd->add_option("--dim", o.feature_dim, "Feature dimension")->capture_default_str();
    codebook_cmd->add_flag("--normalize", o.normalize, "L2-normalize block features");
    codebook_cmd->add_option("-o,--output", o.output, "Codebook file")->required();

    auto* matm_cmd = app.add_subcommand("train-matm", "Fit the topic model");
    matm_cmd->add_option("--corpus", o.corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
    add_matm_flags(*matm_cmd, o);
    matm_cmd->add_flag("--split", o.use_split, "Train on the 80% per-user training split only");
    matm_cmd->add_option("--topic-summary", o.topic_summary, "Write top terms per topic");
    matm_cmd->add_option("-o,--output", o.output, "Topic model file")->required();

    auto* alfm_cmd = app.add_subcommand("train-alfm", "Fit the aspect-aware factor model");
    alfm_cmd->add_option("--corpus", o.corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
    alfm_cmd->add_option("--matm", o.matm_path, "Topic model file")->required()->check(CLI::ExistingFile);
    add_alfm_flags(*alfm_cmd, o);
    alfm_cmd->add_flag("--split", o.use_split, "Train on the 80% per-user training split only");
    alfm_cmd->add_option("-o,--output", o.output, "Factor model file")->required();

    const auto add_served = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", o.corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--matm", o.matm_path, "Topic model file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--alfm", o.alfm_path, "Factor model file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--user", o.user, "User id")->required();
        cmd->add_flag("--json", o.as_json, "JSON output");
    };
    auto* predict_cmd = app.add_subcommand("predict", "Predict one rating");
    add_served(predict_cmd);
    predict_cmd->add_option("--item", o.item, "Item id")->required();

    auto* recommend_cmd = app.add_subcommand("recommend", "Rank unrated items for a user");
    add_served(recommend_cmd);
    recommend_cmd->add_option("-n,--top", o.top_n, "List length")->capture_default_str();
    recommend_cmd->add_flag("--split", o.use_split, "Only exclude items in the training split");

    auto* explain_cmd = app.add_subcommand("explain", "Per-aspect explanation of a prediction");
    add_served(explain_cmd);
    explain_cmd->add_option("--item", o.item, "Item id")->required();
    explain_cmd->add_option("--terms", o.terms, "Terms per aspect")->capture_default_str();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Run the evaluation protocols");
    evaluate_cmd->add_option("--corpus", o.corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
    add_matm_flags(*evaluate_cmd, o);
    add_alfm_flags(*evaluate_cmd, o);
    evaluate_cmd->add_option("--protocols", o.protocols, "rating, baseline, text-only, topn, coldstart")
        ->delimiter(',')
        ->capture_default_str();
    evaluate_cmd->add_option("--cutoff", o.cutoff, "Ranking cutoff n")->capture_default_str();
    evaluate_cmd->add_option("-o,--output", o.output, "JSON report");
    evaluate_cmd->add_option("--tables", o.tables, "Text tables");

    auto* generate_cmd = app.add_subcommand("generate", "Sample a synthetic corpus from the generative process");
    generate_cmd->add_option("--users", o.synthetic.users)->capture_default_str();
    generate_cmd->add_option("--items", o.synthetic.items)->capture_default_str();
    generate_cmd->add_option("--aspects", o.matm.aspects)->capture_default_str();
    generate_cmd->add_option("--topics", o.matm.topics)->capture_default_str();
    generate_cmd->add_option("--factors", o.alfm.factors)->capture_default_str();
    generate_cmd->add_option("--text-vocab", o.synthetic.text_vocab)->capture_default_str();
    generate_cmd->add_option("--visual-vocab", o.synthetic.visual_vocab)->capture_default_str();
    generate_cmd->add_option("--images-per-item", o.synthetic.images_per_item)->capture_default_str();
    generate_cmd->add_option("--noise", o.synthetic.noise, "Rating noise standard deviation")->capture_default_str();
    generate_cmd->add_option("--truth", o.truth_path, "Write the planted topic-model parameters");
    generate_cmd->add_option("--planted", o.planted_path, "Write the planted factor model");
    generate_cmd->add_option("-o,--output", o.output, "Corpus file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    sync_priors(o);
    const std::vector<std::string> args(argv, argv + argc);

    try {
        const auto* cmd = app.get_subcommands().front();
        const auto& name = cmd->get_name();
        if (cmd == matm_cmd || cmd == evaluate_cmd) {
            stage("config", [&] {
                o.matm.validate();
                return 0;
            });
        }
        if (cmd == alfm_cmd || cmd == evaluate_cmd) {
            stage("config", [&] {
                o.alfm.validate();
                return 0;
            });
        }
        if (name == "ingest") {
            cmd_ingest(o, args);
        } else if (name == "codebook") {
            cmd_codebook(o, args);
        } else if (name == "train-matm") {
            cmd_train_matm(o, args);
        } else if (name == "train-alfm") {
            cmd_train_alfm(o, args);
        } else if (name == "predict") {
            cmd_predict(o);
        } else if (name == "recommend") {
            cmd_recommend(o);
        } else if (name == "explain") {
            cmd_explain(o);
        } else if (name == "evaluate") {
            cmd_evaluate(o, args);
        } else if (name == "generate") {
            cmd_generate(o, args);
        }
    } catch (const std::exception& e) {
        std::cerr << "mmalfm: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
