#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "mmalfm/random.hpp"
#include "mmalfm/visualvocab.hpp"

using namespace mmalfm;

namespace {

std::size_t brute_nearest(const VisualCodebook& cb, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cb.size(); ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < cb.dim(); ++j) {
            d += (x[j] - cb.center(c)[j]) * (x[j] - cb.center(c)[j]);
        }
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("two separated clouds are recovered") {
    Rng rng(1);
    const std::size_t n = 200;
    std::vector<double> x;
    for (std::size_t k = 0; k < n; ++k) {
        const double base = k < n / 2 ? -10.0 : 10.0;
        x.push_back(base + rng.normal());
        x.push_back(base + rng.normal());
    }
    KMeansOptions o;
    o.clusters = 2;
    o.seed = 3;
    const auto cb = train_codebook(x, 2, o);
    const auto first = cb.nearest({x.data(), 2});
    for (std::size_t k = 0; k < n; ++k) {
        const auto id = cb.nearest({x.data() + 2 * k, 2});
        CHECK((k < n / 2 ? id == first : id != first));
        CHECK(id == brute_nearest(cb, {x.data() + 2 * k, 2}));
    }
}

TEST_CASE("one cluster is the mean") {
    const std::vector<double> x{0, 0, 2, 4, 4, 2};
    KMeansOptions o;
    o.clusters = 1;
    const auto cb = train_codebook(x, 2, o);
    CHECK(cb.center(0)[0] == doctest::Approx(2.0));
    CHECK(cb.center(0)[1] == doctest::Approx(2.0));
}

TEST_CASE("k-means is deterministic and its objective never rises") {
    Rng rng(5);
    std::vector<double> x(300 * 4);
    for (auto& v : x) {
        v = rng.normal();
    }
    KMeansOptions o;
    o.clusters = 8;
    o.seed = 9;
    KMeansTrace trace;
    const auto a = train_codebook(x, 4, o, &trace);
    CHECK(a == train_codebook(x, 4, o));
    for (std::size_t t = 1; t < trace.objective.size(); ++t) {
        CHECK(trace.objective[t] <= trace.objective[t - 1] + 1e-9);
    }
}

TEST_CASE("more clusters than distinct points still yields a full codebook") {
    const std::vector<double> x{1, 1, 1, 1, 5, 5};
    KMeansOptions o;
    o.clusters = 3;
    const auto cb = train_codebook(x, 2, o);
    CHECK(cb.size() == 3);
    CHECK_THROWS(train_codebook(std::vector<double>{1, 2}, 2, o));
}

TEST_CASE("nearest: exact hit and tie-break") {
    std::vector<double> centers;
    for (int c = 0; c < 8; ++c) {
        centers.push_back(c);
        centers.push_back(0.0);
    }
    const VisualCodebook cb(8, 2, centers);
    const std::vector<double> seven{7.0, 0.0};
    CHECK(cb.nearest(seven) == 7);

    std::vector<double> tied(6 * 2, 100.0);
    tied[2 * 2] = 0.0;
    tied[2 * 2 + 1] = 1.0;
    tied[5 * 2] = 0.0;
    tied[5 * 2 + 1] = -1.0;
    const VisualCodebook cb2(6, 2, tied);
    CHECK(cb2.nearest(std::vector<double>{0.0, 0.0}) == 2);
}

TEST_CASE("quantize matches brute-force nearest neighbour") {
    Rng rng(11);
    std::vector<double> centers(16 * 3);
    for (auto& v : centers) {
        v = rng.normal();
    }
    const VisualCodebook cb(16, 3, centers);
    std::vector<double> blocks(kBlocksPerImage * 3);
    for (auto& v : blocks) {
        v = rng.normal();
    }
    const auto doc = quantize(blocks, cb);
    REQUIRE(doc.size() == kBlocksPerImage);
    for (std::size_t b = 0; b < kBlocksPerImage; ++b) {
        CHECK(doc[b] == brute_nearest(cb, {blocks.data() + 3 * b, 3}));
    }
    CHECK_THROWS(quantize(std::span<const double>(blocks.data(), 48 * 3), cb));
}

TEST_CASE("CSV features group into images") {
    std::ostringstream csv;
    for (int img = 0; img < 2; ++img) {
        for (std::size_t b = 0; b < kBlocksPerImage; ++b) {
            csv << "item7," << img << ',' << b << ',' << (img == 0 ? 0.0 : 1.0) << ",0\n";
        }
    }
    std::istringstream in(csv.str());
    const auto features = read_block_features_csv(in, 2);
    CHECK(features.size() == 2 * kBlocksPerImage);
    const VisualCodebook cb(2, 2, {0.0, 0.0, 1.0, 0.0});
    const auto images = quantize_images(features, cb);
    REQUIRE(images.size() == 1);
    CHECK(images[0].item_id == "item7");
    REQUIRE(images[0].images.size() == 2);
    CHECK(images[0].images[0] == VisualDoc(kBlocksPerImage, 0));
    CHECK(images[0].images[1] == VisualDoc(kBlocksPerImage, 1));

    std::istringstream bad("item7,0,0,abc,1\n");
    CHECK_THROWS(read_block_features_csv(bad, 2));
    std::istringstream short_row("item7,0,0,1\n");
    CHECK_THROWS(read_block_features_csv(short_row, 2));
}

TEST_CASE("incomplete image is rejected") {
    std::vector<BlockFeature> f;
    for (std::uint32_t b = 0; b < 10; ++b) {
        f.push_back({"x", 0, b, {0.0}});
    }
    const VisualCodebook cb(1, 1, {0.0});
    CHECK_THROWS(quantize_images(f, cb));
}

TEST_CASE("codebook round trip") {
    const VisualCodebook cb(2, 3, {1, 2, 3, 4, 5, 6});
    std::stringstream buf;
    save_codebook(cb, buf);
    CHECK(load_codebook(buf) == cb);
}
