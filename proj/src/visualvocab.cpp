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

#include "mmalfm/visualvocab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "mmalfm/binary_io.hpp"
#include "mmalfm/random.hpp"

namespace mmalfm {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        d += diff * diff;
    }
    return d;
}

void normalize_rows(std::vector<double>& data, std::size_t dim) {
    for (std::size_t off = 0; off < data.size(); off += dim) {
        double norm = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            norm += data[off + k] * data[off + k];
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t k = 0; k < dim; ++k) {
                data[off + k] /= norm;
            }
        }
    }
}

}  // namespace

VisualCodebook::VisualCodebook(std::size_t size, std::size_t dim, std::vector<double> centers)
    : size_(size), dim_(dim), centers_(std::move(centers)) {
    if (size_ == 0 || dim_ == 0 || centers_.size() != size_ * dim_) {
        throw std::invalid_argument("VisualCodebook: centers must be size x dim");
    }
    for (const double v : centers_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("VisualCodebook: non-finite center");
        }
    }
}

WordId VisualCodebook::nearest(std::span<const double> block) const {
    if (block.size() != dim_) {
        throw std::invalid_argument("quantize: block dimension " + std::to_string(block.size()) +
                                    " does not match codebook dimension " + std::to_string(dim_));
    }
    WordId best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < size_; ++c) {
        const double d = squared_distance(block, center(c));
        if (d < best_distance) {  // strict: ties keep the lower id
            best_distance = d;
            best = static_cast<WordId>(c);
        }
    }
    return best;
}

VisualCodebook train_codebook(std::span<const double> vectors, std::size_t dim,
                              const KMeansOptions& options, KMeansTrace* trace) {
    if (dim == 0 || vectors.size() % dim != 0) {
        throw std::invalid_argument("train_codebook: data is not a whole number of vectors");
    }
    const std::size_t n = vectors.size() / dim;
    const std::size_t k = options.clusters;
    if (k == 0) {
        throw std::invalid_argument("train_codebook: cluster count must be positive");
    }
    if (n < k) {
        throw std::invalid_argument("train_codebook: " + std::to_string(n) +
                                    " feature vectors cannot form " + std::to_string(k) +
                                    " clusters; choose a smaller vocabulary size");
    }
    std::vector<double> data(vectors.begin(), vectors.end());
    for (const double v : data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("train_codebook: non-finite feature value");
        }
    }
    if (options.normalize) {
        normalize_rows(data, dim);
    }
    const auto row = [&](std::size_t r) { return std::span<const double>(data.data() + r * dim, dim); };

    Rng rng(options.seed);
    std::vector<double> centers(k * dim);
    const auto center = [&](std::size_t c) { return std::span<double>(centers.data() + c * dim, dim); };

    // k-means++ seeding
    std::vector<double> nearest_sq(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = static_cast<std::size_t>(rng.below(n));
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (const double d : nearest_sq) {
                total += d;
            }
            // All remaining points coincide with chosen centers: fall back to uniform.
            chosen = total > 0.0 ? rng.categorical(nearest_sq) : static_cast<std::size_t>(rng.below(n));
        }
        std::copy_n(row(chosen).begin(), dim, center(c).begin());
        for (std::size_t r = 0; r < n; ++r) {
            nearest_sq[r] = std::min(nearest_sq[r], squared_distance(row(r), center(c)));
        }
    }

    std::vector<std::size_t> assignment(n, k);
    std::vector<double> distance(n, 0.0);
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> sizes(k);
    KMeansTrace local;
    KMeansTrace& tr = trace != nullptr ? *trace : local;
    tr = {};

    for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iters, 1); ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(row(r), center(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed |= assignment[r] != best;
            assignment[r] = best;
            distance[r] = best_d;
            objective += best_d;
        }
        tr.objective.push_back(objective);
        tr.iterations = iter + 1;
        if (!changed) {
            tr.converged = true;
            break;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t r = 0; r < n; ++r) {
            const auto c = assignment[r];
            ++sizes[c];
            for (std::size_t d = 0; d < dim; ++d) {
                sums[c * dim + d] += data[r * dim + d];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                // Re-seed from the point currently farthest from its center.
                const auto far = static_cast<std::size_t>(
                    std::max_element(distance.begin(), distance.end()) - distance.begin());
                std::copy_n(row(far).begin(), dim, center(c).begin());
                distance[far] = 0.0;
                assignment[far] = c;
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d) {
                center(c)[d] = sums[c * dim + d] / static_cast<double>(sizes[c]);
            }
        }
    }
    return VisualCodebook(k, dim, std::move(centers));
}

VisualCodebook train_codebook(std::span<const BlockFeature> features, const KMeansOptions& options,
                              KMeansTrace* trace) {
    if (features.empty()) {
        throw std::invalid_argument("train_codebook: no block features");
    }
    const std::size_t dim = features.front().vector.size();
    std::vector<double> data;
    data.reserve(features.size() * dim);
    for (const auto& f : features) {
        if (f.vector.size() != dim) {
            throw std::invalid_argument("train_codebook: block features differ in dimension");
        }
        data.insert(data.end(), f.vector.begin(), f.vector.end());
    }
    return train_codebook(data, dim, options, trace);
}

VisualDoc quantize(std::span<const double> image_blocks, const VisualCodebook& codebook, bool normalize) {
    const std::size_t dim = codebook.dim();
    if (image_blocks.size() != kBlocksPerImage * dim) {
        throw std::invalid_argument("quantize: expected " + std::to_string(kBlocksPerImage) +
                                    " blocks of dimension " + std::to_string(dim));
    }
    std::vector<double> blocks(image_blocks.begin(), image_blocks.end());
    if (normalize) {
        normalize_rows(blocks, dim);
    }
    VisualDoc doc(kBlocksPerImage);
    for (std::size_t b = 0; b < kBlocksPerImage; ++b) {
        doc[b] = codebook.nearest(std::span<const double>(blocks.data() + b * dim, dim));
    }
    return doc;
}

std::vector<ItemImages> quantize_images(std::span<const BlockFeature> features,
                                        const VisualCodebook& codebook, bool normalize) {
    const std::size_t dim = codebook.dim();
    // item -> image index -> block index -> feature
    std::map<std::string, std::map<std::uint32_t, std::map<std::uint32_t, const BlockFeature*>>> grouped;
    for (const auto& f : features) {
        if (f.block_index >= kBlocksPerImage) {
            throw std::invalid_argument("block index " + std::to_string(f.block_index) +
                                        " outside [0, 49) for item " + f.item_id);
        }
        if (f.vector.size() != dim) {
            throw std::invalid_argument("block feature dimension mismatch for item " + f.item_id);
        }
        grouped[f.item_id][f.image_index][f.block_index] = &f;
    }
    std::vector<ItemImages> out;
    std::vector<double> blocks(kBlocksPerImage * dim);
    for (const auto& [item, images] : grouped) {
        ItemImages entry{item, {}};
        for (const auto& [image, blocks_by_index] : images) {
            if (blocks_by_index.size() != kBlocksPerImage) {
                throw std::invalid_argument("image " + std::to_string(image) + " of item " + item +
                                            " has " + std::to_string(blocks_by_index.size()) +
                                            " blocks, expected 49");
            }
            for (const auto& [b, f] : blocks_by_index) {
                std::copy(f->vector.begin(), f->vector.end(), blocks.begin() + b * dim);
            }
            entry.images.push_back(quantize(blocks, codebook, normalize));
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::vector<BlockFeature> read_block_features_csv(std::istream& in, std::size_t dim) {
    std::vector<BlockFeature> features;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        BlockFeature f;
        const auto bad = [&](const std::string& what) {
            return std::invalid_argument("block features line " + std::to_string(line_no) + ": " + what);
        };
        if (!std::getline(ss, f.item_id, ',') || f.item_id.empty()) {
            throw bad("missing item_id");
        }
        try {
            if (!std::getline(ss, field, ',')) {
                throw bad("missing image_index");
            }
            f.image_index = static_cast<std::uint32_t>(std::stoul(field));
            if (!std::getline(ss, field, ',')) {
                throw bad("missing block_index");
            }
            f.block_index = static_cast<std::uint32_t>(std::stoul(field));
            f.vector.reserve(dim);
            while (std::getline(ss, field, ',')) {
                f.vector.push_back(std::stod(field));
            }
        } catch (const std::out_of_range&) {
            throw bad("number out of range");
        } catch (const std::invalid_argument& e) {
            if (std::string_view(e.what()).starts_with("block features")) {
                throw;
            }
            throw bad("unparsable number");
        }
        if (f.vector.size() != dim) {
            throw bad("expected " + std::to_string(dim) + " values, found " + std::to_string(f.vector.size()));
        }
        if (f.block_index >= kBlocksPerImage) {
            throw bad("block_index must be in [0, 49)");
        }
        features.push_back(std::move(f));
    }
    return features;
}

void save_codebook(const VisualCodebook& codebook, std::ostream& out) {
    BinaryWriter w(out, FileKind::Codebook);
    w.write<std::uint64_t>(codebook.size());
    w.write<std::uint64_t>(codebook.dim());
    w.write(codebook.centers());
}

VisualCodebook load_codebook(std::istream& in) {
    BinaryReader r(in, FileKind::Codebook);
    const auto size = r.read<std::uint64_t>();
    const auto dim = r.read<std::uint64_t>();
    return VisualCodebook(size, dim, r.read_vector<double>());
}

}  // namespace mmalfm
