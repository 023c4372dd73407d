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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmalfm/corpus.hpp"

namespace mmalfm {

inline constexpr std::size_t kBlocksPerImage = 49;  // 7x7 grid
inline constexpr std::size_t kBlockFeatureDim = 2048;

struct BlockFeature {
    std::string item_id;
    std::uint32_t image_index = 0;
    std::uint32_t block_index = 0;
    std::vector<double> vector;
};

class VisualCodebook {
public:
    VisualCodebook() = default;
    VisualCodebook(std::size_t size, std::size_t dim, std::vector<double> centers);

    std::size_t size() const { return size_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> center(std::size_t c) const {
        return {centers_.data() + c * dim_, dim_};
    }
    const std::vector<double>& centers() const { return centers_; }

    /// Nearest center by Euclidean distance; ties go to the lowest id.
    WordId nearest(std::span<const double> block) const;

    bool operator==(const VisualCodebook&) const = default;

private:
    std::size_t size_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> centers_;  // row-major size_ x dim_
};

struct KMeansOptions {
    std::size_t clusters = 4096;
    std::size_t max_iters = 100;
    std::uint64_t seed = 0;
    /// Scale every vector to unit L2 norm before clustering and quantization.
    bool normalize = false;
};

struct KMeansTrace {
    /// Sum of squared distances after each assignment step.
    std::vector<double> objective;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Lloyd iterations from k-means++ seeding over row-major vectors (n x dim).
/// Empty clusters are re-seeded from the point farthest from its center.
VisualCodebook train_codebook(std::span<const double> vectors, std::size_t dim,
                              const KMeansOptions& options, KMeansTrace* trace = nullptr);

VisualCodebook train_codebook(std::span<const BlockFeature> features, const KMeansOptions& options,
                              KMeansTrace* trace = nullptr);

/// Maps one image (blocks x dim, row-major) to its visual-word document.
/// Throws std::invalid_argument unless the image has exactly kBlocksPerImage blocks.
VisualDoc quantize(std::span<const double> image_blocks, const VisualCodebook& codebook,
                   bool normalize = false);

/// Groups block features by (item, image), checks every image is complete, and
/// quantizes each into a document.
std::vector<ItemImages> quantize_images(std::span<const BlockFeature> features,
                                        const VisualCodebook& codebook, bool normalize = false);

/// CSV rows: item_id,image_index,block_index,v0,...,v{dim-1}.
std::vector<BlockFeature> read_block_features_csv(std::istream& in, std::size_t dim = kBlockFeatureDim);

void save_codebook(const VisualCodebook& codebook, std::ostream& out);
VisualCodebook load_codebook(std::istream& in);

}  // namespace mmalfm
