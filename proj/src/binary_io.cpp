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

#include "mmalfm/binary_io.hpp"

#include <bit>
#include <istream>
#include <ostream>

namespace mmalfm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary model files are little-endian; big-endian hosts are unsupported");

constexpr std::array<char, 8> kMagic = {'M', 'M', 'A', 'L', 'F', 'M', '\0', '\0'};

// Upper bound on any single array; a corrupt length field must not trigger a huge allocation.
constexpr std::uint64_t kMaxBytes = std::uint64_t{1} << 36;

}  // namespace

BinaryWriter::BinaryWriter(std::ostream& out, FileKind kind) : out_(out) {
    raw(kMagic.data(), kMagic.size());
    write(static_cast<std::uint32_t>(kind));
    write(kFormatVersion);
}

void BinaryWriter::write(const std::string& value) {
    write<std::uint64_t>(value.size());
    raw(value.data(), value.size());
}

void BinaryWriter::write(const std::vector<std::string>& values) {
    write<std::uint64_t>(values.size());
    for (const auto& v : values) {
        write(v);
    }
}

void BinaryWriter::raw(const void* data, std::size_t bytes) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out_) {
        throw std::runtime_error("binary write failed");
    }
}

BinaryReader::BinaryReader(std::istream& in, FileKind expected) : in_(in) {
    std::array<char, 8> magic{};
    raw(magic.data(), magic.size());
    if (magic != kMagic) {
        throw FormatError("not an mmalfm binary file (bad magic)");
    }
    const auto kind = read<std::uint32_t>();
    if (kind != static_cast<std::uint32_t>(expected)) {
        throw FormatError("wrong file kind: expected " +
                          std::to_string(static_cast<std::uint32_t>(expected)) + ", found " +
                          std::to_string(kind));
    }
    const auto version = read<std::uint32_t>();
    if (version != kFormatVersion) {
        throw FormatError("unsupported format version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kFormatVersion) + ")");
    }
}

std::string BinaryReader::read_string() {
    const auto n = checked_length(read<std::uint64_t>(), 1);
    std::string value(n, '\0');
    if (n != 0) {
        raw(value.data(), n);
    }
    return value;
}

std::vector<std::string> BinaryReader::read_strings() {
    const auto n = checked_length(read<std::uint64_t>(), 8);
    std::vector<std::string> values;
    values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        values.push_back(read_string());
    }
    return values;
}

std::size_t BinaryReader::checked_length(std::uint64_t n, std::size_t element_size) {
    if (n > kMaxBytes / element_size) {
        throw FormatError("corrupt length field in binary file");
    }
    return static_cast<std::size_t>(n);
}

void BinaryReader::raw(void* data, std::size_t bytes) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (in_.gcount() != static_cast<std::streamsize>(bytes)) {
        throw FormatError("truncated binary file");
    }
}

}  // namespace mmalfm
