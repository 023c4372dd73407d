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

// Versioned little-endian binary container shared by every model file.
// Layout: 8-byte magic "MMALFM\0\0", 4-byte kind tag, 4-byte version, payload.

#include <array>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace mmalfm {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FileKind : std::uint32_t {
    Corpus = 1,
    Codebook = 2,
    MatmParams = 3,
    AlfmModel = 4,
};

inline constexpr std::uint32_t kFormatVersion = 1;

class BinaryWriter {
public:
    BinaryWriter(std::ostream& out, FileKind kind);

    template <typename T>
        requires std::is_arithmetic_v<T>
    void write(T value) {
        raw(&value, sizeof(T));
    }

    void write(const std::string& value);

    template <typename T>
        requires std::is_arithmetic_v<T>
    void write(const std::vector<T>& values) {
        write<std::uint64_t>(values.size());
        if (!values.empty()) {
            raw(values.data(), values.size() * sizeof(T));
        }
    }

    void write(const std::vector<std::string>& values);

private:
    void raw(const void* data, std::size_t bytes);
    std::ostream& out_;
};

class BinaryReader {
public:
    /// Throws FormatError when the magic, kind or version do not match.
    BinaryReader(std::istream& in, FileKind expected);

    template <typename T>
        requires std::is_arithmetic_v<T>
    T read() {
        T value{};
        raw(&value, sizeof(T));
        return value;
    }

    std::string read_string();

    template <typename T>
        requires std::is_arithmetic_v<T>
    std::vector<T> read_vector() {
        const auto n = checked_length(read<std::uint64_t>(), sizeof(T));
        std::vector<T> values(n);
        if (n != 0) {
            raw(values.data(), n * sizeof(T));
        }
        return values;
    }

    std::vector<std::string> read_strings();

private:
    std::size_t checked_length(std::uint64_t n, std::size_t element_size);
    void raw(void* data, std::size_t bytes);
    std::istream& in_;
};

}  // namespace mmalfm
