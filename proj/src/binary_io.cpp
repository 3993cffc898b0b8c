// Copyright 2026 The nullgate Authors.
//
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

#include "binary_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace nullgate::detail {
namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::string& buf, T v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

}  // namespace

void ByteWriter::magic(std::string_view tag) { buf_.append(tag); }
void ByteWriter::u8(std::uint8_t v) { put(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f32(float v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, v); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void ByteWriter::matrix(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
}

void ByteReader::fail(const std::string& what) const {
  throw InputError(source_ + ": " + what + " (at byte " +
                   std::to_string(pos_) + ")");
}

const char* ByteReader::take(std::size_t n) {
  if (remaining() < n) fail("truncated file");
  const char* p = data_.data() + pos_;
  pos_ += n;
  return p;
}

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() ||
      std::string_view(data_.data() + pos_, tag.size()) != tag) {
    fail("bad magic, expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

namespace {
template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}
}  // namespace

std::uint8_t ByteReader::u8() { return get<std::uint8_t>(take(1)); }
std::uint32_t ByteReader::u32() { return get<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get<std::uint64_t>(take(8)); }
float ByteReader::f32() { return get<float>(take(4)); }
double ByteReader::f64() { return get<double>(take(8)); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  const char* p = take(n);
  return std::string(p, n);
}

Matrix ByteReader::matrix(Eigen::Index rows, Eigen::Index cols) {
  const auto need = static_cast<std::size_t>(rows) *
                    static_cast<std::size_t>(cols) * sizeof(double);
  if (remaining() < need) fail("truncated matrix payload");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path);
}

}  // namespace nullgate::detail
