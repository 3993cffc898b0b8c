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

#pragma once

// Little-endian primitive encoding shared by every artifact file.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nullgate/common.hpp"

namespace nullgate::detail {

class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);  // u32 length + bytes
  // Row-major float64 payload.
  void matrix(const Matrix& m);

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  // Throws InputError naming the file when the tag does not match.
  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  Matrix matrix(Eigen::Index rows, Eigen::Index cols);

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  const char* take(std::size_t n);

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace nullgate::detail
