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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nullgate {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Embeddings are stored row-major in single precision.
using MatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Labels = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data, files, or configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

// Ill-conditioned linear algebra or non-finite values during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Training loss blew up.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Frozen artifacts changed underneath a run.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Max absolute elementwise value.
inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double asymmetry(const Matrix& m) { return max_abs(m - m.transpose()); }

// FNV-1a over the little-endian bytes of a double matrix in row-major order.
std::uint64_t checksum(const Matrix& m);

}  // namespace nullgate
