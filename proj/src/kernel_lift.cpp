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

#include "nullgate/kernel_lift.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "binary_io.hpp"

namespace nullgate {
namespace {

constexpr std::string_view kRffMagic = "NDRF";
constexpr std::uint32_t kRffVersion = 1;
constexpr std::uint64_t kOmegaStream = 1;
constexpr std::uint64_t kPhaseStream = 2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_dim(Eigen::Index got, const RffSpec& spec) {
  if (got != spec.input_dim()) {
    throw InputError("input has dimension " + std::to_string(got) +
                     ", RFF spec expects " + std::to_string(spec.input_dim()));
  }
}

}  // namespace

std::string RffSpec::id() const {
  std::ostringstream s;
  s << "rff-d" << input_dim() << "-D" << feature_dim() << "-s" << seed;
  return s.str();
}

RffSpec sample_rff(Eigen::Index d, Eigen::Index D, double sigma, double eta,
                   std::uint64_t seed) {
  if (d < 1) throw InputError("RFF input dimension must be >= 1");
  if (D < 1) throw InputError("RFF feature dimension D must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InputError("RFF bandwidth sigma must be positive");
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw InputError("perturbation scale eta must be non-negative");
  }
  RffSpec spec;
  spec.sigma = sigma;
  spec.eta = eta;
  spec.seed = seed;
  spec.omega.resize(D, d);
  CounterRng omega_rng(seed, kOmegaStream);
  // Row by row so each frequency vector is one contiguous draw sequence.
  for (Eigen::Index i = 0; i < D; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      spec.omega(i, j) = omega_rng.normal() / sigma;
    }
  }
  spec.phase.resize(D);
  CounterRng phase_rng(seed, kPhaseStream);
  for (Eigen::Index i = 0; i < D; ++i) {
    double b = kTwoPi * phase_rng.uniform();
    if (b >= kTwoPi) b = 0.0;
    spec.phase(i) = b;
  }
  return spec;
}

RffSpec identity_lift(Eigen::Index d, double eta, std::uint64_t seed) {
  if (d < 1) throw InputError("lift input dimension must be >= 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw InputError("perturbation scale eta must be non-negative");
  }
  RffSpec spec;
  spec.omega.resize(0, d);
  spec.phase.resize(0);
  spec.eta = eta;
  spec.seed = seed;
  return spec;
}

Vector perturb(const Vector& h, double eta, CounterRng& rng) {
  if (eta == 0.0) return h;
  Vector out = h;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += eta * rng.normal();
  return out;
}

Matrix perturb_rows(const Matrix& H, double eta, CounterRng& rng) {
  if (eta == 0.0) return H;
  Matrix out = H;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += eta * rng.normal();
  }
  return out;
}

Vector fourier_features(const Vector& h_tilde, const RffSpec& spec) {
  check_dim(h_tilde.size(), spec);
  if (spec.feature_dim() == 0) return Vector(0);
  const double scale = std::sqrt(2.0 / static_cast<double>(spec.feature_dim()));
  Vector z = spec.omega * h_tilde + spec.phase;
  return scale * z.array().cos().matrix();
}

Vector lift(const Vector& h_tilde, const RffSpec& spec) {
  Vector out(spec.lifted_dim());
  out.head(spec.input_dim()) = h_tilde;
  out.tail(spec.feature_dim()) = fourier_features(h_tilde, spec);
  return out;
}

Matrix lift_rows(const Matrix& H_tilde, const RffSpec& spec) {
  check_dim(H_tilde.cols(), spec);
  if (spec.feature_dim() == 0) return H_tilde;
  const double scale = std::sqrt(2.0 / static_cast<double>(spec.feature_dim()));
  Matrix out(H_tilde.rows(), spec.lifted_dim());
  out.leftCols(spec.input_dim()) = H_tilde;
  Matrix z = H_tilde * spec.omega.transpose();
  z.rowwise() += spec.phase.transpose();
  out.rightCols(spec.feature_dim()) = scale * z.array().cos().matrix();
  return out;
}

double kernel_estimate(const Vector& x, const Vector& y, const RffSpec& spec) {
  if (x.size() != y.size()) throw InputError("kernel_estimate: dimension mismatch");
  return fourier_features(x, spec).dot(fourier_features(y, spec));
}

double gaussian_kernel(const Vector& x, const Vector& y, double sigma) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

double median_bandwidth(const Matrix& X, std::uint64_t seed,
                        Eigen::Index max_rows) {
  if (X.rows() < 2) throw InputError("median_bandwidth needs at least 2 rows");
  std::vector<Eigen::Index> rows;
  if (X.rows() <= max_rows) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) rows.push_back(i);
  } else {
    CounterRng rng(seed, /*stream=*/0xba9d);
    const auto order = shuffled_indices(static_cast<std::size_t>(X.rows()), rng);
    for (Eigen::Index i = 0; i < max_rows; ++i) {
      rows.push_back(static_cast<Eigen::Index>(order[i]));
    }
    std::sort(rows.begin(), rows.end());
  }
  std::vector<double> dist;
  dist.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      dist.push_back((X.row(rows[a]) - X.row(rows[b])).norm());
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + mid);
    median = 0.5 * (lower + median);
  }
  if (!(median > 0.0)) {
    throw InputError(
        "median pairwise distance is zero (sampled rows identical); "
        "pass an explicit sigma");
  }
  return median;
}

std::string serialize_rff_spec(const RffSpec& spec) {
  detail::ByteWriter w;
  w.magic(kRffMagic);
  w.u32(kRffVersion);
  w.u32(static_cast<std::uint32_t>(spec.input_dim()));
  w.u32(static_cast<std::uint32_t>(spec.feature_dim()));
  w.f64(spec.sigma);
  w.f64(spec.eta);
  w.u64(spec.seed);
  return w.bytes();
}

RffSpec parse_rff_spec(const std::string& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kRffMagic);
  const std::uint32_t version = r.u32();
  if (version != kRffVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  const std::uint32_t d = r.u32();
  const std::uint32_t D = r.u32();
  const double sigma = r.f64();
  const double eta = r.f64();
  const std::uint64_t seed = r.u64();
  if (!r.at_end()) r.fail("trailing bytes");
  try {
    if (D == 0) {
      RffSpec spec = identity_lift(d, eta, seed);
      spec.sigma = sigma;
      return spec;
    }
    return sample_rff(d, D, sigma, eta, seed);
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

void save_rff_spec(const RffSpec& spec, const std::string& path) {
  detail::write_file(path, serialize_rff_spec(spec));
}

RffSpec load_rff_spec(const std::string& path) {
  return parse_rff_spec(detail::read_file(path), path);
}

}  // namespace nullgate
