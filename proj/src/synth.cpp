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

#include "nullgate/synth.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include <json.hpp>

#include "binary_io.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {
namespace {

using nlohmann::json;

constexpr double kMaxCosine = 0.3;
constexpr int kMaxRejections = 10000;
constexpr std::uint64_t kStructureStream = 0x57;
constexpr std::uint64_t kBaseStream = 0xba5e;
constexpr std::uint64_t kItemStream = 0x17e;
constexpr std::uint64_t kTargetStream = 0x7a5;

Vector random_unit(Eigen::Index d, CounterRng& rng) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
  return v.normalized();
}

bool far_from(const Vector& v, const std::vector<Vector>& accepted) {
  for (const auto& a : accepted) {
    if (std::abs(a.dot(v)) > kMaxCosine) return false;
  }
  return true;
}

// Class index from the doubled polar angle of (a, b); invariant under
// (a, b) -> (-a, -b), so class-conditional means vanish.
int quadratic_class(double a, double b, int m) {
  double angle = 2.0 * std::atan2(b, a);
  const double two_pi = 2.0 * std::numbers::pi;
  angle = std::fmod(angle, two_pi);
  if (angle < 0) angle += two_pi;
  const int c = static_cast<int>(angle / (two_pi / m));
  return std::min(c, m - 1);
}

Vector class_offset(const PlantedStructure& p, int c, int m) {
  if (m == 2) {
    return (c == 0 ? 1.0 : -1.0) * p.directions.row(0).transpose();
  }
  const double theta = 2.0 * std::numbers::pi * c / m;
  return std::cos(theta) * p.directions.row(0).transpose() +
         std::sin(theta) * p.directions.row(1).transpose();
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Encoding encoding_from_name(const std::string& name) {
  if (name == "linear") return Encoding::kLinear;
  if (name == "quadratic-sign") return Encoding::kQuadraticSign;
  if (name == "mixed") return Encoding::kMixed;
  throw InputError("unknown encoding '" + name +
                   "' (expected linear, quadratic-sign or mixed)");
}

std::string encoding_name(Encoding encoding) {
  switch (encoding) {
    case Encoding::kLinear: return "linear";
    case Encoding::kQuadraticSign: return "quadratic-sign";
    case Encoding::kMixed: return "mixed";
  }
  return "linear";
}

void SynthConfig::validate() const {
  if (N < 2 || d < 2) throw InputError("synth: N and d must be >= 2");
  if (n_items < 2) throw InputError("synth: n_items must be >= 2");
  if (!(task_correlation >= 0.0 && task_correlation <= 1.0)) {
    throw InputError("synth: task_correlation must lie in [0, 1]");
  }
  if (!(task_scale >= 0.0) || !(offset_scale >= 0.0) ||
      !(quadratic_scale > 0.0)) {
    throw InputError("synth: task and offset scales must be non-negative, quadratic_scale positive");
  }
  std::set<std::string> names;
  for (const auto& a : attributes) {
    if (a.name.empty()) throw InputError("synth: attribute name is empty");
    if (!names.insert(a.name).second) {
      throw InputError("synth: duplicate attribute '" + a.name + "'");
    }
    if (a.num_classes < 2) throw InputError("synth: m must be >= 2 for " + a.name);
    if (!(a.strength >= 0.0 && a.strength <= 1.0)) {
      throw InputError("synth: strength must lie in [0, 1] for " + a.name);
    }
  }
  if (d < 2 * static_cast<Eigen::Index>(attributes.size())) {
    throw InputError("synth: d too small for the requested attributes");
  }
}

std::vector<PlantedStructure> ground_truth_directions(const SynthConfig& config) {
  config.validate();
  CounterRng rng(config.seed, kStructureStream);
  std::vector<PlantedStructure> out;
  std::vector<Vector> accepted;
  std::set<std::pair<int, int>> pairs;
  for (const auto& a : config.attributes) {
    PlantedStructure p;
    p.name = a.name;
    p.encoding = a.encoding;
    if (a.encoding != Encoding::kQuadraticSign) {
      const int count = a.num_classes == 2 ? 1 : 2;
      p.directions.resize(count, config.d);
      std::vector<Vector> own;
      for (int r = 0; r < count; ++r) {
        for (int tries = 0;; ++tries) {
          if (tries >= kMaxRejections) {
            throw InputError("synth: cannot place direction for " + a.name +
                             " with |cosine| <= 0.3; increase d");
          }
          Vector v = random_unit(config.d, rng);
          for (const auto& o : own) v -= o.dot(v) * o;
          v.normalize();
          if (far_from(v, accepted)) {
            own.push_back(v);
            break;
          }
        }
        p.directions.row(r) = own.back().transpose();
      }
      accepted.insert(accepted.end(), own.begin(), own.end());
    }
    if (a.encoding != Encoding::kLinear) {
      for (;;) {
        int i = static_cast<int>(rng.below(config.d));
        int j = static_cast<int>(rng.below(config.d));
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (pairs.insert({i, j}).second) {
          p.coord_i = i;
          p.coord_j = j;
          break;
        }
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

SynthBundle generate_bundle(const SynthConfig& config) {
  SynthBundle bundle;
  bundle.truth = ground_truth_directions(config);
  const Eigen::Index N = config.N;
  const Eigen::Index d = config.d;

  Matrix X(N, d);
  CounterRng base(config.seed, kBaseStream);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = base.normal();
  }

  for (std::size_t k = 0; k < config.attributes.size(); ++k) {
    const SynthAttribute& a = config.attributes[k];
    const PlantedStructure& p = bundle.truth[k];
    const int m = a.num_classes;
    CounterRng rng(config.seed, 0x100 + k);
    AttributeLabels labels;
    labels.name = a.name;
    labels.num_classes = m;
    labels.labels.resize(static_cast<std::size_t>(N));
    if (a.encoding != Encoding::kLinear) {
      X.col(p.coord_i) *= config.quadratic_scale;
      X.col(p.coord_j) *= config.quadratic_scale;
    }
    for (Eigen::Index i = 0; i < N; ++i) {
      int c = 0;
      if (a.encoding == Encoding::kLinear) {
        c = static_cast<int>(rng.below(m));
        X.row(i) += a.strength * config.offset_scale *
                    class_offset(p, c, m).transpose();
      } else {
        c = quadratic_class(X(i, p.coord_i), X(i, p.coord_j), m);
        // Keep the draw count fixed per row so labels stay aligned.
        const double u = rng.uniform();
        const int random_class = static_cast<int>(rng.below(m));
        if (u >= a.strength) c = random_class;
        if (a.encoding == Encoding::kMixed) {
          X.row(i) += 0.5 * a.strength * config.offset_scale *
                      class_offset(p, c, m).transpose();
        }
      }
      labels.labels[static_cast<std::size_t>(i)] = c;
    }
    bundle.data.attributes.push_back(std::move(labels));
  }

  // Orthonormal basis of the planted linear directions.
  Matrix S(d, 0);
  for (const auto& p : bundle.truth) {
    for (Eigen::Index r = 0; r < p.directions.rows(); ++r) {
      Vector v = p.directions.row(r).transpose();
      for (int pass = 0; pass < 2; ++pass) v -= S * (S.transpose() * v);
      if (v.norm() < 1e-8) continue;
      S.conservativeResize(Eigen::NoChange, S.cols() + 1);
      S.col(S.cols() - 1) = v.normalized();
    }
  }
  const double rho = S.cols() > 0 ? config.task_correlation : 0.0;
  bundle.items.resize(config.n_items, d);
  CounterRng item_rng(config.seed, kItemStream);
  for (Eigen::Index i = 0; i < config.n_items; ++i) {
    Vector a(d);
    for (Eigen::Index j = 0; j < d; ++j) a(j) = item_rng.normal();
    if (S.cols() > 0) a -= S * (S.transpose() * a);
    a.normalize();
    Vector s = Vector::Zero(d);
    if (S.cols() > 0) {
      Vector coef(S.cols());
      for (Eigen::Index j = 0; j < S.cols(); ++j) coef(j) = item_rng.normal();
      s = S * coef.normalized();
    }
    bundle.items.row(i) = (config.task_scale *
                           (std::sqrt(1.0 - rho) * a + std::sqrt(rho) * s))
                              .transpose();
  }

  Labels targets(static_cast<std::size_t>(N));
  CounterRng target_rng(config.seed, kTargetStream);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector logits = bundle.items * X.row(i).transpose();
    const Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    double u = target_rng.uniform() * p.sum();
    Eigen::Index t = 0;
    for (; t + 1 < p.size(); ++t) {
      u -= p(t);
      if (u < 0) break;
    }
    targets[static_cast<std::size_t>(i)] = static_cast<int>(t);
  }
  bundle.data.task_labels = std::move(targets);
  bundle.data.X = X.cast<float>();
  bundle.data.validate();
  return bundle;
}

EmbeddingSet generate(const SynthConfig& config) {
  return generate_bundle(config).data;
}

std::string ground_truth_to_json(const SynthConfig& config,
                                 const SynthBundle& bundle) {
  json j;
  j["config"] = {{"N", config.N},
                 {"d", config.d},
                 {"n_items", config.n_items},
                 {"task_correlation", config.task_correlation},
                 {"task_scale", config.task_scale},
                 {"offset_scale", config.offset_scale},
                 {"quadratic_scale", config.quadratic_scale},
                 {"seed", config.seed}};
  json attrs = json::array();
  for (std::size_t k = 0; k < bundle.truth.size(); ++k) {
    const auto& p = bundle.truth[k];
    json a = {{"name", p.name},
              {"m", config.attributes[k].num_classes},
              {"encoding", encoding_name(p.encoding)},
              {"strength", config.attributes[k].strength},
              {"directions", matrix_to_json(p.directions)}};
    if (p.coord_i >= 0) a["coordinates"] = {p.coord_i, p.coord_j};
    attrs.push_back(std::move(a));
  }
  j["attributes"] = std::move(attrs);
  j["items"] = matrix_to_json(bundle.items);
  return j.dump(1) + "\n";
}

void save_ground_truth(const SynthConfig& config, const SynthBundle& bundle,
                       const std::string& path) {
  detail::write_file(path, ground_truth_to_json(config, bundle));
}

Matrix load_items(const std::string& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!j.contains("items") || !j["items"].is_array() || j["items"].empty()) {
    throw InputError(path + ": no item vectors");
  }
  const auto& rows = j["items"];
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows[0].size());
  Matrix items(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) {
      throw InputError(path + ": ragged item row " + std::to_string(i));
    }
    for (Eigen::Index k = 0; k < d; ++k) items(i, k) = rows[i][k].get<double>();
  }
  return items;
}

}  // namespace nullgate
