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

#include "nullgate/gated_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "nullgate/embedding_io.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {
namespace {

constexpr std::string_view kAdapterMagic = "NDAD";
constexpr std::uint32_t kAdapterVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

void check_projectors(const Vector& alpha, std::span<const Matrix> projectors,
                      Eigen::Index d) {
  if (alpha.size() != static_cast<Eigen::Index>(projectors.size())) {
    throw InputError("gate has " + std::to_string(alpha.size()) +
                     " weights for " + std::to_string(projectors.size()) +
                     " projectors");
  }
  for (const auto& P : projectors) {
    if (P.rows() != d || P.cols() != d) {
      throw InputError("projector shape does not match dimension " +
                       std::to_string(d));
    }
  }
}

// Per-sequence forward state kept for the backward pass.
struct Cache {
  AdapterPass pass;
  std::vector<Vector> removed;  // R_k c = c - P_k c
  std::vector<Vector> vh;       // V_k h*
  Vector centered;              // h* - mean(h*)
  double inv_std = 0.0;
};

Cache forward_cached(const Matrix& tokens, const AdapterParams& p, double eps) {
  Cache cache;
  AdapterPass& a = cache.pass;
  a.c = pool_context(tokens);
  if (a.c.size() != p.dim()) {
    throw InputError("token dimension " + std::to_string(a.c.size()) +
                     " does not match adapter dimension " +
                     std::to_string(p.dim()));
  }
  a.alpha = level1_gate(a.c, p.G1);
  const int K = p.num_attributes();
  cache.removed.resize(K);
  for (int k = 0; k < K; ++k) cache.removed[k] = a.c - p.projectors[k] * a.c;
  a.h_star = soft_project(a.c, a.alpha, p.projectors);
  const Eigen::Index d = a.h_star.size();
  cache.centered = a.h_star.array() - a.h_star.mean();
  const double var = cache.centered.squaredNorm() / static_cast<double>(d);
  cache.inv_std = 1.0 / std::sqrt(var + eps);
  a.c_tilde = cache.centered * cache.inv_std;
  a.beta.resize(K);
  for (int k = 0; k < K; ++k) a.beta(k) = level2_gate(a.c_tilde, p.g.row(k).transpose());
  a.y = p.O * a.h_star;
  cache.vh.resize(K);
  for (int k = 0; k < K; ++k) {
    cache.vh[k] = p.V[k] * a.h_star;
    a.y.noalias() += a.beta(k) * (p.U[k] * cache.vh[k]);
  }
  return cache;
}

}  // namespace

void AdapterParams::validate() const {
  const Eigen::Index d = dim();
  const auto K = static_cast<Eigen::Index>(projectors.size());
  if (K < 1) throw InputError("adapter needs at least one projector");
  if (d < 2 || O.cols() != d) throw InputError("output map must be square, d >= 2");
  if (G1.rows() != K || G1.cols() != d) throw InputError("G1 must be K x d");
  if (g.rows() != K || g.cols() != d) throw InputError("level-2 keys must be K x d");
  if (static_cast<Eigen::Index>(U.size()) != K ||
      static_cast<Eigen::Index>(V.size()) != K) {
    throw InputError("adapter needs one expert per projector");
  }
  const Eigen::Index r = rank();
  if (r < 1) throw InputError("expert rank must be >= 1");
  for (Eigen::Index k = 0; k < K; ++k) {
    if (U[k].rows() != d || U[k].cols() != r) throw InputError("U_k must be d x r");
    if (V[k].rows() != r || V[k].cols() != d) throw InputError("V_k must be r x d");
    if (projectors[k].rows() != d || projectors[k].cols() != d) {
      throw InputError("projector must be d x d");
    }
  }
}

std::vector<std::uint64_t> AdapterParams::frozen_checksums() const {
  std::vector<std::uint64_t> out;
  for (const auto& P : projectors) out.push_back(checksum(P));
  out.push_back(checksum(O));
  return out;
}

AdapterParams init_adapter(std::vector<Matrix> projectors, Matrix O,
                           Eigen::Index rank, std::uint64_t seed,
                           double v_scale) {
  AdapterParams p;
  const Eigen::Index d = O.rows();
  const auto K = static_cast<Eigen::Index>(projectors.size());
  p.projectors = std::move(projectors);
  p.O = std::move(O);
  p.G1 = Matrix::Zero(K, d);
  p.g = Matrix::Zero(K, d);
  CounterRng rng(seed, /*stream=*/0xada);
  for (Eigen::Index k = 0; k < K; ++k) {
    p.U.push_back(Matrix::Zero(d, rank));
    Matrix V(rank, d);
    for (Eigen::Index i = 0; i < rank; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) V(i, j) = v_scale * rng.normal();
    }
    p.V.push_back(std::move(V));
  }
  p.validate();
  return p;
}

void AdapterTrainConfig::validate() const {
  if (!(lr > 0.0)) throw InputError("adapter lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InputError("adapter momentum must lie in [0, 1)");
  }
  if (epochs < 0) throw InputError("adapter epochs must be >= 0");
  if (batch_size < 1) throw InputError("adapter batch_size must be >= 1");
  if (!(lambda_entropy >= 0.0) || !(lambda_l1 >= 0.0)) {
    throw InputError("penalty weights must be non-negative");
  }
  if (!(layer_norm_eps > 0.0)) throw InputError("layer_norm_eps must be positive");
}

void ToyTaskHead::validate(Eigen::Index d) const {
  if (items.rows() < 2) throw InputError("task head needs at least 2 items");
  if (items.cols() != d) throw InputError("item embeddings have the wrong width");
}

Vector pool_context(const Matrix& tokens) {
  if (tokens.rows() < 1) throw InputError("pool_context: empty sequence");
  return tokens.colwise().mean().transpose();
}

Vector level1_gate(const Vector& c, const Matrix& G1) {
  if (G1.cols() != c.size()) throw InputError("level1_gate: shape mismatch");
  return softmax(G1 * c);
}

Vector soft_project(const Vector& h, const Vector& alpha,
                    std::span<const Matrix> projectors) {
  check_projectors(alpha, projectors, h.size());
  // Convex-combination form: the endpoints alpha = 0 and alpha = e_k come
  // out bit-exact (0 * h and 1 * P_k h involve no rounding).
  Vector out = (1.0 - alpha.sum()) * h;
  for (std::size_t k = 0; k < projectors.size(); ++k) {
    const double a = alpha(static_cast<Eigen::Index>(k));
    if (a == 0.0) continue;
    out.noalias() += a * (projectors[k] * h);
  }
  return out;
}

Matrix soft_project_jacobian(const Vector& alpha,
                             std::span<const Matrix> projectors) {
  if (projectors.empty()) throw InputError("soft_project_jacobian: no projectors");
  const Eigen::Index d = projectors.front().rows();
  check_projectors(alpha, projectors, d);
  Matrix J = Matrix::Identity(d, d);
  for (std::size_t k = 0; k < projectors.size(); ++k) {
    const double a = alpha(static_cast<Eigen::Index>(k));
    if (a == 0.0) continue;
    J -= a * (Matrix::Identity(d, d) - projectors[k]);
  }
  return J;
}

double level2_gate(const Vector& c_tilde, const Vector& g_k) {
  if (c_tilde.size() != g_k.size()) throw InputError("level2_gate: shape mismatch");
  return sigmoid(g_k.dot(c_tilde));
}

Vector layer_normalize(const Vector& c, double eps) {
  if (c.size() < 2) throw InputError("layer_normalize needs d >= 2");
  const Vector centered = (c.array() - c.mean()).matrix();
  const double var = centered.squaredNorm() / static_cast<double>(c.size());
  return centered / std::sqrt(var + eps);
}

Vector adapter_forward(const Vector& h_star, const AdapterParams& params,
                       const Vector& beta) {
  if (h_star.size() != params.dim()) throw InputError("adapter_forward: bad h*");
  if (beta.size() != static_cast<Eigen::Index>(params.U.size())) {
    throw InputError("adapter_forward: one gate value per expert required");
  }
  Vector y = params.O * h_star;
  for (std::size_t k = 0; k < params.U.size(); ++k) {
    const double b = beta(static_cast<Eigen::Index>(k));
    if (b == 0.0) continue;
    y.noalias() += b * (params.U[k] * (params.V[k] * h_star));
  }
  return y;
}

AdapterPass adapter_apply(const Matrix& tokens, const AdapterParams& params,
                          double layer_norm_eps) {
  return forward_cached(tokens, params, layer_norm_eps).pass;
}

Matrix adapter_outputs(std::span<const TaskExample> examples,
                       const AdapterParams& params, double layer_norm_eps) {
  Matrix Y(static_cast<Eigen::Index>(examples.size()), params.dim());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) =
        adapter_apply(examples[i].tokens, params, layer_norm_eps).y.transpose();
  }
  return Y;
}

AdapterGradients AdapterGradients::zeros_like(const AdapterParams& params) {
  AdapterGradients g;
  g.G1 = Matrix::Zero(params.G1.rows(), params.G1.cols());
  g.g = Matrix::Zero(params.g.rows(), params.g.cols());
  for (const auto& U : params.U) g.U.push_back(Matrix::Zero(U.rows(), U.cols()));
  for (const auto& V : params.V) g.V.push_back(Matrix::Zero(V.rows(), V.cols()));
  return g;
}

AdapterLoss adapter_loss(std::span<const TaskExample> batch,
                         const AdapterParams& params, const ToyTaskHead& head,
                         const AdapterTrainConfig& config,
                         AdapterGradients* grads) {
  if (batch.empty()) throw InputError("adapter_loss: empty batch");
  const Eigen::Index d = params.dim();
  const int K = params.num_attributes();
  const auto I = static_cast<int>(head.items.rows());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double lam_h = config.lambda_entropy;
  const double lam_1 = config.lambda_l1;
  if (grads) *grads = AdapterGradients::zeros_like(params);

  AdapterLoss out;
  out.mean_alpha = Vector::Zero(K);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const TaskExample& ex = batch[n];
    if (ex.target < 0 || ex.target >= I) {
      throw InputError("target item " + std::to_string(ex.target) +
                       " out of range [0, " + std::to_string(I) + ")");
    }
    const Cache cache = forward_cached(ex.tokens, params, config.layer_norm_eps);
    const AdapterPass& a = cache.pass;

    const Vector scores = head.items * a.y;
    const double smax = scores.maxCoeff();
    const double lse =
        smax + std::log((scores.array() - smax).exp().sum());
    const double task = lse - scores(ex.target);
    double neg_entropy = 0.0;
    for (int k = 0; k < K; ++k) {
      if (a.alpha(k) > 0.0) neg_entropy += a.alpha(k) * std::log(a.alpha(k));
    }
    const double l1 = a.beta.sum();
    out.task += inv_n * task;
    out.entropy += inv_n * lam_h * neg_entropy;
    out.l1 += inv_n * lam_1 * l1;
    out.mean_alpha += inv_n * a.alpha;

    if (!grads) continue;
    Vector ds = (scores.array() - lse).exp().matrix();
    ds(ex.target) -= 1.0;
    ds *= inv_n;
    const Vector dy = head.items.transpose() * ds;

    Vector dh = params.O.transpose() * dy;
    Vector dc_tilde = Vector::Zero(d);
    for (int k = 0; k < K; ++k) {
      const Vector Ut_dy = params.U[k].transpose() * dy;
      const double b = a.beta(k);
      grads->U[k].noalias() += b * dy * cache.vh[k].transpose();
      grads->V[k].noalias() += b * Ut_dy * a.h_star.transpose();
      dh.noalias() += b * (params.V[k].transpose() * Ut_dy);
      const double dbeta = Ut_dy.dot(cache.vh[k]) + lam_1 * inv_n;
      const double dz = dbeta * b * (1.0 - b);
      grads->g.row(k) += dz * a.c_tilde.transpose();
      dc_tilde += dz * params.g.row(k).transpose();
    }
    // Layer-norm backward (no affine).
    const double m1 = dc_tilde.mean();
    const double m2 = dc_tilde.dot(a.c_tilde) / static_cast<double>(d);
    dh += cache.inv_std *
          (dc_tilde.array() - m1 - a.c_tilde.array() * m2).matrix();

    Vector dalpha(K);
    for (int k = 0; k < K; ++k) {
      const double log_a =
          std::log(std::max(a.alpha(k), std::numeric_limits<double>::min()));
      dalpha(k) = -cache.removed[k].dot(dh) + lam_h * inv_n * (log_a + 1.0);
    }
    const Vector dlogit =
        a.alpha.cwiseProduct((dalpha.array() - a.alpha.dot(dalpha)).matrix());
    grads->G1.noalias() += dlogit * a.c.transpose();
  }
  out.total = out.task + out.entropy + out.l1;
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "adapter loss is not finite (batch of " << batch.size()
        << ", task=" << out.task << ", entropy=" << out.entropy
        << ", l1=" << out.l1 << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

AdapterTrainResult train_adapter(std::span<const TaskExample> train,
                                 AdapterParams init, const ToyTaskHead& head,
                                 const AdapterTrainConfig& config) {
  config.validate();
  init.validate();
  head.validate(init.dim());
  if (train.empty()) throw InputError("train_adapter: no training sequences");

  AdapterTrainResult result;
  const auto frozen_before = init.frozen_checksums();
  result.params = std::move(init);
  result.initial_loss =
      adapter_loss(train, result.params, head, config).total;
  if (config.epochs == 0) return result;

  AdapterGradients velocity = AdapterGradients::zeros_like(result.params);
  AdapterGradients grads;
  std::vector<TaskExample> batch;
  int above_limit = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    CounterRng rng(config.seed, static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(train.size(), rng);
    AdapterEpochLog log;
    log.epoch = epoch;
    log.loss.mean_alpha = Vector::Zero(result.params.num_attributes());
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      AdapterLoss bl;
      try {
        bl = adapter_loss(batch, result.params, head, config, &grads);
      } catch (const NumericalError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const double w = static_cast<double>(batch.size()) /
                       static_cast<double>(train.size());
      log.loss.total += w * bl.total;
      log.loss.task += w * bl.task;
      log.loss.entropy += w * bl.entropy;
      log.loss.l1 += w * bl.l1;
      log.loss.mean_alpha += w * bl.mean_alpha;

      auto step = [&](Matrix& v, const Matrix& g, Matrix& theta) {
        v = config.momentum * v + g;
        theta -= config.lr * v;
      };
      step(velocity.G1, grads.G1, result.params.G1);
      step(velocity.g, grads.g, result.params.g);
      for (std::size_t k = 0; k < grads.U.size(); ++k) {
        step(velocity.U[k], grads.U[k], result.params.U[k]);
        step(velocity.V[k], grads.V[k], result.params.V[k]);
      }
    }
    result.trace.push_back(log);
    above_limit = log.loss.total > 10.0 * result.initial_loss ? above_limit + 1 : 0;
    if (above_limit >= 3) {
      std::ostringstream msg;
      msg << "adapter training diverged: epoch " << epoch << " loss "
          << log.loss.total << " exceeds 10x initial loss "
          << result.initial_loss << " for 3 consecutive epochs";
      throw DivergenceError(msg.str());
    }
  }
  if (result.params.frozen_checksums() != frozen_before) {
    throw IntegrityError("frozen projector or output map changed during training");
  }
  return result;
}

std::string format_trace(const std::vector<AdapterEpochLog>& trace) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,loss,task_loss,entropy_term,l1_term";
  const Eigen::Index K = trace.empty() ? 0 : trace.front().loss.mean_alpha.size();
  for (Eigen::Index k = 0; k < K; ++k) out << ",mean_alpha_" << k;
  out << '\n';
  for (const auto& e : trace) {
    out << e.epoch << ',' << e.loss.total << ',' << e.loss.task << ','
        << e.loss.entropy << ',' << e.loss.l1;
    for (Eigen::Index k = 0; k < e.loss.mean_alpha.size(); ++k) {
      out << ',' << e.loss.mean_alpha(k);
    }
    out << '\n';
  }
  return out.str();
}

HitRates hit_rates(const Matrix& outputs, std::span<const int> targets,
                   const ToyTaskHead& head, std::uint64_t seed, int negatives) {
  if (static_cast<std::size_t>(outputs.rows()) != targets.size()) {
    throw InputError("hit_rates: one target per output row required");
  }
  if (outputs.rows() == 0) throw InputError("hit_rates: no rows");
  head.validate(outputs.cols());
  const auto I = static_cast<std::size_t>(head.items.rows());
  const std::size_t n_neg =
      std::min(static_cast<std::size_t>(std::max(negatives, 1)), I - 1);
  HitRates hits;
  std::vector<std::size_t> pool(I - 1);
  for (Eigen::Index row = 0; row < outputs.rows(); ++row) {
    const int target = targets[static_cast<std::size_t>(row)];
    if (target < 0 || static_cast<std::size_t>(target) >= I) {
      throw InputError("hit_rates: target out of range");
    }
    // Partial Fisher-Yates over the non-target items.
    for (std::size_t i = 0, j = 0; i < I; ++i) {
      if (i != static_cast<std::size_t>(target)) pool[j++] = i;
    }
    CounterRng rng(seed, static_cast<std::uint64_t>(row));
    for (std::size_t i = 0; i < n_neg; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    const Vector y = outputs.row(row).transpose();
    const double pos = head.items.row(target).dot(y);
    int rank = 1;
    for (std::size_t i = 0; i < n_neg; ++i) {
      if (head.items.row(static_cast<Eigen::Index>(pool[i])).dot(y) >= pos) ++rank;
    }
    hits.hit1 += rank <= 1;
    hits.hit3 += rank <= 3;
    hits.hit10 += rank <= 10;
  }
  const double n = static_cast<double>(outputs.rows());
  hits.hit1 /= n;
  hits.hit3 /= n;
  hits.hit10 /= n;
  return hits;
}

std::string serialize_adapter(const AdapterParams& params,
                              const std::vector<std::string>& projector_paths) {
  params.validate();
  if (projector_paths.size() != params.projectors.size()) {
    throw InputError("one projector path per attribute required");
  }
  detail::ByteWriter w;
  w.magic(kAdapterMagic);
  w.u32(kAdapterVersion);
  w.u32(static_cast<std::uint32_t>(params.dim()));
  w.u32(static_cast<std::uint32_t>(params.num_attributes()));
  w.u32(static_cast<std::uint32_t>(params.rank()));
  w.matrix(params.G1);
  w.matrix(params.g);
  for (const auto& U : params.U) w.matrix(U);
  for (const auto& V : params.V) w.matrix(V);
  w.matrix(params.O);
  for (std::size_t k = 0; k < params.projectors.size(); ++k) {
    w.str(projector_paths[k]);
    w.u64(checksum(params.projectors[k]));
  }
  return w.bytes();
}

AdapterParams parse_adapter(const std::string& bytes,
                            std::vector<ProjectorRef>* refs,
                            const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kAdapterMagic);
  const std::uint32_t version = r.u32();
  if (version != kAdapterVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  const Eigen::Index d = r.u32();
  const Eigen::Index K = r.u32();
  const Eigen::Index rank = r.u32();
  if (d < 2 || K < 1 || rank < 1) r.fail("invalid adapter shape");
  AdapterParams p;
  p.G1 = r.matrix(K, d);
  p.g = r.matrix(K, d);
  for (Eigen::Index k = 0; k < K; ++k) p.U.push_back(r.matrix(d, rank));
  for (Eigen::Index k = 0; k < K; ++k) p.V.push_back(r.matrix(rank, d));
  p.O = r.matrix(d, d);
  std::vector<ProjectorRef> local;
  for (Eigen::Index k = 0; k < K; ++k) {
    ProjectorRef ref;
    ref.path = r.str();
    ref.checksum = r.u64();
    local.push_back(std::move(ref));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  if (refs) *refs = std::move(local);
  return p;
}

void save_adapter(const AdapterParams& params,
                  const std::vector<std::string>& projector_paths,
                  const std::string& path) {
  detail::write_file(path, serialize_adapter(params, projector_paths));
}

AdapterParams load_adapter(const std::string& path) {
  std::vector<ProjectorRef> refs;
  AdapterParams p = parse_adapter(detail::read_file(path), &refs, path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const auto& ref : refs) {
    std::filesystem::path ppath(ref.path);
    if (ppath.is_relative()) ppath = base / ppath;
    ProjectorRecord rec = load_projector(ppath.string());
    const std::uint64_t got = checksum(rec.P);
    if (got != ref.checksum) {
      std::ostringstream msg;
      msg << path << ": projector " << ppath.string() << " checksum " << std::hex
          << got << " does not match recorded " << ref.checksum;
      throw IntegrityError(msg.str());
    }
    p.projectors.push_back(std::move(rec.P));
  }
  p.validate();
  return p;
}

}  // namespace nullgate
