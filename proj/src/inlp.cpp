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

#include "nullgate/inlp.hpp"

#include <cmath>
#include <sstream>

namespace nullgate {

void InlpConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must lie in (0, 1)");
  if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
  if (max_refinements < 1) throw InputError("max_refinements must be >= 1");
  if (!(rank_tolerance > 0.0)) throw InputError("rank_tolerance must be positive");
  if (!(holdout > 0.0 && holdout < 1.0)) {
    throw InputError("holdout must lie in (0, 1)");
  }
}

int ProbeStack::append(const Matrix& candidates, double rank_tolerance) {
  if (candidates.cols() != dim()) {
    throw InputError("probe stack: candidate width " +
                     std::to_string(candidates.cols()) + " != " +
                     std::to_string(dim()));
  }
  int added = 0;
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
    const double norm = candidates.row(i).norm();
    if (!(norm > 0.0) || rows_.rows() >= dim()) continue;
    Vector r = candidates.row(i).transpose() / norm;
    // Two passes of Gram-Schmidt keep the stack orthonormal to rounding.
    for (int pass = 0; pass < 2 && rows_.rows() > 0; ++pass) {
      r -= rows_.transpose() * (rows_ * r);
    }
    const double residual = r.norm();
    if (residual < rank_tolerance) continue;
    rows_.conservativeResize(rows_.rows() + 1, Eigen::NoChange);
    rows_.row(rows_.rows() - 1) = r.transpose() / residual;
    ++added;
  }
  return added;
}

Matrix ProbeStack::project_rows(const Matrix& X) const {
  if (rows_.rows() == 0) return X;
  return X - (X * rows_.transpose()) * rows_;
}

Matrix ProbeStack::dense_projector() const {
  Matrix P = Matrix::Identity(dim(), dim());
  if (rows_.rows() > 0) P.noalias() -= rows_.transpose() * rows_;
  return 0.5 * (P + P.transpose());
}

Matrix ProbeStack::backbone_block(Eigen::Index d) const {
  if (d < 1 || d > dim()) throw InputError("backbone block larger than stack");
  Matrix P = Matrix::Identity(d, d);
  if (rows_.rows() > 0) {
    const auto Wb = rows_.leftCols(d);
    P.noalias() -= Wb.transpose() * Wb;
  }
  return 0.5 * (P + P.transpose());
}

Matrix nullspace_projector(const Matrix& W, double rank_tolerance) {
  const Eigen::Index p = W.cols();
  if (p < 1) throw InputError("nullspace_projector: zero-width matrix");
  if (!W.allFinite()) throw InputError("nullspace_projector: non-finite rows");

  // Select a maximal set of independent rows, in order.
  Matrix basis(0, p);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double norm = W.row(i).norm();
    if (!(norm > 0.0)) continue;
    Vector r = W.row(i).transpose() / norm;
    for (int pass = 0; pass < 2 && basis.rows() > 0; ++pass) {
      r -= basis.transpose() * (basis * r);
    }
    const double residual = r.norm();
    if (residual < rank_tolerance) continue;
    basis.conservativeResize(basis.rows() + 1, Eigen::NoChange);
    basis.row(basis.rows() - 1) = r.transpose() / residual;
    kept.push_back(i);
  }
  Matrix P = Matrix::Identity(p, p);
  if (kept.empty()) return P;

  Matrix Wk(static_cast<Eigen::Index>(kept.size()), p);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    Wk.row(static_cast<Eigen::Index>(i)) = W.row(kept[i]);
  }
  const Matrix gram = Wk * Wk.transpose();
  Eigen::LLT<Matrix> llt(gram);
  bool factored = llt.info() == Eigen::Success;
  if (factored) {
    const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
    const double ratio = diag.minCoeff() / diag.maxCoeff();
    factored = ratio * ratio >= rank_tolerance;
  }
  if (factored) {
    P.noalias() -= Wk.transpose() * llt.solve(Wk);
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector& lambda = eig.eigenvalues();
    const double lmax = lambda.maxCoeff();
    const double lmin = lambda.minCoeff();
    if (!(lmin > rank_tolerance * lmax)) {
      std::ostringstream msg;
      msg << "nullspace_projector: W W^T is numerically singular after "
             "filtering (rows="
          << Wk.rows() << ", lambda_min=" << lmin << ", lambda_max=" << lmax
          << ", condition=" << (lmin > 0 ? lmax / lmin : INFINITY) << ")";
      throw NumericalError(msg.str());
    }
    const Matrix& V = eig.eigenvectors();
    const Matrix pinv =
        V * lambda.cwiseInverse().asDiagonal() * V.transpose();
    P.noalias() -= Wk.transpose() * (pinv * Wk);
  }
  return 0.5 * (P + P.transpose());
}

Matrix extract_backbone_block(const Matrix& P_hat, Eigen::Index d) {
  if (P_hat.rows() != P_hat.cols()) {
    throw InputError("extract_backbone_block: projector is not square");
  }
  if (d < 1 || d > P_hat.rows()) {
    throw InputError("extract_backbone_block: block size out of range");
  }
  return P_hat.topLeftCorner(d, d);
}

Matrix gauge_free_rows(const Matrix& W) {
  const Eigen::RowVectorXd mean = W.colwise().mean();
  return W.rowwise() - mean;
}

namespace {

// Drops eigen-components of a symmetric PSD block at or below `tol`. A block
// whose directions were all removed would otherwise keep ~1e-16 residue that
// a scale-invariant audit (AUC) can still rank on.
Matrix flush_removed(const Matrix& P, double tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (P + P.transpose()));
  const Vector& lambda = eig.eigenvalues();
  if (lambda.minCoeff() > tol) return P;
  const Vector kept = (lambda.array() > tol).select(lambda, 0.0);
  const Matrix& V = eig.eigenvectors();
  Matrix out = V * kept.asDiagonal() * V.transpose();
  return 0.5 * (out + out.transpose());
}

// features(it) returns the lifted rows seen by iteration it.
template <typename Features>
InlpResult inlp_loop(Features&& features, Eigen::Index rows, Eigen::Index width,
                     std::span<const int> labels, int num_classes,
                     const InlpConfig& config, std::uint64_t seed,
                     ProbeStack initial) {
  config.validate();
  if (static_cast<std::size_t>(rows) != labels.size()) {
    throw InputError("run_inlp: row and label counts differ");
  }
  InlpResult result;
  result.stack = initial.dim() == 0 ? ProbeStack(width) : std::move(initial);
  if (result.stack.dim() != width) {
    throw InputError("run_inlp: initial stack width does not match data");
  }
  const auto [fit_rows, hold_rows] =
      holdout_split(static_cast<std::size_t>(rows), config.holdout, seed);
  const Labels y_fit = gather(labels, fit_rows);
  const Labels y_hold = gather(labels, hold_rows);

  for (int it = 0;; ++it) {
    const Matrix X = features(it);
    const Matrix P_fit = result.stack.project_rows(gather_rows(X, fit_rows));
    const Matrix P_hold = result.stack.project_rows(gather_rows(X, hold_rows));
    const LinearProbe probe =
        fit_linear_probe(P_fit, y_fit, num_classes, config.probe);
    const LeakageReport rep =
        leakage_report(probe.predict_proba(P_hold), y_hold, num_classes);

    InlpIterationLog entry;
    entry.iteration = it;
    entry.train_accuracy = probe.train_accuracy;
    entry.heldout_accuracy = probe.accuracy(P_hold, y_hold);
    entry.heldout_gap = rep.gap;
    result.log.push_back(entry);

    if (rep.gap <= config.tau) {
      result.reached_threshold = true;
      break;
    }
    if (it >= config.max_iterations) break;
    const int added =
        result.stack.append(gauge_free_rows(probe.W), config.rank_tolerance);
    result.stack.count_iteration();
    result.log.back().rows_added = added;
    if (added == 0) break;
  }
  result.final_gap = result.log.back().heldout_gap;
  return result;
}

}  // namespace

InlpResult run_inlp(const Matrix& X_lifted, std::span<const int> labels,
                    int num_classes, const InlpConfig& config,
                    std::uint64_t seed, ProbeStack initial) {
  return inlp_loop([&](int) -> const Matrix& { return X_lifted; },
                   X_lifted.rows(), X_lifted.cols(), labels, num_classes,
                   config, seed, std::move(initial));
}

InlpResult run_inlp_perturbed(const Matrix& H, std::span<const int> labels,
                              int num_classes, const RffSpec& spec,
                              const InlpConfig& config, std::uint64_t seed,
                              ProbeStack initial) {
  auto features = [&](int it) {
    CounterRng noise(seed, 0x1000 + static_cast<std::uint64_t>(it));
    return lift_rows(perturb_rows(H, spec.eta, noise), spec);
  };
  return inlp_loop(features, H.rows(), spec.lifted_dim(), labels, num_classes,
                   config, seed, std::move(initial));
}

AttributeProjectorFit fit_attribute_projector(
    const EmbeddingSet& train, const std::string& attribute,
    const RffSpec& lift_spec, const InlpConfig& config, const MlpConfig& audit,
    std::uint64_t seed) {
  config.validate();
  const AttributeLabels& attr = train.attribute(attribute);
  const Matrix X = train.as_double();
  const Eigen::Index d = X.cols();
  if (lift_spec.input_dim() != d) {
    throw InputError("RFF spec dimension does not match embeddings");
  }
  const auto [fit_rows, audit_rows] = holdout_split(
      static_cast<std::size_t>(X.rows()), 0.2, seed ^ 0xa0d17ULL);
  const Matrix X_fit = gather_rows(X, fit_rows);
  const Matrix X_audit = gather_rows(X, audit_rows);
  const Labels y_fit = gather(attr.labels, fit_rows);
  const Labels y_audit = gather(attr.labels, audit_rows);

  AttributeProjectorFit fit;
  fit.stack = ProbeStack(lift_spec.lifted_dim());
  Matrix P = Matrix::Identity(d, d);
  double gap = 1.0;
  bool converged = false;
  for (int round = 1; round <= config.max_refinements; ++round) {
    RefinementLog log;
    log.round = round;
    log.inner = run_inlp_perturbed(
        X_fit, y_fit, attr.num_classes, lift_spec, config,
        seed + static_cast<std::uint64_t>(round), fit.stack);
    fit.stack = log.inner.stack;
    P = flush_removed(fit.stack.backbone_block(d), config.rank_tolerance);

    const MlpProbe probe =
        fit_mlp_probe(X_fit * P, y_fit, attr.num_classes, audit, attribute);
    gap = leakage_gap(probe, X_audit * P, y_audit).gap;
    log.mlp_gap = gap;
    log.idempotence_error = max_abs(P * P - P);
    fit.refinements.push_back(std::move(log));
    if (gap <= config.tau) {
      converged = true;
      break;
    }
  }

  fit.record.attribute = attribute;
  fit.record.P = std::move(P);
  fit.record.probe_count = static_cast<std::uint32_t>(fit.stack.iterations());
  fit.record.achieved_gap = gap;
  fit.record.rff_spec_id = lift_spec.id();
  fit.record.refinements = static_cast<std::uint32_t>(fit.refinements.size());
  fit.record.converged = converged;
  return fit;
}

std::string format_fit_log(const AttributeProjectorFit& fit) {
  std::ostringstream out;
  out.precision(6);
  for (const auto& r : fit.refinements) {
    for (const auto& it : r.inner.log) {
      out << "attribute=" << fit.record.attribute << " refinement=" << r.round
          << " iteration=" << it.iteration
          << " train_accuracy=" << it.train_accuracy
          << " heldout_accuracy=" << it.heldout_accuracy
          << " linear_gap=" << it.heldout_gap
          << " rows_added=" << it.rows_added << '\n';
    }
    out << "attribute=" << fit.record.attribute << " refinement=" << r.round
        << " stack_rows=" << r.inner.stack.rows()
        << " clg=" << r.mlp_gap
        << " idempotence_error=" << r.idempotence_error << '\n';
  }
  out << "attribute=" << fit.record.attribute
      << " converged=" << (fit.record.converged ? "yes" : "no")
      << " refinements=" << fit.record.refinements
      << " achieved_gap=" << fit.record.achieved_gap << '\n';
  return out.str();
}

Matrix removed_directions(const Matrix& P) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (P + P.transpose()));
  std::vector<Eigen::Index> cols;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    if (eig.eigenvalues()(i) < 0.5) cols.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(cols.size()), P.cols());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        eig.eigenvectors().col(cols[i]).transpose();
  }
  return out;
}

CompositeProjector compose_projectors(std::span<const ProjectorRecord> records,
                                      double rank_tolerance) {
  if (records.empty()) throw InputError("compose_projectors: no projectors");
  const Eigen::Index d = records.front().P.rows();
  Matrix stacked(0, d);
  for (const auto& rec : records) {
    rec.validate();
    if (rec.P.rows() != d) {
      throw InputError("compose_projectors: projector dimensions differ");
    }
    const Matrix removed = removed_directions(rec.P);
    stacked.conservativeResize(stacked.rows() + removed.rows(), Eigen::NoChange);
    stacked.bottomRows(removed.rows()) = removed;
  }
  CompositeProjector out;
  out.P = nullspace_projector(stacked, rank_tolerance);
  out.intersection_dim = static_cast<Eigen::Index>(std::lround(out.P.trace()));
  out.total_loss = out.intersection_dim == 0;
  if (out.total_loss) out.P.setZero();
  return out;
}

}  // namespace nullgate
