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

#include "nullgate/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "nullgate/embedding_io.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {
namespace {

void check_labels(const Matrix& X, std::span<const int> labels,
                  int num_classes) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) {
    throw InputError("probe: " + std::to_string(X.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw InputError("probe: need at least 2 classes");
  if (X.rows() < num_classes) {
    throw InputError("probe: fewer rows than classes");
  }
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw InputError("probe: label " + std::to_string(l) + " out of range");
    }
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw InputError("probe: class " + std::to_string(c) +
                       " absent from training labels");
    }
  }
  if (!X.allFinite()) throw InputError("probe: non-finite input features");
}

// Row-wise softmax in place; returns the per-row log-sum-exp.
Vector softmax_rows(Matrix& logits) {
  Vector lse(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i).array() = (logits.row(i).array() - mx).exp();
    const double s = logits.row(i).sum();
    logits.row(i) /= s;
    lse(i) = mx + std::log(s);
  }
  return lse;
}

int argmax_row(const Matrix& m, Eigen::Index i) {
  Eigen::Index best;
  m.row(i).maxCoeff(&best);
  return static_cast<int>(best);
}

double accuracy_of(const Matrix& proba, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (argmax_row(proba, static_cast<Eigen::Index>(i)) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Largest eigenvalue of [X 1]^T [X 1] / N by power iteration.
double design_curvature(const Matrix& X) {
  const auto n = static_cast<double>(X.rows());
  CounterRng rng(0x5eed, 0);
  Vector v(X.cols());
  for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = rng.normal();
  double c = rng.normal();
  double lambda = 0.0;
  for (int it = 0; it < 60; ++it) {
    const double norm = std::sqrt(v.squaredNorm() + c * c);
    if (norm == 0.0) return 0.0;
    v /= norm;
    c /= norm;
    Vector u = X * v;
    u.array() += c;
    v = X.transpose() * u / n;
    c = u.sum() / n;
    lambda = std::sqrt(v.squaredNorm() + c * c);
  }
  return lambda;
}

}  // namespace

Matrix LinearProbe::predict_proba(const Matrix& X) const {
  Matrix logits = X * W.transpose();
  logits.rowwise() += bias.transpose();
  softmax_rows(logits);
  return logits;
}

double LinearProbe::accuracy(const Matrix& X,
                             std::span<const int> labels) const {
  return accuracy_of(predict_proba(X), labels);
}

LinearProbe fit_linear_probe(const Matrix& X, std::span<const int> labels,
                             int num_classes, const LinearProbeConfig& config,
                             std::string attribute) {
  check_labels(X, labels, num_classes);
  const Eigen::Index n = X.rows();
  const Eigen::Index m = num_classes;
  const double l2 = config.l2;

  Matrix Y = Matrix::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  LinearProbe probe;
  probe.attribute = std::move(attribute);
  probe.W = Matrix::Zero(m, X.cols());
  // Start from the class priors so the initial predictor is the majority class.
  probe.bias = (Y.colwise().sum().transpose() / static_cast<double>(n))
                   .array()
                   .log()
                   .matrix();

  const double step =
      1.0 / (0.5 * 1.05 * design_curvature(X) + l2 + 1e-12);

  auto evaluate = [&](const Matrix& W, const Vector& b, Matrix& proba) {
    proba = X * W.transpose();
    proba.rowwise() += b.transpose();
    const Vector lse = softmax_rows(proba);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      ce += lse(i) - (X.row(i).dot(W.row(y)) + b(y));
    }
    return ce / static_cast<double>(n) + 0.5 * l2 * W.squaredNorm();
  };

  Matrix proba;
  double loss = evaluate(probe.W, probe.bias, proba);
  probe.loss_trace.push_back(loss);
  for (int it = 0; it < config.max_iters; ++it) {
    const Matrix G = (proba - Y) / static_cast<double>(n);
    const Matrix gW = G.transpose() * X + l2 * probe.W;
    const Vector gb = G.colwise().sum().transpose();
    Matrix W_next = probe.W - step * gW;
    Vector b_next = probe.bias - step * gb;
    Matrix proba_next;
    const double next = evaluate(W_next, b_next, proba_next);
    if (!std::isfinite(next)) {
      throw NumericalError("linear probe: non-finite loss at iteration " +
                           std::to_string(it));
    }
    // Rounding can produce a last-bit increase at convergence; stop there.
    if (next > loss) break;
    probe.W = std::move(W_next);
    probe.bias = std::move(b_next);
    proba = std::move(proba_next);
    const double decrease = loss - next;
    loss = next;
    probe.loss_trace.push_back(loss);
    if (decrease <= config.tol * std::max(1.0, std::abs(loss))) break;
  }
  probe.train_accuracy = accuracy_of(proba, labels);
  return probe;
}

Matrix MlpProbe::predict_proba(const Matrix& X) const {
  Matrix hidden_act = X * W1.transpose();
  hidden_act.rowwise() += b1.transpose();
  hidden_act = hidden_act.cwiseMax(0.0);
  Matrix logits = hidden_act * W2.transpose();
  logits.rowwise() += b2.transpose();
  softmax_rows(logits);
  return logits;
}

double MlpProbe::accuracy(const Matrix& X, std::span<const int> labels) const {
  return accuracy_of(predict_proba(X), labels);
}

MlpProbe fit_mlp_probe(const Matrix& X, std::span<const int> labels,
                       int num_classes, const MlpConfig& config,
                       std::string attribute) {
  check_labels(X, labels, num_classes);
  if (config.hidden < 1) throw InputError("MLP hidden width must be >= 1");
  if (config.batch_size < 1) throw InputError("MLP batch size must be >= 1");
  if (!(config.lr > 0.0)) throw InputError("MLP learning rate must be positive");

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::Index h = config.hidden;
  const Eigen::Index m = num_classes;

  MlpProbe net;
  net.attribute = std::move(attribute);
  CounterRng init(config.seed, 0);
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  const double s2 = std::sqrt(1.0 / static_cast<double>(h));
  net.W1.resize(h, d);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) net.W1(i, j) = s1 * init.normal();
  }
  net.b1 = Vector::Zero(h);
  net.W2.resize(m, h);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < h; ++j) net.W2(i, j) = s2 * init.normal();
  }
  net.b2 = Vector::Zero(m);

  Matrix vW1 = Matrix::Zero(h, d), vW2 = Matrix::Zero(m, h);
  Vector vb1 = Vector::Zero(h), vb2 = Vector::Zero(m);
  const double lr = config.lr;
  const double mu = config.momentum;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CounterRng shuffle(config.seed, static_cast<std::uint64_t>(epoch) + 1);
    const auto order = shuffled_indices(static_cast<std::size_t>(n), shuffle);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      Matrix xb(b, d);
      for (Eigen::Index r = 0; r < b; ++r) {
        xb.row(r) = X.row(static_cast<Eigen::Index>(order[start + r]));
      }
      Matrix z = xb * net.W1.transpose();
      z.rowwise() += net.b1.transpose();
      const Matrix a = z.cwiseMax(0.0);
      Matrix p = a * net.W2.transpose();
      p.rowwise() += net.b2.transpose();
      softmax_rows(p);
      for (Eigen::Index r = 0; r < b; ++r) {
        p(r, labels[order[start + r]]) -= 1.0;
      }
      p /= static_cast<double>(b);
      const Matrix gW2 = p.transpose() * a;
      const Vector gb2 = p.colwise().sum().transpose();
      Matrix dz = p * net.W2;
      dz = dz.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
      const Matrix gW1 = dz.transpose() * xb;
      const Vector gb1 = dz.colwise().sum().transpose();

      vW1 = mu * vW1 + gW1;
      vb1 = mu * vb1 + gb1;
      vW2 = mu * vW2 + gW2;
      vb2 = mu * vb2 + gb2;
      net.W1 -= lr * vW1;
      net.b1 -= lr * vb1;
      net.W2 -= lr * vW2;
      net.b2 -= lr * vb2;
    }
    if (!net.W1.allFinite() || !net.W2.allFinite()) {
      throw NumericalError("MLP probe diverged in epoch " +
                           std::to_string(epoch));
    }
  }
  return net;
}

double auc_one_vs_rest(std::span<const double> scores,
                       std::span<const int> labels, int positive_class) {
  if (scores.size() != labels.size()) {
    throw InputError("auc: score and label counts differ");
  }
  std::uint64_t n_pos = 0;
  for (int l : labels) n_pos += (l == positive_class) ? 1 : 0;
  const std::uint64_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw InputError("auc: class " + std::to_string(positive_class) +
                     " is degenerate (needs positive and negative examples)");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U, kept integral so ties stay exact.
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == positive_class ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    i = j;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double leakage_gap_from_aucs(std::span<const double> aucs) {
  double sum = 0.0;
  int count = 0;
  for (double a : aucs) {
    if (std::isnan(a)) continue;
    sum += std::abs(a - 0.5);
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

LeakageReport leakage_report(const Matrix& class_scores,
                             std::span<const int> labels, int num_classes,
                             std::string attribute) {
  if (static_cast<std::size_t>(class_scores.rows()) != labels.size() ||
      class_scores.cols() != num_classes) {
    throw InputError("leakage report: score matrix shape mismatch");
  }
  LeakageReport report;
  report.attribute = std::move(attribute);
  report.num_classes = num_classes;
  report.auc_per_class.assign(static_cast<std::size_t>(num_classes),
                              std::numeric_limits<double>::quiet_NaN());
  std::vector<double> column(labels.size());
  for (int c = 0; c < num_classes; ++c) {
    const auto members = std::count(labels.begin(), labels.end(), c);
    if (members == 0 || members == static_cast<long>(labels.size())) {
      report.excluded_classes.push_back(c);
      continue;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = class_scores(static_cast<Eigen::Index>(i), c);
    }
    report.auc_per_class[static_cast<std::size_t>(c)] =
        auc_one_vs_rest(column, labels, c);
  }
  report.gap = leakage_gap_from_aucs(report.auc_per_class);
  return report;
}

LeakageReport leakage_gap(const MlpProbe& probe, const Matrix& X,
                          std::span<const int> labels) {
  return leakage_report(probe.predict_proba(X), labels, probe.num_classes(),
                        probe.attribute);
}

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Labels gather(std::span<const int> labels, std::span<const std::size_t> rows) {
  Labels out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

LeakageReport audit_leakage(const Matrix& Z, std::span<const int> labels,
                            int num_classes, const std::string& attribute,
                            const MlpConfig& config, double holdout,
                            std::uint64_t split_seed) {
  const auto [fit_rows, hold_rows] =
      holdout_split(static_cast<std::size_t>(Z.rows()), holdout, split_seed);
  const MlpProbe probe =
      fit_mlp_probe(gather_rows(Z, fit_rows), gather(labels, fit_rows),
                    num_classes, config, attribute);
  return leakage_gap(probe, gather_rows(Z, hold_rows),
                     gather(labels, hold_rows));
}

std::string leakage_reports_to_json(std::span<const LeakageReport> reports) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json aucs = nlohmann::json::array();
    for (double a : r.auc_per_class) {
      aucs.push_back(std::isnan(a) ? nlohmann::json(nullptr) : nlohmann::json(a));
    }
    records.push_back({{"attribute", r.attribute},
                       {"m", r.num_classes},
                       {"auc_per_class", aucs},
                       {"excluded_classes", r.excluded_classes},
                       {"gap", r.gap}});
  }
  return nlohmann::json{{"leakage", records}}.dump(2) + "\n";
}

std::vector<LeakageReport> leakage_reports_from_json(const std::string& text) {
  std::vector<LeakageReport> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& rec : doc.at("leakage")) {
      LeakageReport r;
      r.attribute = rec.at("attribute").get<std::string>();
      r.num_classes = rec.at("m").get<int>();
      for (const auto& a : rec.at("auc_per_class")) {
        r.auc_per_class.push_back(a.is_null()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : a.get<double>());
      }
      r.excluded_classes = rec.at("excluded_classes").get<std::vector<int>>();
      r.gap = rec.at("gap").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed leakage report: ") + e.what());
  }
  return out;
}

}  // namespace nullgate
