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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nullgate/embedding_io.hpp"
#include "nullgate/gated_adapter.hpp"
#include "nullgate/inlp.hpp"
#include "nullgate/kernel_lift.hpp"
#include "nullgate/probes.hpp"
#include "nullgate/synth.hpp"

namespace py = pybind11;
using namespace nullgate;

namespace {

py::dict report_to_dict(const LeakageReport& r) {
  py::dict d;
  d["attribute"] = r.attribute;
  d["num_classes"] = r.num_classes;
  d["auc_per_class"] = r.auc_per_class;
  d["excluded_classes"] = r.excluded_classes;
  d["gap"] = r.gap;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kernelized null-space debiasing and gated low-rank adapters";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

  py::class_<RffSpec>(m, "RffSpec")
      .def_readonly("omega", &RffSpec::omega)
      .def_readonly("phase", &RffSpec::phase)
      .def_readonly("sigma", &RffSpec::sigma)
      .def_readonly("eta", &RffSpec::eta)
      .def_readonly("seed", &RffSpec::seed)
      .def_property_readonly("input_dim", &RffSpec::input_dim)
      .def_property_readonly("feature_dim", &RffSpec::feature_dim)
      .def_property_readonly("lifted_dim", &RffSpec::lifted_dim)
      .def("id", &RffSpec::id);

  m.def("sample_rff", &sample_rff, py::arg("d"), py::arg("D"), py::arg("sigma"),
        py::arg("eta") = 0.0, py::arg("seed") = 0);
  m.def("identity_lift", &identity_lift, py::arg("d"), py::arg("eta") = 0.0,
        py::arg("seed") = 0);
  m.def("lift_rows", &lift_rows, py::arg("H"), py::arg("spec"));
  m.def("kernel_estimate", &kernel_estimate);
  m.def("gaussian_kernel", &gaussian_kernel);
  m.def("median_bandwidth", &median_bandwidth, py::arg("X"), py::arg("seed") = 0,
        py::arg("max_rows") = 1000);

  m.def("nullspace_projector", &nullspace_projector, py::arg("W"),
        py::arg("rank_tolerance") = 1e-8);
  m.def("extract_backbone_block", &extract_backbone_block);
  m.def("compose_projectors",
        [](const std::vector<Matrix>& projectors) {
          std::vector<ProjectorRecord> recs;
          for (const auto& P : projectors) {
            ProjectorRecord r;
            r.attribute = "p" + std::to_string(recs.size());
            r.P = P;
            recs.push_back(std::move(r));
          }
          const CompositeProjector c = compose_projectors(recs);
          return py::make_tuple(c.P, c.intersection_dim, c.total_loss);
        },
        "Returns (P_star, intersection_dim, total_loss).");

  m.def("auc_one_vs_rest",
        [](const std::vector<double>& scores, const std::vector<int>& labels,
           int positive) { return auc_one_vs_rest(scores, labels, positive); });
  m.def("leakage_report",
        [](const Matrix& scores, const std::vector<int>& labels, int m_classes) {
          return report_to_dict(leakage_report(scores, labels, m_classes));
        });
  m.def("audit_leakage",
        [](const Matrix& Z, const std::vector<int>& labels, int m_classes,
           std::uint64_t seed) {
          MlpConfig cfg;
          cfg.seed = seed;
          return report_to_dict(
              audit_leakage(Z, labels, m_classes, "attribute", cfg, 0.2, seed));
        },
        py::arg("Z"), py::arg("labels"), py::arg("num_classes"),
        py::arg("seed") = 0);

  m.def("fit_projector",
        [](const Matrix& X, const std::vector<int>& labels, int m_classes,
           Eigen::Index D, double sigma, double eta, double tau,
           std::uint64_t seed) {
          EmbeddingSet set;
          set.X = X.cast<float>();
          set.attributes.push_back({"attribute", m_classes, labels});
          const RffSpec spec = D == 0 ? identity_lift(X.cols(), eta, seed)
                                      : sample_rff(X.cols(), D, sigma, eta, seed);
          InlpConfig cfg;
          cfg.tau = tau;
          MlpConfig audit;
          audit.seed = seed;
          const auto fit =
              fit_attribute_projector(set, "attribute", spec, cfg, audit, seed);
          py::dict out;
          out["P"] = fit.record.P;
          out["gap"] = fit.record.achieved_gap;
          out["converged"] = fit.record.converged;
          out["refinements"] = fit.record.refinements;
          return out;
        },
        py::arg("X"), py::arg("labels"), py::arg("num_classes"),
        py::arg("D") = 0, py::arg("sigma") = 1.0, py::arg("eta") = 0.05,
        py::arg("tau") = 0.05, py::arg("seed") = 0);

  m.def("pool_context", &pool_context);
  m.def("level1_gate", &level1_gate);
  m.def("soft_project",
        [](const Vector& h, const Vector& alpha, const std::vector<Matrix>& Ps) {
          return soft_project(h, alpha, Ps);
        });
  m.def("soft_project_jacobian",
        [](const Vector& alpha, const std::vector<Matrix>& Ps) {
          return soft_project_jacobian(alpha, Ps);
        });
  m.def("level2_gate", &level2_gate);
  m.def("layer_normalize", &layer_normalize, py::arg("c"), py::arg("eps") = 1e-5);

  m.def("generate_synth",
        [](Eigen::Index N, Eigen::Index d, const std::vector<py::dict>& attrs,
           Eigen::Index n_items, double task_correlation, std::uint64_t seed) {
          SynthConfig cfg;
          cfg.N = N;
          cfg.d = d;
          cfg.n_items = n_items;
          cfg.task_correlation = task_correlation;
          cfg.seed = seed;
          for (const auto& a : attrs) {
            SynthAttribute sa;
            sa.name = a["name"].cast<std::string>();
            sa.num_classes = a.contains("m") ? a["m"].cast<int>() : 2;
            sa.encoding = encoding_from_name(
                a.contains("encoding") ? a["encoding"].cast<std::string>()
                                       : std::string("linear"));
            sa.strength = a.contains("strength") ? a["strength"].cast<double>() : 1.0;
            cfg.attributes.push_back(sa);
          }
          const SynthBundle b = generate_bundle(cfg);
          py::dict labels;
          for (const auto& a : b.data.attributes) labels[a.name.c_str()] = a.labels;
          py::dict out;
          out["X"] = Matrix(b.data.as_double());
          out["labels"] = labels;
          out["targets"] = *b.data.task_labels;
          out["items"] = b.items;
          return out;
        },
        py::arg("N"), py::arg("d"), py::arg("attributes"),
        py::arg("n_items") = 200, py::arg("task_correlation") = 0.3,
        py::arg("seed") = 0);
}
