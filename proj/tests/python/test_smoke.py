# Copyright 2026 The nullgate Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Smoke tests for the Python bindings, checked against numpy oracles."""

import itertools

import numpy as np
import pytest

import nullgate as ng


def test_nullspace_projector_matches_pinv_oracle():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((3, 9))
    P = ng.nullspace_projector(W)
    expected = np.eye(9) - np.linalg.pinv(W) @ W
    np.testing.assert_allclose(P, expected, atol=1e-10)
    np.testing.assert_allclose(W @ P, 0.0, atol=1e-10)


def test_backbone_block_is_leading_block():
    rng = np.random.default_rng(1)
    Phat = ng.nullspace_projector(rng.standard_normal((2, 10)))
    np.testing.assert_array_equal(ng.extract_backbone_block(Phat, 4), Phat[:4, :4])


def test_rff_kernel_estimate_close_to_gaussian():
    x = np.array([0.3, -0.2, 0.5])
    y = np.array([0.1, 0.4, 0.2])
    sigma = 1.3
    exact = np.exp(-np.sum((x - y) ** 2) / (2 * sigma**2))
    assert ng.gaussian_kernel(x, y, sigma) == pytest.approx(exact, abs=1e-12)
    mean = np.mean([ng.kernel_estimate(x, y, ng.sample_rff(3, 2048, sigma, 0.0, s))
                    for s in range(20)])
    assert mean == pytest.approx(exact, abs=0.03)


def test_lift_keeps_backbone_columns_and_identity_lift():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((5, 4))
    spec = ng.sample_rff(4, 16, 1.0, 0.0, 3)
    Z = ng.lift_rows(H, spec)
    assert Z.shape == (5, 20)
    np.testing.assert_allclose(Z[:, :4], H)
    np.testing.assert_array_equal(ng.lift_rows(H, ng.identity_lift(4)), H)


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(3)
    s = np.round(rng.standard_normal(60), 1)
    y = rng.integers(0, 2, 60)
    pos, neg = s[y == 1], s[y == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0
               for a, b in itertools.product(pos, neg))
    assert ng.auc_one_vs_rest(list(s), list(y), 1) == pytest.approx(wins / (len(pos) * len(neg)))


def test_compose_matches_alternating_projections():
    rng = np.random.default_rng(4)
    shared = rng.standard_normal((1, 6))
    P1 = ng.nullspace_projector(np.vstack([shared, rng.standard_normal((1, 6))]))
    P2 = ng.nullspace_projector(np.vstack([shared, rng.standard_normal((1, 6))]))
    P, dim, lost = ng.compose_projectors([P1, P2])
    M = np.eye(6)
    for _ in range(500):
        M = P2 @ P1 @ M
    np.testing.assert_allclose(P, M, atol=1e-6)
    assert dim == 3 and not lost


def test_soft_projection_endpoints_and_gate():
    rng = np.random.default_rng(5)
    Ps = [ng.nullspace_projector(rng.standard_normal((1, 5))) for _ in range(2)]
    h = rng.standard_normal(5)
    np.testing.assert_array_equal(ng.soft_project(h, np.zeros(2), Ps), h)
    # numpy may sum in a different order, so compare to rounding.
    np.testing.assert_allclose(ng.soft_project(h, np.array([0.0, 1.0]), Ps), Ps[1] @ h,
                               rtol=0, atol=1e-14)
    alpha = ng.level1_gate(h, rng.standard_normal((2, 5)))
    assert alpha.sum() == pytest.approx(1.0)
    J = ng.soft_project_jacobian(np.array([0.5, 0.5]), Ps)
    assert np.linalg.svd(J, compute_uv=False).min() > 1e-6


def test_synthetic_linear_leak_is_removed():
    data = ng.generate_synth(2000, 8, [{"name": "a", "m": 2, "strength": 1.0}], 30, 0.3, 1)
    X = np.asarray(data["X"])
    y = list(data["labels"]["a"])
    assert ng.audit_leakage(X, y, 2, 1)["gap"] >= 0.3
    fit = ng.fit_projector(X, y, 2, D=0, tau=0.05, seed=1)
    assert fit["converged"]
    assert ng.audit_leakage(X @ fit["P"], y, 2, 1)["gap"] <= 0.1


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        ng.extract_backbone_block(np.eye(3), 4)
