import numpy as np
import pytest

import fairgl
from fairgl import polytope_from_groups
from fairgl.qsolver import (FairnessProjector, QSolverConfig, project_psd,
                            project_box_unit_diag, solve_q_subproblem)
from oracles import partition_matrix, set_partitions


def block_coupling(p, blocks, strength=-0.9):
    omega = np.eye(p) * 2.0
    for block in blocks:
        for i in block:
            for j in block:
                if i != j:
                    omega[i, j] = strength
    return omega @ omega


def test_identity_objective_trace_is_p():
    poly = polytope_from_groups([1, 2, 1, 2], 0.0)
    q, info = solve_q_subproblem(np.eye(4), poly,
                                 QSolverConfig(max_iter=3000, tol=1e-9))
    assert np.trace(q.values) == pytest.approx(4.0, abs=1e-7)


def test_block_structure_recovered():
    g = block_coupling(4, [(0, 1), (2, 3)])
    poly = polytope_from_groups([1, 2, 1, 2], 0.0)
    q, info = solve_q_subproblem(g, poly, QSolverConfig(max_iter=5000, tol=1e-9),
                                 target_mass=8.0)
    within = (q.values[0, 1] + q.values[2, 3]) / 2
    across = (q.values[0, 2] + q.values[0, 3] + q.values[1, 2]
              + q.values[1, 3]) / 4
    assert within > across + 0.3


def test_relaxation_lower_bounds_discrete_partitions():
    rng = np.random.default_rng(0)
    for p, h in ((4, 2), (6, 2)):
        groups = 1 + (np.arange(p) % h)
        poly = polytope_from_groups(groups, 1e6)  # fairness vacuous bound
        omega = rng.standard_normal((p, p)) * 0.4
        omega = (omega + omega.T) / 2
        np.fill_diagonal(omega, 2.0)
        g = omega @ omega
        q, info = solve_q_subproblem(
            g, poly, QSolverConfig(max_iter=8000, tol=1e-9))
        relaxed = info["objective"]
        best = np.inf
        for labels in set_partitions(p):
            val = float(np.sum(partition_matrix(labels) * g))
            best = min(best, val)
        assert relaxed <= best + 1e-6
        assert info["constraint_violation"] <= 1e-6


def test_vacuous_epsilon_matches_single_group():
    rng = np.random.default_rng(1)
    p = 6
    omega = rng.standard_normal((p, p)) * 0.3
    omega = (omega + omega.T) / 2
    np.fill_diagonal(omega, 1.5)
    g = omega @ omega
    cfg = QSolverConfig(max_iter=8000, tol=1e-10)
    q_eps, _ = solve_q_subproblem(
        g, polytope_from_groups([1, 2, 1, 2, 1, 2], 1e9), cfg,
        target_mass=18.0)
    q_h1, _ = solve_q_subproblem(
        g, polytope_from_groups(np.ones(p, dtype=int), 0.0), cfg,
        target_mass=18.0)
    assert np.linalg.norm(q_eps.values - q_h1.values) < 1e-5


def test_psd_projection_idempotent_and_nearest():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m = rng.standard_normal((6, 6))
        m = (m + m.T) / 2
        proj = project_psd(m)
        # idempotent
        assert np.abs(project_psd(proj) - proj).max() < 1e-12
        # matches the eigendecomposition construction
        evals, evecs = np.linalg.eigh(m)
        ref = (evecs * np.maximum(evals, 0.0)) @ evecs.T
        assert np.abs(proj - ref).max() < 1e-12
        # Frobenius-nearest among random PSD candidates
        base = np.linalg.norm(m - proj)
        for _ in range(5):
            c = rng.standard_normal((6, 6))
            cand = c @ c.T
            assert np.linalg.norm(m - cand) >= base - 1e-12


def test_box_projection():
    m = np.array([[5.0, -1.0], [0.5, 0.2]])
    out = project_box_unit_diag(m)
    assert np.array_equal(out, np.array([[1.0, 0.0], [0.5, 1.0]]))


def test_fairness_projector_enforces_slabs():
    rng = np.random.default_rng(3)
    for h, eps in ((2, 0.0), (2, 0.05), (3, 0.0), (3, 0.02), (4, 0.01)):
        p = 12
        groups = 1 + (np.arange(p) % h)
        poly = polytope_from_groups(groups, eps)
        proj = FairnessProjector(poly)
        m = rng.standard_normal((p, p))
        out = proj(m)
        assert proj.max_violation(out) <= 1e-8
        # projection is idempotent and never moves feasible points
        again = proj(out)
        assert np.abs(again - out).max() < 1e-8
        feasible = np.ones((p, p)) * 0.5
        assert np.abs(proj(feasible) - feasible).max() < 1e-10


def test_fairness_projection_is_frobenius_nearest():
    # against a dense quadratic program solved by projected subgradient-free
    # check: random feasible candidates are never closer
    rng = np.random.default_rng(4)
    p, h, eps = 8, 3, 0.05
    groups = 1 + (np.arange(p) % h)
    poly = polytope_from_groups(groups, eps)
    proj = FairnessProjector(poly)
    m = rng.standard_normal((p, p))
    out = proj(m)
    base = np.linalg.norm(m - out)
    for _ in range(50):
        cand = proj(out + 0.3 * rng.standard_normal((p, p)))
        assert np.linalg.norm(m - cand) >= base - 1e-8


def test_monotone_residuals_mostly():
    bad = 0
    total = 0
    for seed in range(5):
        local = np.random.default_rng(seed)
        p = 6
        omega = local.standard_normal((p, p)) * 0.4
        omega = (omega + omega.T) / 2
        np.fill_diagonal(omega, 2.0)
        poly = polytope_from_groups(1 + (np.arange(p) % 2), 1e-3)
        _, info = solve_q_subproblem(omega @ omega, poly,
                                     QSolverConfig(max_iter=2000, tol=1e-6),
                                     target_mass=18.0)
        res = info["combined_residuals"]
        for a, b in zip(res, res[1:]):
            total += 1
            if b > a + 1e-14:
                bad += 1
    assert bad <= 0.1 * total


def test_deterministic_given_inputs():
    rng = np.random.default_rng(6)
    p = 5
    omega = rng.standard_normal((p, p))
    omega = (omega + omega.T) / 2
    np.fill_diagonal(omega, 2.0)
    g = omega @ omega
    poly = polytope_from_groups([1, 2, 1, 2, 1], 1e-3)
    cfg = QSolverConfig(max_iter=500, tol=1e-8)
    q1, _ = solve_q_subproblem(g, poly, cfg, target_mass=13.0)
    q2, _ = solve_q_subproblem(g, poly, cfg, target_mass=13.0)
    assert np.array_equal(q1.values, q2.values)


def test_non_symmetric_g_rejected():
    poly = polytope_from_groups([1, 2], 0.0)
    with pytest.raises(fairgl.ValidationError):
        solve_q_subproblem(np.array([[1.0, 2.0], [0.0, 1.0]]), poly)


def test_warm_state_continues():
    rng = np.random.default_rng(7)
    p = 6
    omega = rng.standard_normal((p, p)) * 0.3
    omega = (omega + omega.T) / 2
    np.fill_diagonal(omega, 2.0)
    g = omega @ omega
    poly = polytope_from_groups(1 + (np.arange(p) % 2), 1e-3)
    cfg = QSolverConfig(max_iter=50, tol=1e-10)
    q1, info1 = solve_q_subproblem(g, poly, cfg, target_mass=18.0)
    q2, info2 = solve_q_subproblem(g, poly, cfg,
                                   warm_start=info1["warm_state"],
                                   target_mass=18.0)
    # continuing improves or keeps the residual
    assert info2["combined_residuals"][-1] <= info1["combined_residuals"][0]
