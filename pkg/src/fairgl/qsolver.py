"""Inner solver for the membership subproblem.

Minimizes trace(Q G) over the convex set

    N = { Q PSD, q_ii = 1, 0 <= q_ij <= 1, |A1 Q| <= B1 }

via three-block consensus splitting with alternating projections: one block
projects onto the PSD cone, one onto the box with pinned diagonal, and one
onto the parity slabs. A final cyclic-projection polish pulls the returned
iterate into the constraint set even when the iteration budget ran out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PartitionRelaxation
from .errors import StructuralError, ValidationError
from .fairness import FairnessPolytope


@dataclass(frozen=True)
class QSolverConfig:
    max_iter: int = 1000
    tol: float = 1e-6
    inner_rho: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.inner_rho <= 0:
            raise ValidationError("inner_rho must be positive")


def project_psd(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: symmetrize and clip eigenvalues at 0."""
    sym = (m + m.T) / 2.0
    evals, evecs = np.linalg.eigh(sym)
    if evals[0] >= 0.0:
        return sym
    clipped = np.maximum(evals, 0.0)
    out = (evecs * clipped) @ evecs.T
    return (out + out.T) / 2.0


def project_box_unit_diag(m: np.ndarray) -> np.ndarray:
    """Clip entries to [0, 1] and pin the diagonal to 1."""
    out = np.clip(m, 0.0, 1.0)
    np.fill_diagonal(out, 1.0)
    return out


class FairnessProjector:
    """Columnwise projection onto { Q : |A1 Q| <= B1 }.

    A1 has one distinct row per demographic group and its rows span an
    (H-1)-dimensional subspace, so each column is split into that subspace
    and its complement; only the low-dimensional coordinates move. With
    zero slack the subspace coordinates are zeroed outright, otherwise
    Dykstra's method runs over the H slabs in reduced coordinates (the
    slabs share the origin, so the intersection is never empty).
    """

    def __init__(self, polytope: FairnessPolytope, tol: float = 1e-10,
                 max_cycles: int = 200):
        self.tol = tol
        self.max_cycles = max_cycles
        groups = polytope.groups
        h = polytope.n_groups
        p = polytope.p
        self.vacuous = h == 1
        if self.vacuous:
            return
        members = [groups == g for g in range(1, h + 1)]
        normals = np.array([mem - mem.sum() / p for mem in members], dtype=float)
        self.bounds = np.array(
            [polytope.epsilon[mem].min() for mem in members], dtype=float
        )
        # orthonormal rows spanning the parity subspace (rank H-1)
        _, svals, vt = np.linalg.svd(normals, full_matrices=False)
        rank = int(np.sum(svals > 1e-12 * svals[0]))
        self.basis = vt[:rank]
        self.reduced = normals @ self.basis.T
        self.reduced_sq = np.sum(self.reduced**2, axis=1)
        self.exact_parity = bool(np.all(self.bounds == 0.0))
        if rank == 1:
            # two groups: the slabs intersect in one interval, exact in
            # a single clip
            alpha = self.reduced[:, 0]
            self.interval = float(np.min(self.bounds / np.abs(alpha)))
        else:
            self.interval = None

    def __call__(self, m: np.ndarray) -> np.ndarray:
        if self.vacuous:
            return np.array(m, copy=True)
        coords = self.basis @ m
        if self.exact_parity:
            return m - self.basis.T @ coords
        if self.interval is not None:
            fixed = np.clip(coords, -self.interval, self.interval)
        else:
            fixed = self._project_reduced(coords.copy())
        return m + self.basis.T @ (fixed - coords)

    def _project_reduced(self, coords: np.ndarray) -> np.ndarray:
        """Dykstra over the H slabs in reduced coordinates."""
        from ._kernels import dykstra_slabs

        x = np.ascontiguousarray(coords)
        dykstra_slabs(x, self.reduced, self.reduced_sq, self.bounds,
                      self.tol, self.max_cycles)
        return x

    def max_violation(self, q: np.ndarray) -> float:
        if self.vacuous:
            return 0.0
        coords = self.basis @ q
        dev = np.abs(self.reduced @ coords) - self.bounds[:, None]
        return float(max(dev.max(), 0.0))


def _constraint_violations(q, fair_proj, target_mass=None):
    diag_v = float(np.abs(np.diag(q) - 1.0).max())
    box_v = float(max(-q.min(), q.max() - 1.0, 0.0))
    lam_min = float(np.linalg.eigvalsh((q + q.T) / 2.0).min())
    psd_v = max(-lam_min, 0.0)
    mass_v = 0.0
    if target_mass is not None:
        mass_v = abs(float(q.sum()) - target_mass) / q.shape[0] ** 2
    return max(diag_v, box_v, psd_v, mass_v, fair_proj.max_violation(q))


def solve_q_subproblem(
    g_omega: np.ndarray,
    polytope: FairnessPolytope,
    cfg: QSolverConfig | None = None,
    warm_start: np.ndarray | None = None,
    target_mass: float | None = None,
) -> tuple[PartitionRelaxation, dict]:
    """Minimize trace(Q G) over the membership set N.

    ``target_mass`` optionally pins the total entry sum <J, Q>. The bare
    set N always contains the all-ones matrix, which is the degenerate
    minimizer for graph-like couplings; pinning the mass to the value of
    a balanced K-way partition (p^2/K) removes it. The outer solver
    supplies this; leave None for the unnormalized set.

    Returns (solution, info); ``info['converged']`` is False when the
    iteration budget ran out (the best iterate is still returned after a
    feasibility polish). Deterministic for fixed inputs.
    """
    cfg = cfg or QSolverConfig()
    g_in = np.asarray(g_omega, dtype=float)
    p = polytope.p
    if g_in.shape != (p, p):
        raise ValidationError(f"G must be {p}x{p}, got {g_in.shape}")
    if np.abs(g_in - g_in.T).max() > 1e-10 * max(1.0, np.abs(g_in).max()):
        raise ValidationError("G must be symmetric")
    if target_mass is not None:
        # feasible masses range from the pinned diagonal to the full box
        target_mass = float(min(max(target_mass, p), p * p))

    # the diagonal of Q is pinned, so dropping the diagonal of G shifts the
    # objective by a constant and leaves the minimizer unchanged
    g = (g_in + g_in.T) / 2.0
    np.fill_diagonal(g, 0.0)

    fair_proj = FairnessProjector(polytope)

    def project_mass(m):
        if target_mass is None:
            return np.array(m, copy=True)
        return m + (target_mass - float(m.sum())) / (p * p)

    projections = [project_psd, project_box_unit_diag, fair_proj, project_mass]
    n_blocks = len(projections)

    if warm_start is not None and "x" in getattr(warm_start, "keys", lambda: ())():
        x = np.array(warm_start["x"], dtype=float)
        z = [np.array(m, copy=True) for m in warm_start["z"]]
        u = [np.array(m, copy=True) for m in warm_start["u"]]
        rho = float(warm_start["rho"])
        # track the coupling scale across warm calls (the scaled duals
        # must be rescaled with the penalty)
        rho_target = cfg.inner_rho * 0.1 * max(1.0, float(np.abs(g).max()))
        if rho_target > 2.0 * rho or rho_target < 0.5 * rho:
            for i in range(len(u)):
                u[i] *= rho / rho_target
            rho = rho_target
    else:
        x = np.eye(p) if warm_start is None else np.array(warm_start, dtype=float)
        z = [proj(x) for proj in projections]
        u = [np.zeros((p, p)) for _ in range(n_blocks)]
        rho = cfg.inner_rho * 0.1 * max(1.0, float(np.abs(g).max()))

    over_relax = 1.7
    primal_hist: list[float] = []
    combined_hist: list[float] = []
    converged = False
    best_primal = np.inf
    iterations = 0
    for it in range(cfg.max_iter):
        iterations = it + 1
        x_prev = x
        acc = -g / rho
        for i in range(n_blocks):
            acc += z[i] - u[i]
        x = acc / n_blocks
        primal = 0.0
        for i in range(n_blocks):
            x_hat = over_relax * x + (1.0 - over_relax) * z[i]
            z[i] = projections[i](x_hat + u[i])
            u[i] += x_hat - z[i]
            primal = max(primal, float(np.linalg.norm(x - z[i])))
        dual = float(np.linalg.norm(x - x_prev)) * np.sqrt(n_blocks)
        scale = max(1.0, float(np.linalg.norm(x)))
        primal_hist.append(primal)
        combined_hist.append(max(primal, dual) / scale)
        best_primal = min(best_primal, primal)
        if primal > 1e6 and primal > 1e3 * max(best_primal, 1e-30):
            raise StructuralError(
                "membership projection diverged; constraint set is "
                "numerically infeasible"
            )
        if max(primal, dual) <= cfg.tol * scale:
            converged = True
            break

    # cyclic-projection polish: pull the iterate into the constraint set
    q = (x + x.T) / 2.0
    polish_tol = min(cfg.tol, 1e-8)
    for _ in range(40):
        if _constraint_violations(q, fair_proj, target_mass) <= polish_tol:
            break
        for _ in range(5):
            q = fair_proj(project_mass(project_box_unit_diag(project_psd(q))))
            q = (q + q.T) / 2.0

    violation = _constraint_violations(q, fair_proj, target_mass)
    val_tol = max(10.0 * violation, 1e-9)
    solution = PartitionRelaxation(q, tol=val_tol)
    info = {
        "converged": converged,
        "iterations": iterations,
        "objective": float(np.sum(q * g_in)),
        "primal_residuals": primal_hist,
        "combined_residuals": combined_hist,
        "constraint_violation": violation,
        "warm_state": {"x": x, "z": z, "u": u, "rho": rho},
    }
    return solution, info
