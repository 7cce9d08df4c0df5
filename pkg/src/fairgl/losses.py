"""Loss models and their block updates.

Three losses share one alternating scheme that splits the graph variable
into a smooth copy (theta) and a penalized copy (omega) coupled by a
quadratic consensus term:

* a pseudo-likelihood loss with quadratic community coupling
  G(omega) = omega^2 and closed-form coordinate updates,
* a log-determinant loss with linear coupling G(omega) = omega and an
  eigendecomposition theta update,
* a logistic (binary) pseudo-likelihood with linear coupling and a
  Barzilai-Borwein theta update.

Scaling conventions (fixed package-wide, see individual docstrings):
``gamma_n = gamma * n`` is the consensus weight per off-diagonal pair in
the n-scaled objective, and the sparsity penalty is
``n * rho1 * sum_{i<j} |theta_ij|`` (each edge counted once).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

KINDS = ("fglasso", "fconcord", "fbn")
G_MAPS = ("theta_squared", "theta")
_KIND_TO_G = {"fconcord": "theta_squared", "fglasso": "theta", "fbn": "theta"}


def soft_threshold(alpha: float, beta: float) -> float:
    """sign(alpha) * max(|alpha| - beta, 0); beta must be nonnegative."""
    if beta < 0:
        raise ValidationError(f"threshold must be nonnegative, got {beta}")
    return math.copysign(max(abs(alpha) - beta, 0.0), alpha)


def offdiag_l1(m: np.ndarray) -> float:
    """Sum of |m_ij| over i < j (each edge counted once)."""
    m = np.asarray(m, dtype=float)
    return float(np.abs(m[np.triu_indices_from(m, k=1)]).sum())


@dataclass(frozen=True)
class LossModel:
    """Loss selector with its community-coupling map and penalty weights."""

    kind: str
    rho1: float
    rho2: float
    g_map: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown loss kind {self.kind!r}")
        g_map = self.g_map or _KIND_TO_G[self.kind]
        if g_map not in G_MAPS:
            raise ValidationError(f"unknown coupling map {g_map!r}")
        if g_map != _KIND_TO_G[self.kind]:
            raise ValidationError(
                f"loss {self.kind!r} requires coupling {_KIND_TO_G[self.kind]!r}"
            )
        object.__setattr__(self, "g_map", g_map)
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValidationError("penalties rho1, rho2 must be nonnegative")

    def g(self, omega: np.ndarray) -> np.ndarray:
        """Community coupling map G applied to the penalized graph copy."""
        if self.g_map == "theta_squared":
            return omega @ omega
        return np.array(omega, copy=True)

    @property
    def needs_binary(self) -> bool:
        return self.kind == "fbn"


@dataclass
class AdmmState:
    """Mutable solver state: primal blocks, dual block and the dual weight."""

    theta: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    w: np.ndarray
    gamma: float

    def __post_init__(self):
        p = self.theta.shape[0]
        for name in ("theta", "omega", "q", "w"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (p, p):
                raise ValidationError(f"{name} must be {p}x{p}, got {arr.shape}")
            setattr(self, name, arr)
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> "AdmmState":
        return AdmmState(
            self.theta.copy(), self.omega.copy(), self.q.copy(),
            self.w.copy(), self.gamma,
        )


# ---------------------------------------------------------------------------
# quadratic-coupling loss (coordinate updates)
# ---------------------------------------------------------------------------

def fconcord_objective(theta, q, s, rho1, rho2, n) -> float:
    """Full objective for the quadratic-coupling pseudo-likelihood loss.

    (n/2) [ -log|diag(theta)^2| + tr(((1+rho2) S + rho2 Q) theta^2) ]
    + rho1 sum_{i<j} |theta_ij|

    The l1 term is unscaled and counts each edge once, matching the
    coordinate-update thresholds used by the solver.
    """
    th = _values(theta)
    qm = _values(q)
    diag = np.diag(th)
    if np.any(diag <= 0):
        raise ValidationError("theta diagonal must be strictly positive")
    th2 = th @ th
    fit = -2.0 * float(np.log(diag).sum())
    fit += float(np.sum(((1.0 + rho2) * s + rho2 * qm) * th2))
    return 0.5 * n * fit + rho1 * offdiag_l1(th)


def upsilon_theta_concord(theta, state: AdmmState, s, rho2, n) -> float:
    """Theta-block augmented sub-objective for the quadratic-coupling loss.

    (n/2) [ -log|diag(theta)^2| + (1+rho2) tr(S theta^2) ]
    + (n gamma_n / 2) sum_{i<=j} (theta_ij - omega_ij + w_ij)^2
    """
    th = np.asarray(theta, dtype=float)
    diag = np.diag(th)
    if np.any(diag <= 0):
        return np.inf
    gamma_n = state.gamma * n
    fit = -2.0 * float(np.log(diag).sum()) + (1.0 + rho2) * float(np.sum(s * (th @ th)))
    resid = th - state.omega + state.w
    iu = np.triu_indices_from(resid)
    prox = float(np.sum(resid[iu] ** 2))
    return 0.5 * n * fit + 0.5 * n * gamma_n * prox


def upsilon_omega_concord(omega, state: AdmmState, rho1, rho2, n) -> float:
    """Omega-block augmented sub-objective for the quadratic-coupling loss.

    (n rho2 / 2) tr(Q omega^2) + rho1 sum_{i<j} |omega_ij|
    + (n gamma_n / 2) sum_{i<=j} (theta_ij - omega_ij + w_ij)^2
    """
    om = np.asarray(omega, dtype=float)
    gamma_n = state.gamma * n
    fit = 0.5 * rho2 * float(np.sum(state.q * (om @ om)))
    resid = state.theta - om + state.w
    iu = np.triu_indices_from(resid)
    prox = 0.5 * gamma_n * float(np.sum(resid[iu] ** 2))
    return n * (fit + prox) + rho1 * offdiag_l1(om)


def concord_update_theta(state: AdmmState, s, rho2, n, i, j) -> float:
    """Exact minimizer of the theta sub-objective in coordinate (i, j).

    Diagonal entries take the positive root of the scalar quadratic; the
    off-diagonal update is linear. gamma_n = gamma * n.
    """
    if i > j:
        raise ValidationError("need i <= j")
    th = state.theta
    gamma_n = state.gamma * n
    m = state.omega - state.w
    if i == j:
        a = (1.0 + rho2) * s[i, i] + gamma_n
        coup = float(th[i] @ s[:, i]) - th[i, i] * s[i, i]
        b = (1.0 + rho2) * coup - gamma_n * m[i, i]
        assert a > 0
        return (-b + math.sqrt(b * b + 4.0 * a)) / (2.0 * a)
    a = (1.0 + rho2) * (s[i, i] + s[j, j]) + gamma_n
    coup = float(th[i] @ s[:, j]) + float(th[j] @ s[:, i]) \
        - th[i, j] * (s[i, i] + s[j, j])
    b = (1.0 + rho2) * coup - gamma_n * m[i, j]
    return -b / a


def concord_update_omega(state: AdmmState, rho1, rho2, n, i, j) -> float:
    """Exact minimizer of the omega sub-objective in coordinate (i, j).

    Off-diagonals pass through soft_threshold with threshold
    rho1 / (n (rho2 (q_ii + q_jj) + gamma_n)).
    """
    if i > j:
        raise ValidationError("need i <= j")
    om, qm = state.omega, state.q
    gamma_n = state.gamma * n
    m2 = state.theta + state.w
    if i == j:
        c = rho2 * qm[i, i] + gamma_n
        coup = float(om[i] @ qm[:, i]) - om[i, i] * qm[i, i]
        d = rho2 * coup - gamma_n * m2[i, i]
        return -d / c
    c = rho2 * (qm[i, i] + qm[j, j]) + gamma_n
    coup = float(om[i] @ qm[:, j]) + float(om[j] @ qm[:, i]) \
        - om[i, j] * (qm[i, i] + qm[j, j])
    d = rho2 * coup - gamma_n * m2[i, j]
    return soft_threshold(-d / c, rho1 / (n * c))


def concord_theta_descent(state: AdmmState, s, rho2, n,
                          max_sweeps=50, tol=1e-6) -> tuple[np.ndarray, int]:
    """Coordinate descent to the theta sub-objective minimum.

    Sweeps visit the diagonal first, then off-diagonals in lexicographic
    order, until the largest relative coordinate change drops below tol.
    """
    from ._kernels import concord_theta_sweeps

    theta = np.array(state.theta, copy=True)
    m = np.ascontiguousarray(state.omega - state.w)
    sweeps = concord_theta_sweeps(
        theta, np.ascontiguousarray(s), m,
        rho2, state.gamma * n, max_sweeps, tol,
    )
    return theta, int(sweeps)


def concord_omega_descent(state: AdmmState, rho1, rho2, n,
                          max_sweeps=50, tol=1e-6) -> tuple[np.ndarray, int]:
    """Coordinate descent to the omega sub-objective minimum."""
    from ._kernels import concord_omega_sweeps

    omega = np.array(state.omega, copy=True)
    m2 = np.ascontiguousarray(state.theta + state.w)
    sweeps = concord_omega_sweeps(
        omega, np.ascontiguousarray(state.q), m2,
        rho1 / n, rho2, state.gamma * n, max_sweeps, tol,
    )
    return omega, int(sweeps)


# ---------------------------------------------------------------------------
# log-determinant loss (eigendecomposition update)
# ---------------------------------------------------------------------------

def glasso_objective(theta, q, s, rho1, rho2, n) -> float:
    """(n/2)[-log det(theta) + tr(((1+rho2) S + rho2 Q) theta)]
    + rho1 sum_{i<j}|theta_ij|."""
    th = _values(theta)
    qm = _values(q)
    sign, logdet = np.linalg.slogdet(th)
    if sign <= 0:
        raise ValidationError("theta must be positive definite")
    fit = -logdet + float(np.sum(((1.0 + rho2) * s + rho2 * qm) * th))
    return 0.5 * n * fit + rho1 * offdiag_l1(th)


def upsilon_theta_glasso(theta, state: AdmmState, s, rho2, n) -> float:
    """Theta-block sub-objective for the log-determinant loss
    (consensus weight n gamma_n / 4 on the full Frobenius norm)."""
    th = np.asarray(theta, dtype=float)
    sign, logdet = np.linalg.slogdet(th)
    if sign <= 0:
        return np.inf
    gamma_f = 0.25 * n * state.gamma * n
    fit = 0.5 * n * (-logdet + (1.0 + rho2) * float(np.sum(s * th)))
    return fit + gamma_f * float(np.sum((th - state.omega + state.w) ** 2))


def glasso_theta_update(state: AdmmState, s, rho2, n) -> np.ndarray:
    """Closed-form minimizer of the log-determinant sub-objective.

    Stationarity gives theta - beta theta^{-1} = M - beta (1+rho2) S with
    beta = 1/gamma_n and M = omega - w; the solution shares eigenvectors
    with the right-hand side and maps each eigenvalue d to
    (d + sqrt(d^2 + 4 beta)) / 2, which is positive definite.
    """
    gamma_n = state.gamma * n
    beta = 1.0 / gamma_n
    m = state.omega - state.w
    target = (m + m.T) / 2.0 - beta * (1.0 + rho2) * s
    try:
        evals, evecs = np.linalg.eigh(target)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    phi = (evals + np.sqrt(evals**2 + 4.0 * beta)) / 2.0
    out = (evecs * phi) @ evecs.T
    return (out + out.T) / 2.0


# ---------------------------------------------------------------------------
# logistic (binary) pseudo-likelihood
# ---------------------------------------------------------------------------

def _log1pexp(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) with the standard stable branch for large x."""
    out = np.empty_like(x, dtype=float)
    pos = x > 0
    out[pos] = x[pos] + np.log1p(np.exp(-x[pos]))
    out[~pos] = np.log1p(np.exp(x[~pos]))
    return out


def _logistic_fields(theta: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-observation conditional fields eta_ij = theta_jj
    + sum_{j' != j} theta_jj' y_ij'."""
    diag = np.diag(theta)
    return y @ theta - y * diag + diag


def ising_pseudo_likelihood(theta, data) -> float:
    """Negative log-pseudo-likelihood per observation for binary data.

    -sum_{j,j'} theta_jj' s_jj'
    + (1/n) sum_i sum_j log(1 + exp(theta_jj + sum_{j'!=j} theta_jj' y_ij'))
    """
    th = _values(theta)
    y = data.observations
    if data.kind != "binary":
        raise ValidationError("pseudo-likelihood requires binary data")
    n = y.shape[0]
    s = (y.T @ y) / n
    eta = _logistic_fields(th, y)
    return float(-np.sum(th * s) + _log1pexp(eta).sum() / n)


def fbn_smooth_objective(theta, state: AdmmState, y, s) -> float:
    """n-scaled smooth part of the binary theta sub-objective:
    n L(theta; Y) + (n gamma_n / 4) ||theta - omega + w||_F^2."""
    th = np.asarray(theta, dtype=float)
    n = y.shape[0]
    gamma_f = 0.25 * n * state.gamma * n
    eta = _logistic_fields(th, y)
    fit = -n * float(np.sum(th * s)) + float(_log1pexp(eta).sum())
    return fit + gamma_f * float(np.sum((th - state.omega + state.w) ** 2))


def fbn_smooth_gradient(theta, state: AdmmState, y, s) -> np.ndarray:
    """Symmetrized gradient of :func:`fbn_smooth_objective`."""
    th = np.asarray(theta, dtype=float)
    n = y.shape[0]
    gamma_f = 0.5 * n * state.gamma * n
    eta = _logistic_fields(th, y)
    prob = 1.0 / (1.0 + np.exp(-eta))
    grad = prob.T @ y
    np.fill_diagonal(grad, prob.sum(axis=0))
    grad = grad - n * s
    grad = (grad + grad.T) / 2.0
    return grad + gamma_f * (th - state.omega + state.w)


@dataclass(frozen=True)
class BBConfig:
    """Barzilai-Borwein settings for the binary theta update.

    ``tol`` is relative: stop when ||grad||_F <= tol * (1 + initial norm).
    Steps alternate the two BB formulas, safeguarded to
    [step_min, step_max], with nonmonotone Armijo backtracking over a
    sliding window. Iterates are projected to keep the diagonal at or
    above ``diag_floor`` (the graph constraint set requires a positive
    diagonal).
    """

    max_iter: int = 200
    tol: float = 1e-6
    window: int = 5
    armijo: float = 1e-4
    step_min: float = 1e-10
    step_max: float = 1e10
    diag_floor: float = 1e-6


def fbn_theta_update(state: AdmmState, data, s,
                     bb_cfg: BBConfig | None = None) -> tuple[np.ndarray, bool]:
    """Approximate minimizer of the binary theta sub-objective.

    Runs safeguarded alternating Barzilai-Borwein steps with nonmonotone
    backtracking; every accepted iterate improves on the warm start.
    Returns (theta, converged).
    """
    cfg = bb_cfg or BBConfig()
    y = data.observations
    if data.kind != "binary":
        raise ValidationError("binary theta update requires binary data")
    n = y.shape[0]
    theta = np.array(state.theta, copy=True)
    grad = fbn_smooth_gradient(theta, state, y, s)
    gnorm0 = float(np.linalg.norm(grad))
    target = cfg.tol * (1.0 + gnorm0)
    fval = fbn_smooth_objective(theta, state, y, s)
    history = [fval]
    # inverse curvature scale of logistic term plus consensus weight
    step = 1.0 / (0.25 * n + 0.5 * n * state.gamma * n + 1.0)
    prev_theta = None
    prev_grad = None
    converged = gnorm0 <= target
    for it in range(cfg.max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= target:
            converged = True
            break
        if prev_theta is not None:
            dx = theta - prev_theta
            dg = grad - prev_grad
            sg = float(np.sum(dx * dg))
            if sg > 0:
                if it % 2 == 0:
                    step = float(np.sum(dx * dx)) / sg
                else:
                    step = sg / float(np.sum(dg * dg))
            step = min(max(step, cfg.step_min), cfg.step_max)
        fmax = max(history[-cfg.window:])
        alpha = step
        accepted = False
        for _ in range(60):
            cand = theta - alpha * grad
            diag = np.diag(cand)
            if np.any(diag < cfg.diag_floor):
                cand = cand.copy()
                np.fill_diagonal(cand, np.maximum(diag, cfg.diag_floor))
            fcand = fbn_smooth_objective(cand, state, y, s)
            if fcand <= fmax - cfg.armijo * alpha * gnorm**2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        prev_theta, prev_grad = theta, grad
        theta = cand
        fval = fcand
        history.append(fval)
        grad = fbn_smooth_gradient(theta, state, y, s)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("binary theta update produced non-finite values",
                             state=prev_theta)
    return (theta + theta.T) / 2.0, converged


def fbn_objective(theta, q, y, s, rho1, rho2) -> float:
    """Full objective for the binary loss:
    n L(theta; Y) + (n rho2 / 2) tr(Q theta) + rho1 sum_{i<j}|theta_ij|."""
    th = _values(theta)
    qm = _values(q)
    n = y.shape[0]
    eta = _logistic_fields(th, y)
    fit = -n * float(np.sum(th * s)) + float(_log1pexp(eta).sum())
    return fit + 0.5 * n * rho2 * float(np.sum(qm * th)) + rho1 * offdiag_l1(th)


# ---------------------------------------------------------------------------
# linear-coupling omega update (shared by the log-det and binary losses)
# ---------------------------------------------------------------------------

def upsilon_omega_linear(omega, state: AdmmState, rho1, rho2, n) -> float:
    """Omega-block sub-objective with linear coupling:
    (n rho2/2) tr(Q omega) + rho1 sum_{i<j}|omega_ij|
    + (n gamma_n/4) ||theta - omega + w||_F^2."""
    om = np.asarray(omega, dtype=float)
    gamma_f = 0.25 * n * state.gamma * n
    fit = 0.5 * n * rho2 * float(np.sum(state.q * om))
    prox = gamma_f * float(np.sum((state.theta - om + state.w) ** 2))
    return fit + prox + rho1 * offdiag_l1(om)


def fbn_omega_update(state: AdmmState, rho1, rho2, n) -> np.ndarray:
    """Entrywise minimizer of the linear-coupling omega sub-objective.

    Off-diagonals: S(theta_ij + w_ij - (rho2/gamma_n) q_ij,
    rho1/(n gamma_n)); diagonal: theta_ii + w_ii - rho2 q_ii / gamma_n,
    no shrinkage.
    """
    gamma_n = state.gamma * n
    m2 = state.theta + state.w
    shifted = m2 - (rho2 / gamma_n) * state.q
    thr = rho1 / (n * gamma_n)
    out = np.sign(shifted) * np.maximum(np.abs(shifted) - thr, 0.0)
    np.fill_diagonal(out, np.diag(shifted))
    return out


def _values(x) -> np.ndarray:
    """Accept either a wrapper with .values or a plain array."""
    vals = getattr(x, "values", x)
    return np.asarray(vals, dtype=float)
