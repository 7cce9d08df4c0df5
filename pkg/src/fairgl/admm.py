"""Outer solver loop: alternate the membership, penalized-graph and
smooth-graph blocks with a dual ascent step until the relative-change
stopping rule is met."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .clustering import extract_communities, select_k
from .data import (Dataset, FitResult, PartitionRelaxation, PrecisionEstimate,
                   sample_covariance)
from .errors import NumericalError, ValidationError
from .fairness import FairnessPolytope
from .qsolver import QSolverConfig, solve_q_subproblem

STAGNATION_WINDOW = 50
STAGNATION_FACTOR = 0.99
MAX_GAMMA_DOUBLINGS = 60
GAMMA_CAP = 1e8


@dataclass(frozen=True)
class FitConfig:
    """Outer-loop hyperparameters.

    ``nu`` bounds the larger of the squared relative changes of the two
    primal blocks; ``gamma`` is doubled (with a dual restart) whenever the
    consensus residual stagnates for 50 iterations.
    """

    rho1: float = 1.0
    rho2: float = 0.05
    gamma: float = 0.01
    nu: float = 1e-5
    max_outer_iter: int = 500
    epsilon: float = 1e-3
    seed: int = 0
    q_cfg: QSolverConfig = field(
        default_factory=lambda: QSolverConfig(max_iter=150, tol=1e-6))
    k: int | None = None
    kmeans_restarts: int = 20

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValidationError("penalties must be nonnegative")
        if self.gamma <= 0 or self.nu <= 0:
            raise ValidationError("gamma and nu must be positive")
        if self.max_outer_iter < 1:
            raise ValidationError("max_outer_iter must be at least 1")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")

    def to_dict(self) -> dict:
        out = {
            "rho1": self.rho1, "rho2": self.rho2, "gamma": self.gamma,
            "nu": self.nu, "max_outer_iter": self.max_outer_iter,
            "epsilon": self.epsilon, "seed": self.seed, "k": self.k,
            "kmeans_restarts": self.kmeans_restarts,
            "q_tol": self.q_cfg.tol, "q_max_iter": self.q_cfg.max_iter,
            "q_inner_rho": self.q_cfg.inner_rho,
        }
        return out


def _objective(model: losses.LossModel, theta, q, s, data, n) -> float:
    if model.kind == "fconcord":
        return losses.fconcord_objective(theta, q, s, model.rho1, model.rho2, n)
    if model.kind == "fglasso":
        return losses.glasso_objective(theta, q, s, model.rho1, model.rho2, n)
    return losses.fbn_objective(theta, q, data.observations, s,
                                model.rho1, model.rho2)


def fit(model: losses.LossModel, data: Dataset, polytope: FairnessPolytope,
        cfg: FitConfig, iter_callback=None) -> FitResult:
    """Run the full alternating scheme and label the communities.

    Per iteration: solve the membership subproblem at the current coupling
    G(omega), update the penalized graph copy, update the smooth graph
    copy, then step the dual W <- W + theta - omega. Stops when
    max(||dTheta||_F^2 / ||Theta||_F^2, ||dQ||_F^2 / ||Q||_F^2) <= nu.

    ``iter_callback`` receives one record per iteration (the dict that
    also lands in the diagnostics), useful for streaming logs.
    """
    if model.needs_binary and data.kind != "binary":
        raise ValidationError("the binary loss requires binary data")
    if not model.needs_binary and data.kind != "continuous":
        raise ValidationError(f"loss {model.kind!r} requires continuous data")
    if polytope.p != data.p:
        raise ValidationError("polytope and data disagree on p")

    n, p = data.n, data.p
    s = sample_covariance(data)
    state = losses.AdmmState(
        theta=np.eye(p), omega=np.eye(p), q=np.eye(p), w=np.zeros((p, p)),
        gamma=cfg.gamma,
    )
    diagnostics: list[dict] = []
    converged = False
    best_primal = np.inf
    best_primal_iter = 0
    window_best = np.inf
    prev_window_best = np.inf
    doublings = 0
    criterion_hits = 0
    last_finite = state.copy()
    q_warm = None

    for it in range(1, cfg.max_outer_iter + 1):
        tic = time.perf_counter()
        theta_prev = state.theta.copy()
        q_prev = state.q.copy()

        g = model.g(state.omega)
        if cfg.k is not None:
            k_mass = max(cfg.k, 1)
        elif it > 1:
            k_mass = max(select_k(state.q, polytope.n_groups), 2)
        else:
            k_mass = 2
        # per-iteration solves run at a loose tolerance tied to nu so the
        # membership block settles instead of wobbling at the solver's
        # noise floor; the final refinement below uses the configured one
        loose_tol = max(cfg.q_cfg.tol, min(1e-3, 0.3 * np.sqrt(cfg.nu)))
        budget = cfg.q_cfg.max_iter if it <= 2 else \
            max(cfg.q_cfg.max_iter // 3, 30)
        q_iter_cfg = QSolverConfig(max_iter=budget, tol=loose_tol,
                                   inner_rho=cfg.q_cfg.inner_rho)
        q_sol, q_info = solve_q_subproblem(g, polytope, q_iter_cfg,
                                           warm_start=q_warm,
                                           target_mass=p * p / k_mass)
        q_warm = q_info["warm_state"]
        state.q = np.array(q_sol.values, copy=True)

        sweep_budget = 50 if it <= 2 else 15
        if model.kind == "fconcord":
            omega_new, _ = losses.concord_omega_descent(
                state, model.rho1, model.rho2, n, max_sweeps=sweep_budget)
        else:
            omega_new = losses.fbn_omega_update(state, model.rho1,
                                                model.rho2, n)
        state.omega = omega_new

        if model.kind == "fconcord":
            theta_new, _ = losses.concord_theta_descent(
                state, s, model.rho2, n, max_sweeps=sweep_budget)
        elif model.kind == "fglasso":
            theta_new = losses.glasso_theta_update(state, s, model.rho2, n)
        else:
            theta_new, _ = losses.fbn_theta_update(state, data, s)
        state.theta = theta_new

        state.w = state.w + state.theta - state.omega

        dtheta_rel = _rel_change_sq(state.theta, theta_prev)
        dq_rel = _rel_change_sq(state.q, q_prev)
        primal = float(np.linalg.norm(state.theta - state.omega))
        obj = _objective(model, state.theta, state.q, s, data, n)
        record = {
            "iter": it,
            "obj": obj,
            "primal_res": primal,
            "dq_rel": dq_rel,
            "dtheta_rel": dtheta_rel,
            "gamma": state.gamma,
            "q_inner_iters": q_info["iterations"],
            "wall_ms": (time.perf_counter() - tic) * 1e3,
        }
        diagnostics.append(record)
        if iter_callback is not None:
            iter_callback(record)

        if not np.isfinite(obj) or not np.all(np.isfinite(state.theta)):
            raise NumericalError(
                f"objective diverged at iteration {it}", state=last_finite)
        last_finite = state.copy()

        if primal < best_primal * 0.95:
            best_primal_iter = it
        primal_stalled = (it - best_primal_iter) >= 25

        if max(dtheta_rel, dq_rel) <= cfg.nu:
            # accept only when the consensus gap closed as well; the
            # printed rule fires spuriously when gamma is too small to
            # couple the two graph copies (the dual weight must be
            # "sufficiently large")
            criterion_hits += 1
            primal_gate = max(cfg.nu, cfg.nu * float(np.linalg.norm(state.theta)))
            if primal <= primal_gate:
                converged = True
                break
            if primal_stalled or criterion_hits >= 10:
                if doublings < MAX_GAMMA_DOUBLINGS and state.gamma < GAMMA_CAP:
                    state.gamma *= 2.0
                    state.w[:] = 0.0
                    doublings += 1
                    best_primal_iter = it
                    criterion_hits = 0
                    record["gamma_escalated"] = True
                else:
                    break

        best_primal = min(best_primal, primal)
        window_best = min(window_best, primal)
        if it % STAGNATION_WINDOW == 0:
            stagnant = window_best >= STAGNATION_FACTOR * prev_window_best
            if stagnant and doublings < MAX_GAMMA_DOUBLINGS \
                    and state.gamma < GAMMA_CAP:
                state.gamma *= 2.0
                state.w[:] = 0.0
                doublings += 1
                record["gamma_escalated"] = True
            prev_window_best = window_best
            window_best = np.inf

    # refinement pass: the per-iteration budget tracks a moving coupling;
    # the returned membership matrix gets one long solve at the final one
    g = model.g(state.omega)
    if cfg.k is not None:
        k_mass = max(cfg.k, 1)
    else:
        k_mass = max(select_k(state.q, polytope.n_groups), 2)
    refine_cfg = QSolverConfig(max_iter=20 * cfg.q_cfg.max_iter,
                               tol=cfg.q_cfg.tol,
                               inner_rho=cfg.q_cfg.inner_rho)
    q_sol, _ = solve_q_subproblem(g, polytope, refine_cfg,
                                  target_mass=p * p / k_mass)
    state.q = np.array(q_sol.values, copy=True)

    labels = extract_communities(
        state.q, polytope.n_groups, k=cfg.k,
        restarts=cfg.kmeans_restarts, seed=cfg.seed,
    )
    theta_est = PrecisionEstimate((state.theta + state.theta.T) / 2.0)
    q_est = PartitionRelaxation(state.q, tol=max(1e-5, 10 * cfg.q_cfg.tol))
    config_echo = dict(cfg.to_dict(), model=model.kind, rho1=model.rho1,
                       rho2=model.rho2, final_gamma=state.gamma)
    return FitResult(theta=theta_est, q=q_est, labels=labels.labels,
                     diagnostics=diagnostics, config=config_echo,
                     converged=converged)


def _rel_change_sq(new: np.ndarray, old: np.ndarray) -> float:
    denom = float(np.sum(old * old))
    if denom == 0:
        return float(np.sum((new - old) ** 2))
    return float(np.sum((new - old) ** 2) / denom)


def vacuous_polytope(p: int) -> FairnessPolytope:
    """Single-group polytope: the parity constraint restricts nothing."""
    from .fairness import polytope_from_groups

    return polytope_from_groups(np.ones(p, dtype=int), 0.0)
