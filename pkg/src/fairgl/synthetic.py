"""Ground-truth generators: block-model graphs, PD precision matrices,
Gaussian sampling and Gibbs sampling for the binary model."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import Dataset
from .errors import ValidationError

DEFAULT_ZETAS = (0.1, 0.2, 0.3, 0.4)
DEFAULT_WEIGHT_RANGE = (0.1, 3.0)


@dataclass(frozen=True)
class GibbsConfig:
    burn_in: int = 1000
    thin: int = 10

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1:
            raise ValidationError("need burn_in >= 0 and thin >= 1")


@dataclass(frozen=True)
class GroundTruth:
    """A generated graph with its communities and demographic groups."""

    adjacency: np.ndarray
    communities: np.ndarray
    groups: np.ndarray
    seed: int
    theta_true: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=float)
        if not np.array_equal(adj, adj.T) or np.any(np.diag(adj) != 0):
            raise ValidationError("adjacency must be symmetric with zero diagonal")
        if not np.isin(adj, (0.0, 1.0)).all():
            raise ValidationError("adjacency entries must be 0/1")
        if self.theta_true is not None:
            th = np.asarray(self.theta_true, dtype=float)
            off_support = np.abs(th) > 0
            np.fill_diagonal(off_support, False)
            if np.any(off_support & (adj == 0)):
                raise ValidationError("theta support must lie inside the adjacency")
            th.setflags(write=False)
            object.__setattr__(self, "theta_true", th)
        for name in ("adjacency", "communities", "groups"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.adjacency.shape[0]


def assign_communities(p: int, k: int) -> np.ndarray:
    """Contiguous near-equal blocks, ids 1..k."""
    if not 1 <= k <= p:
        raise ValidationError(f"need 1 <= k <= p, got k={k}, p={p}")
    sizes = [p // k + (1 if i < p % k else 0) for i in range(k)]
    return np.repeat(np.arange(1, k + 1), sizes)


def assign_groups(communities: np.ndarray, h: int) -> np.ndarray:
    """Round-robin group ids within each community.

    Keeps every community near-balanced across groups so exact parity
    is achievable.
    """
    communities = np.asarray(communities, dtype=int)
    p = communities.size
    if not 1 <= h <= p:
        raise ValidationError(f"need 1 <= h <= p, got h={h}")
    min_size = min(np.sum(communities == c) for c in np.unique(communities))
    if h > min_size:
        raise ValidationError(
            f"group count {h} exceeds the smallest community size {min_size}"
        )
    groups = np.zeros(p, dtype=int)
    for c in np.unique(communities):
        idx = np.nonzero(communities == c)[0]
        groups[idx] = (np.arange(idx.size) % h) + 1
    return groups


def _edges_from_uniforms(u: np.ndarray, communities: np.ndarray,
                         groups: np.ndarray, zetas) -> np.ndarray:
    """Threshold per-pair uniforms against the four-case edge probabilities.

    Uses u[min(i,j), max(i,j)] for pair (i, j), so permuting nodes together
    with the uniform matrix permutes the generated graph.
    """
    z1, z2, z3, z4 = zetas
    same_c = communities[:, None] == communities[None, :]
    same_g = groups[:, None] == groups[None, :]
    prob = np.where(
        same_c & same_g, z4,
        np.where(~same_c & same_g, z3, np.where(same_c & ~same_g, z2, z1)),
    )
    iu = np.triu_indices_from(prob, k=1)
    adj = np.zeros_like(prob)
    adj[iu] = (u[iu] < prob[iu]).astype(float)
    return adj + adj.T


def generate_sbm(p: int, k: int, h: int, zetas=DEFAULT_ZETAS,
                 seed: int = 0) -> GroundTruth:
    """Block-model graph over k communities and h demographic groups.

    Edge probabilities follow the four-case rule on community/group
    agreement: zeta4 same/same, zeta3 different community same group,
    zeta2 same community different group, zeta1 different/different,
    with 0 <= zeta1 <= zeta2 <= zeta3 <= zeta4 <= 1.
    """
    zetas = tuple(float(z) for z in zetas)
    if len(zetas) != 4:
        raise ValidationError("zetas must have exactly four entries")
    if not (0.0 <= zetas[0] <= zetas[1] <= zetas[2] <= zetas[3] <= 1.0):
        raise ValidationError(
            f"need 0 <= zeta1 <= zeta2 <= zeta3 <= zeta4 <= 1, got {zetas}"
        )
    communities = assign_communities(p, k)
    groups = assign_groups(communities, h)
    rng = np.random.default_rng(seed)
    u = rng.random((p, p))
    adjacency = _edges_from_uniforms(u, communities, groups, zetas)
    meta = {"p": p, "k": k, "h": h, "zetas": list(zetas)}
    return GroundTruth(adjacency=adjacency, communities=communities,
                       groups=groups, seed=seed, meta=meta)


def generate_precision(adjacency: np.ndarray,
                       weight_range=DEFAULT_WEIGHT_RANGE, seed: int = 0,
                       mixed_signs: bool = False) -> np.ndarray:
    """Positive-definite matrix supported on the adjacency.

    Edge weights are uniform on the weight range with negative sign by
    default (attractive, Laplacian-style); node weights from the same
    range are added to the absolute row sums, so the result is strictly
    diagonally dominant with smallest eigenvalue at least the range
    minimum.
    """
    adj = np.asarray(adjacency, dtype=float)
    p = adj.shape[0]
    lo, hi = float(weight_range[0]), float(weight_range[1])
    if not 0 < lo <= hi:
        raise ValidationError(f"invalid weight range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    theta = np.zeros((p, p))
    iu = np.triu_indices(p, k=1)
    edge_mask = adj[iu] > 0
    n_edges = int(edge_mask.sum())
    weights = rng.uniform(lo, hi, size=n_edges)
    signs = -np.ones(n_edges)
    if mixed_signs:
        signs = np.where(rng.random(n_edges) < 0.5, -1.0, 1.0)
    vals = np.zeros(iu[0].size)
    vals[edge_mask] = signs * weights
    theta[iu] = vals
    theta = theta + theta.T
    node_weights = rng.uniform(lo, hi, size=p)
    np.fill_diagonal(theta, np.abs(theta).sum(axis=1) + node_weights)
    return theta


def ising_parameters(adjacency: np.ndarray,
                     weight_range=DEFAULT_WEIGHT_RANGE, seed: int = 0,
                     mixed_signs: bool = False,
                     target_field: float = 1.5) -> np.ndarray:
    """Pairwise binary-model parameters supported on the adjacency.

    Edge weights are drawn from the weight range (negative by default,
    matching the attractive convention of :func:`generate_precision`) and
    rescaled so a site's typical conditional field is about
    ``target_field``; external fields (the diagonal) are zero, keeping
    marginals informative. A Gaussian-style diagonally dominant matrix
    saturates the conditionals and produces near-constant samples.
    """
    adj = np.asarray(adjacency, dtype=float)
    p = adj.shape[0]
    lo, hi = float(weight_range[0]), float(weight_range[1])
    rng = np.random.default_rng(seed)
    theta = np.zeros((p, p))
    iu = np.triu_indices(p, k=1)
    edge_mask = adj[iu] > 0
    n_edges = int(edge_mask.sum())
    weights = rng.uniform(lo, hi, size=n_edges)
    signs = -np.ones(n_edges)
    if mixed_signs:
        signs = np.where(rng.random(n_edges) < 0.5, -1.0, 1.0)
    vals = np.zeros(iu[0].size)
    vals[edge_mask] = signs * weights
    theta[iu] = vals
    theta = theta + theta.T
    # typical conditional field when half the neighbours are active
    mean_half_row = float(np.abs(theta).sum(axis=1).mean()) / 2.0
    if mean_half_row > 0:
        theta *= target_field / mean_half_row
    return theta


def sample_gaussian(theta_true: np.ndarray, n: int, seed: int = 0,
                    demographics=None) -> Dataset:
    """n i.i.d. zero-mean draws with covariance inverse(theta)."""
    theta = np.asarray(theta_true, dtype=float)
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("theta must be positive definite") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, theta.shape[0]))
    # y = L^{-T} z has covariance (L L^T)^{-1} = theta^{-1}
    y = scipy.linalg.solve_triangular(chol, z.T, lower=True, trans="T").T
    return Dataset(y, kind="continuous", demographics=demographics)


def sample_ising(theta_true: np.ndarray, n: int,
                 gibbs_cfg: GibbsConfig | None = None, seed: int = 0,
                 demographics=None) -> Dataset:
    """n binary samples via systematic-scan Gibbs with burn-in and thinning.

    Conditionals are logistic in theta_jj + sum_{k != j} theta_jk y_k.
    Mixing guidance: keep p at a few hundred or below.
    """
    from ._kernels import gibbs_chain

    cfg = gibbs_cfg or GibbsConfig()
    theta = np.ascontiguousarray(theta_true, dtype=float)
    p = theta.shape[0]
    rng = np.random.default_rng(seed)
    init = rng.integers(0, 2, size=p).astype(float)
    total = (cfg.burn_in + n * cfg.thin) * p
    uniforms = rng.random(total)
    samples = gibbs_chain(theta, init, uniforms, n, cfg.burn_in, cfg.thin)
    return Dataset(samples, kind="binary", demographics=demographics)


def save_ground_truth(gt: GroundTruth, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    fmt = dict(fmt="%.12g", delimiter=",")
    if gt.theta_true is not None:
        np.savetxt(os.path.join(out_dir, "theta_true.csv"), gt.theta_true, **fmt)
    np.savetxt(os.path.join(out_dir, "adjacency.csv"), gt.adjacency,
               fmt="%d", delimiter=",")
    np.savetxt(os.path.join(out_dir, "communities.csv"), gt.communities,
               fmt="%d", delimiter=",")
    np.savetxt(os.path.join(out_dir, "groups.csv"), gt.groups,
               fmt="%d", delimiter=",")
    meta = dict(gt.meta)
    meta["seed"] = gt.seed
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_ground_truth(out_dir) -> GroundTruth:
    adjacency = np.loadtxt(os.path.join(out_dir, "adjacency.csv"), delimiter=",")
    communities = np.loadtxt(
        os.path.join(out_dir, "communities.csv"), delimiter=","
    ).astype(int)
    groups = np.loadtxt(os.path.join(out_dir, "groups.csv"),
                        delimiter=",").astype(int)
    theta_path = os.path.join(out_dir, "theta_true.csv")
    theta = np.loadtxt(theta_path, delimiter=",") if os.path.exists(theta_path) else None
    with open(os.path.join(out_dir, "meta.json")) as fh:
        meta = json.load(fh)
    seed = meta.pop("seed", 0)
    return GroundTruth(adjacency=adjacency, communities=communities,
                       groups=groups, seed=seed, theta_true=theta, meta=meta)
