"""Demographic-parity constraint machinery.

Builds the group co-membership matrix R, the parity operator
A1 = R(I - 11^T/p), the slack bounds B1 = diag(eps) J, the stacked pair
(A, B), an orthonormal nullspace basis of A1, and the linear operator that
maps an edge-weight vector to a symmetric matrix together with its adjoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import validate_groups
from .errors import StructuralError, ValidationError

NULLSPACE_RTOL = 1e-8


def build_group_matrix(demographics) -> np.ndarray:
    """0/1 matrix R with r_ij = 1 iff nodes i and j share a group (r_ii = 1)."""
    groups = np.asarray(demographics, dtype=int)
    validate_groups(groups)
    r = (groups[:, None] == groups[None, :]).astype(float)
    return r


def groups_from_matrix(r: np.ndarray) -> np.ndarray:
    """Recover group ids from a valid co-membership matrix.

    Ids are assigned in order of first appearance, so round-tripping
    ``build_group_matrix`` gives a relabeling of the input.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    groups = np.zeros(p, dtype=int)
    next_id = 0
    for i in range(p):
        if groups[i] == 0:
            next_id += 1
            members = r[i] > 0.5
            groups[members] = next_id
    return groups


def _validate_group_matrix(r: np.ndarray) -> None:
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValidationError(f"R must be square, got shape {r.shape}")
    if not np.isin(r, (0.0, 1.0)).all():
        raise ValidationError("R entries must be 0 or 1")
    if not np.array_equal(r, r.T):
        raise ValidationError("R must be symmetric")
    if not np.all(np.diag(r) == 1.0):
        raise ValidationError("R must have unit diagonal")
    # co-membership must be transitive: same-group rows are identical
    groups = groups_from_matrix(r)
    if not np.array_equal(build_group_matrix(groups), r):
        raise ValidationError("R is not a valid group co-membership matrix")


@dataclass(frozen=True)
class FairnessPolytope:
    """Matrices defining the parity constraint set.

    ``a1 = R(I - J/p)`` has identical rows within a group; the operative
    constraint on a membership matrix Q is ``|A1 Q| <= B1`` entrywise,
    together with the box ``0 <= Q <= J`` carried by the stacked pair
    ``a = [A1; I]``, ``b = [B1; J]``.
    """

    r: np.ndarray
    a1: np.ndarray
    b1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    epsilon: np.ndarray
    groups: np.ndarray

    @property
    def p(self) -> int:
        return self.r.shape[0]

    @property
    def n_groups(self) -> int:
        return int(self.groups.max())

    def is_vacuous(self) -> bool:
        """True when the parity constraint restricts nothing (H = 1)."""
        return self.n_groups == 1

    def group_deviation(self, q: np.ndarray) -> np.ndarray:
        """A1 Q reduced to one row per group (rows within a group repeat)."""
        first = np.array([np.argmax(self.groups == h) for h in
                          range(1, self.n_groups + 1)])
        return self.a1[first] @ q

    def to_json(self) -> str:
        payload = {
            "r": self.r.tolist(),
            "a1": self.a1.tolist(),
            "b1": self.b1.tolist(),
            "epsilon": self.epsilon.tolist(),
        }
        return json.dumps(payload)


def build_fairness_constraints(r: np.ndarray, epsilon) -> FairnessPolytope:
    """Assemble the parity polytope from R and the per-node slack vector.

    A scalar ``epsilon`` is broadcast to all nodes.
    """
    r = np.asarray(r, dtype=float)
    _validate_group_matrix(r)
    p = r.shape[0]
    eps = np.asarray(epsilon, dtype=float)
    if eps.ndim == 0:
        eps = np.full(p, float(eps))
    if eps.shape != (p,):
        raise ValidationError(f"epsilon must be scalar or length p={p}")
    if np.any(eps < 0):
        raise ValidationError("epsilon must be nonnegative")
    centering = np.eye(p) - np.ones((p, p)) / p
    a1 = r @ centering
    b1 = np.diag(eps) @ np.ones((p, p))
    a = np.vstack([a1, np.eye(p)])
    b = np.vstack([b1, np.ones((p, p))])
    groups = groups_from_matrix(r)
    for arr in (r, a1, b1, a, b, eps, groups):
        arr.setflags(write=False)
    return FairnessPolytope(r=r, a1=a1, b1=b1, a=a, b=b, epsilon=eps, groups=groups)


def polytope_from_groups(demographics, epsilon) -> FairnessPolytope:
    """Convenience constructor from raw group ids."""
    return build_fairness_constraints(build_group_matrix(demographics), epsilon)


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal columns spanning null(A1); shape p x (p - H + 1)."""

    n_basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_basis.shape[1]


def nullspace_basis(a1: np.ndarray, h: int) -> NullspaceBasis:
    """Orthonormal basis of null(A1) via SVD.

    rank(A1) must equal H - 1; a different numerical rank (singular values
    thresholded at 1e-8 of the largest) raises a structural error.
    """
    a1 = np.asarray(a1, dtype=float)
    p = a1.shape[1]
    _, svals, vt = np.linalg.svd(a1)
    smax = svals[0] if svals.size else 0.0
    rank = int(np.sum(svals > NULLSPACE_RTOL * max(smax, 1.0)))
    if rank != h - 1:
        raise StructuralError(
            f"expected rank(A1) = H - 1 = {h - 1}, observed rank {rank}"
        )
    basis = vt[rank:].T.copy()
    if basis.shape != (p, p - h + 1):
        raise StructuralError(
            f"nullspace dimension {basis.shape[1]} != p - H + 1 = {p - h + 1}"
        )
    basis.setflags(write=False)
    return NullspaceBasis(basis)


def _offdiag_index_map(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the strict lower triangle in operator order.

    Entry m of a weight vector fills position (i, j), i > j, where
    m = i + d_j (1-based) with d_j = -j + (j-1)(2p-j)/2; this is
    column-major order over the strict lower triangle.
    """
    cols, rows = [], []
    for j in range(1, p + 1):
        for i in range(j + 1, p + 1):
            rows.append(i - 1)
            cols.append(j - 1)
    return np.array(rows), np.array(cols)


def graph_operator(w: np.ndarray, p: int | None = None, sign: float = -1.0) -> np.ndarray:
    """Map an edge-weight vector of length p(p-1)/2 to a symmetric matrix.

    Off-diagonals are filled with ``sign * w`` (default -1, the Laplacian
    convention); the diagonal of each row is the sum of that row's
    off-diagonal entries.
    """
    w = np.asarray(w, dtype=float).ravel()
    m = w.size
    if p is None:
        p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if p * (p - 1) // 2 != m:
        raise ValidationError(
            f"weight vector of length {m} does not match p(p-1)/2 for p={p}"
        )
    rows, cols = _offdiag_index_map(p)
    out = np.zeros((p, p))
    out[rows, cols] = sign * w
    out[cols, rows] = sign * w
    np.fill_diagonal(out, out.sum(axis=1))
    return out


def adjoint_graph_operator(z: np.ndarray, sign: float = -1.0) -> np.ndarray:
    """Adjoint of :func:`graph_operator`: <A w, Z> = <w, A* Z> for all w, Z."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValidationError(f"Z must be square, got shape {z.shape}")
    p = z.shape[0]
    rows, cols = _offdiag_index_map(p)
    diag = np.diag(z)
    return sign * (z[rows, cols] + z[cols, rows] + diag[rows] + diag[cols])
