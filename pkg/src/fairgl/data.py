"""Core data model: datasets, estimate containers and the sample covariance.

All containers are frozen after construction and safe to share across
concurrent solver runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SYM_RTOL = 1e-12
PSD_TOL = 1e-10


def _as_matrix(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _check_symmetric(arr, name, rtol=SYM_RTOL):
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.abs(arr).max()))
    if np.abs(arr - arr.T).max() > rtol * scale:
        raise ValidationError(f"{name} is not symmetric within tolerance")


@dataclass(frozen=True)
class Dataset:
    """An n x p observation matrix with a kind tag and optional node metadata.

    ``kind`` is "continuous" or "binary"; binary data must be exactly 0/1.
    ``demographics`` assigns each of the p variables (graph nodes) a group id
    in 1..H with every group nonempty.
    """

    observations: np.ndarray
    kind: str = "continuous"
    demographics: np.ndarray | None = None
    node_names: tuple[str, ...] | None = None

    def __post_init__(self):
        obs = _as_matrix(self.observations, "observations")
        obs = np.ascontiguousarray(obs)
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        n, p = obs.shape
        if n < 2 or p < 2:
            raise ValidationError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
        if self.kind not in ("continuous", "binary"):
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "binary":
            bad = ~np.isin(obs, (0.0, 1.0))
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise ValidationError(
                    f"binary dataset has entry {obs[i, j]!r} at ({i}, {j}); "
                    "values must be exactly 0 or 1"
                )
        if self.demographics is not None:
            groups = np.asarray(self.demographics, dtype=int)
            if groups.shape != (p,):
                raise ValidationError(
                    f"demographics must have length p={p}, got shape {groups.shape}"
                )
            validate_groups(groups)
            groups.setflags(write=False)
            object.__setattr__(self, "demographics", groups)
        if self.node_names is not None:
            names = tuple(str(s) for s in self.node_names)
            if len(names) != p:
                raise ValidationError(
                    f"node_names must have length p={p}, got {len(names)}"
                )
            object.__setattr__(self, "node_names", names)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def p(self) -> int:
        return self.observations.shape[1]

    @property
    def n_groups(self) -> int:
        if self.demographics is None:
            return 1
        return int(self.demographics.max())

    def centered(self) -> "Dataset":
        """Return a copy with column means removed (continuous data only)."""
        if self.kind != "continuous":
            raise ValidationError("centering is only defined for continuous data")
        obs = self.observations - self.observations.mean(axis=0)
        return Dataset(obs, self.kind, self.demographics, self.node_names)


def validate_groups(groups: np.ndarray) -> int:
    """Check group ids are 1..H with every id present; return H."""
    groups = np.asarray(groups, dtype=int)
    if groups.ndim != 1 or groups.size == 0:
        raise ValidationError("group ids must form a nonempty vector")
    h = int(groups.max())
    if groups.min() < 1:
        raise ValidationError(f"group ids must be >= 1, got {groups.min()}")
    present = np.unique(groups)
    if len(present) != h:
        missing = sorted(set(range(1, h + 1)) - set(present.tolist()))
        raise ValidationError(f"empty demographic group(s): {missing}")
    return h


@dataclass(frozen=True)
class PrecisionEstimate:
    """Symmetric p x p matrix with strictly positive diagonal."""

    values: np.ndarray

    def __post_init__(self):
        vals = _as_matrix(self.values, "precision values")
        _check_symmetric(vals, "precision matrix")
        diag = np.diag(vals)
        if np.any(diag <= 0):
            i = int(np.argmin(diag))
            raise ValidationError(
                f"precision diagonal must be strictly positive; "
                f"entry {i} is {diag[i]!r}"
            )
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def support(self, threshold: float = 1e-5) -> np.ndarray:
        """Boolean off-diagonal support mask at the given magnitude threshold."""
        mask = np.abs(self.values) > threshold
        np.fill_diagonal(mask, False)
        return mask


@dataclass(frozen=True)
class PartitionRelaxation:
    """Relaxed community membership: symmetric PSD, unit diagonal, [0,1] box."""

    values: np.ndarray
    tol: float = 1e-6

    def __post_init__(self):
        vals = _as_matrix(self.values, "partition values")
        _check_symmetric(vals, "partition matrix", rtol=1e-8)
        tol = float(self.tol)
        if np.abs(np.diag(vals) - 1.0).max() > tol:
            raise ValidationError("partition diagonal must be 1 within tolerance")
        if vals.min() < -tol or vals.max() > 1.0 + tol:
            raise ValidationError("partition entries must lie in [0, 1] within tolerance")
        lam_min = float(np.linalg.eigvalsh((vals + vals.T) / 2.0).min())
        if lam_min < -tol:
            raise ValidationError(
                f"partition matrix must be PSD within tolerance, lambda_min={lam_min:g}"
            )
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FitResult:
    """Output of a full solver run."""

    theta: PrecisionEstimate
    q: PartitionRelaxation
    labels: np.ndarray
    diagnostics: tuple[dict, ...]
    config: dict = field(default_factory=dict)
    converged: bool = True

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))


def sample_covariance(data: Dataset) -> np.ndarray:
    """Second-moment matrix S = (1/n) Y^T Y, symmetrized exactly.

    The data are not centered; pass ``data.centered()`` to remove column
    means first.
    """
    y = data.observations
    s = y.T @ y
    s = (s + s.T) / (2.0 * data.n)
    return s


def write_dataset_csv(data: Dataset, path, header: bool = True) -> None:
    """Write observations as CSV, one observation per row.

    Values are written with shortest round-trip formatting so finite decimal
    inputs survive a read/write cycle bit-identically.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            names = data.node_names or tuple(
                f"x{j}" for j in range(data.p)
            )
            writer.writerow(names)
        for row in data.observations:
            writer.writerow([repr(float(v)) for v in row])


def read_dataset_csv(
    path,
    kind: str = "continuous",
    header: bool = True,
    demographics: np.ndarray | None = None,
) -> Dataset:
    """Read observations from CSV written by :func:`write_dataset_csv`."""
    if isinstance(path, io.TextIOBase):
        fh = path
        rows = list(csv.reader(fh))
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    names = None
    if header:
        if not rows:
            raise ValidationError("empty CSV file")
        names = tuple(rows[0])
        rows = rows[1:]
    try:
        obs = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"non-numeric CSV entry: {exc}") from exc
    if obs.ndim != 2:
        raise ValidationError("CSV rows have inconsistent lengths")
    return Dataset(obs, kind=kind, demographics=demographics, node_names=names)


def read_groups_csv(path) -> np.ndarray:
    """Read a single-column CSV of integer group ids aligned to columns of Y."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    try:
        groups = np.array([int(float(row[0])) for row in rows], dtype=int)
    except ValueError as exc:
        raise ValidationError(f"non-integer group id: {exc}") from exc
    validate_groups(groups)
    return groups


def write_groups_csv(groups: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for g in np.asarray(groups, dtype=int):
            writer.writerow([int(g)])
