"""Performance metrics and the information-criterion tuning rule."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import sample_covariance
from .errors import ValidationError

SUPPORT_THRESHOLD = 1e-5


def clustering_error(est_labels, true_labels) -> float:
    """Share of node pairs on which the two labelings disagree.

    Counts pairs (i < j) where exactly one labeling puts i and j together,
    normalized by p(p-1)/2; invariant to relabeling by construction.
    """
    est = np.asarray(est_labels)
    true = np.asarray(true_labels)
    if est.shape != true.shape or est.ndim != 1:
        raise ValidationError("labelings must be equal-length vectors")
    p = est.size
    iu = np.triu_indices(p, k=1)
    same_est = (est[:, None] == est[None, :])[iu]
    same_true = (true[:, None] == true[None, :])[iu]
    return float(int(np.sum(same_est != same_true)) / (p * (p - 1) // 2))


def pcee(theta_est, theta_true) -> float:
    """Fraction of true edges recovered above the magnitude threshold.

    Among off-diagonal (i < j) entries with theta_true != 0, the share
    with |theta_est| > 1e-5. NaN when the true graph has no edges.
    """
    est = np.asarray(getattr(theta_est, "values", theta_est), dtype=float)
    true = np.asarray(getattr(theta_true, "values", theta_true), dtype=float)
    if est.shape != true.shape:
        raise ValidationError("estimate and truth must have equal shapes")
    iu = np.triu_indices(est.shape[0], k=1)
    true_edges = true[iu] != 0
    total = int(true_edges.sum())
    if total == 0:
        return float("nan")
    hits = int(np.sum(np.abs(est[iu])[true_edges] > SUPPORT_THRESHOLD))
    return float(hits / total)


def balance(labels, groups, r) -> float:
    """Mean over nodes of the worst community-representation ratio.

    For node i with same-group set N_i = {j : r_ij = 1}, the ratio is
    min over community pairs of |C_k cap N_i| / |C_l cap N_i|, which is
    min/max of the per-community counts; a community with no members of
    N_i sends the node's ratio to 0.
    """
    labels = np.asarray(labels, dtype=int)
    groups = np.asarray(groups, dtype=int)
    rm = np.asarray(r, dtype=float)
    p = labels.size
    if groups.shape != (p,) or rm.shape != (p, p):
        raise ValidationError("labels, groups and R must agree in size")
    ks = np.unique(labels)
    ratios = np.empty(p)
    for i in range(p):
        members = rm[i] > 0.5
        counts = np.array([int(np.sum(members & (labels == k))) for k in ks])
        if np.any(counts == 0):
            ratios[i] = 0.0
        else:
            ratios[i] = counts.min() / counts.max()
    return float(np.mean(ratios))


def preference_ratio(y, group_rows, category_cols) -> float:
    """Share of a row group's selections that fall in a column category.

    NaN when the group selected nothing at all.
    """
    ym = np.asarray(y, dtype=float)
    if not np.isin(ym, (0.0, 1.0)).all():
        raise ValidationError("preference matrix must be binary")
    rows = np.asarray(group_rows, dtype=int)
    cols = np.asarray(category_cols, dtype=int)
    denom = float(ym[rows].sum())
    if denom == 0:
        return float("nan")
    num = float(ym[np.ix_(rows, cols)].sum())
    return num / denom


def bic_score(theta_est, q_est, data, c: float = 0.25) -> float:
    """Information criterion for penalty selection (single-partition form).

    n (-log|diag(theta)^2| + tr(((1+c) S + Q) theta^2))
    + log(n) * |{(i <= j): |theta_ij| > 1e-5}|
    """
    th = np.asarray(getattr(theta_est, "values", theta_est), dtype=float)
    qm = np.asarray(getattr(q_est, "values", q_est), dtype=float)
    diag = np.diag(th)
    if np.any(diag <= 0):
        raise ValidationError("theta diagonal must be strictly positive")
    s = sample_covariance(data)
    n = data.n
    fit = -2.0 * float(np.log(diag).sum())
    fit += float(np.sum(((1.0 + c) * s + qm) * (th @ th)))
    iu = np.triu_indices_from(th)
    card = int(np.sum(np.abs(th[iu]) > SUPPORT_THRESHOLD))
    return n * fit + math.log(n) * card


def tune_select(results) -> tuple[float, float]:
    """Pick (rho1, rho2) with the smallest criterion value.

    ``results`` holds (rho1, rho2, bic) triples or dicts with those keys.
    Ties break toward larger rho1 (sparser), then larger rho2. Raises
    when no finite-criterion fit exists.
    """
    entries = []
    for item in results:
        if isinstance(item, dict):
            rho1, rho2, bic = item["rho1"], item["rho2"], item["bic"]
        else:
            rho1, rho2, bic = item
        if math.isfinite(bic):
            entries.append((float(bic), -float(rho1), -float(rho2)))
    if not entries:
        raise ValidationError("no successful fits to select from")
    best = min(entries)
    return -best[1], -best[2]


def rmse(predicted, actual) -> float:
    pred = np.asarray(predicted, dtype=float)
    act = np.asarray(actual, dtype=float)
    return float(np.sqrt(np.mean((pred - act) ** 2)))


@dataclass(frozen=True)
class EvalReport:
    """Flat bundle of metric values for one fit."""

    ce: float
    pcee: float
    balance: float
    bic: float
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ce", "pcee", "balance"):
            val = getattr(self, name)
            if math.isfinite(val) and not (0.0 <= val <= 1.0 + 1e-12):
                if name != "balance" or val < 0:
                    raise ValidationError(f"{name} out of range: {val}")

    def to_dict(self) -> dict:
        out = {
            "ce": self.ce,
            "pcee": self.pcee,
            "pcee_defined": math.isfinite(self.pcee),
            "balance": self.balance,
            "bic": self.bic,
        }
        out.update(self.extras)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
