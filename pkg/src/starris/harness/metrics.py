"""Per-period metrics and track-to-truth association."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

UNDEFINED = math.nan


def associate(estimates, truth, gate: float = math.inf):
    """Optimal assignment on Euclidean distance; pairs beyond ``gate`` are dropped.

    Returns ``(est_idx, truth_idx, distances)``.
    """
    e = np.asarray(estimates, dtype=float).reshape(-1, 2)
    t = np.asarray(truth, dtype=float).reshape(-1, 2)
    if len(e) == 0 or len(t) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(t))):
        raise ValueError("estimates and truth must be finite")
    cost = np.linalg.norm(e[:, None, :] - t[None, :, :], axis=2)
    r, c = linear_sum_assignment(cost)
    d = cost[r, c]
    keep = d <= gate
    return r[keep], c[keep], d[keep]


def rmse_metric(estimates, truth, gate: float = math.inf) -> float:
    """RMSE over optimally matched pairs; NaN when nothing is matched."""
    _, _, d = associate(estimates, truth, gate)
    if len(d) == 0:
        return UNDEFINED
    return float(np.sqrt(np.mean(d ** 2)))


def angle_rmse(est_angles, true_angles) -> float:
    """RMSE of (elevation, azimuth) differences over already-matched pairs."""
    a = np.asarray(est_angles, dtype=float).reshape(-1, 2)
    b = np.asarray(true_angles, dtype=float).reshape(-1, 2)
    if len(a) == 0:
        return UNDEFINED
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


@dataclass
class PeriodMetrics:
    trial: int
    k: int
    true_count: int
    est_count: int
    loc_rmse: float
    angle_rmse: float
    snr_fixed_db: float
    snr_tracked_db: float
    snr_oracle_db: float
    overhead: int
    rescan: bool
    eta: float

    def __post_init__(self):
        if self.true_count < 0 or self.est_count < 0:
            raise ValueError("counts must be non-negative")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, c) for c in self.columns()]


@dataclass
class RunReport:
    config: dict
    seed: int
    periods: list[PeriodMetrics] = field(default_factory=list)
    config_hash: str = ""

    def trials(self) -> list[int]:
        return sorted({p.trial for p in self.periods})

    def column(self, name: str, trial: int | None = None) -> np.ndarray:
        rows = [p for p in self.periods if trial is None or p.trial == trial]
        return np.array([getattr(p, name) for p in rows], dtype=float)

    def per_period_mean(self, name: str) -> np.ndarray:
        """Mean over trials for each period index, ignoring NaN markers."""
        ks = sorted({p.k for p in self.periods})
        out = []
        for k in ks:
            vals = np.array([getattr(p, name) for p in self.periods if p.k == k], dtype=float)
            vals = vals[np.isfinite(vals)]
            out.append(vals.mean() if len(vals) else UNDEFINED)
        return np.array(out)

    def aggregates(self) -> dict:
        def nanmean(name):
            v = self.column(name)
            v = v[np.isfinite(v)]
            return float(v.mean()) if len(v) else None

        counts_ok = [p.true_count == p.est_count for p in self.periods]
        return {
            "trials": len(self.trials()),
            "periods": len(self.periods),
            "count_accuracy": float(np.mean(counts_ok)) if counts_ok else None,
            "mean_loc_rmse": nanmean("loc_rmse"),
            "mean_angle_rmse": nanmean("angle_rmse"),
            "mean_snr_fixed_db": nanmean("snr_fixed_db"),
            "mean_snr_tracked_db": nanmean("snr_tracked_db"),
            "mean_snr_oracle_db": nanmean("snr_oracle_db"),
            "total_overhead": int(sum(p.overhead for p in self.periods)),
            "rescans": int(sum(p.rescan for p in self.periods)),
        }
