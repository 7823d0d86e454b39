"""Gaussian-mixture PHD filter with an EKF-linearised angle measurement.

The intensity is held as three stacked arrays (weights, means, covariances)
so that prediction and update run without per-component Python loops.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from .geometry import invert_bs_angles, measure_batch

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class GmIntensity:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    covs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        n = len(self.weights)
        self.means = np.asarray(self.means, dtype=float).reshape(n, 2)
        self.covs = np.asarray(self.covs, dtype=float).reshape(n, 2, 2)

    @classmethod
    def from_components(cls, comps: Sequence[GaussianComponent]) -> "GmIntensity":
        if not comps:
            return cls()
        return cls(
            [c.weight for c in comps],
            np.array([c.mean for c in comps]),
            np.array([c.cov for c in comps]),
        )

    @classmethod
    def concat(cls, parts: Sequence["GmIntensity"]) -> "GmIntensity":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls()
        return cls(
            np.concatenate([p.weights for p in parts]),
            np.concatenate([p.means for p in parts]),
            np.concatenate([p.covs for p in parts]),
        )

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self) -> Iterator[GaussianComponent]:
        for w, m, P in zip(self.weights, self.means, self.covs):
            yield GaussianComponent(float(w), m, P)

    @property
    def components(self) -> list[GaussianComponent]:
        return list(self)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def copy(self) -> "GmIntensity":
        return GmIntensity(self.weights.copy(), self.means.copy(), self.covs.copy())

    def check(self, tol: float = 1e-12) -> None:
        """Raise if any covariance is asymmetric or not positive definite."""
        if np.any(self.weights < 0):
            raise ValueError("negative component weight")
        if len(self) == 0:
            return
        asym = np.abs(self.covs - np.swapaxes(self.covs, 1, 2)).max()
        if asym > tol * max(1.0, np.abs(self.covs).max()):
            raise ValueError(f"covariance asymmetric by {asym:g}")
        if np.linalg.eigvalsh(self.covs).min() <= 0:
            raise ValueError("covariance not positive definite")


@dataclass(frozen=True)
class SpawnModel:
    """Spawned components: weight ``w_j * w_l``, mean ``A m_j + e_l``."""

    weights: tuple = ()
    offsets: tuple = ()

    def __post_init__(self):
        if len(self.weights) != len(self.offsets):
            raise ValueError("spawn weights and offsets differ in length")

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class PhdParams:
    p_b: np.ndarray
    meas_cov: np.ndarray
    process_cov: np.ndarray
    birth: GmIntensity = field(default_factory=GmIntensity)
    spawn: SpawnModel = field(default_factory=SpawnModel)
    p_survive: float = 0.99
    p_detect: float = 0.98
    clutter_rate: float = 0.0
    clutter_volume: float = 1.0
    clutter_density: Callable | None = None
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    extract_threshold: float = 0.5
    max_components: int = 100
    transition: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        self.p_b = np.asarray(self.p_b, dtype=float)
        self.meas_cov = np.asarray(self.meas_cov, dtype=float)
        self.process_cov = np.asarray(self.process_cov, dtype=float)
        for name in ("p_survive", "p_detect"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("prune_threshold", "merge_threshold", "extract_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_components < 1:
            raise ValueError("max_components must be at least 1")

    def clutter_intensity(self, z) -> float:
        """``lambda * V * U(z)``; uniform ``U`` when no density is supplied."""
        if self.clutter_rate == 0.0:
            return 0.0
        u = 1.0 / self.clutter_volume if self.clutter_density is None else self.clutter_density(z)
        return self.clutter_rate * self.clutter_volume * u


def predict(prev: GmIntensity, params: PhdParams) -> GmIntensity:
    """Survivors, then spawns (parent-major), then births."""
    A = params.transition
    m = prev.means @ A.T
    P = params.process_cov + A @ prev.covs @ A.T
    survivors = GmIntensity(params.p_survive * prev.weights, m, P)

    spawn = params.spawn
    if len(spawn) and len(prev):
        w_k = np.asarray(spawn.weights, dtype=float)
        e_k = np.asarray(spawn.offsets, dtype=float).reshape(-1, 2)
        spawned = GmIntensity(
            np.outer(prev.weights, w_k).ravel(),
            (m[:, None, :] + e_k[None, :, :]).reshape(-1, 2),
            np.repeat(P, len(w_k), axis=0),
        )
    else:
        spawned = GmIntensity()
    return GmIntensity.concat([survivors, spawned, params.birth])


def _chol2(S: np.ndarray):
    """Explicit Cholesky factors of stacked 2x2 matrices; NaN where not PD."""
    a, b, c = S[:, 0, 0], S[:, 0, 1], S[:, 1, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        l11 = np.sqrt(a)
        l21 = b / l11
        l22 = np.sqrt(c - l21 * l21)
    ok = np.isfinite(l11) & np.isfinite(l22) & (l11 > 0) & (l22 > 0)
    return l11, l21, l22, ok


def _floor_pd(P: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Symmetrise and lift eigenvalues below ``rel * max eigenvalue``.

    Guards against the cancellation in ``(I - K G) P`` when R is tiny.
    """
    P = 0.5 * (P + np.swapaxes(P, 1, 2))
    if len(P) == 0:
        return P
    lam, V = np.linalg.eigh(P)
    floor = rel * np.maximum(lam[:, -1:], np.finfo(float).tiny)
    bad = (lam < floor).any(axis=1)
    if bad.any():
        lam_b = np.maximum(lam[bad], floor[bad])
        P = P.copy()
        P[bad] = (V[bad] * lam_b[:, None, :]) @ np.swapaxes(V[bad], 1, 2)
    return P


def update(pred: GmIntensity, measurements, params: PhdParams) -> GmIntensity:
    """Missed-detection copies followed by one block per measurement.

    Detection weights use the standard GM-PHD form
    ``p_D w_j N_j(z) / (C(z) + p_D sum_l w_l N_l(z))``.
    """
    Z = np.asarray([getattr(z, "z", z) for z in measurements], dtype=float).reshape(-1, 2)
    p_d = params.p_detect
    missed = GmIntensity((1.0 - p_d) * pred.weights, pred.means, pred.covs)
    if len(pred) == 0 or len(Z) == 0 or p_d == 0.0:
        return missed

    zhat, G = measure_batch(pred.means, params.p_b)
    P = pred.covs
    Gt = np.swapaxes(G, 1, 2)
    S = G @ P @ Gt + params.meas_cov
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    l11, l21, l22, ok = _chol2(S)
    if not ok.all():
        log.warning("skipping %d components with singular innovation covariance", (~ok).sum())
    S_inv = np.zeros_like(S)
    S_inv[ok] = np.linalg.inv(S[ok])
    K = P @ Gt @ S_inv
    P_upd = _floor_pd((np.eye(2) - K @ G) @ P)

    # log-likelihoods, shape (|Z|, n)
    nu = Z[:, None, :] - zhat[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        y1 = nu[..., 0] / l11
        y2 = (nu[..., 1] - l21 * y1) / l22
        log_det = 2.0 * (np.log(l11) + np.log(l22))
        log_lik = -LOG_2PI - 0.5 * log_det - 0.5 * (y1 * y1 + y2 * y2)
    log_lik[:, ~ok] = -np.inf

    with np.errstate(divide="ignore"):
        log_num = math.log(p_d) + np.log(pred.weights)[None, :] + log_lik
        log_c = np.log([params.clutter_intensity(z) for z in Z])
    log_den = logsumexp(np.column_stack([log_num, log_c]), axis=1)
    with np.errstate(invalid="ignore"):
        w = np.exp(log_num - log_den[:, None])
    w[~np.isfinite(w)] = 0.0

    means = pred.means[None, :, :] + np.einsum("nij,lnj->lni", K, nu)
    blocks = [GmIntensity(w[l][ok], means[l][ok], P_upd[ok]) for l in range(len(Z))]
    return GmIntensity.concat([missed, *blocks])


def prune_merge(v: GmIntensity, prune_threshold: float, merge_threshold: float,
                max_components: int) -> GmIntensity:
    """Truncate weak components, merge Mahalanobis-close ones, cap the count."""
    keep = np.flatnonzero(v.weights > prune_threshold)
    if len(keep) == 0:
        return GmIntensity()
    w, m, P = v.weights[keep], v.means[keep], v.covs[keep]
    P_inv = np.linalg.inv(P)
    remaining = np.ones(len(w), dtype=bool)
    out_w, out_m, out_P = [], [], []
    while remaining.any():
        idx = np.flatnonzero(remaining)
        i = idx[np.argmax(w[idx])]
        d = m[idx] - m[i]
        maha = np.einsum("ni,nij,nj->n", d, P_inv[idx], d)
        L = idx[maha <= merge_threshold]
        wl = w[L]
        W = wl.sum()
        mean = (wl[:, None] * m[L]).sum(axis=0) / W
        dm = mean - m[L]
        cov = (wl[:, None, None] * (P[L] + dm[:, :, None] * dm[:, None, :])).sum(axis=0) / W
        out_w.append(W)
        out_m.append(mean)
        out_P.append(0.5 * (cov + cov.T))
        remaining[L] = False
    out = GmIntensity(out_w, out_m, out_P)
    if len(out) > max_components:
        order = np.argsort(-out.weights, kind="stable")[:max_components]
        out = GmIntensity(out.weights[order], out.means[order], out.covs[order])
    return out


def extract(v: GmIntensity, threshold: float) -> tuple[np.ndarray, int]:
    """Means of components heavier than ``threshold`` and their count."""
    sel = v.weights > threshold
    states = v.means[sel].copy()
    return states, len(states)


def filter_step(prev: GmIntensity, measurements, params: PhdParams):
    """predict -> update -> prune/merge -> extract; returns (posterior, states)."""
    pred = predict(prev, params)
    upd = update(pred, measurements, params)
    post = prune_merge(upd, params.prune_threshold, params.merge_threshold, params.max_components)
    states, _ = extract(post, params.extract_threshold)
    return post, states


def measurement_driven_intensity(measurements, params: PhdParams, weight: float,
                                 cov=None) -> GmIntensity:
    """One component per measurement at the ground point it points to.

    Without ``cov`` each component carries the ground-plane spread of its own
    angle measurement, ``G^-1 R G^-T`` at the back-projected point.
    """
    zs = [getattr(z, "z", z) for z in measurements]
    if not zs:
        return GmIntensity()
    means = np.array([invert_bs_angles(z, params.p_b) for z in zs])
    if cov is None:
        _, G = measure_batch(means, params.p_b)
        G_inv = np.linalg.inv(G)
        covs = _floor_pd(G_inv @ params.meas_cov @ np.swapaxes(G_inv, 1, 2))
    else:
        covs = np.repeat(np.asarray(cov, dtype=float)[None], len(zs), axis=0)
    return GmIntensity(np.full(len(zs), weight), means, covs)


def make_birth(means, weight: float, cov) -> GmIntensity:
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    cov = np.asarray(cov, dtype=float)
    return GmIntensity(np.full(len(means), weight), means, np.repeat(cov[None], len(means), axis=0))


def dumps(v: GmIntensity, header: str = "") -> str:
    """Plain-text snapshot: one component per line,
    ``weight mean_x mean_y P_xx P_xy P_yx P_yy`` with round-trip floats."""
    buf = io.StringIO()
    buf.write(f"# gm-intensity n={len(v)}{' ' + header if header else ''}\n")
    buf.write("# weight mean_x mean_y P_xx P_xy P_yx P_yy\n")
    for w, m, P in zip(v.weights, v.means, v.covs):
        vals = [w, *m, *P.ravel()]
        buf.write(" ".join(repr(float(x)) for x in vals) + "\n")
    return buf.getvalue()


def loads(text: str) -> GmIntensity:
    rows = [list(map(float, line.split())) for line in text.splitlines()
            if line.strip() and not line.startswith("#")]
    if not rows:
        return GmIntensity()
    a = np.array(rows)
    return GmIntensity(a[:, 0], a[:, 1:3], a[:, 3:7].reshape(-1, 2, 2))
