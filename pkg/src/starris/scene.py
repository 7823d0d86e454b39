"""Ground-truth scatterer timeline and noisy angle measurements."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .geometry import invert_bs_angles, measure_angles_from_bs


class ConfigurationError(ValueError):
    pass


class TargetClass(enum.IntEnum):
    TINY = 0
    MIDDLE = 1
    BIG = 2


# default RCS split in m^2: Tiny < 1 <= Middle < 20 <= Big
DEFAULT_RCS_THRESHOLDS = (1.0, 20.0)


def class_of_rcs(rcs: float, thresholds=DEFAULT_RCS_THRESHOLDS) -> TargetClass:
    lo, hi = thresholds
    if rcs < lo:
        return TargetClass.TINY
    if rcs < hi:
        return TargetClass.MIDDLE
    return TargetClass.BIG


@dataclass(frozen=True)
class AreaBounds:
    x_min: float = 0.0
    x_max: float = 50.0
    y_min: float = -25.0
    y_max: float = 25.0

    def contains(self, c) -> bool:
        x, y = c[0], c[1]
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class TargetTruth:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    rcs: float
    cls: TargetClass | None = None
    sigma_v: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))
        if not self.rcs > 0:
            raise ValueError("rcs must be positive")
        if self.cls is None:
            object.__setattr__(self, "cls", class_of_rcs(self.rcs))


@dataclass(frozen=True)
class MotionParams:
    """Random-walk position model: ``c' = c + q``, ``q ~ N(0, sigma_v * dt * I)``."""

    dt: float = 0.5
    sigma_v: float = 0.01

    def __post_init__(self):
        if self.dt <= 0 or self.sigma_v < 0:
            raise ValueError("dt must be positive and sigma_v non-negative")

    def process_cov(self, sigma_v: float | None = None) -> np.ndarray:
        s = self.sigma_v if sigma_v is None else sigma_v
        return s * self.dt * np.eye(2)


@dataclass(frozen=True)
class Birth:
    k: int
    position: tuple
    velocity: tuple
    rcs: float = 2.0


@dataclass(frozen=True)
class Spawn:
    k: int
    parent: int
    offset: tuple
    velocity: tuple | None = None
    rcs: float = 0.5


@dataclass(frozen=True)
class Exit:
    k: int
    target: int


SceneEvent = Birth | Spawn | Exit


@dataclass
class Measurement:
    z: np.ndarray
    doppler: float = 0.0
    rcs_hat: float = 1.0
    gain: complex = 0.0
    is_clutter: bool = False
    source: int | None = None


def step_state(c, motion: MotionParams, rng: np.random.Generator, sigma_v: float | None = None) -> np.ndarray:
    """One draw of the random-walk transition (A = I)."""
    cov = motion.process_cov(sigma_v)
    q = np.sqrt(cov[0, 0]) * rng.standard_normal(2)
    return np.asarray(c, dtype=float) + q


def constant_acceleration_deviation(v: float, a: float, dt: float) -> float:
    """Extra displacement of a constant-acceleration target over a constant-velocity one."""
    return (v * dt + 0.5 * a * dt ** 2) - v * dt


def rotate90(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([-v[1], v[0]])


def evolve_scene(
    truth: Sequence[TargetTruth],
    events: Iterable[SceneEvent],
    area: AreaBounds,
    motion: MotionParams,
    rng: np.random.Generator,
    ids: Iterator[int] | None = None,
    stats: dict | None = None,
) -> list[TargetTruth]:
    """Advance the truth by one period and apply that period's events.

    Survivors move by ``v * dt`` plus process noise; anything that leaves
    ``area`` is dropped. Exits, then spawns, then births are applied.
    ``stats`` (if given) receives the bookkeeping counts.
    """
    if ids is None:
        ids = itertools.count(max((t.id for t in truth), default=-1) + 1)
    prev = {t.id: t for t in truth}

    moved = []
    boundary = 0
    for t in truth:
        c = step_state(t.position + t.velocity * motion.dt, motion, rng, t.sigma_v)
        if area.contains(c):
            moved.append(replace(t, position=c))
        else:
            boundary += 1

    events = list(events)
    exits = {e.target for e in events if isinstance(e, Exit)}
    n_exit = sum(1 for t in moved if t.id in exits)
    out = [t for t in moved if t.id not in exits]
    alive = {t.id: t for t in out}

    n_spawn = n_birth = 0
    for e in events:
        if isinstance(e, Spawn):
            if e.parent not in prev:
                raise ConfigurationError(f"spawn at k={e.k} references dead target {e.parent}")
            parent = alive.get(e.parent, prev[e.parent])
            vel = rotate90(parent.velocity) if e.velocity is None else np.asarray(e.velocity, float)
            out.append(TargetTruth(next(ids), parent.position + np.asarray(e.offset, float), vel, e.rcs))
            n_spawn += 1
    for e in events:
        if isinstance(e, Birth):
            out.append(TargetTruth(next(ids), np.asarray(e.position, float), np.asarray(e.velocity, float), e.rcs))
            n_birth += 1

    if stats is not None:
        stats.update(births=n_birth, spawns=n_spawn, exits=n_exit, boundary=boundary)
    return out


def _kmeans_1d(x: np.ndarray, k: int) -> list[np.ndarray]:
    """Exact k-means (k <= 3) on sorted 1-D data by exhaustive contiguous splits."""
    n = len(x)
    best, best_cost = None, math.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        parts = np.split(x, cuts)
        cost = sum(((p - p.mean()) ** 2).sum() for p in parts)
        if cost < best_cost - 1e-15:
            best, best_cost = parts, cost
    return best


def classify_by_rcs(rcs_values, thresholds=DEFAULT_RCS_THRESHOLDS) -> list[TargetClass]:
    """Three-way RCS classes via 1-D clustering in log10(rcs).

    Each cluster is named by the threshold class of its geometric-mean
    centroid, so the labelling stays monotone in rcs and degenerates to
    the threshold table when clusters collapse.
    """
    r = np.asarray(rcs_values, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("need at least one rcs value")
    logs = np.log10(r)
    uniq = np.unique(logs)
    k = min(3, len(uniq))
    parts = _kmeans_1d(uniq, k) if k > 1 else [uniq]
    label_of = {}
    for p in parts:
        cls = class_of_rcs(10 ** p.mean(), thresholds)
        for v in p:
            label_of[v] = cls
    return [label_of[v] for v in logs]


def identify_dynamic(paths, doppler_threshold: float, dopplers=None):
    """Split paths into (dynamic, static) by ``|doppler| > doppler_threshold``.

    ``dopplers`` overrides the per-path values, e.g. with noisy estimates.
    """
    if doppler_threshold < 0:
        raise ValueError("doppler threshold must be non-negative")
    if dopplers is None:
        dopplers = [p.doppler for p in paths]
    dynamic, static = [], []
    for p, nu in zip(paths, dopplers):
        (dynamic if abs(nu) > doppler_threshold else static).append(p)
    return dynamic, static


class AngleRegion:
    """Angular image of the ground rectangle as seen from the BS.

    Clutter lives here: uniform density ``1 / volume`` over the set of
    (elevation, azimuth) pairs whose ground intersection falls in ``area``.
    """

    def __init__(self, area: AreaBounds, p_b):
        self.area = area
        self.p_b = np.asarray(p_b, dtype=float)
        h = -self.p_b[2]
        by = self.p_b[1]
        xs = np.linspace(area.x_min, area.x_max, 201)
        ys = np.linspace(area.y_min, area.y_max, 201)
        edge = np.concatenate([
            np.column_stack([xs, np.full_like(xs, area.y_min)]),
            np.column_stack([xs, np.full_like(xs, area.y_max)]),
            np.column_stack([np.full_like(ys, area.x_min), ys]),
            np.column_stack([np.full_like(ys, area.x_max), ys]),
        ])
        ang = np.array([measure_angles_from_bs(c, self.p_b) for c in edge])
        self.phi_range = (ang[:, 0].min(), ang[:, 0].max())
        self.psi_range = (ang[:, 1].min(), ang[:, 1].max())

        def width(phi):
            # azimuth extent of the region along a constant-elevation line
            dx = abs(h) / np.tan(phi) if not np.isclose(phi, np.pi / 2) else 0.0
            rho = np.hypot(dx, h)
            return np.arctan((area.y_max - by) / rho) - np.arctan((area.y_min - by) / rho)

        self.volume = integrate.quad(width, *self.phi_range, limit=200)[0]

    def contains(self, z) -> bool:
        phi, psi = z
        if not (self.phi_range[0] <= phi <= self.phi_range[1]):
            return False
        return self.area.contains(invert_bs_angles((phi, psi), self.p_b))

    def density(self, z) -> float:
        return 1.0 / self.volume if self.contains(z) else 0.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, 2))
        i = 0
        while i < n:
            z = (rng.uniform(*self.phi_range), rng.uniform(*self.psi_range))
            if self.contains(z):
                out[i] = z
                i += 1
        return out


@dataclass
class ClutterModel:
    mean_count: float
    region: AngleRegion

    @property
    def rate(self) -> float:
        """Clutter intensity per unit angular volume."""
        return self.mean_count / self.region.volume


def gen_measurements(
    targets: Sequence[TargetTruth],
    p_b,
    p_detect: float,
    meas_cov,
    clutter: ClutterModel | None,
    rng: np.random.Generator,
    clutter_rng: np.random.Generator | None = None,
    path_info: dict | None = None,
) -> list[Measurement]:
    """Detections ``g(c) + r`` for each target plus Poisson clutter.

    Every target consumes the same number of draws whether detected or not,
    so runs that differ only in ``meas_cov`` share their random numbers.
    ``path_info`` maps target id to ``(doppler, gain)`` for the tags.
    """
    if not 0.0 <= p_detect <= 1.0:
        raise ValueError("p_detect must lie in [0, 1]")
    R = np.asarray(meas_cov, dtype=float)
    L = np.linalg.cholesky(R) if np.any(R) else np.zeros((2, 2))
    crng = rng if clutter_rng is None else clutter_rng
    out = []
    for t in targets:
        u = rng.random()
        n = rng.standard_normal(2)
        if u >= p_detect:
            continue
        z = np.asarray(measure_angles_from_bs(t.position, p_b)) + L @ n
        nu, gain = (path_info or {}).get(t.id, (0.0, 0.0))
        out.append(Measurement(z, nu, t.rcs, gain, False, t.id))
    if clutter is not None and clutter.mean_count > 0:
        m = crng.poisson(clutter.mean_count)
        for z in clutter.region.sample(m, crng):
            rcs = float(10 ** crng.uniform(-1, 2))
            out.append(Measurement(z, float(crng.normal(0, 50.0)), rcs, 0.0, True, None))
    return out
