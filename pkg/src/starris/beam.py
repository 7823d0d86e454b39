"""Track-driven BS beamforming and STAR-RIS refraction design."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    AnglePair,
    UpaGeometry,
    as_vec3,
    great_circle,
    measure_angles_from_bs,
    measure_angles_from_ris,
    steering_vector,
)


class BeamCombinationError(ValueError):
    """The weighted sub-beams cancelled to (numerically) zero."""


@dataclass(frozen=True)
class BeamDesign:
    f_b: np.ndarray
    omega: np.ndarray
    F_b: np.ndarray

    @classmethod
    def from_vectors(cls, f_b, omega, n_rf: int) -> "BeamDesign":
        f_b = np.asarray(f_b, dtype=complex)
        return cls(f_b, np.asarray(omega, dtype=complex), np.outer(f_b, np.ones(n_rf)) / math.sqrt(n_rf))

    def check(self, tol: float = 1e-9) -> None:
        if abs(np.linalg.norm(self.f_b) - 1) > tol:
            raise ValueError("BS beam is not unit norm")
        if not np.allclose(np.abs(self.omega), 1.0, atol=tol):
            raise ValueError("refraction vector is not unit modulus")
        if abs(np.linalg.norm(self.F_b) - 1) > tol:
            raise ValueError("analog precoder is not unit Frobenius norm")

    def to_dict(self) -> dict:
        def pairs(x):
            return [[float(v.real), float(v.imag)] for v in np.ravel(x)]

        return {"f_b": pairs(self.f_b), "omega": pairs(self.omega), "n_rf": self.F_b.shape[1]}

    @classmethod
    def from_dict(cls, d: dict) -> "BeamDesign":
        def cplx(p):
            a = np.asarray(p, dtype=float)
            return a[:, 0] + 1j * a[:, 1]

        return cls.from_vectors(cplx(d["f_b"]), cplx(d["omega"]), int(d["n_rf"]))


@dataclass(frozen=True)
class PathPrediction:
    id: int
    position: np.ndarray
    aod_bs: AnglePair
    aoa_ris: AnglePair
    gain: complex = 1.0


@dataclass(frozen=True)
class Collision:
    dynamic_id: int
    static_id: int
    blocked: str  # "static" or "dynamic"


def predict_path_angles(states, p_b, p_s, gains=None) -> list[PathPrediction]:
    states = np.asarray(states, dtype=float).reshape(-1, 2)
    gains = [1.0] * len(states) if gains is None else list(gains)
    return [
        PathPrediction(i, c, measure_angles_from_bs(c, p_b), measure_angles_from_ris(c, p_s), g)
        for i, (c, g) in enumerate(zip(states, gains))
    ]


def subbeam_bs(angles, geom: UpaGeometry) -> np.ndarray:
    return np.conj(steering_vector(geom, angles))


def subbeam_ris(indoor, outdoor, geom: UpaGeometry) -> np.ndarray:
    v = np.conj(steering_vector(geom, indoor)) * np.conj(steering_vector(geom, outdoor))
    return v / np.abs(v)


def combine(subbeams: Sequence, gains: Sequence, static_subbeams: Sequence = (),
            static_gains: Sequence = (), n_rf: int = 1) -> BeamDesign:
    """Gain-weighted sum of (bs, ris) sub-beam pairs.

    The BS sum is scaled to unit norm; the RIS sum is normalised and then
    projected entrywise onto unit modulus so the surface stays passive.
    """
    pairs = list(subbeams) + list(static_subbeams)
    weights = np.conj(np.asarray(list(gains) + list(static_gains), dtype=complex))
    if not pairs:
        raise ValueError("need at least one sub-beam")
    f = sum(w * np.asarray(b) for w, (b, _) in zip(weights, pairs))
    o = sum(w * np.asarray(r) for w, (_, r) in zip(weights, pairs))
    nf, no = np.linalg.norm(f), np.linalg.norm(o)
    scale = np.abs(weights).max() * math.sqrt(len(f))
    if nf <= 1e-12 * scale or no <= 1e-12 * scale:
        raise BeamCombinationError("sub-beams cancel; fall back to the strongest one")
    f = f / nf
    o = o / no
    mag = np.abs(o)
    o = np.where(mag > 0, o / np.where(mag > 0, mag, 1.0), 1.0)
    return BeamDesign.from_vectors(f, o, n_rf)


def design(predictions: Sequence[PathPrediction], static_paths: Sequence, indoor_angles,
           bs: UpaGeometry, ris: UpaGeometry, n_rf: int) -> BeamDesign:
    """Sub-beams for every predicted and static path, combined.

    Falls back to the strongest single sub-beam if the sum cancels.
    """
    dyn = [(subbeam_bs(p.aod_bs, bs), subbeam_ris(indoor_angles, p.aoa_ris, ris)) for p in predictions]
    sta = [(subbeam_bs(s.aod_bs, bs), subbeam_ris(indoor_angles, s.aoa_ris, ris)) for s in static_paths]
    g_dyn = [p.gain for p in predictions]
    g_sta = [s.gain for s in static_paths]
    try:
        return combine(dyn, g_dyn, sta, g_sta, n_rf)
    except BeamCombinationError:
        allb, allg = dyn + sta, g_dyn + g_sta
        best = int(np.argmax(np.abs(allg)))
        return combine([allb[best]], [allg[best]], n_rf=n_rf)


def mismatch_detect(strength: float, threshold: float) -> bool:
    if strength < 0:
        raise ValueError("received strength must be non-negative")
    return strength < threshold


def collision_predict(predictions: Sequence[PathPrediction], static_paths: Sequence,
                      eps: float, p_b) -> list[Collision]:
    """Pairs whose BS-side and RIS-side directions are both within ``eps``.

    The scatterer nearer the BS blocks the other one.
    """
    if eps <= 0:
        raise ValueError("collision threshold must be positive")
    pb = as_vec3(p_b)
    out = []
    for p in predictions:
        for s in static_paths:
            if great_circle(p.aod_bs, s.aod_bs) < eps and great_circle(p.aoa_ris, s.aoa_ris) < eps:
                d_dyn = np.linalg.norm(as_vec3(p.position) - pb)
                d_sta = np.linalg.norm(as_vec3(s.position) - pb)
                out.append(Collision(p.id, s.id, "static" if d_dyn <= d_sta else "dynamic"))
    return out


def drop_blocked(predictions, static_paths, collisions):
    """Remove the sub-beams that the collisions mark as blocked."""
    dead_dyn = {c.dynamic_id for c in collisions if c.blocked == "dynamic"}
    dead_sta = {c.static_id for c in collisions if c.blocked == "static"}
    return ([p for p in predictions if p.id not in dead_dyn],
            [s for s in static_paths if s.id not in dead_sta])
