"""Coordinate frame, UPA steering vectors and the position-to-angle map.

Global frame: origin under the BS antenna plane, Z up, the BS UPA parallel
to the YOZ plane. Ground scatterers sit at z = 0 and are described by their
2-D state ``c = [x, y]``.

All angles are radians. Elevation is measured from the X axis inside the
XOZ plane, azimuth is the signed angle out of that plane towards +Y.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

E_X = np.array([1.0, 0.0, 0.0])
E_Y = np.array([0.0, 1.0, 0.0])
E_Z = np.array([0.0, 0.0, 1.0])


class DegenerateGeometryError(ValueError):
    """Raised when a direction has no component outside the Y axis."""


class AnglePair(NamedTuple):
    elevation: float
    azimuth: float


@dataclass(frozen=True)
class UpaGeometry:
    n_x: int
    n_y: int
    wavelength: float
    spacing: float | None = None

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("UPA dimensions must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y


def as_vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(-1)
    if v.shape == (2,):
        v = np.array([v[0], v[1], 0.0])
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"expected a finite 3-vector, got {p!r}")
    return v


def axis_responses(geom: UpaGeometry, angles) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis array responses ``a_x`` and ``a_y``."""
    phi, psi = angles
    k = 2 * np.pi * geom.spacing / geom.wavelength
    a_x = np.exp(1j * k * np.arange(geom.n_x) * np.sin(phi) * np.sin(psi))
    a_y = np.exp(1j * k * np.arange(geom.n_y) * np.sin(phi) * np.cos(psi))
    return a_x, a_y


def steering_vector(geom: UpaGeometry, angles) -> np.ndarray:
    """UPA response ``a_x kron a_y``; the x index varies slowest."""
    a_x, a_y = axis_responses(geom, angles)
    return np.kron(a_x, a_y)


def _angles_of(d: np.ndarray) -> AnglePair:
    # remove the Y component, then measure against X
    deflated = d - (d @ E_Y) * E_Y
    dn = np.linalg.norm(deflated)
    if dn == 0.0:
        raise DegenerateGeometryError("direction is parallel to the Y axis")
    elevation = np.arccos(np.clip((deflated @ E_X) / dn, -1.0, 1.0))
    azimuth = np.pi / 2 - np.arccos(np.clip((d @ E_Y) / np.linalg.norm(d), -1.0, 1.0))
    return AnglePair(float(elevation), float(azimuth))


def measure_angles_from_bs(c, p_b) -> AnglePair:
    """Angle pair of a ground point ``c = [x, y]`` seen from the BS."""
    return _angles_of(as_vec3(c) - as_vec3(p_b))


def measure_angles_from_ris(p, p_s) -> AnglePair:
    """Angle pair of a 3-D point ``p`` seen from the STAR-RIS."""
    return _angles_of(as_vec3(p) - as_vec3(p_s))


def jacobian_measure(c, p_b) -> np.ndarray:
    """d(elevation, azimuth)/d(x, y) of :func:`measure_angles_from_bs`.

    With ``d = p - p_B``, ``rho = |(d_x, d_z)|`` and ``R = |d|`` the map is
    ``elevation = atan2(|d_z|, d_x)``, ``azimuth = arcsin(d_y / R)``; a ground
    point has no z freedom, so only the x/y partials are returned.
    """
    d = as_vec3(c) - as_vec3(p_b)
    dx, dy, dz = d
    rho2 = dx * dx + dz * dz
    if rho2 == 0.0:
        raise DegenerateGeometryError("direction is parallel to the Y axis")
    rho = np.sqrt(rho2)
    r2 = rho2 + dy * dy
    return np.array([
        [-abs(dz) / rho2, 0.0],
        [-dx * dy / (rho * r2), rho / r2],
    ])


def measure_batch(cs: np.ndarray, p_b) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized angles and Jacobians for an ``(n, 2)`` array of states."""
    pb = as_vec3(p_b)
    cs = np.asarray(cs, dtype=float).reshape(-1, 2)
    dx = cs[:, 0] - pb[0]
    dy = cs[:, 1] - pb[1]
    dz = np.full_like(dx, -pb[2])
    rho2 = dx * dx + dz * dz
    if np.any(rho2 == 0.0):
        raise DegenerateGeometryError("direction is parallel to the Y axis")
    rho = np.sqrt(rho2)
    r2 = rho2 + dy * dy
    r = np.sqrt(r2)
    z = np.empty((len(cs), 2))
    z[:, 0] = np.arccos(np.clip(dx / rho, -1.0, 1.0))
    z[:, 1] = np.pi / 2 - np.arccos(np.clip(dy / r, -1.0, 1.0))
    jac = np.zeros((len(cs), 2, 2))
    jac[:, 0, 0] = -np.abs(dz) / rho2
    jac[:, 1, 0] = -dx * dy / (rho * r2)
    jac[:, 1, 1] = rho / r2
    return z, jac


def invert_bs_angles(angles, p_b) -> np.ndarray:
    """Ground point whose BS angle pair is ``angles`` (inverse of the map).

    Only defined when the BS is above the ground plane.
    """
    pb = as_vec3(p_b)
    h = pb[2]
    if h <= 0:
        raise DegenerateGeometryError("inverse needs the BS above ground")
    phi, psi = angles
    dx = h / np.tan(phi) if not np.isclose(phi, np.pi / 2) else 0.0
    rho = np.hypot(dx, h)
    dy = rho * np.tan(psi)
    return np.array([pb[0] + dx, pb[1] + dy])


def great_circle(a, b) -> float:
    """Angular distance between two (elevation, azimuth) directions.

    Both directions are mapped to ``(cos psi cos phi, sin psi, cos psi sin phi)``;
    the sign of the z component is dropped since both sides share it.
    """
    def unit(ang):
        phi, psi = ang
        return np.array([np.cos(psi) * np.cos(phi), np.sin(psi), np.cos(psi) * np.sin(phi)])

    return float(np.arccos(np.clip(unit(a) @ unit(b), -1.0, 1.0)))
