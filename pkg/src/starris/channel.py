"""Geometric BS -> scatterer -> STAR-RIS -> UT channel and received signals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AnglePair,
    UpaGeometry,
    as_vec3,
    measure_angles_from_bs,
    measure_angles_from_ris,
    steering_vector,
)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class LinkGeometry:
    """Static layout shared by every period of a run."""

    bs: UpaGeometry
    ris: UpaGeometry
    p_b: np.ndarray
    p_s: np.ndarray
    sample_period: float = 1e-8
    n_rf_bs: int = 32
    n_rf_ris: int = 5

    def __post_init__(self):
        object.__setattr__(self, "p_b", as_vec3(self.p_b))
        object.__setattr__(self, "p_s", as_vec3(self.p_s))

    @property
    def wavelength(self) -> float:
        return self.bs.wavelength


@dataclass(frozen=True)
class StaticScatterer:
    id: int
    position: np.ndarray
    rcs: float

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))


@dataclass(frozen=True)
class PathParams:
    id: int
    amplitude: float
    phase: float
    delay: float
    doppler: float
    aod_bs: AnglePair
    aoa_ris: AnglePair
    dynamic: bool
    position: np.ndarray = field(default=None, compare=False)
    pdp_scale: float = 1.0

    @property
    def gain(self) -> complex:
        return self.amplitude * self.pdp_scale * np.exp(1j * self.phase)

    @property
    def equivalent_gain(self) -> complex:
        return self.gain * np.exp(2j * np.pi * self.doppler * self.delay)


@dataclass(frozen=True)
class IndoorChannel:
    gain: complex
    delay: float
    aod_ris: AnglePair

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("indoor delay must be non-negative")


@dataclass(frozen=True)
class PowerDelayProfile:
    """``|h_p|^2`` scaled by ``sigma_c2 * exp(-tau / tau_max)``."""

    tau_max: float
    sigma_c2: float = 1.0

    def scale(self, tau: float) -> float:
        return math.sqrt(self.sigma_c2 * math.exp(-tau / self.tau_max))


@dataclass(frozen=True)
class FramePlan:
    n_training: int
    l_bs: int
    l_ut: int
    n_data: int
    sample_period: float

    @classmethod
    def from_link(cls, link: LinkGeometry, n_training: int, n_data: int, tau_max: float) -> "FramePlan":
        if link.bs.size % link.n_rf_bs:
            raise ValueError("BS codebook size must be a multiple of its RF chains")
        if link.n_rf_ris < 2:
            raise ValueError("the STAR-RIS needs at least two RF chains")
        if n_training < tau_max / link.sample_period:
            raise ValueError(
                f"training length {n_training} shorter than the maximum delay "
                f"({tau_max / link.sample_period:.1f} samples)")
        return cls(
            n_training,
            link.bs.size // link.n_rf_bs,
            math.ceil((link.ris.n_x + link.ris.n_y - 1) / (link.n_rf_ris - 1)),
            n_data,
            link.sample_period,
        )


def path_amplitude(rcs: float, wavelength: float, delay: float) -> float:
    return rcs * wavelength ** 2 / (SPEED_OF_LIGHT * delay) ** 2


def bistatic_doppler(position, velocity, p_b, p_s, wavelength: float) -> float:
    """Doppler of the BS -> scatterer -> RIS path for a ground velocity.

    Equals ``-(1/lambda) d(path length)/dt``.
    """
    p = as_vec3(position)
    v = as_vec3(velocity)
    u_in = (p - as_vec3(p_b)) / np.linalg.norm(p - as_vec3(p_b))
    u_out = (as_vec3(p_s) - p) / np.linalg.norm(as_vec3(p_s) - p)
    return float(v @ (u_out - u_in) / wavelength)


def snap_delay(tau: float, ts: float) -> float:
    return max(1, round(tau / ts)) * ts


def build_outdoor_paths(
    targets,
    statics,
    link: LinkGeometry,
    rng: np.random.Generator,
    phases: dict | None = None,
    pdp: PowerDelayProfile | None = None,
) -> list[PathParams]:
    """One path per scatterer, dynamic targets first.

    ``phases`` persists the random phase per scatterer id across periods;
    missing ids draw a fresh uniform phase from ``rng``.
    """
    phases = {} if phases is None else phases
    lam = link.wavelength
    out = []
    items = [(t.id, as_vec3(t.position), t.velocity, t.rcs, True) for t in targets]
    items += [(s.id, s.position, None, s.rcs, False) for s in statics]
    for sid, p, vel, rcs, dynamic in items:
        dist = np.linalg.norm(p - link.p_b) + np.linalg.norm(link.p_s - p)
        tau = snap_delay(dist / SPEED_OF_LIGHT, link.sample_period)
        if sid not in phases:
            phases[sid] = float(rng.uniform(0, 2 * np.pi))
        nu = bistatic_doppler(p, vel, link.p_b, link.p_s, lam) if dynamic else 0.0
        out.append(PathParams(
            id=sid,
            amplitude=path_amplitude(rcs, lam, tau),
            phase=phases[sid],
            delay=tau,
            doppler=nu,
            aod_bs=measure_angles_from_bs(p, link.p_b),
            aoa_ris=measure_angles_from_ris(p, link.p_s),
            dynamic=dynamic,
            position=p,
            pdp_scale=1.0 if pdp is None else pdp.scale(tau),
        ))
    return out


def draw_indoor(link: LinkGeometry, aod_ris: AnglePair, delay: float, variance: float,
                rng: np.random.Generator) -> IndoorChannel:
    g = math.sqrt(variance / 2) * (rng.standard_normal() + 1j * rng.standard_normal())
    return IndoorChannel(complex(g), snap_delay(delay, link.sample_period) if delay > 0 else 0.0,
                         AnglePair(*aod_ris))


def effective_beam(precoder) -> np.ndarray:
    """``F_B 1`` scaled to unit norm (transmit power normalisation)."""
    F = np.asarray(precoder)
    x = F.sum(axis=1) if F.ndim == 2 else F
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def _awgn(n: int, noise_var: float, rng) -> np.ndarray:
    if noise_var == 0 or rng is None:
        return np.zeros(n, dtype=complex)
    return math.sqrt(noise_var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def doppler_vector(nu: float, n: int, ts: float) -> np.ndarray:
    return np.exp(2j * np.pi * nu * ts * np.arange(n))


def received_ris_preamble(paths, link: LinkGeometry, precoder, training, l_b: int,
                          noise_var: float, rng=None) -> np.ndarray:
    """Samples at the active STAR-RIS element for training sequence ``l_b`` (1-based)."""
    t = np.asarray(training, dtype=complex)
    n_t = len(t)
    x = effective_beam(precoder)
    if x.shape != (link.bs.size,):
        raise ValueError(f"precoder has {x.shape[0]} rows, BS has {link.bs.size} elements")
    ts = link.sample_period
    f_lb = (l_b - 1) * n_t
    y = np.zeros(n_t, dtype=complex)
    for p in paths:
        shift = round(p.delay / ts)
        a_o1 = steering_vector(link.ris, p.aoa_ris)[0]
        bs_gain = steering_vector(link.bs, p.aod_bs) @ x
        y += (p.equivalent_gain * np.exp(2j * np.pi * p.doppler * f_lb * ts)
              * doppler_vector(p.doppler, n_t, ts) * np.roll(t, shift) * a_o1 * bs_gain)
    return y + _awgn(n_t, noise_var, rng)


def cascade_gain(path: PathParams, link: LinkGeometry, indoor: IndoorChannel, omega, beam) -> complex:
    """``a_R^T diag(omega) a_O  a_B^T beam`` for one path (no path gain)."""
    a_r = steering_vector(link.ris, indoor.aod_ris)
    a_o = steering_vector(link.ris, path.aoa_ris)
    a_b = steering_vector(link.bs, path.aod_bs)
    return (a_r * omega) @ a_o * (a_b @ beam)


def _check_passive(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=complex)
    if not np.allclose(np.abs(w), 1.0, atol=1e-9):
        raise ValueError("refraction phase shifts must have unit modulus")
    return w


def ut_signal(paths, link: LinkGeometry, indoor: IndoorChannel, omega, precoder, data) -> np.ndarray:
    d = np.asarray(data, dtype=complex)
    n_d = len(d)
    w = _check_passive(omega)
    x = effective_beam(precoder)
    ts = link.sample_period
    y = np.zeros(n_d, dtype=complex)
    for p in paths:
        shift = round((p.delay + indoor.delay) / ts)
        y += (p.equivalent_gain * doppler_vector(p.doppler, n_d, ts) * np.roll(d, shift)
              * cascade_gain(p, link, indoor, w, x))
    return indoor.gain * y


def received_ut_data(paths, link: LinkGeometry, indoor: IndoorChannel, omega, precoder, data,
                     noise_var: float, rng=None) -> np.ndarray:
    """Noisy data-phase samples at the indoor UT."""
    y = ut_signal(paths, link, indoor, omega, precoder, data)
    return y + _awgn(len(y), noise_var, rng)


def zadoff_chu(n: int, root: int = 1) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-1j * np.pi * root * k * (k + (n % 2)) / n)


def received_snr_ut(paths, link: LinkGeometry, indoor: IndoorChannel, omega, precoder,
                    noise_var: float, data=None) -> float:
    """Noiseless UT signal power over ``noise_var`` in dB."""
    if data is None:
        data = zadoff_chu(128)
    y = ut_signal(paths, link, indoor, omega, precoder, data)
    power = float(np.vdot(y, y).real) / len(y)
    if noise_var == math.inf or power == 0.0:
        return -math.inf
    return 10 * math.log10(power / noise_var)
