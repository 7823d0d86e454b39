import math

import numpy as np
import pytest

from starris.beam import subbeam_bs, subbeam_ris
from starris.channel import (
    SPEED_OF_LIGHT,
    FramePlan,
    IndoorChannel,
    LinkGeometry,
    PathParams,
    PowerDelayProfile,
    StaticScatterer,
    bistatic_doppler,
    build_outdoor_paths,
    path_amplitude,
    received_ris_preamble,
    received_snr_ut,
    received_ut_data,
    zadoff_chu,
)
from starris.geometry import AnglePair, UpaGeometry, measure_angles_from_bs, steering_vector
from starris.scene import TargetTruth

LAM = SPEED_OF_LIGHT / 30e9
LINK = LinkGeometry(UpaGeometry(16, 16, LAM), UpaGeometry(16, 16, LAM), [0, 0, 12], [50, 0, 6])
TS = LINK.sample_period


def _path(aod=(0.8, 0.2), aoa=(0.6, -0.3), gain=1.0, delay=0.0, nu=0.0, pid=0):
    return PathParams(pid, abs(gain), float(np.angle(gain)), delay, nu,
                      AnglePair(*aod), AnglePair(*aoa), nu != 0.0)


def _matched(aod):
    return subbeam_bs(aod, LINK.bs) / math.sqrt(LINK.bs.size)


def test_amplitude_arithmetic():
    assert path_amplitude(1.0, 0.01, 2e-7) == pytest.approx(1e-4 / (SPEED_OF_LIGHT * 2e-7) ** 2, rel=1e-15)
    assert path_amplitude(1.0, 0.01, 2e-7) == pytest.approx(2.78e-8, rel=2e-3)


def test_static_paths_have_zero_doppler_and_snapped_delay():
    statics = [StaticScatterer(-1, [20, 15, 0], 1.0)]
    paths = build_outdoor_paths([], statics, LINK, np.random.default_rng(0))
    p = paths[0]
    assert p.doppler == 0.0 and not p.dynamic
    assert p.delay > 0
    assert abs(p.delay / TS - round(p.delay / TS)) < 1e-9
    dist = np.linalg.norm([20, 15, -12]) + np.linalg.norm([30, -15, 6])
    assert abs(p.delay - dist / SPEED_OF_LIGHT) <= TS / 2
    assert p.amplitude == pytest.approx(path_amplitude(1.0, LAM, p.delay))
    assert p.aod_bs == measure_angles_from_bs([20, 15], LINK.p_b)


def test_doppler_zero_for_perpendicular_motion():
    p = np.array([25.0, 0.0, 0.0])
    u_in = (p - LINK.p_b) / np.linalg.norm(p - LINK.p_b)
    u_out = (LINK.p_s - p) / np.linalg.norm(LINK.p_s - p)
    v = np.cross(u_in, u_out)
    v = 2 * v / np.linalg.norm(v)
    assert abs(bistatic_doppler(p, v, LINK.p_b, LINK.p_s, LAM)) < 1e-9


def test_doppler_is_path_length_rate():
    p = np.array([20.0, 5.0, 0.0])
    v = np.array([1.5, -0.7, 0.0])
    h = 1e-6

    def length(q):
        return np.linalg.norm(q - LINK.p_b) + np.linalg.norm(LINK.p_s - q)

    rate = (length(p + h * v) - length(p - h * v)) / (2 * h)
    assert bistatic_doppler(p, v, LINK.p_b, LINK.p_s, LAM) == pytest.approx(-rate / LAM, rel=1e-6)


def test_phase_persists_per_scatterer():
    phases = {}
    rng = np.random.default_rng(3)
    t0 = [TargetTruth(4, [20, 0], [1, 0], 5.0)]
    t1 = [TargetTruth(4, [20.5, 0], [1, 0], 5.0)]
    a = build_outdoor_paths(t0, [], LINK, rng, phases)[0]
    b = build_outdoor_paths(t1, [], LINK, rng, phases)[0]
    assert a.phase == b.phase and a.doppler != 0.0 and a.dynamic


def test_power_delay_profile_scale():
    pdp = PowerDelayProfile(tau_max=5e-7)
    assert pdp.scale(0.0) == 1.0
    assert pdp.scale(5e-7) == pytest.approx(math.exp(-0.5))
    paths = build_outdoor_paths([], [StaticScatterer(-1, [20, 15, 0], 1.0)], LINK,
                                np.random.default_rng(0), pdp=pdp)
    assert paths[0].pdp_scale == pytest.approx(pdp.scale(paths[0].delay))


def test_preamble_single_path_closed_form():
    p = _path(gain=0.3 - 0.4j)
    t = zadoff_chu(64)
    F = np.outer(_matched(p.aod_bs), np.ones(1))
    y = received_ris_preamble([p], LINK, F, t, 1, 0.0)
    a_o1 = steering_vector(LINK.ris, p.aoa_ris)[0]
    assert np.allclose(y, p.gain * a_o1 * 16 * t, atol=1e-12)


def test_preamble_delay_is_circular_shift():
    t = zadoff_chu(64)
    F = _matched((0.8, 0.2))
    y0 = received_ris_preamble([_path()], LINK, F, t, 1, 0.0)
    y3 = received_ris_preamble([_path(delay=3 * TS)], LINK, F, t, 1, 0.0)
    assert np.allclose(y3, np.roll(y0, 3), atol=1e-12)


def test_preamble_zero_paths_is_noise():
    y = received_ris_preamble([], LINK, _matched((0.5, 0.1)), np.ones(20_000), 1, 2e-3,
                              np.random.default_rng(0))
    assert np.var(y) == pytest.approx(2e-3, rel=0.05)


def test_preamble_linear_in_gain():
    t = zadoff_chu(64)
    F = _matched((0.8, 0.2))
    a = received_ris_preamble([_path(gain=1.0, nu=50.0)], LINK, F, t, 2, 0.0)
    b = received_ris_preamble([_path(gain=2.5j, nu=50.0)], LINK, F, t, 2, 0.0)
    assert np.allclose(b, 2.5j * a, atol=1e-12)
    both = received_ris_preamble([_path(gain=1.0, nu=50.0), _path((1.2, -0.4), gain=0.7, pid=1)],
                                 LINK, F, t, 2, 0.0)
    single = received_ris_preamble([_path((1.2, -0.4), gain=0.7, pid=1)], LINK, F, t, 2, 0.0)
    assert np.allclose(both, a + single, atol=1e-12)


def test_preamble_without_doppler_is_time_invariant():
    t = zadoff_chu(64)
    F = _matched((0.8, 0.2))
    paths = [_path(delay=2 * TS), _path((1.1, 0.3), gain=0.5j, delay=5 * TS, pid=1)]
    ys = [received_ris_preamble(paths, LINK, F, t, l, 0.0) for l in (1, 2, 7)]
    assert np.allclose(ys[0], ys[1]) and np.allclose(ys[0], ys[2])
    moving = [_path(delay=2 * TS, nu=300.0)]
    assert not np.allclose(received_ris_preamble(moving, LINK, F, t, 1, 0.0),
                           received_ris_preamble(moving, LINK, F, t, 2, 0.0))


def test_preamble_energy():
    p = _path((0.9, -0.1))
    F = _matched((0.7, 0.25))
    t = zadoff_chu(64)
    noise = 1e-2
    rng = np.random.default_rng(5)
    e = np.mean([np.vdot(y, y).real / 64 for y in
                 (received_ris_preamble([p], LINK, F, t, 1, noise, rng) for _ in range(2000))])
    a_o1 = steering_vector(LINK.ris, p.aoa_ris)[0]
    want = abs(a_o1) ** 2 * abs(steering_vector(LINK.bs, p.aod_bs) @ F) ** 2 + noise
    assert e == pytest.approx(want, rel=0.02)


def test_preamble_dimension_mismatch():
    with pytest.raises(ValueError):
        received_ris_preamble([_path()], LINK, np.ones(10), np.ones(8), 1, 0.0)


INDOOR = IndoorChannel(0.8 + 0.1j, 2 * TS, AnglePair(2.1, 0.35))


def _designed(p):
    return subbeam_ris(INDOOR.aod_ris, p.aoa_ris, LINK.ris), _matched(p.aod_bs)


def test_ut_designed_beats_random_alternatives():
    p = _path()
    d = zadoff_chu(128)
    omega, f = _designed(p)
    y0 = received_ut_data([p], LINK, INDOOR, omega, f, d, 0.0)
    best = np.vdot(y0, y0).real
    rng = np.random.default_rng(8)
    for _ in range(100):
        w = np.exp(1j * rng.uniform(0, 2 * np.pi, LINK.ris.size))
        F = np.exp(1j * rng.uniform(0, 2 * np.pi, (LINK.bs.size, LINK.n_rf_bs)))
        y = received_ut_data([p], LINK, INDOOR, w, F, d, 0.0)
        assert np.vdot(y, y).real < best


def test_ut_rejects_active_phases():
    with pytest.raises(ValueError):
        received_ut_data([_path()], LINK, INDOOR, 2 * np.ones(256), _matched((0.8, 0.2)),
                         np.ones(8), 0.0)


def test_ut_zero_indoor_gain_is_noise():
    p = _path()
    omega, f = _designed(p)
    dead = IndoorChannel(0.0, 0.0, INDOOR.aod_ris)
    y = received_ut_data([p], LINK, dead, omega, f, np.ones(20_000), 1e-3, np.random.default_rng(1))
    assert np.var(y) == pytest.approx(1e-3, rel=0.05)
    assert not received_ut_data([p], LINK, dead, omega, f, np.ones(8), 0.0).any()


def test_ut_noise_floor_scales():
    p = _path()
    omega, f = _designed(p)
    dead = IndoorChannel(0.0, 0.0, INDOOR.aod_ris)
    v = [np.var(received_ut_data([p], LINK, dead, omega, f, np.ones(40_000), s,
                                 np.random.default_rng(2))) for s in (1e-3, 2e-3)]
    assert v[1] / v[0] == pytest.approx(2.0, rel=0.03)


def test_snr_monotone_and_limit():
    p = _path()
    omega, f = _designed(p)
    snrs = [received_snr_ut([p], LINK, INDOOR, omega, f, s) for s in (1e-12, 1e-10, 1e-8, 1.0)]
    assert all(a > b for a, b in zip(snrs, snrs[1:]))
    assert received_snr_ut([p], LINK, INDOOR, omega, f, math.inf) == -math.inf
    assert received_snr_ut([p], LINK, INDOOR, omega, f, 1e-10) == snrs[1]


def test_snr_bs_array_gain_gap():
    p = _path()
    omega, f = _designed(p)
    single = np.zeros(LINK.bs.size, dtype=complex)
    single[0] = 1.0
    gap = (received_snr_ut([p], LINK, INDOOR, omega, f, 1e-10)
           - received_snr_ut([p], LINK, INDOOR, omega, single, 1e-10))
    assert gap == pytest.approx(10 * math.log10(LINK.bs.size), abs=1e-9)


def test_frame_plan_defaults():
    plan = FramePlan.from_link(LINK, 64, 128, 5e-7)
    assert (plan.l_bs, plan.l_ut) == (8, 8)
    with pytest.raises(ValueError):
        FramePlan.from_link(LINK, 40, 128, 5e-7)


def test_indoor_delay_non_negative():
    with pytest.raises(ValueError):
        IndoorChannel(1.0, -1e-9, AnglePair(1.0, 0.0))
