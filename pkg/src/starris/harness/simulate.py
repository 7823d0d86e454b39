"""Per-period sensing, tracking and beam-design loop."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import beam as bm
from .. import gmphd
from ..channel import (
    FramePlan,
    LinkGeometry,
    PowerDelayProfile,
    StaticScatterer,
    build_outdoor_paths,
    draw_indoor,
    received_snr_ut,
    received_ut_data,
    zadoff_chu,
)
from ..geometry import AnglePair, UpaGeometry, measure_angles_from_bs, measure_batch
from ..scene import (
    AngleRegion,
    Birth,
    ClutterModel,
    ConfigurationError,
    Exit,
    MotionParams,
    Spawn,
    TargetClass,
    TargetTruth,
    classify_by_rcs,
    evolve_scene,
    gen_measurements,
    identify_dynamic,
    rotate90,
)
from .config import ScenarioConfig
from .metrics import PeriodMetrics, RunReport, angle_rmse, associate

# independent random streams of one trial, in spawn order
STREAMS = ("truth", "measure", "clutter", "phase", "indoor", "doppler", "noise", "gain")
# gate on the angle distance between a track's predicted angles and a measurement
GAIN_GATE_RAD = 0.05


@dataclass
class World:
    """Objects derived once from a config."""

    cfg: ScenarioConfig
    link: LinkGeometry
    motion: MotionParams
    region: AngleRegion
    clutter: ClutterModel
    params: gmphd.PhdParams
    statics: list
    pdp: PowerDelayProfile
    plan: FramePlan
    indoor_aod: AnglePair
    data: np.ndarray
    events: dict = field(default_factory=dict)


def build_world(cfg: ScenarioConfig) -> World:
    cfg.validate()
    g = cfg.geometry
    lam = 299_792_458.0 / g.carrier_hz
    link = LinkGeometry(
        UpaGeometry(int(g.bs_array[0]), int(g.bs_array[1]), lam),
        UpaGeometry(int(g.ris_array[0]), int(g.ris_array[1]), lam),
        g.p_b, g.ris_position, g.sample_period, g.n_rf_bs, g.n_rf_ris,
    )
    area = g.area
    region = AngleRegion(area, link.p_b)
    clutter = ClutterModel(cfg.sensing.clutter_mean, region)
    sig = math.radians(cfg.sensing.sigma_ang_deg)
    f = cfg.filter
    motion = MotionParams(cfg.dt, cfg.targets.sigma_v)
    ins = f.birth_inset
    birth_pts = [
        (area.x_min + ins, 0.5 * (area.y_min + area.y_max)),
        (area.x_max - ins, 0.5 * (area.y_min + area.y_max)),
        (0.5 * (area.x_min + area.x_max), area.y_min + ins),
        (0.5 * (area.x_min + area.x_max), area.y_max - ins),
    ]
    params = gmphd.PhdParams(
        p_b=link.p_b,
        # tiny floor keeps S invertible in the noiseless limit
        meas_cov=max(sig * sig + math.radians(f.meas_inflation_deg) ** 2, 1e-18) * np.eye(2),
        process_cov=motion.process_cov(f.sigma_v),
        birth=gmphd.make_birth(birth_pts, f.birth_weight, f.birth_var * np.eye(2)),
        p_survive=f.p_survive,
        p_detect=f.p_detect,
        clutter_rate=clutter.mean_count / region.volume,
        clutter_volume=region.volume,
        clutter_density=region.density,
        prune_threshold=f.prune_threshold,
        merge_threshold=f.merge_threshold,
        extract_threshold=f.extract_threshold,
        max_components=int(f.max_components),
    )
    ch = cfg.channel
    statics = [StaticScatterer(-(i + 1), s.position, s.rcs) for i, s in enumerate(ch.statics)]
    events: dict = {}
    ev = cfg.events
    for e in ev.births:
        events.setdefault(e["k"], []).append(
            Birth(e["k"], tuple(e["position"]), tuple(e["velocity"]), e.get("rcs", 2.0)))
    for e in ev.spawns:
        vel = e.get("velocity")
        events.setdefault(e["k"], []).append(
            Spawn(e["k"], e["parent"], tuple(e["offset"]), None if vel is None else tuple(vel), e.get("rcs", 0.5)))
    for e in ev.exits:
        events.setdefault(e["k"], []).append(Exit(e["k"], e["target"]))
    events = {k: v for k, v in events.items() if k <= cfg.periods}
    return World(
        cfg, link, motion, region, clutter, params, statics,
        PowerDelayProfile(ch.tau_max),
        FramePlan.from_link(link, ch.n_training, ch.n_data, ch.tau_max),
        AnglePair(math.radians(ch.indoor_aod_deg[0]), math.radians(ch.indoor_aod_deg[1])),
        zadoff_chu(ch.n_data),
        events,
    )


def trial_streams(seed: int, trial: int) -> dict:
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, ss.spawn(len(STREAMS)))}


def _nominal_track(p0, v, dt, k0, periods):
    steps = np.arange(0, periods - k0 + 1)[:, None]
    return np.asarray(p0) + steps * dt * np.asarray(v)


def initial_targets(world: World, rng: np.random.Generator) -> list[TargetTruth]:
    """Explicit targets from the config, or random straight tracks that stay in the area."""
    cfg = world.cfg
    t = cfg.targets
    if t.initial:
        return [TargetTruth(i, d["position"], d["velocity"], d.get("rcs", t.rcs), sigma_v=t.sigma_v)
                for i, d in enumerate(t.initial)]
    area = cfg.geometry.area
    lo = np.array([area.x_min + t.margin, area.y_min + t.margin])
    hi = np.array([area.x_max - t.margin, area.y_max - t.margin])
    spawns = {e.parent: e for evs in world.events.values() for e in evs if isinstance(e, Spawn)}
    out = []
    for i in range(t.count):
        for _ in range(100_000):
            p0 = rng.uniform(lo, hi)
            ang = rng.uniform(0, 2 * np.pi)
            v = rng.uniform(t.speed_min, t.speed_max) * np.array([np.cos(ang), np.sin(ang)])
            track = _nominal_track(p0, v, cfg.dt, 1, cfg.periods)
            ok = np.all((track >= lo) & (track <= hi))
            if ok and i in spawns:
                e = spawns[i]
                start = track[e.k - 1] + np.asarray(e.offset)
                cv = rotate90(v) if e.velocity is None else np.asarray(e.velocity)
                child = _nominal_track(start, cv, cfg.dt, e.k, cfg.periods)
                ok = np.all((child >= lo) & (child <= hi))
            if ok:
                break
        else:
            raise ConfigurationError("targets: no straight track fits inside the area; lower the speed")
        out.append(TargetTruth(i, p0, v, t.rcs, sigma_v=t.sigma_v))
    return out


@dataclass
class Track:
    position: np.ndarray
    gain: complex
    rcs: float


def _attach_measurements(states, measurements, p_b, fallback_gains, rng) -> list[Track]:
    """Carry the gain and rcs of the nearest measurement onto each extracted state."""
    if len(states) == 0:
        return []
    zs = np.array([m.z for m in measurements]).reshape(-1, 2)
    pred, _ = measure_batch(states, p_b)
    mags = [abs(m.gain) for m in measurements if not m.is_clutter and m.gain != 0]
    mags += [abs(g) for g in fallback_gains]
    med = float(np.median(mags)) if mags else 1.0
    out = []
    for s, a in zip(states, pred):
        if len(zs):
            d = np.linalg.norm(zs - a, axis=1)
            j = int(np.argmin(d))
            if d[j] < GAIN_GATE_RAD and measurements[j].gain != 0:
                out.append(Track(s.copy(), complex(measurements[j].gain), measurements[j].rcs_hat))
                continue
        out.append(Track(s.copy(), med * np.exp(1j * rng.uniform(0, 2 * np.pi)), 1.0))
    return out


def _design(world: World, preds, static_paths) -> bm.BeamDesign:
    link = world.link
    eps = math.radians(world.cfg.beam.collision_deg)
    hits = bm.collision_predict(preds, static_paths, eps, link.p_b)
    preds, static_paths = bm.drop_blocked(preds, static_paths, hits)
    if not preds and not static_paths:
        f = np.ones(link.bs.size) / math.sqrt(link.bs.size)
        return bm.BeamDesign.from_vectors(f, np.ones(link.ris.size), link.n_rf_bs)
    return bm.design(preds, static_paths, world.indoor_aod, link.bs, link.ris, link.n_rf_bs)


def _predictions(world: World, tracks) -> list[bm.PathPrediction]:
    link = world.link
    return bm.predict_path_angles([t.position for t in tracks], link.p_b, link.p_s,
                                  [t.gain for t in tracks])


def codebook_groups(angles, geom: UpaGeometry, n_rf: int, window: float) -> set[int]:
    """Indices of the RF-chain-sized DFT beam groups touched by a window around each direction.

    Beams sit on the grid ``u, v in -1 + 2 i / n`` of the spatial frequencies
    ``u = sin(phi) sin(psi)``, ``v = sin(phi) cos(psi)``; consecutive
    ``n_rf`` beams (x-major) share one training sequence.
    """
    ux = -1 + 2 * np.arange(geom.n_x) / geom.n_x
    uy = -1 + 2 * np.arange(geom.n_y) / geom.n_y

    def wrap(d):
        return np.abs((d + 1) % 2 - 1)

    groups = set()
    for phi, psi in angles:
        u = math.sin(phi) * math.sin(psi)
        v = math.sin(phi) * math.cos(psi)
        ix = np.flatnonzero(wrap(ux - u) <= window)
        iy = np.flatnonzero(wrap(uy - v) <= window)
        for i in ix:
            for j in iy:
                groups.add(int((i * geom.n_y + j) // n_rf))
    return groups


def overhead_account(cfg: ScenarioConfig, tracked: bool = False, angles=None) -> dict:
    """Training sequences for a full scan, or a reduced BS scan around ``angles``.

    Without ``angles`` the tracked count uses the config's initial targets and
    static scatterers.
    """
    world = build_world(cfg)
    plan = world.plan
    if not tracked:
        return {"l_bs": plan.l_bs, "l_ut": plan.l_ut, "total": plan.l_bs + plan.l_ut}
    if angles is None:
        targets = initial_targets(world, trial_streams(cfg.seed, 0)["truth"])
        pts = [t.position for t in targets] + [s.position for s in world.statics]
        angles = [measure_angles_from_bs(p, world.link.p_b) for p in pts]
    n = len(codebook_groups(angles, world.link.bs, world.link.n_rf_bs, cfg.beam.scan_window))
    return {"l_bs": n, "l_ut": 0, "total": n}


def run_trial(world: World, trial: int, dump_dir=None) -> list[PeriodMetrics]:
    cfg = world.cfg
    link = world.link
    params = world.params
    rngs = trial_streams(cfg.seed, trial)
    R = math.radians(cfg.sensing.sigma_ang_deg) ** 2 * np.eye(2)
    noise_var = cfg.channel.noise_var
    gate_hz = cfg.sensing.doppler_gate_sigmas * cfg.sensing.doppler_noise_hz
    eps = cfg.beam.collision_deg
    indoor = draw_indoor(link, world.indoor_aod, cfg.channel.indoor_delay,
                         cfg.channel.indoor_variance, rngs["indoor"])

    truth = initial_targets(world, rngs["truth"])
    ids = itertools.count(len(truth))
    phases: dict = {}
    post = gmphd.GmIntensity()
    tracks: list[Track] = []
    fixed = None
    rescan = True
    eta_hist: list[float] = []
    Z_prev: list = []
    spawn_on = gmphd.SpawnModel((cfg.filter.spawn_weight,), ((0.0, 0.0),))
    spawn_off = gmphd.SpawnModel()
    out = []

    for k in range(1, cfg.periods + 1):
        if k > 1:
            truth = evolve_scene(truth, world.events.get(k, []), cfg.geometry.area, world.motion,
                                 rngs["truth"], ids)
        paths = build_outdoor_paths(truth, world.statics, link, rngs["phase"], phases, world.pdp)
        # physical blockage between true scatterers
        true_preds = [bm.PathPrediction(p.id, p.position, p.aod_bs, p.aoa_ris, p.equivalent_gain)
                      for p in paths if p.dynamic]
        static_all = [p for p in paths if not p.dynamic]
        hits = bm.collision_predict(true_preds, static_all, math.radians(eps), link.p_b)
        vis_dyn, vis_sta = bm.drop_blocked(true_preds, static_all, hits)
        visible_ids = {p.id for p in vis_dyn} | {s.id for s in vis_sta}
        paths = [p for p in paths if p.id in visible_ids]

        nu_hat = [p.doppler + cfg.sensing.doppler_noise_hz * rngs["doppler"].standard_normal() for p in paths]
        dynamic, static_paths = identify_dynamic(paths, gate_hz, nu_hat)
        nu_of = {p.id: nu for p, nu in zip(paths, nu_hat)}
        dyn_ids = {p.id for p in dynamic}
        measured = [t for t in truth if t.id in dyn_ids]
        info = {p.id: (nu_of[p.id], p.equivalent_gain) for p in dynamic}
        Z = gen_measurements(measured, link.p_b, cfg.sensing.p_detect, R, world.clutter,
                             rngs["measure"], rngs["clutter"], info)

        static_gains = [s.equivalent_gain for s in static_paths]
        if k == 1:
            # first full-space scan: no prior, start from the detections
            post = gmphd.measurement_driven_intensity(Z, params, cfg.filter.init_weight)
            post = gmphd.prune_merge(post, params.prune_threshold, params.merge_threshold,
                                     params.max_components)
            states, _ = gmphd.extract(post, params.extract_threshold)
        else:
            classes = classify_by_rcs([t.rcs for t in tracks]) if tracks else []
            step = replace(params, spawn=spawn_on if any(c >= TargetClass.MIDDLE for c in classes) else spawn_off)
            if cfg.filter.adaptive_birth:
                # weak births at last period's detections so targets lost inside the area can re-enter
                scan = gmphd.measurement_driven_intensity(
                    Z_prev, params, cfg.filter.birth_weight, cfg.filter.birth_var * np.eye(2))
                step = replace(step, birth=gmphd.GmIntensity.concat([params.birth, scan]))
            post, states = gmphd.filter_step(post, Z, step)
        new_tracks = _attach_measurements(states, Z, link.p_b, static_gains, rngs["gain"])

        # beams: the tracked design uses the previous period's tracks unless this period scanned
        use = new_tracks if rescan else tracks
        tracked = _design(world, _predictions(world, use), static_paths)
        if fixed is None:
            fixed = tracked
        oracle = _design(world, [p for p in vis_dyn], static_paths)
        snr = {name: received_snr_ut(paths, link, indoor, d.omega, d.F_b, noise_var, world.data)
               for name, d in (("fixed", fixed), ("tracked", tracked), ("oracle", oracle))}

        y = received_ut_data(paths, link, indoor, tracked.omega, tracked.F_b, world.data,
                             noise_var, rngs["noise"])
        eta = float(np.vdot(y, y).real)

        if rescan:
            overhead = world.plan.l_bs + world.plan.l_ut
        else:
            angles = [p.aod_bs for p in _predictions(world, tracks)] + [s.aod_bs for s in static_paths]
            overhead = len(codebook_groups(angles, link.bs, link.n_rf_bs, cfg.beam.scan_window))

        truth_pos = np.array([t.position for t in truth]).reshape(-1, 2)
        ei, ti, dist = associate(states, truth_pos, cfg.beam.gate_m)
        loc = float(np.sqrt(np.mean(dist ** 2))) if len(dist) else math.nan
        ang = math.nan
        if len(ei):
            za, _ = measure_batch(states[ei], link.p_b)
            zb, _ = measure_batch(truth_pos[ti], link.p_b)
            ang = angle_rmse(za, zb)

        did_scan = rescan
        chi = cfg.beam.mismatch_ratio * float(np.median(eta_hist)) if len(eta_hist) >= cfg.beam.mismatch_warmup else 0.0
        trigger = bm.mismatch_detect(eta, chi) if chi > 0 else False
        if trigger:
            eta_hist = []
        else:
            eta_hist.append(eta)
        rescan = trigger

        out.append(PeriodMetrics(
            trial, k, len(truth), len(states), loc, ang,
            snr["fixed"], snr["tracked"], snr["oracle"], int(overhead), did_scan, eta,
        ))
        tracks = new_tracks
        Z_prev = Z
        if dump_dir is not None:
            Path(dump_dir).mkdir(parents=True, exist_ok=True)
            Path(dump_dir, f"intensity_{k}.txt").write_text(
                gmphd.dumps(post, f"trial={trial} k={k}"))
    return out


def run_scenario(cfg: ScenarioConfig, trial: int = 0, dump_dir=None) -> RunReport:
    world = build_world(cfg)
    return RunReport(cfg.to_dict(), cfg.seed, run_trial(world, trial, dump_dir), cfg.digest())


def _run_one(args):
    cfg, trial = args
    return run_trial(build_world(cfg), trial)


def monte_carlo(cfg: ScenarioConfig, trials: int, workers: int = 1) -> RunReport:
    """Independent trials; trial ``i`` always uses the stream derived from ``(seed, i)``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    world = build_world(cfg)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_one, [(cfg, i) for i in range(trials)]))
    else:
        results = [run_trial(world, i) for i in range(trials)]
    periods = [m for r in results for m in r]
    return RunReport(cfg.to_dict(), cfg.seed, periods, cfg.digest())


SWEEPABLE = {
    "angle_rmse": "sensing__sigma_ang_deg",
    "sigma_ang": "sensing__sigma_ang_deg",
    "targets": "targets__count",
    "speed": "targets__speed_max",
    "clutter": "sensing__clutter_mean",
}


def sweep(cfg: ScenarioConfig, param: str, values, trials: int, workers: int = 1) -> dict:
    """One Monte-Carlo report per value; all values share the trial seeds."""
    try:
        key = SWEEPABLE[param]
    except KeyError:
        raise ConfigurationError(f"cannot sweep {param!r}; choose from {sorted(SWEEPABLE)}") from None
    out = {}
    for v in values:
        c = cfg.with_overrides(**{key: v})
        if param == "speed":
            c = c.with_overrides(targets__speed_min=min(c.targets.speed_min, v))
        out[v] = monte_carlo(c, trials, workers)
    return out
