import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest

from starris import gmphd
from starris.harness import cli
from starris.harness.config import (
    ScenarioConfig,
    from_dict,
    get_preset,
    load_config,
    preset_cardinality,
    write_toml,
)
from starris.harness.metrics import PeriodMetrics, RunReport, associate, rmse_metric
from starris.harness.report import emit, emit_sweep, read_metrics_csv, summary_text, write_metrics_csv
from starris.harness.simulate import (
    build_world,
    codebook_groups,
    monte_carlo,
    overhead_account,
    run_scenario,
    sweep,
    trial_streams,
)
from starris.scene import ConfigurationError

GOLDEN = Path(__file__).parent / "data" / "golden_metrics.csv"


def small(**kw):
    return ScenarioConfig(periods=6, seed=7).with_overrides(**kw)


def _csv(report, tmp_path, name="m.csv"):
    path = tmp_path / name
    write_metrics_csv(report.periods, path)
    return path.read_bytes()


# configuration


def test_validation_lists_field_paths():
    cfg = ScenarioConfig().with_overrides(dt=-1.0, sensing__p_detect=2.0, channel__noise_var=0.0)
    with pytest.raises(ConfigurationError) as err:
        cfg.validate()
    msg = str(err.value)
    for path in ("dt", "sensing.p_detect", "channel.noise_var"):
        assert f"{path}:" in msg


def test_unknown_fields_rejected():
    with pytest.raises(ConfigurationError, match="sensing.bogus"):
        from_dict({"sensing": {"bogus": 1}})
    with pytest.raises(ConfigurationError):
        ScenarioConfig().with_overrides(filter__nope=1)


def test_event_validation():
    cfg = preset_cardinality()
    cfg.events.spawns.append({"k": 1, "parent": 0, "offset": [1, 0]})
    with pytest.raises(ConfigurationError, match=r"events.spawns\[1\].k"):
        cfg.validate()


def test_toml_round_trip(tmp_path):
    cfg = preset_cardinality()
    path = tmp_path / "c.toml"
    write_toml(cfg, path)
    assert load_config(path).to_dict() == cfg.to_dict()


def test_toml_preset_with_overrides(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('preset = "cardinality"\nseed = 11\n[sensing]\nsigma_ang_deg = 0.1\n')
    cfg = load_config(path)
    assert cfg.seed == 11 and cfg.sensing.sigma_ang_deg == 0.1
    assert cfg.events.births == preset_cardinality().events.births


def test_with_overrides_casts_integral_floats():
    assert ScenarioConfig().with_overrides(targets__count=4.0).targets.count == 4
    assert isinstance(ScenarioConfig().with_overrides(targets__count=4.0).targets.count, int)


def test_digest_changes_with_config():
    a, b = ScenarioConfig(), ScenarioConfig().with_overrides(seed=1)
    assert a.digest() == ScenarioConfig().digest() != b.digest()


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        get_preset("nope")


# metrics


def test_rmse_trivial_cases():
    pts = np.array([[1.0, 2.0], [5.0, -3.0]])
    assert rmse_metric(pts, pts) == 0.0
    assert rmse_metric([[0.0, 0.0]], [[3.0, 0.0]]) == 3.0
    assert math.isnan(rmse_metric(np.zeros((0, 2)), np.zeros((0, 2))))
    assert math.isnan(rmse_metric([[0.0, 0.0]], [[30.0, 0.0]], gate=10.0))


def test_rmse_matches_exhaustive_assignment():
    rng = np.random.default_rng(0)
    # crossed nearest neighbours: greedy pairing is not optimal here
    est = np.array([[0.0, 0.0], [2.0, 0.0]])
    tru = np.array([[1.1, 0.0], [-1.0, 0.0]])
    for _ in range(200):
        if _:
            n = int(rng.integers(1, 6))
            est, tru = rng.uniform(0, 10, (n, 2)), rng.uniform(0, 10, (n, 2))
        # the matching minimises total distance; RMSE is then taken over it
        perm = min(itertools.permutations(range(len(tru))),
                   key=lambda p: np.linalg.norm(est - tru[list(p)], axis=1).sum())
        best = np.sqrt(np.mean(np.sum((est - tru[list(perm)]) ** 2, axis=1)))
        assert rmse_metric(est, tru) == pytest.approx(best, rel=1e-12)


def test_associate_unequal_sizes():
    ei, ti, d = associate([[0, 0], [10, 0], [20, 0]], [[10.5, 0]])
    assert list(ei) == [1] and list(ti) == [0] and d[0] == pytest.approx(0.5)


def test_period_metrics_rejects_negative_counts():
    with pytest.raises(ValueError):
        PeriodMetrics(0, 1, -1, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, False, 0.0)


# simulation


def test_trial_streams_are_independent_and_reproducible():
    a, b = trial_streams(3, 0), trial_streams(3, 0)
    assert a["truth"].random() == b["truth"].random()
    assert trial_streams(3, 0)["truth"].random() != trial_streams(3, 1)["truth"].random()
    s = trial_streams(3, 0)
    assert s["truth"].random() != s["measure"].random()


def test_determinism_byte_identical(tmp_path):
    assert _csv(run_scenario(small()), tmp_path, "a") == _csv(run_scenario(small()), tmp_path, "b")


def test_single_trial_monte_carlo_equals_run(tmp_path):
    assert _csv(monte_carlo(small(), 1), tmp_path, "a") == _csv(run_scenario(small()), tmp_path, "b")


def test_parallel_trials_match_serial(tmp_path):
    serial = monte_carlo(small(periods=3), 3)
    parallel = monte_carlo(small(periods=3), 3, workers=2)
    assert _csv(serial, tmp_path, "a") == _csv(parallel, tmp_path, "b")


def test_golden_metrics_csv(tmp_path):
    assert _csv(run_scenario(small()), tmp_path) == GOLDEN.read_bytes()


def test_metrics_rows_are_sane():
    rep = run_scenario(small())
    assert [p.k for p in rep.periods] == list(range(1, 7))
    assert rep.periods[0].rescan and rep.periods[0].overhead == 16
    for p in rep.periods:
        assert p.true_count >= 0 and p.est_count >= 0
        assert math.isnan(p.loc_rmse) or p.loc_rmse >= 0
        assert p.overhead <= 16


def test_zero_noise_single_target_converges():
    cfg = ScenarioConfig().with_overrides(
        targets__count=1, targets__speed_min=0.0, targets__speed_max=1e-3, targets__sigma_v=0.0,
        sensing__sigma_ang_deg=0.0, sensing__p_detect=1.0, filter__meas_inflation_deg=0.0,
        filter__p_detect=1.0, channel__statics=[])
    rep = run_scenario(cfg)
    assert list(rep.column("est_count")) == [1.0] * 25
    assert np.all(rep.column("loc_rmse")[5:] < 1e-6)


def test_tracking_preset_tracks_every_target():
    rep = monte_carlo(get_preset("tracking"), 20)
    perfect = [np.array_equal(rep.column("true_count", t), rep.column("est_count", t)) for t in rep.trials()]
    assert np.mean(perfect) >= 0.9
    assert np.mean(rep.column("true_count") == rep.column("est_count")) >= 0.99
    assert np.nanmax(rep.column("loc_rmse")) < 1.0


def test_cardinality_staircase_truth():
    rep = run_scenario(preset_cardinality())
    assert list(rep.column("true_count")) == [2] * 4 + [3] * 7 + [2] * 5 + [3] * 9


def test_intensity_dumps(tmp_path):
    run_scenario(small(periods=3), dump_dir=tmp_path)
    for k in (1, 2, 3):
        text = (tmp_path / f"intensity_{k}.txt").read_text()
        assert f"k={k}" in text.splitlines()[0]
        gmphd.loads(text).check()


def test_sweep_shares_trial_seeds():
    reps = sweep(small(periods=3), "angle_rmse", [0.001, 0.1], 2)
    assert set(reps) == {0.001, 0.1}
    assert np.array_equal(reps[0.001].column("true_count"), reps[0.1].column("true_count"))
    with pytest.raises(ConfigurationError):
        sweep(small(), "bogus", [1], 1)


@pytest.mark.slow
def test_standard_error_shrinks_with_trials():
    cfg = small(periods=4)
    se = {}
    for n in (8, 32):
        rep = monte_carlo(cfg, n)
        per_trial = [np.nanmean(rep.column("snr_tracked_db", t)) for t in rep.trials()]
        se[n] = np.std(per_trial, ddof=1) / math.sqrt(n)
    assert 0.25 <= se[32] / se[8] <= 0.85


# overhead


def test_overhead_full_scan():
    assert overhead_account(ScenarioConfig()) == {"l_bs": 8, "l_ut": 8, "total": 16}


def test_overhead_reduced_two_groups():
    geom = build_world(ScenarioConfig()).link.bs
    # beam grid u, v = -1 + 2 i / 16; groups are pairs of x rows
    u0, u1, v = -1 + 2 * 9 / 16, -1 + 2 * 13 / 16, -1 + 2 * 11 / 16

    def ang(u):
        return (math.asin(math.hypot(u, v)), math.atan2(u, v))

    assert codebook_groups([ang(u0), ang(u1)], geom, 32, 0.01) == {4, 6}
    narrow = ScenarioConfig().with_overrides(beam__scan_window=0.01)
    acc = overhead_account(narrow, tracked=True, angles=[ang(u0), ang(u1)])
    assert acc["l_bs"] == 2 and acc["total"] == 2
    assert overhead_account(ScenarioConfig(), tracked=True)["total"] < 16


# output


def test_csv_round_trip(tmp_path):
    rep = run_scenario(small())
    path = tmp_path / "m.csv"
    write_metrics_csv(rep.periods, path)
    back = read_metrics_csv(path)
    for a, b in zip(back, rep.periods):
        for x, y in zip(a.row(), b.row()):
            assert x == y or (math.isnan(x) and math.isnan(y))
            assert type(x) is type(y) or isinstance(y, float)
    header = path.read_text().splitlines()[0].split(",")
    assert header == PeriodMetrics.columns()


def test_summary_has_seed_and_hash(tmp_path):
    rep = run_scenario(small())
    doc = json.loads(summary_text(rep))
    assert doc["seed"] == 7 and doc["config_hash"] == small().digest()
    assert doc["aggregates"]["periods"] == 6
    paths = emit(rep, tmp_path / "out")
    assert json.loads(paths["summary"].read_text()) == doc


def test_emit_surfaces_io_errors(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit(RunReport({}, 0), blocker / "sub")


def test_emit_figures(tmp_path):
    paths = emit(run_scenario(small(periods=3)), tmp_path, figures=True)
    for key in ("fig_count", "fig_rmse", "fig_snr"):
        assert paths[key].stat().st_size > 0
    reps = sweep(small(periods=2), "angle_rmse", [0.001, 0.1], 1)
    out = emit_sweep("angle_rmse", reps, tmp_path / "sw", figures=True)
    assert out["fig_sweep"].exists()
    rows = out["sweep"].read_text().splitlines()
    assert rows[0].startswith("param,value,k") and len(rows) == 1 + 2 * 2


# command line


def test_cli_overhead(capsys):
    assert cli.main(["overhead"]) == 0
    assert json.loads(capsys.readouterr().out) == {"l_bs": 8, "l_ut": 8, "total": 16}
    assert cli.main(["overhead", "--tracked"]) == 0


def test_cli_simulate(tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main(["simulate", "--preset", "cardinality", "--seed", "7", "--periods", "3",
                   "--out", str(out), "--dump-intensity"])
    assert rc == 0
    assert (out / "metrics.csv").exists() and (out / "summary.txt").exists()
    assert (out / "intensity_3.txt").exists()
    assert json.loads((out / "summary.txt").read_text())["seed"] == 7


def test_cli_config_file_and_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("dt = -1.0\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "dt:" in capsys.readouterr().err
    good = tmp_path / "good.toml"
    write_toml(small(periods=2), good)
    assert cli.main(["simulate", "--config", str(good), "--out", str(tmp_path / "y"), "--trials", "2"]) == 0


def test_cli_sweep(tmp_path):
    rc = cli.main(["sweep", "--param", "angle_rmse", "--values", "0.1,0.001", "--trials", "1",
                   "--periods", "2", "--out", str(tmp_path / "sw")])
    assert rc == 0
    assert (tmp_path / "sw" / "sweep.csv").exists()
