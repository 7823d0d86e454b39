"""PNG figures rendered next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def report_figures(report, out_dir) -> dict:
    out = Path(out_dir)
    ks = sorted({p.k for p in report.periods})
    paths = {}

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.step(ks, report.per_period_mean("true_count"), where="mid", label="true")
    ax.plot(ks, report.per_period_mean("est_count"), "o--", label="estimated")
    ax.set_xlabel("period k")
    ax.set_ylabel("number of targets")
    ax.legend()
    paths["fig_count"] = _save(fig, out / "count.png")

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(ks, report.per_period_mean("loc_rmse"), "o-")
    ax.set_xlabel("period k")
    ax.set_ylabel("localisation RMSE (m)")
    paths["fig_rmse"] = _save(fig, out / "rmse.png")

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, label in (("snr_oracle_db", "oracle"), ("snr_tracked_db", "tracked"), ("snr_fixed_db", "fixed")):
        ax.plot(ks, report.per_period_mean(name), label=label)
    ax.set_xlabel("period k")
    ax.set_ylabel("UT SNR (dB)")
    ax.legend()
    paths["fig_snr"] = _save(fig, out / "snr.png")
    return paths


def sweep_figures(param: str, reports: dict, out_dir) -> dict:
    out = Path(out_dir)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for value, rep in reports.items():
        ks = sorted({p.k for p in rep.periods})
        ax.semilogy(ks, rep.per_period_mean("loc_rmse"), label=f"{param}={value}")
    ax.set_xlabel("period k")
    ax.set_ylabel("localisation RMSE (m)")
    ax.legend()
    return {"fig_sweep": _save(fig, out / "sweep_rmse.png")}
