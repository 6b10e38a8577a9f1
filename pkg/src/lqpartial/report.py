"""Delimited output files and the figures rendered alongside them.

Trajectory files carry one row per grid time with the header

    t,xhat,rho,log_nu,gamma,v[,x_true][,grid_nu,grid_mean,grid_cov]
    [,pf_nu,pf_mean,pf_cov,ess]

(vector components gain _0, _1, ... suffixes above one dimension); summary
files carry quantity,analytic,estimate,stderr rows.  Floats print with 17
significant digits so identical runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .harness import TrajectoryRecord


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return f"{float(x):.17g}"


def _columns(label: str, width: int) -> list[str]:
    if width == 1:
        return [label]
    return [f"{label}_{i}" for i in range(width)]


def trajectory_table(record: TrajectoryRecord):
    """(header, rows) for the trajectory CSV."""
    n = record.xhat.shape[1]
    m = record.v.shape[1]
    header: list[str] = ["t"]
    header += _columns("xhat", n) + _columns("rho", n) + ["log_nu"]
    header += _columns("gamma", n * n) + _columns("v", m)
    blocks = [
        record.times[:, None],
        record.xhat,
        record.rho,
        record.log_nu[:, None],
        record.gamma.reshape(len(record.times), -1),
        record.v,
    ]
    if record.x_true is not None:
        header += _columns("x_true", n)
        blocks.append(record.x_true)
    if record.grid_nu is not None:
        header += ["grid_nu", "grid_mean", "grid_cov"]
        blocks += [record.grid_nu[:, None], record.grid_mean[:, None], record.grid_cov[:, None]]
    if record.pf_nu is not None:
        header += ["pf_nu", "pf_mean", "pf_cov", "ess"]
        blocks += [
            record.pf_nu[:, None],
            record.pf_mean[:, None],
            record.pf_cov[:, None],
            record.pf_ess[:, None],
        ]
    data = np.hstack(blocks)
    rows = [",".join(fmt(x) for x in row) for row in data]
    return ",".join(header), rows


def write_trajectory_csv(record: TrajectoryRecord, path) -> Path:
    path = Path(path)
    header, rows = trajectory_table(record)
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def write_summary_csv(rows, path) -> Path:
    """rows: iterable of (quantity, analytic, estimate, stderr); None -> blank."""
    path = Path(path)
    lines = ["quantity,analytic,estimate,stderr"]
    for quantity, analytic, estimate, stderr in rows:
        lines.append(f"{quantity},{fmt(analytic)},{fmt(estimate)},{fmt(stderr)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _use_agg():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_trajectory_figure(record: TrajectoryRecord, path) -> Path:
    """Four-panel summary figure: mean, mass, control and covariance paths."""
    plt = _use_agg()
    t = record.times
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)

    ax = axes[0, 0]
    ax.plot(t, record.xhat[:, 0], label="filter mean", color="C0")
    band = np.sqrt(np.maximum(record.gamma[:, 0, 0], 0.0))
    ax.fill_between(
        t,
        record.xhat[:, 0] - band,
        record.xhat[:, 0] + band,
        alpha=0.2,
        color="C0",
        label="+- sqrt(Gamma)",
    )
    if record.x_true is not None:
        ax.plot(t, record.x_true[:, 0], label="true state", color="C3", lw=0.8)
    if record.grid_mean is not None:
        ax.plot(t, record.grid_mean, "--", label="grid mean", color="C1")
    if record.pf_mean is not None:
        ax.plot(t, record.pf_mean, ":", label="particle mean", color="C2")
    ax.set_ylabel("conditional mean")
    ax.legend(fontsize=8)

    ax = axes[0, 1]
    ax.plot(t, np.exp(record.log_nu), label="filter", color="C0")
    if record.grid_nu is not None:
        ax.plot(t, record.grid_nu, "--", label="grid", color="C1")
    if record.pf_nu is not None:
        ax.plot(t, record.pf_nu, ":", label="particles", color="C2")
    ax.set_ylabel("unnormalized mass nu(t)")
    ax.legend(fontsize=8)

    ax = axes[1, 0]
    ax.plot(t, record.v[:, 0], color="C0")
    ax.set_ylabel("control v(t)")
    ax.set_xlabel("t")

    ax = axes[1, 1]
    ax.plot(t, record.gamma[:, 0, 0], label="filter", color="C0")
    if record.grid_cov is not None:
        ax.plot(t, record.grid_cov, "--", label="grid", color="C1")
    if record.pf_cov is not None:
        ax.plot(t, record.pf_cov, ":", label="particles", color="C2")
    ax.set_ylabel("conditional variance")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)

    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_summary_figure(rows, path) -> Path:
    """Bar chart of estimates with error bars against their analytic values."""
    plt = _use_agg()
    labeled = [r for r in rows if r[2] is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = np.arange(len(labeled))
    for i, (quantity, analytic, estimate, stderr) in enumerate(labeled):
        ax.errorbar(
            [i], [estimate], yerr=[3.0 * stderr] if stderr else None,
            fmt="o", color="C0", capsize=4,
        )
        if analytic is not None:
            ax.plot([i - 0.2, i + 0.2], [analytic, analytic], color="C3", lw=2)
    ax.set_xticks(xs)
    ax.set_xticklabels([r[0] for r in labeled], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("value (bars: estimate +- 3 SE, line: analytic)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep_figure(param: str, values, table, path) -> Path:
    """Estimates with 3 SE bars versus the swept parameter value."""
    plt = _use_agg()
    fig, ax = plt.subplots(figsize=(7, 4))
    quantities = sorted({row[1] for row in table if row[3] is not None})
    for j, quantity in enumerate(quantities):
        xs, ys, es = [], [], []
        for value, q, analytic, estimate, stderr in table:
            if q == quantity and estimate is not None:
                xs.append(value)
                ys.append(estimate)
                es.append(3.0 * (stderr or 0.0))
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=quantity, color=f"C{j}")
    ax.set_xlabel(param)
    ax.set_ylabel("estimate +- 3 SE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
