"""Optional figures for benchmark CSVs and simulation reports.

Needs matplotlib (the ``report`` extra).  Nothing else in the package
imports this module, so the core runs without it.
"""
from __future__ import annotations

from pathlib import Path

from verifbfl.bench import linear_fit, read_csv


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def ledger_figures(results, out_dir) -> list:
    """Throughput and mean latency against send rate, one line per op."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in results if r.bench == "ledger"]
    if not rows:
        return []
    paths = []
    for metric, label, name in (("throughput_tps", "throughput (tx/s)", "ledger_throughput.png"),
                                ("latency_mean_s", "mean latency (s)", "ledger_latency.png")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for op in sorted({r.op for r in rows}):
            pts = sorted((r.x, getattr(r, metric)) for r in rows if r.op == op)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=op)
        ax.set_xlabel("send rate (tx/s)")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def proof_figures(results, out_dir) -> list:
    """Prove and verify time against step count, with the least-squares line."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for op in sorted({r.op for r in results if r.bench == "proof"}):
        rows = sorted((r for r in results if r.op == op), key=lambda r: r.x)
        xs = [r.x for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.errorbar(xs, [r.prove_s for r in rows], yerr=[r.prove_std_s for r in rows], marker="o",
                    label="prove")
        ax.plot(xs, [r.verify_s for r in rows], marker="s", label="verify")
        if len(rows) >= 2:
            slope, icpt, r2 = linear_fit(xs, [r.prove_s for r in rows])
            ax.plot(xs, [slope * x + icpt for x in xs], "--", color="gray", label=f"fit, R²={r2:.3f}")
        ax.set_xlabel("steps")
        ax.set_ylabel("seconds")
        ax.set_title(op)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{op}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def simulation_figure(report, out_dir) -> Path:
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rounds = sorted(report.round_accuracy)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [float(report.round_accuracy[r]) for r in rounds], marker="o", label="verified (pooled)")
    g = [r for r in rounds if r in report.global_accuracy]
    ax.plot(g, [float(report.global_accuracy[r]) for r in g], marker="s", label="global model")
    ax.set_xlabel("round")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out_dir / "simulation_accuracy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_csv(csv_path, out_dir=None) -> list:
    """All figures for one bench CSV, written next to it unless ``out_dir`` is given."""
    csv_path = Path(csv_path)
    results = read_csv(csv_path)
    out_dir = csv_path.parent if out_dir is None else out_dir
    return ledger_figures(results, out_dir) + proof_figures(results, out_dir)
