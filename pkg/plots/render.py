#!/usr/bin/env python3
"""Render publication-style figures from a solver report directory.

Reads report.json and the CSV files it references; never recomputes solver
quantities.  Four figure kinds:

  measure_scatter  prior vs computed control, marker area ~ atom weight
  state_heatmap    state (or adjoint, --field adjoint) on the grid
  ray_overlay      transport segments x -> xi over the adjoint-gradient quiver
  convergence      objective and FW gap versus iteration (gap on log scale)

Usage: render.py --report out/report.json --kind convergence --out fig.png
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class SchemaError(Exception):
    pass


def load_report(path: Path) -> dict:
    if not path.exists():
        raise SchemaError(f"report {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"report is not valid JSON: {exc}") from None
    for key in ("files", "objective_history", "gap_history"):
        if key not in doc:
            raise SchemaError(f"report is missing key {key!r}")
    return doc


def read_csv(path: Path, columns) -> np.ndarray:
    if not path.exists():
        raise SchemaError(f"referenced file {path} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(columns):
            raise SchemaError(
                f"{path.name}: expected columns {','.join(columns)}, "
                f"got {','.join(header or [])}"
            )
        rows = [[float(v) for v in row] for row in reader if row]
    return np.asarray(rows, dtype=float).reshape(-1, len(columns))


def artifact(doc: dict, base: Path, name: str) -> Path:
    files = doc["files"]
    if name not in files:
        raise SchemaError(f"report lists no {name!r} file")
    return base / files[name]


def render_measure_scatter(doc, base, ax):
    prior = read_csv(artifact(doc, base, "prior"), ("x", "y", "w"))
    u_bar = read_csv(artifact(doc, base, "u_bar"), ("x", "y", "w"))
    scale = 160.0 / max(prior[:, 2].max(), u_bar[:, 2].max(), 1e-300)
    ax.scatter(prior[:, 0], prior[:, 1], s=np.maximum(prior[:, 2] * scale, 1),
               c="tab:gray", alpha=0.45, label="prior $u^0$", linewidths=0)
    ax.scatter(u_bar[:, 0], u_bar[:, 1], s=np.maximum(u_bar[:, 2] * scale, 1),
               c="tab:red", alpha=0.8, label=r"control $\bar u$", linewidths=0)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("prior and computed control")


def render_state_heatmap(doc, base, ax, field="state"):
    data = read_csv(artifact(doc, base, field), ("x", "y", "value"))
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(xs) * len(ys) != len(data):
        raise SchemaError(f"{field} file is not a full grid")
    grid = data[:, 2].reshape(len(xs), len(ys))
    pcm = ax.pcolormesh(xs, ys, grid.T, shading="nearest", cmap="viridis")
    plt.colorbar(pcm, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    ax.set_title("state $y$" if field == "state" else "adjoint $p$")


def render_ray_overlay(doc, base, ax):
    plan = read_csv(artifact(doc, base, "plan"),
                    ("i", "j", "weight", "x_i", "y_i", "x_j", "y_j"))
    grad = read_csv(artifact(doc, base, "grad_p"), ("x", "y", "gx", "gy"))
    step = max(1, len(grad) // 400)
    ax.quiver(grad[::step, 0], grad[::step, 1], grad[::step, 2],
              grad[::step, 3], color="0.75", width=0.002, label=r"$\nabla p$")
    if len(plan):
        moved = np.hypot(plan[:, 3] - plan[:, 5], plan[:, 4] - plan[:, 6]) > 1e-12
        seg = plan[moved]
        wmax = plan[:, 2].max()
        for x0, y0, x1, y1, w in zip(seg[:, 3], seg[:, 4], seg[:, 5],
                                     seg[:, 6], seg[:, 2]):
            ax.plot([x0, x1], [y0, y1], color="tab:blue",
                    lw=0.3 + 1.7 * w / wmax, alpha=0.5)
        ax.plot(seg[:, 5], seg[:, 6], ".", ms=2, color="tab:red")
    ax.set_aspect("equal")
    ax.set_title("transport rays over adjoint gradient")


def render_convergence(doc, base, axes):
    obj = np.asarray(doc["objective_history"], dtype=float)
    gap = np.asarray(doc["gap_history"], dtype=float)
    it = np.arange(1, len(obj) + 1)
    axes[0].plot(it, obj, "-o", ms=3)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("objective")
    axes[1].semilogy(it, np.maximum(gap, 1e-300), "-o", ms=3, color="tab:red")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("FW gap")
    axes[0].set_title("objective")
    axes[1].set_title("optimality gap (log scale)")


KINDS = ("measure_scatter", "state_heatmap", "ray_overlay", "convergence")


def render(report_path: Path, kind: str, out_path: Path, field: str = "state") -> None:
    doc = load_report(report_path)
    base = report_path.parent
    if kind == "convergence":
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
        render_convergence(doc, base, axes)
    else:
        fig, ax = plt.subplots(figsize=(5.4, 5.0))
        if kind == "measure_scatter":
            render_measure_scatter(doc, base, ax)
        elif kind == "state_heatmap":
            render_state_heatmap(doc, base, ax, field=field)
        elif kind == "ray_overlay":
            render_ray_overlay(doc, base, ax)
        else:
            raise SchemaError(f"unknown figure kind {kind!r}")
    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--report", required=True, help="path to report.json")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--field", default="state", choices=("state", "adjoint"),
                        help="field to show in state_heatmap")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        render(Path(args.report), args.kind, Path(args.out), field=args.field)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
