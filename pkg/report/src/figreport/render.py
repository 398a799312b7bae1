"""Turn run outputs into figures.

Operates purely on the emitted file contract: rounds.csv with one row per
round, and an optional summary.json next to it. Rendering never writes into
the run directories; the only output is the requested image file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("curves", "bars", "trace", "bound_overlay")

_REQUIRED = {
    "curves": ("t", "loss"),
    "bars": ("t", "cov_norm"),
    "trace": ("t", "O", "D", "Q"),
    "bound_overlay": ("t", "loss", "gamma_total"),
}


class ReportError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list[Path]
    out: Path
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.inputs = [Path(p) for p in self.inputs]
        self.out = Path(self.out)
        if self.kind not in KINDS:
            raise ReportError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {KINDS}")
        if not self.inputs:
            raise ReportError("need at least one input CSV")
        if self.labels and len(self.labels) != len(self.inputs):
            raise ReportError(f"{len(self.labels)} labels for "
                              f"{len(self.inputs)} inputs")


def load_rounds(path: Path, required: tuple[str, ...]) -> dict[str, list[float]]:
    """Read rounds.csv into columns, checking the ones the figure needs."""
    if not path.exists():
        raise ReportError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise ReportError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise ReportError(f"{path}: no rounds")
    return {col: [float(row[col]) for row in rows] for col in required}


def load_summary(csv_path: Path) -> dict | None:
    path = csv_path.parent / "summary.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _label(spec: FigureSpec, i: int) -> str:
    if spec.labels:
        return spec.labels[i]
    summary = load_summary(spec.inputs[i])
    if summary is not None:
        cfg = summary.get("config", {})
        parts = [p for p in (cfg.get("sparsifier"), cfg.get("mode")) if p]
        if parts:
            return " / ".join(parts)
    return spec.inputs[i].parent.name or spec.inputs[i].stem


def _render_curves(spec: FigureSpec, ax) -> None:
    for i, path in enumerate(spec.inputs):
        data = load_rounds(path, _REQUIRED["curves"])
        ax.plot(data["t"], data["loss"], label=_label(spec, i))
    ax.set_xlabel("round")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()


def _render_bars(spec: FigureSpec, ax) -> None:
    means = []
    for path in spec.inputs:
        data = load_rounds(path, _REQUIRED["bars"])
        means.append(sum(data["cov_norm"]) / len(data["cov_norm"]))
    labels = [_label(spec, i) for i in range(len(spec.inputs))]
    ax.bar(range(len(means)), means)
    ax.set_xticks(range(len(means)), labels, rotation=20, ha="right")
    ax.set_ylabel("mean aggregation covariance norm")


def _render_trace(spec: FigureSpec, ax) -> None:
    data = load_rounds(spec.inputs[0], _REQUIRED["trace"])
    ax.plot(data["t"], data["D"], label="round delay D")
    ax.plot(data["t"], data["Q"], label="virtual queue Q")
    ax.set_xlabel("round")
    ax.legend(loc="upper left")
    twin = ax.twinx()
    twin.plot(data["t"], data["O"], color="tab:green", linestyle="--",
              label="ratio O")
    twin.set_ylabel("sparsification ratio O")
    twin.set_ylim(0, 1.05)
    twin.legend(loc="upper right")


def _render_bound_overlay(spec: FigureSpec, ax) -> None:
    for i, path in enumerate(spec.inputs):
        data = load_rounds(path, _REQUIRED["bound_overlay"])
        label = _label(spec, i)
        line, = ax.plot(data["t"], data["loss"], label=f"{label} loss")
        ax.plot(data["t"], data["gamma_total"], color=line.get_color(),
                linestyle="--", label=f"{label} bound")
        summary = load_summary(path)
        if summary is not None and summary.get("gamma"):
            gamma = summary["gamma"]
            expected = gamma["total"] - gamma["init_gap_proxy"]
            got = data["gamma_total"][-1]
            if abs(got - expected) > 1e-9:
                raise ReportError(
                    f"{path}: final gamma_total {got!r} disagrees with "
                    f"summary.json ({expected!r})")
    ax.set_xlabel("round")
    ax.set_yscale("log")
    ax.legend()


_RENDERERS = {
    "curves": _render_curves,
    "bars": _render_bars,
    "trace": _render_trace,
    "bound_overlay": _render_bound_overlay,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure and write it to spec.out. Returns the output path."""
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        _RENDERERS[spec.kind](spec, ax)
        spec.out.parent.mkdir(parents=True, exist_ok=True)
        fig.tight_layout()
        fig.savefig(spec.out, dpi=120)
    finally:
        plt.close(fig)
    return spec.out
