"""BER line charts from result CSVs (deterministic SVG)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..errors import ParseError  # noqa: E402

REQUIRED = ("scheme", "value", "ber")


def read_results(path) -> tuple[str, dict[str, list[tuple[float, float]]]]:
    """``(axis name, {scheme: [(value, ber), ...]})``; comment lines start with ``#``."""
    text = Path(path).read_text().splitlines()
    header, header_line = None, 0
    curves: dict[str, list[tuple[float, float]]] = {}
    axis = "value"
    for lineno, line in enumerate(text, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            fields = next(csv.reader([line]))
        except csv.Error as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if header is None:
            header, header_line = fields, lineno
            for col in REQUIRED:
                if col not in header:
                    raise ParseError(f"line {lineno}: missing column {col!r}")
            continue
        if len(fields) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, found {len(fields)}")
        row = dict(zip(header, fields))
        try:
            value, ber = float(row["value"]), float(row["ber"])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if not 0.0 <= ber <= 1.0:
            raise ParseError(f"line {lineno}: BER {ber} outside [0, 1]")
        axis = row.get("axis", axis)
        curves.setdefault(row["scheme"], []).append((value, ber))
    if header is None:
        raise ParseError("line 1: no header row")
    if not curves:
        raise ParseError(f"line {header_line}: no data rows after the header")
    return axis, curves


def emit_plot(csv_path, out_path) -> Path:
    """One curve per scheme on a log BER axis; zero-BER points are drawn at the axis floor."""
    axis, curves = read_results(csv_path)
    positive = [b for pts in curves.values() for _, b in pts if b > 0]
    floor = min(positive) / 10 if positive else 1e-6
    plt.rcParams["svg.hashsalt"] = "hbflink"
    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme in sorted(curves):
        pts = sorted(curves[scheme])
        ax.plot([p[0] for p in pts], [max(p[1], floor) for p in pts], marker="o", label=scheme)
    ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out
