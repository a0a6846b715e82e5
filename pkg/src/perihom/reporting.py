"""Report writers: JSON, CSV metric tables, and two-column plot data."""

import json
import math
from pathlib import Path


def sanitize(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _as_dict(report) -> dict:
    """Reports arrive as objects locally and as plain dicts over HTTP."""
    return report if isinstance(report, dict) else report.to_dict()


def report_payload(report, config_hash: str) -> dict:
    payload = {"config_hash": config_hash}
    payload.update(_as_dict(report))
    return sanitize(payload)


def metrics_csv(report) -> str:
    """One row per sweep value, one column per metric."""
    rep = _as_dict(report)
    names = sorted(rep["metrics"])
    lines = [",".join(["eps"] + names)]
    for i, eps in enumerate(rep["eps"]):
        row = [f"{eps:.17g}"] + [f"{rep['metrics'][n][i]:.17g}" for n in names]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def plot_data(report) -> dict:
    """Per-metric two-column text blocks: eps value."""
    rep = _as_dict(report)
    out = {}
    for name, values in rep["metrics"].items():
        lines = [f"# eps {name}"]
        for eps, v in zip(rep["eps"], values):
            lines.append(f"{eps:.17g} {v:.17g}")
        out[name] = "\n".join(lines) + "\n"
    return out


def write_study_outputs(outdir, report, config_hash: str) -> list:
    """Write report.json, metrics.csv, and plot_<metric>.dat; returns paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    path = outdir / "report.json"
    path.write_text(json.dumps(report_payload(report, config_hash), indent=2) + "\n")
    written.append(path)
    path = outdir / "metrics.csv"
    path.write_text(metrics_csv(report))
    written.append(path)
    for name, text in plot_data(report).items():
        path = outdir / f"plot_{name}.dat"
        path.write_text(text)
        written.append(path)
    return written


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sanitize(payload), indent=2) + "\n")
    return path
