import json
import math

import numpy as np
import pytest

from perihom.reporting import (
    metrics_csv,
    plot_data,
    report_payload,
    sanitize,
    write_json,
    write_study_outputs,
)

REPORT = {
    "study_id": "demo",
    "kind": "torus",
    "lam": 1.0,
    "eps": [0.25, 0.125, 0.0625],
    "metrics": {
        "err_l2": [4e-4, 2e-4, 1e-4],
        "err_flux": [9e-3, 4e-3, 2e-3],
    },
    "slopes": {
        "err_l2": {"slope": 1.0, "intercept": -9.3, "residual": 0.0},
        "err_flux": {"slope": math.inf, "intercept": -math.inf, "residual": 0.0},
    },
    "passed": {"err_l2": True, "err_flux": True},
}


def test_sanitize_replaces_non_finite():
    raw = {"a": math.inf, "b": [math.nan, -math.inf, 1.5], "c": {"d": 2}}
    out = sanitize(raw)
    assert out == {"a": "inf", "b": ["nan", "-inf", 1.5], "c": {"d": 2}}
    assert json.dumps(out)


def test_report_payload_adds_hash_and_sanitizes():
    payload = report_payload(REPORT, "abc123")
    assert payload["config_hash"] == "abc123"
    assert payload["slopes"]["err_flux"]["slope"] == "inf"
    assert payload["slopes"]["err_l2"]["slope"] == 1.0
    json.dumps(payload)


def test_metrics_csv_layout():
    text = metrics_csv(REPORT)
    lines = text.strip().split("\n")
    assert lines[0] == "eps,err_flux,err_l2"
    assert len(lines) == 4
    table = np.loadtxt(lines[1:], delimiter=",")
    np.testing.assert_allclose(table[:, 0], REPORT["eps"])
    np.testing.assert_allclose(table[:, 2], REPORT["metrics"]["err_l2"])


def test_plot_data_two_columns():
    blocks = plot_data(REPORT)
    assert set(blocks) == {"err_l2", "err_flux"}
    lines = blocks["err_l2"].strip().split("\n")
    assert lines[0].startswith("#")
    cols = np.array([row.split() for row in lines[1:]], dtype=float)
    np.testing.assert_allclose(cols[:, 0], REPORT["eps"])
    np.testing.assert_allclose(cols[:, 1], REPORT["metrics"]["err_l2"])


def test_write_study_outputs(tmp_path):
    paths = write_study_outputs(tmp_path, REPORT, "deadbeef")
    names = sorted(p.name for p in paths)
    assert names == [
        "metrics.csv",
        "plot_err_flux.dat",
        "plot_err_l2.dat",
        "report.json",
    ]
    body = json.loads((tmp_path / "report.json").read_text())
    assert body["config_hash"] == "deadbeef"
    assert body["eps"] == REPORT["eps"]
    table = np.loadtxt(tmp_path / "metrics.csv", delimiter=",", skiprows=1)
    assert table.shape == (3, 3)


def test_write_json_creates_parents(tmp_path):
    target = tmp_path / "deep" / "nested" / "out.json"
    write_json(target, {"x": math.inf})
    assert json.loads(target.read_text()) == {"x": "inf"}


def test_report_object_accepted():
    class Stub:
        def to_dict(self):
            return REPORT

    assert metrics_csv(Stub()) == metrics_csv(REPORT)
    assert plot_data(Stub()) == plot_data(REPORT)
