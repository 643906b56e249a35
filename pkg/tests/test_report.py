import csv
import io
import json

import pytest

from memsched import CostConfig, Features, SimConfig, run_simulation, run_sweep
from memsched.report import (
    FORMATS,
    render,
    render_sweep,
    render_sweep_plot,
    render_timeline,
    sweep_to_csv,
    to_csv,
    to_json,
    to_table,
)

GiB = 1 << 30


@pytest.fixture(scope="module")
def report(alexnet):
    cfg = SimConfig(pool_bytes=2 * GiB,
                    features=Features(liveness=True, offload=True,
                                      recompute="cost-aware"))
    return run_simulation(alexnet, cfg)


@pytest.fixture(scope="module")
def sweep_points(alexnet):
    cfg = SimConfig(pool_bytes=4 * GiB,
                    features=Features(liveness=True, offload=True))
    return run_sweep(alexnet, cfg, "batch", [100, 200, 300])


def test_json_shape(report):
    doc = json.loads(to_json(report))
    assert set(doc) == {"summary", "selections", "rows"}
    assert doc["summary"]["net_name"] == "alexnet"
    assert doc["summary"]["peak_bytes"] == report.peak_bytes
    assert len(doc["rows"]) == len(report.rows)
    assert doc["rows"][0]["index"] == 0


def test_csv_shape(report):
    text = to_csv(report)
    comments = [l for l in text.splitlines() if l.startswith("#")]
    assert any("peak_bytes" in c for c in comments)
    body = "\n".join(l for l in text.splitlines() if not l.startswith("#"))
    rows = list(csv.DictReader(io.StringIO(body)))
    assert len(rows) == len(report.rows)
    assert {"index", "layer", "phase", "resident_bytes"} <= set(rows[0])


def test_table_mentions_the_peak(report):
    text = to_table(report)
    assert "peak" in text
    assert report.peak_layer in text
    assert "recompute" in text


def test_render_dispatch(report):
    for fmt in FORMATS:
        assert render(report, fmt)
    with pytest.raises(Exception):
        render(report, "yaml")


def test_sweep_csv(sweep_points):
    rows = list(csv.DictReader(io.StringIO(sweep_to_csv(sweep_points))))
    assert len(rows) == 3
    assert [int(r["value"]) for r in rows] == [100, 200, 300]
    for fmt in FORMATS:
        assert render_sweep(sweep_points, fmt)


def test_timeline_figure(report, tmp_path):
    out = render_timeline(report, tmp_path / "run")
    assert out.name == "run_timeline.png"
    assert out.stat().st_size > 0


def test_sweep_figure(sweep_points, tmp_path):
    out = render_sweep_plot(sweep_points, tmp_path / "sw")
    assert out.name == "sw_sweep.png"
    assert out.stat().st_size > 0
