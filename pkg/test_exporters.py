#!/usr/bin/env python3
"""
Test: Run artifacts

JSON and CSV exporters with numpy and complex values, the run manifest
and the PNG charts.
"""

import csv
import io
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from src.kam_mkdv.charts import ChartGenerator
from src.kam_mkdv.errors import RunStatus
from src.kam_mkdv.exporters import CSVExporter, JSONExporter, ManifestWriter

PNG_MAGIC = b"\x89PNG"


def create_sample_result() -> dict:
    return {
        "status": RunStatus.CONVERGED,
        "omega": np.array([1.0, 8.0]),
        "mu": [1j * -8.0, np.complex128(0.5 - 27j)],
        "steps": np.int64(3),
        "remainder": np.float64(1e-13),
        "stable": np.bool_(True),
    }


def create_sample_rows() -> list:
    return [
        {"step": 0, "residual": 1e-2, "scale": 3.0},
        {"step": 1, "residual": 1e-5, "scale": 5.196152422706632},
        {"step": 2, "residual": 3e-11, "cantor": "G_2"},
    ]


def test_json_export():
    exporter = JSONExporter()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "nested" / "result.json"
        exporter.export(create_sample_result(), str(path))
        data = exporter.load(str(path))
    assert data["status"] == "converged"
    assert data["omega"] == [1.0, 8.0]
    assert data["mu"] == [[0.0, -8.0], [0.5, -27.0]]
    assert data["steps"] == 3 and data["stable"] is True
    try:
        exporter.export({})
        raise AssertionError("empty result accepted")
    except ValueError:
        pass
    print("  ✓ JSON with numpy scalars, arrays and complex pairs")


def test_csv_export():
    exporter = CSVExporter()
    content = exporter.export_rows(create_sample_rows())
    rows = list(csv.DictReader(io.StringIO(content)))
    assert list(rows[0].keys()) == ["step", "residual", "scale", "cantor"]
    assert float(rows[1]["scale"]) == 5.196152422706632
    assert rows[2]["scale"] == "" and rows[2]["cantor"] == "G_2"
    cell = exporter.export_rows([{"mu": 1.5 - 2j}]).splitlines()[1]
    assert complex(cell) == 1.5 - 2j
    try:
        exporter.export_rows([])
        raise AssertionError("empty table accepted")
    except ValueError:
        pass
    print("  ✓ CSV with a stable header and exact floats")


def test_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = ManifestWriter(tmp, "solve", "abc123", seed=7)
        result = manifest.register(manifest.path("result.json"), "json")
        JSONExporter().export({"status": "converged"}, result)
        path = manifest.write("converged")
        data = json.loads(Path(path).read_text())
    assert data["subcommand"] == "solve" and data["config_hash"] == "abc123"
    assert data["seed"] == 7 and data["status"] == "converged"
    assert data["outputs"] == [{"path": result, "kind": "json"}]
    assert {"kam_mkdv", "numpy", "scipy", "python"} <= set(data["versions"])
    print("  ✓ Manifest lists every output of the run")


def test_charts():
    charts = ChartGenerator(dpi=50, figsize=(4, 3))
    modes = np.array([-3, -2, 2, 3])
    pngs = [
        charts.residual_history([1e-2, 1e-5, 1e-11], [3.0, 5.2, 6.0]),
        charts.residual_history([]),
        charts.floquet_spectrum(modes, 1j * -(modes ** 3.0), 1.0, 0.0),
        charts.excluded_fraction([1e-3, 1e-2], [1e-4, 1e-3], slope=1.0),
        charts.torus_defect([0.0, 0.1], {"distance": [0.0, 1e-9]}),
    ]
    assert all(png.startswith(PNG_MAGIC) for png in pngs)
    with tempfile.TemporaryDirectory() as tmp:
        out = charts.save(pngs[0], str(Path(tmp) / "charts" / "residuals.png"))
        assert Path(out).read_bytes() == pngs[0]
    print("  ✓ PNG charts, with a placeholder for empty data")


def main():
    """Run all artifact tests."""
    print("\n" + "=" * 70)
    print("RUN ARTIFACT TESTS".center(70))
    print("=" * 70)

    tests = [
        test_json_export,
        test_csv_export,
        test_manifest,
        test_charts,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"  ❌ {test.__name__}: {e}")

    print("\n" + "=" * 70)
    if failed:
        print(f"❌ {failed} of {len(tests)} tests failed")
        return 1
    print(f"✅ ALL {len(tests)} TESTS PASSED")
    return 0


if __name__ == "__main__":
    sys.exit(main())
