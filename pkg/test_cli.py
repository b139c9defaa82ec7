#!/usr/bin/env python3
"""
Test: Command-line interface

Exit codes, configuration errors and the manifest written by each run.
"""

import json
import sys
import tempfile
from pathlib import Path

from typer.testing import CliRunner

from src.kam_mkdv.cli import EXIT_CONFIG, EXIT_EXCLUDED, EXIT_OK, app

runner = CliRunner()


def create_sample_config(tmp: str, **params) -> str:
    """Small config: one site, tiny truncations, the direct solver."""
    data = {
        "model": {"sites": [1], "sign": 1},
        "params": {"eps": 0.05, "a": 0.1, "n_phi": 2, "n_x": 4, **params},
        "run": {"max_steps": 2, "linear_solver": "direct"},
    }
    path = Path(tmp) / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


def read_manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


def test_sites_check():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        config = create_sample_config(tmp, n_x=64)
        result = runner.invoke(app, ["--config", config, "--out", str(out), "sites-check",
                                     "--sites", "1,2", "--cube-bound", "2"])
        assert result.exit_code == EXIT_OK, result.output
        assert "admissible" in result.output and "not admissible" not in result.output
        manifest = read_manifest(out)
        assert manifest["subcommand"] == "sites-check" and manifest["status"] == "ok"
        assert [Path(o["path"]).name for o in manifest["outputs"]] == ["sites_check.json"]

        result = runner.invoke(app, ["--config", config, "--out", str(out), "sites-check",
                                     "--sites", "3,15", "--cube-bound", "0"])
        assert result.exit_code == EXIT_OK, result.output
        assert "not admissible" in result.output
        data = json.loads((out / "sites_check.json").read_text())
        assert data["verdict"] == "not admissible" and data["cube_quadruples"] is None
    print("  ✓ sites-check verdicts and manifest")


def test_invalid_density_exits_with_config_error():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        density = Path(tmp) / "density.json"
        density.write_text(json.dumps([{"c": 1.0, "p": 3, "q": 1}]))
        result = runner.invoke(app, ["--config", create_sample_config(tmp), "--out", str(out), "solve",
                                     "--density-file", str(density)])
        assert result.exit_code == EXIT_CONFIG, result.output
        assert "model.density[0]" in result.output
        assert not (out / "manifest.json").exists()
    print("  ✓ A density of order four is rejected with exit status 2")


def test_unknown_config_key():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "config.json"
        path.write_text(json.dumps({"params": {"epsilon": 0.1}}))
        result = runner.invoke(app, ["--config", str(path), "--out", tmp, "sites-check"])
        assert result.exit_code == EXIT_CONFIG
        assert "params.epsilon" in result.output
    print("  ✓ Unknown configuration keys are reported by path")


def test_excluded_frequency():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        # omega = 1 - 3 eps^2 xi = 0.025 fails |omega l| >= gamma_0 <l>^-tau at l = 1
        config = create_sample_config(tmp, eps=0.5, xi=[1.3])
        result = runner.invoke(app, ["--config", config, "--out", str(out), "solve"])
        assert result.exit_code == EXIT_EXCLUDED, result.output
        manifest = read_manifest(out)
        assert manifest["status"] == "excluded"
        names = {Path(o["path"]).name for o in manifest["outputs"]}
        assert {"solution.json", "cantor_trace.json"} <= names
        trace = json.loads((out / "cantor_trace.json").read_text())["trace"]
        assert trace[-1]["passed"] is False and trace[-1]["witnesses"]
    print("  ✓ An excluded omega exits with status 3 and its witnesses")


def main():
    """Run all CLI tests."""
    print("\n" + "=" * 70)
    print("COMMAND-LINE TESTS".center(70))
    print("=" * 70)

    tests = [
        test_sites_check,
        test_invalid_density_exits_with_config_error,
        test_unknown_config_key,
        test_excluded_frequency,
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
