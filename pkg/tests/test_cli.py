from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from shellfield.cli import main
from shellfield.experiments import COMMANDS, ConfigError, load_config, preset

FAST = ["ip", "symmetry", "moments", "resonance", "factor2"]


def _write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def _packet_cfg(**extra):
    cfg = {
        "version": 1,
        "shell": {"mass": 1.0, "dimension": 2},
        "modes": [
            {"id": "f", "kind": "packet", "center": [0, 0], "widths": [1, 1]},
            {"id": "g", "kind": "packet", "center": [0, 1.5], "widths": [1, 0.8]},
        ],
    }
    cfg.update(extra)
    return cfg


class TestPresets:
    @pytest.mark.parametrize("command", FAST)
    def test_preset_runs_and_passes(self, command, tmp_path, capsys):
        out = tmp_path / f"{command}.csv"
        assert main([command, "--out", str(out), "--format", "csv"]) == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert rows
        assert f"{command}: PASS" in capsys.readouterr().out

    @pytest.mark.slow
    def test_commutator_scan_preset(self, tmp_path):
        out = tmp_path / "scan.json"
        assert main(["commutator-scan", "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        seps = {r["separation"] for r in data["rows"]}
        assert {"spacelike", "timelike"} <= seps
        assert data["columns"][-1] == "pass"

    def test_em_preset(self, tmp_path):
        out = tmp_path / "em.json"
        assert main(["ip", "--preset", "ip-em", "--out", str(out)]) == 0
        rows = json.loads(out.read_text())["rows"]
        assert any(r["kernel"] == "em_quantum" for r in rows)

    def test_every_command_has_a_preset(self):
        for name in COMMANDS:
            assert preset(name)["version"] == 1

    def test_json_to_stdout(self, capsys):
        assert main(["factor2"]) == 0
        out = capsys.readouterr().out
        data = json.loads(out)
        assert data["experiment"] == "factor2" and data["passed"] is True

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["moments", "--out", str(a), "--format", "csv"])
        main(["moments", "--out", str(b), "--format", "csv"])
        assert a.read_bytes() == b.read_bytes()


class TestConfigErrors:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(_packet_cfg(colour="blue"))

    def test_unknown_shell_key(self):
        with pytest.raises(ConfigError):
            load_config(_packet_cfg(shell={"mass": 1.0, "spin": 2}))

    def test_wrong_version(self):
        with pytest.raises(ConfigError, match="version"):
            load_config(_packet_cfg(version=2))

    def test_invalid_shell_settings(self):
        with pytest.raises(ConfigError):
            load_config(_packet_cfg(shell={"nodes": 4}))

    def test_duplicate_mode(self):
        cfg = _packet_cfg()
        cfg["modes"].append(dict(cfg["modes"][0]))
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(cfg)

    def test_exit_code_two_on_config_error(self, tmp_path, capsys):
        path = _write(tmp_path, _packet_cfg(extra=1))
        assert main(["ip", "--config", str(path)]) == 2
        captured = capsys.readouterr()
        assert "error" in captured.err and captured.out == ""

    def test_empty_mode_list(self, tmp_path, capsys):
        path = _write(tmp_path, {"version": 1, "modes": []})
        assert main(["ip", "--config", str(path)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["ip", "--config", str(tmp_path / "nope.json")]) == 2

    def test_unknown_preset(self):
        assert main(["ip", "--preset", "nope"]) == 2

    def test_commutator_scan_rejects_packets(self, tmp_path):
        path = _write(tmp_path, _packet_cfg(experiment={"offsets": [[0, 3]]}))
        assert main(["commutator-scan", "--config", str(path)]) == 2

    def test_moments_order_limit(self, tmp_path):
        path = _write(tmp_path, _packet_cfg(experiment={"k_max": 6}))
        assert main(["moments", "--config", str(path)]) == 2


class TestBehaviour:
    def test_failing_threshold_exits_one(self, tmp_path):
        path = _write(tmp_path, _packet_cfg(thresholds={"orthogonal_pairs": [["f", "g"]]}))
        assert main(["ip", "--config", str(path), "--out", str(tmp_path / "o.csv")]) == 1

    def test_mode_file_reference(self, tmp_path):
        (tmp_path / "modes.json").write_text(json.dumps([{"id": "f", "kind": "packet", "center": [0, 0]}]))
        path = _write(tmp_path, {"version": 1, "modes": {"file": "modes.json"}})
        cfg = load_config(path)
        assert list(cfg.modes) == ["f"]

    def test_transforms_and_derived_modes(self):
        cfg = load_config(
            _packet_cfg(
                modes=[
                    {"id": "f", "kind": "packet", "center": [0, 0], "transform": [{"op": "boost", "rapidity": 0.3}]},
                    {"id": "g", "kind": "translate_of", "of": "f", "by": [0, 2]},
                    {"id": "h", "kind": "orthogonalize", "mode": "g", "against": ["f"], "kernel": "quantum"},
                ]
            )
        )
        from shellfield.fock import ip
        from shellfield.shell import KernelKind

        f, h = cfg.modes["f"], cfg.modes["h"]
        assert abs(ip(f, h, KernelKind.QUANTUM, cfg.shell)) <= 1e-12 * ip(f, f, KernelKind.QUANTUM, cfg.shell).real

    def test_zero_norm_rows_are_marked(self, tmp_path, capsys):
        data = _packet_cfg(
            modes=[
                {"id": "f", "kind": "packet", "center": [0, 0], "transform": [{"op": "positive_frequency"}]},
            ],
            experiment={"pairs": [{"detector": "f", "state": "f", "kernels": ["quantum"]}]},
        )
        # conjugating a positive-frequency packet gives zero quantum norm
        data["modes"][0]["transform"].append({"op": "time_reverse"})
        path = _write(tmp_path, data)
        out = tmp_path / "r.json"
        assert main(["resonance", "--config", str(path), "--out", str(out)]) == 1
        rows = json.loads(out.read_text())["rows"]
        assert rows[0]["error"] and rows[0]["pass"] is False
        assert "every row failed" in capsys.readouterr().err

    def test_console_script(self):
        proc = subprocess.run(
            [sys.executable, "-m", "shellfield.cli", "factor2", "--format", "csv"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert proc.stdout.splitlines()[0].startswith("row,f-id,g-id")
        assert proc.stderr == ""
