"""End-to-end tests of the command-line surface."""

import filecmp
import json

import numpy as np
import pytest

from nsac.cli import main
from nsac.io import read_csv


def base_overrides(tmp_path, tag=""):
    return [
        "grid.n=16",
        "step.dt=0.02",
        "step.t_end=0.5",
        f"out.csv={tmp_path}/run{tag}.csv",
        f"out.snapshot={tmp_path}/run{tag}.nsac",
        f"out.summary={tmp_path}/run{tag}.json",
    ]


class TestSimulate:
    def test_equilibrium_run(self, tmp_path):
        rc = main(["simulate", "ic.kind=equilibrium"] + base_overrides(tmp_path))
        assert rc == 0
        data = read_csv(f"{tmp_path}/run.csv")
        assert np.all(data["E_total"] == 0.0)
        assert np.all(data["phi_max"] == 1.0)
        assert np.all(data["mass"] == data["mass"][0])
        summary = json.loads((tmp_path / "run.json").read_text())
        assert summary["termination"] == "t_end"
        assert summary["energy_monotone"] and summary["max_principle"] and summary["mass_conserved"]

    def test_perturbation_run_monotone(self, tmp_path):
        rc = main(
            ["simulate", "ic.kind=random_perturbation", "ic.delta=0.01", "ic.max_mode=3", "ic.seed=2"]
            + base_overrides(tmp_path)
        )
        assert rc == 0
        data = read_csv(f"{tmp_path}/run.csv")
        e = data["E_total"]
        assert np.all(np.diff(e) <= 1e-10 * e[0])
        assert (tmp_path / "run.nsac").exists()

    def test_reproducible_byte_identical(self, tmp_path):
        args = ["simulate", "ic.kind=random_perturbation", "ic.delta=0.01", "ic.seed=11"]
        assert main(args + base_overrides(tmp_path, "a")) == 0
        assert main(args + base_overrides(tmp_path, "b")) == 0
        assert filecmp.cmp(f"{tmp_path}/runa.csv", f"{tmp_path}/runb.csv", shallow=False)

    def test_config_file_with_cli_override(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(
            "grid.n = 16\nstep.dt = 0.02\nstep.t_end = 0.1\nic.kind = equilibrium\n"
            f"out.csv = {tmp_path}/c.csv\nout.snapshot = {tmp_path}/c.nsac\nout.summary = {tmp_path}/c.json\n"
        )
        rc = main(["simulate", "--config", str(cfgfile), "step.t_end=0.04"])
        assert rc == 0
        data = read_csv(f"{tmp_path}/c.csv")
        assert data["t"][-1] == pytest.approx(0.04)

    def test_infeasible_ic_flushes_artifacts_and_fails(self, tmp_path):
        rc = main(
            ["simulate", "ic.kind=random_perturbation", "ic.delta=100.0", "ic.max_mode=2"]
            + base_overrides(tmp_path)
        )
        assert rc == 1
        summary = json.loads((tmp_path / "run.json").read_text())
        assert summary["termination"] == "infeasible_initial_condition"
        assert (tmp_path / "run.csv").exists()  # header-only, still flushed

    def test_unknown_key_is_config_error(self, tmp_path):
        rc = main(["simulate", "grid.bogus=3"] + base_overrides(tmp_path))
        assert rc == 2


class TestVerify:
    def test_fresh_build_passes(self, capsys):
        rc = main(["verify", "--n", "16", "--seed", "3"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "FAIL" not in out
        assert out.count("PASS") >= 9

    def test_injected_fault_detected(self, capsys):
        rc = main(["verify", "--n", "16", "--inject-fault", "no_dealias"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "FAIL quadratic_product_alias_free" in out

    def test_invalid_config_rejected(self, tmp_path):
        cfgfile = tmp_path / "bad.cfg"
        cfgfile.write_text("grid.n = 0\n")
        rc = main(["verify", "--config", str(cfgfile)])
        assert rc == 2


class TestLinearDecay:
    def test_heat_component_fits(self, tmp_path, capsys):
        rc = main(
            [
                "linear-decay",
                "--l", "0,1",
                "--s", "0.5",
                "--components", "phi",
                "--points", "15",
                "--out-csv", f"{tmp_path}/lin.csv",
                "--out-json", f"{tmp_path}/lin.json",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS phi l=0" in out and "PASS phi l=1" in out
        fits = json.loads((tmp_path / "lin.json").read_text())["fits"]
        assert all(f["passed"] for f in fits)
        lines = (tmp_path / "lin.csv").read_text().splitlines()
        assert lines[0] == "component,kind,l,s,t,value"
        assert len(lines) == 1 + 2 * 15


class TestFit:
    def _write_series(self, tmp_path, exponent):
        from nsac.io import CsvWriter, CSV_BASE_COLUMNS

        path = tmp_path / "series.csv"
        with CsvWriter(str(path)) as w:
            for t in np.geomspace(1, 1e3, 40):
                row = [t] + [0.0] * (len(CSV_BASE_COLUMNS) - 1)
                row[3] = (1 + t) ** exponent  # E_total column
                w.write(row)
        return str(path)

    def test_plain_fit(self, tmp_path, capsys):
        path = self._write_series(tmp_path, -2.0)
        rc = main(["fit", "--csv", path, "--column", "E_total"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["exponent"] == pytest.approx(-2.0, abs=1e-9)

    def test_fit_against_target(self, tmp_path, capsys):
        path = self._write_series(tmp_path, -1.5)
        rc = main(["fit", "--csv", path, "--column", "E_total", "--l", "1", "--s", "0.5", "--tol", "0.1"])
        assert rc == 0
        rc = main(["fit", "--csv", path, "--column", "E_total", "--l", "2", "--s", "0.5", "--tol", "0.1"])
        assert rc == 1

    def test_missing_column(self, tmp_path):
        path = self._write_series(tmp_path, -1.0)
        rc = main(["fit", "--csv", path, "--column", "nope"])
        assert rc == 2
