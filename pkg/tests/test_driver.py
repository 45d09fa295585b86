"""Run orchestration: determinism, outputs, receivers, the CLI."""

import os

import numpy as np
import pytest

from faultwave import cli, config as cfgmod, driver, elastic, scenarios


def tiny_config(**overrides):
    cfg = scenarios.build_tpv10(h=0.5, domain_scale=0.2, end_time=0.3,
                                family="dp_upwind", order=4)
    for key, val in overrides.items():
        setattr(cfg, key, val)
    return cfg


class TestRun:
    def test_zero_state_without_overload_stays_zero(self):
        cfg = tiny_config()
        cfg.stress_shear_ratio = 0.0
        cfg.stress_patches = []     # compressive preload only: fault locked
        res = driver.run(cfg, output_dir=None)
        assert res.summary["max_slip_rate_mps"] == 0.0
        assert np.abs(res.final_slip).max() == 0.0
        for st in res.final_state:
            assert np.abs(st.q).max() == 0.0
        assert np.abs(res.energy_log[:, 1]).max() == 0.0

    def test_rupture_reaches_receiver(self, tmp_path):
        cfg = tiny_config(end_time=2.0)
        res = driver.run(cfg, output_dir=str(tmp_path))
        tr = res.receivers["station"]
        assert tr[:, 3].max() > 0.0
        assert res.summary["final_max_slip_m"] > 0.0

    def test_receiver_frame_consistency(self):
        cfg = tiny_config(end_time=1.0)
        res = driver.run(cfg, output_dir=None)
        tr = res.receivers["station"]
        v = np.hypot(tr[:, 1], tr[:, 2])
        assert np.abs(v - tr[:, 3]).max() < 1e-12 * max(1.0, tr[:, 3].max())

    def test_determinism_bit_identical_outputs(self, tmp_path):
        cfg = tiny_config(end_time=0.5, snapshot_stride=5)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        driver.run(cfg, output_dir=str(out_a))
        driver.run(cfg, output_dir=str(out_b))
        names = sorted(os.listdir(out_a))
        assert names == sorted(os.listdir(out_b))
        assert any(n.startswith("receiver_") for n in names)
        assert "energy.csv" in names
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_receiver_csv_header(self, tmp_path):
        cfg = tiny_config(end_time=0.3)
        driver.run(cfg, output_dir=str(tmp_path))
        path = tmp_path / "receiver_station.csv"
        assert path.read_text().splitlines()[0] == \
            "t,slip_rate_dip,slip_rate_strike,V,T_m,T_l,T_n,S"
        energy_first = (tmp_path / "energy.csv").read_text().splitlines()[0]
        assert energy_first.startswith("t,E,dEdt,interface_term")

    def test_energy_identity_holds_during_run(self):
        cfg = tiny_config(end_time=0.8)
        res = driver.run(cfg, output_dir=None)
        log = res.energy_log
        scale = np.maximum(np.abs(log[:, 2]), 1e-20)
        assert (log[:, 8] / scale).max() < 1e-8
        # interface dissipation and fluctuations never positive
        assert log[:, 3].max() <= 1e-12
        assert log[:, 4].max() <= 1e-12
        assert log[:, 5].max() <= 1e-12

    def test_snapshot_round_trip(self, tmp_path):
        path = tmp_path / "snap.bin"
        rng = np.random.default_rng(8)
        arrays = {"V": rng.standard_normal((5, 7)),
                  "slip": rng.standard_normal((5, 7))}
        driver.write_fault_snapshot(path, 12, 0.75, arrays)
        back = driver.read_fault_snapshot(path)
        assert back["step"] == 12
        assert back["time"] == 0.75
        np.testing.assert_array_equal(back["V"], arrays["V"])
        np.testing.assert_array_equal(back["slip"], arrays["slip"])

    def test_snapshots_written_at_stride(self, tmp_path):
        cfg = tiny_config(end_time=0.3, snapshot_stride=3)
        res = driver.run(cfg, output_dir=str(tmp_path))
        snaps = sorted(p for p in os.listdir(tmp_path) if p.endswith(".snap"))
        assert len(snaps) == len(res.summary["snapshots"])
        assert len(snaps) >= 2

    def test_divergence_guard(self):
        state = elastic.ElasticState(q=np.full((9, 2, 2, 2), np.nan), t=1.5)
        with pytest.raises(elastic.StateDivergedError) as err:
            state.assert_finite(step=7)
        assert err.value.step == 7
        assert err.value.time == 1.5


class TestCli:
    def test_simulate(self, tmp_path, capsys):
        cfg = tiny_config(end_time=0.3)
        cfg_path = tmp_path / "run.cfg"
        cfgmod.dump(cfg, cfg_path)
        code = cli.main(["simulate", str(cfg_path),
                         "--output-dir", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "energy.csv").exists()
        assert "max slip rate" in capsys.readouterr().out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[run]\nmystery = 1\n")
        assert cli.main(["simulate", str(bad)]) == 2

    def test_dispersion_subcommand(self, tmp_path, capsys):
        code = cli.main(["dispersion", "dp_upwind", "4",
                         "--output-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "dispersion_dp_upwind_4.csv").exists()

    def test_verify_operators(self, capsys):
        assert cli.main(["verify-operators"]) == 0
        out = capsys.readouterr().out
        assert "drp" in out and "FAILED" not in out

    def test_mms_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "mms.cfg"
        cfg.write_text("[mms]\norder = 4\ncells = 8 16\nend_time = 0.1\n")
        code = cli.main(["mms", str(cfg), "--output-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "mms_traditional_4.csv").read_text().splitlines()
        assert lines[0] == "h,error,rate"
        assert len(lines) == 3
