import json

import numpy as np
import pytest

from gridattacksim.logio import (
    SchemaMismatch,
    csv_header,
    delta_to_csv,
    log_from_csv,
    log_to_csv,
    read_log,
    read_sidecar,
    write_run,
)
from gridattacksim.metrics import compute_metrics
from gridattacksim.simulator import SimConfig, compare_runs, run

SCALAR = ("t", "hour", "attack_mask", "converged", "total_load_mw", "total_gen_mw",
          "losses_mw", "violations_true", "violations_meas", "pvpq_switch_count")


@pytest.fixture(scope="module")
def noisy_log(case14):
    return run(case14, SimConfig(n_steps=12, noise_amplitude=0.03, seed=11))


class TestHeader:
    def test_layout(self):
        cols = csv_header((1, 2, 5), 2)
        assert cols[:4] == ["t", "hour", "attack_mask", "converged"]
        assert cols[4:7] == ["vm_true_1", "vm_true_2", "vm_true_5"]
        assert "pg_1" in cols and "qg_2" in cols and "pg_0" not in cols
        assert cols[-1] == "pvpq_switch_count"
        assert len(cols) == 4 + 9 + 4 + 6


class TestRoundTrip:
    def test_values_bit_identical(self, noisy_log):
        back = log_from_csv(log_to_csv(noisy_log))
        assert back.bus_ids == noisy_log.bus_ids
        for name in ("vm_true", "vm_meas", "va", "pg", "qg") + SCALAR:
            assert np.array_equal(back.column(name), noisy_log.column(name)), name

    @pytest.mark.parametrize("side", ["true", "meas"])
    def test_metrics_recomputable_from_csv(self, attacked_log, side):
        back = log_from_csv(log_to_csv(attacked_log))
        assert compute_metrics(back, side) == compute_metrics(attacked_log, side)

    def test_text_fixed_point(self, attacked_log):
        text = log_to_csv(attacked_log)
        assert log_to_csv(log_from_csv(text)) == text

    def test_unix_newlines(self, noisy_log):
        text = log_to_csv(noisy_log)
        assert "\r" not in text
        assert text.count("\n") == noisy_log.n_steps + 1

    def test_nan_survives(self, case2):
        heavy = case2.with_demands(np.array([0.0, 480.0]), np.zeros(2))
        log = run(heavy, SimConfig(n_steps=24))
        back = log_from_csv(log_to_csv(log))
        assert np.array_equal(back.column("converged"), log.column("converged"))
        assert np.array_equal(back.column("losses_mw"), log.column("losses_mw"), equal_nan=True)


class TestRejects:
    def test_truncated_row(self, noisy_log):
        text = log_to_csv(noisy_log)
        cut = text[: text.rindex(",")] + "\n"
        with pytest.raises(SchemaMismatch, match="fields"):
            log_from_csv(cut)

    def test_header_only(self, noisy_log):
        with pytest.raises(SchemaMismatch):
            log_from_csv(log_to_csv(noisy_log).splitlines(keepends=True)[0])

    def test_empty(self):
        with pytest.raises(SchemaMismatch):
            log_from_csv("")

    def test_renamed_column(self, noisy_log):
        with pytest.raises(SchemaMismatch, match="header"):
            log_from_csv(log_to_csv(noisy_log).replace("losses_mw", "loss_mw", 1))

    def test_missing_step(self, noisy_log):
        lines = log_to_csv(noisy_log).splitlines(keepends=True)
        del lines[3]
        with pytest.raises(SchemaMismatch, match="expected t=2"):
            log_from_csv("".join(lines))

    def test_bad_number(self, noisy_log):
        lines = log_to_csv(noisy_log).splitlines(keepends=True)
        fields = lines[1].split(",")
        fields[5] = "abc"
        lines[1] = ",".join(fields)
        with pytest.raises(SchemaMismatch, match="line 2"):
            log_from_csv("".join(lines))

    def test_bad_converged_flag(self, noisy_log):
        lines = log_to_csv(noisy_log).splitlines(keepends=True)
        fields = lines[1].split(",")
        fields[3] = "yes"
        lines[1] = ",".join(fields)
        with pytest.raises(SchemaMismatch):
            log_from_csv("".join(lines))


class TestArtifacts:
    def test_write_and_read(self, tmp_path, noisy_log):
        art = write_run(noisy_log, tmp_path / "sub" / "run1", case_name="case14")
        assert art.csv_path.name == "run1.csv" and art.sidecar_path.name == "run1.json"
        meta = read_sidecar(art.sidecar_path)
        assert meta["case"] == "case14"
        assert meta["n_steps"] == 12
        assert meta["gen_buses"] == [1, 2, 3, 6, 8]
        assert meta["config"]["seed"] == 11
        assert set(meta["metrics"]) == {"true", "meas"}
        back = read_log(art.csv_path)
        assert back.gen_buses == (1, 2, 3, 6, 8)
        assert np.array_equal(back.column("vm_true"), noisy_log.column("vm_true"))

    def test_read_without_sidecar(self, tmp_path, noisy_log):
        p = tmp_path / "bare.csv"
        p.write_text(log_to_csv(noisy_log))
        assert read_log(p).gen_buses == ()

    def test_sidecar_step_count_checked(self, tmp_path, noisy_log):
        art = write_run(noisy_log, tmp_path / "r")
        meta = json.loads(art.sidecar_path.read_text())
        meta["n_steps"] = 99
        art.sidecar_path.write_text(json.dumps(meta))
        with pytest.raises(SchemaMismatch, match="sidecar"):
            read_log(art.csv_path)

    def test_prefix_with_dots(self, tmp_path, noisy_log):
        art = write_run(noisy_log, tmp_path / "run.v2")
        assert art.csv_path.name == "run.v2.csv"


class TestDelta:
    def test_columns_and_values(self, attacked_log, baseline_log):
        d = compare_runs(attacked_log, baseline_log)
        text = delta_to_csv(d, attacked_log.column("hour"))
        lines = text.splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["t", "hour"]
        assert header[2] == "dvm_true_1" and header[16] == "dvm_meas_1"
        assert header[-3:] == ["mean_vm_true_delta", "mean_vm_meas_delta", "losses_delta_mw"]
        assert len(lines) == 145
        row70 = lines[71].split(",")
        assert float(row70[16]) == pytest.approx(0.1, abs=1e-12)
