import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridattacksim.attacks import AttackKind, AttackSchedule, AttackWindow, default_schedule
from gridattacksim.caseio import BusKind, _replace, fixture_text, parse_matpower_case
from gridattacksim.logio import log_to_csv
from gridattacksim.powerflow import InvalidCase, PowerFlowOptions
from gridattacksim.simulator import (
    SimConfig,
    compare_runs,
    detect_anomalies,
    load_multiplier,
    run,
    run_with_baseline,
    step,
)
from gridattacksim.validation import ShapeMismatch


def frames_in(log, lo, hi):
    return [f for f in log.frames if lo <= f.t <= hi]


class TestLoadMultiplier:
    @pytest.mark.parametrize("t,expected", [
        (0, 1.0), (36, 1.15), (72, 1.0), (108, 0.85), (18, 1 + 0.15 * math.sin(math.pi / 4)),
    ])
    def test_noise_free_profile(self, t, expected):
        assert load_multiplier(t, SimConfig()) == pytest.approx(expected, abs=1e-15)

    def test_amplitude_parameter(self):
        assert load_multiplier(36, SimConfig(sinus_amplitude=0.3)) == pytest.approx(1.3)

    def test_short_horizon_still_one_cycle(self):
        cfg = SimConfig(n_steps=24)
        assert load_multiplier(6, cfg) == pytest.approx(1.15)

    @settings(max_examples=40)
    @given(st.integers(0, 143), st.integers(0, 10**6), st.floats(0.001, 0.5))
    def test_noise_bounded_and_reproducible(self, t, seed, sigma):
        cfg = SimConfig(noise_amplitude=sigma, seed=seed)
        base = load_multiplier(t, SimConfig())
        m = load_multiplier(t, cfg)
        assert abs(m - base) <= sigma
        assert m == load_multiplier(t, cfg)

    def test_seeds_differ(self):
        a = [load_multiplier(t, SimConfig(noise_amplitude=0.05, seed=1)) for t in range(10)]
        b = [load_multiplier(t, SimConfig(noise_amplitude=0.05, seed=2)) for t in range(10)]
        assert a != b

    @pytest.mark.parametrize("t", [-1, 144])
    def test_out_of_range(self, t):
        with pytest.raises(ValueError):
            load_multiplier(t, SimConfig())


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"n_steps": 0}, {"seed": -1}, {"noise_amplitude": -0.1}, {"noise_amplitude": 1.0},
        {"vband": (1.05, 0.95)},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)

    def test_to_dict_is_json_ready(self):
        d = SimConfig(schedule=default_schedule()).to_dict()
        assert json.loads(json.dumps(d)) == d
        assert len(d["schedule"]) == 3


class TestStep:
    def test_first_step_nominal(self, case14):
        fr = step(case14, SimConfig(), 0)
        assert fr.converged and fr.attack_mask == 0
        assert np.array_equal(fr.pd_eff, case14.pd)
        assert fr.total_load_mw == pytest.approx(259.0)

    def test_dos_uses_previous_frame(self, case14):
        cfg = SimConfig(schedule=AttackSchedule((AttackWindow(AttackKind.DOS, 1, 5),)))
        f0 = step(case14, cfg, 0)
        f1 = step(case14, cfg, 1, previous=f0)
        assert np.array_equal(f1.pd_eff, f0.pd_eff)
        assert np.array_equal(f1.vm_true, f0.vm_true)

    def test_failed_solve_is_recorded(self, case2):
        heavy = case2.with_demands(np.array([0.0, 480.0]), np.zeros(2))
        log = run(heavy, SimConfig(n_steps=24))
        bad = [f.t for f in log.frames if not f.converged]
        assert bad and 6 in bad
        assert log.n_steps == 24
        assert log.frames[0].converged

    def test_invalid_case_rejected_before_run(self, case2):
        buses = tuple(_replace(b, bus_kind=BusKind.PQ) for b in case2.buses)
        bad = case2.__class__(case2.base_mva, buses, case2.gens, case2.branches)
        with pytest.raises(InvalidCase):
            run(bad, SimConfig(n_steps=2))


class TestDefaultScenario:
    def test_mask(self, attacked_log):
        for f in attacked_log.frames:
            expected = 1 if 20 <= f.t <= 50 else 4 if 60 <= f.t <= 90 else 2 if 100 <= f.t <= 130 else 0
            assert f.attack_mask == expected

    def test_fdi_offset_exact(self, attacked_log):
        for f in attacked_log.frames:
            if 60 <= f.t <= 90:
                assert np.array_equal(f.vm_meas, f.vm_true + 0.1)
            else:
                assert np.array_equal(f.vm_meas, f.vm_true)

    def test_fdi_leaves_physics_alone(self, attacked_log, baseline_log):
        for fa, fb in zip(frames_in(attacked_log, 60, 90), frames_in(baseline_log, 60, 90)):
            assert np.array_equal(fa.vm_true, fb.vm_true)

    def test_dos_freeze(self, attacked_log):
        ref = attacked_log.frames[20]
        for f in frames_in(attacked_log, 21, 50):
            assert np.array_equal(f.pd_eff, ref.pd_eff)
            assert np.array_equal(f.qd_eff, ref.qd_eff)
            assert np.array_equal(f.vm_true, ref.vm_true)

    def test_dos_holds_pre_window_load(self, attacked_log, baseline_log):
        assert np.array_equal(attacked_log.frames[20].pd_eff, baseline_log.frames[19].pd_eff)

    def test_dod_scaling(self, case14, attacked_log):
        cfg = SimConfig()
        pos = [case14.bus_index[b] for b in (5, 7, 9)]
        for f in frames_in(attacked_log, 100, 130):
            nominal = case14.pd * load_multiplier(f.t, cfg)
            for i in range(14):
                if i in pos:
                    assert f.pd_eff[i] == pytest.approx(1.5 * nominal[i], rel=1e-12)
                else:
                    assert f.pd_eff[i] == nominal[i]

    def test_losses_rise_under_dod(self, attacked_log, baseline_log):
        a = np.mean([f.losses_mw for f in frames_in(attacked_log, 100, 130)])
        b = np.mean([f.losses_mw for f in frames_in(baseline_log, 100, 130)])
        assert a > b

    def test_energy_conservation(self, attacked_log):
        # no bus shunt conductance in the 14-bus case
        for f in attacked_log.frames:
            assert f.total_gen_mw - f.total_load_mw == pytest.approx(f.losses_mw, abs=1e-6)

    def test_outside_windows_equals_baseline(self, attacked_log, baseline_log):
        for fa, fb in zip(attacked_log.frames, baseline_log.frames):
            if fa.attack_mask == 0 and fa.t < 20:
                assert fa == fb

    def test_all_converged(self, attacked_log, baseline_log):
        assert all(f.converged for f in attacked_log.frames + baseline_log.frames)


class TestDeterminism:
    def test_same_config_same_log(self, case14):
        cfg = SimConfig(n_steps=30, noise_amplitude=0.05, seed=7, schedule=default_schedule())
        assert log_to_csv(run(case14, cfg)) == log_to_csv(run(case14, cfg))

    def test_seed_changes_output(self, case14):
        a = run(case14, SimConfig(n_steps=5, noise_amplitude=0.05, seed=1))
        b = run(case14, SimConfig(n_steps=5, noise_amplitude=0.05, seed=2))
        assert log_to_csv(a) != log_to_csv(b)

    def test_empty_schedule_is_baseline(self, case14, baseline_log):
        log = run(case14, SimConfig(schedule=AttackSchedule()))
        assert log_to_csv(log) == log_to_csv(baseline_log)

    def test_parallel_runner_matches_serial(self, case14):
        cfg = SimConfig(n_steps=40, schedule=default_schedule(), noise_amplitude=0.02, seed=3)
        attacked, baseline = run_with_baseline(case14, cfg)
        assert attacked == run(case14, cfg)
        assert baseline == run(case14, SimConfig(n_steps=40, noise_amplitude=0.02, seed=3))

    def test_run_without_qlims(self, case14):
        cfg = SimConfig(n_steps=20, pf_options=PowerFlowOptions(enforce_q_lims=False))
        log = run(case14, cfg)
        assert log.column("pvpq_switch_count").sum() == 0


class TestCompare:
    def test_self_delta_zero(self, attacked_log):
        d = compare_runs(attacked_log, attacked_log)
        assert not d.vm_true.any() and not d.losses_mw.any()

    def test_fdi_shows_in_measured_delta_only(self, attacked_log, baseline_log):
        d = compare_runs(attacked_log, baseline_log)
        rows = slice(60, 91)
        assert np.allclose(d.vm_meas[rows], 0.1, atol=1e-12)
        assert not d.vm_true[rows].any()

    def test_shape_mismatch(self, case14, attacked_log):
        short = run(case14, SimConfig(n_steps=3))
        with pytest.raises(ShapeMismatch):
            compare_runs(attacked_log, short)

    def test_bus_mismatch(self, case3):
        a = run(case3, SimConfig(n_steps=3))
        b = run(parse_matpower_case(fixture_text("case2")), SimConfig(n_steps=3))
        with pytest.raises(ShapeMismatch):
            compare_runs(a, b)


class TestAnomalies:
    def test_default_scenario_below_threshold(self, attacked_log, baseline_log):
        assert detect_anomalies(attacked_log, baseline_log) == []

    def test_flags_lie_inside_load_attacks(self, case14, baseline_log):
        sched = AttackSchedule((
            AttackWindow(AttackKind.DOD, 30, 40, (4, 5, 9, 14), scale=3.0),
            AttackWindow(AttackKind.FDI, 60, 70, bias=0.3),
        ))
        attacked = run(case14, SimConfig(schedule=sched))
        flagged = detect_anomalies(attacked, baseline_log)
        assert flagged
        assert set(flagged) <= set(range(30, 41))

    def test_infinite_threshold_flags_nothing(self, attacked_log, baseline_log):
        assert detect_anomalies(attacked_log, baseline_log, threshold=math.inf) == []

    def test_zero_threshold_flags_any_change(self, attacked_log, baseline_log):
        flagged = detect_anomalies(attacked_log, baseline_log, threshold=0.0)
        assert set(flagged) >= set(range(100, 131))
        assert not set(flagged) & set(range(0, 20))
