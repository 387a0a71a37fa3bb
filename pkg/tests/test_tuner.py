import numpy as np
import pytest

from gemmtuner.accel import default_config
from gemmtuner.schedule import Workload, enumerate_valid, pad_workload
from gemmtuner.tuner import (TuningJob, compare_baseline, featurize, measure,
                             measurement_problem, tune)

CFG = default_config()


def space_of(w):
    return enumerate_valid(pad_workload(w, CFG), CFG)


class TestStrategies:
    def test_exhaustive_visits_whole_space(self):
        w = Workload(16, 16, 16)
        res = tune(TuningJob(w, CFG, strategy="exhaustive"))
        space = space_of(w)
        assert len(res.history) == len(space)
        assert [r.params for r in res.history] == space
        assert res.best.cycles == min(r.cycles for r in res.history)

    def test_random_with_full_budget_matches_exhaustive(self):
        w = Workload(16, 16, 16)
        ex = tune(TuningJob(w, CFG, strategy="exhaustive"))
        rnd = tune(TuningJob(w, CFG, strategy="random",
                             budget=len(space_of(w)), seed=5))
        assert rnd.best.cycles == ex.best.cycles

    def test_random_samples_without_replacement(self):
        w = Workload(32, 32, 32)
        res = tune(TuningJob(w, CFG, strategy="random", budget=100, seed=1))
        keys = [r.params.sort_key() for r in res.history]
        assert len(set(keys)) == len(keys) == 100

    def test_reproducible_history(self):
        w = Workload(32, 32, 32)
        job = TuningJob(w, CFG, strategy="model_guided", budget=40, seed=9)
        a = tune(job)
        b = tune(job)
        assert [(r.params, r.cycles) for r in a.history] \
            == [(r.params, r.cycles) for r in b.history]

    def test_no_strategy_beats_exhaustive(self):
        w = Workload(32, 32, 32)
        ex = tune(TuningJob(w, CFG, strategy="exhaustive"))
        for strategy, budget in (("random", 64), ("model_guided", 48)):
            res = tune(TuningJob(w, CFG, strategy=strategy, budget=budget,
                                 seed=2))
            assert res.best.cycles >= ex.best.cycles

    def test_early_stopping_bounds_tail(self):
        w = Workload(32, 32, 32)
        res = tune(TuningJob(w, CFG, strategy="exhaustive", early_stop=25))
        best_at = max(i for i, r in enumerate(res.history)
                      if r.cycles == res.best.cycles
                      and r.params == res.best.params)
        assert len(res.history) - 1 - best_at <= 25

    def test_budget_respected(self):
        w = Workload(32, 32, 32)
        res = tune(TuningJob(w, CFG, strategy="model_guided", budget=20,
                             seed=0))
        assert len(res.history) <= 20

    def test_tie_break_is_lexicographic(self):
        w = Workload(16, 16, 16)
        res = tune(TuningJob(w, CFG, strategy="exhaustive"))
        ties = [r.params for r in res.history if r.cycles == res.best.cycles]
        assert res.best.params == min(ties, key=lambda p: p.sort_key())

    def test_parallel_workers_match_serial(self):
        w = Workload(16, 16, 16)
        serial = tune(TuningJob(w, CFG, strategy="exhaustive"))
        parallel = tune(TuningJob(w, CFG, strategy="exhaustive",
                                  parallelism=2))
        assert [(r.params, r.cycles) for r in serial.history] \
            == [(r.params, r.cycles) for r in parallel.history]

    def test_gops_consistent_with_cycles(self):
        from gemmtuner.sim import count_ops
        w = Workload(32, 32, 32)
        res = tune(TuningJob(w, CFG, strategy="random", budget=10, seed=4))
        for r in res.history:
            want = count_ops(w) / (r.cycles / CFG.timing.clock_hz) / 1e9
            assert r.gops == pytest.approx(want)

    def test_bad_jobs_rejected(self):
        w = Workload(16, 16, 16)
        with pytest.raises(ValueError):
            TuningJob(w, CFG, strategy="simulated_annealing")
        with pytest.raises(ValueError):
            TuningJob(w, CFG, budget=0)
        with pytest.raises(ValueError):
            TuningJob(w, CFG, early_stop=0)


class TestGuidedQuality:
    @pytest.mark.parametrize("dims", [(16, 16, 16), (32, 32, 32), (32, 1, 64)])
    def test_within_five_percent_on_small_spaces(self, dims):
        w = Workload(*dims)
        assert len(space_of(w)) <= 512
        ex = tune(TuningJob(w, CFG, strategy="exhaustive"))
        gd = tune(TuningJob(w, CFG, strategy="model_guided", budget=128,
                            early_stop=500, seed=0))
        assert gd.best.cycles <= 1.05 * ex.best.cycles


class TestCompareBaseline:
    def test_tuned_never_loses_when_exhaustive(self):
        for dims in ((16, 16, 16), (32, 32, 32)):
            cmp = compare_baseline(Workload(*dims), CFG)
            assert cmp.strategy == "exhaustive"
            assert cmp.tuned.cycles <= cmp.cisc_cycles

    def test_minimal_workload_ties(self):
        cmp = compare_baseline(Workload(16, 16, 16), CFG)
        # only one tiling exists; the FSM has nothing to reorder
        assert cmp.tuned.cycles == cmp.cisc_cycles
        assert not cmp.baseline_wins

    def test_histories_returned(self):
        cmp = compare_baseline(Workload(16, 16, 16), CFG)
        assert len(cmp.tuned_history) == len(space_of(Workload(16, 16, 16)))


def test_featurize_fixed_width():
    w = pad_workload(Workload(32, 32, 32), CFG)
    widths = {len(featurize(p, w, CFG)) for p in space_of(Workload(32, 32, 32))}
    assert widths == {14}


def test_measurement_problem_deterministic():
    a = measurement_problem(Workload(16, 16, 16))
    b = measurement_problem(Workload(16, 16, 16))
    assert np.array_equal(a.q_a, b.q_a)
    assert a.scale_ratio == b.scale_ratio
