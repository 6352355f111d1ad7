import numpy as np
import pytest

from csslr.data import PROFILES, Dataset, Sign, SignExpectation
from csslr.engine import (
    ModelSet,
    Selector,
    TerminatedBy,
    check_equivalent,
    check_improved,
    leading_models,
    representative_model,
    run_csslr,
    selection_step,
    trim_model,
)
from csslr.glm import Direction, FittedModel, TestResult, fit_logistic
from csslr.simulation import BUILTIN_STUDIES, generate_dataset, study_signs

CFG_A = PROFILES["CSSLR1a"]
CFG_B = PROFILES["CSSLR1b"]


def gaussian_pair_data(rng, n_per_class, columns):
    """Balanced classes; ``columns`` maps name -> class mean shift mu."""
    y = np.repeat([0.0, 1.0], n_per_class)
    cols = [np.where(y == 0, mu, -mu) + rng.normal(size=y.size) for mu in columns.values()]
    return Dataset(y, tuple(columns), np.column_stack(cols))


def fake_model(names):
    return FittedModel(tuple(names), 0.0, np.zeros(len(names)), np.full(4, 0.5), -1.0,
                       2.0 + 2 * len(names), True, np.ones(len(names) + 1))


class StubSelector(Selector):
    """Selector whose AUC/MSE statistics come from lookup tables."""

    def __init__(self, aucs, mses, auc_tests, mse_tests, config=CFG_A):
        y = np.array([0.0, 1.0, 0.0, 1.0])
        super().__init__(Dataset(y, ("a",), np.zeros((4, 1))), None, config)
        self._aucs, self._mses = aucs, mses
        self._auc_tests, self._mse_tests = auc_tests, mse_tests

    def auc(self, m):
        return self._aucs[m.variable_names]

    def mse(self, m):
        return self._mses[m.variable_names]

    @staticmethod
    def _lookup(table, a, b):
        key = (a.variable_names, b.variable_names)
        if key in table:
            return table[key]
        p, d = table[key[::-1]]
        return p, d.flipped()

    def auc_test(self, a, b):
        p, d = self._lookup(self._auc_tests, a, b)
        return TestResult(0.0, p, d)

    def mse_test(self, a, b):
        p, d = self._lookup(self._mse_tests, a, b)
        return TestResult(0.0, p, d)


F, S = Direction.FIRST_BETTER, Direction.SECOND_BETTER


class TestCheckImproved:
    def test_strong_variable_always_improves_constant(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            d = gaussian_pair_data(rng, 500, {"S": 1.0})
            base = fit_logistic(d, (), CFG_A)
            cand = fit_logistic(d, ("S",), CFG_A)
            v = check_improved(base, cand, d, SignExpectation({"S": Sign.NEGATIVE}), CFG_A)
            assert v.improved
            assert (v.lr_pass, v.sign_pass, v.vif_pass, v.calib_pass, v.aic_pass) == (True,) * 5
            assert v.auc_pass and v.mse_pass

    def test_noise_variable_rarely_improves(self):
        rng = np.random.default_rng(11)
        improved = 0
        for _ in range(100):
            d = gaussian_pair_data(rng, 500, {"R": 0.0})
            v = check_improved(fit_logistic(d, (), CFG_A), fit_logistic(d, ("R",), CFG_A),
                               d, None, CFG_A)
            improved += v.improved
        assert improved <= 10

    def test_wrong_sign_blocks(self):
        rng = np.random.default_rng(12)
        d = gaussian_pair_data(rng, 500, {"S": 1.0})
        v = check_improved(fit_logistic(d, (), CFG_A), fit_logistic(d, ("S",), CFG_A),
                           d, SignExpectation({"S": Sign.POSITIVE}), CFG_A)
        assert v.lr_pass and v.auc_pass and not v.sign_pass
        assert not v.improved

    def test_vif_blocks_near_copy(self):
        rng = np.random.default_rng(13)
        d0 = gaussian_pair_data(rng, 500, {"S": 1.0})
        s = d0.column("S")
        d = Dataset(d0.response, ("S", "T"), np.column_stack([s, s + 0.05 * rng.normal(size=s.size)]))
        base = fit_logistic(d, ("S",), CFG_A)
        v = check_improved(base, fit_logistic(d, ("S", "T"), CFG_A), d, None, CFG_A)
        assert not v.vif_pass and not v.improved

    def test_candidate_must_extend_base(self):
        rng = np.random.default_rng(14)
        d = gaussian_pair_data(rng, 100, {"a": 1.0, "b": 0.5})
        with pytest.raises(ValueError):
            check_improved(fit_logistic(d, ("a",), CFG_A), fit_logistic(d, ("b",), CFG_A),
                           d, None, CFG_A)

    def test_non_converged_candidate(self):
        x = np.r_[np.linspace(-2, -0.1, 50), np.linspace(0.1, 2, 50)]
        y = (x < 0).astype(float)
        d = Dataset(y, ("x",), x[:, None])
        v = check_improved(fit_logistic(d, (), CFG_A), fit_logistic(d, ("x",), CFG_A), d, None, CFG_A)
        assert not v.improved and "converge" in v.reason


class TestDecisionModes:
    """The AUC/MSE combination rule, with the other gates forced to pass."""

    @pytest.mark.parametrize(
        "auc_sig, mse_sig, or_expected, and_expected",
        [
            ("+", "+", True, True),
            ("+", "0", True, False),
            ("0", "+", True, False),
            ("+", "-", False, False),
            ("-", "+", False, False),
            ("0", "0", False, False),
        ],
    )
    def test_truth_table(self, auc_sig, mse_sig, or_expected, and_expected):
        to_test = {"+": (0.001, F), "-": (0.001, S), "0": (0.5, F)}
        for cfg, expected in ((CFG_A, or_expected), (CFG_B, and_expected)):
            sel = StubSelector({}, {}, {(("a",), ()): to_test[auc_sig]},
                               {(("a",), ()): to_test[mse_sig]}, cfg)
            sel.max_vif = lambda m: 1.0
            sel.calibration = lambda m: TestResult(0.0, 0.99)
            sel.is_calibrated = lambda m: True
            base = fake_model(())
            cand = FittedModel(("a",), 0.0, np.array([1.0]), np.full(4, 0.5), 10.0, -16.0, True,
                               np.ones(2))
            v = sel.check_improved(base, cand)
            assert v.lr_pass and v.aic_pass and v.calib_pass
            assert v.dc_pass is expected and v.improved is expected

    def test_mse_ignored_when_base_uncalibrated(self):
        sel = StubSelector({}, {}, {(("a",), ()): (0.5, F)}, {(("a",), ()): (0.001, F)}, CFG_A)
        sel.max_vif = lambda m: 1.0
        sel.calibration = lambda m: TestResult(0.0, 0.99)
        sel.is_calibrated = lambda m: bool(m.variable_names)
        cand = FittedModel(("a",), 0.0, np.array([1.0]), np.full(4, 0.5), 10.0, -16.0, True, np.ones(2))
        v = sel.check_improved(fake_model(()), cand)
        assert not v.mse_tested and not v.mse_pass and not v.improved


class TestLeadingAndEquivalence:
    A, B, C = ("a",), ("b",), ("c",)

    def selector(self, auc_test, mse_test, aucs=None, mses=None):
        aucs = aucs or {self.A: 0.9, self.B: 0.8}
        mses = mses or {self.A: 0.2, self.B: 0.1}
        return StubSelector(aucs, mses, {(self.A, self.B): auc_test}, {(self.A, self.B): mse_test})

    def test_singleton(self):
        sel = self.selector((1.0, F), (1.0, F))
        m = fake_model(self.A)
        assert sel.leading_models([m]) == (m,)

    @pytest.mark.parametrize(
        "auc_test, mse_test, leaders",
        [
            ((0.01, F), (0.50, S), "a"),
            ((0.50, F), (0.01, S), "b"),
            ((0.50, F), (0.50, S), "ab"),
            ((0.01, F), (0.01, S), "ab"),
        ],
    )
    def test_two_candidate_leaders(self, auc_test, mse_test, leaders):
        sel = self.selector(auc_test, mse_test)
        a, b = fake_model(self.A), fake_model(self.B)
        got = "".join(m.variable_names[0] for m in sel.leading_models([b, a]))
        assert got == leaders

    def test_same_best_model_is_unique_leader(self):
        sel = self.selector((0.5, F), (0.5, F), mses={self.A: 0.05, self.B: 0.1})
        a, b = fake_model(self.A), fake_model(self.B)
        assert sel.leading_models([a, b]) == (a,)

    def test_ties_prefer_fewer_variables_then_names(self):
        ab, c = ("a", "b"), ("c",)
        sel = StubSelector({ab: 0.8, c: 0.8, self.B: 0.8}, {ab: 0.1, c: 0.1, self.B: 0.1}, {}, {})
        models = [fake_model(ab), fake_model(c), fake_model(self.B)]
        assert sel.leading_models(models)[0].variable_names == self.B

    @pytest.mark.parametrize(
        "auc_test, mse_test, equivalent",
        [
            ((0.50, F), (0.50, S), True),
            ((0.01, F), (0.50, F), False),
            ((0.50, F), (0.01, S), False),
            ((0.01, F), (0.01, S), True),
            ((0.01, S), (0.01, F), True),
            ((0.01, F), (0.01, F), False),
        ],
    )
    def test_equivalence_truth_table(self, auc_test, mse_test, equivalent):
        sel = self.selector(auc_test, mse_test)
        assert sel.check_equivalent(fake_model(self.A), fake_model(self.B)) is equivalent

    def test_model_equivalent_to_itself(self):
        rng = np.random.default_rng(0)
        d = gaussian_pair_data(rng, 200, {"S": 1.0})
        m = fit_logistic(d, ("S",), CFG_A)
        assert check_equivalent(m, m, d, CFG_A)

    def test_strong_beats_weak(self):
        rng = np.random.default_rng(20)
        for _ in range(30):
            d = gaussian_pair_data(rng, 500, {"S": 1.0, "W": 0.5})
            s, w = fit_logistic(d, ("S",), CFG_A), fit_logistic(d, ("W",), CFG_A)
            leaders = leading_models([w, s], d, CFG_A)
            assert leaders == (s,)
            assert not check_equivalent(w, s, d, CFG_A)


class TestTrim:
    def test_dominated_earlier_variable_is_removed(self):
        rng = np.random.default_rng(30)
        removed = 0
        for _ in range(100):
            n = 1000
            y = np.repeat([0.0, 1.0], n // 2)
            s = np.where(y == 0, 1.0, -1.0) + rng.normal(size=n)
            w = s + rng.normal(size=n)
            d = Dataset(y, ("W", "S"), np.column_stack([w, s]))
            cand = fit_logistic(d, ("W", "S"), CFG_A)
            trimmed = trim_model(cand, ("W",), d, None, CFG_A)
            removed += trimmed.variable_names == ("S",)
        assert removed >= 80

    def test_sign_flip_is_removed_despite_significance(self):
        rng = np.random.default_rng(31)
        n = 4000
        z, e = rng.normal(size=(2, n))
        v1 = z + e
        y = (rng.random(n) < 1 / (1 + np.exp(-(2 * z - e)))).astype(float)
        d = Dataset(y, ("V1", "Vc"), np.column_stack([v1, z]))
        signs = SignExpectation({"V1": Sign.POSITIVE, "Vc": Sign.POSITIVE})
        assert fit_logistic(d, ("V1",), CFG_A).coefficient("V1") > 0
        cand = fit_logistic(d, ("V1", "Vc"), CFG_A)
        assert cand.coefficient("V1") < 0
        sel = Selector(d, signs, CFG_A)
        trimmed, actions = sel.trim_model(cand, "Vc")
        assert trimmed.variable_names == ("Vc",)
        assert actions[0].wrong_sign and actions[0].p_lr < CFG_A.p_lr_T

    def test_no_op_when_everything_contributes(self):
        rng = np.random.default_rng(32)
        d = gaussian_pair_data(rng, 500, {"S1": 1.0, "S2": 1.0, "S3": 1.0})
        cand = fit_logistic(d, ("S1", "S2", "S3"), CFG_A)
        assert trim_model(cand, ("S1", "S2"), d, None, CFG_A) is cand


class TestSelection:
    def test_first_step_keeps_one_strong_variable(self):
        spec = BUILTIN_STUDIES["table3"]
        for i in range(10):
            d = generate_dataset(spec, i)
            nxt, rec, stopped = selection_step(ModelSet([fit_logistic(d, (), CFG_A)]), d,
                                               study_signs(spec), CFG_A)
            assert not stopped and rec.deleted == [()]
            for m in nxt:
                assert len(m.variable_names) == 1 and m.variable_names[0].startswith("S")

    def test_noise_stops_at_first_step(self):
        spec = BUILTIN_STUDIES["table6"]
        stopped_runs = 0
        for i in range(100):
            d = generate_dataset(spec, i)
            current = ModelSet([fit_logistic(d, (), CFG_B)])
            nxt, rec, stopped = selection_step(current, d, None, CFG_B)
            stopped_runs += stopped
            if stopped:
                assert nxt is current and rec.improved == []
        assert stopped_runs >= 98

    def test_constant_start_is_calibrated(self):
        d = generate_dataset(BUILTIN_STUDIES["table6"], 0)
        sel = Selector(d, None, CFG_A)
        t = sel.calibration(sel.fit(()))
        assert t.degenerate and sel.is_calibrated(sel.fit(()))

    def test_max_steps(self):
        d = generate_dataset(BUILTIN_STUDIES["table3"], 1)
        r = run_csslr(d, None, CFG_A.with_overrides(max_steps=1))
        assert r.terminated_by is TerminatedBy.MAX_STEPS
        assert all(len(m.variable_names) <= 1 for m in r.final_models)

    def test_cap_keeps_leaders(self):
        d = generate_dataset(BUILTIN_STUDIES["table3"], 2)
        r = run_csslr(d, study_signs(BUILTIN_STUDIES["table3"]),
                      CFG_A.with_overrides(max_models_per_step=1, max_steps=2))
        assert len(r.final_models) == 1
        assert any(s.dropped_by_cap for s in r.trace)

    @pytest.mark.parametrize("index", range(3))
    def test_run_invariants(self, index):
        spec = BUILTIN_STUDIES["table3"]
        d = generate_dataset(spec, index)
        sel = Selector(d, study_signs(spec), PROFILES["CSSLR2a"])
        r = sel.run()
        keys = [m.key for m in r.final_models]
        assert len(keys) == len(set(keys))
        assert all(ld.key in set(keys) for ld in r.leaders)
        for c in r.candidate_records():
            if c.accepted:
                assert sel.fit(c.final_variables).aic < sel.fit(c.base_variables).aic
        created = {frozenset(c.final_variables) for c in r.candidate_records() if c.accepted}
        assert all(k in created or not k for k in keys)
        for m in r.final_models:
            for ld in r.leaders:
                assert sel.check_equivalent(m, ld)
        rerun = run_csslr(d, study_signs(spec), PROFILES["CSSLR2a"])
        assert [c.to_dict() for c in rerun.candidate_records()] == \
            [c.to_dict() for c in r.candidate_records()]
        assert representative_model(rerun).variable_names == representative_model(r).variable_names

    def test_representative_of_constant(self):
        d = generate_dataset(BUILTIN_STUDIES["table6"], 0)
        r = run_csslr(d, None, CFG_B)
        assert representative_model(r).variable_names == ()


def test_model_set_dedups_by_variable_set():
    s = ModelSet([fake_model(("a", "b")), fake_model(("b", "a")), fake_model(("c",))])
    assert len(s) == 2
    assert s[0].variable_names == ("a", "b")
    assert ("b", "a") in s
