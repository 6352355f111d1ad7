import numpy as np
import pytest

from csslr.baselines import select_aic, select_pvalue
from csslr.data import PROFILES, Dataset
from csslr.glm import fit_logistic, wald_pvalues
from csslr.simulation import StudySpec, generate_dataset

CFG = PROFILES["CSSLR1a"]


@pytest.fixture(scope="module", params=[0, 1, 2])
def data(request):
    rng = np.random.default_rng(request.param)
    n = 600
    X = rng.normal(size=(n, 6))
    eta = 1.2 * X[:, 0] - 0.6 * X[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return Dataset(y, tuple(f"v{i}" for i in range(6)), X)


class TestAic:
    def test_no_single_move_lowers_aic(self, data):
        m = select_aic(data)
        chosen = set(m.variable_names)
        for v in data.names:
            other = chosen ^ {v}
            names = [x for x in data.names if x in other]
            assert fit_logistic(data, names, CFG).aic >= m.aic - 1e-9

    def test_finds_true_signal(self, data):
        assert {"v0", "v1"} <= set(select_aic(data).variable_names)

    def test_step_limit(self, data):
        assert len(select_aic(data, max_steps=1).variable_names) == 1

    def test_noise_data_deterministic(self):
        d = generate_dataset(StudySpec(0, 0, 5, 0.0, 0.0, K=100), 0)
        assert select_aic(d).variable_names == select_aic(d).variable_names


class TestPvalue:
    def test_final_coefficients_significant(self, data):
        m = select_pvalue(data, 0.05)
        assert all(p < 0.05 for p in wald_pvalues(m).values())

    def test_no_remaining_variable_enters(self, data):
        m = select_pvalue(data, 0.05)
        for v in data.names:
            if v in m.variable_names:
                continue
            ext = fit_logistic(data, m.variable_names + (v,), CFG)
            assert wald_pvalues(ext)[v] >= 0.05

    def test_finds_true_signal(self, data):
        assert select_pvalue(data).variable_names[:2] == ("v0", "v1")

    def test_alpha_validated(self, data):
        with pytest.raises(ValueError):
            select_pvalue(data, alpha=1.5)

    def test_stricter_alpha_selects_subset(self, data):
        loose = set(select_pvalue(data, 0.2).variable_names)
        strict = set(select_pvalue(data, 0.001).variable_names)
        assert len(strict) <= len(loose)
