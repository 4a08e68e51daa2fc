import math

import numpy as np
import pytest

from housewelfare.dominance import dominance_functional, grid_for
from housewelfare.model import ConfigError, WeightedSample
from housewelfare.synth import Law, ScenarioSpec, generate, oracle_dominance, write_files


def _spec(n=1000, shares=(1.0,), law=None, seed=5):
    law = law or {"kind": "lognormal", "mu": 13.0, "sigma": 0.4}
    types = {f"t{k}": {"share": s, "law": law} for k, s in enumerate(shares)}
    return ScenarioSpec.from_dict({
        "seed": seed,
        "rounds": [
            {"id": 0, "start": "2010-01-01", "end": "2010-07-01", "n": n, "types": types},
            {"id": 1, "start": "2010-07-01", "end": "2011-01-01", "n": n, "types": types},
        ],
    })


class TestGenerate:
    def test_lognormal_location(self):
        data = generate(_spec(1000))
        logs = np.log(data.samples[0].values)
        assert abs(logs.mean() - 13.0) <= 0.4 * 3 / math.sqrt(1000)

    def test_files_are_byte_identical(self, tmp_path):
        paths_a = write_files(generate(_spec(200)), tmp_path / "a")
        paths_b = write_files(generate(_spec(200)), tmp_path / "b")
        for name in paths_a:
            with open(paths_a[name], "rb") as fa, open(paths_b[name], "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_seed_changes_draws(self):
        a = generate(_spec(50, seed=1)).samples[0].values
        b = generate(_spec(50, seed=2)).samples[0].values
        assert not np.array_equal(a, b)

    def test_mixture_shares(self):
        data = generate(_spec(10_000, shares=(0.7, 0.3)))
        labels = data.samples[0].type_labels
        assert abs(np.mean(labels == "t0") - 0.7) <= 0.02

    def test_dates_inside_rounds(self):
        data = generate(_spec(300))
        part = data.spec.partition
        ids = [int(r.id.split("-")[0][1:]) for r in data.records]
        assert [part.round_of(r.date) for r in data.records] == ids

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            _spec(shares=(0.5, 0.4))
        with pytest.raises(ConfigError):
            _spec(n=0)
        with pytest.raises(ConfigError):
            Law("pareto", {"alpha": 2.0})


class TestOracle:
    GRID = np.linspace(0.0, 3.0, 61)

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_identical_laws(self, s):
        law = Law.uniform(0, 1)
        assert np.all(oracle_dominance(law, law, s, self.GRID) == 0.0)

    def test_shifted_uniform_dominates(self):
        d = oracle_dominance(Law.uniform(0.5, 1.5), Law.uniform(0, 1), 1, self.GRID)
        assert np.all(d <= 0.0)
        assert d.max() == 0.0
        assert d[self.GRID == 1.0] == pytest.approx(-0.5)

    def test_exponential_closed_forms(self):
        p = self.GRID
        j, i = Law.exponential(1.0), Law.exponential(2.0)
        d1 = np.exp(-2 * p) - np.exp(-p)
        d2 = (1 - np.exp(-2 * p)) / 2 - (1 - np.exp(-p))
        d3 = -p / 2 + (np.exp(-2 * p) - 1) / 4 + (1 - np.exp(-p))
        assert np.allclose(oracle_dominance(j, i, 1, p), d1, atol=1e-14)
        assert np.allclose(oracle_dominance(j, i, 2, p), d2, atol=1e-9)
        assert np.allclose(oracle_dominance(j, i, 3, p), d3, atol=1e-9)
        assert np.all(d1 <= 0)

    def test_uniform_second_order_closed_form(self):
        p = self.GRID
        j, i = Law.uniform(0.5, 1.5), Law.uniform(0, 1)
        ramp = lambda x, a: np.clip(x - a, 0, 1) ** 2 / 2 + np.maximum(x - a - 1, 0)  # noqa: E731
        assert np.allclose(oracle_dominance(j, i, 2, p), ramp(p, 0.5) - ramp(p, 0.0), atol=1e-9)

    def test_lognormal_mean_identity(self):
        j, i = Law.lognormal(0.2, 0.3), Law.lognormal(0.0, 0.5)
        top = 60.0
        d2 = oracle_dominance(j, i, 2, [top])[0]
        assert d2 == pytest.approx(i.mean() - j.mean(), abs=1e-8)

    def test_empirical_rate(self):
        j, i = Law.lognormal(0.0, 0.5), Law.lognormal(0.1, 0.4)
        devs = []
        for n in (1_000, 10_000, 100_000):
            per_rep = []
            for rep in range(5):
                g = np.random.default_rng(np.random.SeedSequence([n, rep]))
                a = WeightedSample.unweighted(j.sample(g, n))
                b = WeightedSample.unweighted(i.sample(g, n))
                grid = grid_for((a, b), 1)
                emp = dominance_functional(a, b, 1, grid).values
                per_rep.append(np.max(np.abs(emp - oracle_dominance(j, i, 1, grid))))
            devs.append(np.mean(per_rep))
        assert devs[-1] <= 3 * math.sqrt(math.log(2) / 100_000)
        for a, b in zip(devs, devs[1:]):
            assert math.sqrt(10) / 2 <= a / b <= 2 * math.sqrt(10)
