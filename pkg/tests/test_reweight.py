import numpy as np
import pytest
from hypothesis import given, strategies as st

from housewelfare.model import DataError, WeightedSample
from housewelfare.reweight import attach_weights, compute_weights



@st.composite
def tables(draw):
    k = draw(st.integers(1, 6))
    stock = draw(st.lists(st.floats(1.0, 1e6), min_size=k, max_size=k))
    counts = draw(st.lists(st.integers(1, 5000), min_size=k, max_size=k))
    names = [f"t{n}" for n in range(k)]
    return {0: dict(zip(names, stock))}, {0: dict(zip(names, counts))}


class TestComputeWeights:
    def test_matched_composition(self):
        t = compute_weights({0: {"a": 50, "b": 50}}, {0: {"a": 10, "b": 10}})
        assert t.weight(0, "a") == pytest.approx(1.0)
        assert t.weight(0, "b") == pytest.approx(1.0)

    def test_direct_ratio(self):
        t = compute_weights({0: {"a": 80, "b": 20}}, {0: {"a": 5, "b": 5}})
        assert t.weight(0, "a") == pytest.approx(1.6)
        assert t.weight(0, "b") == pytest.approx(0.4)

    @given(tables())
    def test_weighted_counts_sum_to_sample_size(self, table):
        stock, counts = table
        t = compute_weights(stock, counts)
        n = sum(counts[0].values())
        eff = t.effective_counts(0)
        assert abs(sum(eff.values()) - n) <= 1e-9 * n
        s_total = sum(stock[0].values())
        for name, value in eff.items():
            assert abs(value - stock[0][name] / s_total * n) <= 1e-9 * n
            assert t.weight(0, name) > 0

    def test_empty_stratum(self):
        with pytest.raises(DataError, match="empty stratum"):
            compute_weights({0: {"a": 1, "b": 1}}, {0: {"a": 3}})

    def test_unknown_stratum(self):
        with pytest.raises(DataError, match="unknown stratum"):
            compute_weights({0: {"a": 1}}, {0: {"a": 3, "b": 2}})

    def test_drops_types_absent_everywhere(self):
        t = compute_weights({0: {"a": 1, "b": 0}}, {0: {"a": 3, "b": 0}})
        assert list(t.weights[0]) == ["a"]

    def test_csv_export(self):
        t = compute_weights({0: {"a": 80, "b": 20}}, {0: {"a": 5, "b": 5}})
        lines = t.to_csv().splitlines()
        assert lines[0] == "round,type,weight"
        assert lines[1].startswith("0,a,1.6")


class TestAttachWeights:
    def test_single_type_unchanged(self):
        t = compute_weights({0: {"a": 7}}, {0: {"a": 3}})
        smp = WeightedSample(0, [1.0, 2.0, 3.0], np.ones(3), type_labels=["a"] * 3)
        out = attach_weights(smp, t)
        assert np.array_equal(out.weights, smp.weights)

    def test_weight_sum(self):
        t = compute_weights({0: {"a": 80, "b": 20}}, {0: {"a": 5, "b": 5}})
        smp = WeightedSample(0, np.arange(1.0, 11.0), np.ones(10), type_labels=["a"] * 5 + ["b"] * 5)
        assert attach_weights(smp, t).weights.sum() == pytest.approx(10.0)

    def test_empty_sample(self):
        t = compute_weights({0: {"a": 1}}, {0: {"a": 1}})
        smp = WeightedSample(0, [], [], type_labels=[])
        assert attach_weights(smp, t).n == 0

    def test_missing_type(self):
        t = compute_weights({0: {"a": 1}}, {0: {"a": 1}})
        smp = WeightedSample(0, [1.0], [1.0], type_labels=["z"])
        with pytest.raises(DataError):
            attach_weights(smp, t)

    @given(st.lists(st.integers(1, 40), min_size=2, max_size=5), st.data())
    def test_weighted_mean_is_stock_share_mix(self, sizes, data):
        k = len(sizes)
        stock = data.draw(st.lists(st.floats(0.1, 10.0), min_size=k, max_size=k))
        rng = np.random.default_rng(sum(sizes))
        names = [f"t{n}" for n in range(k)]
        values = [rng.lognormal(0, 1, m) for m in sizes]
        t = compute_weights({0: dict(zip(names, stock))}, {0: dict(zip(names, sizes))})
        labels = np.concatenate([[nm] * m for nm, m in zip(names, sizes)])
        smp = attach_weights(WeightedSample(0, np.concatenate(values), np.ones(sum(sizes)),
                                            type_labels=labels), t)
        expected = sum(s * v.mean() for s, v in zip(stock, values)) / sum(stock)
        assert smp.weighted_mean() == pytest.approx(expected, rel=1e-10)
