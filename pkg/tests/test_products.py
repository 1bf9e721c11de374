import itertools
import math

import numpy as np
import pytest

from mixlab.errors import (
    BudgetExceeded,
    InvalidParameter,
    LengthMismatch,
    MismatchedSupportSize,
)
from mixlab.kernels import (
    BernoulliKernel,
    GammaKernel,
    GaussianLocationKernel,
    UniformKernel,
)
from mixlab.measures import MixingMeasure
from mixlab.products import (
    DivergenceEstimate,
    ExchangeableDataset,
    ProductMixtureModel,
    bernoulli_count_probs,
    d_mh,
    estimate_divergence,
    hellinger_upper_bound,
    log_density_product,
    sample_dataset,
    tv_upper_bound,
)

BERN = BernoulliKernel()
GAUSS = GaussianLocationKernel(1.0)


def bernoulli_brute_tv(G, G2, N):
    """Sum over all 2^N binary outcomes."""
    total = 0.0
    for xs in itertools.product((0.0, 1.0), repeat=N):
        s = sum(xs)
        p = sum(
            w * t**s * (1 - t) ** (N - s)
            for w, t in zip(G.weights, G.atoms[:, 0])
        )
        q = sum(
            w * t**s * (1 - t) ** (N - s)
            for w, t in zip(G2.weights, G2.atoms[:, 0])
        )
        total += abs(p - q)
    return 0.5 * total


def bern_measure(thetas, weights):
    return MixingMeasure(np.array(thetas)[:, None], np.array(weights))


class TestProductDensity:
    def test_n1_equals_plain_mixture(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        model = ProductMixtureModel(G, BERN, 1)
        val = math.exp(model.log_density([1.0]))
        assert val == pytest.approx(0.5 * 0.3 + 0.5 * 0.7, abs=1e-14)

    def test_k1_is_iid_log_sum(self):
        G = MixingMeasure(np.array([[0.4]]), np.array([1.0]))
        model = ProductMixtureModel(G, GAUSS, 3)
        xs = [0.1, -0.2, 1.3]
        expected = sum(GAUSS.log_density(x, [0.4]) for x in xs)
        assert model.log_density(xs) == pytest.approx(expected, rel=1e-12)

    def test_bernoulli_hand_enumeration(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        model = ProductMixtureModel(G, BERN, 2)
        val = log_density_product(model, [1.0, 0.0])
        assert val == pytest.approx(math.log(0.21), abs=1e-12)

    def test_length_mismatch(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        model = ProductMixtureModel(G, BERN, 2)
        with pytest.raises(LengthMismatch):
            model.log_density([1.0, 0.0, 1.0])

    def test_atom_outside_kernel_box(self):
        G = bern_measure([0.3, 1.5], [0.5, 0.5])
        with pytest.raises(InvalidParameter):
            ProductMixtureModel(G, BERN, 2)

    def test_invalid_N(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        with pytest.raises(InvalidParameter):
            ProductMixtureModel(G, BERN, 0)


class TestSampleDataset:
    def test_single_component(self, rng):
        G = MixingMeasure(np.array([[0.5]]), np.array([1.0]))
        ds = sample_dataset(G, BERN, [3, 5, 2], rng, seed=123)
        assert ds.m == 3
        assert ds.lengths == [3, 5, 2]
        assert ds.seed == 123
        assert ds.total_length == 10

    def test_negligible_weight_component_never_drawn(self, rng):
        eps = 1e-300
        G = bern_measure([0.2, 0.9], [1.0 - eps, eps])
        ds = sample_dataset(G, BERN, [1] * 2000, rng)
        values = np.concatenate(ds.sequences)
        assert abs(values.mean() - 0.2) < 0.05

    def test_mixture_mean(self):
        from mixlab.rng import stream

        G = bern_measure([0.2, 0.9], [0.5, 0.5])
        ds = sample_dataset(G, BERN, [1] * 10**4, stream(7, "ds-test"))
        values = np.concatenate(ds.sequences)
        sd = math.sqrt(0.55 * 0.45 / 10**4)
        assert abs(values.mean() - 0.55) < 4 * sd

    def test_jsonl_round_trip(self, rng, tmp_path):
        G = bern_measure([0.2, 0.9], [0.4, 0.6])
        ds = sample_dataset(G, BERN, [2, 4, 1], rng, seed=5)
        path = tmp_path / "data.jsonl"
        ds.to_jsonl(path)
        back = ExchangeableDataset.from_jsonl(path)
        assert back.m == ds.m
        assert back.seed is None
        for a, b in zip(ds.sequences, back.sequences):
            np.testing.assert_array_equal(a, b)

    def test_empty_sequence_rejected(self):
        with pytest.raises(InvalidParameter):
            ExchangeableDataset(sequences=[[]])


class TestUpperBounds:
    def test_identical_measures_zero(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        assert hellinger_upper_bound(G, G, BERN, 3) == pytest.approx(0.0, abs=1e-12)
        assert tv_upper_bound(G, G, BERN, 3) == pytest.approx(0.0, abs=1e-12)

    def test_weights_only(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        G2 = bern_measure([0.3, 0.7], [0.3, 0.7])
        assert hellinger_upper_bound(G, G2, BERN, 5) == pytest.approx(
            math.sqrt(0.2), abs=1e-12
        )
        assert tv_upper_bound(G, G2, BERN, 5) == pytest.approx(0.2, abs=1e-12)

    def test_single_atom_shift(self):
        G = bern_measure([0.5], [1.0])
        G2 = bern_measure([0.6], [1.0])
        h1 = BERN.closed_divergence("hellinger", [0.5], [0.6])
        assert hellinger_upper_bound(G, G2, BERN, 4) == pytest.approx(
            2 * h1, rel=1e-12
        )
        v1 = abs(0.5 - 0.6)
        assert tv_upper_bound(G, G2, BERN, 1) == pytest.approx(v1, abs=1e-12)

    def test_mismatched_k(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        G2 = bern_measure([0.5], [1.0])
        with pytest.raises(MismatchedSupportSize):
            hellinger_upper_bound(G, G2, BERN, 2)

    def test_large_k_rejected(self):
        thetas = np.linspace(0.05, 0.95, 8)
        G = bern_measure(thetas, np.full(8, 1 / 8))
        with pytest.raises(BudgetExceeded):
            tv_upper_bound(G, G, BERN, 2)

    def test_bound_dominates_exact(self, rng):
        for _ in range(25):
            k = rng.integers(1, 4)
            t1 = np.sort(rng.uniform(0.1, 0.9, k))
            t2 = np.sort(rng.uniform(0.1, 0.9, k))
            while np.min(np.diff(t1), initial=1) < 0.05 or np.min(
                np.diff(t2), initial=1
            ) < 0.05:
                t1 = np.sort(rng.uniform(0.1, 0.9, k))
                t2 = np.sort(rng.uniform(0.1, 0.9, k))
            w1 = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
            w2 = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
            G = bern_measure(t1, w1 / w1.sum())
            G2 = bern_measure(t2, w2 / w2.sum())
            N = int(rng.integers(1, 5))
            tv = estimate_divergence(G, G2, BERN, N, "tv").value
            h = estimate_divergence(G, G2, BERN, N, "hellinger").value
            assert tv <= tv_upper_bound(G, G2, BERN, N) + 1e-10
            assert h <= hellinger_upper_bound(G, G2, BERN, N) + 1e-10


class TestEstimateDivergence:
    def test_identical_exact_zero(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        est = estimate_divergence(G, G, BERN, 4, "tv")
        assert est.method == "exact-enumeration"
        assert est.value == 0.0
        assert est.stderr == 0.0

    def test_single_atom_tv_spot(self):
        G = bern_measure([0.3], [1.0])
        G2 = bern_measure([0.7], [1.0])
        est = estimate_divergence(G, G2, BERN, 1, "tv")
        assert est.value == pytest.approx(0.4, abs=1e-12)

    def test_exact_matches_brute_force(self, rng):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        for N in (1, 2, 3):
            est = estimate_divergence(G, G2, BERN, N, "tv")
            brute = bernoulli_brute_tv(G, G2, N)
            assert est.value == pytest.approx(brute, abs=1e-12)

    def test_count_probs_sum_to_one(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        for N in (1, 4, 9):
            assert bernoulli_count_probs(G, N).sum() == pytest.approx(
                1.0, abs=1e-12
            )

    def test_monotone_in_N(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        for which in ("tv", "hellinger"):
            vals = [
                estimate_divergence(G, G2, BERN, N, which).value
                for N in range(1, 7)
            ]
            diffs = np.diff(vals)
            assert np.all(diffs >= -1e-12)

    def test_tv_hellinger_classical_chain(self, rng):
        for _ in range(20):
            t1 = np.sort(rng.uniform(0.1, 0.9, 2))
            t2 = np.sort(rng.uniform(0.1, 0.9, 2))
            if min(np.diff(t1)[0], np.diff(t2)[0]) < 0.05:
                continue
            G = bern_measure(t1, [0.4, 0.6])
            G2 = bern_measure(t2, [0.7, 0.3])
            for N in (1, 3, 5):
                tv = estimate_divergence(G, G2, BERN, N, "tv").value
                h = estimate_divergence(G, G2, BERN, N, "hellinger").value
                assert h * h - 1e-10 <= tv
                assert tv <= h * math.sqrt(2.0 - h * h) + 1e-10

    def test_gaussian_quadrature_n1_matches_closed(self):
        G = MixingMeasure(np.array([[0.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[1.0]]), np.array([1.0]))
        est = estimate_divergence(G, G2, GAUSS, 1, "hellinger")
        assert est.method == "quadrature"
        closed = GAUSS.closed_divergence("hellinger", [0.0], [1.0])
        assert est.value == pytest.approx(closed, abs=1e-8)
        est_tv = estimate_divergence(G, G2, GAUSS, 1, "tv")
        closed_tv = GAUSS.closed_divergence("tv", [0.0], [1.0])
        assert est_tv.value == pytest.approx(closed_tv, abs=1e-8)

    def test_gaussian_tensor_n2_matches_closed(self):
        G = MixingMeasure(np.array([[0.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[0.8]]), np.array([1.0]))
        est = estimate_divergence(G, G2, GAUSS, 2, "hellinger")
        assert est.method == "quadrature"
        h1sq = 1.0 - math.exp(-(0.8**2) / 8.0)
        h2sq = 1.0 - (1.0 - h1sq) ** 2
        assert est.value == pytest.approx(math.sqrt(h2sq), abs=1e-7)

    def test_gamma_tensor_n2_single_atoms(self):
        G = MixingMeasure(np.array([[2.0, 3.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[3.0, 3.0]]), np.array([1.0]))
        ker = GammaKernel()
        est = estimate_divergence(G, G2, ker, 2, "hellinger")
        h1 = ker.closed_divergence("hellinger", [2.0, 3.0], [3.0, 3.0])
        expected = math.sqrt(1.0 - (1.0 - h1**2) ** 2)
        assert est.value == pytest.approx(expected, abs=1e-7)

    def test_mc_matches_exact_bernoulli(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        exact = estimate_divergence(G, G2, BERN, 3, "tv").value
        from mixlab.products import _mc_estimate

        est = _mc_estimate(G, G2, BERN, 3, "tv", 200_000, 11, None, "test-mc")
        assert est.method == "monte-carlo"
        assert est.stderr > 0
        assert abs(est.value - exact) < 4 * est.stderr

    def test_mc_hellinger_matches_exact(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        exact = estimate_divergence(G, G2, BERN, 3, "hellinger").value
        from mixlab.products import _mc_estimate

        est = _mc_estimate(
            G, G2, BERN, 3, "hellinger", 200_000, 13, None, "test-mc-h"
        )
        assert abs(est.value - exact) < 4 * est.stderr

    def test_mc_worker_invariance(self):
        from mixlab.products import _mc_estimate

        G = MixingMeasure(np.array([[0.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[0.5]]), np.array([1.0]))
        one = _mc_estimate(G, G2, GAUSS, 3, "tv", 100_000, 5, 1, "inv")
        four = _mc_estimate(G, G2, GAUSS, 3, "tv", 100_000, 5, 4, "inv")
        assert one.value == four.value
        assert one.stderr == four.stderr

    def test_mc_identical_within_stderr(self):
        G = MixingMeasure(np.array([[0.0]]), np.array([1.0]))
        est = estimate_divergence(
            G, G, GAUSS, 3, "tv", budget=50_000, seed=3
        )
        assert est.method == "monte-carlo"
        assert abs(est.value) <= max(3 * est.stderr, 1e-12)

    def test_budget_too_small(self):
        G = MixingMeasure(np.array([[0.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[0.5]]), np.array([1.0]))
        with pytest.raises(BudgetExceeded):
            estimate_divergence(G, G2, GAUSS, 3, "tv", budget=100)

    def test_uniform_n1_quadrature(self):
        ker = UniformKernel()
        G = MixingMeasure(np.array([[1.0]]), np.array([1.0]))
        G2 = MixingMeasure(np.array([[2.0]]), np.array([1.0]))
        est = estimate_divergence(G, G2, ker, 1, "tv")
        assert est.value == pytest.approx(0.5, abs=1e-9)

    def test_estimate_validates_inputs(self):
        G = bern_measure([0.3, 0.7], [0.5, 0.5])
        with pytest.raises(InvalidParameter):
            estimate_divergence(G, G, BERN, 2, "kl")
        with pytest.raises(InvalidParameter):
            estimate_divergence(G, G, BERN, 0, "tv")

    def test_divergence_estimate_invariants(self):
        with pytest.raises(InvalidParameter):
            DivergenceEstimate(value=0.5, stderr=0.1, method="quadrature", n=10)
        with pytest.raises(InvalidParameter):
            DivergenceEstimate(value=1.5, stderr=0.0, method="quadrature", n=10)
        with pytest.raises(InvalidParameter):
            DivergenceEstimate(value=0.5, stderr=0.0, method="magic", n=10)


class TestDmh:
    def test_constant_lengths_equal_single(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        h3 = estimate_divergence(G, G2, BERN, 3, "hellinger").value
        assert d_mh(G, G2, BERN, [3, 3, 3, 3]) == pytest.approx(h3, abs=1e-12)

    def test_identical_zero(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        assert d_mh(G, G, BERN, [1, 2, 3]) == 0.0

    def test_mixed_lengths_hand_combined(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        G2 = bern_measure([0.3, 0.8], [0.5, 0.5])
        h1 = estimate_divergence(G, G2, BERN, 1, "hellinger").value
        h3 = estimate_divergence(G, G2, BERN, 3, "hellinger").value
        expected = math.sqrt((h1**2 + h3**2) / 2.0)
        assert d_mh(G, G2, BERN, [1, 3]) == pytest.approx(expected, abs=1e-12)

    def test_empty_lengths(self):
        G = bern_measure([0.25, 0.6], [0.35, 0.65])
        with pytest.raises(InvalidParameter):
            d_mh(G, G, BERN, [])
