"""Acceptance suite: every shipped guarantee at its stated scale and budget.

Each test pins one criterion: oracle agreement, inequality suites, spot
values, probe verdicts, posterior checks, and byte-level determinism, each
with its wall-clock limit asserted.
"""

import csv
import itertools
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from mixlab.errors import InvalidParameter
from mixlab.identifiability import (
    bernoulli_first_order_system,
    bernoulli_nonidentifiable_witness,
    degenerate_direction_check,
    gen_vandermonde_det,
)
from mixlab.kernels import (
    BernoulliKernel,
    BetaPushforwardKernel,
    GammaKernel,
    GaussianLocationKernel,
    GaussianLocationMixtureKernel,
    divergence_numeric,
    hellinger_expfam,
    moment_map,
)
from mixlab.measures import (
    MixingMeasure,
    atom_and_weight_distances,
    distance_DN,
    distance_Dr1r2,
    wasserstein,
)
from mixlab.posterior import MCMCConfig, PriorSpec, contraction_experiment, mcmc_run
from mixlab.probes import (
    curvature_probe_locscale,
    inverse_ratio_probe,
    lecam_two_point_bound,
    sqrtN_sharpness_probe,
)
from mixlab.products import ExchangeableDataset, estimate_divergence

BERN = BernoulliKernel()
GAMMA = GammaKernel()
GAUSS = GaussianLocationKernel(1.0)
PERMS = {k: list(itertools.permutations(range(k))) for k in range(1, 7)}


def random_measure(rng, k, q, low=-2.0, high=2.0):
    while True:
        atoms = rng.uniform(low, high, size=(k, q))
        if k == 1:
            break
        gaps = np.linalg.norm(
            atoms[:, None, :] - atoms[None, :, :], axis=2
        )[np.triu_indices(k, 1)]
        if gaps.min() > 1e-3:
            break
    weights = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
    return MixingMeasure(atoms, weights / weights.sum())


def brute_force_distances(G, G2, N, r1, r2):
    k = G.k
    perms = np.array(PERMS[k])
    diff = G.atoms[perms] - G2.atoms[None, :, :]
    atom = np.linalg.norm(diff, axis=2).sum(axis=1)
    weight = np.abs(G.weights[perms] - G2.weights[None, :]).sum(axis=1)
    dn = (math.sqrt(N) * atom + weight).min()
    dr = (np.linalg.norm(diff, axis=2) ** r1).sum(axis=1)
    dr = (dr + (np.abs(G.weights[perms] - G2.weights[None, :]) ** r2).sum(axis=1)).min()
    return float(dn), float(dr), float(atom.min()), float(weight.min())


class TestCriterion01MetricOracle:
    def test_brute_force_agreement(self):
        start = time.perf_counter()
        rng = np.random.default_rng(101)
        for _ in range(1000):
            k = int(rng.integers(1, 7))
            q = int(rng.integers(1, 4))
            G = random_measure(rng, k, q)
            G2 = random_measure(rng, k, q)
            N = float(rng.uniform(0.5, 12.0))
            r1 = float(rng.uniform(1.0, 3.0))
            r2 = float(rng.uniform(1.0, 3.0))
            dn, dr, d_theta, d_p = brute_force_distances(G, G2, N, r1, r2)
            assert abs(distance_DN(G, G2, N) - dn) <= 1e-12
            assert abs(distance_Dr1r2(G, G2, r1, r2) - dr) <= 1e-12
            got_theta, got_p = atom_and_weight_distances(G, G2)
            assert abs(got_theta - d_theta) <= 1e-12
            assert abs(got_p - d_p) <= 1e-12
        assert time.perf_counter() - start < 10.0


class TestCriterion02Inequalities:
    def test_transport_and_component_bounds(self):
        start = time.perf_counter()
        rng = np.random.default_rng(202)
        for _ in range(500):
            k = int(rng.integers(1, 5))
            q = int(rng.integers(1, 4))
            G = random_measure(rng, k, q, low=-1.0, high=1.0)
            G2 = random_measure(rng, k, q, low=-1.0, high=1.0)
            diam = 2.0 * math.sqrt(q)
            d1 = distance_DN(G, G2, 1.0)
            assert wasserstein(G, G2, 1.0) <= max(1.0, diam / 2.0) * d1 + 1e-9
            N = float(rng.uniform(0.5, 10.0))
            d_theta, d_p = atom_and_weight_distances(G, G2)
            assert distance_DN(G, G2, N) >= math.sqrt(N) * d_theta + d_p - 1e-9
        assert time.perf_counter() - start < 30.0

    def test_tv_hellinger_chain(self):
        start = time.perf_counter()
        rng = np.random.default_rng(203)
        for _ in range(500):
            k = int(rng.integers(1, 4))
            while True:
                th = rng.uniform(0.02, 0.98, size=(k, 1))
                if k == 1 or np.min(np.diff(np.sort(th[:, 0]))) > 1e-3:
                    break
            while True:
                th2 = rng.uniform(0.02, 0.98, size=(k, 1))
                if k == 1 or np.min(np.diff(np.sort(th2[:, 0]))) > 1e-3:
                    break
            w = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
            w2 = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
            G = MixingMeasure(th, w / w.sum())
            G2 = MixingMeasure(th2, w2 / w2.sum())
            N = int(rng.integers(1, 4))
            V = estimate_divergence(G, G2, BERN, N, "tv").value
            h = estimate_divergence(G, G2, BERN, N, "hellinger").value
            assert h * h <= V + 1e-9
            assert V <= h * math.sqrt(max(2.0 - h * h, 0.0)) + 1e-9
        assert time.perf_counter() - start < 30.0


class TestCriterion03ExpfamHellinger:
    def pairs(self, rng, kernel, sampler, count=200):
        for _ in range(count):
            t1, t2 = sampler(rng), sampler(rng)
            closed = hellinger_expfam(kernel, t1, t2)
            numeric = divergence_numeric(kernel, t1, t2, "hellinger")
            assert abs(closed - numeric) < 1e-6

    def test_three_families_and_gaussian_spot(self):
        start = time.perf_counter()
        rng = np.random.default_rng(303)
        self.pairs(rng, BERN, lambda r: [r.uniform(0.05, 0.95)])
        self.pairs(rng, GAUSS, lambda r: [r.uniform(-3.0, 3.0)])
        self.pairs(
            rng, GAMMA, lambda r: [r.uniform(0.5, 6.0), r.uniform(0.5, 6.0)]
        )
        h_quad = divergence_numeric(GAUSS, [0.0], [1.0], "hellinger")
        assert abs((1.0 - math.exp(-0.125)) - h_quad**2) < 1e-9
        assert time.perf_counter() - start < 60.0


class TestCriterion04DeterminantIdentity:
    def test_both_bases_match_product_formula(self):
        start = time.perf_counter()
        rng = np.random.default_rng(404)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            xs = np.sort(rng.uniform(0.05, 0.95, size=k))
            while k > 1 and np.min(np.diff(xs)) < 0.02:
                xs = np.sort(rng.uniform(0.05, 0.95, size=k))
            expected = 1.0
            for i in range(k):
                for j in range(i + 1, k):
                    expected *= (xs[j] - xs[i]) ** 4
            for basis in ("monomial", "bernstein"):
                det = gen_vandermonde_det(xs, basis=basis)
                assert abs(det - expected) <= 1e-8 * max(1.0, abs(expected))
        spot = gen_vandermonde_det([0.3, 0.7], basis="bernstein", n=3)
        assert abs(spot - 0.0256) < 1e-12
        assert time.perf_counter() - start < 10.0


class TestCriterion05BernoulliRanks:
    def test_rank_profile(self):
        start = time.perf_counter()
        rng = np.random.default_rng(505)
        for _ in range(100):
            k = int(rng.integers(1, 5))
            th = np.sort(rng.uniform(0.05, 0.95, size=k))
            while k > 1 and np.min(np.diff(th)) < 0.02:
                th = np.sort(rng.uniform(0.05, 0.95, size=k))
            w = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
            G = MixingMeasure(th[:, None], w / w.sum())
            onset = None
            for n in range(1, 10):
                rank = bernoulli_first_order_system(G, n).rank
                assert rank == min(n + 1, 2 * k)
                if onset is None and rank == 2 * k:
                    onset = n
            assert onset == 2 * k - 1
        assert time.perf_counter() - start < 10.0


class TestCriterion06Witness:
    def test_witnesses_at_both_lengths(self):
        start = time.perf_counter()
        rng = np.random.default_rng(606)
        for trial in range(20):
            k = 2 if trial < 10 else 3
            th = np.sort(rng.uniform(0.1, 0.9, size=k))
            while np.min(np.diff(th)) < 0.1:
                th = np.sort(rng.uniform(0.1, 0.9, size=k))
            w = rng.dirichlet(np.ones(k)) * 0.7 + 0.3 / k
            G = MixingMeasure(th[:, None], w / w.sum())
            for a in (1.0, 2.0):
                wit = bernoulli_nonidentifiable_witness(G, a)
                assert wit.moment_mismatch < 1e-10
                tv_same = estimate_divergence(
                    G, wit.witness, BERN, 2 * k - 2, "tv"
                ).value
                tv_next = estimate_divergence(
                    G, wit.witness, BERN, 2 * k - 1, "tv"
                ).value
                assert tv_same < 1e-10
                assert tv_next > 1e-4
        assert time.perf_counter() - start < 30.0


class TestCriterion07GammaWeakIdentifiability:
    G0 = MixingMeasure(np.array([[2.0, 3.0], [3.0, 3.0]]), [0.5, 0.5])
    DIRECTION = [0.0, 1.5, 0.0, 0.0, -1.0, 1.0]

    def test_degenerate_direction_and_ratio_verdicts(self):
        start = time.perf_counter()
        residual = degenerate_direction_check(GAMMA, self.G0, self.DIRECTION)
        assert residual < 1e-10
        single = inverse_ratio_probe(GAMMA, self.G0, self.DIRECTION, 1)
        ratios = [row.ratio for row in single.series("ratio")]
        assert ratios[-1] / ratios[0] < 0.2
        assert single.verdicts["ratio"]["vanishing"] is True
        assert all(row.numerator_stderr == 0.0 for row in single.rows)
        paired = inverse_ratio_probe(GAMMA, self.G0, self.DIRECTION, 2)
        values = [row.ratio for row in paired.series("ratio")]
        median = float(np.median(values))
        assert all(0.5 * median <= r <= 2.0 * median for r in values)
        assert paired.verdicts["ratio"]["bounded_away"] is True
        assert time.perf_counter() - start < 300.0


class TestCriterion08CurvatureLocScale:
    def test_pair_vanishes_single_plateaus(self):
        start = time.perf_counter()
        G0 = MixingMeasure(
            np.array([[0.0, 1.0], [0.0, 2.0]]), [1.0 / 3.0, 2.0 / 3.0]
        )
        report = curvature_probe_locscale(G0)
        pair = [row.ratio for row in report.series("pair")]
        assert pair[0] > pair[1] > pair[2]
        assert report.verdicts["pair"]["vanishing"] is True
        assert report.verdicts["single"]["bounded_away"] is True
        assert time.perf_counter() - start < 120.0


class TestCriterion09MomentMaps:
    def test_spot_and_fd_agreement(self):
        start = time.perf_counter()
        ker = GaussianLocationMixtureKernel(2, 1.0)
        rep = moment_map(ker, [0.5, -1.0, 1.0])
        np.testing.assert_allclose(rep.lam, [0.0, 2.0, 0.0], atol=1e-12)
        assert abs(abs(rep.det_closed) - 4.0) < 1e-9
        rng = np.random.default_rng(909)
        for _ in range(50):
            k = int(rng.integers(2, 4))
            ker = GaussianLocationMixtureKernel(k, float(rng.uniform(0.7, 1.3)))
            pis = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
            pis /= pis.sum()
            mus = np.sort(rng.normal(0.0, 1.0, k))
            while np.min(np.diff(mus)) < 0.2:
                mus = np.sort(rng.normal(0.0, 1.0, k))
            rep = moment_map(ker, np.concatenate([pis[:-1], mus]))
            rel = abs(rep.det_closed - rep.det_fd) / max(1.0, abs(rep.det_closed))
            assert rel < 1e-4
        for _ in range(50):
            ker = BetaPushforwardKernel(float(rng.uniform(0.15, 0.85)))
            theta = np.array(
                [
                    rng.uniform(0.1, 0.9),
                    rng.uniform(2.2, 5.0),
                    rng.uniform(5.5, 9.0),
                ]
            )
            rep = moment_map(ker, theta)
            rel = abs(rep.det_closed - rep.det_fd) / max(1.0, abs(rep.det_closed))
            assert rel < 1e-4
        assert time.perf_counter() - start < 30.0


class TestCriterion10MinimaxFormula:
    def test_spot_and_homogeneity(self):
        assert lecam_two_point_bound(100, 4, 1.0, 1.0, 0.5) == 0.003125
        rng = np.random.default_rng(1010)
        for _ in range(20):
            m = float(rng.uniform(1.0, 500.0))
            N = float(rng.uniform(1.0, 50.0))
            gamma = float(rng.uniform(0.1, 5.0))
            a = float(rng.uniform(0.05, 0.95))
            single = lecam_two_point_bound(m, N, gamma, 1.0, a)
            doubled = lecam_two_point_bound(2.0 * m, N, gamma, 1.0, a)
            assert abs(single / doubled - math.sqrt(2.0)) < 1e-12


class TestCriterion11ConjugateCheck:
    def test_five_random_datasets(self):
        start = time.perf_counter()
        prior = PriorSpec(BERN, np.array([[0.01, 0.99]]))
        rng = np.random.default_rng(1111)
        cases = [(4, 6)]
        while len(cases) < 5:
            t = int(rng.integers(4, 12))
            cases.append((int(rng.integers(0, t + 1)), t))
        for trial, (s, t) in enumerate(cases):
            seq = np.concatenate([np.ones(s), np.zeros(t - s)])
            data = ExchangeableDataset([seq])
            chain = mcmc_run(
                data, BERN, prior, 1, MCMCConfig(steps=12000), 7000 + trial
            )
            values = np.array([G.atoms[0, 0] for G in chain.draws])
            batches = np.array_split(values, 20)
            means = np.array([b.mean() for b in batches])
            se = means.std(ddof=1) / math.sqrt(len(means))
            target = (s + 1.0) / (t + 2.0)
            assert abs(values.mean() - target) < 3.0 * se
        assert time.perf_counter() - start < 60.0


class TestCriterion12ContractionSlopes:
    def test_slopes_and_directional_check(self):
        start = time.perf_counter()
        G0 = MixingMeasure(np.array([[0.25], [0.75]]), [0.4, 0.6])
        config = MCMCConfig(steps=20000)
        report = contraction_experiment(
            BERN, G0, (100, 400, 1600), ("constant", 3), 20, config,
            20260822, workers=4,
        )
        for fit in report.slopes.values():
            assert -0.75 <= fit["slope"] <= -0.25
            assert 0.0 <= fit["r_squared"] <= 1.0
        n9 = contraction_experiment(
            BERN, G0, (400, 401), ("constant", 9), 8, config, 555, workers=4,
        )
        atom_n3 = np.median(
            [row["d_theta_q50"] for row in report.rows if row["m"] == 400]
        )
        atom_n9 = np.median(
            [row["d_theta_q50"] for row in n9.rows if row["m"] == 400]
        )
        assert atom_n9 < atom_n3
        assert time.perf_counter() - start < 600.0


class TestCriterion13SqrtNSharpness:
    def test_quadratic_scaling_and_control(self):
        start = time.perf_counter()
        G0 = MixingMeasure(np.array([[-1.0], [1.0]]), [0.4, 0.6])
        report = sqrtN_sharpness_probe(GAUSS, G0, 2.0)
        minima = [entry["minimum"] for entry in report.verdicts["minima"]]
        ns = [entry["N"] for entry in report.verdicts["minima"]]
        assert ns == [4, 16, 64]
        assert minima[0] > minima[1] > minima[2]
        for i in range(2):
            observed = minima[i + 1] / minima[i]
            assert abs(observed / 0.5 - 1.0) <= 0.2
        assert report.verdicts["vanishing"] is True
        control = sqrtN_sharpness_probe(GAUSS, G0, 1.0)
        first = control.verdicts["minima"][0]["minimum"]
        for entry in control.verdicts["minima"]:
            assert 0.8 * first <= entry["minimum"] <= 1.25 * first
        assert control.verdicts["bounded_away"] is True
        assert time.perf_counter() - start < 60.0


DETERMINISM_CONFIGS = {
    "distance": {
        "subcommand": "distance",
        "seed": 7,
        "measures": [
            {"atoms": [[0.2], [0.8]], "weights": [0.5, 0.5]},
            {"atoms": [[0.2], [0.8]], "weights": [0.3, 0.7]},
        ],
        "parameters": {
            "metrics": [
                {"name": "DN", "N": 9},
                {"name": "components"},
                {"name": "wasserstein", "p": 1},
            ]
        },
    },
    "divergence": {
        "subcommand": "divergence",
        "seed": 9,
        "kernel": {"family": "gamma"},
        "measures": [
            {"atoms": [[2.0, 3.0], [3.0, 3.0]], "weights": [0.5, 0.5]},
            {"atoms": [[2.2, 3.0], [3.0, 3.1]], "weights": [0.45, 0.55]},
        ],
        "parameters": {"name": "hellinger", "N": 3, "budget": 20000},
    },
    "identify": {
        "subcommand": "identify",
        "seed": 3,
        "kernel": {"family": "bernoulli"},
        "measures": [{"atoms": [[0.3], [0.7]], "weights": [0.5, 0.5]}],
    },
    "witness": {
        "subcommand": "witness",
        "seed": 3,
        "measures": [{"atoms": [[0.3], [0.7]], "weights": [0.5, 0.5]}],
        "parameters": {"a": [1.0, 2.0]},
    },
    "probe": {
        "subcommand": "probe",
        "seed": 5,
        "kernel": {"family": "gamma"},
        "measures": [
            {"atoms": [[2.0, 3.0], [3.0, 3.0]], "weights": [0.5, 0.5]}
        ],
        "parameters": {
            "name": "inverse_ratio",
            "direction": [0.0, 1.5, 0.0, 0.0, -1.0, 1.0],
            "N": 3,
            "budget": 100000,
        },
    },
    "minimax": {
        "subcommand": "minimax",
        "seed": 1,
        "parameters": {
            "m": [100, 400],
            "N": [4],
            "gamma": 1.0,
            "beta0": 1.0,
            "a": 0.5,
        },
    },
    "posterior-sim": {
        "subcommand": "posterior-sim",
        "seed": 11,
        "kernel": {"family": "bernoulli"},
        "measures": [{"atoms": [[0.25], [0.75]], "weights": [0.4, 0.6]}],
        "parameters": {
            "m_grid": [15, 30],
            "length_law": ["constant", 3],
            "replicates": 2,
            "mcmc": {"steps": 400},
        },
    },
}
PARALLEL_SUBCOMMANDS = ("divergence", "probe", "posterior-sim")


class TestCriterion14Determinism:
    def run_cli(self, tmp_path, subcommand, tag, workers):
        config_path = tmp_path / f"{subcommand}-{tag}.json"
        config_path.write_text(json.dumps(DETERMINISM_CONFIGS[subcommand]))
        out = tmp_path / f"{subcommand}-{tag}"
        command = [
            sys.executable,
            "-m",
            "mixlab.cli",
            subcommand,
            "--config",
            str(config_path),
            "--out",
            str(out),
            "--workers",
            str(workers),
        ]
        proc = subprocess.run(command, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        stem = subcommand.replace("-", "_")
        return (
            (out / f"{stem}.csv").read_bytes(),
            (out / f"{stem}.json").read_bytes(),
        )

    @pytest.mark.parametrize("subcommand", sorted(DETERMINISM_CONFIGS))
    def test_byte_identical_reports(self, tmp_path, subcommand):
        first = self.run_cli(tmp_path, subcommand, "run1", 1)
        second = self.run_cli(tmp_path, subcommand, "run2", 1)
        assert first == second
        if subcommand in PARALLEL_SUBCOMMANDS:
            wide = self.run_cli(tmp_path, subcommand, "run4", 4)
            assert first == wide
