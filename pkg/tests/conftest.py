"""Shared test helpers: brute-force oracles and random measure generation."""

import itertools

import numpy as np
import pytest

from mixlab.measures import MixingMeasure


def brute_force_DN(G, G2, N):
    """k!-enumeration oracle for the sequence-length metric."""
    best = np.inf
    root = np.sqrt(float(N))
    for tau in itertools.permutations(range(G.k)):
        total = 0.0
        for i, ti in enumerate(tau):
            total += root * np.linalg.norm(G.atoms[ti] - G2.atoms[i])
            total += abs(G.weights[ti] - G2.weights[i])
        best = min(best, total)
    return best


def brute_force_Dr1r2(G, G2, r1, r2):
    best = np.inf
    for tau in itertools.permutations(range(G.k)):
        total = 0.0
        for i, ti in enumerate(tau):
            total += np.linalg.norm(G.atoms[ti] - G2.atoms[i]) ** r1
            total += abs(G.weights[ti] - G2.weights[i]) ** r2
        best = min(best, total)
    return best


def brute_force_atom_weight(G, G2):
    best_t = np.inf
    best_p = np.inf
    for tau in itertools.permutations(range(G.k)):
        tt = sum(
            np.linalg.norm(G.atoms[ti] - G2.atoms[i]) for i, ti in enumerate(tau)
        )
        pp = sum(abs(G.weights[ti] - G2.weights[i]) for i, ti in enumerate(tau))
        best_t = min(best_t, tt)
        best_p = min(best_p, pp)
    return best_t, best_p


def random_measure(rng, k, q, box=(0.0, 1.0), min_gap=1e-3):
    """Random measure with well-separated atoms and interior weights."""
    lo, hi = box
    while True:
        atoms = rng.uniform(lo, hi, size=(k, q))
        if k == 1:
            break
        diff = atoms[:, None, :] - atoms[None, :, :]
        dists = np.sqrt((diff**2).sum(axis=2))
        iu = np.triu_indices(k, 1)
        if dists[iu].min() > min_gap:
            break
    weights = rng.dirichlet(np.ones(k))
    while weights.min() < 1e-3:
        weights = rng.dirichlet(np.ones(k))
    return MixingMeasure(atoms, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
