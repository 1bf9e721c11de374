"""Numerical probes of inverse bounds between divergences and distances.

Each probe walks a shrinking path of mixing measures, tabulates a
divergence-to-distance ratio along the path, and classifies the limit
behavior: a ratio that collapses toward zero shows the divergence cannot
control the distance at that sequence length, while a ratio bounded away
from zero is consistent with an inverse bound.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExceeded,
    ConvergenceError,
    InvalidMeasure,
    InvalidParameter,
    InvalidPath,
)
from .identifiability import _parse_direction
from .kernels import LocScaleExponentialKernel
from .measures import MixingMeasure, distance_DN, distance_Dr1r2, wasserstein
from .products import (
    MC_DEFAULT_BUDGET,
    MC_MIN_BUDGET,
    estimate_divergence,
    hellinger_upper_bound,
)

DEFAULT_ELL_GRID = (10.0, 100.0, 1000.0)
DEFAULT_N_GRID = (4, 16, 64)
DEFAULT_EPS_GRID = (0.05, 0.1, 0.2, 0.4)
PATH_IDENTITY_TOL = 1e-12
VANISH_FACTOR = 0.2
PLATEAU_BAND = (0.5, 2.0)
MINIMA_DROP_FACTOR = 0.8
MINIMA_PLATEAU_BAND = (0.8, 1.25)
STDERR_SIGMAS = 3.0
VARIANCE_GUARD_FRACTION = 0.1
RATIO_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ProbeRow:
    """One table cell: a numerator/denominator pair at one path position.

    ``series`` names the ratio family within the probe, ``index`` is the
    path position (a shrink parameter or a sequence length), and ``method``
    records how the numerator was computed. A Monte Carlo numerator carries
    its standard error; every other method is exact up to quadrature
    tolerance and must report stderr zero.
    """

    series: str
    index: float
    numerator: float
    numerator_stderr: float
    denominator: float
    ratio: float
    method: str

    def __post_init__(self):
        if not (self.denominator > 0.0 and math.isfinite(self.denominator)):
            raise InvalidParameter("denominator must be strictly positive")
        if self.numerator < 0.0 or not math.isfinite(self.numerator):
            raise InvalidParameter("numerator must be finite and nonnegative")
        if self.method != "monte-carlo" and self.numerator_stderr != 0.0:
            raise InvalidParameter("exact numerators must report stderr zero")
        if self.numerator_stderr < 0.0:
            raise InvalidParameter("stderr must be nonnegative")
        expected = self.numerator / self.denominator
        if abs(self.ratio - expected) > RATIO_CONSISTENCY_TOL * max(1.0, expected):
            raise InvalidParameter("ratio must equal numerator / denominator")

    @property
    def ratio_stderr(self):
        return self.numerator_stderr / self.denominator


@dataclass(frozen=True)
class ProbeReport:
    """A probe outcome: parameter record, ratio table, and verdict flags."""

    name: str
    params: dict
    rows: tuple
    verdicts: dict

    def __post_init__(self):
        if not self.rows:
            raise InvalidParameter("a probe report needs at least one row")
        for row in self.rows:
            if not isinstance(row, ProbeRow):
                raise InvalidParameter("rows must be ProbeRow instances")
        object.__setattr__(self, "rows", tuple(self.rows))

    def series(self, name):
        return tuple(row for row in self.rows if row.series == name)

    def row_records(self):
        """Rows as flat dicts, one per cell, for tabular emission."""
        return [
            {
                "probe": self.name,
                "series": row.series,
                "index": row.index,
                "numerator": row.numerator,
                "numerator_stderr": row.numerator_stderr,
                "denominator": row.denominator,
                "ratio": row.ratio,
                "method": row.method,
            }
            for row in self.rows
        ]

    def verdict_envelope(self):
        """JSON-serializable summary of parameters and verdicts."""
        return {"probe": self.name, "params": self.params, "verdicts": self.verdicts}


def _make_row(series, index, estimate, denominator):
    return ProbeRow(
        series=series,
        index=float(index),
        numerator=float(estimate.value),
        numerator_stderr=float(estimate.stderr),
        denominator=float(denominator),
        ratio=float(estimate.value) / float(denominator),
        method=estimate.method,
    )


def _check_ell_grid(ell_grid):
    grid = [float(ell) for ell in ell_grid]
    if len(grid) < 2:
        raise InvalidParameter("the shrink grid needs at least two values")
    if any(not math.isfinite(ell) or ell <= 0 for ell in grid):
        raise InvalidParameter("shrink parameters must be positive and finite")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameter("the shrink grid must be strictly increasing")
    return grid


def _series_verdict(rows):
    """Vanishing and bounded-away flags for one sorted ratio series.

    Vanishing requires the last ratio to fall below a fifth of the first
    and, for noisy numerators, the drop to exceed three combined standard
    errors. Bounded-away requires every ratio to sit inside the plateau
    band around the series median, with the same three-sigma slack.
    """
    ratios = [row.ratio for row in rows]
    errs = [row.ratio_stderr for row in rows]
    first, last = ratios[0], ratios[-1]
    gap = STDERR_SIGMAS * math.hypot(errs[0], errs[-1])
    vanishing = first > 0.0 and last / first < VANISH_FACTOR and first - last > gap
    median = float(np.median(ratios))
    lo, hi = PLATEAU_BAND
    in_band = all(
        lo * median - STDERR_SIGMAS * e <= r <= hi * median + STDERR_SIGMAS * e
        for r, e in zip(ratios, errs)
    )
    bounded_away = (not vanishing) and median > 0.0 and in_band
    return {"vanishing": vanishing, "bounded_away": bounded_away}


def _normalized_direction(G0, a, b):
    """Scale the direction so one unit of path length costs one unit of
    matching distance: atom shifts are divided by their weights, then the
    whole direction by the total of atom-shift norms and weight shifts."""
    a_over_p = a / G0.weights[:, None]
    scale = float(np.linalg.norm(a_over_p, axis=1).sum() + np.abs(b).sum())
    return a_over_p / scale, b / scale


def _path_measure(kernel, G0, a_prime, b_prime, ell):
    atoms = G0.atoms + a_prime / ell
    weights = G0.weights + b_prime / ell
    if np.any(weights <= 0.0) or np.any(weights >= 1.0):
        raise InvalidPath(f"weights leave the open simplex at ell={ell:g}")
    for atom in atoms:
        if not kernel.in_box(atom):
            raise InvalidPath(f"an atom leaves the parameter box at ell={ell:g}")
    try:
        return MixingMeasure(atoms, weights)
    except InvalidMeasure as exc:
        raise InvalidPath(f"invalid measure at ell={ell:g}: {exc}") from exc


def _path_numerator(kernel, G_ell, G0, N, which, budget, seed, workers, label):
    """Divergence numerator with a pilot-based refusal for noisy cells.

    When the estimator ladder would fall through to Monte Carlo, a small
    pilot predicts the standard error at the full budget; the cell is
    refused if that prediction exceeds a tenth of the predicted ratio,
    since a verdict from such a cell would be noise.
    """
    if kernel.data_space != "binary" and N > 2:
        pilot = estimate_divergence(
            G_ell, G0, kernel, N, which,
            budget=MC_MIN_BUDGET, seed=seed, workers=workers,
            label=label + "/pilot",
        )
        predicted = pilot.stderr * math.sqrt(MC_MIN_BUDGET / budget)
        if predicted > VARIANCE_GUARD_FRACTION * pilot.value:
            raise BudgetExceeded(
                f"predicted stderr {predicted:.3g} exceeds "
                f"{VARIANCE_GUARD_FRACTION:.0%} of the predicted value "
                f"{pilot.value:.3g} at {label}; raise the budget or drop "
                "the cell"
            )
    return estimate_divergence(
        G_ell, G0, kernel, N, which,
        budget=budget, seed=seed, workers=workers, label=label,
    )


def _identity_onset(grid, denominators):
    """Smallest grid value from which the matching distance equals the
    reciprocal shrink parameter, within tolerance, through the end of the
    grid. The identity must hold at the final value."""
    flags = [
        abs(d - 1.0 / ell) <= PATH_IDENTITY_TOL
        for ell, d in zip(grid, denominators)
    ]
    if not flags[-1]:
        raise ConvergenceError(
            "path normalization identity failed at the largest shrink value"
        )
    idx = len(flags)
    while idx > 0 and flags[idx - 1]:
        idx -= 1
    return grid[idx]


def weight_only_direction(G0, i=0, j=1):
    """Direction that trades weight between atoms i and j, atoms fixed.

    Along the induced path the mixture difference is a fixed signed measure
    shrinking linearly, so the divergence-to-distance ratio is constant and
    never exceeds half the divergence between the two atom distributions.
    """
    if i == j or not (0 <= i < G0.k and 0 <= j < G0.k):
        raise InvalidParameter("atom indices must be distinct and in range")
    flat = np.zeros(G0.k * (G0.q + 1))
    flat[G0.k * G0.q + i] = 1.0
    flat[G0.k * G0.q + j] = -1.0
    return flat


def inverse_ratio_probe(
    kernel,
    G0,
    direction,
    N,
    ell_grid=DEFAULT_ELL_GRID,
    divergence="tv",
    budget=MC_DEFAULT_BUDGET,
    seed=0,
    workers=None,
):
    """Ratio of the N-product divergence to the matching distance along a
    normalized perturbation path of the base measure.

    The direction is a flat vector of per-atom shifts followed by per-atom
    weight shifts summing to zero. After normalization the matching
    distance to the base measure equals the reciprocal shrink parameter,
    so the table directly exposes whether the divergence dominates the
    distance or collapses faster.
    """
    grid = _check_ell_grid(ell_grid)
    for atom in G0.atoms:
        kernel.check_theta(atom)
    a, b = _parse_direction(kernel, G0.k, direction)
    a_prime, b_prime = _normalized_direction(G0, a, b)
    rows = []
    denominators = []
    for ell in grid:
        G_ell = _path_measure(kernel, G0, a_prime, b_prime, ell)
        d1 = distance_DN(G_ell, G0, 1)
        denominators.append(d1)
        estimate = _path_numerator(
            kernel, G_ell, G0, N, divergence, budget, seed, workers,
            label=f"path/{divergence}/N{N}/ell{ell:g}",
        )
        rows.append(_make_row("ratio", ell, estimate, d1))
    onset = _identity_onset(grid, denominators)
    params = {
        "kernel": kernel.name,
        "G0": G0.to_json(),
        "direction": np.asarray(direction, dtype=float).tolist(),
        "N": int(N),
        "divergence": divergence,
        "ell_grid": grid,
        "identity_from_ell": onset,
        "budget": int(budget),
        "seed": int(seed),
    }
    verdicts = {"ratio": _series_verdict(rows)}
    return ProbeReport("inverse_ratio", params, tuple(rows), verdicts)


def impact_probe_Dr(
    kernel,
    G0,
    direction,
    r,
    ell_grid=DEFAULT_ELL_GRID,
    budget=MC_DEFAULT_BUDGET,
    seed=0,
    workers=None,
):
    """Single-observation divergence against the order-r matching distance
    and the order-r transport cost along the same normalized path.

    Requires a direction that actually moves weights: with no weight
    component both denominators shrink at order r and the comparison loses
    its meaning.
    """
    grid = _check_ell_grid(ell_grid)
    if not (np.isscalar(r) and math.isfinite(r) and r >= 1):
        raise InvalidParameter("order r must be a real number >= 1")
    for atom in G0.atoms:
        kernel.check_theta(atom)
    a, b = _parse_direction(kernel, G0.k, direction)
    if not np.any(b != 0.0):
        raise InvalidParameter("the direction must move at least one weight")
    a_prime, b_prime = _normalized_direction(G0, a, b)
    rows_dr = []
    rows_wr = []
    for ell in grid:
        G_ell = _path_measure(kernel, G0, a_prime, b_prime, ell)
        estimate = _path_numerator(
            kernel, G_ell, G0, 1, "tv", budget, seed, workers,
            label=f"path/tv/N1/ell{ell:g}",
        )
        d_r = distance_Dr1r2(G_ell, G0, float(r), 1)
        w_r = wasserstein(G_ell, G0, float(r)) ** float(r)
        rows_dr.append(_make_row("over_Dr1", ell, estimate, d_r))
        rows_wr.append(_make_row("over_Wr_r", ell, estimate, w_r))
    params = {
        "kernel": kernel.name,
        "G0": G0.to_json(),
        "direction": np.asarray(direction, dtype=float).tolist(),
        "r": float(r),
        "ell_grid": grid,
        "budget": int(budget),
        "seed": int(seed),
    }
    verdicts = {
        "over_Dr1": _series_verdict(rows_dr),
        "over_Wr_r": _series_verdict(rows_wr),
    }
    return ProbeReport(
        "impact_Dr", params, tuple(rows_dr + rows_wr), verdicts
    )


def curvature_probe_locscale(G0, ell_grid=DEFAULT_ELL_GRID):
    """Two-path probe for the shifted-exponential family with a shared
    left endpoint on the first two atoms.

    Builds, for each shrink value, a pair of measures that approach each
    other while both drift from the base: the pair ratio (divergence
    between the two moving measures over their matching distance)
    collapses, while the single ratio against the base stays bounded away
    from zero. The base measure must have equal first and second endpoints,
    distinct scales, and weights proportional to the scales.
    """
    kernel = LocScaleExponentialKernel()
    grid = _check_ell_grid(ell_grid)
    if G0.q != 2 or G0.k < 2:
        raise InvalidParameter(
            "the base measure needs at least two endpoint-scale atoms"
        )
    for atom in G0.atoms:
        kernel.check_theta(atom)
    (xi1, sig1), (xi2, sig2) = G0.atoms[0], G0.atoms[1]
    p1, p2 = G0.weights[0], G0.weights[1]
    scale = max(1.0, abs(xi1), sig1, sig2)
    if abs(xi1 - xi2) > 1e-12 * scale:
        raise InvalidParameter("the first two atoms must share their endpoint")
    if abs(sig1 - sig2) <= 1e-12 * scale:
        raise InvalidParameter("the first two atoms must have distinct scales")
    psi = p1 / sig1
    if abs(psi - p2 / sig2) > 1e-12:
        raise InvalidParameter(
            "the first two weights must be proportional to their scales"
        )
    pair_rows = []
    single_rows = []
    pair_denoms = []
    for ell in grid:
        c = 1.0 / ((2.0 + 2.0 * psi) * ell)
        if p2 - psi * c <= 0.0 or p1 + psi * c >= 1.0:
            raise InvalidPath(f"weights leave the open simplex at ell={ell:g}")
        atoms_g = G0.atoms.copy()
        weights_g = G0.weights.copy()
        atoms_g[0, 0] = xi1 - c
        weights_g[0] = p1 + psi * c
        weights_g[1] = p2 - psi * c
        atoms_h = G0.atoms.copy()
        atoms_h[1] = (xi1 - c, sig2)
        try:
            G_ell = MixingMeasure(atoms_g, weights_g)
            H_ell = MixingMeasure(atoms_h, G0.weights)
        except InvalidMeasure as exc:
            raise InvalidPath(f"invalid measure at ell={ell:g}: {exc}") from exc
        d_pair = distance_DN(G_ell, H_ell, 1)
        pair_denoms.append(d_pair)
        pair_est = estimate_divergence(G_ell, H_ell, kernel, 1, "tv")
        pair_rows.append(_make_row("pair", ell, pair_est, d_pair))
        d_single = distance_DN(G_ell, G0, 1)
        single_est = estimate_divergence(G_ell, G0, kernel, 1, "tv")
        single_rows.append(_make_row("single", ell, single_est, d_single))
    onset = _identity_onset(grid, pair_denoms)
    params = {
        "kernel": kernel.name,
        "G0": G0.to_json(),
        "psi": float(psi),
        "ell_grid": grid,
        "identity_from_ell": onset,
    }
    verdicts = {
        "pair": _series_verdict(pair_rows),
        "single": _series_verdict(single_rows),
    }
    return ProbeReport(
        "curvature_locscale", params, tuple(pair_rows + single_rows), verdicts
    )


def sqrtN_sharpness_probe(
    kernel,
    G0,
    psi_exponent,
    N_grid=DEFAULT_N_GRID,
    eps_grid=DEFAULT_EPS_GRID,
    atom_index=0,
    coordinate=0,
):
    """Scaling probe for the square-root sequence-length factor in the
    matching distance.

    For each sequence length N the numerator is the product-divergence
    upper bound along a single-atom perturbation, and the denominator is
    the matching distance with the sequence length inflated to
    N**psi_exponent. The per-N minimum over perturbation sizes collapses
    like the square root of the deflation factor when the exponent
    exceeds one, and stays flat at exponent one.
    """
    if not (np.isscalar(psi_exponent) and math.isfinite(psi_exponent)):
        raise InvalidParameter("psi_exponent must be a finite real")
    if psi_exponent < 1.0:
        raise InvalidParameter("psi_exponent must be at least 1")
    if any(int(n) != n for n in N_grid):
        raise InvalidParameter("sequence lengths must be integers")
    n_values = [int(n) for n in N_grid]
    if len(n_values) < 2 or any(n < 1 for n in n_values):
        raise InvalidParameter("the N grid needs at least two lengths >= 1")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise InvalidParameter("the N grid must be strictly increasing")
    eps_values = [float(e) for e in eps_grid]
    if not eps_values or any(not math.isfinite(e) for e in eps_values):
        raise InvalidParameter("perturbation sizes must be finite")
    for atom in G0.atoms:
        kernel.check_theta(atom)
    if not (0 <= atom_index < G0.k and 0 <= coordinate < G0.q):
        raise InvalidParameter("perturbed atom or coordinate out of range")
    excluded = [e for e in eps_values if e == 0.0]
    active = [e for e in eps_values if e != 0.0]
    if not active:
        raise InvalidParameter("all perturbation sizes are zero")
    rows = []
    minima = []
    for n in n_values:
        psi_n = float(n) ** float(psi_exponent)
        best = math.inf
        for eps in active:
            atoms = G0.atoms.copy()
            atoms[atom_index, coordinate] += eps
            if not kernel.in_box(atoms[atom_index]):
                raise InvalidPath(
                    f"perturbation {eps:g} leaves the parameter box"
                )
            try:
                G_eps = MixingMeasure(atoms, G0.weights)
            except InvalidMeasure as exc:
                raise InvalidPath(
                    f"invalid measure at eps={eps:g}: {exc}"
                ) from exc
            numerator = float(hellinger_upper_bound(G_eps, G0, kernel, n))
            denominator = float(distance_DN(G_eps, G0, psi_n))
            row = ProbeRow(
                series=f"N={n}",
                index=eps,
                numerator=numerator,
                numerator_stderr=0.0,
                denominator=denominator,
                ratio=numerator / denominator,
                method="bound",
            )
            rows.append(row)
            best = min(best, row.ratio)
        minima.append({"N": n, "minimum": float(best)})
    mins = [entry["minimum"] for entry in minima]
    lo, hi = MINIMA_PLATEAU_BAND
    decreasing = all(b < a for a, b in zip(mins, mins[1:]))
    vanishing = bool(decreasing and mins[-1] < MINIMA_DROP_FACTOR * mins[0])
    plateau = bool(all(lo * mins[0] <= m <= hi * mins[0] for m in mins))
    params = {
        "kernel": kernel.name,
        "G0": G0.to_json(),
        "psi_exponent": float(psi_exponent),
        "N_grid": n_values,
        "eps_grid": eps_values,
        "atom_index": int(atom_index),
        "coordinate": int(coordinate),
        "excluded_epsilons": excluded,
    }
    verdicts = {
        "minima": minima,
        "vanishing": vanishing,
        "bounded_away": plateau and not vanishing,
    }
    return ProbeReport("sqrtN_sharpness", params, tuple(rows), verdicts)


def lecam_two_point_bound(m, N, gamma, beta0, a):
    """Two-point testing lower bound for estimating a mixing measure from
    m sequences of length N: (a/4) * ((1-a) / (gamma*sqrt(m*N)))**(1/beta0).

    gamma and beta0 calibrate how fast the divergence between the two test
    points grows with their separation; a sets the separation level.
    """
    for name, value in (("m", m), ("N", N), ("gamma", gamma), ("beta0", beta0)):
        if not (np.isscalar(value) and math.isfinite(value) and value > 0):
            raise InvalidParameter(f"{name} must be a positive finite real")
    if not (np.isscalar(a) and 0.0 < a < 1.0):
        raise InvalidParameter("a must lie strictly between 0 and 1")
    half_sep = ((1.0 - a) / (gamma * math.sqrt(m * N))) ** (1.0 / beta0)
    return (a / 4.0) * half_sep
