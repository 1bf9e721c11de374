"""Algebraic identifiability machinery for finite mixtures.

Generalized Vandermonde determinants over value/derivative rows, the
binary-kernel first-order linear system and its rank structure, an explicit
non-identifiability witness construction for short products, and numeric
first-order checks (Gram eigenvalues, degenerate-direction residuals) for
general kernel families.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import brentq

from .errors import (
    InvalidParameter,
    QuadratureNonConvergence,
    RootBracketingFailed,
)
from .kernels import BernoulliKernel
from .measures import MixingMeasure
from .products import _gl_nodes, estimate_divergence

RANK_TOL_FACTOR = 1e-12
NULLSPACE_RESIDUAL_TOL = 1e-8
WITNESS_MISMATCH_TOL = 1e-10
WITNESS_WEIGHT_SUM_TOL = 1e-9
ROOT_XTOL = 1e-14
GRID_TAIL_EPS = 1e-12
GRAM_BASE_PANELS = 8
GRAM_ORDER = 16
GRAM_MAX_DOUBLINGS = 6
GRAM_REL_CHANGE = 0.01
CHECK_PANELS = 32
CHECK_ORDER = 16


@dataclass(frozen=True)
class LinearSystemReport:
    """A linear system with its numeric rank, extreme singular value, and
    an orthonormal nullspace basis (empty when full column rank)."""

    matrix: np.ndarray
    rank: int
    smallest_singular_value: float
    nullspace: np.ndarray

    def __post_init__(self):
        cols = self.matrix.shape[1]
        if self.rank + self.nullspace.shape[1] != cols:
            raise InvalidParameter(
                "rank plus nullspace dimension must equal column count"
            )
        if self.nullspace.size:
            norm = np.linalg.norm(self.matrix, 2)
            residual = np.linalg.norm(self.matrix @ self.nullspace, axis=0)
            lengths = np.linalg.norm(self.nullspace, axis=0)
            if np.any(residual > NULLSPACE_RESIDUAL_TOL * norm * lengths):
                raise InvalidParameter(
                    "nullspace vectors do not annihilate the system"
                )


@dataclass(frozen=True)
class NonIdentWitness:
    """A distinct mixing measure matching all product moments at length n.

    The witness atoms interleave the original atoms from below; the moment
    system at n = 2k - 2 is satisfied to within the stated mismatch, so the
    two product mixtures at length n coincide while the mixing measures do
    not."""

    original: MixingMeasure
    witness: MixingMeasure
    n: int
    a: float
    moment_mismatch: float
    tv_at_n: float

    def __post_init__(self):
        if self.n != 2 * self.original.k - 2:
            raise InvalidParameter("witness length must be 2k - 2")
        if not self.a > 0:
            raise InvalidParameter("witness free parameter must be positive")
        if not self.moment_mismatch < WITNESS_MISMATCH_TOL:
            raise RootBracketingFailed(
                f"moment mismatch {self.moment_mismatch!r} exceeds "
                f"{WITNESS_MISMATCH_TOL!r}"
            )
        if not self.tv_at_n < WITNESS_MISMATCH_TOL:
            raise RootBracketingFailed(
                f"product TV {self.tv_at_n!r} at length {self.n} exceeds "
                f"{WITNESS_MISMATCH_TOL!r}"
            )
        orig = np.sort(self.original.atoms[:, 0])
        new = np.sort(self.witness.atoms[:, 0])
        lows = np.concatenate(([0.0], orig[:-1]))
        if not np.all((lows < new) & (new < orig)):
            raise RootBracketingFailed(
                "witness atoms do not interleave the original atoms"
            )


def _basis_polynomials(basis, k, n):
    x = Polynomial([0.0, 1.0])
    one_minus = Polynomial([1.0, -1.0])
    if basis == "monomial":
        return [x**j for j in range(2 * k)]
    if basis == "bernstein":
        if n is None:
            n = 2 * k - 1
        if not (isinstance(n, (int, np.integer)) and n >= 2 * k - 1):
            raise InvalidParameter(
                "bernstein basis needs an integer degree n >= 2k - 1"
            )
        return [x**j * one_minus ** (n - j) for j in range(2 * k)]
    raise InvalidParameter(f"unknown basis {basis!r}")


def gen_vandermonde_det(xs, basis="monomial", n=None):
    """Determinant of the 2k x 2k matrix whose row pairs are the basis
    values and basis derivatives at each point.

    For the monomial basis, and for the bernstein basis at degree 2k - 1,
    the determinant equals the fourth power of the pairwise difference
    product (1 for a single point)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.ndim != 1 or xs.size < 1 or not np.all(np.isfinite(xs)):
        raise InvalidParameter("points must be a nonempty finite 1-D array")
    k = xs.size
    polys = _basis_polynomials(basis, k, n)
    derivs = [p.deriv() for p in polys]
    A = np.empty((2 * k, 2 * k))
    for m, point in enumerate(xs):
        for j in range(2 * k):
            A[2 * m, j] = polys[j](point)
            A[2 * m + 1, j] = derivs[j](point)
    return float(np.linalg.det(A))


def _check_binary_measure(G):
    if G.q != 1:
        raise InvalidParameter("binary mixing measure needs scalar atoms")
    th = G.atoms[:, 0]
    if not np.all((th > 0) & (th < 1)):
        raise InvalidParameter("binary atoms must lie strictly inside (0, 1)")
    return th


def bernoulli_first_order_system(G, n):
    """The (n+1) x 2k linear system of the first-order equation for a binary
    kernel over the success-count support {0..n}.

    Columns are ordered (a_1..a_k, b_1..b_k): first the derivative columns,
    then the value columns. Rank is min(n+1, 2k) for distinct atoms; the
    report carries a nullspace basis whenever the system is rank-deficient."""
    th = _check_binary_measure(G)
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidParameter("length n must be a positive integer")
    s = np.arange(n + 1, dtype=float)[:, None]
    t = th[None, :]
    values = t**s * (1 - t) ** (n - s)
    derivs = s * t ** (s - 1) * (1 - t) ** (n - s) - (n - s) * t**s * (
        1 - t
    ) ** (n - s - 1)
    A = np.hstack([derivs, values])
    sing = np.linalg.svd(A, compute_uv=False)
    _, _, vt = np.linalg.svd(A)
    tol = sing.max() * max(A.shape) * RANK_TOL_FACTOR
    rank = int((sing > tol).sum())
    nullspace = vt[rank:].T.copy()
    return LinearSystemReport(
        matrix=A,
        rank=rank,
        smallest_singular_value=float(sing.min()),
        nullspace=nullspace,
    )


def _binary_moment_vector(th, weights, n):
    j = np.arange(n + 1, dtype=float)[None, :]
    t = th[:, None]
    return (weights[:, None] * t**j * (1 - t) ** (n - j)).sum(axis=0)


def bernoulli_nonidentifiable_witness(G, a):
    """A mixing measure distinct from G whose binary product mixture at
    length n = 2k - 2 coincides with that of G.

    Atoms map to odds eta = theta / (1 - theta) and masses to
    y = p (1 - theta)^(2k-2). A degree <= k polynomial is interpolated
    through k + 1 prescribed values (the first controlled by the free
    parameter a > 0); its sign-change roots, bracketed in the interleaving
    intervals, are the witness odds, and the one-dimensional nullspace of
    the moment system supplies the witness masses. Distinct choices of a
    produce distinct witnesses."""
    th_raw = _check_binary_measure(G)
    k = G.k
    if k < 2:
        raise InvalidParameter("witness construction needs at least 2 atoms")
    a = float(a)
    if not (np.isfinite(a) and a > 0):
        raise InvalidParameter("free parameter a must be positive and finite")
    n = 2 * k - 2
    order = np.argsort(th_raw)
    th = th_raw[order]
    p = G.weights[order]
    eta = th / (1 - th)
    y = p * (1 - th) ** n

    nodes = np.concatenate(([0.0], eta))
    vals = np.empty(k + 1)
    vals[0] = (-1.0) ** (k + 1) * a
    for t in range(k - 1):
        prod = 1.0
        for u in range(k - 1):
            if u != t:
                prod *= (eta[k - 1] - eta[u]) / (eta[t] - eta[u])
        vals[1 + t] = prod / y[t]
    vals[k] = -1.0 / y[k - 1]
    if not np.all(np.isfinite(vals)):
        raise RootBracketingFailed("interpolation values are not finite")
    poly = BarycentricInterpolator(nodes, vals)

    roots = np.empty(k)
    lows = nodes[:-1]
    highs = nodes[1:]
    for i in range(k):
        glo, ghi = vals[i], vals[i + 1]
        if not (np.isfinite(glo) and np.isfinite(ghi)) or glo * ghi >= 0:
            raise RootBracketingFailed(
                f"no sign change over ({lows[i]!r}, {highs[i]!r})"
            )
        try:
            roots[i] = brentq(
                lambda x: float(poly(x)),
                lows[i],
                highs[i],
                xtol=ROOT_XTOL,
                maxiter=200,
            )
        except ValueError as exc:
            raise RootBracketingFailed(str(exc)) from exc
        if not lows[i] < roots[i] < highs[i]:
            raise RootBracketingFailed("root escaped its bracketing interval")

    full = np.concatenate([roots, eta])
    if np.unique(full).size != full.size:
        raise RootBracketingFailed("roots collide with existing odds")
    y_top = y[k - 1]
    eta_top = eta[k - 1]
    y_new = np.empty(k)
    for i in range(k):
        prod = 1.0
        for m in range(2 * k - 1):
            if m == i:
                continue
            prod *= (eta_top - full[m]) / (roots[i] - full[m])
        y_new[i] = -y_top * prod
    if not np.all(np.isfinite(y_new)) or np.any(y_new >= 0):
        raise RootBracketingFailed("nullspace masses have the wrong sign")

    th_new = roots / (1 + roots)
    p_new = -y_new * (1 + roots) ** n
    total = p_new.sum()
    if not abs(total - 1.0) <= WITNESS_WEIGHT_SUM_TOL:
        raise RootBracketingFailed(
            f"witness masses sum to {total!r}, not 1"
        )
    p_new = p_new / total
    witness = MixingMeasure(th_new[:, None], p_new)
    mismatch = float(
        np.max(
            np.abs(
                _binary_moment_vector(th_new, p_new, n)
                - _binary_moment_vector(th, p, n)
            )
        )
    )
    tv = estimate_divergence(G, witness, BernoulliKernel(), n, "tv").value
    return NonIdentWitness(
        original=G,
        witness=witness,
        n=n,
        a=a,
        moment_mismatch=mismatch,
        tv_at_n=tv,
    )


def _atoms_array(kernel, atoms):
    arr = np.atleast_2d(np.asarray(atoms, dtype=float))
    if arr.shape[1] != kernel.q:
        raise InvalidParameter(
            f"atoms must have {kernel.q} coordinates for {kernel.name}"
        )
    for row in arr:
        kernel.check_theta(row)
    return arr


def _segment_boundaries(kernel, atoms):
    los, his, cuts = [], [], set()
    for th in atoms:
        lo, hi = kernel.tail_bounds(th, GRID_TAIL_EPS)
        los.append(lo)
        his.append(hi)
        cuts.update(kernel.breakpoints(th))
    lo, hi = min(los), max(his)
    inner = sorted(c for c in cuts if lo < c < hi)
    return [lo] + inner + [hi]


def _explicit_grid(grid_spec, need_weights):
    points = np.atleast_1d(np.asarray(grid_spec["points"], dtype=float))
    if points.ndim != 1 or points.size == 0 or not np.all(np.isfinite(points)):
        raise InvalidParameter("grid points must be a finite 1-D array")
    if not need_weights:
        return points, None
    if "weights" not in grid_spec:
        raise InvalidParameter("explicit grid needs weights")
    weights = np.atleast_1d(np.asarray(grid_spec["weights"], dtype=float))
    if weights.shape != points.shape or np.any(weights < 0):
        raise InvalidParameter("grid weights must align with points")
    return points, weights


def _feature_matrix(kernel, atoms, points):
    columns = []
    for th in atoms:
        columns.append(np.asarray(kernel.density(points, th), dtype=float))
        grads = np.empty((points.size, kernel.q))
        for i, x in enumerate(points):
            grads[i] = kernel.grad_density(x, th)
        for c in range(kernel.q):
            columns.append(grads[:, c])
    return np.column_stack(columns)


def _gram_eigenvalue(kernel, atoms, points, weights):
    phi = _feature_matrix(kernel, atoms, points)
    gram = phi.T @ (phi * weights[:, None])
    diag = np.diag(gram).copy()
    if np.any(diag <= 0):
        return 0.0
    scale = 1.0 / np.sqrt(diag)
    normalized = gram * scale[:, None] * scale[None, :]
    return float(np.linalg.eigvalsh(normalized)[0])


def first_order_gram(kernel, atoms, grid_spec="auto"):
    """Smallest eigenvalue of the unit-diagonal Gram matrix of the mixture
    component densities and their parameter gradients at the given atoms.

    A value above tolerance certifies linear independence on the grid; a
    value near zero flags a candidate first-order degeneracy. The automatic
    grid enumerates the support for binary kernels and lays Gauss-Legendre
    panels over tail-truncated segments for continuous ones, doubling panel
    counts until the eigenvalue stabilizes within 1%."""
    atoms = _atoms_array(kernel, atoms)
    if isinstance(grid_spec, dict):
        points, weights = _explicit_grid(grid_spec, need_weights=True)
        return _gram_eigenvalue(kernel, atoms, points, weights)
    if grid_spec != "auto":
        raise InvalidParameter("grid_spec must be 'auto' or a points dict")
    if kernel.data_space == "binary":
        points = np.array([0.0, 1.0])
        return _gram_eigenvalue(kernel, atoms, points, np.ones(2))
    bounds = _segment_boundaries(kernel, atoms)
    panels = GRAM_BASE_PANELS
    previous = None
    for _ in range(GRAM_MAX_DOUBLINGS + 1):
        points, weights = _gl_nodes(bounds, panels, GRAM_ORDER)
        value = _gram_eigenvalue(kernel, atoms, points, weights)
        if previous is not None and abs(value - previous) <= (
            GRAM_REL_CHANGE * max(abs(value), 1e-12)
        ):
            return value
        previous = value
        panels *= 2
    raise QuadratureNonConvergence(
        "Gram eigenvalue did not stabilize under panel doubling"
    )


def _parse_direction(kernel, k, direction):
    flat = np.atleast_1d(np.asarray(direction, dtype=float))
    expected = k * (kernel.q + 1)
    if flat.shape != (expected,) or not np.all(np.isfinite(flat)):
        raise InvalidParameter(
            f"direction must be a finite vector of length {expected}"
        )
    a = flat[: k * kernel.q].reshape(k, kernel.q)
    b = flat[k * kernel.q :]
    if np.linalg.norm(flat) == 0:
        raise InvalidParameter("direction must be nonzero")
    b_scale = max(1.0, np.abs(b).sum())
    if abs(b.sum()) > 1e-12 * b_scale:
        raise InvalidParameter("mass coefficients must sum to zero")
    return a, b


def degenerate_direction_check(kernel, G0, direction, grid="auto"):
    """Largest absolute value over the grid of the first-order combination
    sum_i (a_i . grad f(x|theta_i) + b_i f(x|theta_i)), normalized by the
    mixture density scale and the direction scale.

    Near-zero output certifies the direction as a first-order degeneracy of
    the atom set; a generic direction yields an order-one value."""
    atoms = _atoms_array(kernel, G0.atoms)
    a, b = _parse_direction(kernel, atoms.shape[0], direction)
    if isinstance(grid, dict):
        points, _ = _explicit_grid(grid, need_weights=False)
    elif grid == "auto":
        if kernel.data_space == "binary":
            points = np.array([0.0, 1.0])
        else:
            bounds = _segment_boundaries(kernel, atoms)
            points, _ = _gl_nodes(bounds, CHECK_PANELS, CHECK_ORDER)
    else:
        raise InvalidParameter("grid must be 'auto' or a points dict")
    residual = np.zeros(points.size)
    density_sum = np.zeros(points.size)
    for i, th in enumerate(atoms):
        dens = np.asarray(kernel.density(points, th), dtype=float)
        density_sum += dens
        residual += b[i] * dens
        for j, x in enumerate(points):
            residual[j] += a[i] @ kernel.grad_density(x, th)
    density_scale = float(density_sum.max())
    direction_scale = float(
        (np.linalg.norm(a, axis=1) + np.abs(b)).sum()
    )
    return float(np.abs(residual).max() / (density_scale * direction_scale))
