"""Parametric kernel families: densities, samplers, gradients, divergences.

Built-in families cover the binary kernel, Gaussian location, gamma,
uniform scale, location-scale exponential, and two composite kernels
(finite Gaussian location mixture, two-component Beta mixture) that carry
polynomial moment maps with closed-form Jacobian determinants.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import (
    betaln,
    digamma,
    erf,
    gammaincinv,
    gammaln,
    logsumexp,
    ndtri as norm_ppf,
)

from .errors import (
    ConvergenceError,
    DegenerateXi,
    InvalidParameter,
    MidpointOutsideDomain,
    NonDifferentiablePoint,
    QuadratureNonConvergence,
)

QUAD_EPS = 1e-10
QUAD_TARGET = 1e-8
FD_STEP = 1e-6


@dataclass(frozen=True)
class ExpFamilySpec:
    """Exponential-family structure: sufficient statistic, log-partition,
    carrier, and the parameter-to-natural-parameter map with its Jacobian."""

    stat: object
    log_partition: object
    log_carrier: object
    natural: object
    natural_jacobian: object
    in_natural_space: object

    def log_density(self, x, theta):
        eta = np.asarray(self.natural(theta), dtype=float)
        tx = np.asarray(self.stat(x), dtype=float)
        return tx @ eta - self.log_partition(eta) + self.log_carrier(x)


@dataclass(frozen=True)
class MomentMapReport:
    """Moment vector, its Jacobian, and the two determinant evaluations."""

    lam: np.ndarray
    jacobian: np.ndarray
    det_closed: float
    det_fd: float

    def __post_init__(self):
        rel = abs(self.det_closed - self.det_fd) / max(1.0, abs(self.det_closed))
        if not rel < 1e-4:
            raise ConvergenceError(
                f"closed-form and finite-difference determinants disagree: "
                f"{self.det_closed!r} vs {self.det_fd!r}"
            )


class KernelFamily:
    """Base class: a parametric family of probability densities on a data space.

    Subclasses define the parameter box, the data space ("real", "binary",
    or "unit_interval"), log densities, samplers, and where available
    analytic gradients, closed-form divergences, and exponential-family
    structure.
    """

    name = "abstract"
    q = 0
    data_space = "real"
    expfam = None
    has_analytic_gradient = False

    def in_box(self, theta):
        raise NotImplementedError

    def check_theta(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.q,):
            raise InvalidParameter(
                f"{self.name}: parameter must have dimension {self.q}"
            )
        if not self.in_box(theta):
            raise InvalidParameter(f"{self.name}: parameter {theta} outside box")
        return theta

    def log_density(self, x, theta):
        raise NotImplementedError

    def density(self, x, theta):
        return np.exp(self.log_density(x, theta))

    def sample(self, theta, count, rng):
        raise NotImplementedError

    def support(self, theta):
        """(lo, hi) support interval for continuous kernels, else None."""
        return (-np.inf, np.inf)

    def breakpoints(self, theta):
        """Finite points where the density is discontinuous."""
        return []

    def closed_divergence(self, which, theta1, theta2):
        """Closed-form divergence value, or None when unavailable."""
        return None

    def tail_bounds(self, theta, eps):
        """Finite [lo, hi] capturing all but eps probability per tail."""
        lo, hi = self.support(np.atleast_1d(np.asarray(theta, dtype=float)))
        if math.isinf(lo) or math.isinf(hi):
            raise InvalidParameter(
                f"{self.name}: no finite tail bounds available"
            )
        return (lo, hi)

    def mean(self, theta):
        raise NotImplementedError

    def grad_density(self, x, theta):
        """Gradient of the density in the parameter, analytic if available."""
        return _fd_grad_density(self, x, theta)


def _fd_grad_density(kernel, x, theta):
    theta = kernel.check_theta(theta)
    grad = np.empty(kernel.q)
    for i in range(kernel.q):
        h = FD_STEP * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (kernel.density(x, up) - kernel.density(x, dn)) / (2 * h)
    return grad


class BernoulliKernel(KernelFamily):
    """Two-point kernel on {0, 1} with success probability theta."""

    name = "bernoulli"
    q = 1
    data_space = "binary"
    has_analytic_gradient = True

    def __init__(self):
        self.expfam = ExpFamilySpec(
            stat=lambda x: np.atleast_1d(float(x)),
            log_partition=lambda eta: float(np.logaddexp(0.0, eta[0])),
            log_carrier=lambda x: 0.0,
            natural=lambda th: np.array(
                [math.log(th[0]) - math.log1p(-th[0])]
            ),
            natural_jacobian=lambda th: np.array([[1.0 / (th[0] * (1 - th[0]))]]),
            in_natural_space=lambda eta: np.all(np.isfinite(eta)),
        )

    def in_box(self, theta):
        return 0.0 < theta[0] < 1.0

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        x = np.asarray(x, dtype=float)
        return x * math.log(theta[0]) + (1 - x) * math.log1p(-theta[0])

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        return (rng.random(count) < theta[0]).astype(float)

    def support(self, theta):
        return None

    def mean(self, theta):
        return float(theta[0])

    def grad_density(self, x, theta):
        self.check_theta(theta)
        return np.atleast_1d(2.0 * float(x) - 1.0)

    def closed_divergence(self, which, theta1, theta2):
        t1 = float(self.check_theta(theta1)[0])
        t2 = float(self.check_theta(theta2)[0])
        if which == "tv":
            return abs(t1 - t2)
        if which == "hellinger":
            h2 = 1.0 - math.sqrt(t1 * t2) - math.sqrt((1 - t1) * (1 - t2))
            return math.sqrt(max(h2, 0.0))
        if which == "kl":
            return t1 * math.log(t1 / t2) + (1 - t1) * math.log((1 - t1) / (1 - t2))
        return None


class GaussianLocationKernel(KernelFamily):
    """Gaussian with unknown location and fixed scale."""

    name = "gaussian_location"
    q = 1
    data_space = "real"
    has_analytic_gradient = True

    def __init__(self, sigma=1.0):
        if sigma <= 0:
            raise InvalidParameter("sigma must be positive")
        self.sigma = float(sigma)
        s2 = self.sigma**2
        self.expfam = ExpFamilySpec(
            stat=lambda x: np.atleast_1d(float(x)),
            log_partition=lambda eta: 0.5 * s2 * float(eta[0]) ** 2,
            log_carrier=lambda x: -0.5 * float(x) ** 2 / s2
            - 0.5 * math.log(2 * math.pi * s2),
            natural=lambda th: np.array([th[0] / s2]),
            natural_jacobian=lambda th: np.array([[1.0 / s2]]),
            in_natural_space=lambda eta: np.all(np.isfinite(eta)),
        )

    def in_box(self, theta):
        return bool(np.isfinite(theta[0]))

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        x = np.asarray(x, dtype=float)
        z = (x - theta[0]) / self.sigma
        return -0.5 * z**2 - math.log(self.sigma * math.sqrt(2 * math.pi))

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        return rng.normal(theta[0], self.sigma, size=count)

    def mean(self, theta):
        return float(theta[0])

    def tail_bounds(self, theta, eps):
        theta = self.check_theta(theta)
        z = -norm_ppf(eps)
        return (theta[0] - z * self.sigma, theta[0] + z * self.sigma)

    def grad_density(self, x, theta):
        theta = self.check_theta(theta)
        f = self.density(x, theta)
        return np.atleast_1d(f * (float(x) - theta[0]) / self.sigma**2)

    def closed_divergence(self, which, theta1, theta2):
        d = abs(float(theta1) - float(theta2)) if np.isscalar(theta1) else abs(
            float(np.atleast_1d(theta1)[0]) - float(np.atleast_1d(theta2)[0])
        )
        s = self.sigma
        if which == "tv":
            return float(erf(d / (2 * math.sqrt(2) * s)))
        if which == "hellinger":
            return math.sqrt(max(-math.expm1(-(d**2) / (8 * s**2)), 0.0))
        if which == "kl":
            return d**2 / (2 * s**2)
        return None


class GammaKernel(KernelFamily):
    """Gamma kernel in shape and rate; optionally without its normalization
    constant (a positive rescaling per parameter, for span diagnostics)."""

    name = "gamma"
    q = 2
    data_space = "real"
    has_analytic_gradient = True

    def __init__(self, normalized=True):
        self.normalized = bool(normalized)
        if self.normalized:
            self.expfam = ExpFamilySpec(
                stat=lambda x: np.array([math.log(x), -float(x)]),
                log_partition=lambda eta: float(
                    gammaln(eta[0] + 1.0) - (eta[0] + 1.0) * math.log(eta[1])
                ),
                log_carrier=lambda x: 0.0 if x > 0 else -np.inf,
                natural=lambda th: np.array([th[0] - 1.0, th[1]]),
                natural_jacobian=lambda th: np.eye(2),
                in_natural_space=lambda eta: eta[0] > -1.0 and eta[1] > 0.0,
            )

    def in_box(self, theta):
        return theta[0] > 0.0 and theta[1] > 0.0

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        alpha, beta = theta
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(
                x > 0,
                alpha * math.log(beta)
                + (alpha - 1.0) * np.log(np.where(x > 0, x, 1.0))
                - beta * x,
                -np.inf,
            )
        if self.normalized:
            out = out - gammaln(alpha)
        return out if out.shape else float(out)

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        return rng.gamma(shape=theta[0], scale=1.0 / theta[1], size=count)

    def support(self, theta):
        return (0.0, np.inf)

    def breakpoints(self, theta):
        return [0.0]

    def mean(self, theta):
        return float(theta[0] / theta[1])

    def tail_bounds(self, theta, eps):
        theta = self.check_theta(theta)
        alpha, beta = theta
        return (
            float(gammaincinv(alpha, eps)) / beta,
            float(gammaincinv(alpha, 1.0 - eps)) / beta,
        )

    def grad_density(self, x, theta):
        theta = self.check_theta(theta)
        alpha, beta = theta
        x = float(x)
        if x <= 0:
            if x == 0:
                raise NonDifferentiablePoint("gamma density boundary at x = 0")
            return np.zeros(2)
        f = self.density(x, theta)
        dalpha = math.log(beta) + math.log(x)
        if self.normalized:
            dalpha -= digamma(alpha)
        return np.array([f * dalpha, f * (alpha / beta - x)])

    def closed_divergence(self, which, theta1, theta2):
        if not self.normalized:
            return None
        t1 = self.check_theta(theta1)
        t2 = self.check_theta(theta2)
        a1, b1 = t1
        a2, b2 = t2
        if which == "kl":
            return float(
                (a1 - a2) * digamma(a1)
                - gammaln(a1)
                + gammaln(a2)
                + a2 * (math.log(b1) - math.log(b2))
                + a1 * (b2 - b1) / b1
            )
        if which == "hellinger":
            return hellinger_expfam(self.expfam, t1, t2)
        return None


class UniformKernel(KernelFamily):
    """Uniform density on (0, theta)."""

    name = "uniform"
    q = 1
    data_space = "real"
    has_analytic_gradient = True

    def in_box(self, theta):
        return theta[0] > 0.0

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        x = np.asarray(x, dtype=float)
        out = np.where(
            (x > 0) & (x < theta[0]), -math.log(theta[0]), -np.inf
        )
        return out if out.shape else float(out)

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        return rng.uniform(0.0, theta[0], size=count)

    def support(self, theta):
        return (0.0, float(np.atleast_1d(theta)[0]))

    def breakpoints(self, theta):
        return [0.0, float(np.atleast_1d(theta)[0])]

    def mean(self, theta):
        return float(np.atleast_1d(theta)[0]) / 2.0

    def grad_density(self, x, theta):
        theta = self.check_theta(theta)
        t = theta[0]
        x = float(x)
        if abs(x - t) < 1e-12 * max(1.0, t) or x == 0.0:
            raise NonDifferentiablePoint("uniform density boundary")
        if 0.0 < x < t:
            return np.atleast_1d(-1.0 / t**2)
        return np.atleast_1d(0.0)

    def closed_divergence(self, which, theta1, theta2):
        a = float(np.atleast_1d(theta1)[0])
        b = float(np.atleast_1d(theta2)[0])
        lo, hi = min(a, b), max(a, b)
        if which == "tv":
            return 1.0 - lo / hi
        if which == "hellinger":
            return math.sqrt(max(1.0 - math.sqrt(lo / hi), 0.0))
        if which == "kl":
            return math.log(b / a) if a <= b else np.inf
        return None


class LocScaleExponentialKernel(KernelFamily):
    """Exponential density with unknown left endpoint and scale."""

    name = "locscale_exponential"
    q = 2
    data_space = "real"
    has_analytic_gradient = True

    def in_box(self, theta):
        return bool(np.isfinite(theta[0])) and theta[1] > 0.0

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        xi, sigma = theta
        x = np.asarray(x, dtype=float)
        out = np.where(x > xi, -(x - xi) / sigma - math.log(sigma), -np.inf)
        return out if out.shape else float(out)

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        return theta[0] + rng.exponential(scale=theta[1], size=count)

    def support(self, theta):
        return (float(np.atleast_1d(theta)[0]), np.inf)

    def breakpoints(self, theta):
        return [float(np.atleast_1d(theta)[0])]

    def mean(self, theta):
        return float(theta[0] + theta[1])

    def tail_bounds(self, theta, eps):
        theta = self.check_theta(theta)
        xi, sigma = theta
        return (xi, xi - sigma * math.log(eps))

    def grad_density(self, x, theta):
        theta = self.check_theta(theta)
        xi, sigma = theta
        x = float(x)
        if abs(x - xi) < 1e-12 * max(1.0, abs(xi), sigma):
            raise NonDifferentiablePoint("support boundary of the shifted exponential")
        if x < xi:
            return np.zeros(2)
        f = self.density(x, theta)
        return np.array([f / sigma, f * ((x - xi) / sigma**2 - 1.0 / sigma)])


def _double_factorial_odd(n):
    """(n)!! for odd n >= -1, with (-1)!! = 1."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _gaussian_raw_moment(mu, sigma, j):
    """E (sigma Z + mu)^j for standard normal Z."""
    total = 0.0
    for ell in range(0, j + 1, 2):
        total += (
            math.comb(j, ell)
            * _double_factorial_odd(ell - 1)
            * sigma**ell
            * mu ** (j - ell)
        )
    return total


class GaussianLocationMixtureKernel(KernelFamily):
    """Composite kernel: a k-component Gaussian location mixture with fixed
    scale, parametrized by the first k-1 component probabilities and the
    strictly increasing component means."""

    name = "gaussian_location_mixture"
    data_space = "real"

    def __init__(self, k, sigma=1.0):
        if k < 2:
            raise InvalidParameter("mixture needs k >= 2 components")
        if sigma <= 0:
            raise InvalidParameter("sigma must be positive")
        self.k = int(k)
        self.sigma = float(sigma)
        self.q = 2 * self.k - 1

    def split(self, theta):
        theta = self.check_theta(theta)
        pis = np.empty(self.k)
        pis[: self.k - 1] = theta[: self.k - 1]
        pis[self.k - 1] = 1.0 - theta[: self.k - 1].sum()
        mus = theta[self.k - 1 :]
        return pis, mus

    def in_box(self, theta):
        pis = theta[: self.k - 1]
        mus = theta[self.k - 1 :]
        if np.any(pis <= 0) or pis.sum() >= 1.0:
            return False
        return bool(np.all(np.diff(mus) > 0)) and bool(np.all(np.isfinite(mus)))

    def log_density(self, x, theta):
        pis, mus = self.split(theta)
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - mus) / self.sigma
        comp = -0.5 * z**2 - math.log(self.sigma * math.sqrt(2 * math.pi))
        out = logsumexp(comp + np.log(pis), axis=-1)
        return out if np.ndim(out) else float(out)

    def sample(self, theta, count, rng):
        pis, mus = self.split(theta)
        comps = rng.choice(self.k, size=count, p=pis)
        return rng.normal(mus[comps], self.sigma)

    def mean(self, theta):
        pis, mus = self.split(theta)
        return float(pis @ mus)

    def tail_bounds(self, theta, eps):
        _, mus = self.split(theta)
        z = -norm_ppf(eps)
        return (
            float(mus.min()) - z * self.sigma,
            float(mus.max()) + z * self.sigma,
        )

    def moment_lambda(self, theta):
        pis, mus = self.split(theta)
        return np.array(
            [
                sum(
                    pis[i] * _gaussian_raw_moment(mus[i], self.sigma, j)
                    for i in range(self.k)
                )
                for j in range(1, 2 * self.k)
            ]
        )

    def moment_jacobian(self, theta):
        pis, mus = self.split(theta)
        dim = 2 * self.k - 1
        J = np.empty((dim, dim))
        for row, j in enumerate(range(1, 2 * self.k)):
            for i in range(self.k - 1):
                J[row, i] = _gaussian_raw_moment(
                    mus[i], self.sigma, j
                ) - _gaussian_raw_moment(mus[self.k - 1], self.sigma, j)
            for i in range(self.k):
                J[row, self.k - 1 + i] = (
                    pis[i] * j * _gaussian_raw_moment(mus[i], self.sigma, j - 1)
                )
        return J

    def moment_det_closed(self, theta):
        pis, mus = self.split(theta)
        k = self.k
        sign = (-1.0) ** (k + 1) * (-1.0) ** (k * (k - 1) // 2)
        gaps = 1.0
        for a in range(k):
            for b in range(a + 1, k):
                gaps *= (mus[a] - mus[b]) ** 4
        return sign * float(np.prod(pis)) * gaps


class BetaPushforwardKernel(KernelFamily):
    """Composite kernel on (0, 1): a two-component Beta mixture in which both
    components share a fixed mean fraction xi and differ in concentration."""

    name = "beta_pushforward"
    q = 3
    data_space = "unit_interval"

    def __init__(self, xi):
        if not 0.0 < xi < 1.0:
            raise InvalidParameter("xi must lie in (0, 1)")
        self.xi = float(xi)

    def in_box(self, theta):
        pi1, a1, a2 = theta
        return 0.0 < pi1 < 1.0 and 2.0 < a1 < a2

    def _component_logpdf(self, z, alpha):
        a = alpha * self.xi
        b = alpha * (1.0 - self.xi)
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inside = (z > 0) & (z < 1)
            zz = np.where(inside, z, 0.5)
            out = np.where(
                inside,
                (a - 1) * np.log(zz) + (b - 1) * np.log1p(-zz) - betaln(a, b),
                -np.inf,
            )
        return out

    def log_density(self, x, theta):
        theta = self.check_theta(theta)
        pi1, a1, a2 = theta
        l1 = self._component_logpdf(x, a1) + math.log(pi1)
        l2 = self._component_logpdf(x, a2) + math.log1p(-pi1)
        out = np.logaddexp(l1, l2)
        return out if np.ndim(out) else float(out)

    def sample(self, theta, count, rng):
        theta = self.check_theta(theta)
        pi1, a1, a2 = theta
        alphas = np.where(rng.random(count) < pi1, a1, a2)
        return rng.beta(alphas * self.xi, alphas * (1.0 - self.xi))

    def support(self, theta):
        return (0.0, 1.0)

    def breakpoints(self, theta):
        return [0.0, 1.0]

    def mean(self, theta):
        return self.xi

    def _q(self, alpha, j):
        out = 1.0
        for ell in range(j + 1):
            out *= (alpha * self.xi + ell) / (alpha + ell)
        return out

    def moment_lambda(self, theta):
        theta = self.check_theta(theta)
        pi1, a1, a2 = theta
        return np.array(
            [pi1 * self._q(a1, j) + (1 - pi1) * self._q(a2, j) for j in (1, 2, 3)]
        )

    def moment_jacobian(self, theta):
        theta = self.check_theta(theta)
        pi1, a1, a2 = theta
        J = np.empty((3, 3))
        for row, j in enumerate((1, 2, 3)):
            J[row, 0] = self._q(a1, j) - self._q(a2, j)
            for col, (pw, aa) in enumerate(((pi1, a1), (1 - pi1, a2)), start=1):
                s = sum(
                    self.xi / (aa * self.xi + ell) - 1.0 / (aa + ell)
                    for ell in range(j + 1)
                )
                J[row, col] = pw * self._q(aa, j) * s
        return J

    def moment_det_closed(self, theta):
        theta = self.check_theta(theta)
        pi1, a1, a2 = theta
        xi = self.xi
        num = (
            6.0
            * (xi - 1.0) ** 3
            * xi**3
            * (2 * xi - 1.0)
            * (3 * xi - 1.0)
            * (3 * xi - 2.0)
            * pi1
            * (1.0 - pi1)
            * (a1 - a2) ** 4
        )
        den = 1.0
        for aa in (a1, a2):
            den *= ((1 + aa) * (2 + aa) * (3 + aa)) ** 2
        return num / den


def log_density(kernel, x, theta):
    """Module-level dispatch kept for a uniform operation surface."""
    return kernel.log_density(x, theta)


def sample(kernel, theta, count, rng):
    return kernel.sample(theta, count, rng)


def grad_density(kernel, x, theta):
    return kernel.grad_density(x, theta)


def hellinger_expfam(spec, theta1, theta2):
    """Hellinger distance from the log-partition of an exponential family:
    1 - h^2 = exp(A(midpoint) - average of A at the endpoints)."""
    if isinstance(spec, KernelFamily):
        if spec.expfam is None:
            raise InvalidParameter(f"{spec.name} has no exponential-family structure")
        spec = spec.expfam
    eta1 = np.asarray(spec.natural(np.atleast_1d(np.asarray(theta1, float))))
    eta2 = np.asarray(spec.natural(np.atleast_1d(np.asarray(theta2, float))))
    mid = 0.5 * (eta1 + eta2)
    for eta in (eta1, eta2, mid):
        if not spec.in_natural_space(eta):
            raise MidpointOutsideDomain(f"natural parameter {eta} outside the domain")
    exponent = spec.log_partition(mid) - 0.5 * (
        spec.log_partition(eta1) + spec.log_partition(eta2)
    )
    h2 = -math.expm1(min(exponent, 0.0))
    return math.sqrt(max(h2, 0.0))


def _segments(kernel, theta1, theta2):
    sup1 = kernel.support(theta1)
    sup2 = kernel.support(theta2)
    lo = min(sup1[0], sup2[0])
    hi = max(sup1[1], sup2[1])
    pts = sorted(
        {
            p
            for p in kernel.breakpoints(theta1) + kernel.breakpoints(theta2)
            if lo < p < hi
        }
    )
    return [lo] + pts + [hi]


def integrate_piecewise(fun, boundaries, epsabs=QUAD_EPS, epsrel=QUAD_EPS):
    """Adaptive quadrature summed over the segments between breakpoints."""
    total = 0.0
    err = 0.0
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        val, e = quad(fun, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
        total += val
        err += e
    if err > QUAD_TARGET:
        raise QuadratureNonConvergence(f"accumulated quadrature error {err:.2e}")
    return total


def divergence_numeric(kernel, theta1, theta2, which):
    """Divergence by exact summation (discrete) or adaptive quadrature with
    support-boundary splitting (continuous). Returns the Hellinger DISTANCE
    (not squared) for which='hellinger'."""
    which = which.lower()
    if which not in ("tv", "hellinger", "kl"):
        raise InvalidParameter(f"unknown divergence {which!r}")
    t1 = kernel.check_theta(theta1)
    t2 = kernel.check_theta(theta2)
    if kernel.data_space == "binary":
        p = np.array([kernel.density(x, t1) for x in (0.0, 1.0)])
        q = np.array([kernel.density(x, t2) for x in (0.0, 1.0)])
        if which == "tv":
            return 0.5 * float(np.abs(p - q).sum())
        if which == "hellinger":
            return math.sqrt(0.5 * float(((np.sqrt(p) - np.sqrt(q)) ** 2).sum()))
        return float((p * (np.log(p) - np.log(q))).sum())

    if which == "kl":
        s1 = kernel.support(t1)
        s2 = kernel.support(t2)
        if s1[0] < s2[0] - 1e-15 or s1[1] > s2[1] + 1e-15:
            return np.inf

        def fun(x):
            lp = kernel.log_density(x, t1)
            if lp == -np.inf:
                return 0.0
            return math.exp(lp) * (lp - kernel.log_density(x, t2))

    elif which == "tv":

        def fun(x):
            return 0.5 * abs(
                kernel.density(x, t1) - kernel.density(x, t2)
            )

    else:

        def fun(x):
            d = math.sqrt(kernel.density(x, t1)) - math.sqrt(kernel.density(x, t2))
            return 0.5 * d * d

    value = integrate_piecewise(fun, _segments(kernel, t1, t2))
    if which == "hellinger":
        return math.sqrt(max(value, 0.0))
    return max(value, 0.0)


def _fd_jacobian(fun, theta, dim_out):
    theta = np.asarray(theta, dtype=float)
    J = np.empty((dim_out, theta.size))
    for i in range(theta.size):
        h = FD_STEP * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (fun(up) - fun(dn)) / (2 * h)
    return J


def moment_map(kernel, theta):
    """Polynomial moment vector with analytic Jacobian, its closed-form
    determinant, and a finite-difference determinant cross-check."""
    if isinstance(kernel, BetaPushforwardKernel):
        if any(abs(kernel.xi - v) < 1e-12 for v in (1 / 3, 1 / 2, 2 / 3)):
            raise DegenerateXi(
                f"moment map singular at mean fraction {kernel.xi}"
            )
    elif not isinstance(kernel, GaussianLocationMixtureKernel):
        raise InvalidParameter(f"{kernel.name} has no moment map")
    theta = kernel.check_theta(theta)
    lam = kernel.moment_lambda(theta)
    J = kernel.moment_jacobian(theta)
    det_closed = kernel.moment_det_closed(theta)
    J_fd = _fd_jacobian(kernel.moment_lambda, theta, lam.size)
    det_fd = float(np.linalg.det(J_fd))
    return MomentMapReport(lam=lam, jacobian=J, det_closed=det_closed, det_fd=det_fd)


KERNEL_BUILDERS = {
    "bernoulli": lambda params: BernoulliKernel(),
    "gaussian_location": lambda params: GaussianLocationKernel(
        sigma=params.get("sigma", 1.0)
    ),
    "gamma": lambda params: GammaKernel(
        normalized=params.get("normalized", True)
    ),
    "uniform": lambda params: UniformKernel(),
    "locscale_exponential": lambda params: LocScaleExponentialKernel(),
    "gaussian_location_mixture": lambda params: GaussianLocationMixtureKernel(
        k=params["k"], sigma=params.get("sigma", 1.0)
    ),
    "beta_pushforward": lambda params: BetaPushforwardKernel(xi=params["xi"]),
}


def kernel_from_spec(doc):
    """Build a kernel from {"family": name, "params_fixed": {...}}."""
    family = doc.get("family")
    if family not in KERNEL_BUILDERS:
        raise InvalidParameter(f"unknown kernel family {family!r}")
    return KERNEL_BUILDERS[family](doc.get("params_fixed", {}))
