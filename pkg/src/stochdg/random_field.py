"""Karhunen-Loeve expansions for separable exponential covariance kernels.

The 1D kernel ``exp(-|x - y| / ell)`` on an interval of half-width ``A`` has
eigenvalues ``2 ell / (ell^2 w^2 + 1)`` where ``w`` runs over the positive
roots of

    even:  1/ell - w tan(w A) = 0     eigenfunction cos(w t)
    odd:   w + tan(w A)/ell   = 0     eigenfunction sin(w t)

with ``t`` the coordinate measured from the interval midpoint.  The 2D
kernel is a product, so its eigenpairs are products of 1D pairs.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

#: random variables in the expansion are uniform on this interval
XI_BOUND = np.sqrt(3.0)


@dataclass(frozen=True)
class Eigenpair1D:
    value: float
    frequency: float
    even: bool
    norm: float          # multiply cos/sin by this for unit L2 norm
    center: float

    def __call__(self, x):
        t = np.asarray(x, dtype=float) - self.center
        base = np.cos(self.frequency * t) if self.even else np.sin(self.frequency * t)
        return self.norm * base


def _even_root(c, half, k):
    # continuous form of c - w tan(wA) on ((k-1)pi/A, (k-1/2)pi/A)
    f = lambda w: c * np.cos(w * half) - w * np.sin(w * half)
    lo = (k - 1) * np.pi / half
    hi = (k - 0.5) * np.pi / half
    return brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def _odd_root(c, half, k):
    # continuous form of w + c tan(wA) on ((k-1/2)pi/A, k pi/A)
    f = lambda w: w * np.cos(w * half) + c * np.sin(w * half)
    lo = (k - 0.5) * np.pi / half
    hi = k * np.pi / half
    return brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_1d_eigenpairs(ell, interval, count):
    """Largest ``count`` eigenpairs of the exponential kernel on ``interval``.

    Returned in decreasing eigenvalue order.  Even and odd roots interlace,
    so taking them alternately keeps the frequencies sorted.
    """
    if not ell > 0:
        raise ValueError("correlation length must be positive")
    if count < 1:
        raise ValueError("count must be at least 1")
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must have positive length")
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    c = 1.0 / ell

    pairs = []
    k = 1
    while len(pairs) < count:
        for even in (True, False):
            if len(pairs) == count:
                break
            w = _even_root(c, half, k) if even else _odd_root(c, half, k)
            if not np.isfinite(w) or w <= 0:
                raise RuntimeError(f"root bracketing failed at branch {k}")
            s = np.sin(2 * w * half) / (2 * w)
            sq = half + s if even else half - s
            lam = 2.0 * ell / (ell**2 * w**2 + 1.0)
            pairs.append(Eigenpair1D(lam, w, even, 1.0 / np.sqrt(sq), center))
        k += 1
    return pairs


@dataclass(frozen=True)
class CovarianceSpec:
    """Separable exponential covariance ``kappa^2 prod exp(-|x_n - y_n| / ell_n)``."""

    kappa: float
    lengths: tuple
    bounds: tuple          # (x_lo, x_hi, y_lo, y_hi)

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if any(not l > 0 for l in self.lengths):
            raise ValueError("correlation lengths must be positive")

    @property
    def area(self):
        x_lo, x_hi, y_lo, y_hi = self.bounds
        return (x_hi - x_lo) * (y_hi - y_lo)


def _constant(value):
    def mean(x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(value))
    return mean


@dataclass
class KLExpansion:
    """Truncated expansion ``mean(x) + kappa sum_k sqrt(lam_k) phi_k(x) xi_k``."""

    mean: object
    kappa: float
    eigenvalues: np.ndarray
    factors: list = field(repr=False)   # per mode: (Eigenpair1D in x, Eigenpair1D in y)
    area: float = 1.0

    @property
    def n_terms(self):
        return len(self.eigenvalues)

    @property
    def captured_ratio(self):
        return float(np.sum(self.eigenvalues) / self.area)

    def eigenfunction(self, k, x, y):
        fx, fy = self.factors[k]
        return fx(x) * fy(y)

    def mode(self, k, scale=1.0):
        """Callable ``scale * kappa * sqrt(lam_k) * phi_k``."""
        amp = scale * self.kappa * np.sqrt(self.eigenvalues[k])
        fx, fy = self.factors[k]
        return lambda x, y: amp * fx(x) * fy(y)

    def truncated(self, n):
        return KLExpansion(self.mean, self.kappa, self.eigenvalues[:n],
                           self.factors[:n], self.area)


def _product_order(lx, ly, n):
    """Indices (i, j) of the ``n`` largest ``lx[i] * ly[j]``; ties by (i, j)."""
    prod = np.multiply.outer(lx, ly)
    ii, jj = np.indices(prod.shape)
    order = np.lexsort((jj.ravel(), ii.ravel(), -prod.ravel()))[:n]
    return ii.ravel()[order], jj.ravel()[order], prod.ravel()[order]


def assemble_2d_eigenpairs(spec, count, mean=1.0, pool=None):
    """Tensor-product eigenpairs of the separable 2D kernel, largest first.

    ``mean`` is a number or a vectorised callable ``mean(x, y)``.  Since both
    1D sequences decrease, the ``count`` largest products only involve the
    first ``count`` factors on each axis, which is the default pool size.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    pool = count if pool is None else pool
    if pool < 1:
        raise RuntimeError("empty eigenpair pool")
    x_lo, x_hi, y_lo, y_hi = spec.bounds
    ell_x, ell_y = spec.lengths
    px = solve_1d_eigenpairs(ell_x, (x_lo, x_hi), pool)
    py = solve_1d_eigenpairs(ell_y, (y_lo, y_hi), pool)
    lx = np.array([p.value for p in px])
    ly = np.array([p.value for p in py])
    if pool * pool < count:
        raise RuntimeError("1D pool too small for requested number of 2D pairs")
    ii, jj, lam = _product_order(lx, ly, count)
    factors = [(px[i], py[j]) for i, j in zip(ii, jj)]
    mean_fn = mean if callable(mean) else _constant(mean)
    return KLExpansion(mean_fn, spec.kappa, lam, factors, spec.area)


def select_truncation(spec, ratio=0.97, reference_terms=1000):
    """Smallest N whose leading eigenvalue sum exceeds ``ratio`` of the first
    ``reference_terms`` eigenvalues."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    x_lo, x_hi, y_lo, y_hi = spec.bounds
    lx = np.array([p.value for p in solve_1d_eigenpairs(spec.lengths[0], (x_lo, x_hi), reference_terms)])
    ly = np.array([p.value for p in solve_1d_eigenpairs(spec.lengths[1], (y_lo, y_hi), reference_terms)])
    lam = np.sort(np.multiply.outer(lx, ly).ravel())[::-1][:reference_terms]
    partial = np.cumsum(lam)
    return int(np.argmax(partial > ratio * partial[-1]) + 1)


def evaluate_kl(kl, x, y, xi):
    """Realisation of the truncated field at points ``(x, y)`` for sample ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (kl.n_terms,):
        raise ValueError(f"expected {kl.n_terms} random variables, got shape {xi.shape}")
    out = np.array(kl.mean(x, y), dtype=float)
    for k in range(kl.n_terms):
        out = out + kl.kappa * np.sqrt(kl.eigenvalues[k]) * kl.eigenfunction(k, x, y) * xi[k]
    return out


def nystrom_eigenvalues(ell, interval, n_points=400, count=None):
    """Eigenvalues of the 1D kernel from a Gauss-Legendre Nystrom discretisation.

    Only used as an independent check of the analytic roots.
    """
    a, b = interval
    t, w = np.polynomial.legendre.leggauss(n_points)
    x = 0.5 * (b - a) * t + 0.5 * (a + b)
    w = 0.5 * (b - a) * w
    sw = np.sqrt(w)
    kern = np.exp(-np.abs(x[:, None] - x[None, :]) / ell)
    ev = np.linalg.eigvalsh(sw[:, None] * kern * sw[None, :])[::-1]
    return ev if count is None else ev[:count]
