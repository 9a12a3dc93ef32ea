"""Local limit theorem errors, Green sums, potential kernels and walk moments.

Everything here is deterministic: transition probabilities come from
:func:`lattice_she.walk_kernel.nstep_pmf` and integrals over the
characteristic function use Gauss-Legendre panels.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import zeta as hurwitz_zeta

from .continuum_ref import site_probabilities
from .errors import AperiodicityError, NumericalGuardError, PreconditionError, QuadratureError
from .stable_density import StableLaw, density
from .stats import loglog_fit
from .walk_kernel import (WalkKernel, centered_char_fn, default_window, nstep_pmf, one_minus_re_centered,
                          verify_aperiodicity)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
INTERIOR_SAMPLES = 9


def _gl(edges: np.ndarray):
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return ((mid[:, None] + half[:, None] * _GL_NODES).ravel(),
            (half[:, None] * _GL_WEIGHTS).ravel())


# ---------------------------------------------------------------------------
# local limit theorem


@dataclass(frozen=True)
class LltReport:
    n: int
    t: float
    b: float
    c: float
    sup_error: float
    predicted_bound_terms: tuple[float, float]
    grid_size: int
    worst_site: int


def _require_aperiodic(kernel: WalkKernel) -> None:
    rep = verify_aperiodicity(kernel)
    if not rep.aperiodic:
        raise AperiodicityError(
            f"{kernel.name}: |phi({rep.worst_z:.6f})| = {rep.worst_modulus:.12f}",
            rep.worst_z, rep.worst_modulus)


def llt_error(kernel: WalkKernel, n: int, t: float, b: float = 1.0, c: float = 1.0,
              T: float | None = None) -> LltReport:
    """sup_k sup_x |n^{1/alpha} P_[nt](k) - p_{[nt]/n}(x n^{-1/alpha})|.

    x ranges over |x - (k - mu [nt])| <= c n^{(1-b)/alpha}. For each k the
    inner supremum is taken over the interval endpoints, its centre and the
    point nearest the origin, which suffices for a unimodal density; nine
    interior samples confirm that nothing beats those candidates.
    """
    T = t if T is None else T
    if not (1.0 / n - 1e-12 <= t <= T + 1e-12):
        raise PreconditionError("need 1/n <= t <= T")
    if not 0.0 <= b <= 1.0 or c <= 0:
        raise PreconditionError("need 0 <= b <= 1 and c > 0")
    _require_aperiodic(kernel)
    alpha, mu = kernel.alpha, kernel.mu
    steps = max(1, int(math.floor(n * t + 1e-9)))
    law = StableLaw(alpha, kernel.nu)
    s = steps / n
    scale = n ** (1.0 / alpha)

    pm = nstep_pmf(kernel, steps, default_window(kernel, steps, 1e-14), escape_tol=1e-12)
    sites = pm.sites
    lattice = scale * pm.values
    centre = sites - mu * steps
    half = c * n ** ((1.0 - b) / alpha)

    lo, hi = centre - half, centre + half
    nearest = np.clip(0.0, lo, hi)
    candidates = np.stack([lo, hi, centre, nearest], axis=1)
    frac = np.linspace(0.0, 1.0, INTERIOR_SAMPLES + 2)[1:-1]
    interior = lo[:, None] + (hi - lo)[:, None] * frac[None, :]

    def dens(x):
        return np.asarray(density(law, s, x / scale)).reshape(x.shape)

    cand = dens(candidates)
    inner = dens(interior)
    top, bottom = cand.max(axis=1), cand.min(axis=1)
    slack = 1e-12 * max(1.0, float(top.max()))
    if np.any(inner > top[:, None] + slack) or np.any(inner < bottom[:, None] - slack):
        raise NumericalGuardError("density not unimodal on an x window; candidate supremum invalid")
    err = np.maximum(np.abs(lattice - top), np.abs(lattice - bottom))
    j = int(np.argmax(err))
    a = kernel.a
    bounds = (n ** (-a / alpha) * t ** (-(1.0 + a) / alpha), n ** (-b / alpha) * t ** (-2.0 / alpha))
    return LltReport(n, float(t), float(b), float(c), float(err[j]), bounds,
                     int(sites.size), int(sites[j]))


@dataclass(frozen=True)
class RateFit:
    ns: np.ndarray
    values: np.ndarray
    slope: float
    stderr: float


def fit_rate(ns, values) -> RateFit:
    """Log-log least-squares slope of ``values`` against ``ns``."""
    slope, err = loglog_fit(ns, values)
    return RateFit(np.asarray(ns), np.asarray(values, float), slope, err)


def llt_rate(kernel: WalkKernel, ns=(256, 512, 1024, 2048, 4096), t: float = 1.0, b: float = 1.0,
             c: float = 1.0) -> tuple[list[LltReport], RateFit]:
    reports = [llt_error(kernel, n, t, b, c) for n in ns]
    return reports, fit_rate(ns, [r.sup_error for r in reports])


# ---------------------------------------------------------------------------
# Green sums


@dataclass(frozen=True)
class GreenSum:
    value: float
    limit: float | None


def green_sum(kernel: WalkKernel, n: int, t: float, site: int, limit_point: float | None = None) -> GreenSum:
    """n^{-(alpha-1)/alpha} sum_{i=0}^{[nt]} P_i(site).

    When ``limit_point`` a is given, also returns int_0^t s^{-1/alpha} p_1(a s^{-1/alpha}) ds.
    """
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    steps = int(math.floor(n * t + 1e-9))
    probs = site_probabilities(kernel, steps, site)
    value = n ** (-(kernel.alpha - 1.0) / kernel.alpha) * float(probs.sum())
    limit = None
    if limit_point is not None and t > 0:
        limit = green_limit(StableLaw(kernel.alpha, kernel.nu), t, limit_point)
    return GreenSum(value, limit)


def green_limit(law: StableLaw, t: float, a: float) -> float:
    """int_0^t s^{-1/alpha} p_1(a s^{-1/alpha}) ds with the s^{-1/alpha} factor as a quadrature weight."""
    if a == 0.0:
        e = 1.0 - 1.0 / law.alpha
        return float(density(law, 1.0, 0.0)) * t ** e / e
    f = lambda s: float(density(law, 1.0, a * s ** (-1.0 / law.alpha)))
    val, err = integrate.quad(f, 0.0, t, weight="alg", wvar=(-1.0 / law.alpha, 0.0), limit=200)
    if err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError(f"Green limit quadrature error estimate {err:.2e}")
    return float(val)


def green_sum_by_pairs(kernel: WalkKernel, n: int, t: float, shift: int) -> float:
    """Same normalisation as :func:`green_sum` of the difference walk, built from sum_l P_j(l) P_j(l + shift)."""
    steps = int(math.floor(n * t + 1e-9))
    total = 0.0
    for j in range(steps + 1):
        pm = nstep_pmf(kernel, j, (j * kernel.span[0], j * kernel.span[1]), escape_tol=1.0)
        v = pm.values
        if abs(shift) < v.size:
            total += float(np.dot(v[:v.size - abs(shift)], v[abs(shift):]))
    return n ** (-(kernel.alpha - 1.0) / kernel.alpha) * total


# ---------------------------------------------------------------------------
# potential kernel


@dataclass(frozen=True, eq=False)
class PotentialKernel:
    walk: WalkKernel
    values: dict
    period: int

    def __call__(self, x: int) -> float:
        x = abs(int(x))
        if x % self.period:
            raise PreconditionError(f"site {x} is not reachable by a walk of period {self.period}")
        return self.values[x]


def _period(kernel: WalkKernel) -> int:
    g = 0
    for o in kernel.offsets:
        g = math.gcd(g, int(o))
    return max(g, 1)


def _potential_integral(walk: WalkKernel, x: int, refine: int, eps: float) -> float:
    # (1/pi) int_eps^pi 2 sin^2(x z / 2) / (1 - psi(z)) dz, psi the real char. function
    width = min(math.pi / 16, math.pi / max(x, 1)) / refine
    uniform = np.arange(eps, math.pi, width)
    geo = eps * np.geomspace(1.0, max(width / eps, 1.0), 12 * refine)
    edges = np.unique(np.concatenate([geo, uniform, [math.pi]]))
    z, w = _gl(edges)
    num = 2.0 * np.sin(0.5 * x * z) ** 2
    den = one_minus_re_centered(walk, z)
    return float(np.dot(w, num / den)) / math.pi


def potential_kernel(diff: WalkKernel, x_max: int, rtol: float = 1e-9) -> PotentialKernel:
    """a_bar(x) = (1/pi) int_0^pi (1 - cos xz) / (1 - psi(z)) dz for |x| <= x_max.

    ``diff`` must be symmetric (a difference walk). A walk supported on dZ
    is handled on its own lattice, so only multiples of d get values. Below
    a small cutoff the integrand is replaced by its two-term Taylor series
    (finite-variance walks only); the cutoff shrinks with x so that the
    series stays accurate. Each value is recomputed on panels half as wide
    and must agree to ``rtol``.
    """
    if not diff.is_symmetric:
        raise PreconditionError("potential kernel needs a symmetric walk")
    d = _period(diff)
    walk = diff
    if d > 1:
        walk = WalkKernel(diff.offsets // d, diff.probs, diff.alpha, diff.nu / d ** diff.alpha, diff.a,
                          f"{diff.name}/{d}", diff.heavy_tailed, diff.truncation_radius)
    rep = verify_aperiodicity(walk)
    if rep.worst_modulus >= 1.0 - 1e-12:
        raise AperiodicityError("walk returns to modulus one away from the origin",
                                rep.worst_z, rep.worst_modulus)
    var = float(np.dot(walk.probs, walk.offsets.astype(float) ** 2))
    m4 = float(np.dot(walk.probs, walk.offsets.astype(float) ** 4))
    values = {0: 0.0}
    for xr in range(1, x_max // d + 1):
        if walk.heavy_tailed:
            eps = 1e-12
            head = 0.0
        else:
            eps = min(1e-3, 1e-2 / xr)
            # (x^2/var)(1 - (x^2 - m4/var) z^2 / 12) integrated over [0, eps], divided by pi
            head = (xr * xr / var) * (eps - (xr * xr - m4 / var) * eps ** 3 / 36.0) / math.pi
        coarse = head + _potential_integral(walk, xr, 1, eps)
        fine = head + _potential_integral(walk, xr, 2, eps)
        if abs(fine - coarse) > rtol * max(1.0, abs(fine)):
            raise QuadratureError(f"potential kernel at x={xr * d}: {coarse!r} vs {fine!r}")
        values[xr * d] = fine
    return PotentialKernel(diff, values, d)


def potential_kernel_partial(diff: WalkKernel, steps: int, xs) -> np.ndarray:
    """a_bar_n(x) = sum_{j<=n} [P(Y_j = 0) - P(Y_j = x)] by direct pmf propagation."""
    zero = site_probabilities(diff, steps, 0).sum()
    return np.array([zero - site_probabilities(diff, steps, int(x)).sum() for x in xs])


def potential_growth(pk: PotentialKernel, xs) -> np.ndarray:
    """a_bar(x) / |x|^{alpha-1} for each x."""
    xs = np.asarray(xs)
    return np.array([pk(x) for x in xs]) / np.abs(xs) ** (pk.walk.alpha - 1.0)


# ---------------------------------------------------------------------------
# fractional moments


def _log_char_power(kernel: WalkKernel, w: np.ndarray, power: int):
    """(Re, Im) of power * log phi_c(w), accurate near w = 0."""
    A = one_minus_re_centered(kernel, w)
    B = np.imag(centered_char_fn(kernel, w))
    with np.errstate(divide="ignore"):  # phi_c may vanish, giving log 0 = -inf and G = 0
        re = 0.5 * power * np.log1p(-2.0 * A + A * A + B * B)
    im = power * np.arctan2(B, 1.0 - A)
    return re, im


def _cell_integral(scale: float, one_minus_re, g_re, g_im, phase: float, delta: float,
                   cells: int = 4096) -> float:
    """int_0^inf (1 - Re[e^{-2 pi i m phase} G(w)]) / z^{1+delta} dz with z = scale (2 pi m + w).

    ``one_minus_re(w)`` is 1 - Re G(w) on [0, pi] (cell zero, near the
    singular origin); ``g_re`` / ``g_im`` give G on [-pi, pi] for the
    remaining cells, where G is periodic up to the phase factor.
    """
    # cell zero: z in (0, pi scale]
    edges = np.unique(np.concatenate([math.pi * np.geomspace(1e-14, 1e-2, 60),
                                      np.linspace(0.01 * math.pi, math.pi, 201)]))
    w, wt = _gl(np.concatenate([[0.0], edges]))
    z = scale * w
    head = scale * float(np.dot(wt, one_minus_re(w) / z ** (1.0 + delta)))
    tail_flat = (math.pi * scale) ** (-delta) / delta
    # remaining half cell [pi, 2pi) and cells m >= 1 around 2 pi m
    edges = np.linspace(-math.pi, math.pi, 513)
    w, wt = _gl(edges)
    gr, gi = g_re(w), g_im(w)
    osc = 0.0
    for m in range(1, cells + 1):
        c, s = math.cos(2 * math.pi * m * phase), math.sin(2 * math.pi * m * phase)
        re = c * gr + s * gi
        zz = scale * (2 * math.pi * m + w)
        osc += scale * float(np.dot(wt, re / zz ** (1.0 + delta)))
    # cells beyond the last one: (2 pi m + w)^{-1-delta} ~ (2 pi m)^{-1-delta}
    mean = float(np.dot(wt, gr)) if phase == round(phase) else 0.0
    osc += scale ** (-delta) * mean * (2 * math.pi) ** (-1.0 - delta) * float(hurwitz_zeta(1.0 + delta, cells + 1))
    return head + tail_flat - osc


@functools.lru_cache(maxsize=64)
def stable_c(delta: float) -> float:
    """c(delta) = int_0^inf (1 - cos z) / z^{1+delta} dz by the cell quadrature."""
    if not 0.0 < delta < 2.0:
        raise PreconditionError("c(delta) needs 0 < delta < 2")
    return _cell_integral(1.0, lambda w: 2.0 * np.sin(0.5 * w) ** 2, np.cos, np.sin, 0.0, delta)


def stable_c_closed(delta: float) -> float:
    if delta == 1.0:
        return math.pi / 2.0
    return math.gamma(1.0 - delta) * math.cos(math.pi * delta / 2.0) / delta


def fractional_moment(kernel: WalkKernel, n: int, delta: float) -> float:
    """E|R_n|^delta for R_n = (X_n - n mu) / n^{1/alpha}, via the characteristic function."""
    if not 0.0 < delta < kernel.alpha:
        raise PreconditionError(f"delta={delta} outside (0, alpha={kernel.alpha})")
    if n < 1:
        raise PreconditionError("n must be positive")
    if kernel.offsets.size == 1:
        return 0.0
    scale = n ** (1.0 / kernel.alpha)

    def one_minus_re(w):
        lr, li = _log_char_power(kernel, w, n)
        return -np.expm1(lr) * np.cos(li) + 2.0 * np.sin(0.5 * li) ** 2

    def g_re(w):
        lr, li = _log_char_power(kernel, w, n)
        return np.exp(lr) * np.cos(li)

    def g_im(w):
        lr, li = _log_char_power(kernel, w, n)
        return np.exp(lr) * np.sin(li)

    phase = kernel.mu * n
    return _cell_integral(scale, one_minus_re, g_re, g_im, phase, delta) / stable_c(delta)


def fractional_moment_limit(kernel: WalkKernel, delta: float) -> float:
    """nu^{delta/alpha} Gamma(1 - delta/alpha) / (delta c(delta))."""
    a = kernel.alpha
    return kernel.nu ** (delta / a) * math.gamma(1.0 - delta / a) / (delta * stable_c_closed(delta))


# ---------------------------------------------------------------------------
# tails


def tail_probability(kernel: WalkKernel, steps: int, threshold: float) -> float:
    """P(|X_steps| >= threshold) from the exact pmf plus any mass outside its window."""
    if steps < 1:
        raise PreconditionError("steps must be at least 1")
    if threshold <= 0:
        return 1.0
    pm = nstep_pmf(kernel, steps, default_window(kernel, steps, 1e-15), escape_tol=1.0)
    far = np.abs(pm.sites) >= threshold
    return float(min(1.0, pm.values[far].sum() + pm.escaped))
