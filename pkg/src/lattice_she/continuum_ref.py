"""Reference values for continuum second moments and their exact lattice analogues.

Continuum side: the additive-noise variance int_0^t G(s) ds and the
parabolic Anderson second moment, which solves

    m(t) = 1 + beta^2 int_0^t G(t - s) m(s) ds,   G(r) = int p_r(y)^2 dy.

Lattice side: the same quantities propagated exactly (no Monte Carlo)
through the linear recursion of two-point functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalGuardError, PreconditionError
from .stable_density import StableLaw, l2_norm_sq
from .walk_kernel import WalkKernel, default_window, diff_walk


def additive_variance(law: StableLaw, t: float) -> float:
    """int_0^t int p_s(y)^2 dy ds.

    G(1) comes from quadrature and the time integral from G(s) = s^{-1/alpha} G(1).
    """
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    if t == 0:
        return 0.0
    e = 1.0 - 1.0 / law.alpha
    return l2_norm_sq(law, 1.0) * t ** e / e


def additive_variance_gaussian(nu: float, t: float) -> float:
    """Closed form sqrt(t / (2 pi nu)) for alpha = 2."""
    return math.sqrt(t / (2.0 * math.pi * nu))


@dataclass(frozen=True, eq=False)
class RenewalSolution:
    law: StableLaw
    beta: float
    grid: np.ndarray
    m: np.ndarray
    refinement_change: float

    @property
    def value(self) -> float:
        return float(self.m[-1])

    def __call__(self, t):
        return np.interp(t, self.grid, self.m)


def _pow_diff(b: np.ndarray, a: np.ndarray, c: float) -> np.ndarray:
    """b^c - a^c for 0 <= a <= b without cancellation."""
    out = b ** c
    pos = a > 0
    ratio = (b[pos] - a[pos]) / a[pos]
    out[pos] = a[pos] ** c * np.expm1(c * np.log1p(ratio))
    return out


def _volterra_product_trapezoid(lam: float, kexp: float, grid: np.ndarray) -> np.ndarray:
    """Solve m(t) = 1 + lam int_0^t (t-s)^{-kexp} m(s) ds on ``grid``.

    m is piecewise linear between nodes and the weakly singular kernel is
    integrated exactly against each hat function.
    """
    J = grid.size - 1
    m = np.ones(J + 1)
    c0, c1 = 1.0 - kexp, 2.0 - kexp
    for j in range(1, J + 1):
        tj = grid[j]
        left, right = grid[:j], grid[1:j + 1]
        h = right - left
        a = tj - right  # near end of each interval, in kernel variable
        b = tj - left
        i0 = _pow_diff(b, a, c0) / c0
        i1 = _pow_diff(b, a, c1) / c1
        w_left = (i1 - a * i0) / h
        w_right = (b * i0 - i1) / h
        known = np.dot(w_left, m[:j]) + np.dot(w_right[:-1], m[1:j])
        m[j] = (1.0 + lam * known) / (1.0 - lam * w_right[-1])
    return m


def graded_mesh(T: float, J: int, alpha: float) -> np.ndarray:
    q = alpha / (alpha - 1.0) if alpha > 1.0 else 2.0
    return T * (np.arange(J + 1) / J) ** q


def pam_second_moment(law: StableLaw, beta: float, t: float, rtol: float = 1e-7,
                      start: int = 256, max_nodes: int = 16384) -> RenewalSolution:
    """Second moment of the continuum PAM with flat unit initial data.

    The mesh is doubled until m(t) changes by less than ``rtol`` relatively.
    """
    if t <= 0:
        raise PreconditionError("t must be positive")
    if beta == 0:
        grid = graded_mesh(t, 1, law.alpha)
        return RenewalSolution(law, 0.0, grid, np.ones(2), 0.0)
    lam = beta * beta * l2_norm_sq(law, 1.0)
    kexp = 1.0 / law.alpha
    J = start
    grid = graded_mesh(t, J, law.alpha)
    m = _volterra_product_trapezoid(lam, kexp, grid)
    while True:
        J2 = 2 * J
        if J2 > max_nodes:
            raise NumericalGuardError(f"Volterra mesh refinement did not converge by {max_nodes} nodes")
        grid2 = graded_mesh(t, J2, law.alpha)
        m2 = _volterra_product_trapezoid(lam, kexp, grid2)
        change = abs(m2[-1] - m[-1]) / abs(m2[-1])
        J, grid, m = J2, grid2, m2
        if change < rtol:
            return RenewalSolution(law, float(beta), grid, m, float(change))


def mittag_leffler(a: float, z: float, terms: int = 400) -> float:
    """E_a(z) = sum z^k / Gamma(a k + 1), summed in log space (z >= 0)."""
    if z == 0:
        return 1.0
    k = np.arange(terms)
    logs = k * math.log(z) - np.array([math.lgamma(a * kk + 1.0) for kk in k])
    top = logs.max()
    return float(math.exp(top) * np.exp(logs - top).sum())


def pam_second_moment_series(law: StableLaw, beta: float, t: float) -> float:
    """Series solution E_a(lam Gamma(a) t^a), a = 1 - 1/alpha, of the same Volterra equation."""
    a = 1.0 - 1.0 / law.alpha
    lam = beta * beta * l2_norm_sq(law, 1.0)
    return mittag_leffler(a, lam * math.gamma(a) * t ** a)


# ---------------------------------------------------------------------------
# exact lattice second moments


def noise_scale(n: int, alpha: float) -> float:
    """n^{-(alpha-1)/(2 alpha)}: the factor multiplying each noise variable."""
    return n ** (-(alpha - 1.0) / (2.0 * alpha))


def return_probabilities(kernel: WalkKernel, steps: int) -> np.ndarray:
    """P(Y_j = 0), j = 0..steps, for the difference walk Y of ``kernel``."""
    return site_probabilities(diff_walk(kernel), steps, 0)


def site_probabilities(kernel: WalkKernel, steps: int, site: int) -> np.ndarray:
    """P(X_j = site), j = 0..steps, keeping only one distribution in memory."""
    lo, hi = _diff_window(kernel, steps)
    lo, hi = min(lo, site), max(hi, site)
    size = hi - lo + 1
    lo_s, hi_s = kernel.span
    step = np.zeros(hi_s - lo_s + 1)
    step[kernel.offsets - lo_s] = kernel.probs
    idx = np.arange(size) - lo_s
    ok = (idx >= 0) & (idx < size + step.size - 1)
    dist = np.zeros(size)
    if lo <= 0 <= hi:
        dist[-lo] = 1.0
    out = np.empty(steps + 1)
    out[0] = dist[site - lo]
    for i in range(steps):
        full = np.convolve(dist, step)
        dist = np.zeros(size)
        dist[ok] = full[idx[ok]]
        out[i + 1] = dist[site - lo]
    return out


def _diff_window(dk: WalkKernel, steps: int, eps: float = 1e-13):
    lo_s, hi_s = dk.span
    if steps * (hi_s - lo_s) <= 20000:
        return steps * lo_s, steps * hi_s
    return default_window(dk, steps, eps)


def discrete_additive_variance(kernel: WalkKernel, n: int, steps: int) -> float:
    """Var u_steps(k) for sigma = 1, zero initial data: n^{-(alpha-1)/alpha} sum_{j<steps} P(Y_j = 0)."""
    q = return_probabilities(kernel, max(steps - 1, 0))
    return float(noise_scale(n, kernel.alpha) ** 2 * q[:steps].sum())


def discrete_pam_second_moment(kernel: WalkKernel, n: int, beta: float, steps: int,
                               max_sites: int = 2_000_000) -> np.ndarray:
    """E u_i(k)^2, i = 0..steps, for sigma(u) = beta u and flat unit initial data.

    With a flat start the two-point function depends only on d = k - k' and
    obeys c_{i+1}(d) = sum_e P(Y = e) c_i(d + e) + beta^2 n^{-(alpha-1)/alpha} 1{d=0} c_i(0).
    Far from the diagonal c stays 1 (the difference walk never reaches 0),
    which is the boundary value used outside the window.
    """
    if steps < 0:
        raise PreconditionError("steps must be nonnegative")
    dk = diff_walk(kernel)
    lo, hi = _diff_window(dk, steps)
    size = hi - lo + 1
    if size > max_sites:
        raise PreconditionError(f"difference window of {size} sites exceeds memory guard")
    g = beta * beta * noise_scale(n, kernel.alpha) ** 2
    lo_s, hi_s = dk.span
    step = np.zeros(hi_s - lo_s + 1)
    step[dk.offsets - lo_s] = dk.probs
    pad = max(-lo_s, hi_s)
    c = np.ones(size + 2 * pad)
    centre = pad - lo
    out = np.empty(steps + 1)
    out[0] = 1.0
    for i in range(steps):
        # Y is symmetric, so correlation and convolution coincide
        inner = np.convolve(c, step, mode="same")
        c0 = c[centre]
        c = np.ones_like(c)
        c[pad:pad + size] = inner[pad:pad + size]
        c[centre] += g * c0
        out[i + 1] = c[centre]
    return out


def reference_field(config_fine, replicas: int, steps, sites, coarse_n: int | None = None):
    """Fine-lattice ensemble used as a self-convergence reference.

    Thin wrapper around :func:`lattice_she.she_solver.solve_ensemble`; the
    fine lattice must be at least four times the coarse one when given.
    """
    from .she_solver import solve_ensemble

    if coarse_n is not None and config_fine.n < 4 * coarse_n:
        raise PreconditionError("reference field needs n_fine >= 4 n_coarse")
    return solve_ensemble(config_fine, replicas, steps, sites)
