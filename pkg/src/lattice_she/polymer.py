"""Directed polymers in intermediate disorder, by transfer recursions.

With inverse temperature b = beta n^{-(alpha-1)/(2 alpha)} and normalised
weights Z_i(k) = exp(b xi_i(k)) / E exp(b xi), the forward recursion

    f_0(x) = 1{x = 0} Z_0(0),   f_{i+1}(x) = Z_{i+1}(x) sum_y f_i(y) P(x - y)

gives the point-to-point values f_n(x) = M_n^{(x)} and M_n = sum_x f_n(x).
The reversed field w_{i+1}(k) = Z_{i+1}(k) sum_l P(l - k) w_i(l) started from
w_0 = Z_0 evaluates M_n at the origin once the environment is flipped in time.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import integrate

from .continuum_ref import _diff_window, noise_scale
from .errors import NumericalGuardError, PreconditionError
from .noise import CHANNEL_DRIVING, NoiseModel, fill_noise_row, stream_key, stream_keys
from .she_solver import _convolve_absorbing, _run_chunks, _threads
from .walk_kernel import WalkKernel, default_window, diff_walk, nstep_pmf

BLOWUP_GUARD = 1e12
ENUMERATION_LIMIT = 12


def inverse_temperature(beta: float, n: int, alpha: float) -> float:
    return beta * noise_scale(n, alpha)


@dataclass(frozen=True, eq=False)
class PolymerEnvironment:
    """Disorder xi_i(k) for rows i = 0..steps on sites lo, lo+1, ...; ``b`` is the inverse temperature."""

    xi: np.ndarray
    lo: int
    b: float
    noise: NoiseModel

    @classmethod
    def sample(cls, noise: NoiseModel, beta: float, n: int, alpha: float, window: tuple[int, int],
               seed: int = 0, replica: int = 0, experiment: str = "polymer",
               steps: int | None = None) -> "PolymerEnvironment":
        steps = n if steps is None else steps
        key = stream_key(seed, experiment, replica, CHANNEL_DRIVING)
        xi = noise.sample(key, (0, steps + 1), (window[0], window[1] + 1))
        return cls(xi, int(window[0]), inverse_temperature(beta, n, alpha), noise)

    @property
    def steps(self) -> int:
        return self.xi.shape[0] - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + self.xi.shape[1])

    @property
    def mgf(self) -> float:
        return self.noise.mgf(self.b)

    def weights(self) -> np.ndarray:
        """Z_i(k) = exp(b xi_i(k)) / E exp(b xi)."""
        return np.exp(self.b * self.xi) / self.mgf

    def reversed(self) -> "PolymerEnvironment":
        """Environment with rows in reverse time order: xi'_i = xi_{steps - i}."""
        return PolymerEnvironment(self.xi[::-1].copy(), self.lo, self.b, self.noise)

    def __post_init__(self):
        if not self.noise.has_exponential_moments:
            raise PreconditionError("polymer disorder needs exponential moments")
        if self.noise.family == "centered-exponential" and self.b >= 1.0:
            raise PreconditionError("inverse temperature beyond the exponential mgf radius")


@dataclass(frozen=True, eq=False)
class PartitionResult:
    M: float
    sites: np.ndarray
    point_to_point: np.ndarray  # M_n^{(x)} on sites (unscaled)
    n: int
    alpha: float
    escape_mass: float

    @property
    def quenched_law(self) -> np.ndarray:
        return self.point_to_point / self.point_to_point.sum()

    @property
    def scaled_point_to_point(self) -> np.ndarray:
        return self.n ** (1.0 / self.alpha) * self.point_to_point


# ---------------------------------------------------------------------------
# enumeration oracle


def partition_direct(env: PolymerEnvironment, kernel: WalkKernel, steps: int | None = None,
                     endpoint: int | None = None) -> float:
    """Z_n = E_0 exp(b sum_{i=0}^n xi_i(X_i)) by summing over every path.

    With ``endpoint`` set, only paths ending there count.
    """
    steps = env.steps if steps is None else steps
    if steps > ENUMERATION_LIMIT:
        raise PreconditionError(f"path enumeration limited to n <= {ENUMERATION_LIMIT}")
    if kernel.offsets.size ** steps > 5_000_000:
        raise PreconditionError("state space too large for enumeration")
    reach = steps * max(abs(kernel.span[0]), abs(kernel.span[1]))
    if env.lo > -reach or env.lo + env.xi.shape[1] - 1 < reach:
        raise PreconditionError("environment does not cover every path")
    start = env.b * env.xi[0, -env.lo]
    if steps == 0:
        return math.exp(start) if endpoint in (None, 0) else 0.0
    idx = np.array(list(itertools.product(range(kernel.offsets.size), repeat=steps)))
    pos = np.cumsum(kernel.offsets[idx], axis=1)
    prob = np.prod(kernel.probs[idx], axis=1)
    energy = env.xi[np.arange(1, steps + 1)[None, :], pos - env.lo].sum(axis=1)
    terms = prob * np.exp(env.b * energy + start)
    if endpoint is not None:
        terms = terms[pos[:, -1] == endpoint]
    return float(terms.sum())


# ---------------------------------------------------------------------------
# transfer recursions


def _forward(weights: np.ndarray, kernel: WalkKernel, lo: int, steps: int) -> np.ndarray:
    W = weights.shape[1]
    f = np.zeros(W)
    f[-lo] = weights[0, -lo]
    rev = (-kernel.offsets).astype(np.int64)
    lo_off, hi_off = int(rev.min()), int(rev.max())
    new = np.empty(W)
    for i in range(steps):
        # sum_y f(y) P(x - y) = sum_o P(o) f(x - o)
        _convolve_absorbing(f, rev, kernel.probs, lo_off, hi_off, new)
        f = new * weights[i + 1]
        if not np.all(np.abs(f) <= BLOWUP_GUARD):
            raise NumericalGuardError(f"polymer weights overflow at step {i + 1}")
    return f


def reversed_field(env: PolymerEnvironment, kernel: WalkKernel, initial: np.ndarray | None = None,
                   steps: int | None = None) -> np.ndarray:
    """Layers w_0..w_steps of w_{i+1}(k) = Z_{i+1}(k) sum_l P(l - k) w_i(l), w_0 = Z_0 * initial."""
    steps = env.steps if steps is None else steps
    Z = env.weights()
    w = Z[0] * (1.0 if initial is None else initial)
    out = [w]
    offs = kernel.offsets.astype(np.int64)
    new = np.empty_like(w)
    for i in range(steps):
        _convolve_absorbing(w, offs, kernel.probs, int(offs.min()), int(offs.max()), new)
        w = new * Z[i + 1]
        out.append(w)
    return np.array(out)


def transfer_solve(env: PolymerEnvironment, kernel: WalkKernel, n: int, alpha: float | None = None,
                   escape_tol: float = 1e-8) -> PartitionResult:
    """Forward recursion over the environment; returns M_n, point-to-point values and the quenched law."""
    alpha = kernel.alpha if alpha is None else alpha
    steps = env.steps
    if not env.lo <= 0 < env.lo + env.xi.shape[1]:
        raise PreconditionError("environment window must contain the origin")
    reach = nstep_pmf(kernel, steps, (env.lo, env.lo + env.xi.shape[1] - 1), escape_tol=1.0)
    if reach.escaped > escape_tol:
        raise PreconditionError(f"polymer window leaks mass {reach.escaped:.2e}")
    f = _forward(env.weights(), kernel, env.lo, steps)
    return PartitionResult(float(f.sum()), env.sites, f, n, alpha, reach.escaped)


def polymer_window(kernel: WalkKernel, n: int, c: float = 1.0, escape_tol: float = 1e-8) -> tuple[int, int]:
    """Window centred at the origin, half-width 8 c n^{1/alpha}, widened until escape < tol."""
    half = int(math.ceil(8.0 * c * n ** (1.0 / kernel.alpha)))
    lo_w, hi_w = default_window(kernel, n, escape_tol * 1e-2)
    half = max(half, -lo_w, hi_w)
    return -half, half


# ---------------------------------------------------------------------------
# ensembles


@nb.njit(nogil=True, cache=True)
def _partition_batch(keys, code, param, b, log_mgf, offsets, probs, lo, W, steps, out, status):
    rev = -offsets
    lo_off, hi_off = rev.min(), rev.max()
    row = np.empty(W)
    for r in range(keys.shape[0]):
        f = np.zeros(W)
        new = np.empty(W)
        fill_noise_row(code, param, keys[r], 0, lo, row)
        f[-lo] = math.exp(b * row[-lo] - log_mgf)
        bad = 0
        for i in range(steps):
            _convolve_absorbing(f, rev, probs, lo_off, hi_off, new)
            fill_noise_row(code, param, keys[r], i + 1, lo, row)
            for w in range(W):
                f[w] = new[w] * math.exp(b * row[w] - log_mgf)
                if not f[w] <= 1e12:
                    bad = i + 1
            if bad:
                break
        status[r] = bad
        total = 0.0
        for w in range(W):
            total += f[w]
        out[r] = total


def partition_ensemble(noise: NoiseModel, kernel: WalkKernel, beta: float, n: int, replicas: int,
                       seed: int = 0, experiment: str = "polymer", threads: int | None = None,
                       escape_tol: float = 1e-8) -> tuple[np.ndarray, int]:
    """M_n for independent environments (forward recursion); returns (values, excluded count)."""
    lo, hi = polymer_window(kernel, n, escape_tol=escape_tol)
    b = inverse_temperature(beta, n, kernel.alpha)
    keys = stream_keys(seed, experiment, range(replicas), CHANNEL_DRIVING)
    out = np.zeros(replicas)
    status = np.zeros(replicas, dtype=np.int64)
    log_mgf = math.log(noise.mgf(b))
    offs = kernel.offsets.astype(np.int64)

    def work(a, c):
        _partition_batch(keys[a:c], noise.code, noise.param, b, log_mgf, offs, kernel.probs,
                         lo, hi - lo + 1, n, out[a:c], status[a:c])

    _run_chunks(work, replicas, _threads(threads))
    ok = status == 0
    return out[ok], int((~ok).sum())


@nb.njit(nogil=True, cache=True)
def _comparison_batch(keys, code, param, b, log_mgf, offsets, probs, lo, W, steps, obs, out):
    # fields: 0 u, 1 w_tilde, 2 w_star, 3 w
    lo_off, hi_off = offsets.min(), offsets.max()
    row = np.empty(W)
    for r in range(keys.shape[0]):
        F = np.ones((4, W))
        P = np.empty((4, W))
        fill_noise_row(code, param, keys[r], 0, lo, row)
        for w in range(W):
            F[3, w] = math.exp(b * row[w] - log_mgf)
        for i in range(steps):
            for f in range(4):
                _convolve_absorbing(F[f], offsets, probs, lo_off, hi_off, P[f])
            fill_noise_row(code, param, keys[r], i + 1, lo, row)
            for w in range(W):
                bx = b * row[w]
                z = math.exp(bx - log_mgf)
                F[0, w] = P[0, w] + bx * F[0, w]
                F[1, w] = P[1, w] * (1.0 + bx)
                F[2, w] = P[2, w] * z
                F[3, w] = P[3, w] * z
        for f in range(4):
            for q in range(obs.shape[0]):
                out[r, f, q] = F[f, obs[q]]


FIELD_NAMES = ("u", "w_tilde", "w_star", "w")


@dataclass(frozen=True, eq=False)
class ComparisonFields:
    n: int
    sites: np.ndarray
    values: np.ndarray  # (replicas, 4, sites) at i = n

    def field(self, name: str) -> np.ndarray:
        return self.values[:, FIELD_NAMES.index(name), :]

    def distance(self, a: str, b: str, order: float = 4.0) -> float:
        """sup over recorded sites of ||a_n(k) - b_n(k)||_order."""
        d = np.abs(self.field(a) - self.field(b)) ** order
        return float(np.max(d.mean(axis=0)) ** (1.0 / order))

    def distances(self, order: float = 4.0) -> dict:
        return {f"{a}-{b}": self.distance(a, b, order)
                for a, b in (("u", "w_tilde"), ("w_tilde", "w_star"), ("w_star", "w"))}


def comparison_fields(noise: NoiseModel, kernel: WalkKernel, beta: float, n: int, replicas: int,
                      sites=(0,), seed: int = 0, experiment: str = "comparison",
                      threads: int | None = None, escape_tol: float = 1e-8) -> ComparisonFields:
    """Evolve u, w_tilde, w_star and w on shared disorder and record them at i = n.

    u_{i+1} = P u_i + b xi_{i+1} u_i, w_tilde_{i+1} = (P w_tilde_i)(1 + b xi_{i+1}),
    w_star_{i+1} = (P w_star_i) Z_{i+1}, w_{i+1} = (P w_i) Z_{i+1}; all start from 1 except w_0 = Z_0.
    """
    sites = np.asarray(sites, dtype=np.int64)
    wlo, whi = default_window(kernel, n, escape_tol * 1e-2)
    pad = max(abs(kernel.span[0]), abs(kernel.span[1]))
    lo = int(sites.min()) + min(wlo, 0) - pad
    hi = int(sites.max()) + max(whi, 0) + pad
    b = inverse_temperature(beta, n, kernel.alpha)
    log_mgf = math.log(noise.mgf(b))
    keys = stream_keys(seed, experiment, range(replicas), CHANNEL_DRIVING)
    out = np.zeros((replicas, 4, sites.size))
    offs = kernel.offsets.astype(np.int64)

    def work(a, c):
        _comparison_batch(keys[a:c], noise.code, noise.param, b, log_mgf, offs, kernel.probs,
                          lo, hi - lo + 1, n, sites - lo, out[a:c])

    _run_chunks(work, replicas, _threads(threads), chunk=16)
    if not np.all(np.isfinite(out)):
        raise NumericalGuardError("non-finite comparison field")
    return ComparisonFields(n, sites, out)


# ---------------------------------------------------------------------------
# exact moments


def second_moment_exact(kernel: WalkKernel, noise: NoiseModel, beta: float, n: int) -> float:
    """E M_n^2 through the two-point recursion c_{i+1}(d) = (Q * c_i)(d) (1 + 1{d=0}(rho - 1)).

    Q is the difference walk and rho = E Z^2 = mgf(2b) / mgf(b)^2; the
    Z_0 factor gives c_0 = 1 + 1{d=0}(rho - 1).
    """
    b = inverse_temperature(beta, n, kernel.alpha)
    rho = noise.mgf(2.0 * b) / noise.mgf(b) ** 2
    dk = diff_walk(kernel)
    lo, hi = _diff_window(dk, n)
    size = hi - lo + 1
    lo_s, hi_s = dk.span
    step = np.zeros(hi_s - lo_s + 1)
    step[dk.offsets - lo_s] = dk.probs
    pad = max(-lo_s, hi_s)
    c = np.ones(size + 2 * pad)
    centre = pad - lo
    c[centre] = rho
    for _ in range(n):
        inner = np.convolve(c, step, mode="same")
        c = np.ones_like(c)
        c[pad:pad + size] = inner[pad:pad + size]
        c[centre] *= rho
    return float(c[centre])


def _expect(noise: NoiseModel, f) -> float:
    """E f(xi) by exact summation or one-dimensional quadrature."""
    atoms = noise.atoms
    if atoms is not None:
        v, w = atoms
        return float(sum(wi * f(vi) for vi, wi in zip(v, w)))
    if noise.family == "gaussian":
        g = lambda y: f(y) * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)
        return integrate.quad(g, -40.0, 40.0, limit=400, epsabs=1e-300, epsrel=1e-12)[0]
    if noise.family == "uniform":
        h = math.sqrt(3.0)
        return integrate.quad(lambda y: f(y) / (2.0 * h), -h, h, epsabs=1e-300, epsrel=1e-12)[0]
    g = lambda y: f(y) * math.exp(-(y + 1.0))
    return integrate.quad(g, -1.0, np.inf, limit=400, epsabs=1e-300, epsrel=1e-12)[0]


@dataclass(frozen=True)
class Linearization:
    n: int
    order: float
    multiplier: float  # ||Z - 1||_order^2
    remainder: float  # ||Z - 1 - b xi||_order^2


def exp_linearization_check(noise: NoiseModel, beta: float, n: int, order: float = 2.0,
                            alpha: float = 2.0) -> Linearization:
    """Squared L^order norms of Z - 1 and Z - 1 - b xi, Z = exp(b xi) / E exp(b xi)."""
    b = inverse_temperature(beta, n, alpha)
    if b == 0:
        return Linearization(n, order, 0.0, 0.0)
    mgf = noise.mgf(b)
    first = _expect(noise, lambda y: abs(math.exp(b * y) / mgf - 1.0) ** order)
    second = _expect(noise, lambda y: abs(math.exp(b * y) / mgf - 1.0 - b * y) ** order)
    return Linearization(n, order, first ** (2.0 / order), second ** (2.0 / order))


def quenched_endpoint(env: PolymerEnvironment, kernel: WalkKernel, n: int) -> PartitionResult:
    """Quenched endpoint law; defined for driftless kernels."""
    if abs(kernel.mu) > 1e-12:
        raise PreconditionError("quenched endpoint study assumes mu = 0")
    return transfer_solve(env, kernel, n)


def comparison_second_moments(kernel: WalkKernel, noise: NoiseModel, beta: float, n: int) -> dict:
    """Exact squared L^2 distances between the comparison fields at i = n.

    Each field obeys F_{i+1}(k) = A(xi) (P F_i)(k) + B(xi) F_i(k) with flat
    start, so the cross moments G^{fg}_i(d) = E F^f_i(k) F^g_i(k + d) close:
    off the diagonal the multipliers are independent with E A = 1, E B = 0 and
    G moves by the difference walk; on the diagonal the multiplier moments
    enter. Needs a symmetric kernel, under which G(-d) = G(d).
    """
    if not kernel.is_symmetric:
        raise PreconditionError("exact comparison moments need a symmetric kernel")
    b = inverse_temperature(beta, n, kernel.alpha)
    mgf = noise.mgf(b)
    rho = noise.mgf(2.0 * b) / mgf ** 2
    xz = _expect(noise, lambda y: y * math.exp(b * y)) / mgf  # E xi Z
    # A-moments E[A^f A^g] and E[A^f B^g] per field kind: 0 u, 1 w_tilde, 2 Z-multiplied
    kinds = (0, 1, 2, 2)
    aa = np.array([[1.0, 1.0, 1.0], [1.0, 1.0 + b * b, 1.0 + b * xz], [1.0, 1.0 + b * xz, rho]])
    eab = np.array([[0.0, 0.0, 0.0], [b * b, 0.0, 0.0], [b * xz, 0.0, 0.0]])  # E[A^f B^g]
    dk = diff_walk(kernel)
    lo, hi = _diff_window(dk, n)
    size = hi - lo + 1
    lo_s, hi_s = dk.span
    step2 = np.zeros(hi_s - lo_s + 1)
    step2[dk.offsets - lo_s] = dk.probs
    lo_k, hi_k = kernel.span
    step1 = np.zeros(hi_k - lo_k + 1)
    step1[kernel.offsets - lo_k] = kernel.probs
    pad = max(-lo_s, hi_s, -lo_k, hi_k)
    centre = pad - lo
    G = {}
    for f in range(4):
        for g in range(f, 4):
            c = np.ones(size + 2 * pad)
            if f == g == 3:
                c[centre] = rho
            G[f, g] = c
    for _ in range(n):
        new = {}
        for (f, g), c in G.items():
            kf, kg = kinds[f], kinds[g]
            both = np.convolve(c, step2, mode="same")
            one = float(np.dot(step1[::-1], c[centre + lo_k:centre + hi_k + 1]))  # sum_o p(o) G(-o)
            nxt = np.ones_like(c)
            nxt[pad:pad + size] = both[pad:pad + size]
            diag = aa[kf, kg] * both[centre] + (eab[kf, kg] + eab[kg, kf]) * one
            if kf == 0 and kg == 0:
                diag += b * b * c[centre]
            nxt[centre] = diag
            new[f, g] = nxt
        G = new
    m = {k: v[centre] for k, v in G.items()}
    out = {}
    for f, g in ((0, 1), (1, 2), (2, 3)):
        out[f"{FIELD_NAMES[f]}-{FIELD_NAMES[g]}"] = float(m[f, f] + m[g, g] - 2.0 * m[f, g])
    return out
