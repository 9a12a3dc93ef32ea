"""Discrete stochastic heat equation on a truncated lattice window.

    u_{i+1}(k) = sum_l P(l - k) u_i(l) + sigma(u_i(k)) xi_i(k) n^{-(alpha-1)/(2 alpha)} [+ b(u_i(k)) / n]

The hot loops are numba kernels that regenerate the driving noise from the
counter-based streams in :mod:`lattice_she.noise`, so a replica is a pure
function of (seed, experiment, replica id).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .continuum_ref import noise_scale, return_probabilities
from .errors import NumericalGuardError, PreconditionError
from .stats import bootstrap_ci, loglog_fit
from .noise import (CHANNEL_BOOTSTRAP, CHANNEL_DRIVING, CHANNEL_INITIAL, NoiseModel,
                    fill_noise_row, stream_key, stream_keys)
from .walk_kernel import WalkKernel, default_window, nstep_pmf

BLOWUP_GUARD = 1e12
DEFAULT_ESCAPE = 1e-8

__all__ = [
    "NoiseModel", "Nonlinearity", "InitialProfile", "SHEConfig", "LatticeField", "Ensemble",
    "step", "solve", "solve_ensemble", "picard_solve", "contraction_delta", "scaled_field",
    "moment_estimate", "holder_statistics", "harness_transform", "simulate_harness",
    "lattice_floor", "resolve_window",
]


def lattice_floor(v: float) -> int:
    """floor(v), snapping values within 1e-9 of an integer to it first.

    Keeps e.g. floor(100 * 0.29) at 29 despite binary rounding.
    """
    r = round(v)
    if abs(v - r) < 1e-9:
        return int(r)
    return math.floor(v)


# ---------------------------------------------------------------------------
# nonlinearities

_NONLIN_CODES = {
    "zero": 0, "one": 1, "identity": 2, "scaled-identity": 3, "clipped-linear": 4, "bounded-sine": 5,
}


@dataclass(frozen=True)
class Nonlinearity:
    """A Lipschitz function from the catalog; ``beta`` scales, ``cap`` clips."""

    name: str = "zero"
    beta: float = 1.0
    cap: float = 1.0

    def __post_init__(self):
        if self.name not in _NONLIN_CODES:
            raise PreconditionError(f"unknown nonlinearity {self.name!r}")

    @property
    def code(self) -> int:
        return _NONLIN_CODES[self.name]

    @property
    def lip(self) -> float:
        return {0: 0.0, 1: 0.0, 2: 1.0}.get(self.code, abs(self.beta))

    def __call__(self, x):
        return _nonlin_np(self.code, self.beta, self.cap, np.asarray(x, dtype=np.float64))

    def describe(self) -> dict:
        return {"name": self.name, "beta": self.beta, "cap": self.cap}


def _nonlin_np(code, beta, cap, x):
    if code == 0:
        return np.zeros_like(x)
    if code == 1:
        return np.ones_like(x)
    if code == 2:
        return x.copy()
    if code == 3:
        return beta * x
    if code == 4:
        return np.clip(beta * x, -cap, cap)
    return beta * np.sin(x)


@nb.njit(inline="always", cache=True)
def _nonlin(code, beta, cap, x):
    if code == 0:
        return 0.0
    if code == 1:
        return 1.0
    if code == 2:
        return x
    if code == 3:
        return beta * x
    if code == 4:
        y = beta * x
        return cap if y > cap else (-cap if y < -cap else y)
    return beta * math.sin(x)


# ---------------------------------------------------------------------------
# initial profiles


@dataclass(frozen=True)
class InitialProfile:
    """Initial data u_0 on the lattice.

    ``variant`` is one of ``constant``, ``scaled-function``, ``dirac`` or
    ``random-increments``. The random variant draws i.i.d. increments
    sqrt(lam) * eta from its own stream, independent of the driving noise.
    """

    variant: str = "constant"
    value: float = 0.0
    function: Callable | None = None
    eta: NoiseModel | None = None
    lam: float = 1.0

    def __post_init__(self):
        if self.variant not in ("constant", "scaled-function", "dirac", "random-increments"):
            raise PreconditionError(f"unknown initial profile {self.variant!r}")
        if self.variant == "scaled-function" and self.function is None:
            raise PreconditionError("scaled-function profile needs a callable")
        if self.variant == "random-increments" and self.lam <= 0:
            raise PreconditionError("increment variance must be positive")

    @property
    def is_random(self) -> bool:
        return self.variant == "random-increments"

    def layer(self, n: int, alpha: float, sites: np.ndarray, key=None) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        if self.variant == "constant":
            return np.full(sites.size, float(self.value))
        if self.variant == "scaled-function":
            return np.asarray(self.function(sites / n ** (1.0 / alpha)), dtype=np.float64) * np.ones(sites.size)
        if self.variant == "dirac":
            return np.where(sites == 0, n ** (1.0 / alpha), 0.0)
        if alpha != 2.0:
            raise PreconditionError("random-increment profiles are defined for alpha = 2")
        return n ** -0.25 * increment_path(self.eta or NoiseModel("gaussian"), self.lam, key, sites)

    def describe(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "constant":
            out["value"] = self.value
        if self.variant == "random-increments":
            out["eta"] = (self.eta or NoiseModel("gaussian")).describe()
            out["lambda"] = self.lam
        return out


def increment_path(eta: NoiseModel, lam: float, key, sites: np.ndarray) -> np.ndarray:
    """S(0) = 0, S(l) = sum_{k=1}^l eta(k) for l > 0, S(l) = -sum_{k=l+1}^0 eta(k) for l < 0."""
    lo, hi = int(min(sites.min(), 0)), int(max(sites.max(), 0))
    draws = math.sqrt(lam) * eta.sample(key, (0, 1), (lo, hi + 1))[0]
    path = np.zeros(hi - lo + 1)
    origin = -lo
    path[origin + 1:] = np.cumsum(draws[origin + 1:])
    path[:origin] = -np.cumsum(draws[1:origin + 1][::-1])[::-1]
    return path[sites - lo]


# ---------------------------------------------------------------------------
# configuration and fields


@dataclass(frozen=True, eq=False)
class SHEConfig:
    kernel: WalkKernel
    noise: NoiseModel = field(default_factory=NoiseModel)
    sigma: Nonlinearity = field(default_factory=Nonlinearity)
    drift: Nonlinearity | None = None
    n: int = 64
    T: float = 1.0
    initial: InitialProfile = field(default_factory=InitialProfile)
    window: tuple[int, int] | None = None
    seed: int = 0
    experiment: str = "she"
    escape_tol: float = DEFAULT_ESCAPE

    def __post_init__(self):
        if self.n < 4:
            raise PreconditionError("n must be at least 4")
        if self.T < 0:
            raise PreconditionError("T must be nonnegative")

    @property
    def steps(self) -> int:
        return lattice_floor(self.n * self.T)

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def scale(self) -> float:
        return noise_scale(self.n, self.kernel.alpha)

    def describe(self) -> dict:
        return {
            "kernel": self.kernel.describe(),
            "noise": self.noise.describe(),
            "sigma": self.sigma.describe(),
            "drift": None if self.drift is None else self.drift.describe(),
            "n": self.n,
            "T": self.T,
            "initial": self.initial.describe(),
            "window": None if self.window is None else list(self.window),
            "seed": self.seed,
            "experiment": self.experiment,
        }


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Retained layers u_i(k) of one realization on the window [lo, lo + width)."""

    n: int
    alpha: float
    mu: float
    lo: int
    steps: np.ndarray
    layers: np.ndarray
    escape_mass: float = 0.0

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + self.layers.shape[1])

    def layer(self, i: int) -> np.ndarray:
        hit = np.nonzero(self.steps == i)[0]
        if hit.size == 0:
            raise PreconditionError(f"layer {i} was not retained")
        return self.layers[hit[0]]

    def value(self, i: int, k: int) -> float:
        j = k - self.lo
        if not 0 <= j < self.layers.shape[1]:
            raise PreconditionError(f"site {k} outside window [{self.lo}, {self.lo + self.layers.shape[1] - 1}]")
        return float(self.layer(i)[j])


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Observed values across replicas: ``values[r, a, b]`` is u at steps[a], sites[b]."""

    steps: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    status: np.ndarray
    window: tuple[int, int]
    escape_mass: float

    @property
    def ok(self) -> np.ndarray:
        return self.status == 0

    @property
    def excluded(self) -> int:
        return int((~self.ok).sum())

    def at(self, step: int, site: int) -> np.ndarray:
        a = int(np.nonzero(self.steps == step)[0][0])
        b = int(np.nonzero(self.sites == site)[0][0])
        return self.values[self.ok, a, b]


def resolve_window(config: SHEConfig, obs_lo: int, obs_hi: int, steps: int | None = None):
    """Window containing every site the observation region can feel by ``steps``.

    Returns (lo, hi, escape) where escape bounds the probability that the walk
    from an observed site ends outside the window.
    """
    steps = config.steps if steps is None else steps
    if config.window is not None:
        lo, hi = config.window
        if not (lo <= obs_lo and obs_hi <= hi):
            raise PreconditionError("observation sites fall outside the configured window")
    else:
        if steps == 0:
            return obs_lo, obs_hi, 0.0
        wlo, whi = default_window(config.kernel, steps, config.escape_tol * 1e-2)
        pad = max(abs(config.kernel.span[0]), abs(config.kernel.span[1]))
        lo = obs_lo + min(wlo, 0) - pad
        hi = obs_hi + max(whi, 0) + pad
    if steps == 0:
        return lo, hi, 0.0
    reach = nstep_pmf(config.kernel, steps, (lo - obs_lo, hi - obs_hi), escape_tol=1.0)
    escape = reach.escaped
    if escape > config.escape_tol:
        raise PreconditionError(f"window [{lo}, {hi}] leaks mass {escape:.2e} by step {steps}")
    return int(lo), int(hi), float(escape)


# ---------------------------------------------------------------------------
# numba kernels


@nb.njit(nogil=True, cache=True)
def _convolve_absorbing(u, offsets, probs, lo_off, hi_off, out):
    # out[w] = sum_j probs[j] u[w + offsets[j]], treating sites outside the window as 0
    W = u.shape[0]
    for w in range(W):
        if w + lo_off >= 0 and w + hi_off < W:
            acc = 0.0
            for j in range(offsets.shape[0]):
                acc += probs[j] * u[w + offsets[j]]
        else:
            acc = 0.0
            for j in range(offsets.shape[0]):
                v = w + offsets[j]
                if v >= 0 and v < W:
                    acc += probs[j] * u[v]
        out[w] = acc


@nb.njit(nogil=True, cache=True)
def _evolve_one(u, lo, offsets, probs, key, ncode, nparam, scode, sb, sc, dcode, db, dc,
                scale, inv_n, n_steps, retain, out_sites, out, guard):
    W = u.shape[0]
    new = np.empty(W)
    xi = np.zeros(W)
    lo_off, hi_off = offsets.min(), offsets.max()
    r = 0
    for i in range(n_steps + 1):
        while r < retain.shape[0] and retain[r] == i:
            for b in range(out_sites.shape[0]):
                out[r, b] = u[out_sites[b]]
            r += 1
        if i == n_steps:
            break
        _convolve_absorbing(u, offsets, probs, lo_off, hi_off, new)
        if scode != 0:
            fill_noise_row(ncode, nparam, key, i, lo, xi)
        for w in range(W):
            acc = new[w]
            if scode != 0:
                acc += _nonlin(scode, sb, sc, u[w]) * xi[w] * scale
            if dcode != 0:
                acc += _nonlin(dcode, db, dc, u[w]) * inv_n
            if not abs(acc) <= guard:
                return i + 1
            new[w] = acc
        for w in range(W):
            u[w] = new[w]
    return 0


@nb.njit(nogil=True, cache=True)
def _evolve_batch(U0, lo, offsets, probs, keys, ncode, nparam, scode, sb, sc, dcode, db, dc,
                  scale, inv_n, n_steps, retain, out_sites, out, status, guard):
    for r in range(U0.shape[0]):
        u = U0[r].copy()
        status[r] = _evolve_one(u, lo, offsets, probs, keys[r], ncode, nparam, scode, sb, sc,
                                dcode, db, dc, scale, inv_n, n_steps, retain, out_sites, out[r], guard)


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("LATTICE_SHE_THREADS", "1"))
    return max(1, int(threads))


def _run_chunks(fn, total: int, threads: int, chunk: int = 64):
    """Call fn(start, stop) over replica ranges, optionally on a thread pool."""
    ranges = [(s, min(total, s + chunk)) for s in range(0, total, chunk)]
    if threads == 1 or len(ranges) == 1:
        for a, b in ranges:
            fn(a, b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda ab: fn(*ab), ranges))


def _kernel_arrays(config: SHEConfig):
    drift = config.drift or Nonlinearity("zero")
    return (
        np.ascontiguousarray(config.kernel.offsets, dtype=np.int64),
        np.ascontiguousarray(config.kernel.probs, dtype=np.float64),
        config.noise.code,
        config.noise.param,
        config.sigma.code,
        float(config.sigma.beta),
        float(config.sigma.cap),
        drift.code,
        float(drift.beta),
        float(drift.cap),
        float(config.scale),
        1.0 / config.n,
    )


def _initial_layers(config: SHEConfig, sites: np.ndarray, replica_ids: np.ndarray) -> np.ndarray:
    if config.initial.is_random:
        keys = stream_keys(config.seed, config.experiment, replica_ids, CHANNEL_INITIAL)
        return np.stack([config.initial.layer(config.n, config.alpha, sites, k) for k in keys])
    row = config.initial.layer(config.n, config.alpha, sites)
    return np.broadcast_to(row, (replica_ids.size, sites.size))


# ---------------------------------------------------------------------------
# public solvers


def step(layer: np.ndarray, config: SHEConfig, noise_row: np.ndarray) -> np.ndarray:
    """One update of a window layer given an explicit noise row (absorbing edges)."""
    u = np.asarray(layer, dtype=np.float64)
    W = u.size
    acc = np.zeros(W)
    for o, p in zip(config.kernel.offsets, config.kernel.probs):
        if o >= 0:
            acc[:W - o] += p * u[o:]
        else:
            acc[-o:] += p * u[:W + o]
    acc = acc + config.sigma(u) * np.asarray(noise_row) * config.scale
    if config.drift is not None:
        acc = acc + config.drift(u) / config.n
    if not np.all(np.abs(acc) <= BLOWUP_GUARD):
        raise NumericalGuardError("non-finite or exploding value in step")
    return acc


def solve(config: SHEConfig, replica: int = 0, retain="all", obs=(0, 0)) -> LatticeField:
    """Evolve one replica for [nT] steps and keep the requested layers."""
    n_steps = config.steps
    lo, hi, escape = resolve_window(config, obs[0], obs[1])
    sites = np.arange(lo, hi + 1)
    if isinstance(retain, str):
        retain_steps = np.arange(n_steps + 1) if retain == "all" else np.array([n_steps])
    else:
        retain_steps = np.unique(np.asarray(retain, dtype=np.int64))
    if retain_steps.size and (retain_steps.min() < 0 or retain_steps.max() > n_steps):
        raise PreconditionError("retained steps outside [0, [nT]]")
    ids = np.array([replica])
    U0 = np.ascontiguousarray(_initial_layers(config, sites, ids), dtype=np.float64)
    keys = stream_keys(config.seed, config.experiment, ids, CHANNEL_DRIVING)
    out = np.zeros((1, retain_steps.size, sites.size))
    status = np.zeros(1, dtype=np.int64)
    arrs = _kernel_arrays(config)
    _evolve_batch(U0, lo, arrs[0], arrs[1], keys, *arrs[2:], n_steps, retain_steps.astype(np.int64),
                  np.arange(sites.size, dtype=np.int64), out, status, BLOWUP_GUARD)
    if status[0]:
        raise NumericalGuardError(f"replica {replica} exceeded |u| > {BLOWUP_GUARD:g} at step {status[0]}")
    return LatticeField(config.n, config.alpha, config.kernel.mu, lo, retain_steps, out[0], escape)


def solve_ensemble(config: SHEConfig, replicas: int, steps: Sequence[int], sites: Sequence[int],
                   threads: int | None = None, first_replica: int = 0,
                   guard_sites: Sequence[int] | None = None) -> Ensemble:
    """Run independent replicas and record u at the given steps and sites.

    The window must keep the walk from every site in ``guard_sites``
    (default: all recorded sites) inside with the configured tolerance; other
    recorded sites may sit near the absorbing edge.
    """
    steps = np.unique(np.asarray(steps, dtype=np.int64))
    sites = np.asarray(sites, dtype=np.int64)
    n_steps = int(steps.max())
    if steps.min() < 0:
        raise PreconditionError("negative step requested")
    guard = sites if guard_sites is None else np.asarray(guard_sites, dtype=np.int64)
    lo, hi, escape = resolve_window(config, int(guard.min()), int(guard.max()), n_steps)
    if sites.min() < lo or sites.max() > hi:
        raise PreconditionError("recorded sites fall outside the simulation window")
    window_sites = np.arange(lo, hi + 1)
    out_idx = (sites - lo).astype(np.int64)
    ids = np.arange(first_replica, first_replica + replicas)
    keys = stream_keys(config.seed, config.experiment, ids, CHANNEL_DRIVING)
    values = np.zeros((replicas, steps.size, sites.size))
    status = np.zeros(replicas, dtype=np.int64)
    arrs = _kernel_arrays(config)

    def work(a, b):
        U0 = np.ascontiguousarray(_initial_layers(config, window_sites, ids[a:b]), dtype=np.float64)
        _evolve_batch(U0, lo, arrs[0], arrs[1], keys[a:b], *arrs[2:], n_steps, steps, out_idx,
                      values[a:b], status[a:b], BLOWUP_GUARD)

    _run_chunks(work, replicas, _threads(threads))
    return Ensemble(steps, sites, values, status, (lo, hi), escape)


def scaled_field(field: LatticeField, t: float, x: float) -> float:
    """u_[nt]([x n^{1/alpha}] - [mu n t]) with each floor taken separately."""
    i = lattice_floor(field.n * t)
    k = lattice_floor(x * field.n ** (1.0 / field.alpha)) - lattice_floor(field.mu * field.n * t)
    return field.value(i, k)


def scaled_index(n: int, alpha: float, mu: float, t: float, x: float) -> tuple[int, int]:
    return (lattice_floor(n * t),
            lattice_floor(x * n ** (1.0 / alpha)) - lattice_floor(mu * n * t))


# ---------------------------------------------------------------------------
# Picard iteration


@nb.njit(nogil=True, cache=True)
def _picard_one(u0, lo, offsets, probs, key, ncode, nparam, scode, sb, sc, dcode, db, dc,
                scale, inv_n, n_steps, p_max, obs, out):
    # out[p - 1, i, b] = (w^(p)_i - w^(p-1)_i)^2 at observed site b
    W = u0.shape[0]
    Z = np.empty((p_max + 1, W))
    new = np.empty((p_max + 1, W))
    xi = np.empty(W)
    lo_off, hi_off = offsets.min(), offsets.max()
    for p in range(p_max + 1):
        Z[p] = u0
    for i in range(n_steps + 1):
        for p in range(1, p_max + 1):
            for b in range(obs.shape[0]):
                d = Z[p, obs[b]] - Z[p - 1, obs[b]]
                out[p - 1, i, b] = d * d
        if i == n_steps:
            break
        fill_noise_row(ncode, nparam, key, i, lo, xi)
        new[0] = u0
        for p in range(1, p_max + 1):
            _convolve_absorbing(Z[p], offsets, probs, lo_off, hi_off, new[p])
            for w in range(W):
                prev = Z[p - 1, w]
                acc = new[p, w] + _nonlin(scode, sb, sc, prev) * xi[w] * scale
                if dcode != 0:
                    acc += _nonlin(dcode, db, dc, prev) * inv_n
                new[p, w] = acc
        for p in range(p_max + 1):
            for w in range(W):
                Z[p, w] = new[p, w]


@nb.njit(nogil=True, cache=True)
def _picard_batch(U0, lo, offsets, probs, keys, ncode, nparam, scode, sb, sc, dcode, db, dc,
                  scale, inv_n, n_steps, p_max, obs, out):
    for r in range(U0.shape[0]):
        _picard_one(U0[r], lo, offsets, probs, keys[r], ncode, nparam, scode, sb, sc, dcode, db, dc,
                    scale, inv_n, n_steps, p_max, obs, out[r])


def contraction_sum(kernel: WalkKernel, n: int, T: float, delta: float, lip_b: float = 0.0) -> float:
    """sum_{i<=[nT]} e^{-delta i/n} (P(X_i = X'_i) Lip_sigma-part / n^{(alpha-1)/alpha}) (+ drift part)."""
    N = lattice_floor(n * T)
    q = return_probabilities(kernel, N)
    w = np.exp(-delta * np.arange(N + 1) / n)
    out = float(np.dot(w, q) * noise_scale(n, kernel.alpha) ** 2)
    return out


def contraction_delta(kernel: WalkKernel, n: int, T: float, lip_sigma: float, lip_b: float = 0.0) -> float:
    """Smallest delta (to 1e-6 relative) with Lip_s^2 S_sigma + Lip_b^2 S_b < 1/2."""
    if lip_sigma == 0 and lip_b == 0:
        return 0.0
    N = lattice_floor(n * T)
    q = return_probabilities(kernel, N) * noise_scale(n, kernel.alpha) ** 2
    idx = np.arange(N + 1) / n

    def total(d):
        w = np.exp(-d * idx)
        return lip_sigma ** 2 * np.dot(w, q) + lip_b ** 2 * w.sum() / n

    if total(0.0) < 0.5:
        return 0.0
    lo, hi = 0.0, 1.0
    while total(hi) >= 0.5:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalGuardError("no delta achieves the contraction condition")
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if total(mid) < 0.5 else (mid, hi)
    return hi


@dataclass(frozen=True, eq=False)
class PicardReport:
    delta: float
    contraction: float
    w_squared: np.ndarray  # sup_{k,i} e^{-delta i/n} E|w^(p) - w^(p-1)|^2, p = 1..p_max
    profile: np.ndarray  # e^{-delta i/n} E|.|^2 per (p, i, site)

    @property
    def w(self) -> np.ndarray:
        return np.sqrt(self.w_squared)

    def ratios(self, squared: bool = True) -> np.ndarray:
        """W^2(p+1)/W^2(p) (or the square-root version) for p = 1..p_max-1."""
        v = self.w_squared if squared else self.w
        with np.errstate(divide="ignore", invalid="ignore"):
            return v[1:] / v[:-1]


def picard_solve(config: SHEConfig, p_max: int, replicas: int, delta: float | None = None,
                 sites: Sequence[int] = (0,), threads: int | None = None) -> PicardReport:
    """Monte Carlo estimate of the Picard distance functional.

    All iterates of one replica share the same noise (common random numbers).
    ``delta`` defaults to the smallest value meeting the contraction rule.
    """
    import warnings

    if p_max < 2:
        raise PreconditionError("p_max must be at least 2")
    lip_b = 0.0 if config.drift is None else config.drift.lip
    if delta is None:
        delta = contraction_delta(config.kernel, config.n, config.T, config.sigma.lip, lip_b)
    contraction = config.sigma.lip ** 2 * contraction_sum(config.kernel, config.n, config.T, delta)
    if contraction >= 0.5:
        warnings.warn(f"contraction sum {contraction:.3f} >= 1/2; Picard convergence not guaranteed")
    n_steps = config.steps
    sites = np.asarray(sites, dtype=np.int64)
    lo, hi, _ = resolve_window(config, int(sites.min()), int(sites.max()))
    window_sites = np.arange(lo, hi + 1)
    ids = np.arange(replicas)
    keys = stream_keys(config.seed, config.experiment, ids, CHANNEL_DRIVING)
    out = np.zeros((replicas, p_max, n_steps + 1, sites.size))
    arrs = _kernel_arrays(config)
    obs = (sites - lo).astype(np.int64)

    def work(a, b):
        U0 = np.ascontiguousarray(_initial_layers(config, window_sites, ids[a:b]), dtype=np.float64)
        _picard_batch(U0, lo, arrs[0], arrs[1], keys[a:b], *arrs[2:], n_steps, p_max, obs, out[a:b])

    _run_chunks(work, replicas, _threads(threads), chunk=16)
    weight = np.exp(-delta * np.arange(n_steps + 1) / config.n)
    profile = out.mean(axis=0) * weight[None, :, None]
    w_sq = profile.reshape(p_max, -1).max(axis=1)
    return PicardReport(float(delta), float(contraction), w_sq, profile)


# ---------------------------------------------------------------------------
# Monte Carlo statistics


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    ci_low: float
    ci_high: float
    stderr: float
    replicas: int
    excluded: int


def moment_estimate(config: SHEConfig, t: float, x: float, order: int, replicas: int,
                    threads: int | None = None, level: float = 0.95) -> MomentEstimate:
    """E|u_bar_t(x)|^order by Monte Carlo with a bootstrap interval."""
    if order < 1:
        raise PreconditionError("moment order must be positive")
    if order > 2 + config.noise.kappa:
        raise PreconditionError("moment order exceeds 2 + kappa")
    if replicas < 100:
        raise PreconditionError("at least 100 replicas are required")
    i, k = scaled_index(config.n, config.alpha, config.kernel.mu, t, x)
    if i > config.steps:
        raise PreconditionError("t exceeds T")
    ens = solve_ensemble(config, replicas, [i], [k], threads)
    vals = np.abs(ens.at(i, k)) ** order
    key = int(stream_key(config.seed, config.experiment, 0, CHANNEL_BOOTSTRAP))
    lo, hi = bootstrap_ci(vals, level=level, seed=key)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return MomentEstimate(float(vals.mean()), lo, hi, se, int(vals.size), ens.excluded)


@dataclass(frozen=True, eq=False)
class HolderReport:
    separations: np.ndarray
    spatial: np.ndarray
    lags: np.ndarray
    temporal: np.ndarray
    spatial_exponent: float
    spatial_stderr: float
    temporal_exponent: float
    temporal_stderr: float


def holder_statistics(config: SHEConfig, t: float, x: float, separations: Sequence[float],
                      lags: Sequence[float], replicas: int, order: int = 2,
                      threads: int | None = None) -> HolderReport:
    """Empirical ||u_bar_t(x+h) - u_bar_t(x)||^order and ||u_bar_t(x) - u_bar_{t-s}(x)||^order.

    Separations ``h`` and lags ``s`` are in macroscopic units; each must be at
    least one lattice cell. Exponents come from log-log fits of the
    ``order``-th powers (order 2 gives the squared-norm exponents).
    """
    n, a, mu = config.n, config.alpha, config.kernel.mu
    i0, k0 = scaled_index(n, a, mu, t, x)
    cell = n ** (-1.0 / a)
    if min(separations) < cell or min(lags) < 1.0 / n:
        raise PreconditionError("separations must be at least one lattice cell")
    pts = [(i0, k0)]
    pts += [scaled_index(n, a, mu, t, x + h) for h in separations]
    pts += [scaled_index(n, a, mu, t - s, x) for s in lags]
    steps = sorted({p[0] for p in pts})
    sites = sorted({p[1] for p in pts})
    ens = solve_ensemble(config, replicas, steps, sites, threads)
    base = ens.at(i0, k0)
    spatial = np.array([np.mean(np.abs(ens.at(*scaled_index(n, a, mu, t, x + h)) - base) ** order)
                        for h in separations])
    temporal = np.array([np.mean(np.abs(base - ens.at(*scaled_index(n, a, mu, t - s, x))) ** order)
                         for s in lags])
    se, se_err = loglog_fit(separations, spatial)
    te, te_err = loglog_fit(lags, temporal)
    return HolderReport(np.asarray(separations, float), spatial, np.asarray(lags, float), temporal,
                        se, se_err, te, te_err)


# ---------------------------------------------------------------------------
# harness process


def harness_transform(h: np.ndarray, rho0: float, mu: float, n: int, lo: int, steps=None) -> LatticeField:
    """u_i(k) = n^{-1/4} (h_i(k) - rho0 mu i - rho0 k) for layers h[i] on sites lo, lo+1, ..."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    steps = np.arange(h.shape[0]) if steps is None else np.asarray(steps)
    sites = np.arange(lo, lo + h.shape[1])
    u = n ** -0.25 * (h - rho0 * mu * steps[:, None] - rho0 * sites[None, :])
    return LatticeField(n, 2.0, mu, lo, steps, u)


def simulate_harness(kernel: WalkKernel, eta: NoiseModel, noise: NoiseModel, rho0: float, lam: float,
                     n: int, T: float, replicas: int, site: int = 0, seed: int = 0,
                     experiment: str = "harness", threads: int | None = None,
                     escape_tol: float = DEFAULT_ESCAPE):
    """Run h_{i+1}(k) = sum_l P(k,l) h_i(l) + xi_i(k) and return the transformed u at ([nT], site).

    h_0(l) = rho0 l + S(l) with S built from sqrt(lam) eta as in :func:`increment_path`.
    """
    cfg = SHEConfig(kernel, noise, Nonlinearity("one"), None, n, T,
                    InitialProfile("random-increments", eta=eta, lam=lam), seed=seed,
                    experiment=experiment, escape_tol=escape_tol)
    N = cfg.steps
    lo, hi, escape = resolve_window(cfg, site, site)
    sites = np.arange(lo, hi + 1)
    ids = np.arange(replicas)
    ikeys = stream_keys(seed, experiment, ids, CHANNEL_INITIAL)
    keys = stream_keys(seed, experiment, ids, CHANNEL_DRIVING)
    out = np.zeros((replicas, 1, 1))
    status = np.zeros(replicas, dtype=np.int64)
    hk = replace(cfg, sigma=Nonlinearity("one"))
    arrs = list(_kernel_arrays(hk))
    arrs[-2] = 1.0  # the harness noise enters unscaled

    def work(a, b):
        H0 = np.stack([rho0 * sites + increment_path(eta, lam, k, sites) for k in ikeys[a:b]])
        _evolve_batch(np.ascontiguousarray(H0), lo, arrs[0], arrs[1], keys[a:b], *arrs[2:], N,
                      np.array([N], dtype=np.int64), np.array([site - lo], dtype=np.int64),
                      out[a:b], status[a:b], math.inf)

    _run_chunks(work, replicas, _threads(threads))
    h_final = out[:, 0, 0]
    u = n ** -0.25 * (h_final - rho0 * kernel.mu * N - rho0 * site)
    return u, escape


def initial_term_variance(kernel: WalkKernel, n: int, steps: int, site: int, lam: float) -> float:
    """Exact Var of sum_l P_steps(l - site) u_0(l) for the random-increment profile."""
    pm = nstep_pmf(kernel, steps)
    ends = pm.sites + site
    p = pm.values
    coef = []
    for k in range(int(min(ends.min(), 0)), int(max(ends.max(), 0)) + 1):
        # eta(k) enters u_0(l) for l >= k >= 1 and for l < k <= 0
        hit = ends >= k if k >= 1 else ends < k
        coef.append(p[hit].sum())
    c = np.array(coef)
    return float(lam * n ** -0.5 * np.dot(c, c))
