"""Coarse graining of the lattice noise and its quantile coupling to white noise.

Blocks are [n^theta] time steps by [n^gamma] sites. Each block sum zeta of
scaled noise is paired with a Gaussian block integral W through

    zeta = F^{-1}(Phi(Z)),   Z = n^{1/alpha} W / sd(zeta),

where F is the law of the standardized block sum. Two directions are offered:

* :func:`quantile_couple` draws Z first and maps it to zeta (law level);
* :func:`couple_from_sums` starts from block sums of an actual noise field
  and draws Z from its conditional law given zeta (a randomized probability
  integral transform). The pair (zeta, Z) has the same joint law either way,
  and the underlying xi is conditionally independent of W given zeta, which
  is what lets the coarse fields below share noise with a simulated u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba as nb
import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr, ndtri

from .continuum_ref import noise_scale
from .errors import PreconditionError
from .noise import (CHANNEL_COUPLING, CHANNEL_DRIVING, NoiseModel, fill_noise_row, normal_quantile,
                    stream_key, stream_keys, uniform_cell)
from .she_solver import SHEConfig, lattice_floor, resolve_window, solve_ensemble
from .stable_density import StableLaw, density
from .walk_kernel import WalkKernel, fit_stable_params, nstep_pmf

EMPIRICAL_SAMPLES = 1_000_000
DEFAULT_THETA, DEFAULT_GAMMA = 0.4, 0.08


# ---------------------------------------------------------------------------
# block geometry


@dataclass(frozen=True)
class BlockGrid:
    """Partition of time x space into blocks of ``time_block`` x ``space_block`` cells."""

    n: int
    theta: float
    gamma: float
    alpha: float
    time_block: int
    space_block: int

    @classmethod
    def admissible(cls, n: int, kernel: WalkKernel, theta: float = DEFAULT_THETA,
                   gamma: float = DEFAULT_GAMMA) -> "BlockGrid":
        """Build a grid after checking the exponent constraints for ``kernel``."""
        alpha, a = kernel.alpha, kernel.a
        problems = []
        if not 0.0 < gamma < theta < 1.0 / alpha:
            problems.append(f"need 0 < gamma < theta < 1/alpha = {1 / alpha:.4f}")
        if not theta + gamma < min(a, alpha - 1.0) / alpha:
            problems.append(f"theta + gamma = {theta + gamma:.4f} >= min(a, alpha-1)/alpha = "
                            f"{min(a, alpha - 1.0) / alpha:.4f}")
        if not gamma < min(alpha - 1.0, 1.0 / alpha) * theta:
            problems.append(f"gamma >= {min(alpha - 1.0, 1.0 / alpha) * theta:.4f}")
        if problems:
            raise PreconditionError("inadmissible block exponents: " + "; ".join(problems))
        return cls(n, theta, gamma, alpha, lattice_floor(n ** theta), lattice_floor(n ** gamma))

    @classmethod
    def explicit(cls, n: int, alpha: float, time_block: int, space_block: int) -> "BlockGrid":
        """Grid with hand-picked block sizes, bypassing the exponent constraints."""
        if time_block < 1 or space_block < 1:
            raise PreconditionError("block sizes must be positive")
        return cls(n, math.nan, math.nan, alpha, int(time_block), int(space_block))

    @property
    def cells(self) -> int:
        return self.time_block * self.space_block

    @property
    def zeta_sd(self) -> float:
        """Standard deviation of a block sum of scaled unit-variance noise."""
        return math.sqrt(self.cells) * noise_scale(self.n, self.alpha)

    @property
    def white_area(self) -> float:
        """Lebesgue measure of a rescaled block."""
        return self.cells / self.n ** (1.0 + 1.0 / self.alpha)

    def block_of(self, i: int, k: int) -> tuple[int, int]:
        return i // self.time_block, k // self.space_block

    def block_cells(self, j: int, l: int) -> tuple[range, range]:
        tb, sb = self.time_block, self.space_block
        return range(j * tb, (j + 1) * tb), range(l * sb, (l + 1) * sb)

    def rescaled_block(self, j: int, l: int) -> tuple[float, float, float, float]:
        tb, sb = self.time_block, self.space_block
        xs = self.n ** (1.0 / self.alpha)
        return j * tb / self.n, (j + 1) * tb / self.n, l * sb / xs, (l + 1) * sb / xs

    def full_blocks(self, lo: int, hi: int) -> tuple[int, int, int]:
        """(first block, number of blocks, partial blocks dropped) for sites lo..hi."""
        sb = self.space_block
        first = -(-lo // sb)
        last = (hi + 1) // sb - 1
        count = max(0, last - first + 1)
        partial = int(lo % sb != 0) + int((hi + 1) % sb != 0)
        return first, count, partial

    def shifts(self, blocks: int, mu: float) -> np.ndarray:
        """a_j with a_j [n^gamma] <= mu j [n^theta] < (a_j + 1) [n^gamma]."""
        j = np.arange(blocks)
        return np.array([lattice_floor(mu * jj * self.time_block / self.space_block) for jj in j],
                        dtype=np.int64)


# ---------------------------------------------------------------------------
# block sums


@dataclass(frozen=True, eq=False)
class BlockSums:
    values: np.ndarray  # (time blocks, space blocks)
    first_block: int
    excluded: int


def block_sums(noise: np.ndarray, grid: BlockGrid, first_site: int = 0) -> BlockSums:
    """zeta_j(l) = sum over B_j(l) of xi / n^{(alpha-1)/(2 alpha)}.

    ``noise[i, c]`` is xi_i(first_site + c) for rows i = 0, 1, ...; blocks
    that stick out of the array are dropped and counted.
    """
    noise = np.asarray(noise, dtype=np.float64)
    rows, width = noise.shape
    tb, sb = grid.time_block, grid.space_block
    J = rows // tb
    first, L, partial = grid.full_blocks(first_site, first_site + width - 1)
    start = first * sb - first_site
    core = noise[:J * tb, start:start + L * sb]
    sums = core.reshape(J, tb, L, sb).sum(axis=(1, 3)) * noise_scale(grid.n, grid.alpha)
    dropped_time = int(rows % tb != 0) * (L + partial)
    return BlockSums(sums, first, partial * J + dropped_time)


@nb.njit(nogil=True, cache=True)
def _stream_block_sums(code, param, key, J, tb, first_site, L, sb, scale, out):
    row = np.empty(L * sb)
    for j in range(J):
        for l in range(L):
            out[j, l] = 0.0
        for s in range(tb):
            fill_noise_row(code, param, key, j * tb + s, first_site, row)
            for l in range(L):
                acc = 0.0
                for c in range(sb):
                    acc += row[l * sb + c]
                out[j, l] += acc * scale


def stream_block_sums(noise: NoiseModel, key, grid: BlockGrid, time_blocks: int, first_block: int,
                      space_blocks: int) -> np.ndarray:
    """Block sums of the driving noise of one replica, regenerated from its stream key."""
    out = np.empty((time_blocks, space_blocks))
    _stream_block_sums(noise.code, noise.param, np.uint64(key), time_blocks, grid.time_block,
                       first_block * grid.space_block, space_blocks, grid.space_block,
                       noise_scale(grid.n, grid.alpha), out)
    return out


# ---------------------------------------------------------------------------
# laws of standardized block sums


@dataclass(frozen=True, eq=False)
class BlockSumLaw:
    """Law F of a standardized block sum Y (mean 0, variance 1).

    ``kind`` is ``gaussian`` (F = Phi), ``discrete`` (atoms with exact cdf)
    or ``empirical`` (sorted samples, linear interpolation).
    """

    kind: str
    support: np.ndarray | None = None
    cdf: np.ndarray | None = None

    def quantile(self, p):
        """F^{-1}(p) = sup{y : F(y) <= p}."""
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "gaussian":
            return ndtri(p)
        if self.kind == "discrete":
            idx = np.searchsorted(self.cdf, p, side="right")
            return self.support[np.minimum(idx, self.support.size - 1)]
        N = self.support.size
        pos = np.clip(p * N - 0.5, 0.0, N - 1.0)
        return np.interp(pos, np.arange(N), self.support)

    def bracket(self, y):
        """(F(y-), F(y)) at each y."""
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "gaussian":
            f = ndtr(y)
            return f, f
        if self.kind == "discrete":
            hi_idx = np.searchsorted(self.support, y, side="right") - 1
            lo_idx = np.searchsorted(self.support, y, side="left") - 1
            upper = np.where(hi_idx >= 0, self.cdf[np.maximum(hi_idx, 0)], 0.0)
            lower = np.where(lo_idx >= 0, self.cdf[np.maximum(lo_idx, 0)], 0.0)
            return lower, upper
        N = self.support.size
        f = (np.interp(y, self.support, np.arange(N)) + 0.5) / N
        return f, f


def block_sum_law(noise: NoiseModel, cells: int, seed: int = 0) -> BlockSumLaw:
    """Exact law for Gaussian and two-atom families, empirical (10^6 draws) otherwise."""
    if noise.family == "gaussian":
        return BlockSumLaw("gaussian")
    atoms = noise.atoms
    if atoms is not None:
        (down, up), (_, p) = atoms
        ups = np.arange(cells + 1)
        support = (ups * up + (cells - ups) * down) / math.sqrt(cells)
        cdf = stats.binom.cdf(ups, cells, p)
        cdf[-1] = 1.0
        return BlockSumLaw("discrete", support, cdf)
    key = stream_key(seed, f"block-law/{noise.family}/{cells}", 0, CHANNEL_COUPLING)
    draws = noise.sample(key, (0, EMPIRICAL_SAMPLES), (0, cells)).sum(axis=1) / math.sqrt(cells)
    return BlockSumLaw("empirical", np.sort(draws))


# ---------------------------------------------------------------------------
# coupling


@dataclass(frozen=True, eq=False)
class CoupledNoise:
    """Per-block pairs (zeta, W) on blocks [0, J) x [first_block, first_block + L)."""

    grid: BlockGrid
    zeta: np.ndarray
    white: np.ndarray
    first_block: int
    law: BlockSumLaw
    clamped: int = 0

    @property
    def scaled_white(self) -> np.ndarray:
        return self.grid.n ** (1.0 / self.grid.alpha) * self.white

    def shifts(self, mu: float) -> np.ndarray:
        return self.grid.shifts(self.zeta.shape[0], mu)


@nb.njit(nogil=True, cache=True)
def _block_normals(key, J, first_block, L, out):
    for j in range(J):
        for l in range(L):
            out[j, l] = normal_quantile(uniform_cell(key, j, first_block + l))


@nb.njit(nogil=True, cache=True)
def _block_uniforms(key, J, first_block, L, out):
    for j in range(J):
        for l in range(L):
            out[j, l] = uniform_cell(key, j, first_block + l)


def _clip_unit(p: np.ndarray) -> tuple[np.ndarray, int]:
    tiny = 1e-300
    bad = (p <= 0.0) | (p >= 1.0)
    return np.clip(p, tiny, 1.0 - 2.0 ** -53), int(bad.sum())


def quantile_couple(grid: BlockGrid, noise: NoiseModel, seed: int, time_blocks: int, space_blocks: int,
                    first_block: int = 0, replica: int = 0, experiment: str = "coupling",
                    law: BlockSumLaw | None = None) -> CoupledNoise:
    """Draw block integrals W and set zeta = sd * F^{-1}(Phi(Z))."""
    law = law or block_sum_law(noise, grid.cells, seed)
    key = stream_key(seed, experiment, replica, CHANNEL_COUPLING)
    Z = np.empty((time_blocks, space_blocks))
    _block_normals(key, time_blocks, first_block, space_blocks, Z)
    if law.kind == "gaussian":
        Y = Z.copy()
        clamped = 0
    else:
        p, clamped = _clip_unit(ndtr(Z))
        Y = law.quantile(p)
    sd = grid.zeta_sd
    W = Z * sd / grid.n ** (1.0 / grid.alpha)
    return CoupledNoise(grid, sd * Y, W, first_block, law, clamped)


def couple_from_sums(sums: BlockSums, grid: BlockGrid, law: BlockSumLaw, key) -> CoupledNoise:
    """Attach white-noise block integrals to given block sums.

    Z is drawn from its conditional law given zeta: Z = Phi^{-1}(F(y-) + U (F(y) - F(y-))).
    Gaussian sums give Z = y exactly.
    """
    sd = grid.zeta_sd
    Y = sums.values / sd
    J, L = Y.shape
    if law.kind == "gaussian":
        Z = Y.copy()
        clamped = 0
    else:
        U = np.empty((J, L))
        _block_uniforms(np.uint64(key), J, sums.first_block, L, U)
        lower, upper = law.bracket(Y)
        p, clamped = _clip_unit(lower + U * (upper - lower))
        Z = ndtri(p)
    W = Z * sd / grid.n ** (1.0 / grid.alpha)
    return CoupledNoise(grid, sums.values, W, sums.first_block, law, clamped)


def white_noise_rectangle(coupled: CoupledNoise, t0: float, t1: float, x0: float, x1: float,
                          key) -> float:
    """W(rectangle) consistent with the block integrals.

    Within a block the white noise is a Brownian sheet given its total, so a
    fraction f of the block carries f W_block plus an independent
    N(0, |block| f (1 - f)) term. Independent draws per call; repeated calls
    over overlapping rectangles are not jointly consistent.
    """
    g = coupled.grid
    area = g.white_area
    J, L = coupled.white.shape
    total = 0.0
    extra_var = 0.0
    for j in range(J):
        for l in range(L):
            b0, b1, y0, y1 = g.rescaled_block(j, coupled.first_block + l)
            ov = max(0.0, min(t1, b1) - max(t0, b0)) * max(0.0, min(x1, y1) - max(x0, y0))
            if ov <= 0:
                continue
            f = min(1.0, ov / area)
            total += f * coupled.white[j, l]
            extra_var += area * f * (1.0 - f)
    if extra_var > 0:
        total += math.sqrt(extra_var) * float(normal_quantile(uniform_cell(np.uint64(key), 0, 0)))
    return total


# ---------------------------------------------------------------------------
# coupling error


@dataclass(frozen=True)
class CouplingError:
    n: int
    order: float
    measured: float
    stderr: float
    exact: float
    bound: float


def coupling_error_exact(law: BlockSumLaw, order: float) -> float:
    """E|F^{-1}(Phi(Z)) - Z|^order for standard normal Z, by quadrature per atom or on the real line."""
    if law.kind == "gaussian":
        return 0.0
    if law.kind == "discrete":
        total = 0.0
        edges = np.concatenate([[0.0], law.cdf])
        for y, lo_p, hi_p in zip(law.support, edges[:-1], edges[1:]):
            if hi_p <= lo_p:
                continue
            lo_z = -np.inf if lo_p <= 0 else float(ndtri(lo_p))
            hi_z = np.inf if hi_p >= 1 else float(ndtri(hi_p))
            f = lambda z, y=y: abs(y - z) ** order * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            total += integrate.quad(f, lo_z, hi_z, limit=200, epsabs=1e-14)[0]
        return total
    f = lambda z: abs(float(law.quantile(ndtr(z))) - z) ** order * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return integrate.quad(f, -8.5, 8.5, limit=400)[0]


def coupling_bound(grid: BlockGrid, order: float, kappa: float) -> float:
    """n^{-m(alpha-1-alpha(theta+gamma))/alpha} n^{-(theta+gamma) min(1,kappa)/2}, 2m = order.

    theta + gamma is read off the actual block sizes.
    """
    n, a = grid.n, grid.alpha
    tg = math.log(grid.cells) / math.log(n)
    m = order / 2.0
    return n ** (-m * (a - 1.0 - a * tg) / a) * n ** (-tg * min(1.0, kappa) / 2.0)


def coupling_error(grid: BlockGrid, noise: NoiseModel, order: float = 2.0, samples: int = 1_000_000,
                   seed: int = 0) -> CouplingError:
    """Monte Carlo E|zeta' - n^{1/alpha} W'|^order over independent blocks, with the quadrature value."""
    if not 0 < order < 2.0 + noise.kappa:
        raise PreconditionError("order must lie in (0, 2 + kappa)")
    law = block_sum_law(noise, grid.cells, seed)
    side = int(math.ceil(math.sqrt(samples)))
    coupled = quantile_couple(grid, noise, seed, side, side, law=law)
    diff = np.abs(coupled.zeta - coupled.scaled_white).ravel()[:samples] ** order
    sd = grid.zeta_sd
    return CouplingError(grid.n, order, float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(diff.size)),
                         sd ** order * coupling_error_exact(law, order), coupling_bound(grid, order, noise.kappa))


# ---------------------------------------------------------------------------
# coarse fields


def _pmf_weights(kernel: WalkKernel, grid: BlockGrid, i: int, k: int, first_block: int, L: int) -> np.ndarray:
    """weights[j, l] = P_{(i-1-j)[n^theta]}((l - k)[n^gamma]) for j < i and window blocks l."""
    sites = (first_block + np.arange(L) - k) * grid.space_block
    out = np.zeros((i, L))
    for j in range(i):
        steps = (i - 1 - j) * grid.time_block
        lo, hi = int(sites.min()), int(sites.max())
        pm = nstep_pmf(kernel, steps, (lo, hi), escape_tol=1.0)
        out[j] = pm(sites)
    return out


def _density_weights(law: StableLaw, grid: BlockGrid, i: int, k: int, first_block: int, L: int,
                     shifts: np.ndarray) -> np.ndarray:
    """weights[j, l] = p_{(i-1-j)[n^theta]/n}((l - k - a_{i-1} + a_j)[n^gamma] / n^{1/alpha}) for j <= i-2."""
    out = np.zeros((i, L))
    xs = grid.n ** (1.0 / grid.alpha)
    l = first_block + np.arange(L)
    for j in range(i - 1):
        s = (i - 1 - j) * grid.time_block / grid.n
        x = (l - k - shifts[i - 1] + shifts[j]) * grid.space_block / xs
        out[j] = density(law, s, x)
    return out


def coarse_field_U(sigma_u: np.ndarray, zeta: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_j sum_l weights[j, l] sigma(u)[.., j, l] zeta[.., j, l]; leading axes are replicas."""
    i = weights.shape[0]
    if i == 0:
        return np.zeros(sigma_u.shape[:-2])
    return np.einsum("...jl,jl->...", sigma_u[..., :i, :] * zeta[..., :i, :], weights)


@dataclass(frozen=True, eq=False)
class CoarseChain:
    """Per-replica values of u_bar, U, V and V_bar at one coarse target point."""

    grid: BlockGrid
    target: tuple[int, int]
    u: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Vbar: np.ndarray
    excluded_blocks: int
    clamped: int

    def norm(self, a: np.ndarray, b: np.ndarray, order: float) -> float:
        return float(np.mean(np.abs(a - b) ** order) ** (1.0 / order))

    def distances(self, order: float) -> dict:
        return {
            "u-U": self.norm(self.u, self.U, order),
            "V-U": self.norm(self.V, self.U, order),
            "V-Vbar": self.norm(self.V, self.Vbar, order),
        }

    def bounds(self, kernel: WalkKernel, order: float, kappa: float) -> dict:
        """Squared-norm bound terms with all o(1) factors set to one."""
        n, a, al = self.grid.n, kernel.a, kernel.alpha
        th = math.log(self.grid.time_block) / math.log(n) if self.grid.time_block > 1 else 0.0
        ga = math.log(self.grid.space_block) / math.log(n) if self.grid.space_block > 1 else 0.0
        m = order / 2.0
        return {
            "u-U": n ** ga / n ** ((al - 1.0) * th) + n ** (th + ga) / n ** ((al - 1.0) / al),
            "V-U": n ** (-(th + ga) * min(1.0, kappa) / (2.0 * m)),
            "V-Vbar": n ** (th + ga) / n ** (min(al - 1.0, a) / al),
        }


def coarse_chain(config: SHEConfig, grid: BlockGrid, t: float, x: float, replicas: int,
                 threads: int | None = None, chunk: int = 32) -> CoarseChain:
    """Simulate u and evaluate U, V and V_bar at the coarse point matching (t, x).

    All four quantities share one noise realization per replica: U uses the
    block sums of the simulated xi, V and V_bar the coupled white noise.
    U, V and V_bar hold only the noise part, so u should start from zero.
    """
    n, kernel = config.n, config.kernel
    tb, sb = grid.time_block, grid.space_block
    N = lattice_floor(n * t)
    K = lattice_floor(x * n ** (1.0 / kernel.alpha)) - lattice_floor(kernel.mu * n * t)
    if N < tb:
        raise PreconditionError("need t >= [n^theta]/n")
    r, z = N // tb, K // sb
    lo, hi, _ = resolve_window(config, K, K)
    first, L, partial = grid.full_blocks(lo, hi)
    cfg = replace(config, window=(lo, hi))
    fit = fit_stable_params(kernel, np.geomspace(1e-2, 0.2, 40))
    law_stable = StableLaw(fit.alpha if kernel.alpha < 2 else 2.0, fit.nu)
    shifts = grid.shifts(r, kernel.mu)
    w_pmf = _pmf_weights(kernel, grid, r, z, first, L)
    w_den = _density_weights(law_stable, grid, r, z, first, L, shifts)
    law = block_sum_law(config.noise, grid.cells, config.seed)

    steps = np.arange(r) * tb
    block_sites = (first + np.arange(L)) * sb
    out = {name: np.zeros(replicas) for name in ("u", "U", "V", "Vbar")}
    clamped = 0
    xs = n ** (1.0 / kernel.alpha)
    for start in range(0, replicas, chunk):
        R = min(chunk, replicas - start)
        ens = solve_ensemble(cfg, R, np.append(steps, N), np.append(block_sites, K), threads,
                             first_replica=start, guard_sites=[K])
        if ens.excluded:
            raise PreconditionError("blow-up inside a coarse-field run")
        step_idx = np.searchsorted(ens.steps, steps)
        u_blocks = ens.values[:, step_idx, :L]
        sig = config.sigma(u_blocks)
        out["u"][start:start + R] = ens.values[:, np.searchsorted(ens.steps, N), L]
        dkeys = stream_keys(config.seed, config.experiment, range(start, start + R), CHANNEL_DRIVING)
        ckeys = stream_keys(config.seed, config.experiment, range(start, start + R), CHANNEL_COUPLING)
        for q in range(R):
            zeta = stream_block_sums(config.noise, dkeys[q], grid, r, first, L)
            coupled = couple_from_sums(BlockSums(zeta, first, partial), grid, law, ckeys[q])
            clamped += coupled.clamped
            out["U"][start + q] = coarse_field_U(sig[q], zeta, w_pmf)
            out["V"][start + q] = coarse_field_U(sig[q], xs * coupled.white, w_pmf)
            out["Vbar"][start + q] = coarse_field_U(sig[q], coupled.white, w_den)
    return CoarseChain(grid, (r, z), out["u"], out["U"], out["V"], out["Vbar"], partial * r, clamped)


def u_minus_U_error(config: SHEConfig, grid: BlockGrid, t: float, x: float, order: float,
                    replicas: int, threads: int | None = None) -> tuple[float, float]:
    """(||u_bar_t(x) - U||_order, squared-norm bound term)."""
    chain = coarse_chain(config, grid, t, x, replicas, threads)
    return chain.distances(order)["u-U"], chain.bounds(config.kernel, order, config.noise.kappa)["u-U"]


# ---------------------------------------------------------------------------
# initial-profile coupling


@dataclass(frozen=True)
class InitialCoupling:
    n: int
    theta_prime: float
    block: int
    order: float
    measured: float
    stderr: float
    exact: float
    bound: float


def initial_coupling(eta: NoiseModel, n: int, theta_prime: float, order: float = 2.0,
                     samples: int = 200_000, seed: int = 0, lam: float = 1.0) -> InitialCoupling:
    """Couple zeta_bar_l = sum of [n^theta'] increments / sqrt(n) to Brownian increments.

    Both sides carry variance lam [n^theta'] / n; the coupling is the same
    per-block quantile map as for the driving noise.
    """
    if not 0.0 < theta_prime < 0.5:
        raise PreconditionError("theta' must lie in (0, 1/2)")
    block = lattice_floor(n ** theta_prime)
    law = block_sum_law(eta, block, seed)
    key = stream_key(seed, "initial-coupling", n, CHANNEL_COUPLING)
    Z = np.empty((1, samples))
    _block_normals(key, 1, 0, samples, Z)
    Z = Z[0]
    if law.kind == "gaussian":
        Y = Z
    else:
        Y = law.quantile(_clip_unit(ndtr(Z))[0])
    sd = math.sqrt(lam * block / n)
    diff = np.abs(sd * (Y - Z)) ** order
    m = order / 2.0
    kappa = eta.kappa
    bound = n ** (-m * (1.0 - theta_prime)) * n ** (-theta_prime * min(1.0, kappa) / 2.0)
    return InitialCoupling(n, theta_prime, block, order, float(diff.mean()),
                           float(diff.std(ddof=1) / math.sqrt(samples)),
                           sd ** order * coupling_error_exact(law, order), bound)
