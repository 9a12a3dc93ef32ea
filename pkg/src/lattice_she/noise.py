"""Counter-based noise: every variate is a pure function of (stream key, i, k).

Stream keys come from hashing (root seed, experiment id, replica id,
channel), so any replica can be regenerated in isolation and results do not
depend on how replicas are scheduled across threads.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import PreconditionError

FAMILIES = ("gaussian", "rademacher", "uniform", "centered-exponential", "two-point")
_CODES = {name: j for j, name in enumerate(FAMILIES)}

# channels keep independent draws on the same replica apart
CHANNEL_DRIVING = 0
CHANNEL_INITIAL = 1
CHANNEL_COUPLING = 2
CHANNEL_BOOTSTRAP = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xD1B54A32D192ED03)
_SITE_OFFSET = np.int64(1) << np.int64(40)
_INV53 = 1.0 / 9007199254740992.0


def stream_key(root_seed: int, experiment: str, replica: int, channel: int = CHANNEL_DRIVING) -> np.uint64:
    msg = f"{int(root_seed) & 0xFFFFFFFFFFFFFFFF}|{experiment}|{int(replica)}|{int(channel)}"
    digest = hashlib.blake2b(msg.encode(), digest_size=8).digest()
    return np.uint64(int.from_bytes(digest, "little"))


def stream_keys(root_seed: int, experiment: str, replicas, channel: int = CHANNEL_DRIVING) -> np.ndarray:
    return np.array([stream_key(root_seed, experiment, r, channel) for r in replicas], dtype=np.uint64)


@nb.njit(inline="always", cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def row_bits(key, i):
    return _mix64(key + np.uint64(i) * _GOLDEN)


@nb.njit(inline="always", cache=True)
def _site_bits(row, k):
    return _mix64(row ^ (np.uint64(k + _SITE_OFFSET) * _C2))


@nb.njit(inline="always", cache=True)
def cell_bits(key, i, k):
    return _site_bits(row_bits(key, i), k)


@nb.njit(inline="always", cache=True)
def _unit(bits):
    return (np.float64(bits >> np.uint64(11)) + 0.5) * _INV53


# Wichura's AS241 (PPND16) rational approximations to the normal quantile
_A = np.array([3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
               13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
               33430.575583588128105, 2509.0809287301226727])
_B = np.array([1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
               21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
               5226.495278852545925])
_C = np.array([1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
               3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
               0.0227238449892691845833, 7.7454501427834140764e-4])
_D = np.array([1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
               0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
               1.05075007164441684324e-9])
_E = np.array([6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
               0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
               2.71155556874348757815e-5, 2.01033439929228813265e-7])
_F = np.array([1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
               7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
               2.04426310338993978564e-15])


@nb.njit(inline="always", cache=True)
def _ratio(c, d, x):
    num = c[7]
    den = d[7]
    for j in range(6, -1, -1):
        num = num * x + c[j]
        den = den * x + d[j]
    return num / den


@nb.njit(cache=True)
def normal_quantile(p):
    """Phi^{-1}(p) for 0 < p < 1, relative accuracy about 1e-16."""
    q = p - 0.5
    if abs(q) <= 0.425:
        return q * _ratio(_A, _B, 0.180625 - q * q)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        z = _ratio(_C, _D, r - 1.6)
    else:
        z = _ratio(_E, _F, r - 5.0)
    return -z if q < 0.0 else z


@nb.njit(inline="always", cache=True)
def std_normal_cell(key, i, k):
    return normal_quantile(_unit(cell_bits(key, i, k)))


@nb.njit(inline="always", cache=True)
def uniform_cell(key, i, k):
    return _unit(cell_bits(key, i, k))


@nb.njit(inline="always", cache=True)
def _value_from_bits(code, param, bits):
    if code == 0:
        return normal_quantile(_unit(bits))
    if code == 1:
        return 1.0 if (bits >> np.uint64(63)) == np.uint64(1) else -1.0
    u = _unit(bits)
    if code == 2:
        return math.sqrt(3.0) * (2.0 * u - 1.0)
    if code == 3:
        return -math.log(u) - 1.0
    if u < param:
        return math.sqrt((1.0 - param) / param)
    return -math.sqrt(param / (1.0 - param))


@nb.njit(inline="always", cache=True)
def noise_cell(code, param, key, i, k):
    return _value_from_bits(code, param, cell_bits(key, i, k))


@nb.njit(nogil=True, cache=True)
def fill_noise_row(code, param, key, i, k0, out):
    """out[b] = noise_cell(code, param, key, i, k0 + b), hoisting the per-row hash."""
    row = row_bits(key, i)
    for b in range(out.shape[0]):
        out[b] = _value_from_bits(code, param, _site_bits(row, k0 + b))


@nb.njit(cache=True)
def _noise_rect(code, param, key, i0, i1, k0, k1):
    out = np.empty((i1 - i0, k1 - k0))
    for a in range(i1 - i0):
        for b in range(k1 - k0):
            out[a, b] = noise_cell(code, param, key, i0 + a, k0 + b)
    return out


@nb.njit(cache=True)
def _normal_rect(key, i0, i1, k0, k1):
    out = np.empty((i1 - i0, k1 - k0))
    for a in range(i1 - i0):
        for b in range(k1 - k0):
            out[a, b] = std_normal_cell(key, i0 + a, k0 + b)
    return out


@nb.njit(cache=True)
def _uniform_rect(key, i0, i1, k0, k1):
    out = np.empty((i1 - i0, k1 - k0))
    for a in range(i1 - i0):
        for b in range(k1 - k0):
            out[a, b] = uniform_cell(key, i0 + a, k0 + b)
    return out


def standard_normals(key, rows: tuple[int, int], sites: tuple[int, int]) -> np.ndarray:
    """N(0,1) array for time rows [i0, i1) and sites [k0, k1)."""
    return _normal_rect(np.uint64(key), rows[0], rows[1], sites[0], sites[1])


def uniforms(key, rows: tuple[int, int], sites: tuple[int, int]) -> np.ndarray:
    return _uniform_rect(np.uint64(key), rows[0], rows[1], sites[0], sites[1])


@dataclass(frozen=True)
class NoiseModel:
    """Mean-zero, unit-variance i.i.d. law from a fixed catalog.

    ``p`` is only used by the two-point family (probability of the upper
    atom). ``kappa`` is the declared number of moments beyond two.
    """

    family: str = "gaussian"
    p: float = 0.5
    kappa: float = math.inf

    def __post_init__(self):
        if self.family not in _CODES:
            raise PreconditionError(f"unknown noise family {self.family!r}")
        if self.family == "two-point" and not 0.0 < self.p < 1.0:
            raise PreconditionError("two-point law needs 0 < p < 1")
        if not self.kappa > 0:
            raise PreconditionError("kappa must be positive")
        mean, var = self.first_two_moments()
        if abs(mean) > 1e-12 or abs(var - 1.0) > 1e-12:
            raise PreconditionError(f"{self.family}: mean {mean}, variance {var}")
        if math.isfinite(self.kappa) and not math.isfinite(self.abs_moment(2.0 + self.kappa)):
            raise PreconditionError("declared kappa exceeds the available moments")

    @property
    def code(self) -> int:
        return _CODES[self.family]

    @property
    def param(self) -> float:
        return float(self.p) if self.family == "two-point" else 0.0

    @property
    def has_exponential_moments(self) -> bool:
        return True

    @property
    def atoms(self):
        """(values, probabilities) for finite-support families, else None."""
        if self.family == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.family == "two-point":
            p = self.p
            return (np.array([-math.sqrt(p / (1 - p)), math.sqrt((1 - p) / p)]),
                    np.array([1 - p, p]))
        return None

    def first_two_moments(self) -> tuple[float, float]:
        atoms = self.atoms
        if atoms is not None:
            v, w = atoms
            return float(np.dot(v, w)), float(np.dot(v * v, w))
        if self.family == "gaussian":
            return 0.0, 1.0
        if self.family == "uniform":
            h = math.sqrt(3.0)
            return 0.0, h * h / 3.0
        # E - 1 with E ~ Exp(1): E[E] = 1, E[E^2] = 2
        return 1.0 - 1.0, 2.0 - 1.0

    def abs_moment(self, q: float) -> float:
        """E|xi|^q in closed form or by one-dimensional quadrature."""
        atoms = self.atoms
        if atoms is not None:
            v, w = atoms
            return float(np.dot(np.abs(v) ** q, w))
        if self.family == "gaussian":
            return 2.0 ** (q / 2) * gamma((q + 1) / 2) / math.sqrt(math.pi)
        if self.family == "uniform":
            return 3.0 ** (q / 2) / (q + 1)
        left = integrate.quad(lambda y: y ** q * math.exp(y), 0.0, 1.0)[0]
        return math.exp(-1.0) * (left + gamma(q + 1))

    def mgf(self, s: float) -> float:
        """E exp(s xi) in closed form."""
        atoms = self.atoms
        if atoms is not None:
            v, w = atoms
            return float(np.dot(np.exp(s * v), w))
        if self.family == "gaussian":
            return math.exp(0.5 * s * s)
        if self.family == "uniform":
            h = math.sqrt(3.0) * s
            return 1.0 if h == 0 else math.sinh(h) / h
        if s >= 1.0:
            raise PreconditionError("centered exponential mgf is infinite for s >= 1")
        return math.exp(-s) / (1.0 - s)

    def sample(self, key, rows: tuple[int, int], sites: tuple[int, int]) -> np.ndarray:
        """Noise array for time rows [i0, i1) and sites [k0, k1)."""
        return _noise_rect(self.code, self.param, np.uint64(key), rows[0], rows[1], sites[0], sites[1])

    def describe(self) -> dict:
        out = {"family": self.family, "kappa": self.kappa}
        if self.family == "two-point":
            out["p"] = self.p
        return out
