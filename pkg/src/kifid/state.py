"""State vectors and bitwise gate kernels for the periodic kicked Ising chain.

Basis convention: bit ``j`` of a basis index is site ``j``; bit value 0 is the
sigma^z eigenvalue +1 and bit value 1 is -1.

The kernels act on arrays whose last axis has length ``2**L``.  Leading axes
are a batch of independent states, which is how the dynamics module evolves
many trace samples at once.  One Floquet period is ``U = Z(J) K(h)``: the kick
``K`` acts first, then the Ising layer ``Z``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from numba import njit, prange

__all__ = [
    "StateVector",
    "KickedIsingParams",
    "FACTOR_ORDER",
    "basis_state",
    "random_state",
    "sample_states",
    "kick_matrix",
    "apply_single_site",
    "apply_zz_layer",
    "apply_kick_layer",
    "apply_perturbation_kick",
    "floquet_step",
    "inverse_floquet_step",
    "perturbed_floquet_step",
    "inner_product",
    "translate",
    "configure_threads",
]

FACTOR_ORDER = "kick-then-zz"
THREADS_ENV = "KIFID_THREADS"


def configure_threads(n: int | None = None) -> int:
    """Set the numba worker count; ``0``/``None`` reads ``KIFID_THREADS`` (0 = auto)."""
    if n is None:
        n = int(os.environ.get(THREADS_ENV, "0") or 0)
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if n <= 0 else min(n, limit)
    numba.set_num_threads(n)
    return n


@dataclass(frozen=True)
class KickedIsingParams:
    j_z: float
    h_x: float
    h_z: float

    def __post_init__(self):
        for name in ("j_z", "h_x", "h_z"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def field(self) -> float:
        return float(np.hypot(self.h_x, self.h_z))

    def as_dict(self) -> dict:
        return {"j_z": self.j_z, "h_x": self.h_x, "h_z": self.h_z}


@dataclass
class StateVector:
    """A normalized (or not) state of an ``n_sites`` periodic chain."""

    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError(f"need at least 2 sites, got {self.n_sites}")
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_sites,):
            raise ValueError(
                f"expected {1 << self.n_sites} amplitudes for L={self.n_sites}, "
                f"got shape {amps.shape}"
            )
        self.amplitudes = amps

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_sites, self.amplitudes.copy())


def basis_state(n_sites: int, index: int = 0) -> StateVector:
    amps = np.zeros(1 << n_sites, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(n_sites, amps)


def _gaussian_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_state(n_sites: int, seed: int) -> StateVector:
    """Normalized complex-gaussian state, deterministic in ``seed``."""
    if n_sites < 2:
        raise ValueError(f"need at least 2 sites, got {n_sites}")
    rng = np.random.default_rng(seed)
    return StateVector(n_sites, _gaussian_state(rng, 1 << n_sites))


def sample_states(n_sites: int, seed: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the random-state sequence for ``seed``.

    Sample ``i`` depends only on ``(seed, i)``, so any chunking of the sample
    range yields the same states.
    """
    dim = 1 << n_sites
    out = np.empty((stop - start, dim), dtype=np.complex128)
    for row, i in enumerate(range(start, stop)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out[row] = _gaussian_state(rng, dim)
    return out


# ---------------------------------------------------------------- kernels


@njit(parallel=True, cache=True)
def _single_site_all(psi, n_sites, g00, g01, g10, g11):
    nb, dim = psi.shape
    half = dim >> 1
    for j in range(n_sites):
        stride = 1 << j
        low = stride - 1
        for w in prange(nb * half):
            b = w // half
            k = w - b * half
            i0 = ((k >> j) << (j + 1)) | (k & low)
            i1 = i0 | stride
            a0 = psi[b, i0]
            a1 = psi[b, i1]
            psi[b, i0] = g00 * a0 + g01 * a1
            psi[b, i1] = g10 * a0 + g11 * a1


@njit(parallel=True, cache=True)
def _single_site_one(psi, site, g00, g01, g10, g11):
    nb, dim = psi.shape
    half = dim >> 1
    stride = 1 << site
    low = stride - 1
    for w in prange(nb * half):
        b = w // half
        k = w - b * half
        i0 = ((k >> site) << (site + 1)) | (k & low)
        i1 = i0 | stride
        a0 = psi[b, i0]
        a1 = psi[b, i1]
        psi[b, i0] = g00 * a0 + g01 * a1
        psi[b, i1] = g10 * a0 + g11 * a1


@njit(parallel=True, cache=True)
def _diagonal_lookup(psi, keys, table):
    nb, dim = psi.shape
    for w in prange(nb * dim):
        b = w // dim
        i = w - b * dim
        psi[b, i] *= table[keys[i]]


@lru_cache(maxsize=None)
def antialigned_bonds(n_sites: int) -> np.ndarray:
    """Number of anti-aligned periodic bonds for every basis index.

    Bond ``(j, j+1 mod L)`` is anti-aligned when the two bits differ, i.e. a
    set bit of ``idx XOR rotate(idx, 1)``.
    """
    idx = np.arange(1 << n_sites, dtype=np.int64)
    mask = (1 << n_sites) - 1
    rot = ((idx >> 1) | (idx << (n_sites - 1))) & mask
    diff = idx ^ rot
    count = np.zeros_like(idx)
    for j in range(n_sites):
        count += (diff >> j) & 1
    count.flags.writeable = False
    return count


def kick_matrix(h_x: float, h_z: float) -> np.ndarray:
    """exp(-i (h_x sx + h_z sz)) = cos h - i sin h (h_x sx + h_z sz)/h."""
    h = float(np.hypot(h_x, h_z))
    if h == 0.0:
        return np.eye(2, dtype=np.complex128)
    c, s = np.cos(h), np.sin(h) / h
    return np.array(
        [[c - 1j * s * h_z, -1j * s * h_x], [-1j * s * h_x, c + 1j * s * h_z]],
        dtype=np.complex128,
    )


def _as_batch(psi):
    if isinstance(psi, StateVector):
        return psi.amplitudes.reshape(1, -1), psi.n_sites
    arr = psi
    if arr.dtype != np.complex128 or not arr.flags.c_contiguous:
        raise TypeError("amplitude arrays must be C-contiguous complex128")
    dim = arr.shape[-1]
    n_sites = dim.bit_length() - 1
    if dim != 1 << n_sites:
        raise ValueError(f"last axis length {dim} is not a power of two")
    return arr.reshape(-1, dim), n_sites


def apply_single_site(psi, site: int, gate: np.ndarray):
    """Apply a 2x2 ``gate`` on one ``site``, in place."""
    batch, n_sites = _as_batch(psi)
    if not 0 <= site < n_sites:
        raise IndexError(f"site {site} out of range for L={n_sites}")
    g = np.asarray(gate, dtype=np.complex128)
    _single_site_one(batch, site, g[0, 0], g[0, 1], g[1, 0], g[1, 1])
    return psi


def apply_zz_layer(psi, j_z: float):
    """Multiply by exp(-i j_z sum_j s_j s_{j+1}) on the periodic ring, in place."""
    batch, n_sites = _as_batch(psi)
    if j_z == 0.0:
        return psi
    # sum_j s_j s_{j+1} = L - 2 * (anti-aligned bonds)
    k = np.arange(n_sites + 1)
    table = np.exp(-1j * j_z * (n_sites - 2 * k)).astype(np.complex128)
    _diagonal_lookup(batch, antialigned_bonds(n_sites), table)
    return psi


def apply_kick_layer(psi, h_x: float, h_z: float):
    """Apply exp(-i(h_x sx + h_z sz)) on every site, in place."""
    if h_x == 0.0 and h_z == 0.0:
        return psi
    batch, n_sites = _as_batch(psi)
    g = kick_matrix(h_x, h_z)
    _single_site_all(batch, n_sites, g[0, 0], g[0, 1], g[1, 0], g[1, 1])
    return psi


def apply_perturbation_kick(psi, delta: float):
    """Apply exp(-i delta M) with M = sum_j sx_j, in place."""
    return apply_kick_layer(psi, delta, 0.0)


def floquet_step(psi, params: KickedIsingParams):
    """One period ``U = Z(J) K(h)`` in place; the kick acts first."""
    apply_kick_layer(psi, params.h_x, params.h_z)
    apply_zz_layer(psi, params.j_z)
    return psi


def inverse_floquet_step(psi, params: KickedIsingParams):
    """``U^{-1} = K(-h) Z(-J)`` in place."""
    apply_zz_layer(psi, -params.j_z)
    apply_kick_layer(psi, -params.h_x, -params.h_z)
    return psi


def perturbed_floquet_step(psi, params: KickedIsingParams, delta: float):
    """One period of ``U_delta = U exp(-i delta M)`` in place.

    The symmetrized fidelity is built by the caller from two branches at
    ``+delta/2`` and ``-delta/2``; see :func:`kifid.dynamics.fidelity_series`.
    """
    apply_perturbation_kick(psi, delta)
    return floquet_step(psi, params)


def inner_product(a, b) -> complex:
    """<a|b> = sum conj(a_i) b_i."""
    va = a.amplitudes if isinstance(a, StateVector) else np.asarray(a)
    vb = b.amplitudes if isinstance(b, StateVector) else np.asarray(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return complex(np.vdot(va, vb))


def translate(psi: np.ndarray, n_sites: int, shift: int = 1) -> np.ndarray:
    """Cyclic site translation j -> j + shift acting on basis indices."""
    idx = np.arange(1 << n_sites)
    mask = (1 << n_sites) - 1
    s = shift % n_sites
    image = ((idx << s) | (idx >> (n_sites - s))) & mask if s else idx
    out = np.empty_like(psi)
    out[..., image] = psi
    return out
