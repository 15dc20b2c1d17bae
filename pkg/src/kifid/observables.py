"""Pauli-string observables and infinite-temperature trace averages."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from numba import njit, prange

from .state import StateVector, sample_states

__all__ = [
    "PauliString",
    "ObservableSpec",
    "TraceAverageSpec",
    "EXACT_TRACE_CAP",
    "magnetization",
    "z_observable",
    "parse_observable",
    "apply_observable",
    "expectation",
    "trace_average",
    "iter_trace_batches",
    "reduce_samples",
    "moment",
    "moment_test_z_observables",
]

EXACT_TRACE_CAP = 12
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class PauliString:
    ops: tuple[tuple[int, str], ...]
    coefficient: complex = 1.0

    def __post_init__(self):
        ops = tuple((int(s), str(a)) for s, a in self.ops)
        sites = [s for s, _ in ops]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in Pauli string {ops}")
        for _, a in ops:
            if a not in AXES:
                raise ValueError(f"unknown Pauli axis {a!r}")
        object.__setattr__(self, "ops", ops)

    def masks(self) -> tuple[int, int, int]:
        """Return (x_mask, z_mask, number of y factors)."""
        xm = zm = ny = 0
        for site, axis in self.ops:
            if axis in "xy":
                xm |= 1 << site
            if axis in "yz":
                zm |= 1 << site
            ny += axis == "y"
        return xm, zm, ny

    def max_site(self) -> int:
        return max((s for s, _ in self.ops), default=-1)


@dataclass(frozen=True)
class ObservableSpec:
    """A sum of Pauli strings bound to a chain of ``n_sites``."""

    terms: tuple[PauliString, ...]
    name: str
    n_sites: int
    normalization: str = "none"
    scale: float = field(init=False, default=1.0)

    def __post_init__(self):
        factors = {"none": 1.0, "per_sqrt_L": self.n_sites ** -0.5, "per_L": 1.0 / self.n_sites}
        if self.normalization not in factors:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "scale", factors[self.normalization])
        for term in self.terms:
            if term.max_site() >= self.n_sites:
                raise IndexError(
                    f"site {term.max_site()} out of range in {self.name} for L={self.n_sites}"
                )

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        # each Pauli string is hermitian, so the summed coefficient of every
        # distinct string must be real
        total: dict[tuple, complex] = {}
        for t in self.terms:
            key = tuple(sorted(t.ops))
            total[key] = total.get(key, 0.0) + complex(t.coefficient)
        return all(abs(c.imag) <= tol for c in total.values())

    def dense(self) -> np.ndarray:
        """Dense matrix (small L only), built column by column."""
        dim = 1 << self.n_sites
        return apply_observable(np.eye(dim, dtype=np.complex128), self).T


def magnetization(n_sites: int, axis: str = "x") -> ObservableSpec:
    """M^axis = sum_j sigma^axis_j."""
    terms = tuple(PauliString(((j, axis),)) for j in range(n_sites))
    return ObservableSpec(terms, f"M_{axis}", n_sites)


def z_observable(pattern: str, n_sites: int) -> ObservableSpec:
    """Translation-invariant Z_s = L^{-1/2} sum_j s0_j s1_{j+1} ... sn_{j+n}.

    ``pattern`` uses axis letters, with ``0`` for identity on interior sites,
    e.g. ``"x"``, ``"xx"``, ``"x0z"``.
    """
    if not re.fullmatch(r"[xyz]([0xyz]*[xyz])?", pattern):
        raise ValueError(f"bad Z pattern {pattern!r}: ends must be x, y or z")
    if len(pattern) > n_sites:
        raise ValueError(f"pattern {pattern!r} longer than L={n_sites}")
    terms = []
    for j in range(n_sites):
        ops = tuple(((j + k) % n_sites, a) for k, a in enumerate(pattern) if a != "0")
        terms.append(PauliString(ops))
    return ObservableSpec(tuple(terms), f"Z:{pattern}", n_sites, "per_sqrt_L")


def parse_observable(token: str, n_sites: int) -> ObservableSpec:
    """Build an observable from a config token: ``M_x``, ``M_y``, ``M_z`` or ``Z:<pattern>``."""
    m = re.fullmatch(r"M_([xyz])", token)
    if m:
        return magnetization(n_sites, m.group(1))
    if token.startswith("Z:"):
        return z_observable(token[2:], n_sites)
    raise ValueError(f"unknown observable token {token!r}")


@njit(cache=True, inline="always")
def _parity(v):
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return v & 1


@njit(parallel=True, cache=True)
def _pauli_sum(psi, out, xmasks, zmasks, phases):
    nb, dim = psi.shape
    nt = len(phases)
    for w in prange(nb * dim):
        b = w // dim
        i = w - b * dim
        acc = 0j
        for k in range(nt):
            j = i ^ xmasks[k]
            if _parity(j & zmasks[k]):
                acc -= phases[k] * psi[b, j]
            else:
                acc += phases[k] * psi[b, j]
        out[b, i] = acc


def _term_tables(obs: "ObservableSpec"):
    xs, zs, ph = [], [], []
    for term in obs.terms:
        xm, zm, ny = term.masks()
        xs.append(xm)
        zs.append(zm)
        ph.append(complex(term.coefficient) * (1j**ny) * obs.scale)
    return (
        np.array(xs, dtype=np.int64),
        np.array(zs, dtype=np.int64),
        np.array(ph, dtype=np.complex128),
    )


def apply_observable(psi, obs: ObservableSpec):
    """Return obs|psi> as a new state (or batch of amplitude rows).

    A string ``c * i^{n_y} X(x_mask) Z(z_mask)`` maps amplitude ``psi[i]`` to
    ``c i^{n_y} (-1)^{popcount(i & z_mask)} psi[i]`` at index ``i ^ x_mask``.
    """
    if isinstance(psi, StateVector):
        if psi.n_sites != obs.n_sites:
            raise ValueError(f"observable bound to L={obs.n_sites}, state has L={psi.n_sites}")
        return StateVector(psi.n_sites, apply_observable(psi.amplitudes, obs))
    arr = np.ascontiguousarray(psi, dtype=np.complex128)
    if arr.shape[-1] != 1 << obs.n_sites:
        raise ValueError(f"observable bound to L={obs.n_sites}, state dim {arr.shape[-1]}")
    flat = arr.reshape(-1, arr.shape[-1])
    out = np.empty_like(flat)
    _pauli_sum(flat, out, *_term_tables(obs))
    return out.reshape(arr.shape)


def expectation(psi, obs: ObservableSpec) -> complex:
    """<psi|obs|psi>."""
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    return complex(np.vdot(amps, apply_observable(amps, obs)))


@dataclass(frozen=True)
class TraceAverageSpec:
    mode: str = "stochastic"
    n_samples: int = 16
    seed: int = 0
    cap: int = EXACT_TRACE_CAP

    def __post_init__(self):
        if self.mode not in ("exact_basis_sum", "stochastic"):
            raise ValueError(f"unknown averaging mode {self.mode!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def check(self, n_sites: int) -> None:
        if self.mode == "exact_basis_sum" and n_sites > self.cap:
            raise ValueError(
                f"exact trace requested for L={n_sites} above the cap L<={self.cap}"
            )

    def count(self, n_sites: int) -> int:
        return (1 << n_sites) if self.mode == "exact_basis_sum" else self.n_samples

    def as_dict(self) -> dict:
        return {"mode": self.mode, "n_samples": self.n_samples, "seed": self.seed}


def _batch_rows(n_sites: int, budget: int = 1 << 19) -> int:
    return max(1, budget >> n_sites)


def iter_trace_batches(
    n_sites: int, spec: TraceAverageSpec, batch: int | None = None
) -> Iterator[np.ndarray]:
    """Yield blocks of initial states (rows), in fixed sample order.

    Exact mode walks the computational basis; stochastic mode yields the
    ``random_state`` ensemble indexed by sample number.
    """
    spec.check(n_sites)
    total = spec.count(n_sites)
    step = batch or _batch_rows(n_sites)
    dim = 1 << n_sites
    for start in range(0, total, step):
        stop = min(total, start + step)
        if spec.mode == "exact_basis_sum":
            block = np.zeros((stop - start, dim), dtype=np.complex128)
            block[np.arange(stop - start), np.arange(start, stop)] = 1.0
        else:
            block = sample_states(n_sites, spec.seed, start, stop)
        yield block


def reduce_samples(values: np.ndarray, spec: TraceAverageSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean over axis 0 and its standard error (zero in exact mode)."""
    values = np.asarray(values)
    mean = values.mean(axis=0)
    if spec.mode == "exact_basis_sum" or values.shape[0] < 2:
        return mean, np.zeros(mean.shape)
    err = values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
    return mean, err


def trace_average(
    fn: Callable[[StateVector], complex], n_sites: int, spec: TraceAverageSpec
) -> tuple[complex, float]:
    """(1/N) tr of the operator behind ``fn``, with a standard error.

    ``fn`` must be the expectation of a fixed operator in the given state.
    """
    vals = []
    for block in iter_trace_batches(n_sites, spec):
        vals.extend(fn(StateVector(n_sites, row)) for row in block)
    mean, err = reduce_samples(np.array(vals, dtype=np.complex128), spec)
    return complex(mean), float(err)


def moment(obs: ObservableSpec, power: int, spec: TraceAverageSpec) -> tuple[float, float]:
    """<obs^power> = tr(obs^power)/N with standard error."""
    n = obs.n_sites
    half = power // 2
    vals = []
    for block in iter_trace_batches(n, spec):
        v = block
        for _ in range(half):
            v = apply_observable(v, obs)
        if power % 2:
            w = apply_observable(v, obs)
            vals.append(np.einsum("ij,ij->i", v.conj(), w))
        else:
            vals.append(np.einsum("ij,ij->i", v.conj(), v))
    mean, err = reduce_samples(np.concatenate(vals), spec)
    return float(mean.real), float(err)


def moment_test_z_observables(
    pattern: str | Sequence[str], n_sites: int, k: int, spec: TraceAverageSpec
) -> float:
    """Estimate <Z_s^{2k}> for the TI observable with multi-index ``pattern``."""
    if not 1 <= k <= 3:
        raise ValueError("only moments 2k with k <= 3 are supported")
    pattern = "".join(pattern)
    if len(pattern) > n_sites:
        raise ValueError(f"L={n_sites} smaller than the order of {pattern!r}")
    return moment(z_observable(pattern, n_sites), 2 * k, spec)[0]
