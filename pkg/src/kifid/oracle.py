"""Dense-matrix reference dynamics for small chains (L <= 8).

Everything here is built from explicit Kronecker products and ``expm`` and
shares no code with the gate kernels it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .state import KickedIsingParams

ORACLE_MAX_SITES = 8

I2 = np.eye(2, dtype=np.complex128)
SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULI = {"x": SX, "y": SY, "z": SZ}


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """``op`` on ``site`` in the bit-j-is-site-j basis.

    np.kron puts its first factor on the most significant bit, so site
    L-1 comes first.
    """
    out = np.ones((1, 1), dtype=np.complex128)
    for j in reversed(range(n_sites)):
        out = np.kron(out, op if j == site else I2)
    return out


def _check(n_sites: int) -> None:
    if not 2 <= n_sites <= ORACLE_MAX_SITES:
        raise ValueError(f"dense oracle supports 2 <= L <= {ORACLE_MAX_SITES}, got {n_sites}")


def zz_sum(n_sites: int) -> np.ndarray:
    _check(n_sites)
    return sum(
        site_operator(SZ, j, n_sites) @ site_operator(SZ, (j + 1) % n_sites, n_sites)
        for j in range(n_sites)
    )


def field_sum(n_sites: int, h_x: float, h_z: float, h_y: float = 0.0) -> np.ndarray:
    _check(n_sites)
    return sum(
        h_x * site_operator(SX, j, n_sites)
        + h_y * site_operator(SY, j, n_sites)
        + h_z * site_operator(SZ, j, n_sites)
        for j in range(n_sites)
    )


def magnetization(n_sites: int, axis: str = "x") -> np.ndarray:
    _check(n_sites)
    return sum(site_operator(PAULI[axis], j, n_sites) for j in range(n_sites))


def floquet(n_sites: int, params: KickedIsingParams, order: str = "kick-then-zz") -> np.ndarray:
    zz = expm(-1j * params.j_z * zz_sum(n_sites))
    kick = expm(-1j * field_sum(n_sites, params.h_x, params.h_z))
    if order == "kick-then-zz":
        return zz @ kick
    if order == "zz-then-kick":
        return kick @ zz
    raise ValueError(f"unknown factor order {order!r}")


def perturbed_floquet(n_sites: int, params: KickedIsingParams, delta: float, order: str = "kick-then-zz"):
    return floquet(n_sites, params, order) @ expm(-1j * delta * magnetization(n_sites))


def correlation(u: np.ndarray, a: np.ndarray, t_max: int) -> np.ndarray:
    """tr(U^{-t} A U^t A)/N for t = 0..t_max."""
    n = len(u)
    out = np.empty(t_max + 1, dtype=np.complex128)
    ut = np.eye(n, dtype=np.complex128)
    for t in range(t_max + 1):
        out[t] = np.trace(ut.conj().T @ a @ ut @ a) / n
        ut = u @ ut
    return out


def fidelity(u: np.ndarray, u_delta: np.ndarray, t_max: int, psi: np.ndarray | None = None) -> np.ndarray:
    """<U_delta^{-t} U^t> as a trace average, or in the pure state ``psi``."""
    n = len(u)
    out = np.empty(t_max + 1, dtype=np.complex128)
    w = np.eye(n, dtype=np.complex128)
    ut = np.eye(n, dtype=np.complex128)
    udt = np.eye(n, dtype=np.complex128)
    for t in range(t_max + 1):
        w = udt.conj().T @ ut
        out[t] = np.trace(w) / n if psi is None else np.vdot(psi, w @ psi)
        ut = u @ ut
        udt = u_delta @ udt
    return out


@dataclass
class OracleReport:
    n_sites: int
    params: dict
    delta: float
    t: int
    oracle_order: str
    state_error: float
    correlation_error: float
    fidelity_error: float
    tolerance: float = 1e-10

    @property
    def max_error(self) -> float:
        return max(self.state_error, self.correlation_error, self.fidelity_error)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["max_error"] = self.max_error
        d["passed"] = self.passed
        return d
