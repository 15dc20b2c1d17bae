"""Closed-form fidelity predictions, time scales and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "L0",
    "DecayPrediction",
    "DecayFit",
    "InsufficientData",
    "SingularInput",
    "d_sigma_x",
    "tau_ergodic",
    "tau_nonergodic",
    "decay_curve",
    "saturation",
    "predict",
    "perturbative_threshold",
    "plateau_constant_fit",
    "fidelity_quadratic",
    "perturbed_field_map",
    "scaled_delta",
    "fit_decay",
]

L0 = 24
REGIMES = ("ergodic", "non_ergodic")


class SingularInput(ValueError):
    pass


class InsufficientData(ValueError):
    pass


def d_sigma_x(j_z: float, h_x: float) -> float:
    """Long-time plateau of the sigma^x autocorrelation in the transverse kicked chain."""
    s2 = math.sin(2 * h_x) ** 2
    if math.sqrt(s2) < 1e-12:
        raise SingularInput(f"sin(2 h_x) vanishes at h_x={h_x}")
    c = math.cos(2 * h_x)
    return (max(abs(math.cos(2 * j_z)), abs(c)) - c * c) / s2


def scaled_delta(delta_prime: float, n_sites: int, l0: int = L0) -> float:
    """Perturbation strength for size L at fixed delta' = delta sqrt(L/L0)."""
    return delta_prime * math.sqrt(l0 / n_sites)


def tau_ergodic(s_a: float, delta: float) -> float:
    if s_a <= 0:
        raise ValueError(f"S_A must be positive, got {s_a}")
    if delta == 0:
        raise ValueError("delta must be nonzero")
    return 1.0 / (s_a * delta * delta)


def tau_nonergodic(d_a: float, delta: float) -> float:
    if d_a <= 0:
        raise ValueError(f"D_A must be positive, got {d_a}")
    if delta == 0:
        raise ValueError("delta must be nonzero")
    return 1.0 / (math.sqrt(d_a) * abs(delta))


def decay_curve(regime: str, tau: float, t):
    """exp(-t/tau) for ergodic, exp(-(t/tau)^2/2) for non-ergodic dynamics."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    t = np.asarray(t, dtype=float)
    if regime == "ergodic":
        out = np.exp(-t / tau)
    elif regime == "non_ergodic":
        out = np.exp(-0.5 * (t / tau) ** 2)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return float(out) if out.ndim == 0 else out


def saturation(regime: str, tau: float, n_sites: int) -> tuple[float, float]:
    """(t_star, plateau): the time at which the decay law reaches N^{-1/2}."""
    if tau <= 0 or n_sites < 2:
        raise ValueError("need tau > 0 and L >= 2")
    ln_n = n_sites * math.log(2.0)
    plateau = 2.0 ** (-n_sites / 2)
    if regime == "ergodic":
        return 0.5 * tau * ln_n, plateau
    if regime == "non_ergodic":
        return tau * math.sqrt(ln_n), plateau
    raise ValueError(f"unknown regime {regime!r}")


@dataclass
class DecayPrediction:
    regime: str
    tau: float
    t_star: float
    plateau: float

    def model(self, t):
        return decay_curve(self.regime, self.tau, t)

    def as_dict(self) -> dict:
        return {"regime": self.regime, "tau": self.tau, "t_star": self.t_star, "plateau": self.plateau}


def predict(regime: str, rate_constant: float, delta: float, n_sites: int) -> DecayPrediction:
    """Prediction from S_A (ergodic) or D_A (non-ergodic)."""
    if regime == "ergodic":
        tau = tau_ergodic(rate_constant, delta)
    else:
        tau = tau_nonergodic(rate_constant, delta)
    t_star, plateau = saturation(regime, tau, n_sites)
    return DecayPrediction(regime, tau, t_star, plateau)


def perturbative_threshold(s_a: float, c_a: float, n_sites: int) -> float:
    """delta_p = sqrt(c_A) / (S_A sqrt(N)), N = 2^L."""
    if s_a <= 0 or c_a <= 0:
        raise ValueError("S_A and c_A must be positive")
    return math.sqrt(c_a) / (s_a * 2.0 ** (n_sites / 2))


def plateau_constant_fit(sizes, plateaus) -> float:
    """Least-squares c in plateau(L) = c / 2^L (fit through the origin in 1/N)."""
    x = 2.0 ** -np.asarray(sizes, dtype=float)
    y = np.asarray(plateaus, dtype=float)
    return float(np.dot(x, y) / np.dot(x, x))


def fidelity_quadratic(corr, delta: float, t: int) -> float:
    """Second-order fidelity 1 - (delta^2/2) sum_{|t'|<=t} (t - |t'|) C(t').

    ``corr`` is a correlation series (or array) covering 0..t; negative times
    use C(-t') = conj C(t'), so the sum is real.
    """
    c = np.asarray(getattr(corr, "values", corr), dtype=np.complex128)
    if t < 0 or t >= len(c):
        raise IndexError(f"t={t} outside the correlation series range 0..{len(c) - 1}")
    lag = np.arange(1, t + 1)
    total = t * c[0].real + 2.0 * np.sum((t - lag) * c[1 : t + 1].real)
    return float(1.0 - 0.5 * delta * delta * total)


def perturbed_field_map(h_x: float, h_z: float, delta: float) -> tuple[float, float]:
    """First-order fields of the kick exp(-i h.sigma) exp(-i delta sigma^x).

    The composition also acquires a sigma^y field ~ h_z delta; a global
    rotation about z, which commutes with the Ising layer, removes it, so the
    pair returned here fixes the dynamics up to that unitary equivalence.
    """
    h = math.hypot(h_x, h_z)
    if h == 0:
        raise SingularInput("field vanishes; h cot h is undefined")
    hcot = h / math.tan(h)
    hx = h_x + (h_x**2 + h_z**2 * hcot) * delta / h**2
    hz = h_z + h_x * h_z * (1 - hcot) * delta / h**2
    return hx, hz


@dataclass
class DecayFit:
    regime: str
    tau: float
    rmse: float
    tau_exp: float
    rmse_exp: float
    tau_gauss: float
    rmse_gauss: float
    window: tuple[int, int]
    n_points: int = field(default=0)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["window"] = list(self.window)
        return d


def fit_decay(series, n_sites: int, upper: float = 0.95) -> DecayFit:
    """Fit ln|F| to -t/tau and to -t^2/(2 tau^2); pick the lower log RMSE.

    Points are taken from the start of the series up to the first drop below
    3 * 2^{-L/2}, keeping those with |F| < ``upper``.
    """
    times = np.asarray(getattr(series, "times", None) if hasattr(series, "times") else np.arange(len(series)), dtype=float)
    mag = np.abs(np.asarray(getattr(series, "values", series)))
    floor = 3.0 * 2.0 ** (-n_sites / 2)
    below = np.nonzero(mag <= floor)[0]
    end = int(below[0]) if len(below) else len(mag)
    sel = np.nonzero(mag[:end] < upper)[0]
    if len(sel) < 5:
        raise InsufficientData(f"only {len(sel)} points in the fit window")
    t = times[sel]
    y = np.log(mag[sel])
    # one-parameter least squares through the origin
    b = -np.dot(y, t) / np.dot(t, t)
    a = -np.dot(y, t**2) / np.dot(t**2, t**2)
    rmse_exp = float(np.sqrt(np.mean((y + b * t) ** 2)))
    rmse_gauss = float(np.sqrt(np.mean((y + a * t**2) ** 2)))
    tau_exp = 1.0 / b if b > 0 else math.inf
    tau_gauss = 1.0 / math.sqrt(2 * a) if a > 0 else math.inf
    if rmse_gauss < rmse_exp:
        regime, tau, rmse = "non_ergodic", tau_gauss, rmse_gauss
    else:
        regime, tau, rmse = "ergodic", tau_exp, rmse_exp
    window = (int(t[0]), int(t[-1]))
    return DecayFit(regime, float(tau), rmse, float(tau_exp), rmse_exp, float(tau_gauss), rmse_gauss, window, len(sel))
