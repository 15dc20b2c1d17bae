import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kifid import oracle
from kifid.dynamics import (
    TimeSeries,
    apply_time_average,
    correlation_series,
    estimate_statistics,
    fidelity_series,
    time_averaged_moments,
)
from kifid.observables import TraceAverageSpec, magnetization, z_observable
from kifid.state import KickedIsingParams, random_state, sample_states
from kifid.theory import fidelity_quadratic

from .conftest import ERGODIC, INTEGRABLE, INTERMEDIATE

EXACT = TraceAverageSpec("exact_basis_sum")


def _series(values, meta=None):
    values = np.asarray(values, dtype=complex)
    return TimeSeries(np.arange(len(values)), values, np.zeros(len(values)), meta or {})


# ---------------------------------------------------------------- correlation


def test_correlation_starts_at_one_per_site():
    s = correlation_series(ERGODIC, magnetization(6), 3, EXACT)
    assert s.values[0] == pytest.approx(1.0, abs=1e-12)
    assert s.meta["per_site"] and s.meta["observable"] == "M_x"


@pytest.mark.parametrize("params", [INTEGRABLE, INTERMEDIATE, ERGODIC])
def test_correlation_matches_heisenberg_oracle(params):
    n, t_max = 6, 40
    s = correlation_series(params, magnetization(n), t_max, EXACT, per_site=False)
    ref = oracle.correlation(oracle.floquet(n, params), oracle.magnetization(n), t_max)
    assert np.max(np.abs(s.values - ref)) <= 1e-10


def test_correlation_z_observable_matches_oracle():
    n = 5
    obs = z_observable("xz", n)
    s = correlation_series(INTERMEDIATE, obs, 15, EXACT)
    ref = oracle.correlation(oracle.floquet(n, INTERMEDIATE), obs.dense(), 15)
    assert np.max(np.abs(s.values - ref)) <= 1e-10


@pytest.mark.parametrize("params", [INTEGRABLE, ERGODIC])
def test_correlation_is_real_and_homogeneous(params):
    series = [correlation_series(params, magnetization(8), 25, EXACT, start=s) for s in (0, 1, 2)]
    assert np.max(np.abs(series[0].values.imag)) <= 1e-10
    for other in series[1:]:
        assert np.max(np.abs(other.values - series[0].values)) <= 1e-10


def test_correlation_rejects_bad_input():
    from kifid.observables import ObservableSpec, PauliString

    with pytest.raises(ValueError):
        correlation_series(ERGODIC, magnetization(4), 0, EXACT)
    bad = ObservableSpec((PauliString(((0, "x"),), 1j),), "bad", 4)
    with pytest.raises(ValueError):
        correlation_series(ERGODIC, bad, 5, EXACT)


def test_correlation_stochastic_mean_near_exact():
    exact = correlation_series(ERGODIC, magnetization(8), 10, EXACT)
    est = correlation_series(ERGODIC, magnetization(8), 10, TraceAverageSpec("stochastic", 128, 2))
    assert np.all(np.abs(est.values - exact.values) <= 5 * est.stderr + 1e-12)


# ---------------------------------------------------------------- fidelity


def test_fidelity_zero_delta_is_one():
    s = fidelity_series(ERGODIC, 0.0, 30, TraceAverageSpec("stochastic", 4, 0), 8)
    assert np.all(s.values == 1.0)


@pytest.mark.parametrize("params", [INTEGRABLE, INTERMEDIATE, ERGODIC])
def test_fidelity_matches_dense_oracle(params):
    n, delta, t_max = 6, 0.3, 40
    s = fidelity_series(params, delta, t_max, EXACT, n)
    ref = oracle.fidelity(oracle.floquet(n, params), oracle.perturbed_floquet(n, params, delta), t_max)
    assert np.max(np.abs(s.values - ref)) <= 1e-10


def test_fidelity_pure_state_matches_oracle():
    n, delta, t_max = 6, 0.2, 30
    s = fidelity_series(ERGODIC, delta, t_max, TraceAverageSpec("stochastic", 1, 0), n)
    psi0 = sample_states(n, 0, 0, 1)[0]
    ref = oracle.fidelity(oracle.floquet(n, ERGODIC), oracle.perturbed_floquet(n, ERGODIC, delta), t_max, psi0)
    assert np.max(np.abs(s.values - ref)) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(delta=st.floats(-1.0, 1.0), seed=st.integers(0, 2**32 - 1))
def test_fidelity_bounded(delta, seed):
    s = fidelity_series(INTERMEDIATE, delta, 40, TraceAverageSpec("stochastic", 4, seed), 6)
    assert s.values[0] == 1.0
    assert np.all(s.abs <= 1 + 1e-12)


@pytest.mark.parametrize("params", [INTEGRABLE, INTERMEDIATE, ERGODIC])
def test_symmetrized_fidelity_even_in_delta(params):
    a = fidelity_series(params, 0.1, 30, EXACT, 8, symmetrized=True)
    b = fidelity_series(params, -0.1, 30, EXACT, 8, symmetrized=True)
    assert np.max(np.abs(a.abs - b.abs)) <= 1e-10


def test_plain_fidelity_asymmetry_is_third_order():
    # |F(delta)| - |F(-delta)| of the plain fidelity is odd and starts at delta^3
    gaps = []
    for d in (0.02, 0.01, 0.005):
        a = fidelity_series(INTERMEDIATE, d, 20, EXACT, 8)
        b = fidelity_series(INTERMEDIATE, -d, 20, EXACT, 8)
        gaps.append(np.max(np.abs(a.abs - b.abs)))
    assert gaps[0] / gaps[1] == pytest.approx(8, rel=0.15)
    assert gaps[1] / gaps[2] == pytest.approx(8, rel=0.1)


@pytest.mark.parametrize("delta", [0.005, 0.0025])
def test_fidelity_quadratic_law_with_higher_orders(delta):
    n, t_max = 8, 80
    corr = correlation_series(INTEGRABLE, magnetization(n), t_max, EXACT, per_site=False)
    fid = fidelity_series(INTEGRABLE, delta, t_max, EXACT, n)
    for t in range(t_max + 1):
        q = fidelity_quadratic(corr, delta, t)
        if 1 - q >= 0.1:
            break
        # third-order headroom plus the fourth-order cumulant term x^2/2
        x = 1 - q
        assert abs(fid.abs[t] - q) <= 10 * delta**3 * t + 0.6 * x**2


# ---------------------------------------------------------------- time-averaged operator


def test_time_average_single_period_is_observable():
    n = 5
    block = np.ascontiguousarray(random_state(n, 1).amplitudes[None, :])
    out = apply_time_average(block, ERGODIC, magnetization(n), 1)
    np.testing.assert_allclose(out[0], magnetization(n).dense() @ block[0], atol=1e-12)


def test_time_average_matches_dense():
    n, T = 5, 12
    u = oracle.floquet(n, INTERMEDIATE)
    a = oracle.magnetization(n)
    abar = np.zeros_like(a)
    ut = np.eye(len(u), dtype=complex)
    for _ in range(T):
        abar += ut.conj().T @ a @ ut
        ut = u @ ut
    abar /= T
    block = np.ascontiguousarray(random_state(n, 2).amplitudes[None, :])
    out = apply_time_average(block, INTERMEDIATE, magnetization(n), T)
    assert np.max(np.abs(out[0] - abar @ block[0])) <= 1e-12


def test_time_average_of_conserved_quantity():
    n = 6
    params = KickedIsingParams(0.8, 0.0, 0.3)
    mz = magnetization(n, "z")
    est = time_averaged_moments(params, mz, 20, 1, EXACT)
    assert est.moments[0] == pytest.approx(n, abs=1e-10)


def test_time_averaged_moment_ratio_exact_small():
    est = time_averaged_moments(INTERMEDIATE, magnetization(6), 30, 2, EXACT)
    assert est.ratio > 1.0 and len(est.moments) == 2
    with pytest.raises(ValueError):
        time_averaged_moments(INTERMEDIATE, magnetization(6), 30, 3, EXACT)


# ---------------------------------------------------------------- statistics


def test_statistics_constant_series():
    st_ = estimate_statistics(_series(np.full(101, 0.7)))
    assert st_.D_A == pytest.approx(0.7)
    assert "S_A_DIVERGENT" in st_.flags
    assert "T_MIX_UNDEFINED" in st_.flags
    assert st_.regime == "non_ergodic"


def test_statistics_exponential_series():
    t = np.arange(301)
    st_ = estimate_statistics(_series(np.exp(-t / 6), {"L": 16}))
    ratio = math.exp(-1 / 6) / (1 - math.exp(-1 / 6))  # 5.513882463097458
    assert st_.t_mix == pytest.approx(ratio, rel=0.01)
    assert st_.t_ave == pytest.approx(6.0, rel=1e-4)
    # S = 1/2 + sum_{t>=1} e^{-t/6}
    assert st_.S_A == pytest.approx(0.5 + ratio, rel=1e-6)
    assert st_.regime == "ergodic"


def test_statistics_unresolved_when_noise_dominates():
    t = np.arange(201)
    values = np.exp(-t / 5) + 0.02
    s = TimeSeries(t, values, np.full(len(t), 0.05), {})
    st_ = estimate_statistics(s)
    assert st_.regime == "unresolved"
    assert "UNRESOLVED" in st_.flags


def test_statistics_small_chain_is_unresolved():
    # at L=6 the N^-1 plateau is comparable to C(0)
    s = correlation_series(ERGODIC, magnetization(6), 60, EXACT)
    assert estimate_statistics(s).regime == "unresolved"


def test_statistics_low_confidence_flag():
    t = np.arange(31)
    st_ = estimate_statistics(_series(np.exp(-t / 6)))
    assert "LOW_CONFIDENCE" in st_.flags


# ---------------------------------------------------------------- CSV


def test_csv_round_trip(tmp_path):
    s = fidelity_series(ERGODIC, 0.1, 10, TraceAverageSpec("stochastic", 3, 9), 6)
    path = tmp_path / "f.csv"
    s.write_csv(path)
    back = TimeSeries.read_csv(path)
    assert np.array_equal(back.values, s.values)
    assert np.array_equal(back.stderr, s.stderr)
    assert back.meta == s.meta
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1] == "t,re,im,abs,stderr"


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries([0, 0], [1, 1], [0, 0])
    with pytest.raises(ValueError):
        TimeSeries([0, 1], [1], [0, 0])
    with pytest.raises(ValueError):
        TimeSeries.from_csv("t,re\n0,1\n")
