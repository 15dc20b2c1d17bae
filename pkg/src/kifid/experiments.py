"""Experiment commands: correlation and fidelity runs, theory and oracle reports.

Every command writes its series as CSV, scalars as JSON, a figure, and a
``manifest.json`` that lists each output with its sha256 digest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, oracle, plotting
from .config import PRESETS, ExperimentConfig, preset
from .dynamics import correlation_series, estimate_statistics, fidelity_series
from .observables import TraceAverageSpec, magnetization, parse_observable
from .state import FACTOR_ORDER, KickedIsingParams, floquet_step, random_state
from .theory import (
    InsufficientData,
    SingularInput,
    d_sigma_x,
    fit_decay,
    perturbative_threshold,
    perturbed_field_map,
    predict,
    saturation,
    scaled_delta,
    tau_ergodic,
    tau_nonergodic,
)

log = logging.getLogger(__name__)

__all__ = [
    "RunResult",
    "cmd_correlations",
    "cmd_fidelity",
    "cmd_theory",
    "cmd_oracle_check",
    "reproduce",
    "sha256_file",
]


@dataclass
class RunResult:
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    unresolved: bool = False
    summary: dict = field(default_factory=dict)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"not JSON serializable: {type(x)}")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _software() -> dict:
    import numba
    import scipy

    return {
        "kifid": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _write_manifest(cfg: ExperimentConfig, out: Path, runs: list[dict], files: list[Path]) -> Path:
    manifest = {
        "config": cfg.to_dict(),
        "software": _software(),
        "factor_order": FACTOR_ORDER,
        "runs": runs,
        "outputs": [{"path": f.name, "sha256": sha256_file(f)} for f in files],
    }
    return _write_json(out / "manifest.json", _clean(manifest))


def _stem(cfg: ExperimentConfig) -> str:
    return cfg.name if cfg.name != "custom" else f"J{cfg.j_z:g}_hx{cfg.h_x:g}_hz{cfg.h_z:g}"


def _correlation_stats(cfg: ExperimentConfig, n_sites: int):
    obs = parse_observable(cfg.observable, n_sites)
    series = correlation_series(cfg.params, obs, cfg.t_max, cfg.averaging)
    return series, estimate_statistics(series)


def cmd_correlations(cfg: ExperimentConfig, out_dir=None, plot: bool = True) -> RunResult:
    """C_A(t) per size (per site for magnetizations) with summary statistics."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(cfg)
    result = RunResult(out)
    runs, series_by_l, stats_doc = [], {}, {}
    for n_sites in cfg.sizes:
        t0 = time.perf_counter()
        series, stats = _correlation_stats(cfg, n_sites)
        wall = time.perf_counter() - t0
        log.info("correlations %s L=%d: D=%.4f S=%.4f regime=%s (%.1fs)", stem, n_sites, stats.D_A, stats.S_A, stats.regime, wall)
        csv_path = out / f"corr_{stem}_L{n_sites}.csv"
        series.write_csv(csv_path)
        result.files.append(csv_path)
        doc = stats.as_dict()
        if cfg.h_z == 0.0 and cfg.observable == "M_x":
            try:
                doc["theory_D_per_site"] = d_sigma_x(cfg.j_z, cfg.h_x)
            except SingularInput as exc:
                doc["theory_D_per_site"] = None
                doc["theory_error"] = str(exc)
        stats_doc[str(n_sites)] = doc
        series_by_l[n_sites] = series
        result.unresolved |= stats.regime == "unresolved"
        runs.append({"kind": "correlation", "L": n_sites, "seed": cfg.seed, "wall_time": wall})
    result.files.append(_write_json(out / f"corr_{stem}_stats.json", _clean(stats_doc)))
    if plot:
        theory = stats_doc[str(cfg.sizes[0])].get("theory_D_per_site")
        result.files.append(plotting.correlation_figure(series_by_l, out / f"corr_{stem}.png", stem, theory))
    result.summary = stats_doc
    result.files.append(_write_manifest(cfg, out, runs, result.files))
    return result


def _theory_block(stats, n_sites: int, delta: float, cfg: ExperimentConfig) -> dict:
    """Decay predictions from measured S_A / D_A (raw, not per site)."""
    scale = n_sites if cfg.observable.startswith("M_") else 1.0
    block = {}
    if delta == 0:
        return block
    s_a = stats.S_A * scale
    d_a = stats.D_A * scale
    if s_a > 0:
        block["ergodic"] = predict("ergodic", s_a, delta, n_sites).as_dict()
    if d_a > 0 and stats.regime != "ergodic":
        block["non_ergodic"] = predict("non_ergodic", d_a, delta, n_sites).as_dict()
    if cfg.h_z == 0.0:
        try:
            d_exact = d_sigma_x(cfg.j_z, cfg.h_x) * n_sites
            block["integrable"] = predict("non_ergodic", d_exact, delta, n_sites).as_dict()
        except (SingularInput, ValueError):
            pass
    return block


def cmd_fidelity(cfg: ExperimentConfig, out_dir=None, plot: bool = True) -> RunResult:
    """|F(t)| per (L, delta'), with decay fits and theory predictions."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(cfg)
    result = RunResult(out)
    runs, curves, fits_doc = [], {}, {}
    for n_sites in cfg.sizes:
        t0 = time.perf_counter()
        _, stats = _correlation_stats(cfg, n_sites)
        runs.append({"kind": "correlation", "L": n_sites, "seed": cfg.seed, "wall_time": time.perf_counter() - t0})
        result.unresolved |= stats.regime == "unresolved"
        for dp in cfg.delta_primes:
            delta = cfg.delta(dp, n_sites)
            t0 = time.perf_counter()
            series = fidelity_series(
                cfg.params, delta, cfg.t_max, cfg.averaging, n_sites, symmetrized=cfg.symmetrized
            )
            series.meta["delta_prime"] = dp
            wall = time.perf_counter() - t0
            csv_path = out / f"fid_{stem}_L{n_sites}_d{dp:g}.csv"
            series.write_csv(csv_path)
            result.files.append(csv_path)
            theory = _theory_block(stats, n_sites, delta, cfg)
            try:
                fit = fit_decay(series, n_sites)
                fit_doc = {"tau_fit": fit.tau, "rmse": fit.rmse, "window": list(fit.window), **fit.as_dict()}
            except InsufficientData as exc:
                fit, fit_doc = None, {"error": str(exc)}
            if fit is not None:
                regime = stats.regime if stats.regime != "unresolved" else fit.regime
            else:
                regime = stats.regime
            chosen = theory.get(regime, {})
            doc = {
                "regime": regime,
                "tau": chosen.get("tau"),
                "t_star": chosen.get("t_star"),
                "plateau": 2.0 ** (-n_sites / 2),
                "fit": fit_doc,
                "theory": theory,
                "delta": delta,
                "delta_prime": dp,
                "L": n_sites,
                "S_A": stats.S_A,
                "D_A": stats.D_A,
            }
            fits_doc[f"L{n_sites}_d{dp:g}"] = doc
            curves[(n_sites, dp)] = (series, doc)
            runs.append({"kind": "fidelity", "L": n_sites, "delta_prime": dp, "delta": delta, "seed": cfg.seed, "wall_time": wall})
            log.info("fidelity %s L=%d d'=%g: fit=%s", stem, n_sites, dp, fit_doc.get("regime"))
    result.files.append(_write_json(out / f"fid_{stem}_fits.json", _clean(fits_doc)))
    if plot:
        result.files.append(plotting.fidelity_figure(curves, out / f"fid_{stem}.png", stem))
    result.summary = fits_doc
    result.files.append(_write_manifest(cfg, out, runs, result.files))
    return result


def cmd_theory(
    params: KickedIsingParams,
    n_sites: int,
    delta_prime: float,
    s_a: float | None = None,
    c_a: float | None = None,
) -> dict:
    """Closed-form numbers for one parameter point, as a JSON-ready dict."""
    delta = scaled_delta(delta_prime, n_sites)
    report: dict = {
        "params": params.as_dict(),
        "L": n_sites,
        "delta_prime": delta_prime,
        "delta": delta,
        "plateau": 2.0 ** (-n_sites / 2),
    }
    try:
        dsx = d_sigma_x(params.j_z, params.h_x)
        report["D_sigma_x"] = dsx
        report["D_M"] = dsx * n_sites
        if dsx > 0 and delta != 0:
            tau = tau_nonergodic(dsx * n_sites, delta)
            report["tau_ne"] = tau
            report["t_star_ne"] = saturation("non_ergodic", tau, n_sites)[0]
    except SingularInput as exc:
        report["D_sigma_x"] = None
        report["D_sigma_x_error"] = str(exc)
    if s_a is not None and delta != 0:
        tau = tau_ergodic(s_a, delta)
        report["tau_e"] = tau
        report["t_star_e"] = saturation("ergodic", tau, n_sites)[0]
        if c_a is not None:
            report["delta_p"] = perturbative_threshold(s_a, c_a, n_sites)
    try:
        hx, hz = perturbed_field_map(params.h_x, params.h_z, delta)
        report["perturbed_fields"] = {"h_x": hx, "h_z": hz}
    except SingularInput as exc:
        report["perturbed_fields"] = None
        report["perturbed_fields_error"] = str(exc)
    return _clean(report)


def cmd_oracle_check(
    n_sites: int,
    params: KickedIsingParams,
    delta: float,
    t: int,
    *,
    oracle_order: str = "kick-then-zz",
    seed: int = 0,
    tolerance: float = 1e-10,
) -> oracle.OracleReport:
    """Compare gate evolution, C_M(t) and F(t) against dense matrices."""
    if n_sites > oracle.ORACLE_MAX_SITES:
        raise ValueError(f"oracle check needs L <= {oracle.ORACLE_MAX_SITES}, got {n_sites}")
    u = oracle.floquet(n_sites, params, oracle_order)
    u_d = oracle.perturbed_floquet(n_sites, params, delta, oracle_order)
    m = oracle.magnetization(n_sites)

    psi = random_state(n_sites, seed)
    ref = np.linalg.matrix_power(u, t) @ psi.amplitudes
    evolved = psi.amplitudes.copy()
    for _ in range(t):
        floquet_step(evolved, params)
    state_err = float(np.max(np.abs(evolved - ref)))

    exact = TraceAverageSpec("exact_basis_sum")
    corr = correlation_series(params, magnetization(n_sites), t, exact, per_site=False)
    corr_err = float(np.max(np.abs(corr.values - oracle.correlation(u, m, t))))
    fid = fidelity_series(params, delta, t, exact, n_sites)
    fid_err = float(np.max(np.abs(fid.values - oracle.fidelity(u, u_d, t))))
    return oracle.OracleReport(
        n_sites, params.as_dict(), delta, t, oracle_order, state_err, corr_err, fid_err, tolerance
    )


def reproduce(figure: str, base: ExperimentConfig | None = None, out_dir=None, plot: bool = True) -> list[RunResult]:
    """Run the three presets of the correlation (fig1) or fidelity (fig2) study."""
    if figure not in ("fig1", "fig2"):
        raise ValueError(f"unknown figure {figure!r}")
    out = Path(out_dir or (base.out_dir if base else "out")) / figure
    results = []
    for name in PRESETS:
        overrides = {}
        if base is not None:
            overrides = {
                k: v for k, v in base.to_dict().items() if k not in ("j_z", "h_x", "h_z", "name")
            }
        cfg = preset(name, **overrides)
        cmd = cmd_correlations if figure == "fig1" else cmd_fidelity
        results.append(cmd(cfg, out / name, plot=plot))
    gp = out / "plot.gp"
    gp.write_text(plotting.gnuplot_script(figure))
    return results
