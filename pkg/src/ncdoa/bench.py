"""Monte Carlo harness: metrics, bounds per sweep point, CSV output."""
from __future__ import annotations

import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import ScenarioConfig
from .crb import CrbResult, NotIdentifiableError, crb_correlated, crb_uncorrelated
from .estimators import Grid, init_from_spice, mle_correlated, mle_uncorrelated, pick_peaks
from .estimators.spice import SpiceProblem, spice_solve
from .signals import (NoiseModel, SourceModel, generate_snapshots, sample_covariances,
                      snr_to_noise_variance)

__all__ = [
    "RunRecord",
    "match_estimates",
    "rmse",
    "resolution_percentage",
    "crb_summary",
    "scenario_bound",
    "trial_seed",
    "run_trial",
    "run_monte_carlo",
    "records_to_csv",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

CSV_HEADER = "sweep,estimator,rmse_deg,resolution_pct,crb_deg,trials,failures"


@dataclass
class RunRecord:
    """Aggregate over the trials of one sweep point for one estimator."""

    sweep: float
    estimator: str
    rmse_deg: float
    resolution_pct: float
    crb_deg: float
    trials: int
    failures: int
    wall_time: float = 0.0


def match_estimates(estimates, truth) -> np.ndarray:
    """Reorder each trial's estimates to minimize total squared error.

    Parameters
    ----------
    estimates : array_like (T, L)
    truth : array_like (L,)
    """
    est = np.atleast_2d(np.asarray(estimates, float))
    truth = np.atleast_1d(np.asarray(truth, float))
    out = np.empty_like(est)
    for t, row in enumerate(est):
        cost = (row[:, None] - truth[None, :]) ** 2
        r, c = linear_sum_assignment(cost)
        out[t, c] = row[r]
    return out


def rmse(estimates, truth) -> float:
    """``sqrt(mean over trials and sources of squared error)`` after matching.

    >>> round(rmse([[1.0], [3.0]], [0.0]), 4)
    2.2361
    """
    m = match_estimates(estimates, truth)
    return float(np.sqrt(np.mean((m - np.asarray(truth, float)) ** 2)))


def resolution_percentage(estimates, truth) -> float:
    """Share of trials whose every error is strictly below half the minimum
    pairwise separation of the true directions.  A single source has no
    separation to resolve and always counts as resolved."""
    truth = np.atleast_1d(np.asarray(truth, float))
    m = match_estimates(estimates, truth)
    if truth.size < 2:
        return 100.0
    s = np.sort(truth)
    half = 0.5 * np.min(np.diff(s))
    ok = np.all(np.abs(m - truth) < half, axis=1)
    return float(100.0 * ok.mean())


def crb_summary(crb) -> float:
    """``sqrt(mean(diag))`` in degrees; accepts a CrbResult or a matrix in deg^2."""
    if isinstance(crb, CrbResult):
        return crb.summary_deg
    d = np.diag(np.asarray(crb, float))
    return float(np.sqrt(max(d.mean(), 0.0)))


def _model(cfg: ScenarioConfig, doas_deg) -> SourceModel:
    th = np.deg2rad(doas_deg)
    if cfg.correlation:
        return SourceModel.correlated_pair(th, cfg.power, cfg.correlation)
    return SourceModel(th, np.full(len(doas_deg), cfg.power))


def scenario_bound(cfg: ScenarioConfig, index: int) -> CrbResult | None:
    """Bound for sweep point ``index``; None when not identifiable."""
    pt = cfg.point(index)
    array = cfg.array()
    model = _model(cfg, pt["doas_deg"])
    s2 = snr_to_noise_variance(pt["snr_db"], cfg.power)
    try:
        if model.is_uncorrelated:
            return crb_uncorrelated(array, model.doas, model.powers, s2, pt["snapshots"])
        return crb_correlated(array, model.doas, model.source_covariance, s2, pt["snapshots"])
    except NotIdentifiableError as exc:
        log.info("no bound at sweep %s: %s", pt["sweep"], exc)
        return None


def trial_seed(master: int, index: int, trial: int) -> np.random.SeedSequence:
    """Counter-based stream for one trial, independent of execution order."""
    return np.random.SeedSequence(int(master), spawn_key=(int(index), int(trial)))


_CACHE: dict = {}


def _context(cfg: ScenarioConfig):
    key = repr((cfg.geometry, cfg.extra_sensor, cfg.offsets, cfg.displacements,
                cfg.grid_step_deg, cfg.fov_deg))
    if key not in _CACHE:
        _CACHE.clear()
        _CACHE[key] = (cfg.array(), Grid.uniform(cfg.grid_step_deg, tuple(cfg.fov_deg)))
    return _CACHE[key]


def run_trial(cfg: ScenarioConfig, index: int, trial: int) -> dict:
    """One trial at one sweep point.

    Returns ``{estimator: (estimates_deg or None, failed)}``.  A failed ML
    run reports the SPICE peaks; an exception leaves no estimate.
    """
    array, grid = _context(cfg)
    pt = cfg.point(index)
    L = len(pt["doas_deg"])
    model = _model(cfg, pt["doas_deg"])
    noise = NoiseModel.from_snr(pt["snr_db"], cfg.power)
    batches = generate_snapshots(array, model, noise, pt["snapshots"],
                                 trial_seed(cfg.seed, index, trial), cfg.shared_sources)
    covset = sample_covariances(batches)
    out = {}
    try:
        sp = spice_solve(array, covset, grid, problem=SpiceProblem(array, covset, grid))
    except np.linalg.LinAlgError as exc:
        log.warning("sweep %s trial %d: SPICE failed: %s", pt["sweep"], trial, exc)
        return {e: (None, True) for e in cfg.estimators}
    peaks = pick_peaks(sp.powers, grid, L)
    out["spice"] = (peaks, not sp.converged)
    level = float(np.mean([np.trace(r).real / r.shape[0] for r in covset.matrices]))
    for est in cfg.estimators:
        if est == "spice":
            continue
        init = init_from_spice(sp, grid, L, level)
        solver = mle_uncorrelated if est == "mle" else mle_correlated
        try:
            res = solver(array, covset, init)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.warning("sweep %s trial %d: %s failed: %s", pt["sweep"], trial, est, exc)
            out[est] = (None, True)
            continue
        if res.converged:
            out[est] = (res.doas_deg, False)
        else:
            log.info("sweep %s trial %d: %s did not converge (%s)", pt["sweep"], trial,
                     est, res.message)
            out[est] = (peaks, True)
    return out


def _task(args):
    cfg, index, trial = args
    t0 = time.perf_counter()
    res = run_trial(cfg, index, trial)
    return index, trial, res, time.perf_counter() - t0


def run_monte_carlo(cfg: ScenarioConfig, threads: int = 1, progress=None) -> list:
    """Run every sweep point and estimator.

    Results depend only on the configuration (including its seed), not on
    ``threads``: each trial has its own random stream and aggregation
    happens in (sweep, trial) order.
    """
    tasks = [(cfg, i, t) for i in range(len(cfg.sweep_values())) for t in range(cfg.trials)]
    if threads <= 1:
        results = []
        for task in tasks:
            results.append(_task(task))
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    results.sort(key=lambda r: (r[0], r[1]))

    records = []
    for i, value in enumerate(cfg.sweep_values()):
        rows = [r for r in results if r[0] == i]
        truth = cfg.point(i)["doas_deg"]
        bound = scenario_bound(cfg, i)
        crb_deg = bound.summary_deg if bound is not None else float("nan")
        wall = float(sum(r[3] for r in rows))
        for est in cfg.estimators:
            got = [r[2][est] for r in rows]
            failures = sum(1 for e, failed in got if failed)
            est_rows = [e for e, _ in got if e is not None]
            if est_rows:
                arr = np.vstack(est_rows)
                err, res_pct = rmse(arr, truth), resolution_percentage(arr, truth)
            else:
                err, res_pct = float("nan"), 0.0
            records.append(RunRecord(value, est, err, res_pct, crb_deg, len(rows),
                                     failures, wall))
    return records


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.10g}"


def records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in records:
        buf.write(",".join([_fmt(r.sweep), r.estimator, _fmt(r.rmse_deg), _fmt(r.resolution_pct),
                            _fmt(r.crb_deg), str(r.trials), str(r.failures)]) + "\n")
    return buf.getvalue()
