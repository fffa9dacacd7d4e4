# elapsed/runners/basin.py
import logging
from typing import Dict, List, Tuple

from elapsed.errors import ContractionViolated, NegativeDensity, NoConvergence
from elapsed.models import ExperimentConfig
from elapsed.runners.relax import relax_one
from elapsed.schemas import BasinRow
from elapsed.store import OutputStore
from elapsed.utils import run_pool

logger = logging.getLogger(__name__)

name = "basin"
description = "empirical basin: largest perturbation amplitude that still relaxes"

MASS_TOL = 1e-10


def nan_if_none(value):
    return float("nan") if value is None else value


def trial(config: ExperimentConfig, eps: float, amplitude: float) -> BasinRow:
    """One relaxation run; leaving the weak regime counts as not decaying."""
    if amplitude == 0:
        return BasinRow(eps=eps, amplitude=0.0, decays=True, mass_drift=0.0)
    try:
        traj, fit, _ = relax_one(config, eps, amplitude, config.basin.t_final, kind="perturbed")
    except (ContractionViolated, NoConvergence, NegativeDensity) as exc:
        logger.info("eps=%g amplitude=%g left the weak regime: %s", eps, amplitude, exc.detail)
        return BasinRow(eps=eps, amplitude=amplitude, decays=False)
    if fit is None:
        return BasinRow(eps=eps, amplitude=amplitude, decays=True, mass_drift=traj.mass_drift)
    decays = fit.alpha < 0 and traj.l1_dist[-1] < traj.l1_dist[0]
    return BasinRow(eps=eps, amplitude=amplitude, decays=decays, alpha=fit.alpha, mass_drift=traj.mass_drift)


def basin_for(config: ExperimentConfig, eps: float) -> Tuple[float, List[BasinRow]]:
    """Walk up the amplitude ladder, then bisect between the last decaying and first failing rung."""
    rows: List[BasinRow] = []
    good, bad = 0.0, None
    for amplitude in config.basin.amplitudes:
        row = trial(config, eps, amplitude)
        rows.append(row)
        if not row.decays:
            bad = amplitude
            break
        good = amplitude
    if bad is not None:
        for _ in range(config.basin.bisection_steps):
            mid = 0.5 * (good + bad)
            row = trial(config, eps, mid)
            rows.append(row)
            if row.decays:
                good = mid
            else:
                bad = mid
    return good, rows


def run(config: ExperimentConfig, store: OutputStore) -> Dict[str, bool]:
    results = run_pool(lambda eps: basin_for(config, eps), config.eps, config.workers)

    curve = sorted(((eps, basin) for eps, (basin, _) in zip(config.eps, results)), key=lambda item: item[0])
    trials = [row for _, rows in results for row in rows]
    for eps, basin in curve:
        logger.info("eps=%g: basin amplitude %.4g", eps, basin)

    store.write_csv("basin.csv", ["eps", "amplitude"], [list(item) for item in curve])
    store.write_csv(
        "basin_trials.csv",
        ["eps", "amplitude", "decays", "alpha", "mass_drift"],
        [
            [r.eps, r.amplitude, float(r.decays), nan_if_none(r.alpha), nan_if_none(r.mass_drift)]
            for r in trials
        ],
    )

    basins = [basin for _, basin in curve]
    return {
        "zero_amplitude_decays": all(r.decays for r in trials if r.amplitude == 0),
        "nonincreasing": all(b <= a + 1e-12 for a, b in zip(basins, basins[1:])),
        "mass_conserved": all(r.mass_drift <= MASS_TOL for r in trials if r.mass_drift is not None),
    }
