# elapsed/runners/relax.py
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from elapsed.dynamics import NORM_FLOOR, DecayFit, Trajectory, discrete_steady, fit_decay_rate, initial_density, simulate
from elapsed.models import ExperimentConfig
from elapsed.runners import build_kernel, eps_tag, generator_for, primary_steady
from elapsed.schemas import DecayRecord
from elapsed.spectrum import spectrum_report
from elapsed.store import OutputStore
from elapsed.utils import run_pool

logger = logging.getLogger(__name__)

name = "relax"
description = "nonlinear relaxation towards the steady state and its decay rate"

STATIONARY_TOL = 1e-10


def usable_window(traj: Trajectory, window: Tuple[float, float]) -> Optional[Tuple[float, float]]:
    """Shrink ``window`` to the times where the distance stays above the floor."""
    t1, t2 = window
    above = np.nonzero(traj.l1_dist > 10 * NORM_FLOOR)[0]
    if above.size == 0:
        return None
    t2 = min(t2, float(traj.t[above[-1]]))
    return (t1, t2) if t2 > t1 else None


def relax_one(config: ExperimentConfig, eps: float, amplitude: float, t_final: float, kind: Optional[str] = None):
    """Simulate from the configured initial condition; returns the trajectory, fit and reference."""
    model = config.rate.build()
    kernel = build_kernel(config)
    grid = config.grid.build()
    base = primary_steady(model, eps, grid, config)
    reference = discrete_steady(model, eps, grid, base.M)
    spec = config.initial
    f0 = initial_density(grid, reference.F, kind or spec.kind, amplitude, spec.shape, spec.width)
    traj = simulate(model, kernel, eps, f0, t_final, reference.F, config.record_every, config.snapshot_every)

    fit: Optional[DecayFit] = None
    if np.nanmax(traj.l1_dist) > STATIONARY_TOL:
        scale = t_final / config.t_final
        window = usable_window(traj, tuple(scale * t for t in config.window()))
        if window is not None:
            fit = fit_decay_rate(traj, window)
    return traj, fit, base


def run(config: ExperimentConfig, store: OutputStore) -> Dict[str, bool]:
    model = config.rate.build()
    kernel = build_kernel(config)
    config.grid.build().check_adequacy(model)
    amplitude = config.initial.amplitude if config.initial.kind == "perturbed" else 0.0

    def relax(eps: float):
        traj, fit, base = relax_one(config, eps, amplitude, config.t_final)
        gap = None
        if config.grid.n <= config.spectrum.max_block:
            report = spectrum_report(generator_for(model, kernel, eps, base), config.spectrum.cut)
            gap = report.gap
        return traj, fit, gap

    results = run_pool(relax, config.eps, config.workers)

    records = []
    for k, (eps, (traj, fit, gap)) in enumerate(zip(config.eps, results)):
        tag = eps_tag(k)
        store.write_csv(f"trajectory_{tag}.csv", ["t", "mass", "p", "m", "l1_dist"], traj.to_columns())
        grid = config.grid.build()
        for t, values in sorted(traj.snapshots.items()):
            store.write_csv(f"snapshots/{tag}/snapshot_t{t:.4f}.csv", ["x", "f"], np.column_stack([grid.centers, values]))
        record = DecayRecord(eps=eps, stationary=fit is None, mass_drift=traj.mass_drift, amplitude=amplitude, gap=gap)
        if fit is not None:
            record.alpha, record.C, record.r2 = fit.alpha, fit.C, fit.r2
            if gap is not None and gap != 0:
                record.relative_error = abs(fit.alpha - gap) / abs(gap)
            logger.info("eps=%g: alpha=%.5g r2=%.5f gap=%s", eps, fit.alpha, fit.r2, gap)
        else:
            logger.info("eps=%g: stationary trajectory, no decay fit", eps)
        records.append(record)
    store.write_records("decay.json", records)

    fitted = [r for r in records if not r.stationary]
    return {
        "mass_conserved": all(r.mass_drift <= 1e-10 for r in records),
        "decays": all(r.alpha < 0 for r in fitted),
        "fit_quality": all(r.r2 >= 0.99 for r in fitted),
        "matches_gap": all(r.relative_error is None or r.relative_error <= 0.1 for r in fitted),
    }
