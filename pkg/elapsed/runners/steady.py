# elapsed/runners/steady.py
import logging
from typing import Dict

from elapsed.grid import mass
from elapsed.models import ExperimentConfig
from elapsed.runners import eps_tag
from elapsed.schemas import SteadyRow, SteadySummary
from elapsed.steady import solve_steady, uniqueness_margin
from elapsed.store import OutputStore
from elapsed.utils import run_pool

logger = logging.getLogger(__name__)

name = "steady"
description = "steady states and uniqueness margins over the connectivity sweep"


def run(config: ExperimentConfig, store: OutputStore) -> Dict[str, bool]:
    model = config.rate.build()
    grid = config.grid.build()
    grid.check_adequacy(model)

    def solve(eps: float):
        states = solve_steady(model, eps, grid, config.scan.m_max, config.scan.n_scan)
        for state in states:
            state.margin = uniqueness_margin(model, eps, state.M, grid)
        refined = None
        if config.scan.refine_check:
            refined = len(solve_steady(model, eps, grid.refined(), config.scan.m_max, config.scan.n_scan))
        return states, refined

    results = run_pool(solve, config.eps, config.workers)

    rows, summaries = [], []
    mass_ok = True
    for k, (eps, (states, refined)) in enumerate(zip(config.eps, results)):
        for j, state in enumerate(states):
            rows.append(SteadyRow(eps=eps, root_index=j, M=state.M, residual=state.residual, margin=state.margin))
            mass_ok &= abs(mass(state.F) - 1.0) <= 1e-10
            store.write_density(f"profiles/{eps_tag(k)}_root_{j}.csv", state.F, column="F")
        summaries.append(
            SteadySummary(
                eps=eps,
                root_count=len(states),
                refined_root_count=refined,
                min_margin=min(s.margin for s in states),
            )
        )
        logger.info("eps=%g: %d root(s), M=%s", eps, len(states), ", ".join(f"{s.M:.10g}" for s in states))

    store.write_csv(
        "steady_roots.csv",
        ["eps", "root_index", "M", "residual", "margin"],
        [[r.eps, r.root_index, r.M, r.residual, r.margin] for r in rows],
    )
    store.write_records("steady_summary.json", summaries)

    return {
        "roots_found": all(s.root_count >= 1 for s in summaries),
        "unique": all(s.root_count == 1 for s in summaries),
        "margins_positive": all(s.min_margin > 0 for s in summaries),
        "refinement_stable": all(s.refined_root_count in (None, s.root_count) for s in summaries),
        "normalized": bool(mass_ok),
        "residuals": all(r.residual <= 1e-12 for r in rows),
    }
