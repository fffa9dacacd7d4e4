# elapsed/runners/spectrum.py
import logging
from typing import Dict

import numpy as np

from elapsed.errors import ConfigError
from elapsed.grid import Grid, mass
from elapsed.models import ExperimentConfig
from elapsed.runners import build_kernel, generator_for, primary_steady
from elapsed.schemas import SpectrumSummary
from elapsed.spectrum import kato_positivity_check, match_eigenvalues, spectrum_report
from elapsed.store import OutputStore
from elapsed.utils import run_pool

logger = logging.getLogger(__name__)

name = "spectrum"
description = "spectra of the linearized generator over the connectivity sweep"

ZERO_TOL = 1e-8
CONTINUITY_TOL = 0.05
MASS_TOL = 1e-10


def run(config: ExperimentConfig, store: OutputStore) -> Dict[str, bool]:
    model = config.rate.build()
    kernel = build_kernel(config)
    n = config.spectrum.n or config.grid.n
    if n > config.spectrum.max_block:
        raise ConfigError(f"grid of {n} cells exceeds the dense block limit {config.spectrum.max_block}")
    grid = Grid(config.grid.x_max, n)

    def analyse(eps: float):
        steady = primary_steady(model, eps, grid, config)
        mat = generator_for(model, kernel, eps, steady)
        report = spectrum_report(mat, config.spectrum.cut)
        kato = kato_positivity_check(mat) if eps == 0 else None
        return mat, report, kato, abs(mass(steady.F) - 1.0)

    results = run_pool(analyse, config.eps, config.workers)

    rows, summaries = [], []
    for eps, (mat, report, kato, mass_error) in zip(config.eps, results):
        rows.extend([eps, lam.real, lam.imag] for lam in report.eigenvalues)
        summaries.append(
            SpectrumSummary(
                eps=eps,
                gap=report.gap,
                cut=report.cut,
                n_dominant=report.n_dominant,
                zero_re=report.zero_eig.real,
                zero_im=report.zero_eig.imag,
                zero_residual=report.zero_residual,
                positive=report.positive,
                cut_misuse=report.cut_misuse,
                a_star=report.a_star,
                a_sharp=report.a_sharp,
                dimension=report.dimension,
                kappa=mat.kappa,
                mass_error=mass_error,
                metzler=kato.metzler if kato else None,
                semigroup_positive=kato.positive if kato else None,
            )
        )
        logger.info("eps=%g: gap=%.6g dominant=%d zero=%.3g", eps, report.gap, report.n_dominant, abs(report.zero_eig))

    store.write_csv("spectrum.csv", ["eps", "re", "im"], rows)
    store.write_csv(
        "gap.csv",
        ["eps", "gap", "n_dominant"],
        [[s.eps, s.gap, s.n_dominant] for s in summaries],
    )

    order = np.argsort(config.eps, kind="stable")
    ordered = [summaries[i] for i in order]
    jumps = [abs(b.gap - a.gap) / max(abs(a.gap), abs(b.gap)) for a, b in zip(ordered, ordered[1:])]
    moves = []
    for i, j in zip(order, order[1:]):
        prev, cur = results[i][1], results[j][1]
        _, move = match_eigenvalues(prev.eigenvalues[: prev.n_dominant], cur.eigenvalues[: cur.n_dominant])
        moves.append(move)
    store.write_json(
        "report.json",
        {
            "records": [s.model_dump(mode="json") for s in summaries],
            "max_gap_jump": max(jumps, default=0.0),
            "max_dominant_move": max(moves, default=0.0),
        },
    )

    kr = [s for s in summaries if s.eps == 0]
    return {
        "normalized": all(s.mass_error <= MASS_TOL for s in summaries),
        "zero_in_spectrum": all(abs(complex(s.zero_re, s.zero_im)) <= ZERO_TOL for s in summaries),
        "single_dominant": all(s.n_dominant == 1 for s in summaries),
        "cut_sane": not any(s.cut_misuse for s in summaries),
        "gap_negative": all(s.gap < 0 for s in summaries),
        "gap_continuous": max(jumps, default=0.0) <= CONTINUITY_TOL,
        "krein_rutman": all(s.positive and s.metzler and s.semigroup_positive for s in kr),
    }
