"""End-to-end analysis: table -> fit -> report."""

from __future__ import annotations

from .data import ObservationTable, summarize
from .effects import EffectReport, build_report
from .gmm import GmmFit, HacConfig, itgmm_fit


def analyze(
    table: ObservationTable,
    config: HacConfig = HacConfig(),
    tol: float = 1e-8,
    max_iter: int = 100,
    threads: int | None = None,
) -> tuple[EffectReport, GmmFit]:
    fit = itgmm_fit(table, config, tol=tol, max_iter=max_iter, threads=threads)
    report = build_report(fit, summarize(table, threads))
    return report, fit
