"""
Solve stage - direct solve of the LMA problem, energy minimality, and the cross-check
against the transform-solve-pullback path.
"""

from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.base_stage import BaseStage
from src.elliptic_solver import (direct_problem, direct_vs_transformed, manufactured_problem, minimality_check, solve,
                                 solver_stats)
from src.models import GridFunction2D
from src.stages.inputs import (CENTER, flux_from_config, linear_boundary_data, manufactured_solution,
                               source_from_config)

COMPARISON_RADIUS = 0.6
MINIMALITY_TRIALS = 20


class SolveStage(BaseStage):
    requires = ("validate",)
    operations = ("solve", "compare-paths")

    def __init__(self, *args):
        super().__init__("solve", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        cfg = self.config
        p = self.state_manager.get_artifact("potential")
        F = flux_from_config(cfg, p)
        f = source_from_config(cfg, p)
        exact_fn = manufactured_solution(cfg.manufactured, cfg.extent)
        u_exact = GridFunction2D.from_function(exact_fn, p.phi.shape, p.phi.origin, p.phi.spacing, p.phi.mask) \
            if exact_fn is not None else None

        if u_exact is not None:
            problem = manufactured_problem(u_exact, p, F)
        else:
            problem = direct_problem(p, F, f, dirichlet=linear_boundary_data(p))
        result = solve(problem)
        for name, value in (("problem", problem), ("solution", result), ("flux", F), ("source", f)):
            self.state_manager.set_artifact(name, value)
        self.store.save("u", result.u)

        stats = solver_stats(result)
        summary: Dict[str, Any] = {
            **stats,
            "sup_u": float(np.max(result.u.values[result.u.mask])),
            "inf_u": float(np.min(result.u.values[result.u.mask])),
        }
        if u_exact is not None:
            summary["max_error"] = float(np.max(np.abs(result.u.values - u_exact.values)[problem.mask]))
        if self.wants("solve"):
            summary.update(self._minimality(problem, result, stats))
        if self.wants("compare-paths"):
            summary.update(self._compare_paths(p, F, f, u_exact))
        self.summary(summary)
        logger.info(f"Solve: sup u={summary['sup_u']:.6g} in {stats['wall_time']:.2f}s")
        return summary

    def _minimality(self, problem, result, stats: Dict[str, float]) -> Dict[str, Any]:
        minimal = minimality_check(problem, result, trials=MINIMALITY_TRIALS, seed=self.config.seed)
        self.check("energy_minimal", minimal["holds"], min_gain=minimal["min_gain"])
        self.table("solver_stats.csv", pd.DataFrame([{
            "unknowns": stats["unknowns"], "iterations": stats["iterations"], "residual": stats["residual"],
            "energy": minimal["energy"], "minimality_gain": minimal["min_gain"],
        }]))
        return {"energy": minimal["energy"], "minimality_gain": minimal["min_gain"]}

    def _compare_paths(self, p, F, f, u_exact: Optional[GridFunction2D]) -> Dict[str, Any]:
        cfg = self.config
        comparison = direct_vs_transformed(p, F, f, COMPARISON_RADIUS * cfg.extent, CENTER, u_exact=u_exact)
        self.check("path_agreement", comparison.max_discrepancy <= cfg.path_tol,
                   max_discrepancy=comparison.max_discrepancy)
        row = {"radius": COMPARISON_RADIUS * cfg.extent, "region_nodes": comparison.region_nodes,
               "max_discrepancy": comparison.max_discrepancy, "l2_discrepancy": comparison.l2_discrepancy}
        if u_exact is not None:
            row["max_error_transformed"] = comparison.max_error_transformed
        self.table("paths.csv", pd.DataFrame([row]))
        logger.info(f"Paths: max discrepancy {comparison.max_discrepancy:.3e}")
        return {f"path_{k}": v for k, v in row.items()}
