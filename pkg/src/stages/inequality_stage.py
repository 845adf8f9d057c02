"""
Inequality stage - empirical Sobolev constant and Moser-Trudinger integrals over bump families.
"""

from typing import Any, Dict

import numpy as np
from loguru import logger

from src.base_stage import BaseStage
from src.convex_core import cofactor
from src.inequalities import estimate_eps0, moser_family, moser_threshold, sobolev_family
from src.sample_fields import moser_bump, sample_on
from src.stages.inputs import CENTER

MOSER_LEVELS = 4
MOSER_RADIUS = 0.8
MOSER_CAP_FACTOR = 10.0


class InequalityStage(BaseStage):
    requires = ("validate",)
    operations = ("sobolev", "moser")

    def __init__(self, *args):
        super().__init__("inequalities", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        p = self.state_manager.get_artifact("potential")
        c = cofactor(p)
        summary: Dict[str, Any] = {"two_star": self.config.two_star}
        if self.wants("sobolev"):
            summary.update(self._sobolev(p, c))
        if self.wants("moser"):
            summary.update(self._moser(p, c))
        self.summary(summary)
        return summary

    def _sobolev(self, p, c) -> Dict[str, Any]:
        cfg = self.config
        table = sobolev_family(p.phi, c, cfg.sobolev_trials, cfg.seed, cfg.two_star)
        self.table("sobolev.csv", table)
        sobolev_constant = float(table["ratio"].max())
        self.state_manager.set_artifact("sobolev_constant", sobolev_constant)
        self.check("sobolev_finite", bool(np.isfinite(table["ratio"]).all()), max_ratio=sobolev_constant)
        logger.info(f"Sobolev: C_Sob >= {sobolev_constant:.6f} over {len(table)} trials")
        return {"sobolev_trials": len(table), "sobolev_constant": sobolev_constant}

    def _moser(self, p, c) -> Dict[str, Any]:
        cfg = self.config
        eps0 = estimate_eps0(p, cfg.eps_ladder)
        beta = cfg.beta if cfg.beta is not None else moser_threshold(eps0, p.lambda_lo)
        h = max(p.phi.spacing)
        R = MOSER_RADIUS * cfg.extent
        radii = [3.0 * h * 2.0 ** level for level in range(MOSER_LEVELS)]
        bumps = [sample_on(p.phi, moser_bump(CENTER, R, r)) for r in radii]
        moser, C = moser_family(bumps, p, c, beta, eps0)
        moser.insert(1, "r", radii)
        self.table("moser.csv", moser)

        measure = p.phi.measure()
        worst = float(moser["lhs"].max())
        self.check("moser_finite", bool(np.isfinite(moser["lhs"]).all() and not moser["saturated"].any()))
        self.check("moser_constant", bool(np.isfinite(C) and C > 0 and (moser["ratio"] <= 1.0 + 1e-12).all()),
                   C=C)
        self.check("moser_below_cap", worst < MOSER_CAP_FACTOR * measure, max_integral=worst)
        logger.info(f"Moser: eps0 = {eps0}, beta = {beta:.6f}, measured C = {C:.6g}")
        return {
            "eps0": eps0,
            "beta": beta,
            "moser_constant": C,
            "moser_max_integral": worst,
            "omega_measure": measure,
            "moser_max_ratio": float(moser["ratio"].max()),
        }
