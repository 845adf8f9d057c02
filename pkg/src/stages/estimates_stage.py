"""
Estimates stage - weak maximum principle for the run and a comparison family, truncation
energy chain, level profile, recursion constants and the Dirichlet section rate.
"""

from typing import Any, Dict

import numpy as np
import pandas as pd
from loguru import logger

from src.base_stage import BaseStage
from src.degiorgi import (constant_spread, dirichlet_section_bound, energy_chain_check, iteration_vanishing_level,
                          level_profile, recursion_constant, vanishing_level, weak_max_check, weak_max_family)
from src.models import IterationParams
from src.stages.inputs import CENTER, comparison_family, family_data

PROFILE_LEVELS = 33
MAX_CONSTANT_SPREAD = 10.0


class EstimatesStage(BaseStage):
    requires = ("solve",)
    operations = ("maxprinciple", "degiorgi")

    def __init__(self, *args):
        super().__init__("estimates", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        summary: Dict[str, Any] = {"q": self.config.q}
        if self.wants("maxprinciple"):
            summary.update(self._max_principle())
        if self.wants("degiorgi"):
            summary.update(self._degiorgi())
        self.summary(summary)
        return summary

    def _max_principle(self) -> Dict[str, Any]:
        cfg = self.config
        p = self.state_manager.get_artifact("potential")
        problem = self.state_manager.get_artifact("problem")
        result = self.state_manager.get_artifact("solution")

        weak = weak_max_check(p, problem, result, cfg.q)
        self.check("weak_max_finite", bool(np.isfinite(weak.constant_needed)), constant=weak.constant_needed)
        self.table("weak_max.csv", pd.DataFrame([{
            "sup_u": weak.sup_u, "boundary_sup_plus": weak.boundary_sup_plus, "Fphi_norm": weak.Fphi_norm,
            "f_norm": weak.f_norm, "omega_measure": weak.omega_measure, "bound_rhs": weak.bound_rhs,
            "constant_needed": weak.constant_needed, "degenerate": weak.degenerate,
        }]))

        (lo, hi), family = comparison_family(cfg, p)
        members = weak_max_family(family, cfg.q, family_data(cfg), cfg.threads)
        self.table("weak_max_family.csv", members)
        spread = constant_spread(members)
        self.check("weak_max_family_finite", bool(np.isfinite(members["constant_needed"]).all()),
                   max_constant=float(members["constant_needed"].max()))
        if np.isfinite(spread):
            self.check("weak_max_family_spread", spread <= MAX_CONSTANT_SPREAD, spread=spread)

        sections = dirichlet_section_bound(p, CENTER, cfg.heights, cfg.q)
        self.table("section_bound.csv", pd.DataFrame({"h": sections.heights, "sup_abs": sections.sup_abs}))

        logger.info(f"Max principle: C needed {weak.constant_needed:.4g}, family spread {spread:.3g}, "
                    f"section exponent {sections.fitted_exponent:.4f} (expected {sections.expected_exponent:.4f})")
        return {
            "q_star": weak.q_star,
            "sup_u": weak.sup_u,
            "boundary_sup_plus": weak.boundary_sup_plus,
            "Fphi_norm": weak.Fphi_norm,
            "f_norm": weak.f_norm,
            "constant_needed": weak.constant_needed,
            "degenerate": weak.degenerate,
            "family_size": len(members),
            "family_lambda_lo": lo,
            "family_lambda_hi": hi,
            "family_constant_spread": spread,
            "section_expected_exponent": sections.expected_exponent,
            "section_fitted_exponent": sections.fitted_exponent,
            "section_prefactor": sections.prefactor,
        }

    def _degiorgi(self) -> Dict[str, Any]:
        cfg = self.config
        p = self.state_manager.get_artifact("potential")
        problem = self.state_manager.get_artifact("problem")
        result = self.state_manager.get_artifact("solution")

        sobolev_constant = self.state_manager.get_artifact("sobolev_constant", 0.0)
        chain = energy_chain_check(p, problem, result, cfg.q, sobolev_constant)
        chain_rigorous = not np.any(np.nan_to_num(problem.g)[problem.mask])
        if chain_rigorous:
            self.check("energy_chain", chain.holds)
        self.table("energy_chain.csv", pd.DataFrame({"k": chain.levels, "energy": chain.energies,
                                                      "bound": chain.bounds}))

        u = result.u
        interior_values = u.values[problem.mask]
        levels = np.linspace(float(interior_values.min()), float(interior_values.max()), PROFILE_LEVELS)
        profile = level_profile(u, levels, problem.mask)
        self.table("level_profile.csv", pd.DataFrame({"k": profile.ks, "omega": profile.omegas}))
        self.check("profile_nonincreasing", bool(np.all(np.diff(profile.omegas) <= 0)))

        alpha = cfg.two_star
        beta = cfg.two_star * (cfg.q - 2.0) / (2.0 * cfg.q)
        recursion: Dict[str, Any] = {"alpha": alpha, "beta": beta}
        recursion_status = "not measured"
        if beta <= 1.0:
            logger.warning(f"Recursion exponent beta={beta:.4f} does not exceed 1 at q={cfg.q}, "
                           f"2*={cfg.two_star}; no vanishing level")
            recursion_status = "skipped (beta<=1)"
        elif profile.omegas[0] > 0:
            C = recursion_constant(profile, alpha, beta)
            if C > 0:
                d = iteration_vanishing_level(IterationParams(C, alpha, beta), float(profile.omegas[0]))
                recursion.update({"C": C, "d": d, "vanishing_level": vanishing_level(profile),
                                  "guaranteed_level": float(profile.ks[0]) + d})
                recursion_status = "measured"

        summary: Dict[str, Any] = {
            "energy_chain_holds": chain.holds,
            "energy_chain_checked": chain_rigorous,
            "F0": chain.F0,
            "sobolev_constant": sobolev_constant,
            "two_star": cfg.two_star,
        }
        summary.update({f"recursion_{k}": v for k, v in recursion.items()})
        summary["recursion"] = recursion_status
        return summary
