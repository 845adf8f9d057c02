"""
Transform stage - partial Legendre transform of the potential, its identity checks and the
transformed coefficient, flux and source of the run's equation.
"""

from typing import Any, Dict

import numpy as np
from loguru import logger

from src.base_stage import BaseStage
from src.models import GridFunction2D, TransformCheck, VectorField2D
from src.plegendre import (area_identity, dual_equation_residual, forward_map, integrability_transfer,
                           transform_potential, transform_problem)
from src.stages.inputs import flux_from_config, source_from_config

AREA_TOL = 0.05


class TransformStage(BaseStage):
    requires = ("validate",)

    def __init__(self, *args):
        super().__init__("transform", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        p = self.state_manager.get_artifact("potential")
        pmap = forward_map(p)
        t = transform_potential(p, pmap)
        self.state_manager.set_artifact("pmap", pmap)
        self.state_manager.set_artifact("transformed", t)

        area, measure = area_identity(t, p)
        eps = min(self.config.eps_ladder)
        transfer_lhs, transfer_rhs = integrability_transfer(t, p, eps)
        check = TransformCheck(
            sup_formula_vs_identities=max(t.crosscheck.get(k, 0.0) for k in ("d_xixi", "d_xieta", "d_etaeta")),
            first_derivative_error=max(t.crosscheck.get("d_xi", 0.0), t.crosscheck.get("d_eta", 0.0)),
            dual_residual=dual_equation_residual(t),
            area_identity_error=abs(area - measure) / measure,
        )
        self.store.save("phistar", t.phistar)
        self.store.save_array("phistar_xixi", t.d_xixi, t.phistar)

        F = flux_from_config(self.config, p)
        F = VectorField2D.zeros(p.phi.shape) if F is None else F
        tp = transform_problem(F, source_from_config(self.config, p), t, pmap)
        self.state_manager.set_artifact("transformed_problem", tp)
        for name in ("a", "G1", "G2", "g"):
            self.store.save(f"transformed_{name}", GridFunction2D(getattr(tp, name), tp.origin, tp.spacing, tp.mask))

        self.check("identities_finite", bool(np.isfinite(list(check.model_dump().values())).all()))
        self.check("area_identity", check.area_identity_error <= AREA_TOL, error=check.area_identity_error)
        summary = dict(check.model_dump())
        summary.update({
            "image_bbox": list(pmap.image_bbox),
            "target_nodes": int(t.phistar.mask.sum()),
            "transformed_nodes": int(tp.mask.sum()),
            "a_min": float(np.min(tp.a[tp.mask])),
            "a_max": float(np.max(tp.a[tp.mask])),
            "integrability_eps": eps,
            "integrability_lhs": transfer_lhs,
            "integrability_rhs": transfer_rhs,
        })
        self.summary(summary)
        logger.info(f"Transform: dual residual {check.dual_residual:.3e}, area error {check.area_identity_error:.3e}")
        return summary
