"""
Validation stage - builds the potential and measures its convexity and section geometry.
"""

from typing import Any, Dict

import numpy as np
import pandas as pd
from loguru import logger

from src.base_stage import BaseStage
from src.convex_core import cofactor, divergence_free_residual, modulus_of_convexity, section_volume_fit
from src.stages.inputs import CENTER, potential_from_config


class ValidationStage(BaseStage):
    """Builds and validates the convex potential every later stage works on"""

    def __init__(self, *args):
        super().__init__("validate", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        cfg = self.config
        p = potential_from_config(cfg)
        self.state_manager.set_artifact("potential", p)
        report = p.report

        c = cofactor(p)
        div_residual = divergence_free_residual(c)
        h = max(p.phi.spacing)
        ts = h * np.arange(1, 9)
        modulus = modulus_of_convexity(p, ts, seed=cfg.seed)
        vol_lo, vol_hi = section_volume_fit(p, CENTER, cfg.heights)

        self.table("modulus.csv", pd.DataFrame({"t": modulus.ts, "m": modulus.ms}))
        self.store.save("phi", p.phi)
        self.store.save_array("det", p.det, p.phi)

        self.check("modulus_positive", bool(np.all(modulus.ms > 0)), min_modulus=float(np.min(modulus.ms)))
        self.check("modulus_nondecreasing", bool(np.all(np.diff(modulus.ms) >= 0)))
        summary = {
            "potential": p.name,
            "grid": list(p.phi.shape),
            "lambda_lo": p.lambda_lo,
            "lambda_hi": p.lambda_hi,
            "det_min": report.det_min,
            "det_max": report.det_max,
            "min_eigenvalue": report.min_eigenvalue,
            "midpoint_pairs": report.midpoint_pairs,
            "cofactor_divergence_residual": div_residual,
            "section_volume_ratio_min": vol_lo,
            "section_volume_ratio_max": vol_hi,
        }
        self.summary(summary)
        logger.info(f"Validated potential {p.name}: det in [{report.det_min:.4g}, {report.det_max:.4g}]")
        return summary
