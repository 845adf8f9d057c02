"""
Regularity stage - oscillation decay of the solved field and Harnack ratios, for the run's
potential and for a random family with comparable determinant bounds.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.base_stage import BaseStage
from src.errors import LMAError
from src.models import ConvexPotential
from src.regularity_harness import harnack_ratio, holder_scan
from src.stages.inputs import CENTER, comparison_family


def positive_boundary_data(extent: float):
    return lambda x1, x2: 1.0 + 0.5 * x1 / extent


class RegularityStage(BaseStage):
    requires = ("solve",)
    operations = ("holder", "harnack")

    def __init__(self, *args):
        super().__init__("regularity", *args)

    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        summary: Dict[str, Any] = {}
        if self.wants("holder"):
            summary.update(self._holder())
        if self.wants("harnack"):
            summary.update(self._harnack())
        self.summary(summary)
        return summary

    def _holder(self) -> Dict[str, Any]:
        cfg = self.config
        p = self.state_manager.get_artifact("potential")
        u = self.state_manager.get_artifact("solution").u

        holder = holder_scan(u, p, CENTER, cfg.heights, cfg.q)
        self.table("holder.csv", pd.DataFrame({"h": holder.heights, "osc": holder.oscillations,
                                               "osc_half": holder.inputs_summary["half_oscillations"]}))
        self.check("oscillation_monotone", bool(np.all(np.diff(holder.oscillations) <= 0)))
        self.check("two_scale_decay", holder.two_scale_holds, theta=holder.theta, K=holder.K)
        logger.info(f"Holder: gamma0={holder.gamma0:.4f}, theta={holder.theta:.4f}")
        return {
            "gamma0": holder.gamma0,
            "prefactor": holder.prefactor,
            "theta": holder.theta,
            "K": holder.K,
            "dropped_heights": holder.dropped,
        }

    def _family_ratio(self, p: ConvexPotential) -> Optional[float]:
        try:
            boundary = positive_boundary_data(self.config.extent)
            return harnack_ratio(p, CENTER, self.config.harnack_height, boundary).ratio
        except LMAError as e:
            logger.warning(f"Harnack ratio unavailable for {p.name}: {e}")
            return None

    def _harnack(self) -> Dict[str, Any]:
        cfg = self.config
        p = self.state_manager.get_artifact("potential")

        harnack = harnack_ratio(p, CENTER, cfg.harnack_height, positive_boundary_data(cfg.extent))
        self.check("harnack_at_least_one", harnack.ratio >= 1.0, ratio=harnack.ratio)
        self.table("harnack.csv", pd.DataFrame([{"h": cfg.harnack_height, "sup": harnack.sup_inner,
                                                 "inf": harnack.inf_inner, "ratio": harnack.ratio}]))

        (lo, hi), family = comparison_family(cfg, p)
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            ratios = list(pool.map(self._family_ratio, family))
        table = pd.DataFrame({"member": range(len(family)), "potential": [m.name for m in family],
                              "ratio": [np.nan if r is None else r for r in ratios]})
        self.table("harnack_family.csv", table)
        measured = table["ratio"].dropna()
        self.check("harnack_family_finite", bool(len(measured) > 0 and np.isfinite(measured).all()),
                   max_ratio=float(measured.max()) if len(measured) else None)
        logger.info(f"Harnack: ratio {harnack.ratio:.4f}, family max {measured.max() if len(measured) else np.nan}")
        return {
            "harnack_ratio": harnack.ratio,
            "harnack_sup": harnack.sup_inner,
            "harnack_inf": harnack.inf_inner,
            "family_size": len(family),
            "family_lambda_lo": lo,
            "family_lambda_hi": hi,
            "family_max_ratio": float(measured.max()) if len(measured) else float("nan"),
        }
