"""
Error types raised by the numerical core.
Every error carries a details payload so stage wrappers can report it without re-deriving context.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

MAX_REPORTED_NODES = 20


def node_list(mask: np.ndarray, limit: int = MAX_REPORTED_NODES) -> List[Tuple[int, int]]:
    """Return up to `limit` (i, j) index pairs where mask is True"""
    idx = np.argwhere(mask)
    return [(int(i), int(j)) for i, j in idx[:limit]]


class LMAError(Exception):
    """Base error for the partial-Legendre LMA toolkit"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Serializable view used by stage reports"""
        return {"error": type(self).__name__, "message": self.message, "details": self.details}


class NodeListError(LMAError):
    """Error that points at offending grid nodes"""

    def __init__(self, message: str, nodes: Sequence[Tuple[int, int]] = (), count: Optional[int] = None,
                 details: Optional[Dict[str, Any]] = None):
        payload = dict(details or {})
        payload["nodes"] = list(nodes)[:MAX_REPORTED_NODES]
        payload["count"] = int(count if count is not None else len(nodes))
        super().__init__(message, payload)
        self.nodes = list(nodes)


class NonConvex(NodeListError):
    """Discrete Hessian indefinite or midpoint convexity violated"""


class DetOutOfBounds(NodeListError):
    """det D^2 phi leaves [lambda - tol, Lambda + tol]"""


class EmptySection(LMAError):
    """No grid node qualifies for the requested section"""


class SectionNotCompact(LMAError):
    """Section reaches the boundary band of the domain"""


class NotMonotone(NodeListError):
    """phi_{x1} fails to increase strictly along an eta-slice"""


class DegenerateImage(LMAError):
    """Inscribed disk of the image is below one grid cell"""


class OutsideImage(NodeListError):
    """Requested nodes have no preimage / interpolation support"""


class EllipticityViolated(NodeListError):
    """Transformed coefficient leaves [lambda - tol, Lambda + tol]"""


class SingularSystem(LMAError):
    """Assembled system is not SPD"""


class NoConvergence(LMAError):
    """Iterative solver hit its iteration cap"""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message, {"iterations": iterations, "residual": residual})
        self.iterations = iterations
        self.residual = residual


class NotSPD(NodeListError):
    """Hessian not symmetric positive definite where a square root is needed"""


class BetaNotAboveOne(LMAError):
    """Iteration lemma requires beta > 1"""


class DegenerateDenominator(LMAError):
    """Data norms vanish so no constant can be measured"""


class MaxPrincipleViolated(LMAError):
    """Interior supremum exceeds the boundary bound beyond tolerance"""


class ZeroEnergy(LMAError):
    """Test function has vanishing (Phi-)Dirichlet energy"""


class FitIllConditioned(LMAError):
    """Too few usable points for a log-log fit"""


class NonPositiveSolution(NodeListError):
    """Homogeneous solution with nonnegative data went nonpositive"""


class ConfigError(LMAError):
    """Experiment configuration rejected before compute"""


class GridFormatError(LMAError):
    """Malformed gridtxt file"""
