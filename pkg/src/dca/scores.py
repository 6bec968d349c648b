"""Local and global scores of a distilled graph over REF/EVAL membership."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .distill import DistilledGraph
from .pointset_io import EVAL, REF


@dataclass(frozen=True)
class ComponentScore:
    index: int
    n_R: int
    n_E: int
    e_RR: int
    e_EE: int
    e_RE: int
    consistency: float
    quality: float
    is_fundamental: bool

    @property
    def size(self) -> int:
        return self.n_R + self.n_E

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GlobalScores:
    network_consistency: float
    network_quality: float
    precision: float
    recall: float
    num_components: int
    num_fundamental: int
    largest_component_relative_size: float

    def to_json(self) -> dict:
        return {
            "c": self.network_consistency,
            "q": self.network_quality,
            "precision": self.precision,
            "recall": self.recall,
            "num_components": self.num_components,
            "num_fundamental": self.num_fundamental,
            "largest_component_relative_size": self.largest_component_relative_size,
        }


def consistency(n_R: int, n_E: int) -> float:
    total = n_R + n_E
    if total == 0:
        return 0.0
    return 1.0 - abs(n_R - n_E) / total


def quality(e_RR: int, e_EE: int, e_RE: int) -> float:
    total = e_RR + e_EE + e_RE
    if total == 0:
        return 0.0
    return 1.0 - (e_RR + e_EE) / total


def _check_thresholds(eta_c, eta_q):
    if not (0.0 <= eta_c < 1.0 and 0.0 <= eta_q < 1.0):
        raise ValueError(f"thresholds must lie in [0, 1), got eta_c={eta_c}, eta_q={eta_q}")


def score_components(dg: DistilledGraph, membership, eta_c: float = 0.0, eta_q: float = 0.0) -> list:
    """One :class:`ComponentScore` per component, in the distilled graph's order.

    Components are already sorted by size (descending) and then by their
    smallest vertex id.
    """
    _check_thresholds(eta_c, eta_q)
    membership = np.asarray(membership)
    edges = dg.graph.edges
    out = []
    for k, (verts, eids) in enumerate(zip(dg.components, dg.component_edges)):
        tags = membership[verts]
        n_R = int(np.count_nonzero(tags == REF))
        n_E = int(np.count_nonzero(tags == EVAL))
        ends = membership[edges[eids]]
        n_eval_ends = (ends == EVAL).sum(axis=1)
        e_RR = int(np.count_nonzero(n_eval_ends == 0))
        e_EE = int(np.count_nonzero(n_eval_ends == 2))
        e_RE = int(np.count_nonzero(n_eval_ends == 1))
        c = consistency(n_R, n_E)
        q = quality(e_RR, e_EE, e_RE)
        out.append(ComponentScore(k, n_R, n_E, e_RR, e_EE, e_RE, c, q, c > eta_c and q > eta_q))
    return out


def score_global(dg: DistilledGraph, membership, component_scores, eta_c: float = 0.0, eta_q: float = 0.0) -> GlobalScores:
    """Network consistency/quality over the distilled graph plus precision and recall.

    Precision and recall divide by every EVAL (resp. REF) point given to the
    pipeline, outliers included.
    """
    _check_thresholds(eta_c, eta_q)
    membership = np.asarray(membership)
    total_R = int(np.count_nonzero(membership == REF))
    total_E = int(np.count_nonzero(membership == EVAL))
    n_R = sum(s.n_R for s in component_scores)
    n_E = sum(s.n_E for s in component_scores)
    fundamental = [s for s in component_scores if s.is_fundamental]
    f_R = sum(s.n_R for s in fundamental)
    f_E = sum(s.n_E for s in fundamental)
    largest = max((s.size for s in component_scores), default=0)
    n = len(membership)
    return GlobalScores(
        network_consistency=consistency(n_R, n_E),
        network_quality=quality(
            sum(s.e_RR for s in component_scores),
            sum(s.e_EE for s in component_scores),
            sum(s.e_RE for s in component_scores),
        ),
        precision=f_E / total_E if total_E else 0.0,
        recall=f_R / total_R if total_R else 0.0,
        num_components=len(component_scores),
        num_fundamental=len(fundamental),
        largest_component_relative_size=largest / n if n else 0.0,
    )
