"""Delaunay component analysis: compare two point sets through their joint Delaunay graph."""

__version__ = "0.1.0"

from .delaunay import ApproxDelaunayGraph, build_graph, filter_by_sphere_coverage, load_graph, save_graph
from .distill import DistilledGraph, distill
from .estimator import DelaunayComponentAnalysis, QueryDelaunayComponentAnalysis
from .exceptions import ConfigError, DCAError, InputError, InternalError
from .pointset_io import EVAL, REF, PointSet, load_pointset, merge, save_pointset
from .qdca import (
    ReferenceContext,
    build_reference,
    evaluate_queries,
    evaluate_query,
    insert_query,
)
from .scores import score_components, score_global

__all__ = [
    "ApproxDelaunayGraph",
    "ConfigError",
    "DCAError",
    "DelaunayComponentAnalysis",
    "DistilledGraph",
    "EVAL",
    "InputError",
    "InternalError",
    "PointSet",
    "QueryDelaunayComponentAnalysis",
    "REF",
    "ReferenceContext",
    "build_graph",
    "build_reference",
    "distill",
    "evaluate_queries",
    "evaluate_query",
    "filter_by_sphere_coverage",
    "insert_query",
    "load_graph",
    "load_pointset",
    "merge",
    "save_graph",
    "save_pointset",
    "score_components",
    "score_global",
]
