"""Interdependent-privacy threat modeling as code."""

__version__ = "0.1.0"

from idpa.dsl import ParseFailure, parse, serialize  # noqa: E402
from idpa.model import Model, validate  # noqa: E402
from idpa.report import AnalysisReport, analyze, emit_json, emit_threat_map, emit_threat_tree  # noqa: E402
from idpa.taint import FlowClass, classify_flow, likelihood_of, propagate  # noqa: E402
from idpa.threats import ThreatCategory, assign_misactors, elicit, evaluate_aca  # noqa: E402

__all__ = [
    "AnalysisReport",
    "FlowClass",
    "Model",
    "ParseFailure",
    "ThreatCategory",
    "analyze",
    "assign_misactors",
    "classify_flow",
    "elicit",
    "emit_json",
    "emit_threat_map",
    "emit_threat_tree",
    "evaluate_aca",
    "likelihood_of",
    "parse",
    "propagate",
    "serialize",
    "validate",
]
