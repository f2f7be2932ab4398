"""Analysis pipeline and the report emitters (JSON, threat map, threat trees)."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Union

from idpa import __version__
from idpa.dsl import serialize
from idpa.mitigation import (
    Catalog,
    PostureReport,
    default_catalog,
    existing_controls,
    mitigation_note,
    posture,
    suggest,
    used_mitigations,
)
from idpa.model import Diagnostic, Model, Severity, has_errors, validate
from idpa.taint import DEFAULT_PIDPF_LIKELIHOOD, FlowClass, TaintMap, propagate
from idpa.threats import Status, Threat, elicit

SCHEMA = "idpa-report/1"
MAP_COLUMNS = ("Source", "Flow", "Destination", "IDPF", "PIDPF", "NIDPF", "Misactor", "Privacy Threat")


class AnalysisError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        errors = [d.format() for d in diagnostics if d.severity is Severity.ERROR]
        super().__init__("; ".join(errors) or "model is invalid")


class UnknownThreat(KeyError):
    def __init__(self, threat: str, available: list[str]):
        self.threat = threat
        self.available = available
        listing = "\n  ".join(available) if available else "(none)"
        super().__init__(f"unknown threat id {threat}; available ids:\n  {listing}")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class AnalysisReport:
    model: Model
    model_hash: str
    taint: TaintMap
    threats: tuple[Threat, ...]
    catalog: Catalog
    posture: PostureReport
    warnings: tuple[Diagnostic, ...] = ()
    engine_version: str = __version__

    def threat(self, threat_id: str) -> Threat:
        for t in self.threats:
            if t.id == threat_id:
                return t
        raise UnknownThreat(threat_id, [t.id for t in self.threats])


def analyze(model: Model, catalog: Optional[Catalog] = None, warnings: Optional[list[Diagnostic]] = None) -> AnalysisReport:
    """Run validate -> propagate -> elicit -> posture on a model."""
    diags = validate(model)
    if has_errors(diags):
        raise AnalysisError(diags)
    if warnings is None:
        warnings = [d for d in diags if d.severity is Severity.WARNING]
    taint = propagate(model)
    threats = tuple(elicit(model, taint))
    return AnalysisReport(
        model=model,
        model_hash=hashlib.sha256(serialize(model).encode("utf-8")).hexdigest(),
        taint=taint,
        threats=threats,
        catalog=catalog or default_catalog(),
        posture=posture(model, threats),
        warnings=tuple(warnings),
    )


# JSON


def _number(value: Decimal) -> Union[int, float]:
    value = value.quantize(Decimal("0.01")).normalize()
    if value == value.to_integral_value():
        return int(value)
    return float(str(value))


def _threat_dict(report: AnalysisReport, threat: Threat) -> dict:
    aca = threat.aca
    out = {
        "id": threat.id,
        "category": threat.category.value,
        "location": threat.location,
        "data": threat.data,
        "class": threat.trigger.name,
        "likelihood": _number(threat.likelihood),
        "status": threat.status.value,
        "misactors": [k.value for k in threat.misactor_candidates],
        "aca": {
            name: {"status": finding.status.value, "evidence": finding.evidence}
            for name, finding in (("awareness", aca.awareness), ("consent", aca.consent), ("access", aca.access))
        },
        "witnesses": [{"flow": f, "data": d} for f, d in threat.witnesses],
        "mitigations": [m.id for m in suggest(threat, report.catalog)],
        "controls": existing_controls(threat, report.model),
    }
    note = mitigation_note(threat, report.model)
    if note:
        out["note"] = note
    return out


def report_dict(report: AnalysisReport) -> dict:
    model, taint = report.model, report.taint
    flows = []
    for flow in model.flows:
        flows.append(
            {
                "id": flow.id,
                "source": flow.source,
                "destination": flow.destination,
                "initiator": flow.initiator,
                "transform": flow.transform.value,
                "carries": list(flow.carries),
                "declared_class": taint.declared[flow.id].name,
                "effective_class": taint.flow_classes[flow.id].name,
                "data_classes": {d: taint.pair_class(flow.id, d).name for d in flow.carries},
            }
        )
    nodes = [
        {
            "id": node.id,
            "kind": node.kind.value,
            "level": int(taint.node_levels[node.id]),
            "witnesses": [{"flow": f, "data": d} for f, d in taint.witnesses[node.id]],
        }
        for node in model.nodes
    ]
    mitigations = Catalog(report.catalog.name, tuple(used_mitigations(report.threats, report.catalog))).to_dict()
    return {
        "schema": SCHEMA,
        "engine": {"name": "idpa", "version": report.engine_version},
        "model": {"name": model.name, "sha256": report.model_hash},
        "defaults": {"pidpf_likelihood": _number(DEFAULT_PIDPF_LIKELIHOOD)},
        "flows": flows,
        "taint": {"nodes": nodes},
        "threats": [_threat_dict(report, t) for t in report.threats],
        "mitigations": mitigations,
        "posture": report.posture.to_dict(),
        "warnings": [d.to_dict() for d in report.warnings],
    }


def emit_json(report: AnalysisReport) -> str:
    return json.dumps(report_dict(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# Threat map


def _node_display(model: Model) -> dict[str, str]:
    return {node.id: f"{node.label} ({i})" for i, node in enumerate(model.nodes, start=1)}


def threat_map_rows(report: AnalysisReport) -> list[list[str]]:
    """One row per (flow, threat) pair, plus one row per flow without threats."""
    model, taint = report.model, report.taint
    display = _node_display(model)
    rows = []
    for flow in model.flows:
        related = [
            t for t in report.threats
            if (t.on_flow and t.location == flow.id) or (not t.on_flow and any(f == flow.id for f, _ in t.witnesses))
        ]
        base = [display[flow.source], flow.label, display[flow.destination]]
        if not related:
            rows.append(base + _class_cells(taint.flow_classes[flow.id]) + ["", ""])
            continue
        for threat in related:
            cell = threat.category.value
            if threat.status is not Status.ACTIVE:
                cell += f" ({threat.status.value})"
            misactors = ",".join(k.value for k in threat.misactor_candidates)
            rows.append(base + _class_cells(taint.pair_class(flow.id, threat.data)) + [misactors, cell])
    return rows


def _class_cells(cls: FlowClass) -> list[str]:
    return ["X" if cls is c else "" for c in (FlowClass.IDPF, FlowClass.PIDPF, FlowClass.NIDPF)]


def emit_threat_map(report: AnalysisReport, fmt: str = "markdown") -> str:
    rows = threat_map_rows(report)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MAP_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        def cell(text: str) -> str:
            return text.replace("\\", "\\\\").replace("|", "\\|") if text else " "

        lines = [
            f"# Threat map: {report.model.name}",
            "",
            "| " + " | ".join(MAP_COLUMNS) + " |",
            "|" + "---|" * len(MAP_COLUMNS),
        ]
        lines.extend("| " + " | ".join(cell(c) for c in row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown threat map format {fmt!r} (expected markdown or csv)")


# Threat trees


def _dot_str(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def emit_threat_tree(report: AnalysisReport, threat_id: str) -> str:
    """DOT digraph explaining one threat: class, misactors, ACA gaps, countermeasures."""
    threat = report.threat(threat_id)
    model = report.model
    if threat.on_flow:
        where = model.flow(threat.location).label
    else:
        where = model.node(threat.location).label
    root_label = f"{threat.category.value}: {where}"
    if threat.status is not Status.ACTIVE:
        root_label += f" [{threat.status.value}]"

    counters: dict[str, int] = {}

    def node_id(layer: str) -> str:
        counters[layer] = counters.get(layer, 0) + 1
        return f"{threat.id}/{layer}/{counters[layer]}"

    lines = [f"digraph {_dot_str(threat.id)} {{", "  rankdir=TB;", "  node [shape=box];"]

    def add(nid: str, label: str, shape: str = "") -> None:
        extra = f", shape={shape}" if shape else ""
        lines.append(f"  {_dot_str(nid)} [label={_dot_str(label)}{extra}];")

    def edge(a: str, b: str, label: str) -> None:
        lines.append(f"  {_dot_str(a)} -> {_dot_str(b)} [label={_dot_str(label)}];")

    root = node_id("root")
    add(root, root_label, "ellipse")
    data = model.data(threat.data)
    cls = node_id("class")
    likelihood = format(threat.likelihood.normalize(), "f")
    add(cls, f"{threat.trigger.name}\ndata: {data.label}\nlikelihood {likelihood}", "diamond")
    edge(root, cls, "classified as")

    for finding_name, finding in (("awareness", threat.aca.awareness), ("consent", threat.aca.consent), ("access", threat.aca.access)):
        if finding.status.is_gap:
            gid = node_id("gap")
            add(gid, f"{finding_name}: {finding.status.value}", "note")
            edge(root, gid, "gap")

    mitigations = suggest(threat, report.catalog)
    for kind in threat.misactor_candidates:
        mid = node_id("misactor")
        add(mid, kind.value, "house")
        edge(root, mid, "misactor")
        for m in mitigations:
            if m.misactor is kind:
                cid = node_id("countermeasure")
                add(cid, m.text)
                edge(mid, cid, "countered by")
    for control in existing_controls(threat, model):
        cid = node_id("countermeasure")
        add(cid, f"existing control: {control}")
        edge(root, cid, "existing control")
    lines.append("}")
    return "\n".join(lines) + "\n"
