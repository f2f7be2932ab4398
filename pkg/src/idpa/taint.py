"""Flow classification and IDP taint propagation.

Every (flow, data object) pair gets a class. A pair starts at the class implied
by the object's ``subjects`` declaration and is raised to the class of any
ancestor (or the object itself) that reached the flow's source node. Flows
marked ``strips-others`` are capped at NIDPF. Node levels are the maximum over
incoming pairs. The least fixpoint is computed by monotone iteration, which
also covers cyclic flow graphs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Optional

from idpa.model import DataObject, Flow, Model, NodeKind, Subjects, Transform

DEFAULT_PIDPF_LIKELIHOOD = Decimal("0.5")


class FlowClass(enum.IntEnum):
    NIDPF = 0
    PIDPF = 1
    IDPF = 2


SUBJECT_CLASS = {
    Subjects.SENDER_ONLY: FlowClass.NIDPF,
    Subjects.MAY_INCLUDE_OTHERS: FlowClass.PIDPF,
    Subjects.INCLUDES_OTHERS: FlowClass.IDPF,
}


def declared_class(data: DataObject) -> FlowClass:
    return SUBJECT_CLASS[data.subjects]


def max_class(classes: Iterable[FlowClass]) -> FlowClass:
    return max(classes, default=FlowClass.NIDPF)


def classify_flow(flow: Flow, model: Model) -> FlowClass:
    """Declared class of a flow: the highest class among the objects it carries."""
    return max_class(declared_class(model.data(d)) for d in flow.carries)


def likelihood_of(flow_class: FlowClass, data: DataObject) -> Decimal:
    """Likelihood that a flow of this class affects others' privacy."""
    if flow_class is FlowClass.IDPF:
        return Decimal(1)
    if flow_class is FlowClass.PIDPF:
        return data.likelihood if data.likelihood is not None else DEFAULT_PIDPF_LIKELIHOOD
    raise ValueError("likelihood is undefined for NIDPF flows")


Pair = tuple[str, str]  # (flow id, data id)


@dataclass(frozen=True)
class TaintMap:
    pair_classes: dict[Pair, FlowClass]
    flow_classes: dict[str, FlowClass]
    declared: dict[str, FlowClass]
    node_levels: dict[str, FlowClass]
    witnesses: dict[str, tuple[Pair, ...]] = field(default_factory=dict)

    def pair_class(self, flow_id: str, data_id: str) -> FlowClass:
        return self.pair_classes[(flow_id, data_id)]

    def witness_data(self, node_id: str) -> dict[str, FlowClass]:
        """Witness data ids at a node with the highest class each arrived at."""
        out: dict[str, FlowClass] = {}
        for flow_id, data_id in self.witnesses.get(node_id, ()):
            cls = self.pair_classes[(flow_id, data_id)]
            out[data_id] = max(out.get(data_id, FlowClass.NIDPF), cls)
        return dict(sorted(out.items()))

    def delivering_flows(self, node_id: str, data_id: str) -> tuple[str, ...]:
        return tuple(f for f, d in self.witnesses.get(node_id, ()) if d == data_id)


class _Context:
    """Static per-model facts the propagation rule needs."""

    def __init__(self, model: Model):
        self.model = model
        self.incoming = {n.id: model.incoming(n.id) for n in model.nodes}
        self.entity = {n.id: n.kind is NodeKind.ENTITY for n in model.nodes}
        self.lineage = {d.id: model.ancestors(d.id) for d in model.data_objects}
        self.declared = {d.id: declared_class(d) for d in model.data_objects}
        self.strip_in = {
            n: any(f.transform is Transform.STRIPS_OTHERS for f in flows) for n, flows in self.incoming.items()
        }

    def keeps_declared(self, flow: Flow, data_id: str) -> bool:
        """Derived sender-only objects keep their declared class behind a stripping flow."""
        data = self.model.data(data_id)
        return bool(data.derived_from) and data.subjects is Subjects.SENDER_ONLY and self.strip_in.get(flow.source, False)

    def origin_class(self, flow: Flow, data_id: str) -> FlowClass:
        """Contribution of ancestors held at an external entity, which originates its data."""
        if not self.entity.get(flow.source, False):
            return FlowClass.NIDPF
        return max_class(self.declared[a] for a in self.lineage[data_id])


def _pair_value(ctx: _Context, flow: Flow, data_id: str, current: dict[Pair, FlowClass]) -> FlowClass:
    if flow.transform is Transform.STRIPS_OTHERS:
        return FlowClass.NIDPF
    base = ctx.declared[data_id]
    if ctx.keeps_declared(flow, data_id):
        return base
    wanted = ctx.lineage[data_id] | {data_id}
    level = max(base, ctx.origin_class(flow, data_id))
    for inflow in ctx.incoming.get(flow.source, ()):
        for carried in inflow.carries:
            if carried in wanted:
                level = max(level, current[(inflow.id, carried)])
    return level


def propagate(model: Model, seed: Optional[TaintMap] = None) -> TaintMap:
    """Least fixpoint of the propagation rule (or the fixpoint above ``seed``)."""
    ctx = _Context(model)
    pairs = [(f, d) for f in model.flows for d in dict.fromkeys(f.carries)]
    current: dict[Pair, FlowClass] = {(f.id, d): FlowClass.NIDPF for f, d in pairs}
    if seed is not None:
        for key in current:
            current[key] = seed.pair_classes.get(key, FlowClass.NIDPF)
    changed = True
    while changed:
        changed = False
        for flow, data_id in pairs:
            value = _pair_value(ctx, flow, data_id, current)
            if value > current[(flow.id, data_id)]:
                current[(flow.id, data_id)] = value
                changed = True
    return _assemble(model, current)


def _assemble(model: Model, pair_classes: dict[Pair, FlowClass]) -> TaintMap:
    flow_classes = {
        f.id: max_class(pair_classes[(f.id, d)] for d in f.carries) for f in model.flows
    }
    node_levels: dict[str, FlowClass] = {}
    witnesses: dict[str, tuple[Pair, ...]] = {}
    for node in model.nodes:
        inflows = model.incoming(node.id)
        node_levels[node.id] = max_class(flow_classes[f.id] for f in inflows)
        witnesses[node.id] = tuple(
            sorted((f.id, d) for f in inflows for d in dict.fromkeys(f.carries) if pair_classes[(f.id, d)] > FlowClass.NIDPF)
        )
    return TaintMap(
        pair_classes=dict(sorted(pair_classes.items())),
        flow_classes=flow_classes,
        declared={f.id: classify_flow(f, model) for f in model.flows},
        node_levels=node_levels,
        witnesses=witnesses,
    )
