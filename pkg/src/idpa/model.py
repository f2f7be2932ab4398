"""Domain types for data-flow models and model-level validation."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Optional

ID_PATTERN = re.compile(r"[a-z][a-z0-9-]*\Z")


class NodeKind(str, enum.Enum):
    ENTITY = "external-entity"
    PROCESS = "process"
    STORE = "data-store"


# Statement keyword for each node kind, also the canonical sort rank.
NODE_KEYWORDS = {NodeKind.ENTITY: "entity", NodeKind.PROCESS: "process", NodeKind.STORE: "store"}
_NODE_RANK = {NodeKind.ENTITY: 0, NodeKind.PROCESS: 1, NodeKind.STORE: 2}


class Capability(str, enum.Enum):
    ANALYZES = "analyzes"
    CORRELATES = "correlates"
    MATCHES = "matches"


class Subjects(str, enum.Enum):
    SENDER_ONLY = "sender-only"
    INCLUDES_OTHERS = "includes-others"
    MAY_INCLUDE_OTHERS = "may-include-others"


class Transform(str, enum.Enum):
    NONE = "none"
    STRIPS_OTHERS = "strips-others"
    ENCRYPTS = "encrypts"


class Answer(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


class AccessControl(str, enum.Enum):
    ENFORCED = "enforced"
    PARTIAL = "partial"
    NONE = "none"
    UNKNOWN = "unknown"


class MisactorKind(str, enum.Enum):
    """Misactor taxonomy. Declaration order is the canonical output order."""

    MU = "MU"
    IU = "IU"
    UU = "UU"
    UFU = "UFU"
    SP = "SP"
    GA = "GA"

    @property
    def rank(self) -> int:
        return _MISACTOR_ORDER.index(self)


_MISACTOR_ORDER = list(MisactorKind)


def sort_misactors(kinds: Iterable[MisactorKind]) -> tuple[MisactorKind, ...]:
    return tuple(sorted(set(kinds), key=lambda k: k.rank))


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    kind: NodeKind
    capabilities: frozenset[Capability] = frozenset()
    government_access: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))


@dataclass(frozen=True)
class DataObject:
    id: str
    label: str
    subjects: Subjects
    likelihood: Optional[Decimal] = None
    derived_from: frozenset[str] = frozenset()
    categories: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "derived_from", frozenset(self.derived_from))
        object.__setattr__(self, "categories", frozenset(self.categories))


@dataclass(frozen=True)
class Flow:
    id: str
    source: str
    destination: str
    carries: tuple[str, ...]
    initiator: Optional[str] = None
    transform: Transform = Transform.NONE

    def __post_init__(self) -> None:
        object.__setattr__(self, "carries", tuple(self.carries))
        if self.initiator is None:
            object.__setattr__(self, "initiator", self.source)

    @property
    def label(self) -> str:
        """Human label derived from the id: ``f-upload-contacts`` -> ``upload contacts``."""
        stem = self.id[2:] if self.id.startswith("f-") and len(self.id) > 2 else self.id
        return stem.replace("-", " ")


@dataclass(frozen=True)
class AcaAnnotation:
    target: str
    awareness_sender: Answer = Answer.UNKNOWN
    awareness_stakeholders: Answer = Answer.UNKNOWN
    consent_sender: Answer = Answer.UNKNOWN
    consent_stakeholders: Answer = Answer.UNKNOWN
    access_control: AccessControl = AccessControl.UNKNOWN


@dataclass(frozen=True)
class Policy:
    accountability: Answer = Answer.UNKNOWN
    auditability: Answer = Answer.UNKNOWN
    alignment: Answer = Answer.UNKNOWN


@dataclass(frozen=True)
class MisactorExclusion:
    flow: str
    excluded: frozenset[MisactorKind]
    reason: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "excluded", frozenset(self.excluded))


@dataclass(frozen=True)
class Model:
    """A parsed data-flow model.

    Collections are stored in canonical order (nodes by kind then id, everything
    else by id), so two models with the same content compare equal regardless
    of the order statements were written in.
    """

    name: str
    nodes: tuple[Node, ...] = ()
    data_objects: tuple[DataObject, ...] = ()
    flows: tuple[Flow, ...] = ()
    aca_annotations: tuple[AcaAnnotation, ...] = ()
    exclusions: tuple[MisactorExclusion, ...] = ()
    policy: Policy = field(default_factory=Policy)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "nodes", tuple(sorted(self.nodes, key=lambda n: (_NODE_RANK[n.kind], n.id)))
        )
        object.__setattr__(self, "data_objects", tuple(sorted(self.data_objects, key=lambda d: d.id)))
        object.__setattr__(self, "flows", tuple(sorted(self.flows, key=lambda f: f.id)))
        object.__setattr__(
            self, "aca_annotations", tuple(sorted(self.aca_annotations, key=lambda a: a.target))
        )
        object.__setattr__(self, "exclusions", tuple(sorted(self.exclusions, key=lambda e: e.flow)))

    # Lookups assume a validated model (unique ids).

    def node(self, node_id: str) -> Node:
        return self._index("_nodes_by_id", self.nodes)[node_id]

    def data(self, data_id: str) -> DataObject:
        return self._index("_data_by_id", self.data_objects)[data_id]

    def flow(self, flow_id: str) -> Flow:
        return self._index("_flows_by_id", self.flows)[flow_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index("_nodes_by_id", self.nodes)

    def has_data(self, data_id: str) -> bool:
        return data_id in self._index("_data_by_id", self.data_objects)

    def has_flow(self, flow_id: str) -> bool:
        return flow_id in self._index("_flows_by_id", self.flows)

    def incoming(self, node_id: str) -> tuple[Flow, ...]:
        return tuple(f for f in self.flows if f.destination == node_id)

    def annotation(self, target: str) -> Optional[AcaAnnotation]:
        for ann in self.aca_annotations:
            if ann.target == target:
                return ann
        return None

    def exclusion(self, flow_id: str) -> Optional[MisactorExclusion]:
        for exc in self.exclusions:
            if exc.flow == flow_id:
                return exc
        return None

    def ancestors(self, data_id: str) -> frozenset[str]:
        """Transitive ``derived_from`` parents of a data object (excluding itself)."""
        seen: set[str] = set()
        stack = list(self.data(data_id).derived_from)
        while stack:
            parent = stack.pop()
            if parent in seen or not self.has_data(parent):
                continue
            seen.add(parent)
            stack.extend(self.data(parent).derived_from)
        return frozenset(seen)

    def _index(self, attr: str, items):
        cache = self.__dict__.get(attr)
        if cache is None:
            cache = {}
            for item in items:
                cache.setdefault(item.id, item)
            object.__setattr__(self, attr, cache)
        return cache


def threat_id(category: str, location: str, data_id: str) -> str:
    return f"{category}-{location}-{data_id}"


# Validation


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


_SEVERITY_RANK = {Severity.ERROR: 0, Severity.WARNING: 1}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    location: str = ""
    span: Optional[SourceSpan] = None

    def sort_key(self):
        span = self.span
        pos = (span.line, span.column) if span else (0, 0)
        return (_SEVERITY_RANK[self.severity], self.location, pos, self.message)

    def format(self, path: str = "") -> str:
        where = path
        if self.span is not None:
            where = f"{where}:{self.span.line}:{self.span.column}" if where else f"{self.span.line}:{self.span.column}"
        prefix = f"{where}: " if where else ""
        loc = f" [{self.location}]" if self.location else ""
        return f"{prefix}{self.severity.value}: {self.message}{loc}"

    def to_dict(self) -> dict:
        out = {"severity": self.severity.value, "message": self.message, "location": self.location}
        if self.span is not None:
            out["line"] = self.span.line
            out["column"] = self.span.column
        return out


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


def user_initiated(model: Model, flow: Flow) -> Optional[bool]:
    """True if an external entity initiates the flow, None if the initiator is unresolved."""
    if not model.has_node(flow.initiator):
        return None
    return model.node(flow.initiator).kind is NodeKind.ENTITY


USER_MISACTORS = frozenset({MisactorKind.MU, MisactorKind.IU, MisactorKind.UU, MisactorKind.UFU})
SYSTEM_MISACTORS = frozenset({MisactorKind.SP})


def validate(model: Model) -> list[Diagnostic]:
    """Check every model invariant; never raises.

    Returns diagnostics sorted by (severity, location). Warnings never block analysis.
    """
    diags: list[Diagnostic] = []

    def error(msg: str, loc: str) -> None:
        diags.append(Diagnostic(Severity.ERROR, msg, loc))

    def warning(msg: str, loc: str) -> None:
        diags.append(Diagnostic(Severity.WARNING, msg, loc))

    def check_id(value: str, what: str, loc: str) -> None:
        if not ID_PATTERN.match(value):
            error(f"invalid {what} id {value!r}", loc)

    seen: dict[str, set[str]] = {"node": set(), "data": set(), "flow": set()}

    def check_unique(ns: str, value: str, loc: str) -> None:
        if value in seen[ns]:
            error(f"duplicate {ns} id {value}", loc)
        seen[ns].add(value)

    for node in model.nodes:
        loc = f"{NODE_KEYWORDS[node.kind]} {node.id}"
        check_id(node.id, "node", loc)
        check_unique("node", node.id, loc)
        if node.capabilities and node.kind is not NodeKind.PROCESS:
            error(f"capabilities are only allowed on processes", loc)
        if node.government_access and node.kind is NodeKind.ENTITY:
            error("government-access is only allowed on processes and stores", loc)

    for data in model.data_objects:
        loc = f"data {data.id}"
        check_id(data.id, "data", loc)
        check_unique("data", data.id, loc)
        if data.likelihood is not None:
            if data.subjects is not Subjects.MAY_INCLUDE_OTHERS:
                error("likelihood requires subjects=may-include-others", loc)
            elif not (0 <= data.likelihood <= 1):
                error(f"likelihood {data.likelihood} outside [0, 1]", loc)
            elif data.likelihood == 1:
                error("likelihood 1 means the object includes others; declare subjects=includes-others", loc)
        for parent in sorted(data.derived_from):
            if not model.has_data(parent):
                error(f"unresolved data reference {parent}", loc)

    for cycle_member in _derivation_cycles(model):
        error(f"derived-from cycle through {cycle_member}", f"data {cycle_member}")

    for flow in model.flows:
        loc = f"flow {flow.id}"
        check_id(flow.id, "flow", loc)
        check_unique("flow", flow.id, loc)
        endpoints = [flow.source, flow.destination]
        if flow.initiator != flow.source:
            endpoints.append(flow.initiator)
        for ref in endpoints:
            if not model.has_node(ref):
                error(f"unresolved node reference {ref}", loc)
        if not flow.carries:
            error("flow carries no data", loc)
        if len(set(flow.carries)) != len(flow.carries):
            error("flow carries the same data object twice", loc)
        for ref in dict.fromkeys(flow.carries):
            if not model.has_data(ref):
                error(f"unresolved data reference {ref}", loc)
        if flow.source == flow.destination:
            warning(f"self-loop flow {flow.id}", loc)

    annotated: set[str] = set()
    for ann in model.aca_annotations:
        loc = f"annotate {ann.target}"
        is_flow, is_data = model.has_flow(ann.target), model.has_data(ann.target)
        if is_flow and is_data:
            error(f"annotation target {ann.target} names both a flow and a data object", loc)
        elif not (is_flow or is_data):
            error(f"unresolved annotation target {ann.target}", loc)
        if ann.target in annotated:
            error(f"duplicate annotation for {ann.target}", loc)
        annotated.add(ann.target)

    excluded_flows: set[str] = set()
    for exc in model.exclusions:
        loc = f"exclude {exc.flow}"
        if exc.flow in excluded_flows:
            error(f"duplicate exclusion for {exc.flow}", loc)
        excluded_flows.add(exc.flow)
        if not exc.reason.strip():
            error("exclusion reason must not be empty", loc)
        if not exc.excluded:
            error("exclusion names no misactor", loc)
        if not model.has_flow(exc.flow):
            error(f"unresolved flow reference {exc.flow}", loc)
            continue
        by_user = user_initiated(model, model.flow(exc.flow))
        if by_user is None:
            continue
        candidates = USER_MISACTORS if by_user else SYSTEM_MISACTORS
        if candidates <= exc.excluded:
            error("threat left with no misactor", loc)
        idle = sort_misactors(exc.excluded - candidates)
        if idle:
            names = ",".join(k.value for k in idle)
            warning(f"exclusion of {names} has no effect on flow {exc.flow}", loc)

    _check_threat_id_collisions(model, error)

    if not model.flows:
        warning("model has no flows", "model")

    return sort_diagnostics(diags)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diags)


def _derivation_cycles(model: Model) -> list[str]:
    """Return the smallest data id of each derived-from cycle (empty when acyclic)."""
    parents = {d.id: sorted(p for p in d.derived_from if model.has_data(p)) for d in model.data_objects}
    state: dict[str, int] = {}
    reported: list[str] = []
    for start in sorted(parents):
        if state.get(start):
            continue
        # iterative DFS; state 1 = on stack, 2 = done
        stack = [(start, iter(parents[start]))]
        state[start] = 1
        path = [start]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                path.pop()
            elif state.get(nxt) == 1:
                cycle = path[path.index(nxt):]
                reported.append(min(cycle))
            elif not state.get(nxt):
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(parents[nxt])))
    return sorted(set(reported))


def topological_data_order(model: Model) -> list[str]:
    """Data ids ordered parents-first; raises ValueError on a derivation cycle."""
    order: list[str] = []
    done: set[str] = set()
    visiting: set[str] = set()

    def visit(data_id: str) -> None:
        if data_id in done:
            return
        if data_id in visiting:
            raise ValueError(f"derived-from cycle through {data_id}")
        visiting.add(data_id)
        for parent in sorted(model.data(data_id).derived_from):
            visit(parent)
        visiting.discard(data_id)
        done.add(data_id)
        order.append(data_id)

    for data in model.data_objects:
        visit(data.id)
    return order


def _check_threat_id_collisions(model: Model, error) -> None:
    owners: dict[str, str] = {}
    pairs = [("IS", f.id, d) for f in model.flows for d in dict.fromkeys(f.carries)]
    for node in model.nodes:
        if node.kind is NodeKind.ENTITY:
            continue
        cat = "IST" if node.kind is NodeKind.STORE else "IP"
        pairs.extend((cat, node.id, d.id) for d in model.data_objects)
    for cat, loc, data_id in pairs:
        tid = threat_id(cat, loc, data_id)
        owner = f"{loc}/{data_id}"
        prev = owners.setdefault(tid, owner)
        if prev != owner:
            error(f"threat id {tid} is ambiguous between {prev} and {owner}", f"threat {tid}")
