"""Threat elicitation, misactor assignment and awareness/consent/access-control evaluation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Optional

from idpa.model import (
    SYSTEM_MISACTORS,
    USER_MISACTORS,
    AccessControl,
    Answer,
    Capability,
    MisactorKind,
    Model,
    NodeKind,
    Transform,
    sort_misactors,
    threat_id,
    user_initiated,
)
from idpa.taint import FlowClass, Pair, TaintMap, likelihood_of

PROCESSING_CAPABILITIES = frozenset({Capability.ANALYZES, Capability.CORRELATES, Capability.MATCHES})


class ThreatCategory(str, enum.Enum):
    IS = "IS"  # improper sharing
    IST = "IST"  # improper storage
    IP = "IP"  # improper processing


CATEGORY_NAMES = {
    ThreatCategory.IS: "Improper sharing of privacy-interdependent data",
    ThreatCategory.IST: "Improper storage of privacy-interdependent data",
    ThreatCategory.IP: "Improper processing of privacy-interdependent data",
}


class Status(str, enum.Enum):
    ACTIVE = "active"
    POTENTIAL = "potential"
    MITIGATED = "mitigated"


class Gap(str, enum.Enum):
    GAP = "gap"
    SATISFIED = "satisfied"
    UNKNOWN = "unknown-treated-as-gap"

    @property
    def is_gap(self) -> bool:
        return self is not Gap.SATISFIED


@dataclass(frozen=True)
class GapFinding:
    status: Gap
    evidence: str


@dataclass(frozen=True)
class AcaGapReport:
    awareness: GapFinding
    consent: GapFinding
    access: GapFinding

    def gaps(self) -> tuple[str, ...]:
        return tuple(
            name for name, finding in (("awareness", self.awareness), ("consent", self.consent), ("access", self.access))
            if finding.status.is_gap
        )


_UNEVALUATED = AcaGapReport(*(GapFinding(Gap.UNKNOWN, "not evaluated") for _ in range(3)))


@dataclass(frozen=True)
class Threat:
    id: str
    category: ThreatCategory
    location: str
    data: str
    trigger: FlowClass
    likelihood: Decimal
    status: Status
    witnesses: tuple[Pair, ...]
    misactor_candidates: tuple[MisactorKind, ...] = ()
    aca: AcaGapReport = _UNEVALUATED

    @property
    def on_flow(self) -> bool:
        return self.category is ThreatCategory.IS


def _status(trigger: FlowClass, delivering: list[Transform]) -> Status:
    if delivering and all(t is Transform.ENCRYPTS for t in delivering):
        return Status.MITIGATED
    return Status.ACTIVE if trigger is FlowClass.IDPF else Status.POTENTIAL


def elicit(model: Model, taint: TaintMap) -> list[Threat]:
    """Apply the sharing/storage/processing rules; returns threats sorted by id.

    Misactor candidates and ACA gaps are filled in as well, so every returned
    threat is complete.
    """
    raw: list[Threat] = []
    for flow in model.flows:
        for data_id in dict.fromkeys(flow.carries):
            cls = taint.pair_class(flow.id, data_id)
            if cls < FlowClass.PIDPF:
                continue
            raw.append(
                Threat(
                    id=threat_id(ThreatCategory.IS.value, flow.id, data_id),
                    category=ThreatCategory.IS,
                    location=flow.id,
                    data=data_id,
                    trigger=cls,
                    likelihood=likelihood_of(cls, model.data(data_id)),
                    status=_status(cls, [flow.transform]),
                    witnesses=((flow.id, data_id),),
                )
            )
    for node in model.nodes:
        if taint.node_levels[node.id] < FlowClass.PIDPF:
            continue
        if node.kind is NodeKind.STORE:
            category = ThreatCategory.IST
        elif node.kind is NodeKind.PROCESS and node.capabilities & PROCESSING_CAPABILITIES:
            category = ThreatCategory.IP
        else:
            continue
        for data_id, cls in taint.witness_data(node.id).items():
            delivering = taint.delivering_flows(node.id, data_id)
            raw.append(
                Threat(
                    id=threat_id(category.value, node.id, data_id),
                    category=category,
                    location=node.id,
                    data=data_id,
                    trigger=cls,
                    likelihood=likelihood_of(cls, model.data(data_id)),
                    status=_status(cls, [model.flow(f).transform for f in delivering]),
                    witnesses=tuple((f, data_id) for f in delivering),
                )
            )
    threats = []
    for t in sorted(raw, key=lambda t: t.id):
        t = replace(t, misactor_candidates=assign_misactors(t, model))
        threats.append(replace(t, aca=evaluate_aca(t, model)))
    return threats


def candidate_misactors(threat: Threat, model: Model) -> frozenset[MisactorKind]:
    """Rule-generated candidates before analyst exclusions."""
    if threat.category is ThreatCategory.IS:
        by_user = user_initiated(model, model.flow(threat.location))
        return USER_MISACTORS if by_user else SYSTEM_MISACTORS
    node = model.node(threat.location)
    if node.government_access:
        return SYSTEM_MISACTORS | {MisactorKind.GA}
    return SYSTEM_MISACTORS


def assign_misactors(threat: Threat, model: Model) -> tuple[MisactorKind, ...]:
    candidates = set(candidate_misactors(threat, model))
    if threat.category is ThreatCategory.IS:
        exclusion = model.exclusion(threat.location)
        if exclusion is not None:
            candidates -= exclusion.excluded
    if not candidates:
        raise ValueError(f"threat left with no misactor: {threat.id}")
    return sort_misactors(candidates)


def _answer_gap(value: Answer) -> Gap:
    if value is Answer.YES:
        return Gap.SATISFIED
    return Gap.GAP if value is Answer.NO else Gap.UNKNOWN


def _access_gap(value: AccessControl) -> Gap:
    if value is AccessControl.ENFORCED:
        return Gap.SATISFIED
    return Gap.UNKNOWN if value is AccessControl.UNKNOWN else Gap.GAP


def evaluate_aca(threat: Threat, model: Model) -> AcaGapReport:
    """Look up the flow annotation (IS threats), falling back to the data annotation.

    Only stakeholder-side answers can satisfy awareness and consent; sender-side
    answers are cited in the evidence but never close a gap.
    """
    source: Optional[str] = None
    ann = None
    tried = [threat.location] if threat.on_flow else []
    tried.append(threat.data)
    for target in tried:
        ann = model.annotation(target)
        if ann is not None:
            source = target
            break
    if ann is None:
        missing = f"no annotation for {' or '.join(tried)}"
        return AcaGapReport(*(GapFinding(Gap.UNKNOWN, missing) for _ in range(3)))
    cite = f"annotate {source}"
    return AcaGapReport(
        awareness=GapFinding(
            _answer_gap(ann.awareness_stakeholders),
            f"{cite}: awareness.stakeholders={ann.awareness_stakeholders.value}, awareness.sender={ann.awareness_sender.value}",
        ),
        consent=GapFinding(
            _answer_gap(ann.consent_stakeholders),
            f"{cite}: consent.stakeholders={ann.consent_stakeholders.value}, consent.sender={ann.consent_sender.value}",
        ),
        access=GapFinding(_access_gap(ann.access_control), f"{cite}: access-control={ann.access_control.value}"),
    )
