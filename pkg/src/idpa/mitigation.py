"""Mitigation catalog, per-threat suggestions and the 6A posture report."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from idpa.model import Answer, MisactorKind, Model, Transform
from idpa.threats import Status, Threat


class Principle(str, enum.Enum):
    AWARENESS = "Awareness"
    AUTHORIZATION = "Authorization"
    ACCESS = "Access"
    ACCOUNTABILITY = "Accountability"
    AUDITABILITY = "Auditability"
    ALIGNMENT = "Alignment"


PROACTIVE = (Principle.AWARENESS, Principle.AUTHORIZATION, Principle.ACCESS)
REACTIVE = (Principle.ACCOUNTABILITY, Principle.AUDITABILITY, Principle.ALIGNMENT)
_PRINCIPLE_ORDER = list(Principle)


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Mitigation:
    id: str
    misactor: MisactorKind
    text: str
    principle_tags: tuple[Principle, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "misactor": self.misactor.value,
            "text": self.text,
            "principles": [p.value for p in self.principle_tags],
        }


def _m(mid: str, kind: MisactorKind, text: str, *tags: Principle) -> Mitigation:
    return Mitigation(mid, kind, text, tuple(sorted(tags, key=_PRINCIPLE_ORDER.index)))


M = MisactorKind
P = Principle

DEFAULT_CATALOG_NAME = "idpa-default/1"
DEFAULT_CATALOG: tuple[Mitigation, ...] = (
    _m("mu-security-measures", M.MU, "Advanced security measures: encryption plus anomaly and intrusion detection against unauthorized access", P.ACCESS),
    _m("mu-security-audits", M.MU, "Security audits: periodic reviews and penetration tests to find and fix weaknesses", P.AUDITABILITY),
    _m("iu-privacy-training", M.IU, "Privacy awareness training on why others' privacy matters and what negligence costs", P.AWARENESS),
    _m("iu-privacy-by-design", M.IU, "Privacy by design: limit data exposure and give people more control over their data", P.ACCESS, P.AUTHORIZATION),
    _m("uu-privacy-tools", M.UU, "Privacy tools: easy-to-use tooling that helps users protect other people's data", P.ACCESS),
    _m("uu-guidance", M.UU, "Guidance: publish privacy guidelines and best practices", P.AWARENESS),
    _m("ufu-educational-campaigns", M.UFU, "Educational campaigns about privacy rights and responsibilities toward others", P.AWARENESS),
    _m("ufu-clear-policies", M.UFU, "Clear privacy policies: comprehensive yet easy to understand", P.AWARENESS, P.ALIGNMENT),
    _m("sp-data-handling", M.SP, "Strict data handling protocols with regular compliance checks", P.ACCOUNTABILITY, P.ALIGNMENT),
    _m("sp-protection-agreements", M.SP, "Data protection agreements: strict protection terms in contracts with third parties", P.ACCOUNTABILITY),
    _m("ga-regulatory-compliance", M.GA, "Regulatory compliance: fulfil data requests only when fully compliant with the law", P.ALIGNMENT),
    _m("ga-transparency", M.GA, "Transparency and accountability about data requests, with oversight of how data is handled", P.ACCOUNTABILITY, P.AUDITABILITY),
)


@dataclass(frozen=True)
class Catalog:
    name: str
    entries: tuple[Mitigation, ...]

    def for_misactor(self, kind: MisactorKind) -> list[Mitigation]:
        return sorted((m for m in self.entries if m.misactor is kind), key=lambda m: m.id)

    def to_dict(self) -> dict:
        ordered = sorted(self.entries, key=lambda m: (m.misactor.rank, m.id))
        return {"catalog": self.name, "entries": [m.to_dict() for m in ordered]}


def default_catalog() -> Catalog:
    return Catalog(DEFAULT_CATALOG_NAME, DEFAULT_CATALOG)


def catalog_from_dict(raw: dict) -> Catalog:
    """Accepts the ``mitigations`` section of a JSON report."""
    if not isinstance(raw, dict) or not isinstance(raw.get("entries"), list):
        raise CatalogError("catalog must be an object with an 'entries' list")
    name = raw.get("catalog", "custom")
    if not isinstance(name, str):
        raise CatalogError("catalog name must be a string")
    entries = []
    seen: set[str] = set()
    for i, item in enumerate(raw["entries"]):
        try:
            mid, kind, text, tags = item["id"], item["misactor"], item["text"], item["principles"]
            mitigation = _m(mid, MisactorKind(kind), text, *(Principle(t) for t in tags))
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"catalog entry {i}: {exc}") from None
        if not isinstance(mid, str) or not mid or not isinstance(text, str):
            raise CatalogError(f"catalog entry {i}: id and text must be non-empty strings")
        if not mitigation.principle_tags:
            raise CatalogError(f"catalog entry {mid}: principles must not be empty")
        if mid in seen:
            raise CatalogError(f"catalog entry {mid}: duplicate id")
        seen.add(mid)
        entries.append(mitigation)
    return Catalog(name, tuple(entries))


def load_catalog(path: Union[str, Path], base: Optional[Catalog] = None) -> Catalog:
    """Load a catalog file and overlay it on ``base`` (default catalog when omitted).

    Entries with an id already in the base replace it; new ids are added.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    overlay = catalog_from_dict(raw)
    base = base or default_catalog()
    merged = {m.id: m for m in base.entries}
    merged.update({m.id: m for m in overlay.entries})
    return Catalog(f"{base.name}+{overlay.name}", tuple(merged.values()))


def suggest(threat: Threat, catalog: Optional[Catalog] = None) -> list[Mitigation]:
    """Catalog entries for every misactor candidate, in misactor order then id."""
    catalog = catalog or default_catalog()
    out: list[Mitigation] = []
    for kind in threat.misactor_candidates:
        out.extend(catalog.for_misactor(kind))
    return out


def existing_controls(threat: Threat, model: Model) -> list[str]:
    """Transforms already applied to the threat's data anywhere in the model."""
    notes = []
    for flow in model.flows:
        if flow.transform is Transform.NONE or threat.data not in flow.carries:
            continue
        notes.append(f"{flow.id} {flow.transform.value} {threat.data}")
    return notes


def mitigation_note(threat: Threat, model: Model) -> Optional[str]:
    """Note attached to mitigated threats naming the transform that mitigates them."""
    if threat.status is not Status.MITIGATED:
        return None
    flows = sorted({f for f, _ in threat.witnesses})
    transforms = sorted({model.flow(f).transform.value for f in flows})
    return f"mitigated by existing transform {','.join(transforms)} on {', '.join(flows)}"


class PostureStatus(str, enum.Enum):
    SATISFIED = "satisfied"
    GAP = "gap"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Dimension:
    principle: Principle
    status: PostureStatus
    evidence: tuple[str, ...]


@dataclass(frozen=True)
class PostureReport:
    dimensions: tuple[Dimension, ...]

    def __getitem__(self, principle: Principle) -> Dimension:
        for dim in self.dimensions:
            if dim.principle is principle:
                return dim
        raise KeyError(principle)

    def to_dict(self) -> dict:
        return {
            d.principle.value: {"status": d.status.value, "evidence": list(d.evidence)} for d in self.dimensions
        }


_ACA_FOR = {Principle.AWARENESS: "awareness", Principle.AUTHORIZATION: "consent", Principle.ACCESS: "access"}
_POLICY_STATUS = {Answer.YES: PostureStatus.SATISFIED, Answer.NO: PostureStatus.GAP, Answer.UNKNOWN: PostureStatus.UNKNOWN}


def posture(model: Model, threats: Sequence[Threat]) -> PostureReport:
    dims = []
    for principle in PROACTIVE:
        attr = _ACA_FOR[principle]
        gapped = tuple(t.id for t in threats if getattr(t.aca, attr).status.is_gap)
        if gapped:
            dims.append(Dimension(principle, PostureStatus.GAP, gapped))
        else:
            note = "no threats" if not threats else f"{attr} satisfied for all {len(threats)} threats"
            dims.append(Dimension(principle, PostureStatus.SATISFIED, (note,)))
    for principle in REACTIVE:
        key = principle.value.lower()
        value = getattr(model.policy, key)
        evidence = f"policy {key}={value.value}" if value is not Answer.UNKNOWN else f"policy {key} not declared"
        dims.append(Dimension(principle, _POLICY_STATUS[value], (evidence,)))
    return PostureReport(tuple(dims))


def used_mitigations(threats: Iterable[Threat], catalog: Catalog) -> list[Mitigation]:
    kinds = {k for t in threats for k in t.misactor_candidates}
    return [m for m in sorted(catalog.entries, key=lambda m: (m.misactor.rank, m.id)) if m.misactor in kinds]
