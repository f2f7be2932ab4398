"""Bundled example models and their frozen golden outputs.

Layout::

    corpus/<name>.idpa               model (discovered by extension)
    corpus/<name>.catalog.json       optional mitigation catalog overlay
    corpus/<name>.notes.json         findings each golden must contain
    corpus/golden/<name>/canonical.idpa
    corpus/golden/<name>/report.json
    corpus/golden/<name>/threat-map.csv
    corpus/golden/<name>/threat-map.md
    corpus/golden/<name>/trees/<threat-id>.dot

Run ``python -m idpa.corpus`` to rewrite the goldens after an intended change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from idpa.dsl import parse, serialize
from idpa.mitigation import Catalog, load_catalog
from idpa.model import Model
from idpa.report import AnalysisReport, analyze, emit_json, emit_threat_map, emit_threat_tree

CORPUS_DIR = Path(__file__).resolve().parent
GOLDEN_DIR = CORPUS_DIR / "golden"


@dataclass(frozen=True)
class Fixture:
    name: str
    model_path: Path
    catalog_path: Optional[Path]
    notes_path: Optional[Path]

    @property
    def golden_dir(self) -> Path:
        return GOLDEN_DIR / self.name

    def text(self) -> str:
        return self.model_path.read_text(encoding="utf-8")

    def model(self) -> Model:
        return parse(self.text())

    def catalog(self) -> Optional[Catalog]:
        return load_catalog(self.catalog_path) if self.catalog_path else None

    def analyze(self) -> AnalysisReport:
        return analyze(self.model(), self.catalog())

    def notes(self) -> dict:
        if self.notes_path is None:
            return {"fixture": self.name, "findings": []}
        return json.loads(self.notes_path.read_text(encoding="utf-8"))

    def render(self) -> dict[str, str]:
        """Every golden output keyed by path relative to the golden directory."""
        report = self.analyze()
        out = {
            "canonical.idpa": serialize(report.model),
            "report.json": emit_json(report),
            "threat-map.csv": emit_threat_map(report, "csv"),
            "threat-map.md": emit_threat_map(report, "markdown"),
        }
        for threat in report.threats:
            out[f"trees/{threat.id}.dot"] = emit_threat_tree(report, threat.id)
        return out


def _fixture(model_path: Path) -> Fixture:
    name = model_path.name[: -len(".idpa")]
    catalog = model_path.with_name(f"{name}.catalog.json")
    notes = model_path.with_name(f"{name}.notes.json")
    return Fixture(name, model_path, catalog if catalog.exists() else None, notes if notes.exists() else None)


def fixtures() -> list[Fixture]:
    return [_fixture(p) for p in sorted(CORPUS_DIR.glob("*.idpa"))]


def fixture(name: str) -> Fixture:
    path = CORPUS_DIR / f"{name}.idpa"
    if not path.exists():
        raise KeyError(f"no fixture named {name!r}")
    return _fixture(path)


def fixture_wechat() -> Fixture:
    return fixture("wechat")


def fixture_minimal_contacts() -> Fixture:
    return fixture("minimal-contacts")


def regenerate(fx: Fixture) -> list[Path]:
    """Write the fixture's goldens; returns the paths whose content changed."""
    changed = []
    rendered = fx.render()
    trees = fx.golden_dir / "trees"
    if trees.exists():
        for stale in trees.glob("*.dot"):
            if f"trees/{stale.name}" not in rendered:
                stale.unlink()
                changed.append(stale)
    for rel, text in rendered.items():
        path = fx.golden_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.exists() or path.read_text(encoding="utf-8") != text:
            path.write_bytes(text.encode("utf-8"))
            changed.append(path)
    return changed
