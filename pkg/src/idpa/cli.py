"""``idpa`` command line: validate, analyze (with CI gating) and tree.

Exit codes: 0 clean, 1 gated threats found, 2 usage, parse or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional, Sequence

from idpa import __version__
from idpa.dsl import ParseFailure, decode_source, parse_document
from idpa.mitigation import CatalogError, load_catalog
from idpa.model import Diagnostic, Model, Severity, has_errors
from idpa.report import UnknownThreat, analyze, emit_json, emit_threat_map, emit_threat_tree
from idpa.threats import Status, ThreatCategory

EXIT_OK = 0
EXIT_GATED = 1
EXIT_ERROR = 2


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    path: str
    command: str
    fmt: str = "markdown"
    fail_on: frozenset[ThreatCategory] = field(default_factory=lambda: frozenset(ThreatCategory))
    likelihood_threshold: Decimal = Decimal(1)
    include_mitigated: bool = False
    catalog: Optional[str] = None


def _categories(text: str) -> frozenset[ThreatCategory]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of IS, IST, IP")
    out = set()
    for name in names:
        try:
            out.add(ThreatCategory(name))
        except ValueError:
            raise argparse.ArgumentTypeError(f"unknown threat category {name!r} (expected IS, IST, IP)") from None
    return frozenset(out)


def _threshold(text: str) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_finite() or not (0 <= value <= 1):
        raise argparse.ArgumentTypeError(f"threshold must be within [0, 1], got {text}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2 as well; keep the message format
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="idpa", description="Interdependent-privacy threat modeling for .idpa data-flow models.")
    parser.add_argument("--version", action="version", version=f"idpa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_validate = sub.add_parser("validate", help="check a model and print diagnostics")
    p_validate.add_argument("file")

    p_analyze = sub.add_parser("analyze", help="analyze a model and print a report")
    p_analyze.add_argument("file")
    p_analyze.add_argument("--format", dest="fmt", choices=("markdown", "csv", "json"), default="markdown")
    p_analyze.add_argument(
        "--fail-on", type=_categories, default=frozenset(ThreatCategory), metavar="IS,IST,IP",
        help="threat categories that fail the gate (default: all)",
    )
    p_analyze.add_argument(
        "--likelihood-threshold", type=_threshold, default=Decimal(1), metavar="0..1",
        help="gate only on threats at or above this likelihood (default: 1)",
    )
    p_analyze.add_argument("--include-mitigated", action="store_true", help="let mitigated threats fail the gate")
    p_analyze.add_argument("--catalog", help="mitigation catalog file overlaid on the built-in catalog")

    p_tree = sub.add_parser("tree", help="print a threat tree as DOT")
    p_tree.add_argument("file")
    group = p_tree.add_mutually_exclusive_group(required=True)
    group.add_argument("--threat", metavar="ID")
    group.add_argument("--list", action="store_true", help="list threat ids")
    p_tree.add_argument("--catalog", help="mitigation catalog file overlaid on the built-in catalog")
    return parser


def _use_color() -> bool:
    return sys.stderr.isatty() and "NO_COLOR" not in os.environ


def _report_diagnostics(diags: Sequence[Diagnostic], path: str, as_json: bool) -> None:
    color = _use_color() and not as_json
    for diag in diags:
        if as_json:
            sys.stderr.write(json.dumps({"file": path, **diag.to_dict()}, sort_keys=True) + "\n")
            continue
        line = diag.format(path)
        if color:
            code = "31" if diag.severity is Severity.ERROR else "33"
            line = f"\033[{code}m{line}\033[0m"
        sys.stderr.write(line + "\n")


def _load(path: str, as_json: bool = False) -> tuple[Optional[Model], list[Diagnostic]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        diag = Diagnostic(Severity.ERROR, f"cannot read {path}: {exc.strerror or exc}", "")
        _report_diagnostics([diag], path, as_json)
        return None, [diag]
    try:
        text = decode_source(data)
    except ParseFailure as exc:
        _report_diagnostics(exc.diagnostics, path, as_json)
        return None, exc.diagnostics
    result = parse_document(text)
    _report_diagnostics(result.diagnostics, path, as_json)
    return result.model, result.diagnostics


def cmd_validate(path: str) -> int:
    model, diags = _load(path)
    return EXIT_ERROR if model is None or has_errors(diags) else EXIT_OK


def _catalog(path: Optional[str]):
    if path is None:
        return None
    try:
        return load_catalog(path)
    except (OSError, CatalogError) as exc:
        raise UsageError(f"cannot load catalog {path}: {exc}") from None


def gated(report, config: CliConfig) -> list:
    return [
        t for t in report.threats
        if t.category in config.fail_on
        and t.likelihood >= config.likelihood_threshold
        and (config.include_mitigated or t.status is not Status.MITIGATED)
    ]


def cmd_analyze(config: CliConfig) -> int:
    as_json = config.fmt == "json"
    model, diags = _load(config.path, as_json)
    if model is None:
        return EXIT_ERROR
    warnings = [d for d in diags if d.severity is Severity.WARNING]
    report = analyze(model, _catalog(config.catalog), warnings)
    if as_json:
        sys.stdout.write(emit_json(report))
    else:
        sys.stdout.write(emit_threat_map(report, config.fmt))
    hits = gated(report, config)
    if hits:
        cats = ",".join(sorted(c.value for c in config.fail_on))
        sys.stderr.write(
            f"idpa: {len(hits)} threat(s) fail the gate (categories {cats}, likelihood >= {config.likelihood_threshold})\n"
        )
        return EXIT_GATED
    return EXIT_OK


def cmd_tree(path: str, threat: Optional[str], list_ids: bool, catalog: Optional[str]) -> int:
    model, _ = _load(path)
    if model is None:
        return EXIT_ERROR
    report = analyze(model, _catalog(catalog))
    if list_ids:
        for t in report.threats:
            sys.stdout.write(t.id + "\n")
        return EXIT_OK
    try:
        sys.stdout.write(emit_threat_tree(report, threat))
    except UnknownThreat as exc:
        sys.stderr.write(f"idpa: {exc}\n")
        return EXIT_ERROR
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.file)
        if args.command == "analyze":
            config = CliConfig(
                path=args.file,
                command="analyze",
                fmt=args.fmt,
                fail_on=args.fail_on,
                likelihood_threshold=args.likelihood_threshold,
                include_mitigated=args.include_mitigated,
                catalog=args.catalog,
            )
            return cmd_analyze(config)
        return cmd_tree(args.file, args.threat, args.list, args.catalog)
    except UsageError as exc:
        sys.stderr.write(f"idpa: {exc}\n")
        return EXIT_ERROR
    except Exception as exc:  # exit-code contract: never leak other codes
        sys.stderr.write(f"idpa: internal error: {exc.__class__.__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
