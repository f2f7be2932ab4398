import csv
import io
import json
import random

import pydot
import pytest

from generators import random_model
from idpa.corpus import fixtures, fixture_wechat
from idpa.dsl import parse
from idpa.model import Model
from idpa.report import MAP_COLUMNS, SCHEMA, AnalysisError, UnknownThreat, analyze, emit_json, emit_threat_map, emit_threat_tree


@pytest.fixture(scope="module")
def wechat():
    return fixture_wechat().analyze()


def test_upload_contacts_row(wechat):
    lines = emit_threat_map(wechat, "csv").splitlines()
    assert lines[0] == ",".join(MAP_COLUMNS)
    assert 'User (1),upload contacts,App (2),X,,,"MU,IU,UU",IS' in lines


def test_nidpf_only_map_has_plain_rows():
    m = parse('model "t"\nentity u "U"\nprocess p "P"\ndata d "D" subjects=sender-only\nflow f-go u -> p carries=d\n')
    rows = list(csv.reader(io.StringIO(emit_threat_map(analyze(m), "csv"))))
    assert rows[1:] == [["U (1)", "go", "P (2)", "", "", "X", "", ""]]


def test_rows_always_have_eight_columns():
    for seed in range(100):
        report = analyze(random_model(random.Random(seed), labels=True))
        rows = list(csv.reader(io.StringIO(emit_threat_map(report, "csv"))))
        assert all(len(r) == 8 for r in rows)
        md = emit_threat_map(report, "markdown").splitlines()[4:]
        assert len(md) == len(rows) - 1


def test_markdown_matches_csv(wechat):
    rows = list(csv.reader(io.StringIO(emit_threat_map(wechat, "csv"))))[1:]
    md_rows = []
    for line in emit_threat_map(wechat, "markdown").splitlines()[4:]:
        md_rows.append([c.strip() for c in line.strip("|").split(" | ")])
    assert md_rows == rows


def test_markdown_escapes_pipes():
    m = parse('model "t"\nentity u "A|B"\nprocess p "P"\ndata d "D" subjects=includes-others\nflow a u -> p carries=d\n')
    assert "A\\|B (1)" in emit_threat_map(analyze(m), "markdown")


def test_unknown_format(wechat):
    with pytest.raises(ValueError):
        emit_threat_map(wechat, "html")


def test_tree_root_and_leaves(wechat):
    dot = emit_threat_tree(wechat, "IS-f-upload-contacts-d-contacts")
    graph = pydot.graph_from_dot_data(dot)[0]
    labels = {n.get_name().strip('"'): n.get_label().strip('"') for n in graph.get_nodes() if n.get_label()}
    assert labels["IS-f-upload-contacts-d-contacts/root/1"] == "IS: upload contacts"
    assert {labels[f"IS-f-upload-contacts-d-contacts/misactor/{i}"] for i in (1, 2, 3)} == {"MU", "IU", "UU"}
    texts = set(labels.values())
    assert "Privacy awareness training on why others' privacy matters and what negligence costs" in texts
    assert any(t.startswith("awareness: ") for t in texts)


def test_mitigated_tree_root(wechat):
    dot = emit_threat_tree(wechat, "IP-p-find-friends-d-contacts")
    assert "[mitigated]" in dot.splitlines()[3]
    assert "existing control: f-match-contacts encrypts d-contacts" in dot


def test_every_corpus_tree_parses():
    for fx in fixtures():
        report = fx.analyze()
        for threat in report.threats:
            graphs = pydot.graph_from_dot_data(emit_threat_tree(report, threat.id))
            assert graphs and len(graphs[0].get_nodes()) >= 3


def test_unknown_threat_lists_ids(wechat):
    with pytest.raises(UnknownThreat) as info:
        emit_threat_tree(wechat, "IS-nope")
    assert "IS-f-upload-contacts-d-contacts" in str(info.value)


def test_empty_model_json():
    out = json.loads(emit_json(analyze(Model(name="empty"))))
    assert out["schema"] == SCHEMA
    assert out["threats"] == [] and out["flows"] == []
    assert out["mitigations"]["entries"] == []


def test_json_numbers_and_shape(wechat):
    out = json.loads(emit_json(wechat))
    by_id = {t["id"]: t for t in out["threats"]}
    assert by_id["IS-f-upload-contacts-d-contacts"]["likelihood"] == 1
    assert isinstance(by_id["IS-f-upload-contacts-d-contacts"]["likelihood"], int)
    assert by_id["IP-p-find-friends-d-contacts"]["note"].startswith("mitigated by")
    assert emit_json(wechat).endswith("}\n")


def test_invalid_model_rejected():
    from idpa.model import Flow

    with pytest.raises(AnalysisError):
        analyze(Model(name="bad", flows=(Flow("f", "x", "y", ("d",)),)))


def test_output_is_deterministic():
    for seed in range(50):
        m = random_model(random.Random(seed), labels=True)
        a, b = analyze(m), analyze(m)
        assert emit_json(a) == emit_json(b)
        assert emit_threat_map(a, "csv") == emit_threat_map(b, "csv")
        for t in a.threats:
            assert emit_threat_tree(a, t.id) == emit_threat_tree(b, t.id)
