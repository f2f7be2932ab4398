import random

import pytest

from generators import random_model
from idpa.dsl import parse
from idpa.model import (
    DataObject,
    Flow,
    MisactorExclusion,
    MisactorKind,
    Model,
    Node,
    NodeKind,
    Severity,
    Subjects,
    has_errors,
    threat_id,
    topological_data_order,
    validate,
)
from idpa.corpus import fixture_wechat


def _user_app(**flow_kw):
    nodes = [Node("u", "User", NodeKind.ENTITY), Node("p", "App", NodeKind.PROCESS)]
    data = [DataObject("d", "Contacts", Subjects.INCLUDES_OTHERS)]
    flow = dict(id="f", source="u", destination="p", carries=("d",))
    flow.update(flow_kw)
    return nodes, data, [Flow(**flow)]


def errors(diags):
    return [d.message for d in diags if d.severity is Severity.ERROR]


def test_undeclared_data_reference():
    nodes, data, _ = _user_app()
    m = Model("t", nodes, data, [Flow("f", "u", "p", ("d-ghost",))])
    assert errors(validate(m)) == ["unresolved data reference d-ghost"]


def test_empty_model_warns_only():
    diags = validate(Model("empty"))
    assert errors(diags) == []
    assert [(d.severity, d.message) for d in diags] == [(Severity.WARNING, "model has no flows")]


def test_wechat_fixture_is_clean():
    assert errors(validate(fixture_wechat().model())) == []


def test_self_loop_is_a_warning():
    nodes, data, _ = _user_app()
    diags = validate(Model("t", nodes, data, [Flow("f", "p", "p", ("d",))]))
    assert not has_errors(diags)
    assert any("self-loop" in d.message for d in diags)


def test_capabilities_only_on_processes():
    m = Model("t", [Node("s", "Store", NodeKind.STORE, frozenset({"matches"}))])
    assert "capabilities are only allowed on processes" in errors(validate(m))


def test_likelihood_requires_may_include_others():
    from decimal import Decimal

    m = Model("t", data_objects=[DataObject("d", "x", Subjects.SENDER_ONLY, Decimal("0.3"))])
    assert "likelihood requires subjects=may-include-others" in errors(validate(m))


def test_derivation_cycle_detected():
    data = [
        DataObject("a", "A", Subjects.SENDER_ONLY, derived_from={"b"}),
        DataObject("b", "B", Subjects.SENDER_ONLY, derived_from={"a"}),
    ]
    msgs = errors(validate(Model("t", data_objects=data)))
    assert msgs == ["derived-from cycle through a"]
    with pytest.raises(ValueError):
        topological_data_order(Model("t", data_objects=data))


def test_exclusion_emptying_candidates_is_error():
    nodes, data, flows = _user_app()
    exc = MisactorExclusion("f", frozenset({MisactorKind.MU, MisactorKind.IU, MisactorKind.UU, MisactorKind.UFU}), "x")
    assert "threat left with no misactor" in errors(validate(Model("t", nodes, data, flows, exclusions=[exc])))


def test_exclusion_needs_reason():
    nodes, data, flows = _user_app()
    exc = MisactorExclusion("f", frozenset({MisactorKind.UFU}), "  ")
    assert "exclusion reason must not be empty" in errors(validate(Model("t", nodes, data, flows, exclusions=[exc])))


def test_duplicate_ids():
    m = Model("t", [Node("u", "A", NodeKind.ENTITY), Node("u", "B", NodeKind.ENTITY)])
    assert "duplicate node id u" in errors(validate(m))


def test_threat_id_is_pure():
    assert threat_id("IS", "f-upload-contacts", "d-contacts") == "IS-f-upload-contacts-d-contacts"


def test_ambiguous_threat_ids_rejected():
    nodes = [Node("u", "User", NodeKind.ENTITY), Node("p", "App", NodeKind.PROCESS)]
    data = [DataObject("b-c", "x", Subjects.INCLUDES_OTHERS), DataObject("c", "y", Subjects.INCLUDES_OTHERS)]
    flows = [Flow("a", "u", "p", ("b-c",)), Flow("a-b", "u", "p", ("c",))]
    assert any("ambiguous" in m for m in errors(validate(Model("t", nodes, data, flows))))


def test_model_equality_ignores_statement_order():
    a = parse('model "t"\nentity b "B"\nentity a "A"\n')
    b = parse('model "t"\nentity a "A"\nentity b "B"\n')
    assert a == b


def test_validation_deterministic_and_sorted():
    for seed in range(200):
        m = random_model(random.Random(seed), dag=False)
        first, second = validate(m), validate(m)
        assert first == second
        assert first == sorted(first, key=lambda d: d.sort_key())


def test_valid_models_have_topological_order():
    for seed in range(200):
        m = random_model(random.Random(seed))
        if not has_errors(validate(m)):
            order = topological_data_order(m)
            pos = {d: i for i, d in enumerate(order)}
            for d in m.data_objects:
                assert all(pos[p] < pos[d.id] for p in d.derived_from)
