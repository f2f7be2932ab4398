import random
from dataclasses import replace
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_model, with_extra_flow
from oracles import path_oracle, reach_oracle
from idpa.dsl import parse
from idpa.model import DataObject, Subjects, Transform
from idpa.taint import DEFAULT_PIDPF_LIKELIHOOD, FlowClass, classify_flow, likelihood_of, propagate

HEADER = 'model "t"\nentity u "User"\nprocess p "App"\nstore s "Store"\n'
DATA = (
    'data own-password "Password" subjects=sender-only\n'
    'data contacts "Contacts" subjects=includes-others\n'
    'data photo "Photo" subjects=may-include-others\n'
)


def _flow_class(carries):
    m = parse(HEADER + DATA + f"flow f u -> p carries={carries}\n")
    return classify_flow(m.flow("f"), m)


@pytest.mark.parametrize(
    "carries, expected",
    [
        ("contacts", FlowClass.IDPF),
        ("photo", FlowClass.PIDPF),
        ("own-password", FlowClass.NIDPF),
        ("own-password,contacts", FlowClass.IDPF),
        ("contacts,own-password", FlowClass.IDPF),
        ("photo,own-password", FlowClass.PIDPF),
    ],
)
def test_classify_flow(carries, expected):
    assert _flow_class(carries) is expected


def test_classification_is_direction_agnostic():
    m = parse(HEADER + DATA + "flow f p -> u carries=contacts\n")
    assert classify_flow(m.flow("f"), m) is FlowClass.IDPF


def test_flow_class_total_order():
    assert FlowClass.NIDPF < FlowClass.PIDPF < FlowClass.IDPF
    assert max(FlowClass) is FlowClass.IDPF


CHAIN = (
    HEADER
    + 'data contacts "Contacts" subjects=includes-others\n'
    + 'data records "Records" subjects=sender-only derived-from=contacts\n'
    + "flow f-up u -> p carries=contacts\n"
)


def test_derived_data_inherits_along_chain():
    m = parse(CHAIN + "flow f-store p -> s carries=records\n")
    taint = propagate(m)
    assert taint.node_levels["s"] is FlowClass.IDPF
    assert taint.flow_classes["f-store"] is FlowClass.IDPF
    assert taint.declared["f-store"] is FlowClass.NIDPF
    assert taint.witnesses["s"] == (("f-store", "records"),)


def test_strips_others_caps_downstream():
    m = parse(CHAIN + "flow f-store p -> s carries=records transform=strips-others\n")
    taint = propagate(m)
    assert taint.node_levels["s"] is FlowClass.NIDPF
    assert taint.witnesses["s"] == ()


def test_encrypts_does_not_lower_class():
    m = parse(CHAIN + "flow f-store p -> s carries=records transform=encrypts\n")
    assert propagate(m).node_levels["s"] is FlowClass.IDPF


def test_stripped_input_keeps_derived_sender_only_declaration():
    text = (
        HEADER
        + 'process q "Q"\n'
        + 'data contacts "Contacts" subjects=includes-others\n'
        + 'data records "Records" subjects=sender-only derived-from=contacts\n'
        + "flow f-up u -> p carries=contacts\n"
        + "flow f-clean p -> q carries=contacts transform=strips-others\n"
        + "flow f-raw u -> q carries=contacts\n"
        + "flow f-store q -> s carries=records\n"
    )
    assert propagate(parse(text)).pair_class("f-store", "records") is FlowClass.NIDPF


def test_derived_data_at_origin_entity_inherits_declared_parent():
    text = HEADER + DATA + 'data hashes "Hashes" subjects=sender-only derived-from=contacts\nflow f u -> p carries=hashes\n'
    assert propagate(parse(text)).flow_classes["f"] is FlowClass.IDPF


def test_parent_that_never_arrived_does_not_taint_process_output():
    text = HEADER + DATA + 'data hashes "Hashes" subjects=sender-only derived-from=contacts\nflow f p -> s carries=hashes\n'
    assert propagate(parse(text)).flow_classes["f"] is FlowClass.NIDPF


def test_cycles_terminate():
    text = (
        HEADER
        + 'data contacts "Contacts" subjects=includes-others\n'
        + 'data records "Records" subjects=sender-only derived-from=contacts\n'
        + "flow a u -> p carries=contacts\nflow b p -> s carries=records\nflow c s -> p carries=records\n"
    )
    taint = propagate(parse(text))
    assert taint.node_levels["p"] is FlowClass.IDPF


def test_likelihood_of():
    contacts = DataObject("c", "C", Subjects.INCLUDES_OTHERS)
    photo = DataObject("p", "P", Subjects.MAY_INCLUDE_OTHERS, Decimal("0.8"))
    bare = DataObject("b", "B", Subjects.MAY_INCLUDE_OTHERS)
    assert likelihood_of(FlowClass.IDPF, contacts) == 1
    assert likelihood_of(FlowClass.IDPF, photo) == 1
    assert likelihood_of(FlowClass.PIDPF, photo) == Decimal("0.8")
    assert likelihood_of(FlowClass.PIDPF, bare) == Decimal("0.5") == DEFAULT_PIDPF_LIKELIHOOD
    with pytest.raises(ValueError):
        likelihood_of(FlowClass.NIDPF, contacts)


def test_matches_path_oracle_on_random_dags():
    for seed in range(300):
        m = random_model(random.Random(seed))
        taint = propagate(m)
        pairs, flows, nodes = path_oracle(m)
        assert {k: int(v) for k, v in taint.pair_classes.items()} == pairs
        assert {k: int(v) for k, v in taint.flow_classes.items()} == flows
        assert {k: int(v) for k, v in taint.node_levels.items()} == nodes


def test_matches_reachability_oracle_on_cyclic_models():
    for seed in range(300):
        m = random_model(random.Random(seed), dag=False)
        taint = propagate(m)
        pairs, flows, nodes = reach_oracle(m)
        assert {k: int(v) for k, v in taint.pair_classes.items()} == pairs
        assert {k: int(v) for k, v in taint.node_levels.items()} == nodes


def test_oracles_agree_on_dags():
    for seed in range(200):
        m = random_model(random.Random(seed))
        assert reach_oracle(m) == path_oracle(m)


@settings(max_examples=200)
@given(st.randoms(use_true_random=False), st.booleans())
def test_fixpoint_properties(rng, dag):
    m = random_model(rng, dag=dag)
    taint = propagate(m)
    assert propagate(m, seed=taint) == taint
    for node in m.nodes:
        incoming = [taint.flow_classes[f.id] for f in m.incoming(node.id)]
        assert taint.node_levels[node.id] == max(incoming, default=FlowClass.NIDPF)
        if taint.node_levels[node.id] > FlowClass.NIDPF:
            assert taint.witnesses[node.id]
    for flow in m.flows:
        if flow.transform is Transform.STRIPS_OTHERS:
            assert taint.flow_classes[flow.id] is FlowClass.NIDPF
    shuffled = replace(m, flows=tuple(replace(f, carries=tuple(reversed(f.carries))) for f in m.flows))
    assert {f.id: classify_flow(f, shuffled) for f in shuffled.flows} == taint.declared


@settings(max_examples=200)
@given(st.randoms(use_true_random=False), st.booleans())
def test_adding_a_flow_never_lowers_levels(rng, dag):
    m = random_model(rng, dag=dag)
    bigger = with_extra_flow(rng, m, dag=dag)
    before, after = propagate(m), propagate(bigger)
    assert all(after.node_levels[n] >= lvl for n, lvl in before.node_levels.items())
