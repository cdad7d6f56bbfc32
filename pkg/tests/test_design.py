from __future__ import annotations

import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choice_forge.design import (Alternative, Attribute, AttributeSchema, Dilemma,
                                 DuplicateAlternative, Level, OddCount, SchemaError,
                                 default_schema, enumerate_alternatives, generate_design,
                                 pair_dilemmas, swap_orders)

TABLE = {
    "view": (0, 1), "floor": (10, 18, 26), "access club": (0, 1), "free mini bar": (0, 1),
    "guest smartphone": (0, 1), "cancellation": (0, 1),
    "price per night": (1600, 2000, 2400, 2800, 3200),
}


def attr(name, codes, price=False):
    return Attribute(name, tuple(Level(c, f"{name}={c}") for c in codes), True, price)


def small_schema(*sizes):
    attrs = [attr(f"x{i}", range(n)) for i, n in enumerate(sizes)]
    attrs.append(attr("price", (1, 2), price=True))
    return AttributeSchema(tuple(attrs))


def test_default_schema_levels(schema):
    assert schema.names == list(TABLE)
    for name, codes in TABLE.items():
        assert schema[name].codes == codes
    assert schema.price.name == "price per night"
    assert [a.is_price for a in schema.attributes].count(True) == 1


@pytest.mark.parametrize("attrs, msg", [
    ((attr("a", (0, 1)),), "price"),
    ((attr("a", (0, 1), True), attr("b", (0, 1), True)), "price"),
    ((attr("a", (0,)), attr("p", (1, 2), True)), "levels"),
    ((attr("a", (0, 0)), attr("p", (1, 2), True)), "repeated"),
    ((attr("a", (0, 1)), attr("a", (2, 3)), attr("p", (1, 2), True)), "unique"),
])
def test_schema_invariants(attrs, msg):
    with pytest.raises(SchemaError, match=msg):
        AttributeSchema(attrs)


def test_schema_json_roundtrip(tmp_path, schema):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(schema.to_dict()))
    assert AttributeSchema.from_json(path) == schema
    doc = schema.to_dict()
    assert set(doc) == {"attributes"}
    assert set(doc["attributes"][0]) == {"name", "levels", "desirable", "is_price"}


def test_enumerate_table_schema(schema):
    alts = enumerate_alternatives(schema)
    assert len(alts) == 480 == 2 * 3 * 2 * 2 * 2 * 2 * 5
    assert len(set(alts)) == 480
    # lexicographic: last attribute varies fastest
    assert alts[0]["price per night"] == 1600 and alts[1]["price per night"] == 2000
    assert alts[0]["view"] == 0 and alts[-1]["view"] == 1


def test_enumerate_minimal_schemas():
    one = AttributeSchema((attr("p", (1, 2), price=True),))
    assert len(enumerate_alternatives(one)) == 2
    assert len(enumerate_alternatives(AttributeSchema(
        (attr("a", (0, 1)), attr("p", (1, 2, 3), price=True))))) == 6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=0, max_size=4))
def test_enumerate_length_is_product(sizes):
    s = small_schema(*sizes)
    assert len(enumerate_alternatives(s)) == math.prod(sizes) * 2


def test_alternative_rejects_illegal_codes(schema):
    levels = {k: v[0] for k, v in TABLE.items()}
    Alternative.from_mapping(levels, schema)
    with pytest.raises(ValueError):
        Alternative.from_mapping({**levels, "floor": 11}, schema)
    with pytest.raises(ValueError):
        Alternative.from_mapping({k: v for k, v in levels.items() if k != "view"}, schema)


def test_pair_dilemmas_perfect_matching(schema):
    alts = enumerate_alternatives(schema)
    dilemmas = pair_dilemmas(alts, seed=3)
    assert len(dilemmas) == 240
    used = Counter(a for d in dilemmas for a in (d.alt_a, d.alt_b))
    assert used == Counter(alts)
    assert [d.id for d in dilemmas] == list(range(240))


def test_pair_dilemmas_seeded(schema):
    alts = enumerate_alternatives(schema)
    assert pair_dilemmas(alts, 11) == pair_dilemmas(alts, 11)
    assert pair_dilemmas(alts, 11) != pair_dilemmas(alts, 12)


def test_pair_dilemmas_edge_cases(schema):
    alts = enumerate_alternatives(schema)
    (only,) = pair_dilemmas(alts[:2], 0)
    assert {only.alt_a, only.alt_b} == set(alts[:2])
    with pytest.raises(OddCount):
        pair_dilemmas(alts[:3], 0)
    with pytest.raises(DuplicateAlternative):
        pair_dilemmas([alts[0], alts[0]], 0)


def test_dilemma_alternatives_differ(schema):
    a = enumerate_alternatives(schema)[0]
    with pytest.raises(ValueError):
        Dilemma(0, a, a)


def test_swap_orders(dilemmas):
    swapped = swap_orders(dilemmas)
    assert [d.id for d in swapped] == [d.id for d in dilemmas]
    assert all(s.alt_a == d.alt_b and s.alt_b == d.alt_a for s, d in zip(swapped, dilemmas))
    assert swap_orders(swapped) == dilemmas
    assert Counter(a for d in swapped for a in (d.alt_a, d.alt_b)) == \
        Counter(a for d in dilemmas for a in (d.alt_a, d.alt_b))


def test_dilemma_roundtrip(dilemmas, schema):
    d = dilemmas[7]
    assert Dilemma.from_dict(json.loads(json.dumps(d.to_dict())), schema) == d


def test_generate_design_default():
    assert generate_design(default_schema(), 0) == generate_design(seed=0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(2, 3), min_size=1, max_size=3), st.integers(0, 2**32 - 1))
def test_pairing_covers_inputs(sizes, seed):
    alts = enumerate_alternatives(small_schema(*sizes))
    out = pair_dilemmas(alts, seed)
    assert Counter(a for d in out for a in (d.alt_a, d.alt_b)) == Counter(alts)
