"""Attribute schema, full-factorial enumeration and dilemma pairing.

The default schema is the seven-attribute hotel room design (view, floor,
club access, mini bar, guest smartphone, cancellation policy, price). Level
codes are the numeric values used as regressors; labels are the phrases that
appear in rendered prompts.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class SchemaError(ValueError):
    pass


class OddCount(ValueError):
    pass


class DuplicateAlternative(ValueError):
    pass


@dataclass(frozen=True)
class Level:
    code: float
    label: str


@dataclass(frozen=True)
class Attribute:
    name: str
    levels: tuple[Level, ...]
    desirable: bool = True
    is_price: bool = False

    @property
    def codes(self) -> tuple[float, ...]:
        return tuple(lv.code for lv in self.levels)

    def label_for(self, code: float) -> str | None:
        for lv in self.levels:
            if lv.code == code:
                return lv.label
        return None


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"attribute names must be unique: {names}")
        n_price = sum(a.is_price for a in self.attributes)
        if n_price != 1:
            raise SchemaError(f"exactly one price attribute required, got {n_price}")
        for a in self.attributes:
            if len(a.levels) < 2:
                raise SchemaError(f"attribute {a.name!r} needs at least 2 levels")
            if len(set(a.codes)) != len(a.codes):
                raise SchemaError(f"attribute {a.name!r} has repeated level codes")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def price(self) -> Attribute:
        return next(a for a in self.attributes if a.is_price)

    @property
    def price_index(self) -> int:
        return next(i for i, a in enumerate(self.attributes) if a.is_price)

    @property
    def non_price(self) -> list[Attribute]:
        return [a for a in self.attributes if not a.is_price]

    def __getitem__(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "attributes": [
                {
                    "name": a.name,
                    "levels": [{"code": lv.code, "label": lv.label} for lv in a.levels],
                    "desirable": a.desirable,
                    "is_price": a.is_price,
                }
                for a in self.attributes
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AttributeSchema":
        try:
            attrs = tuple(
                Attribute(
                    name=str(a["name"]),
                    levels=tuple(Level(float(lv["code"]), str(lv["label"])) for lv in a["levels"]),
                    desirable=bool(a.get("desirable", True)),
                    is_price=bool(a.get("is_price", False)),
                )
                for a in doc["attributes"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls(attrs)

    @classmethod
    def from_json(cls, path: str | Path) -> "AttributeSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _attr(name, pairs, desirable=True, is_price=False):
    return Attribute(name, tuple(Level(float(c), l) for c, l in pairs), desirable, is_price)


# Labels are the running-text phrases slotted into the scenario template.
HOTEL_SCHEMA = AttributeSchema((
    _attr("view", [(0, "city"), (1, "harbour")]),
    _attr("floor", [(10, "10th"), (18, "18th"), (26, "26th")]),
    _attr("access club", [(0, "does not have"), (1, "has")]),
    _attr("free mini bar", [(0, "soft drinks, snacks"), (1, "soft drinks, snacks, wine & beer")]),
    _attr("guest smartphone", [(0, "not available"), (1, "available (with free voice + data)")]),
    _attr("cancellation", [(0, "non-refundable"), (1, "refundable (up to 24 h. prior)")]),
    _attr(
        "price per night",
        [(p, f"HK$ {p}") for p in (1600, 2000, 2400, 2800, 3200)],
        desirable=False,
        is_price=True,
    ),
))


def default_schema() -> AttributeSchema:
    return HOTEL_SCHEMA


@dataclass(frozen=True)
class Alternative:
    """One fully specified option: a ``(name, code)`` pair per schema attribute."""

    items: tuple[tuple[str, float], ...]

    @classmethod
    def from_mapping(cls, levels: Mapping[str, float], schema: AttributeSchema) -> "Alternative":
        missing = set(schema.names) ^ set(levels)
        if missing:
            raise SchemaError(f"alternative does not match schema attributes: {sorted(missing)}")
        for a in schema.attributes:
            if float(levels[a.name]) not in a.codes:
                raise SchemaError(f"illegal code {levels[a.name]!r} for {a.name!r}")
        return cls(tuple((a.name, float(levels[a.name])) for a in schema.attributes))

    @property
    def levels(self) -> dict[str, float]:
        return dict(self.items)

    def __getitem__(self, name: str) -> float:
        for k, v in self.items:
            if k == name:
                return v
        raise KeyError(name)

    def vector(self, names: Sequence[str]) -> np.ndarray:
        lv = self.levels
        return np.array([lv[n] for n in names], dtype=float)


@dataclass(frozen=True)
class Dilemma:
    id: int
    alt_a: Alternative
    alt_b: Alternative

    def __post_init__(self):
        if self.alt_a == self.alt_b:
            raise ValueError(f"dilemma {self.id}: alternatives must differ")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "alt_a": self.alt_a.levels, "alt_b": self.alt_b.levels}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], schema: AttributeSchema) -> "Dilemma":
        return cls(
            int(doc["id"]),
            Alternative.from_mapping(doc["alt_a"], schema),
            Alternative.from_mapping(doc["alt_b"], schema),
        )


def enumerate_alternatives(schema: AttributeSchema) -> list[Alternative]:
    """Full factorial, lexicographic in attribute order then level order."""
    names = schema.names
    return [
        Alternative(tuple(zip(names, combo)))
        for combo in itertools.product(*(a.codes for a in schema.attributes))
    ]


def pair_dilemmas(alternatives: Sequence[Alternative], seed: int) -> list[Dilemma]:
    """Seeded uniform-random perfect matching: shuffle, then pair neighbours."""
    if len(alternatives) % 2:
        raise OddCount(f"cannot pair an odd number ({len(alternatives)}) of alternatives")
    if len(set(alternatives)) != len(alternatives):
        raise DuplicateAlternative("input alternatives must be distinct")
    order = np.random.default_rng(seed).permutation(len(alternatives))
    return [
        Dilemma(i, alternatives[order[2 * i]], alternatives[order[2 * i + 1]])
        for i in range(len(alternatives) // 2)
    ]


def swap_orders(dilemmas: Iterable[Dilemma]) -> list[Dilemma]:
    return [Dilemma(d.id, d.alt_b, d.alt_a) for d in dilemmas]


def generate_design(schema: AttributeSchema | None = None, seed: int = 0) -> list[Dilemma]:
    """Enumerate ``schema`` and pair it; the default gives 240 hotel dilemmas."""
    schema = schema or default_schema()
    return pair_dilemmas(enumerate_alternatives(schema), seed)
