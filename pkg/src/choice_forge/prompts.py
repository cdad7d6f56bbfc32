"""Prompt rendering: scenario text, in-context examples, personas, currency."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Collection, Sequence

import numpy as np

from .design import Alternative, AttributeSchema, Dilemma, enumerate_alternatives

USD_RATE = 0.13

FRAMING = (
    "You are an assistant to a user. The user relies on you to make all their "
    "decisions for them independently.\n"
    "The user has to decide between two scenarios."
)
INSTRUCTION = (
    "You **must** decide for the user between both scenarios. "
    "Only answer with A or B, do not add anything else."
)
ICL_HEADER = "Previously, the user made the following decision(s):"

CLUB_LONG = (
    "The user {club} access to the hotel club, which includes extra services such as "
    "breakfast and evening cocktails served in the panoramic restaurant."
)
CLUB_SHORT = "The user {club} access to the hotel club."

HOTEL_ATTRIBUTES = {
    "view", "floor", "access club", "free mini bar", "guest smartphone",
    "cancellation", "price per night",
}


class UnknownLevel(KeyError):
    pass


class NonPositiveRate(ValueError):
    pass


class Direction(enum.Enum):
    CHEAPER = "cheap"
    EXPENSIVE = "exp"
    MIXED = "mixed"


class IclMode(enum.Enum):
    ONE_RANDOM = "1rand"
    ONE_CLEAR = "1clear"
    THREE_RANDOM = "3"


class Persona(enum.Enum):
    BUSINESS = "business"
    STUDENT = "student"


PERSONA_TEXT = {
    Persona.BUSINESS: (
        "The user is staying in the hotel because of a business trip. The company is "
        "fully paying for everything and wants the user's stay to be as comfortable as possible."
    ),
    Persona.STUDENT: (
        "The user is staying in the hotel because of leisure. The user is a student that "
        "wants to travel around the world as budget-friendly as possible."
    ),
}


@dataclass(frozen=True)
class IclConfig:
    mode: IclMode
    direction: Direction

    def __post_init__(self):
        if self.direction is Direction.MIXED and self.mode is not IclMode.THREE_RANDOM:
            raise ValueError("the mixed pattern needs three examples")

    @property
    def directions(self) -> list[Direction]:
        if self.mode is not IclMode.THREE_RANDOM:
            return [self.direction]
        if self.direction is Direction.MIXED:
            return [Direction.CHEAPER, Direction.EXPENSIVE, Direction.CHEAPER]
        return [self.direction] * 3


@dataclass(frozen=True)
class Currency:
    code: str = "HKD"
    rate: float = 1.0

    def __post_init__(self):
        if self.code not in ("HKD", "USD"):
            raise ValueError(f"unsupported currency {self.code!r}")
        if self.rate <= 0:
            raise NonPositiveRate(f"conversion rate must be positive, got {self.rate}")

    @classmethod
    def usd(cls, rate: float = USD_RATE) -> "Currency":
        return cls("USD", rate)

    def format(self, amount_hkd: float) -> str:
        if self.code == "HKD":
            return f"HK$ {amount_hkd:.0f}"
        return f"US$ {convert_currency(amount_hkd, self.rate)}"


HKD = Currency()


@dataclass(frozen=True)
class PromptVariant:
    icl: IclConfig | None = None
    persona: Persona | None = None
    currency: Currency = field(default=HKD)
    club_short_description: bool = False

    @property
    def kind(self) -> str:
        if self.icl and self.persona:
            return "icl+persona"
        if self.icl:
            return "icl"
        if self.persona:
            return "persona"
        return "baseline"

    @property
    def id(self) -> str:
        if self.icl and self.persona:
            return f"combo-{self.persona.value}-{self.icl.direction.value}"
        if self.icl:
            return f"icl-{self.icl.mode.value}-{self.icl.direction.value}"
        if self.persona:
            return f"persona-{self.persona.value}"
        return "baseline"


def _icl(mode, direction):
    return IclConfig(mode, direction)


_VARIANTS = {
    "baseline": (None, None),
    "icl-1rand-cheap": (_icl(IclMode.ONE_RANDOM, Direction.CHEAPER), None),
    "icl-1rand-exp": (_icl(IclMode.ONE_RANDOM, Direction.EXPENSIVE), None),
    "icl-1clear-cheap": (_icl(IclMode.ONE_CLEAR, Direction.CHEAPER), None),
    "icl-1clear-exp": (_icl(IclMode.ONE_CLEAR, Direction.EXPENSIVE), None),
    "icl-3-cheap": (_icl(IclMode.THREE_RANDOM, Direction.CHEAPER), None),
    "icl-3-exp": (_icl(IclMode.THREE_RANDOM, Direction.EXPENSIVE), None),
    "icl-3-mixed": (_icl(IclMode.THREE_RANDOM, Direction.MIXED), None),
    "persona-business": (None, Persona.BUSINESS),
    "persona-student": (None, Persona.STUDENT),
    "combo-business-exp": (_icl(IclMode.THREE_RANDOM, Direction.EXPENSIVE), Persona.BUSINESS),
    "combo-student-cheap": (_icl(IclMode.THREE_RANDOM, Direction.CHEAPER), Persona.STUDENT),
}
VARIANT_IDS: tuple[str, ...] = tuple(_VARIANTS)


def variant_from_id(
    variant_id: str, currency: Currency = HKD, club_short_description: bool = False
) -> PromptVariant:
    try:
        icl, persona = _VARIANTS[variant_id]
    except KeyError:
        raise ValueError(
            f"unknown variant id {variant_id!r}; expected one of {', '.join(VARIANT_IDS)}"
        ) from None
    return PromptVariant(icl, persona, currency, club_short_description)


@dataclass(frozen=True)
class RenderedPrompt:
    dilemma_id: int
    variant: PromptVariant
    order_swapped: bool
    text: str
    # presented order, i.e. already swapped when order_swapped is set
    alt_a: Alternative | None = None
    alt_b: Alternative | None = None

    @property
    def variant_id(self) -> str:
        return self.variant.id

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def convert_currency(amount_hkd: float, rate: float) -> int:
    if rate <= 0:
        raise NonPositiveRate(f"conversion rate must be positive, got {rate}")
    return int(round(amount_hkd * rate))


def _label(schema: AttributeSchema, alt: Alternative, name: str) -> str:
    code = alt[name]
    label = schema[name].label_for(code)
    if label is None:
        raise UnknownLevel(f"no display label for {name}={code:g}")
    return label


def render_scenario(
    alt: Alternative,
    schema: AttributeSchema,
    currency: Currency = HKD,
    club_short_description: bool = False,
) -> str:
    """Describe one alternative in running text (no trailing period)."""
    price_name = schema.price.name
    price_code = alt[price_name]
    if price_code not in schema.price.codes:
        raise UnknownLevel(f"no display label for {price_name}={price_code:g}")
    price = currency.format(price_code)

    if not HOTEL_ATTRIBUTES.issubset(schema.names):
        parts = [
            f"the {a.name} is {_label(schema, alt, a.name)}" for a in schema.non_price
        ]
        return "; ".join(parts) + f" and the price is {price}"

    lab = lambda name: _label(schema, alt, name)  # noqa: E731
    club = (CLUB_SHORT if club_short_description else CLUB_LONG).format(club=lab("access club"))
    return (
        f"The user books the hotel room on the {lab('floor')} floor with a view on the "
        f"{lab('view')}. {club} The free mini bar includes {lab('free mini bar')} and a "
        f"smartphone is {lab('guest smartphone')}. The booking is {lab('cancellation')} "
        f"and the room costs {price} per night"
    )


def _scenario_pair(a, b, schema, currency, short):
    return (
        f"If Scenario A is chosen, {render_scenario(a, schema, currency, short)}. "
        f"If Scenario B is chosen, {render_scenario(b, schema, currency, short)}."
    )


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([abs(int(k)) for k in key])


def _clear_pair(schema: AttributeSchema, direction: Direction) -> tuple[Alternative, Alternative]:
    """Two alternatives differing on every attribute; B carries all amenities."""
    worst, best = {}, {}
    for a in schema.attributes:
        lo, hi = min(a.codes), max(a.codes)
        if a.is_price:
            continue
        worst[a.name], best[a.name] = (lo, hi) if a.desirable else (hi, lo)
    p = schema.price
    lo, hi = min(p.codes), max(p.codes)
    if direction is Direction.CHEAPER:
        best[p.name], worst[p.name] = lo, hi
    else:
        best[p.name], worst[p.name] = hi, lo
    return Alternative.from_mapping(worst, schema), Alternative.from_mapping(best, schema)


def icl_examples(
    config: IclConfig,
    schema: AttributeSchema,
    seed: int,
    exclude: Collection[Dilemma] = (),
) -> list[tuple[Alternative, Alternative, str]]:
    """Example decisions as ``(alt_a, alt_b, chosen_label)`` triples."""
    price = schema.price.name
    if config.mode is IclMode.ONE_CLEAR:
        a, b = _clear_pair(schema, config.direction)
        return [(a, b, "B")]

    pool = enumerate_alternatives(schema)
    banned = {frozenset((d.alt_a, d.alt_b)) for d in exclude}
    rng = _rng(seed)
    out = []
    for direction in config.directions:
        while True:
            i, j = rng.choice(len(pool), size=2, replace=False)
            a, b = pool[i], pool[j]
            if a[price] == b[price] or frozenset((a, b)) in banned:
                continue
            break
        cheaper = "A" if a[price] < b[price] else "B"
        pricier = "B" if cheaper == "A" else "A"
        out.append((a, b, cheaper if direction is Direction.CHEAPER else pricier))
    return out


def build_icl_block(
    config: IclConfig,
    schema: AttributeSchema,
    seed: int,
    exclude: Collection[Dilemma] = (),
    currency: Currency = HKD,
    club_short_description: bool = False,
) -> str:
    lines = [ICL_HEADER]
    for a, b, chosen in icl_examples(config, schema, seed, exclude):
        lines.append(
            _scenario_pair(a, b, schema, currency, club_short_description)
            + f" The user chose Scenario {chosen}."
        )
    return "\n".join(lines)


def render_prompt(
    dilemma: Dilemma,
    variant: PromptVariant,
    schema: AttributeSchema,
    seed: int,
    order_swapped: bool = False,
) -> RenderedPrompt:
    """Fill the decision template for one dilemma.

    In-context examples are keyed on ``(seed, dilemma.id)`` only, so the normal
    and swapped presentations of a dilemma share the same user information.
    """
    a, b = (dilemma.alt_b, dilemma.alt_a) if order_swapped else (dilemma.alt_a, dilemma.alt_b)
    info = []
    if variant.persona is not None:
        info.append(PERSONA_TEXT[variant.persona])
    if variant.icl is not None:
        info.append(build_icl_block(
            variant.icl, schema, seed=_seed_for(seed, dilemma.id), exclude=[dilemma],
            currency=variant.currency, club_short_description=variant.club_short_description,
        ))
    body = [FRAMING, *info,
            _scenario_pair(a, b, schema, variant.currency, variant.club_short_description),
            INSTRUCTION]
    return RenderedPrompt(dilemma.id, variant, order_swapped, "\n".join(body), a, b)


def _seed_for(seed: int, dilemma_id: int) -> int:
    return int(_rng(seed, dilemma_id, 7919).integers(2**63 - 1))


def render_all(
    dilemmas: Sequence[Dilemma],
    variant: PromptVariant,
    schema: AttributeSchema,
    seed: int,
    order_swapped: bool = False,
) -> list[RenderedPrompt]:
    return [render_prompt(d, variant, schema, seed, order_swapped) for d in dilemmas]
