"""Build the hotel choice design and look at the prompts an agent receives.

Run: python3 demos/01_design_and_prompts.py
"""
from __future__ import annotations

from collections import Counter

from choice_forge import (VARIANT_IDS, Currency, default_schema, enumerate_alternatives,
                          pair_dilemmas, render_prompt, variant_from_id)

schema = default_schema()
for attr in schema.attributes:
    levels = ", ".join(f"{lv.code:g} ({lv.label})" for lv in attr.levels)
    print(f"{attr.name:18s} {levels}")

# Every combination of levels is one alternative; a seeded shuffle pairs them up.
alternatives = enumerate_alternatives(schema)
dilemmas = pair_dilemmas(alternatives, seed=0)
uses = Counter(a for d in dilemmas for a in (d.alt_a, d.alt_b))
print(f"\n{len(alternatives)} alternatives -> {len(dilemmas)} dilemmas; "
      f"every alternative used {set(uses.values())} time(s)")

d = dilemmas[0]
print("\n--- baseline prompt ---")
print(render_prompt(d, variant_from_id("baseline"), schema, seed=0).text)

# Variants add a user-information block: in-context examples, a persona, or both.
print("\n--- combo-student-cheap, prices in USD ---")
variant = variant_from_id("combo-student-cheap", currency=Currency.usd(0.13))
print(render_prompt(d, variant, schema, seed=0).text)

# The swapped presentation exchanges the two scenarios but keeps the same examples.
swapped = render_prompt(d, variant, schema, seed=0, order_swapped=True)
print(f"\nswapped order shows {swapped.alt_a['price per night']:g} HKD first "
      f"(normal order: {d.alt_a['price per night']:g} HKD)")
print(f"\nvariant ids: {', '.join(VARIANT_IDS)}")
