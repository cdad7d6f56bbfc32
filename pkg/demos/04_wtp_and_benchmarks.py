"""Willingness to pay from coefficients, inflation adjustment, deviation reports.

Uses the published rounded coefficients of one model column to show the
rescaling from standardized coefficients to HK$, then compares a WTP column
with the human benchmark. Run: python3 demos/04_wtp_and_benchmarks.py
"""
from __future__ import annotations

from choice_forge import HOTEL_BENCHMARK, adjust_inflation, default_schema, deviation_report
from choice_forge.config import design_sd
from choice_forge.wtp import wtp_from_coefficients

schema = default_schema()
sd = design_sd(schema)
print("design standard deviations:", {k: round(v, 3) for k, v in sd.items()})

# WTP_k = -(beta_k * sd_price) / (beta_price * sd_k)
wtp = wtp_from_coefficients({"view": 0.53, "floor": 0.11, "price per night": -1.17}, sd)
print(f"\nview: HK$ {wtp['view']:.2f} (published 511.32), "
      f"floor: HK$ {wtp['floor']:.2f} per storey (published 8.29)")

print("\nhuman benchmark, 2015 HK$ -> 2025 HK$:")
for k, v in HOTEL_BENCHMARK.segment("overall").items():
    print(f"  {k:18s} {v:7.2f} -> {adjust_inflation(v, 92.8, 109.4):7.2f}")

model = {"view": 511.32, "floor": 8.29, "access club": 1873.66, "free mini bar": 127.37,
         "guest smartphone": 1287.12, "cancellation": 1616.34}
for adjust in (False, True):
    dev = deviation_report(model, "overall", adjust=adjust)
    label = "CPI adjusted" if adjust else "unadjusted"
    print(f"\n{label}: mean |dev| = {dev.mean:.2f}, median |dev| = {dev.median:.2f}")
    for k, v in dev.per_attribute.items():
        print(f"  {k:18s} {v:8.2f}")
