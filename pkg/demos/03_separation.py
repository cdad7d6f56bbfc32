"""Degenerate agents: when a logit model cannot be estimated.

An agent that always takes the cheaper room is perfectly predicted by price,
so the likelihood has no maximum. One that always answers "A" pushes the
order constant to infinity. Both are reported as flags, not numbers.
Run: python3 demos/03_separation.py
"""
from __future__ import annotations

from choice_forge import (AlwaysCheapestAgent, AlwaysFirstAgent, SeparationDetected,
                          SyntheticLogitAgent, build_dataset, compute_wtp, default_schema,
                          detect_separation, fit_mnl, generate_design, query_many, render_prompt,
                          variant_from_id)

schema = default_schema()
dilemmas = generate_design(schema, seed=0)
prompts = [render_prompt(d, variant_from_id("baseline"), schema, seed=0) for d in dilemmas]
coin = SyntheticLogitAgent({k: 0.0 for k in schema.names}, noise_seed=1, id="coin-flip")

for agent in (AlwaysCheapestAgent(), AlwaysFirstAgent(), coin):
    data = build_dataset(query_many(agent, prompts, replications=5), dilemmas, schema)
    print(f"\n{agent.id}: detect_separation -> {detect_separation(data)}")
    try:
        fit = fit_mnl(data)
    except SeparationDetected as exc:
        print(f"  fit aborted: {exc}")
        print(f"  WTP report flag: {compute_wtp(exc.fit, data).flag}")
        continue
    print(f"  pseudo-R2 = {fit.pseudo_r2:.4f}, ASC p-value = {fit.p_values[0]:.2f}")
    print(f"  WTP report flag: {compute_wtp(fit, data).flag}")
