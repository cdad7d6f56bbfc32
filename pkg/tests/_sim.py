"""Shared simulation helpers for the test modules."""
from __future__ import annotations

import numpy as np

from choice_forge.agents import SyntheticLogitAgent, query_many
from choice_forge.config import raw_beta
from choice_forge.estimation import build_dataset, from_arrays
from choice_forge.prompts import render_all, variant_from_id

# standardized effects, all in [0.3, 3], price negative; every effect is at least
# 0.8 so that 240 x 50 choices pin each WTP ratio to a few percent
THETA_STAR = {"view": 1.0, "floor": 0.8, "access club": 1.5, "free mini bar": 0.9,
              "guest smartphone": 1.2, "cancellation": 1.0, "price per night": -2.0}


def records(agent, dilemmas, schema, replications=1, swapped=False, variant="baseline"):
    prompts = render_all(dilemmas, variant_from_id(variant), schema, 0, swapped)
    return query_many(agent, prompts, replications)


def simulate(agent, dilemmas, schema, replications=1, swapped=False, standardize=True):
    recs = records(agent, dilemmas, schema, replications, swapped)
    return build_dataset(recs, dilemmas, schema, standardize)


def logit_agent(schema, scale=1.0, order_constant=0.0, seed=1):
    beta = {k: v * scale for k, v in raw_beta(THETA_STAR, schema).items()}
    return SyntheticLogitAgent(beta, order_constant, seed)


def random_dataset(rng, n=40, k=3, standardize=True):
    """Continuous features and coin-flip-ish choices for generic estimator checks."""
    a = rng.normal(size=(n, k)) * rng.uniform(0.5, 3, size=k) + rng.normal(size=k)
    b = rng.normal(size=(n, k)) * rng.uniform(0.5, 3, size=k) + rng.normal(size=k)
    y = rng.random(n) < 0.5
    return from_arrays(a, b, y, [f"f{i}" for i in range(k)], k - 1, standardize)


def analytic_hessian(theta, data):
    """Exact Hessian of the binary logit log-likelihood, independent of the package."""
    z = np.column_stack([np.ones(data.n_obs), data.x_b - data.x_a])
    p = 1 / (1 + np.exp(-(z @ theta)))
    return -(z * (p * (1 - p))[:, None]).T @ z
