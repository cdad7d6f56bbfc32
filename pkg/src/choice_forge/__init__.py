"""Discrete-choice experiments for auditing agent preferences.

Generate attribute-based binary dilemmas, collect choices from chat-completion
agents or synthetic oracles, fit a logit model by maximum likelihood and turn
the coefficients into willingness-to-pay estimates.
"""
from .agents import (AlwaysCheapestAgent, AlwaysFirstAgent, ChoiceRecord, RemoteAgent,
                     SyntheticDeterministicAgent, SyntheticLogitAgent, parse_choice, query,
                     query_many, synthetic_logit_choice)
from .design import (Alternative, Attribute, AttributeSchema, Dilemma, Level, default_schema,
                     enumerate_alternatives, generate_design, pair_dilemmas, swap_orders)
from .estimation import (ChoiceDataset, MnlFit, SeparationDetected, build_dataset,
                         detect_separation, fit_mnl, fit_null, log_likelihood_and_gradient)
from .prompts import (VARIANT_IDS, Currency, PromptVariant, build_icl_block, convert_currency,
                      render_prompt, render_scenario, variant_from_id)
from .wtp import (HOTEL_BENCHMARK, BenchmarkTable, WtpReport, adjust_inflation, compute_wtp,
                  deviation_report)

__version__ = "0.1.0"

__all__ = [
    "AlwaysCheapestAgent", "AlwaysFirstAgent", "ChoiceRecord", "RemoteAgent",
    "SyntheticDeterministicAgent", "SyntheticLogitAgent", "parse_choice", "query", "query_many",
    "synthetic_logit_choice",
    "Alternative", "Attribute", "AttributeSchema", "Dilemma", "Level", "default_schema",
    "enumerate_alternatives", "generate_design", "pair_dilemmas", "swap_orders",
    "ChoiceDataset", "MnlFit", "SeparationDetected", "build_dataset", "detect_separation",
    "fit_mnl", "fit_null", "log_likelihood_and_gradient",
    "VARIANT_IDS", "Currency", "PromptVariant", "build_icl_block", "convert_currency",
    "render_prompt", "render_scenario", "variant_from_id",
    "HOTEL_BENCHMARK", "BenchmarkTable", "WtpReport", "adjust_inflation", "compute_wtp",
    "deviation_report",
]
