"""Experiment configuration: a versioned JSON document, unknown keys rejected."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import agents as ag
from .design import AttributeSchema, default_schema, enumerate_alternatives
from .prompts import USD_RATE, VARIANT_IDS, Currency
from .wtp import HOTEL_BENCHMARK, SEGMENTS, BenchmarkTable

SPEC_VERSION = 1
# execution settings that cannot change any artifact's content
_RUNTIME_FIELDS = ("output_dir", "workers", "max_in_flight")
ORDER_MODES = {"normal": ("normal",), "swapped": ("swapped",), "both": ("normal", "swapped")}
AGENT_KINDS = ("remote", "synthetic_logit", "synthetic_deterministic",
               "always_first", "always_cheapest")


class ConfigError(ValueError):
    pass


_AGENT_KEYS = {
    "remote": {"endpoint", "model", "auth_env", "timeout", "max_retries", "parse_retries",
               "backoff", "min_interval"},
    "synthetic_logit": {"beta", "beta_scale", "order_constant", "noise_seed"},
    "synthetic_deterministic": {"beta", "beta_scale", "order_constant"},
    "always_first": set(),
    "always_cheapest": set(),
}


@dataclass(frozen=True)
class AgentConfig:
    id: str
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AgentConfig":
        doc = dict(doc)
        try:
            agent_id, kind = str(doc.pop("id")), str(doc.pop("kind"))
        except KeyError as exc:
            raise ConfigError(f"agent entries need 'id' and 'kind' ({exc} missing)") from None
        if kind not in AGENT_KINDS:
            raise ConfigError(f"agent {agent_id!r}: unknown kind {kind!r}")
        unknown = set(doc) - _AGENT_KEYS[kind]
        if unknown:
            raise ConfigError(f"agent {agent_id!r}: unknown fields {sorted(unknown)}")
        if kind == "remote" and not {"endpoint", "model", "auth_env"} <= set(doc):
            raise ConfigError(f"agent {agent_id!r}: remote agents need endpoint, model, auth_env")
        if kind.startswith("synthetic") and "beta" not in doc:
            raise ConfigError(f"agent {agent_id!r}: synthetic agents need beta")
        if doc.get("beta_scale", "raw") not in ("raw", "standardized"):
            raise ConfigError(f"agent {agent_id!r}: beta_scale must be raw or standardized")
        return cls(agent_id, kind, doc)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind, **self.params}

    def build(self, schema: AttributeSchema) -> ag.AgentSpec:
        p = dict(self.params)
        if self.kind == "remote":
            return ag.RemoteAgent(id=self.id, **p)
        if self.kind == "always_first":
            return ag.AlwaysFirstAgent(id=self.id)
        if self.kind == "always_cheapest":
            return ag.AlwaysCheapestAgent(price_attribute=schema.price.name, id=self.id)
        beta = {k: float(v) for k, v in p.pop("beta").items()}
        if p.pop("beta_scale", "raw") == "standardized":
            beta = raw_beta(beta, schema)
        if self.kind == "synthetic_logit":
            spec = ag.SyntheticLogitAgent(beta, float(p.get("order_constant", 0.0)),
                                          int(p.get("noise_seed", 0)), id=self.id)
        else:
            spec = ag.SyntheticDeterministicAgent(beta, float(p.get("order_constant", 0.0)),
                                                  id=self.id)
        ag.check_beta(spec, schema)
        return spec


def design_sd(schema: AttributeSchema) -> dict[str, float]:
    """Sample sd of each attribute over the full factorial (equal to the stacked
    dilemma columns, since every alternative appears once)."""
    alts = enumerate_alternatives(schema)
    return {a.name: float(np.std([x[a.name] for x in alts], ddof=1)) for a in schema.attributes}


def raw_beta(standardized: Mapping[str, float], schema: AttributeSchema) -> dict[str, float]:
    sd = design_sd(schema)
    return {k: v / sd[k] for k, v in standardized.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    variants: tuple[str, ...]
    agents: tuple[AgentConfig, ...]
    spec_version: int = SPEC_VERSION
    schema: str | None = None
    design_seed: int = 0
    prompt_seed: int | None = None
    currencies: tuple[str, ...] = ("HKD",)
    usd_rate: float = USD_RATE
    orders: str = "both"
    replications: int = 1
    output_dir: str = "out"
    club_short_description: bool = False
    benchmark_segment: str = "overall"
    benchmark_file: str | None = None
    max_in_flight: int = 4
    workers: int = 1
    max_iter: int = 500
    grad_tol: float = 1e-6
    failure_threshold: float = 0.10
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        if self.spec_version != SPEC_VERSION:
            raise ConfigError(f"unsupported spec_version {self.spec_version}")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        bad = [v for v in self.variants if v not in VARIANT_IDS]
        if bad:
            raise ConfigError(f"unknown variant ids {bad}; expected {', '.join(VARIANT_IDS)}")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"agent ids must be unique: {ids}")
        if self.orders not in ORDER_MODES:
            raise ConfigError(f"orders must be one of {sorted(ORDER_MODES)}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.currencies or set(self.currencies) - {"HKD", "USD"}:
            raise ConfigError("currencies must be a non-empty subset of HKD, USD")
        if self.usd_rate <= 0:
            raise ConfigError("usd_rate must be positive")
        if self.benchmark_segment not in (*SEGMENTS, "auto"):
            raise ConfigError(f"benchmark_segment must be one of {SEGMENTS} or 'auto'")
        if self.workers < 1 or self.max_in_flight < 1:
            raise ConfigError("workers and max_in_flight must be >= 1")

    @property
    def order_list(self) -> tuple[str, ...]:
        return ORDER_MODES[self.orders]

    @property
    def seed_for_prompts(self) -> int:
        return self.design_seed if self.prompt_seed is None else self.prompt_seed

    def currency(self, code: str) -> Currency:
        return Currency.usd(self.usd_rate) if code == "USD" else Currency()

    def _resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def load_schema(self) -> AttributeSchema:
        return default_schema() if self.schema is None else AttributeSchema.from_json(self._resolve(self.schema))

    def load_benchmark(self) -> BenchmarkTable:
        if self.benchmark_file is None:
            return HOTEL_BENCHMARK
        return BenchmarkTable.from_json(self._resolve(self.benchmark_file))

    def segment_for(self, variant_id: str) -> str:
        if self.benchmark_segment != "auto":
            return self.benchmark_segment
        if "business" in variant_id:
            return "business"
        if "student" in variant_id:
            return "leisure"
        return "overall"

    def to_dict(self, include_output: bool = True) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            if f.name == "base_dir" or (f.name == "output_dir" and not include_output):
                continue
            v = getattr(self, f.name)
            if f.name == "agents":
                v = [a.to_dict() for a in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @property
    def digest(self) -> str:
        """Identifies the experiment; independent of where and how fast it runs."""
        doc = {k: v for k, v in self.to_dict().items() if k not in _RUNTIME_FIELDS}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: str | Path = ".") -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "spec_version" not in doc:
            raise ConfigError("config must declare spec_version")
        try:
            doc["agents"] = tuple(AgentConfig.from_dict(a) for a in doc.get("agents", ()))
            doc["variants"] = tuple(doc.get("variants", ()))
            if "currencies" in doc:
                doc["currencies"] = tuple(doc["currencies"])
            return cls(base_dir=str(base_dir), **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def with_overrides(self, seed: int | None = None, out: str | None = None,
                       variants=None, agents=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, design_seed=seed)
        if out is not None:
            cfg = replace(cfg, output_dir=str(out))
        if variants:
            cfg = replace(cfg, variants=tuple(variants))
        if agents:
            missing = set(agents) - {a.id for a in cfg.agents}
            if missing:
                raise ConfigError(f"unknown agent ids {sorted(missing)}")
            cfg = replace(cfg, agents=tuple(a for a in cfg.agents if a.id in agents))
        return cfg

    @property
    def out_dir(self) -> Path:
        return self._resolve(self.output_dir)


def default_config(**overrides) -> ExperimentConfig:
    """All twelve prompt variants, both orders, one seeded synthetic logit agent."""
    base = dict(
        variants=VARIANT_IDS,
        agents=(AgentConfig("synthetic-logit", "synthetic_logit", {
            "beta": {"view": 0.5, "floor": 0.3, "access club": 1.5, "free mini bar": 0.4,
                     "guest smartphone": 0.8, "cancellation": 1.0, "price per night": -2.0},
            "beta_scale": "standardized", "order_constant": 0.0, "noise_seed": 1}),),
    )
    base.update(overrides)
    return ExperimentConfig(**base)
