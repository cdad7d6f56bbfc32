"""Choice agents: remote chat-completion endpoints and synthetic oracles.

Synthetic agents read level codes straight from the rendered prompt's
alternatives (raw HKD codes, never the displayed currency), which makes them
ground-truth generators for checking the estimator.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx
import numpy as np

from .design import AttributeSchema, Dilemma
from .prompts import RenderedPrompt

log = logging.getLogger(__name__)

CACHE_ENV = "CHOICE_FORGE_CACHE"
A, B, INVALID = "A", "B", "Invalid"


class AuthMissing(RuntimeError):
    pass


class TransportExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class RemoteAgent:
    endpoint: str
    model: str
    auth_env: str
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3
    parse_retries: int = 1
    backoff: float = 1.0
    min_interval: float = 0.0
    id: str = ""

    def __post_init__(self):
        if self.temperature != 0:
            raise ValueError("remote agents are queried at temperature 0 only")
        if not self.id:
            object.__setattr__(self, "id", f"remote:{self.model}")


@dataclass(frozen=True)
class SyntheticLogitAgent:
    """Softmax chooser over ``beta . x`` with an order constant on slot B."""

    beta: Mapping[str, float]
    order_constant: float = 0.0
    noise_seed: int = 0
    id: str = "synthetic-logit"


@dataclass(frozen=True)
class SyntheticDeterministicAgent:
    beta: Mapping[str, float]
    order_constant: float = 0.0
    id: str = "synthetic-argmax"


@dataclass(frozen=True)
class AlwaysFirstAgent:
    id: str = "always-first"


@dataclass(frozen=True)
class AlwaysCheapestAgent:
    """Picks the lower price; ties go to the first-listed scenario."""

    price_attribute: str = "price per night"
    id: str = "always-cheapest"


AgentSpec = (
    RemoteAgent | SyntheticLogitAgent | SyntheticDeterministicAgent
    | AlwaysFirstAgent | AlwaysCheapestAgent
)


def check_beta(agent, schema: AttributeSchema) -> None:
    beta = getattr(agent, "beta", None)
    if beta is None:
        return
    missing = set(schema.names) - set(beta)
    extra = set(beta) - set(schema.names)
    if missing or extra:
        raise ValueError(f"beta must name every schema attribute (missing={sorted(missing)}, "
                         f"unknown={sorted(extra)})")


@dataclass(frozen=True)
class ChoiceRecord:
    dilemma_id: int
    variant_id: str
    agent_id: str
    order_swapped: bool
    choice: str
    raw_response: str
    prompt_hash: str
    replication: int = 0
    error: str | None = None
    timestamp: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ChoiceRecord":
        return cls(**doc)


def write_records(path: str | Path, records: Iterable[ChoiceRecord]) -> None:
    atomic_write(path, "".join(r.to_json() + "\n" for r in records))


def read_records(path: str | Path) -> list[ChoiceRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ChoiceRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_STRIP = " \t\r\n.,;:!?\"'`*()[]"
_CHOICE_RE = re.compile(r"^(?:scenario\s+)?([ab])$", re.IGNORECASE)


def parse_choice(raw: str) -> str:
    m = _CHOICE_RE.match(raw.strip(_STRIP))
    return m.group(1).upper() if m else INVALID


def choice_probability_b(u_a: float, u_b: float) -> float:
    """P(B) of the two-alternative softmax, overflow safe."""
    d = u_b - u_a
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def _utility(beta: Mapping[str, float], alt) -> float:
    return float(sum(beta[k] * v for k, v in alt.items))


def synthetic_logit_choice(
    dilemma: Dilemma,
    beta: Mapping[str, float],
    order_constant: float = 0.0,
    seed: int = 0,
    replication: int = 0,
) -> str:
    """Draw A/B from the logit model by the Gumbel-max construction.

    One Gumbel error per alternative, keyed by ``(seed, dilemma.id,
    replication)`` and attached to the alternative itself rather than the
    slot, so a swapped presentation reuses the same errors.
    """
    e1, e2 = np.random.default_rng([seed, dilemma.id, replication]).gumbel(size=2)
    first, second = sorted([dilemma.alt_a, dilemma.alt_b], key=lambda alt: alt.items)
    err = {first: e1, second: e2}
    u_a = _utility(beta, dilemma.alt_a) + err[dilemma.alt_a]
    u_b = order_constant + _utility(beta, dilemma.alt_b) + err[dilemma.alt_b]
    return B if u_b > u_a else A


def _presented(prompt: RenderedPrompt) -> Dilemma:
    if prompt.alt_a is None or prompt.alt_b is None:
        raise ValueError("synthetic agents need prompts carrying their alternatives")
    return Dilemma(prompt.dilemma_id, prompt.alt_a, prompt.alt_b)


class ResponseCache:
    """File-backed map ``(prompt_hash, agent_id) -> raw response``."""

    def __init__(self, root: str | Path | None = None):
        root = root or os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "choice_forge"
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, prompt_hash: str, agent_id: str) -> Path:
        key = hashlib.sha256(f"{agent_id}\0{prompt_hash}".encode()).hexdigest()
        return self.root / key[:2] / f"{key}.json"

    def get(self, prompt_hash: str, agent_id: str) -> dict | None:
        p = self._path(prompt_hash, agent_id)
        with self._lock:
            if not p.exists():
                return None
            return json.loads(p.read_text(encoding="utf-8"))

    def put(self, prompt_hash: str, agent_id: str, entry: dict) -> None:
        p = self._path(prompt_hash, agent_id)
        with self._lock:
            atomic_write(p, json.dumps(entry, sort_keys=True))


class RateLimiter:
    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = max(0.0, self._next - now)
            self._next = max(now, self._next) + self.min_interval
        if delay:
            time.sleep(delay)


_limiters: dict[str, RateLimiter] = {}
_limiters_lock = threading.Lock()


def _limiter(agent: RemoteAgent) -> RateLimiter:
    with _limiters_lock:
        if agent.endpoint not in _limiters:
            _limiters[agent.endpoint] = RateLimiter(agent.min_interval)
        return _limiters[agent.endpoint]


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def chat_completion(
    agent: RemoteAgent,
    text: str,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """One user message, temperature 0; retries transport failures with backoff."""
    key = os.environ.get(agent.auth_env)
    if not key:
        raise AuthMissing(f"environment variable {agent.auth_env} is not set")
    payload = {
        "model": agent.model,
        "messages": [{"role": "user", "content": text}],
        "temperature": 0,
    }
    headers = {"Authorization": f"Bearer {key}"}
    own = client is None
    client = client or httpx.Client(timeout=agent.timeout)
    try:
        last = None
        for attempt in range(agent.max_retries + 1):
            if attempt:
                sleep(agent.backoff * 2 ** (attempt - 1))
            _limiter(agent).wait()
            try:
                resp = client.post(agent.endpoint, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = RuntimeError(f"HTTP {resp.status_code}")
                continue
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"] or ""
        raise TransportExhausted(f"{agent.endpoint}: {agent.max_retries} retries exhausted ({last})")
    finally:
        if own:
            client.close()


def _record(prompt, agent_id, raw, replication=0, error=None, timestamp=None):
    return ChoiceRecord(
        dilemma_id=prompt.dilemma_id,
        variant_id=prompt.variant_id,
        agent_id=agent_id,
        order_swapped=prompt.order_swapped,
        choice=parse_choice(raw),
        raw_response=raw,
        prompt_hash=prompt.digest,
        replication=replication,
        error=error,
        timestamp=timestamp,
    )


def query(
    agent: AgentSpec,
    prompt: RenderedPrompt,
    replication: int = 0,
    cache: ResponseCache | None = None,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChoiceRecord:
    """Ask ``agent`` to resolve ``prompt``.

    Remote answers are cached by ``(prompt_hash, agent_id)`` and replayed,
    including the original observation timestamp. Synthetic agents are pure,
    carry no timestamp, and are never cached. Raises ``AuthMissing`` or
    ``TransportExhausted`` for remote failures.
    """
    if isinstance(agent, RemoteAgent):
        cache = cache if cache is not None else ResponseCache()
        hit = cache.get(prompt.digest, agent.id)
        if hit is not None:
            return _record(prompt, agent.id, hit["raw_response"], timestamp=hit["timestamp"])
        raw = chat_completion(agent, prompt.text, client, sleep)
        for _ in range(agent.parse_retries):
            if parse_choice(raw) != INVALID:
                break
            raw = chat_completion(agent, prompt.text, client, sleep)
        ts = _utc_now()
        cache.put(prompt.digest, agent.id, {"raw_response": raw, "timestamp": ts})
        return _record(prompt, agent.id, raw, timestamp=ts)

    if isinstance(agent, AlwaysFirstAgent):
        choice = A
    elif isinstance(agent, AlwaysCheapestAgent):
        d = _presented(prompt)
        choice = B if d.alt_b[agent.price_attribute] < d.alt_a[agent.price_attribute] else A
    elif isinstance(agent, SyntheticDeterministicAgent):
        d = _presented(prompt)
        u_a = _utility(agent.beta, d.alt_a)
        u_b = agent.order_constant + _utility(agent.beta, d.alt_b)
        choice = B if u_b > u_a else A
    elif isinstance(agent, SyntheticLogitAgent):
        choice = synthetic_logit_choice(
            _presented(prompt), agent.beta, agent.order_constant, agent.noise_seed, replication
        )
    else:
        raise TypeError(f"unsupported agent spec {agent!r}")
    return _record(prompt, agent.id, choice, replication)


def query_many(
    agent: AgentSpec,
    prompts: Sequence[RenderedPrompt],
    replications: int = 1,
    cache: ResponseCache | None = None,
    max_in_flight: int = 4,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[ChoiceRecord]:
    """Query every prompt, keeping input order; failures become Invalid records.

    Remote agents answer once per prompt regardless of ``replications``.
    """
    from concurrent.futures import ThreadPoolExecutor

    reps = 1 if isinstance(agent, RemoteAgent) else replications
    jobs = [(p, r) for r in range(reps) for p in prompts]

    def one(job):
        p, r = job
        try:
            return query(agent, p, r, cache=cache, client=client, sleep=sleep)
        except (AuthMissing, TransportExhausted, httpx.HTTPError) as exc:
            log.warning("dilemma %s: %s", p.dilemma_id, exc)
            return _record(p, agent.id, "", r, error=f"{type(exc).__name__}: {exc}")

    if isinstance(agent, RemoteAgent) and max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]
