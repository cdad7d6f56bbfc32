"""Binary-alternative multinomial logit by maximum likelihood.

Utilities are ``U_A = beta . x_A`` and ``U_B = asc + beta . x_B`` on
standardized features, so ``P(B) = sigmoid(asc + beta . (x_B - x_A))``.
Parameter vectors are laid out as ``[asc, beta_1, ..., beta_K]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .agents import A, B, INVALID, ChoiceRecord
from .bfgs import minimize_bfgs
from .design import AttributeSchema, Dilemma

ASC = "asc"


class EmptyDataset(ValueError):
    pass


class ConstantFeature(ValueError):
    def __init__(self, name: str):
        super().__init__(f"feature {name!r} has zero variance")
        self.name = name


class SeparationDetected(RuntimeError):
    def __init__(self, separation: dict, fit: "MnlFit | None" = None):
        super().__init__(f"perfect separation: {separation['feature']} ({separation['direction']})")
        self.separation = separation
        self.fit = fit


class NotConverged(RuntimeWarning):
    pass


class SingularHessian(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ChoiceDataset:
    raw_a: np.ndarray
    raw_b: np.ndarray
    chose_b: np.ndarray
    feature_names: tuple[str, ...]
    price_index: int
    mean: np.ndarray
    sd: np.ndarray
    standardized: bool = True
    n_excluded: int = 0
    dilemma_ids: tuple[int, ...] = ()

    @property
    def n_obs(self) -> int:
        return int(self.chose_b.size)

    @property
    def x_a(self) -> np.ndarray:
        return (self.raw_a - self.mean) / self.sd if self.standardized else self.raw_a

    @property
    def x_b(self) -> np.ndarray:
        return (self.raw_b - self.mean) / self.sd if self.standardized else self.raw_b

    @property
    def param_names(self) -> list[str]:
        return [ASC, *self.feature_names]

    @property
    def price_name(self) -> str:
        return self.feature_names[self.price_index]

    def swapped(self) -> "ChoiceDataset":
        """Exchange the A/B slots of every row and relabel the choices."""
        return from_arrays(self.raw_b, self.raw_a, ~self.chose_b, self.feature_names,
                           self.price_index, self.standardized, self.n_excluded, self.dilemma_ids)


def from_arrays(
    raw_a,
    raw_b,
    chose_b,
    feature_names: Sequence[str],
    price_index: int,
    standardize: bool = True,
    n_excluded: int = 0,
    dilemma_ids: Sequence[int] = (),
) -> ChoiceDataset:
    raw_a = np.atleast_2d(np.asarray(raw_a, dtype=float))
    raw_b = np.atleast_2d(np.asarray(raw_b, dtype=float))
    chose_b = np.asarray(chose_b, dtype=bool).ravel()
    if chose_b.size == 0:
        raise EmptyDataset("no usable choices")
    if raw_a.shape != raw_b.shape or raw_a.shape != (chose_b.size, len(feature_names)):
        raise ValueError("inconsistent dataset shapes")
    stacked = np.vstack([raw_a, raw_b])
    mean = stacked.mean(axis=0)
    sd = stacked.std(axis=0, ddof=1)
    for name, s, col in zip(feature_names, sd, stacked.T):
        if not s > 0 or np.all(col == col[0]):
            raise ConstantFeature(name)
    return ChoiceDataset(raw_a, raw_b, chose_b, tuple(feature_names), price_index, mean, sd,
                         standardize, n_excluded, tuple(dilemma_ids))


def build_dataset(
    records: Sequence[ChoiceRecord],
    dilemmas: Sequence[Dilemma],
    schema: AttributeSchema,
    standardize: bool = True,
) -> ChoiceDataset:
    """Join records to dilemma codes in the order the agent saw them."""
    by_id = {d.id: d for d in dilemmas}
    names = schema.names
    rows_a, rows_b, chose, ids = [], [], [], []
    excluded = 0
    for r in records:
        if r.choice == INVALID:
            excluded += 1
            continue
        if r.choice not in (A, B):
            raise ValueError(f"unexpected choice label {r.choice!r}")
        d = by_id[r.dilemma_id]
        a, b = (d.alt_b, d.alt_a) if r.order_swapped else (d.alt_a, d.alt_b)
        rows_a.append(a.vector(names))
        rows_b.append(b.vector(names))
        chose.append(r.choice == B)
        ids.append(r.dilemma_id)
    if not chose:
        raise EmptyDataset(f"no usable choices ({excluded} invalid records excluded)")
    return from_arrays(np.array(rows_a), np.array(rows_b), np.array(chose), names,
                       schema.price_index, standardize, excluded, ids)


def _design(data: ChoiceDataset) -> np.ndarray:
    diff = data.x_b - data.x_a
    return np.hstack([np.ones((diff.shape[0], 1)), diff])


def _loglik(theta: np.ndarray, z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    d = z @ theta
    s = np.where(y, 1.0, -1.0)
    ll = -float(np.sum(np.logaddexp(0.0, -s * d)))
    p_b = np.exp(-np.logaddexp(0.0, -d))
    grad = z.T @ (y - p_b)
    return ll, grad


def log_likelihood_and_gradient(theta, data: ChoiceDataset) -> tuple[float, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(data.feature_names) + 1,):
        raise ValueError(f"theta must have {len(data.feature_names) + 1} entries")
    return _loglik(theta, _design(data), data.chose_b)


def choice_probabilities(theta, data: ChoiceDataset) -> np.ndarray:
    """``(N, 2)`` array of ``[P(A), P(B)]`` per row."""
    d = _design(data) @ np.asarray(theta, dtype=float)
    p_b = np.exp(-np.logaddexp(0.0, -d))
    p_a = np.exp(-np.logaddexp(0.0, d))
    return np.column_stack([p_a, p_b])


def fit_null(data: ChoiceDataset) -> dict[str, Any]:
    n = data.n_obs
    n_b = int(data.chose_b.sum())
    n_a = n - n_b
    if n_a == 0 or n_b == 0:
        return {"asc_null": math.inf if n_b else -math.inf, "ll_null": 0.0, "degenerate": True}
    return {
        "asc_null": math.log(n_b / n_a),
        "ll_null": n_b * math.log(n_b / n) + n_a * math.log(n_a / n),
        "degenerate": False,
    }


def _single_feature_separation(data: ChoiceDataset) -> dict | None:
    sign = np.where(data.chose_b, 1.0, -1.0)[:, None]
    # positive entries: the chosen alternative has the larger value
    chosen_minus_other = sign * (data.raw_b - data.raw_a)
    for k, name in enumerate(data.feature_names):
        col = chosen_minus_other[:, k]
        if not np.any(col != 0):
            continue
        if np.all(col <= 0):
            return {"feature": name, "direction": "lower"}
        if np.all(col >= 0):
            return {"feature": name, "direction": "higher"}
    return None


def _saturated(theta, data, tol=1e-6) -> bool:
    p = choice_probabilities(theta, data)
    p_chosen = np.where(data.chose_b, p[:, 1], p[:, 0])
    return bool(np.all(p_chosen > 1 - tol))


def _divergence(theta, names, bound) -> dict | None:
    k = int(np.argmax(np.abs(theta)))
    if abs(theta[k]) > bound:
        return {"feature": names[k], "direction": "divergence"}
    return None


def _probe_divergence(data, theta, bound, max_iter):
    """Keep climbing past the gradient tolerance and see whether a coefficient runs off."""
    z, y = _design(data), data.chose_b
    res = minimize_bfgs(lambda t: tuple(-v for v in _loglik(t, z, y)), theta,
                        max_iter=max_iter, grad_tol=0.0,
                        stop=lambda t: bool(np.max(np.abs(t)) > bound))
    return _divergence(res.x, data.param_names, bound)


def _maximize(data, theta0, bound, max_iter, grad_tol):
    """Plain BFGS run, then a divergence probe when the result looks suspicious.

    The bound is not used as an early stop on the first run: iterates can
    overshoot it transiently on the way to a finite optimum.
    """
    z, y = _design(data), data.chose_b
    res = minimize_bfgs(lambda t: tuple(-v for v in _loglik(t, z, y)), theta0,
                        max_iter=max_iter, grad_tol=grad_tol)
    big = np.max(np.abs(res.x)) > (bound / 5 if data.standardized else bound)
    if not res.converged or big or _saturated(res.x, data):
        return res, _probe_divergence(data, res.x, bound, max_iter)
    return res, None


def detect_separation(
    data: ChoiceDataset, divergence_bound: float = 50.0, max_iter: int = 500
) -> dict | None:
    """First attribute (schema order) whose A/B difference orders every choice,
    else a coefficient the optimizer pushes past ``divergence_bound``."""
    sep = _single_feature_separation(data)
    if sep is not None:
        return sep
    return _maximize(data, np.zeros(len(data.param_names)), divergence_bound, max_iter, 1e-6)[1]


def numerical_hessian(theta, data: ChoiceDataset, step: float = 1e-6) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized."""
    z, y = _design(data), data.chose_b
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        H[:, j] = (_loglik(theta + e, z, y)[1] - _loglik(theta - e, z, y)[1]) / (2 * step)
    return (H + H.T) / 2


def _norm_sf2(z: np.ndarray) -> np.ndarray:
    return np.array([math.erfc(abs(v) / math.sqrt(2)) for v in z])


@dataclass(frozen=True)
class MnlFit:
    names: tuple[str, ...]
    params: np.ndarray
    std_errors: np.ndarray | None
    ll_model: float
    ll_null: float
    asc_null: float
    pseudo_r2: float
    converged: bool
    grad_norm: float
    n_obs: int
    iterations: int = 0
    n_excluded: int = 0
    separation: dict | None = None
    feature_sd: np.ndarray | None = None
    standardized: bool = True
    price_name: str = "price per night"

    @property
    def asc(self) -> float:
        return float(self.params[0])

    @property
    def beta(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names[1:], self.params[1:])}

    @property
    def coefficients(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.params)}

    @property
    def z_values(self) -> np.ndarray | None:
        return None if self.std_errors is None else self.params / self.std_errors

    @property
    def p_values(self) -> np.ndarray | None:
        z = self.z_values
        return None if z is None else _norm_sf2(z)

    def named(self, values) -> dict[str, float] | None:
        return None if values is None else {n: float(v) for n, v in zip(self.names, values)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "names": list(self.names),
            "coefficients": self.coefficients,
            "std_errors": self.named(self.std_errors),
            "z_values": self.named(self.z_values),
            "p_values": self.named(self.p_values),
            "ll_model": self.ll_model,
            "ll_null": self.ll_null,
            "asc_null": self.asc_null,
            "pseudo_r2": self.pseudo_r2,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "n_obs": self.n_obs,
            "excluded_invalid": self.n_excluded,
            "separation": self.separation,
            "feature_sd": None if self.feature_sd is None else dict(
                zip(self.names[1:], map(float, self.feature_sd))),
            "standardized": self.standardized,
            "price_name": self.price_name,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MnlFit":
        names = tuple(doc.get("names") or doc["coefficients"])
        se = doc.get("std_errors")
        sd = doc.get("feature_sd")
        return cls(
            names=names,
            params=np.array([doc["coefficients"][n] for n in names]),
            std_errors=None if se is None else np.array([se[n] for n in names]),
            ll_model=doc["ll_model"],
            ll_null=doc["ll_null"],
            asc_null=doc["asc_null"],
            pseudo_r2=doc["pseudo_r2"],
            converged=doc["converged"],
            grad_norm=doc["grad_norm"],
            n_obs=doc["n_obs"],
            iterations=doc.get("iterations", 0),
            n_excluded=doc.get("excluded_invalid", 0),
            separation=doc.get("separation"),
            feature_sd=None if sd is None else np.array([sd[n] for n in names[1:]]),
            standardized=doc.get("standardized", True),
            price_name=doc.get("price_name", "price per night"),
        )


def stars(p: float | None) -> str:
    if p is None:
        return ""
    return "**" if p < 0.01 else "*" if p < 0.05 else ""


def fit_mnl(
    data: ChoiceDataset,
    max_iter: int = 500,
    grad_tol: float = 1e-6,
    divergence_bound: float = 50.0,
    theta0=None,
    hessian_step: float = 1e-6,
) -> MnlFit:
    """Maximum likelihood fit by BFGS from ``theta0`` (zeros by default).

    Raises ``SeparationDetected`` when an attribute perfectly orders the
    choices or a coefficient diverges past ``divergence_bound``. Emits
    ``NotConverged`` / ``SingularHessian`` warnings; in the latter case the
    inference fields are ``None``.
    """
    if data.n_obs == 0:
        raise EmptyDataset("no usable choices")
    names = data.param_names
    null = fit_null(data)

    def flagged(sep, theta=None, ll=math.nan, res=None):
        theta = np.full(len(names), math.nan) if theta is None else theta
        return MnlFit(tuple(names), theta, None, ll, null["ll_null"], null["asc_null"], math.nan,
                      False, math.nan if res is None else res.grad_norm, data.n_obs,
                      0 if res is None else res.iterations, data.n_excluded, sep, data.sd,
                      data.standardized, data.price_name)

    sep = _single_feature_separation(data)
    if sep is not None:
        raise SeparationDetected(sep, flagged(sep))

    x0 = np.zeros(len(names)) if theta0 is None else np.asarray(theta0, dtype=float)
    res, sep = _maximize(data, x0, divergence_bound, max_iter, grad_tol)
    if sep is not None:
        raise SeparationDetected(sep, flagged(sep, res.x, -res.fun, res))

    theta = res.x
    ll = -res.fun
    if not res.converged:
        warnings.warn(f"BFGS stopped ({res.status}) with max|grad|={res.grad_norm:.3g}",
                      NotConverged, stacklevel=2)

    se = None
    info = -numerical_hessian(theta, data, hessian_step)
    try:
        cov = np.linalg.inv(info)
        diag = np.diag(cov)
        if np.all(np.isfinite(diag)) and np.all(diag > 0):
            se = np.sqrt(diag)
        else:
            raise np.linalg.LinAlgError("observed information is not positive definite")
    except np.linalg.LinAlgError as exc:
        warnings.warn(f"no standard errors: {exc}", SingularHessian, stacklevel=2)

    ll_null = null["ll_null"]
    r2 = 1.0 - ll / ll_null if ll_null < 0 else math.nan
    return MnlFit(tuple(names), theta, se, ll, ll_null, null["asc_null"], r2, res.converged,
                  res.grad_norm, data.n_obs, res.iterations, data.n_excluded, None, data.sd,
                  data.standardized, data.price_name)
