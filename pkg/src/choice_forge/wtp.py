"""Willingness to pay, inflation adjustment and deviation from human benchmarks."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .estimation import ChoiceDataset, MnlFit

SEGMENTS = ("overall", "business", "leisure")
ATTRIBUTES = ("view", "floor", "access club", "free mini bar", "guest smartphone", "cancellation")


class PricePositive(ValueError):
    pass


class Unfit(ValueError):
    pass


class NonPositiveCpi(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkTable:
    """Human WTP (HKD) by traveller segment, plus the CPI pair for adjustment."""

    segments: Mapping[str, Mapping[str, float]]
    cpi_from: float = 92.8
    cpi_to: float = 109.4

    def __post_init__(self):
        names = None
        for seg, values in self.segments.items():
            if names is None:
                names = set(values)
            elif set(values) != names:
                raise ValueError(f"segment {seg!r} covers different attributes")

    def segment(self, name: str, adjust: bool = False) -> dict[str, float]:
        try:
            values = self.segments[name]
        except KeyError:
            raise KeyError(f"unknown benchmark segment {name!r}") from None
        if adjust:
            return {k: adjust_inflation(v, self.cpi_from, self.cpi_to) for k, v in values.items()}
        return dict(values)

    def to_dict(self) -> dict[str, Any]:
        return {"segments": {k: dict(v) for k, v in self.segments.items()},
                "cpi": {"from": self.cpi_from, "to": self.cpi_to}}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "BenchmarkTable":
        cpi = doc.get("cpi", {})
        return cls({k: {a: float(v) for a, v in seg.items()} for k, seg in doc["segments"].items()},
                   float(cpi.get("from", 92.8)), float(cpi.get("to", 109.4)))

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchmarkTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


HOTEL_BENCHMARK = BenchmarkTable({
    "overall": dict(zip(ATTRIBUTES, (771, 22, 437, 226, 164, 122))),
    "business": dict(zip(ATTRIBUTES, (906, 26, 513, 266, 192, 144))),
    "leisure": dict(zip(ATTRIBUTES, (726, 20, 411, 213, 154, 115))),
})


def adjust_inflation(wtp_hkd: float, cpi_from: float, cpi_to: float) -> float:
    if cpi_from <= 0:
        raise NonPositiveCpi(f"cpi_from must be positive, got {cpi_from}")
    return wtp_hkd * cpi_to / cpi_from


@dataclass(frozen=True)
class Deviations:
    segment: str
    adjusted: bool
    per_attribute: dict[str, float]
    mean: float
    median: float

    def to_dict(self) -> dict[str, Any]:
        return {"segment": self.segment, "adjusted": self.adjusted,
                "per_attribute": self.per_attribute, "mean": self.mean, "median": self.median}


@dataclass(frozen=True)
class WtpReport:
    wtp_hkd: dict[str, float] | None
    positive_price_coefficient: bool = False
    separation: dict | None = None
    not_converged: bool = False
    deviations: Deviations | None = None

    @property
    def disqualified(self) -> bool:
        return self.positive_price_coefficient or self.separation is not None or self.not_converged

    @property
    def flag(self) -> str | None:
        if self.separation is not None:
            feature = self.separation["feature"]
            return f"perfect separation: {'price' if feature.startswith('price') else feature}"
        if self.positive_price_coefficient:
            return "positive price coefficient"
        if self.not_converged:
            return "not converged"
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "wtp_hkd": self.wtp_hkd,
            "flags": {
                "positive_price_coefficient": self.positive_price_coefficient,
                "separation": self.separation,
                "not_converged": self.not_converged,
            },
            "deviations": None if self.deviations is None else self.deviations.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "WtpReport":
        flags = doc.get("flags", {})
        dev = doc.get("deviations")
        return cls(
            doc.get("wtp_hkd"),
            bool(flags.get("positive_price_coefficient")),
            flags.get("separation"),
            bool(flags.get("not_converged")),
            None if dev is None else Deviations(dev["segment"], dev["adjusted"],
                                                dev["per_attribute"], dev["mean"], dev["median"]),
        )


def wtp_from_coefficients(
    beta: Mapping[str, float],
    sd: Mapping[str, float],
    price: str = "price per night",
) -> dict[str, float]:
    """``-(beta_k * sd_price) / (beta_price * sd_k)`` for every non-price attribute.

    With unit ``sd`` this is the plain marginal rate of substitution of a
    raw-scale fit.
    """
    bp = beta[price]
    return {k: -(b * sd[price]) / (bp * sd[k]) for k, b in beta.items() if k != price}


def compute_wtp(
    fit: MnlFit,
    data: ChoiceDataset | None = None,
    strict: bool = False,
) -> WtpReport:
    """Monetary WTP per non-price attribute from a fitted model.

    The standard deviations come from ``data`` when given, else from the
    fit's recorded standardization. Disqualified fits (separation, no
    convergence, price coefficient >= 0) yield a flagged report without
    numbers, or raise when ``strict`` is set.
    """
    if fit.separation is not None or not fit.converged:
        if strict:
            raise Unfit("fit is separated or did not converge")
        return WtpReport(None, separation=fit.separation,
                         not_converged=not fit.converged and fit.separation is None)
    beta = fit.beta
    price = fit.price_name
    if not beta[price] < 0:
        if strict:
            raise PricePositive(f"price coefficient {beta[price]:.4g} is not negative")
        return WtpReport(None, positive_price_coefficient=True)
    if not fit.standardized:
        sd = {k: 1.0 for k in beta}
    elif data is not None:
        sd = dict(zip(data.feature_names, map(float, data.sd)))
    else:
        sd = dict(zip(fit.names[1:], map(float, fit.feature_sd)))
    return WtpReport(wtp_from_coefficients(beta, sd, price))


def _deviations(model: Mapping[str, float], human: Mapping[str, float], segment, adjusted):
    per = {k: abs(model[k] - human[k]) for k in human}
    vals = list(per.values())
    return Deviations(segment, adjusted, per, sum(vals) / len(vals), statistics.median(vals))


def deviation_report(
    model_wtp: WtpReport | Mapping[str, float],
    segment: str = "overall",
    adjust: bool = False,
    benchmark: BenchmarkTable = HOTEL_BENCHMARK,
) -> Deviations:
    """Absolute WTP gaps to a human segment, with their mean and median."""
    if isinstance(model_wtp, WtpReport):
        if model_wtp.disqualified or model_wtp.wtp_hkd is None:
            raise Unfit(f"report is flagged ({model_wtp.flag}); no deviations")
        model_wtp = model_wtp.wtp_hkd
    return _deviations(model_wtp, benchmark.segment(segment, adjust), segment, adjust)


def with_deviations(report: WtpReport, segment: str, adjust: bool = False,
                    benchmark: BenchmarkTable = HOTEL_BENCHMARK) -> WtpReport:
    if report.disqualified:
        return report
    return WtpReport(report.wtp_hkd, report.positive_price_coefficient, report.separation,
                     report.not_converged, deviation_report(report, segment, adjust, benchmark))


def wtp_csv(columns: Mapping[str, WtpReport], benchmark: Mapping[str, float] | None = None,
            benchmark_label: str = "human") -> str:
    """One row per attribute, one column per model run (flagged runs left blank)."""
    attrs: list[str] = []
    for rep in columns.values():
        for k in rep.wtp_hkd or {}:
            if k not in attrs:
                attrs.append(k)
    if benchmark:
        attrs += [k for k in benchmark if k not in attrs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["attribute", *columns, *([benchmark_label] if benchmark else [])])
    cell = lambda values, a: repr(values[a]) if values and a in values else ""  # noqa: E731
    for a in attrs:
        row = [a, *[cell(rep.wtp_hkd, a) for rep in columns.values()]]
        if benchmark:
            row.append(cell(benchmark, a))
        w.writerow(row)
    return buf.getvalue()
