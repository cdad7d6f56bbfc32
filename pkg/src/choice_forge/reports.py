"""Markdown renderers. They only format numbers already stored in JSON artifacts."""
from __future__ import annotations

from typing import Any, Mapping

from .estimation import stars
from .wtp import BenchmarkTable


def fmt(x: float | None, nd: int = 2) -> str:
    if x is None:
        return "-"
    return f"{x:.{nd}f}"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def _coef_label(name: str) -> str:
    return "constant (alternative B)" if name == "asc" else name


def render_summary(cells, fits: Mapping[str, dict], wtps: Mapping[str, dict],
                   r2_avg: list[dict], benchmark: BenchmarkTable) -> str:
    lines = ["# Fit summary", "",
             "Coefficients are on the standardized scale; ** p < 0.01, * p < 0.05. "
             "WTP in HK$.", ""]
    avg = {(r["agent"], r["variant"], r["currency"]): r["average"] for r in r2_avg}
    groups: dict[tuple[str, str], list[dict]] = {}
    for c in cells:
        groups.setdefault((c["variant"], c["currency"]), []).append(c)

    for (variant, currency), group in groups.items():
        lines += [f"## {variant} ({currency})", ""]
        header = ["", *[f"{c['agent']} / {c['order']}" for c in group]]
        names: list[str] = []
        for c in group:
            for n in fits.get(c["key"], {}).get("names", []):
                if n not in names:
                    names.append(n)
        rows = [["status", *[c.get("flag") or c["status"] for c in group]]]
        for n in names:
            row = [_coef_label(n)]
            for c in group:
                fit = fits.get(c["key"])
                if fit is None or c["status"] != "fit":
                    row.append("-")
                    continue
                p = (fit["p_values"] or {}).get(n)
                row.append(fmt(fit["coefficients"][n]) + stars(p))
            rows.append(row)
        rows.append(["pseudo-R²", *[
            fmt(fits[c["key"]]["pseudo_r2"]) if c["key"] in fits and c["status"] == "fit" else "-"
            for c in group]])
        rows.append(["pseudo-R² (avg 2 runs)", *[
            fmt(avg.get((c["agent"], variant, currency))) for c in group]])
        lines += _table(header, rows) + [""]

        segs = {wtps[c["key"]]["segment"] for c in group if c["key"] in wtps}
        seg = sorted(segs)[0] if segs else "overall"
        human = benchmark.segment(seg)
        attrs = list(human)
        wheader = ["WTP (HK$)", *[f"{c['agent']} / {c['order']}" for c in group], f"human ({seg})"]
        wrows = []
        for a in attrs:
            row = [a]
            for c in group:
                w = wtps.get(c["key"], {}).get("wtp_hkd")
                row.append(fmt(w[a]) if w and a in w else (c.get("flag") or "-"))
            row.append(fmt(human[a]))
            wrows.append(row)
        mrow = ["mean abs. deviation"]
        drow = ["median abs. deviation"]
        for c in group:
            d = (wtps.get(c["key"]) or {}).get("deviations")
            mrow.append(fmt(d["mean"]) if d else "-")
            drow.append(fmt(d["median"]) if d else "-")
        wrows += [mrow + [""], drow + [""]]
        lines += _table(wheader, wrows) + [""]
    return "\n".join(lines)


def render_robustness(doc: Mapping[str, Any]) -> str:
    lines = ["# Robustness: order swap and currency", ""]
    for row in doc["rows"]:
        lines += [f"## {row['agent']} / {row['variant']}", ""]
        runs = row["runs"]
        cols = list(runs)
        avg_cols = list(row["order_averaged_wtp_hkd"])
        header = ["WTP (HK$)", *cols, *[f"order-avg {c}" for c in avg_cols]]
        attrs: list[str] = []
        for r in runs.values():
            for k in r["names"][1:]:
                if k not in attrs and k != r["price_name"]:
                    attrs.append(k)
        body = []
        for a in attrs:
            body.append([a, *[fmt((runs[c]["wtp_hkd"] or {}).get(a)) for c in cols],
                         *[fmt(row["order_averaged_wtp_hkd"][c][a]) for c in avg_cols]])
        body.append(["constant (alternative B)",
                     *[fmt(runs[c]["asc"]) + stars(runs[c]["asc_p"]) for c in cols],
                     *[""] * len(avg_cols)])
        body.append(["ASC significant at 5%",
                     *["-" if runs[c]["asc_significant_5pct"] is None
                       else ("yes" if runs[c]["asc_significant_5pct"] else "no") for c in cols],
                     *[""] * len(avg_cols)])
        lines += _table(header, body) + [""]
        for cur, eq in row["swap_equivariance"].items():
            lines.append(f"- {cur}: ASC(normal) + ASC(swapped) = {eq['asc_sum']:.2e}, "
                         f"max |Δβ| = {eq['max_abs_beta_diff']:.2e}")
        lines.append("")
    return "\n".join(lines)


def render_report(doc: Mapping[str, Any]) -> str:
    lines = ["# Deviation from human WTP", "",
             "Absolute deviation in HK$, averaged over the six non-price attributes.", ""]
    header = ["agent", "variant", "order", "currency", "segment",
              "mean", "median", "mean (CPI adj.)", "median (CPI adj.)"]
    body = []
    for r in doc["deviations"]:
        if r.get("mean_unadjusted") is None:
            body.append([r["agent"], r["variant"], r["order"], r["currency"], r["segment"],
                         r.get("flag") or "-", "", "", ""])
            continue
        body.append([r["agent"], r["variant"], r["order"], r["currency"], r["segment"],
                     fmt(r["mean_unadjusted"]), fmt(r["median_unadjusted"]),
                     fmt(r["mean_adjusted"]), fmt(r["median_adjusted"])])
    lines += _table(header, body) + [""]

    if doc["icl_median_abs_deviation"]:
        lines += ["## Median absolute deviation per attribute over the ICL variants", ""]
        attrs = list(doc["icl_median_abs_deviation"][0]["median_abs_deviation"])
        body = [[r["agent"], r["order"], r["currency"],
                 *[fmt(r["median_abs_deviation"].get(a)) for a in attrs]]
                for r in doc["icl_median_abs_deviation"]]
        lines += _table(["agent", "order", "currency", *attrs], body) + [""]

    if doc["relative_to_baseline"]:
        lines += ["## WTP relative to the baseline prompt", ""]
        attrs = list(doc["relative_to_baseline"][0]["ratio_to_baseline"])
        body = [[r["agent"], r["variant"], r["order"], r["currency"],
                 *[fmt(r["ratio_to_baseline"].get(a)) for a in attrs]]
                for r in doc["relative_to_baseline"]]
        lines += _table(["agent", "variant", "order", "currency", *attrs], body) + [""]
    return "\n".join(lines)
