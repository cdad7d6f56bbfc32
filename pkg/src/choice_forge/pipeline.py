"""End-to-end experiment stages driven by an :class:`ExperimentConfig`.

Every stage reads and updates ``manifest.json`` in the output directory.
Artifacts are JSON with sorted keys and full double precision, written
atomically, so a fixed config with synthetic agents reproduces byte for byte.
"""
from __future__ import annotations

import json
import logging
import math
import statistics
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from . import reports
from .agents import ResponseCache, atomic_write, query_many, read_records, write_records
from .config import ExperimentConfig
from .design import Dilemma, enumerate_alternatives, pair_dilemmas
from .estimation import (EmptyDataset, NotConverged, SeparationDetected, SingularHessian,
                         build_dataset, fit_mnl)
from .prompts import RenderedPrompt, render_prompt, variant_from_id
from .wtp import WtpReport, compute_wtp, deviation_report, with_deviations, wtp_csv

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class MissingCounterpartRun(RuntimeError):
    pass


class ManifestError(RuntimeError):
    pass


def _finite(obj: Any) -> Any:
    """NaN and infinities become null so artifacts stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dump_json(path: Path, obj: Any) -> None:
    atomic_write(path, json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cell_key(agent: str, variant: str, order: str, currency: str) -> str:
    return f"{agent}__{variant}__{order}__{currency}"


def prompt_key(variant: str, order: str, currency: str) -> str:
    return f"{variant}__{order}__{currency}"


def _manifest_path(out: Path) -> Path:
    return out / MANIFEST


def load_manifest(out: Path) -> dict[str, Any]:
    p = _manifest_path(out)
    if not p.exists():
        raise ManifestError(f"{p} not found; run 'generate' first")
    return load_json(p)


def _save_manifest(out: Path, manifest: dict[str, Any]) -> None:
    dump_json(_manifest_path(out), manifest)


def load_dilemmas(out: Path, cfg: ExperimentConfig) -> list[Dilemma]:
    schema = cfg.load_schema()
    return [Dilemma.from_dict(d, schema) for d in load_json(out / "design" / "dilemmas.json")]


# --------------------------------------------------------------------- generate

def cmd_generate(cfg: ExperimentConfig) -> dict[str, Any]:
    out = cfg.out_dir
    schema = cfg.load_schema()
    alts = enumerate_alternatives(schema)
    dilemmas = pair_dilemmas(alts, cfg.design_seed)
    dump_json(out / "design" / "schema.json", schema.to_dict())
    dump_json(out / "design" / "alternatives.json", [a.levels for a in alts])
    dump_json(out / "design" / "dilemmas.json", [d.to_dict() for d in dilemmas])

    prompt_files = {}
    for currency in cfg.currencies:
        for variant_id in cfg.variants:
            variant = variant_from_id(variant_id, cfg.currency(currency), cfg.club_short_description)
            for order in cfg.order_list:
                rel = f"prompts/{prompt_key(variant_id, order, currency)}.jsonl"
                lines = []
                for d in dilemmas:
                    p = render_prompt(d, variant, schema, cfg.seed_for_prompts, order == "swapped")
                    lines.append(json.dumps({
                        "dilemma_id": p.dilemma_id, "variant_id": variant_id,
                        "order_swapped": p.order_swapped, "currency": currency,
                        "prompt_hash": p.digest, "text": p.text,
                    }, sort_keys=True, ensure_ascii=False))
                atomic_write(out / rel, "\n".join(lines) + "\n")
                prompt_files[prompt_key(variant_id, order, currency)] = rel

    manifest = {
        "config_digest": cfg.digest,
        "config": cfg.to_dict(include_output=False),
        "design": {"alternatives": "design/alternatives.json",
                   "dilemmas": "design/dilemmas.json", "schema": "design/schema.json",
                   "n_alternatives": len(alts), "n_dilemmas": len(dilemmas)},
        "prompts": prompt_files,
        "cells": [],
        "pseudo_r2_avg": [],
    }
    _save_manifest(out, manifest)
    return manifest


def _load_prompts(out: Path, rel: str, dilemmas: dict[int, Dilemma], cfg) -> list[RenderedPrompt]:
    prompts = []
    with open(out / rel, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            d = dilemmas[doc["dilemma_id"]]
            a, b = (d.alt_b, d.alt_a) if doc["order_swapped"] else (d.alt_a, d.alt_b)
            variant = variant_from_id(doc["variant_id"], cfg.currency(doc["currency"]),
                                      cfg.club_short_description)
            p = RenderedPrompt(d.id, variant, doc["order_swapped"], doc["text"], a, b)
            if p.digest != doc["prompt_hash"]:
                raise ManifestError(f"{rel}: prompt hash mismatch for dilemma {d.id}")
            prompts.append(p)
    return prompts


# -------------------------------------------------------------------------- run

def _run_cell(cfg, out, manifest, agent_cfg, variant_id, order, currency, dilemmas, cache,
              client=None):
    schema = cfg.load_schema()
    agent = agent_cfg.build(schema)
    key = cell_key(agent_cfg.id, variant_id, order, currency)
    rel_prompts = manifest["prompts"].get(prompt_key(variant_id, order, currency))
    if rel_prompts is None:
        raise ManifestError(f"no prompts for {variant_id}/{order}/{currency}; rerun 'generate'")
    prompts = _load_prompts(out, rel_prompts, dilemmas, cfg)
    records = query_many(agent, prompts, cfg.replications, cache=cache,
                         max_in_flight=cfg.max_in_flight, client=client)
    n_err = sum(r.error is not None for r in records)
    n_invalid = sum(r.choice == "Invalid" for r in records)
    status = "failed" if n_err > cfg.failure_threshold * len(records) else "collected"
    rel_rec = f"records/{key}.jsonl"
    rel_meta = f"records/{key}.meta.json"
    write_records(out / rel_rec, records)
    agent_doc = agent_cfg.to_dict()
    dump_json(out / rel_meta, {
        "agent": agent_doc, "variant_id": variant_id, "order": order, "currency": currency,
        "design_seed": cfg.design_seed, "prompt_seed": cfg.seed_for_prompts,
        "replications": 1 if agent_cfg.kind == "remote" else cfg.replications,
        "counts": {"prompts": len(prompts), "records": len(records), "invalid": n_invalid,
                   "errors": n_err},
        "status": status,
    })
    return {"key": key, "agent": agent_cfg.id, "variant": variant_id, "order": order,
            "currency": currency, "prompts": rel_prompts, "records": rel_rec,
            "meta": rel_meta, "status": status}


def cmd_run(cfg: ExperimentConfig, cache: ResponseCache | None = None,
            client=None) -> dict[str, Any]:
    """Query every (agent, variant, order, currency) cell; ``client`` is an
    optional ``httpx.Client`` shared by remote agents."""
    out = cfg.out_dir
    try:
        manifest = load_manifest(out)
    except ManifestError:
        manifest = cmd_generate(cfg)
    if manifest.get("config_digest") != cfg.digest:
        manifest = cmd_generate(cfg)
    dilemmas = {d.id: d for d in load_dilemmas(out, cfg)}
    cache = cache or ResponseCache()
    grid = [(a, v, o, c) for c in cfg.currencies for a in cfg.agents
            for v in cfg.variants for o in cfg.order_list]

    def job(cell):
        return _run_cell(cfg, out, manifest, *cell, dilemmas, cache, client)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(job, grid))
    else:
        cells = [job(c) for c in grid]
    manifest["cells"] = cells
    manifest["pseudo_r2_avg"] = []
    _save_manifest(out, manifest)
    return manifest


# -------------------------------------------------------------------------- fit

def _fit_cell(cfg, out, cell, dilemmas, schema, benchmark):
    records = read_records(out / cell["records"])
    rel_fit = f"fits/{cell['key']}.json"
    rel_wtp = f"wtp/{cell['key']}.json"
    try:
        data = build_dataset(records, dilemmas, schema)
    except EmptyDataset as exc:
        return {**cell, "status": "failed", "flag": str(exc)}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = fit_mnl(data, cfg.max_iter, cfg.grad_tol)
        notes = [str(w.message) for w in caught
                 if issubclass(w.category, (NotConverged, SingularHessian))]
    except SeparationDetected as exc:
        fit, notes = exc.fit, []
    report = compute_wtp(fit, data)
    segment = cfg.segment_for(cell["variant"])
    report = with_deviations(report, segment, False, benchmark)
    fit_doc = fit.to_dict()
    fit_doc["notes"] = notes
    dump_json(out / rel_fit, fit_doc)
    wtp_doc = report.to_dict()
    wtp_doc["segment"] = segment
    if not report.disqualified:
        wtp_doc["deviations_adjusted"] = deviation_report(report, segment, True, benchmark).to_dict()
    dump_json(out / rel_wtp, wtp_doc)
    status = "flagged" if report.disqualified else "fit"
    return {**cell, "fit": rel_fit, "wtp": rel_wtp, "status": status, "flag": report.flag}


def _pseudo_r2_pairs(cells: list[dict], out: Path) -> list[dict]:
    groups: dict[tuple, dict[str, float]] = {}
    for c in cells:
        if "fit" not in c:
            continue
        r2 = load_json(out / c["fit"])["pseudo_r2"]
        groups.setdefault((c["agent"], c["variant"], c["currency"]), {})[c["order"]] = r2
    rows = []
    for (agent, variant, currency), per_run in groups.items():
        row = {"agent": agent, "variant": variant, "currency": currency, "per_run": per_run,
               "average": None}
        vals = [per_run.get("normal"), per_run.get("swapped")]
        if all(v is not None and math.isfinite(v) for v in vals):
            row["average"] = (vals[0] + vals[1]) / 2
        rows.append(row)
    return rows


def cmd_fit(cfg: ExperimentConfig, manifest: dict[str, Any] | None = None) -> dict[str, Any]:
    out = cfg.out_dir
    manifest = manifest or load_manifest(out)
    if not manifest.get("cells"):
        raise ManifestError("no collected cells; run 'run' first")
    schema = cfg.load_schema()
    dilemmas = load_dilemmas(out, cfg)
    benchmark = cfg.load_benchmark()
    wanted_agents = {a.id for a in cfg.agents}
    cells = []
    for cell in manifest["cells"]:
        if cell["agent"] not in wanted_agents or cell["variant"] not in cfg.variants:
            cells.append(cell)
        elif cell["status"] == "failed" and "fit" not in cell:
            cells.append(cell)
        else:
            cells.append(_fit_cell(cfg, out, cell, dilemmas, schema, benchmark))
    manifest["cells"] = cells
    manifest["pseudo_r2_avg"] = _pseudo_r2_pairs(cells, out)
    _write_fit_outputs(cfg, out, manifest, benchmark)
    _save_manifest(out, manifest)
    return manifest


def _write_fit_outputs(cfg, out, manifest, benchmark):
    fitted = [c for c in manifest["cells"] if "fit" in c]
    fits = {c["key"]: load_json(out / c["fit"]) for c in fitted}
    wtps = {c["key"]: load_json(out / c["wtp"]) for c in fitted}
    segments = sorted({w["segment"] for w in wtps.values()}) or [cfg.benchmark_segment]
    for segment in segments:
        keys = [c["key"] for c in fitted if wtps[c["key"]]["segment"] == segment]
        cols = {k: WtpReport.from_dict(wtps[k]) for k in keys}
        atomic_write(out / "wtp" / f"wtp_table_{segment}.csv",
                     wtp_csv(cols, benchmark.segment(segment), f"human ({segment})"))
    atomic_write(out / "summary.md",
                 reports.render_summary(manifest["cells"], fits, wtps,
                                        manifest["pseudo_r2_avg"], benchmark))


# ------------------------------------------------------------------- robustness

def _index(cells):
    return {(c["agent"], c["variant"], c["order"], c["currency"]): c for c in cells if "fit" in c}


def cmd_robustness(cfg: ExperimentConfig, manifest: dict[str, Any] | None = None) -> dict[str, Any]:
    out = cfg.out_dir
    manifest = manifest or load_manifest(out)
    idx = _index(manifest.get("cells", []))
    rows = []
    for agent in (a.id for a in cfg.agents):
        for variant in cfg.variants:
            have = {(o, c) for (a, v, o, c) in idx if a == agent and v == variant}
            if not {("normal", "HKD"), ("swapped", "HKD")} <= have and not \
                    {("normal", "USD"), ("swapped", "USD")} <= have:
                continue
            runs = {}
            for (o, c) in sorted(have):
                cell = idx[(agent, variant, o, c)]
                fit = load_json(out / cell["fit"])
                wtp = load_json(out / cell["wtp"])
                asc_p = (fit["p_values"] or {}).get("asc")
                runs[f"{o}/{c}"] = {
                    "status": cell["status"], "flag": cell.get("flag"),
                    "wtp_hkd": wtp["wtp_hkd"],
                    "coefficients": fit["coefficients"],
                    "names": fit["names"], "price_name": fit["price_name"],
                    "asc": fit["coefficients"]["asc"], "asc_p": asc_p,
                    "asc_significant_5pct": None if asc_p is None else asc_p < 0.05,
                    "asc_significant_1pct": None if asc_p is None else asc_p < 0.01,
                    "pseudo_r2": fit["pseudo_r2"],
                }
            averaged = {}
            for c in ("HKD", "USD"):
                pair = [runs.get(f"normal/{c}"), runs.get(f"swapped/{c}")]
                if all(r and r["wtp_hkd"] for r in pair):
                    averaged[c] = {k: (pair[0]["wtp_hkd"][k] + pair[1]["wtp_hkd"][k]) / 2
                                   for k in pair[0]["wtp_hkd"]}
            equivariance = {}
            for c in ("HKD", "USD"):
                n, s = runs.get(f"normal/{c}"), runs.get(f"swapped/{c}")
                if n and s and n["status"] == "fit" and s["status"] == "fit":
                    cn, cs = n["coefficients"], s["coefficients"]
                    equivariance[c] = {
                        "asc_sum": cn["asc"] + cs["asc"],
                        "max_abs_beta_diff": max(abs(cn[k] - cs[k]) for k in cn if k != "asc"),
                    }
            rows.append({"agent": agent, "variant": variant, "runs": runs,
                         "order_averaged_wtp_hkd": averaged, "swap_equivariance": equivariance})
    if not rows:
        raise MissingCounterpartRun(
            "robustness needs both normal and swapped fits for at least one agent/variant")
    doc = {"config_digest": cfg.digest, "rows": rows}
    dump_json(out / "robustness.json", doc)
    atomic_write(out / "robustness.md", reports.render_robustness(doc))
    manifest["robustness"] = "robustness.json"
    _save_manifest(out, manifest)
    return doc


# ----------------------------------------------------------------------- report

ICL_PREFIX = "icl-"


def cmd_report(cfg: ExperimentConfig, manifest: dict[str, Any] | None = None) -> dict[str, Any]:
    """Deviation aggregations in both conventions (mean/median, raw/adjusted)."""
    out = cfg.out_dir
    manifest = manifest or load_manifest(out)
    benchmark = cfg.load_benchmark()
    fitted = [c for c in manifest.get("cells", []) if "fit" in c]
    if not fitted:
        raise ManifestError("no fitted cells; run 'fit' first")
    deviation_rows = []
    per_attr: dict[tuple, dict[str, list[float]]] = {}
    wtp_by = {}
    for c in fitted:
        wtp = load_json(out / c["wtp"])
        row = {"agent": c["agent"], "variant": c["variant"], "order": c["order"],
               "currency": c["currency"], "segment": wtp["segment"], "flag": c.get("flag")}
        if wtp["wtp_hkd"] is not None:
            wtp_by[(c["agent"], c["variant"], c["order"], c["currency"])] = wtp["wtp_hkd"]
            for adjust in (False, True):
                dev = deviation_report(wtp["wtp_hkd"], wtp["segment"], adjust, benchmark)
                tag = "adjusted" if adjust else "unadjusted"
                row[f"mean_{tag}"] = dev.mean
                row[f"median_{tag}"] = dev.median
                if c["variant"].startswith(ICL_PREFIX) and not adjust:
                    bucket = per_attr.setdefault((c["agent"], c["currency"], c["order"]), {})
                    for k, v in dev.per_attribute.items():
                        bucket.setdefault(k, []).append(v)
        deviation_rows.append(row)
    icl_median = [
        {"agent": a, "currency": cur, "order": o,
         "median_abs_deviation": {k: statistics.median(v) for k, v in attrs.items()}}
        for (a, cur, o), attrs in per_attr.items()
    ]
    relative = []
    for (a, v, o, cur), w in wtp_by.items():
        base = wtp_by.get((a, "baseline", o, cur))
        if base is None or v == "baseline":
            continue
        relative.append({"agent": a, "variant": v, "order": o, "currency": cur,
                         "ratio_to_baseline": {k: (w[k] / base[k] if base[k] else None) for k in w}})
    doc = {"config_digest": cfg.digest, "deviations": deviation_rows,
           "icl_median_abs_deviation": icl_median, "relative_to_baseline": relative}
    dump_json(out / "report.json", doc)
    atomic_write(out / "report.md", reports.render_report(doc))
    manifest["report"] = "report.json"
    _save_manifest(out, manifest)
    return doc


def exit_status(manifest: dict[str, Any]) -> int:
    statuses = [c.get("status") for c in manifest.get("cells", [])]
    if statuses and all(s == "failed" for s in statuses):
        return 1
    return 2 if any(s in ("flagged", "failed") for s in statuses) else 0
