from __future__ import annotations

import json
import re
from pathlib import Path

import httpx
import pytest

from _sim import THETA_STAR
from choice_forge import cli, default_schema, pipeline
from choice_forge.agents import ResponseCache, read_records
from choice_forge.config import (AgentConfig, ConfigError, ExperimentConfig, default_config,
                                 design_sd)
from choice_forge.reports import fmt

LOGIT = {"id": "logit", "kind": "synthetic_logit", "beta": THETA_STAR,
         "beta_scale": "standardized", "noise_seed": 3}
COIN = {"id": "coin", "kind": "synthetic_logit", "beta": {k: 0 for k in THETA_STAR},
        "noise_seed": 11}


def config_doc(**kw):
    doc = {"spec_version": 1, "variants": ["baseline"], "agents": [LOGIT], "design_seed": 0}
    doc.update(kw)
    return doc


def write_config(tmp_path, **kw) -> Path:
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config_doc(**kw)))
    return path


def run_all(path, out, *extra):
    codes = [cli.main([cmd, "--config", str(path), "--out", str(out), *extra])
             for cmd in ("generate", "run", "fit", "robustness", "report")]
    return codes


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


# ------------------------------------------------------------------- config


@pytest.mark.parametrize("change, msg", [
    ({"variants": []}, "at least one variant"),
    ({"agents": []}, "at least one agent"),
    ({"variants": ["nope"]}, "unknown variant"),
    ({"colour": 1}, "unknown config fields"),
    ({"spec_version": 2}, "spec_version"),
    ({"replications": 0}, "replications"),
    ({"orders": "sideways"}, "orders"),
    ({"currencies": ["EUR"]}, "currencies"),
    ({"benchmark_segment": "students"}, "benchmark_segment"),
    ({"agents": [LOGIT, LOGIT]}, "unique"),
    ({"agents": [{"id": "x", "kind": "oracle"}]}, "unknown kind"),
    ({"agents": [{"id": "x", "kind": "remote", "model": "m"}]}, "endpoint"),
    ({"agents": [{**LOGIT, "temperature": 1}]}, "unknown fields"),
    ({"agents": [{"id": "x", "kind": "synthetic_logit"}]}, "beta"),
])
def test_config_validation(change, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_dict(config_doc(**change))


def test_config_requires_spec_version():
    doc = config_doc()
    del doc["spec_version"]
    with pytest.raises(ConfigError, match="spec_version"):
        ExperimentConfig.from_dict(doc)


def test_config_roundtrip_and_digest(tmp_path):
    cfg = ExperimentConfig.from_json(write_config(tmp_path, replications=3))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.digest == cfg.digest
    assert cfg.with_overrides(out="/elsewhere").digest == cfg.digest
    assert cfg.with_overrides(seed=5).digest != cfg.digest


def test_config_overrides(tmp_path):
    cfg = ExperimentConfig.from_json(write_config(tmp_path, agents=[LOGIT, COIN],
                                                  variants=["baseline", "icl-3-mixed"]))
    sub = cfg.with_overrides(seed=9, variants=["icl-3-mixed"], agents=["coin"])
    assert sub.design_seed == 9 and sub.variants == ("icl-3-mixed",)
    assert [a.id for a in sub.agents] == ["coin"]
    with pytest.raises(ConfigError):
        cfg.with_overrides(agents=["ghost"])


def test_standardized_beta_scale(schema):
    agent = AgentConfig.from_dict(LOGIT).build(schema)
    sd = design_sd(schema)
    assert agent.beta["floor"] == pytest.approx(THETA_STAR["floor"] / sd["floor"])


def test_schema_and_benchmark_files_resolve_relative(tmp_path, schema):
    (tmp_path / "schema.json").write_text(json.dumps(schema.to_dict()))
    bench = {"segments": {"overall": {k: 1.0 for k in list(THETA_STAR)[:-1]}}}
    (tmp_path / "bench.json").write_text(json.dumps(bench))
    cfg = ExperimentConfig.from_json(write_config(tmp_path, schema="schema.json",
                                                  benchmark_file="bench.json"))
    assert cfg.load_schema() == schema
    assert cfg.load_benchmark().segment("overall")["view"] == 1.0


def test_default_config():
    cfg = default_config()
    assert len(cfg.variants) == 12 and cfg.orders == "both"


# ---------------------------------------------------------------- generate


def test_generate_default(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["generate", "--out", str(out)]) == 0
    m = manifest(out)
    assert m["design"]["n_alternatives"] == 480 and m["design"]["n_dilemmas"] == 240
    assert len(m["prompts"]) == 24
    for rel in m["prompts"].values():
        assert len((out / rel).read_text().splitlines()) == 240
    before = {p: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert cli.main(["generate", "--out", str(out)]) == 0
    assert {p: p.read_bytes() for p in out.rglob("*") if p.is_file()} == before


def test_cli_rejects_bad_config(tmp_path, capsys):
    assert cli.main(["generate", "--config", str(write_config(tmp_path, variants=[])),
                     "--out", str(tmp_path / "o")]) == 1
    assert "at least one variant" in capsys.readouterr().err
    assert cli.main(["fit", "--out", str(tmp_path / "missing")]) == 1


# -------------------------------------------------------------- run + fit


def test_run_synthetic_both_orders(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 0
    cells = manifest(out)["cells"]
    assert [(c["order"], c["status"]) for c in cells] == [("normal", "collected"),
                                                         ("swapped", "collected")]
    for c in cells:
        assert len(read_records(out / c["records"])) == 240
        meta = json.loads((out / c["meta"]).read_text())
        assert meta["counts"] == {"prompts": 240, "records": 240, "invalid": 0, "errors": 0}
        assert "timestamp" not in json.dumps(meta)


def test_always_first_records(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path, agents=[{"id": "first", "kind": "always_first"}],
                        orders="normal")
    cli.main(["run", "--config", str(path), "--out", str(out)])
    (cell,) = manifest(out)["cells"]
    recs = read_records(out / cell["records"])
    assert len(recs) == 240 and all(r.choice == "A" for r in recs)


def test_fit_outputs_and_markdown(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path, replications=20,
                        agents=[LOGIT, {"id": "cheap", "kind": "always_cheapest"}])
    codes = run_all(path, out)
    assert codes == [0, 0, 2, 2, 2]  # flagged once fitted
    m = manifest(out)
    statuses = {c["key"]: c["status"] for c in m["cells"]}
    assert len(statuses) == len(m["cells"]) == 4
    assert set(statuses.values()) <= {"fit", "flagged", "failed"}
    summary = (out / "summary.md").read_text()
    assert "perfect separation: price" in summary

    logit_cells = [c for c in m["cells"] if c["agent"] == "logit"]
    for c in logit_cells:
        fit = json.loads((out / c["fit"]).read_text())
        wtp = json.loads((out / c["wtp"]).read_text())
        for k, v in fit["coefficients"].items():
            assert fmt(v) in summary
        for k, w in wtp["wtp_hkd"].items():
            assert fmt(w) in summary
            truth = THETA_STAR[k] * design_sd_ratio(k)
            assert w == pytest.approx(truth, rel=0.15)
        assert wtp["deviations"]["mean"] >= 0
        assert "deviations_adjusted" in wtp

    (pair,) = [r for r in m["pseudo_r2_avg"] if r["agent"] == "logit"]
    assert pair["average"] == pytest.approx(sum(pair["per_run"].values()) / 2)
    assert fmt(pair["average"]) in summary
    csv_text = (out / "wtp" / "wtp_table_overall.csv").read_text()
    assert csv_text.startswith("attribute,")

    cheap = [c for c in m["cells"] if c["agent"] == "cheap"]
    assert all(c["flag"] == "perfect separation: price" for c in cheap)
    for c in cheap:
        assert json.loads((out / c["wtp"]).read_text())["wtp_hkd"] is None
    report = json.loads((out / "report.json").read_text())
    row = next(r for r in report["deviations"] if r["agent"] == "logit")
    assert {"mean_unadjusted", "median_unadjusted", "mean_adjusted", "median_adjusted"} <= set(row)


def design_sd_ratio(k):
    sd = design_sd(default_schema())
    return -sd["price per night"] / (THETA_STAR["price per night"] * sd[k])


def test_robustness_requires_counterpart(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path, orders="normal")
    codes = run_all(path, out)
    assert codes[:3] == [0, 0, 0] and codes[3] == 1
    with pytest.raises(pipeline.MissingCounterpartRun):
        pipeline.cmd_robustness(ExperimentConfig.from_json(path).with_overrides(out=str(out)))


def test_coin_flip_asc_insignificant(tmp_path):
    out = tmp_path / "o"
    codes = run_all(write_config(tmp_path, agents=[COIN], replications=5), out)
    assert codes == [0] * 5
    doc = json.loads((out / "robustness.json").read_text())
    (row,) = doc["rows"]
    assert [r["asc_significant_5pct"] for r in row["runs"].values()] == [False, False]


def test_currency_runs_have_identical_wtp(tmp_path):
    out = tmp_path / "o"
    run_all(write_config(tmp_path, currencies=["HKD", "USD"], replications=5), out)
    (row,) = json.loads((out / "robustness.json").read_text())["rows"]
    assert set(row["runs"]) == {"normal/HKD", "swapped/HKD", "normal/USD", "swapped/USD"}
    assert row["runs"]["normal/HKD"]["wtp_hkd"] == row["runs"]["normal/USD"]["wtp_hkd"]
    assert row["order_averaged_wtp_hkd"]["HKD"] == row["order_averaged_wtp_hkd"]["USD"]
    usd_prompts = (out / manifest(out)["prompts"]["baseline__normal__USD"]).read_text()
    assert "US$ " in usd_prompts and "HK$" not in usd_prompts


def test_parallel_workers_match_serial(tmp_path):
    agents = [LOGIT, COIN]
    serial, parallel = tmp_path / "s", tmp_path / "p"
    run_all(write_config(tmp_path, agents=agents), serial)
    run_all(write_config(tmp_path, agents=agents, workers=4), parallel)
    for rel in ("records/logit__baseline__normal__HKD.jsonl", "summary.md", "report.json"):
        assert (serial / rel).read_bytes() == (parallel / rel).read_bytes()


def test_cli_filters_and_seed(tmp_path):
    out = tmp_path / "o"
    path = write_config(tmp_path, agents=[LOGIT, COIN], variants=["baseline", "persona-student"])
    assert cli.main(["run", "--config", str(path), "--out", str(out), "--variant",
                     "persona-student", "--agent", "coin", "--seed", "4"]) == 0
    m = manifest(out)
    assert {(c["agent"], c["variant"]) for c in m["cells"]} == {("coin", "persona-student")}
    assert m["config"]["design_seed"] == 4


# ----------------------------------------------------------------- remote


class Server:
    def __init__(self, answer="A"):
        self.calls = 0
        self.answer = answer

    def __call__(self, request):
        self.calls += 1
        text = json.loads(request.content)["messages"][0]["content"]
        # pick whichever scenario is cheaper, by reading the rendered prices
        a, b = (int(x) for x in re.findall(r"HK\$ (\d+) per night", text)[-2:])
        content = self.answer if self.answer != "cheap" else ("A" if a <= b else "B")
        return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


REMOTE = {"id": "remote", "kind": "remote", "endpoint": "http://fake/pipeline",
          "model": "m", "auth_env": "CF_PIPE_KEY"}


def test_remote_cached_rerun_makes_no_calls(tmp_path, monkeypatch):
    monkeypatch.setenv("CF_PIPE_KEY", "secret-value")
    out = tmp_path / "o"
    cfg = ExperimentConfig.from_json(write_config(tmp_path, agents=[REMOTE])).with_overrides(
        out=str(out))
    server = Server("cheap")
    cache = ResponseCache(tmp_path / "cache")
    client = httpx.Client(transport=httpx.MockTransport(server))
    pipeline.cmd_run(cfg, cache=cache, client=client)
    assert server.calls == 480
    first = {p: p.read_bytes() for p in (out / "records").iterdir()}
    pipeline.cmd_run(cfg, cache=cache, client=client)
    assert server.calls == 480
    assert {p: p.read_bytes() for p in (out / "records").iterdir()} == first
    assert not any(b"secret-value" in v for v in first.values())
    recs = read_records(out / "records" / "remote__baseline__normal__HKD.jsonl")
    assert all(r.timestamp for r in recs)


def test_remote_failures_fail_the_cell(tmp_path, monkeypatch):
    monkeypatch.delenv("CF_PIPE_KEY", raising=False)
    out = tmp_path / "o"
    path = write_config(tmp_path, agents=[REMOTE], orders="normal")
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 1
    (cell,) = manifest(out)["cells"]
    assert cell["status"] == "failed"
    meta = json.loads((out / cell["meta"]).read_text())
    assert meta["counts"]["errors"] == 240 and meta["counts"]["records"] == 240
    assert cli.main(["fit", "--config", str(path), "--out", str(out)]) == 1


def test_few_invalid_answers_are_tolerated(tmp_path, monkeypatch):
    monkeypatch.setenv("CF_PIPE_KEY", "k")
    out = tmp_path / "o"
    cfg = ExperimentConfig.from_json(write_config(tmp_path, agents=[REMOTE], orders="normal"))
    cfg = cfg.with_overrides(out=str(out))
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        text = json.loads(request.content)["messages"][0]["content"]
        a, b = (int(x) for x in re.findall(r"HK\$ (\d+) per night", text)[-2:])
        content = "no idea" if calls["n"] % 40 == 0 else ("A" if a < b else "B")
        return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})

    m = pipeline.cmd_run(cfg, cache=ResponseCache(tmp_path / "c"),
                         client=httpx.Client(transport=httpx.MockTransport(handler)))
    (cell,) = m["cells"]
    meta = json.loads((out / cell["meta"]).read_text())
    assert cell["status"] == "collected"
    assert meta["counts"]["errors"] == 0 and 0 <= meta["counts"]["invalid"] < 24
