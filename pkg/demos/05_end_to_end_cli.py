"""The full pipeline through the command line, with synthetic agents.

Writes a config, then runs generate, run, fit, robustness and report into a
temporary directory and prints the markdown summary. A remote chat-completion
agent would be one more entry in "agents", for example
{"id": "my-model", "kind": "remote", "endpoint": "https://.../v1/chat/completions",
 "model": "...", "auth_env": "MY_API_KEY"}; it is left out so the demo needs
no network. Run: python3 demos/05_end_to_end_cli.py
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from choice_forge import cli

work = Path(tempfile.mkdtemp(prefix="choice-forge-demo-"))
os.environ.setdefault("CHOICE_FORGE_CACHE", str(work / "cache"))
config = {
    "spec_version": 1,
    "design_seed": 0,
    "variants": ["baseline", "icl-3-cheap", "persona-business"],
    "currencies": ["HKD", "USD"],
    "replications": 5,
    "benchmark_segment": "auto",
    "agents": [
        {"id": "price-sensitive", "kind": "synthetic_logit", "beta_scale": "standardized",
         "beta": {"view": 1.0, "floor": 0.8, "access club": 1.5, "free mini bar": 0.9,
                  "guest smartphone": 1.2, "cancellation": 1.0, "price per night": -2.0},
         "order_constant": 0.3, "noise_seed": 7},
        {"id": "cheapest", "kind": "always_cheapest"},
    ],
}
cfg_path = work / "experiment.json"
cfg_path.write_text(json.dumps(config, indent=2))
out = work / "out"

for command in ("generate", "run", "fit", "robustness", "report"):
    code = cli.main([command, "--config", str(cfg_path), "--out", str(out)])
    print(f"choice-forge {command}: exit {code}")

print((out / "summary.md").read_text().split("## icl-3-cheap")[0])
print((out / "robustness.md").read_text().split("\n## ")[1][:1500])
print(f"\nall artifacts under {out}")
