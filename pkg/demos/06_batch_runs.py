"""Batch runs from a configuration file, and independent re-verification.

The same thing from the shell:

    monotonic-control run demos/configs/two_level.toml --output-dir /tmp/two_level
    monotonic-control check /tmp/two_level/trace_d1_e1_a1.csv /tmp/two_level/report_d1_e1_a1.json
    monotonic-control threshold --problem two_level --T 1 --self-consistent
"""

import json
import tempfile
from pathlib import Path

from monotonic_control.config import load_config
from monotonic_control.runner import execute, recheck

config = load_config(Path(__file__).parent / "configs" / "two_level.toml")
print(f"{len(config.points())} sweep points:", ", ".join(name for name, _ in config.points()))

with tempfile.TemporaryDirectory() as out:
    status = execute(config, output_dir=out)
    print("exit status", status)
    print((Path(out) / "summary.csv").read_text())

    # Every verdict in a report can be recomputed from the trace it points to.
    doc = json.loads((Path(out) / "report_d1_e1_a1.json").read_text())
    print("recorded:", {k: v["passed"] for k, v in doc["checks"].items()})
    again = recheck(Path(out) / "trace_d1_e1_a1.csv", Path(out) / "report_d1_e1_a1.json")
    print("recomputed:", {k: v["passed"] for k, v in again["checks"].items()}, "agree:", again["agrees"])
