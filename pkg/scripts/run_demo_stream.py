#!/usr/bin/env python3
"""Drive a full evolution run end to end without a live model.

Materializes the scripted transcript, stub sandbox rules, and synthetic
corpus that the test suite uses, then invokes the CLI on them: ten
problems solved from an empty library, with retrieval, synthesis,
deduplication, and eviction all exercised. Everything lands under --out.
"""

import argparse
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))
sys.path.insert(0, str(REPO / "tests"))   # scripted fixture lives there

from stream_fixture import DIM, build_stream_fixture
from toolevo.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/demo",
                        help="directory for fixture files and run outputs")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fixture = build_stream_fixture()

    transcript = out / "transcript.json"
    transcript.write_text(json.dumps(fixture.responses, indent=1),
                          encoding="utf-8")
    rules = [{"mode": mode, "function_name": fn,
              "response": {"ok": r.ok, "result": r.result, "error": r.error}}
             for mode, fn, r in fixture.stub_rules]
    stub = out / "stub_rules.json"
    stub.write_text(json.dumps(rules, indent=1), encoding="utf-8")
    corpus = out / "corpus.jsonl"
    corpus.write_text(
        "\n".join(json.dumps({"id": p.id, "question": p.question,
                              "gold": p.gold_answer})
                  for p in fixture.problems) + "\n",
        encoding="utf-8")

    run_dir = out / "run"
    code = cli_main(["run",
                     "--corpus", str(corpus),
                     "--out", str(run_dir),
                     "--provider", f"scripted:{transcript}",
                     "--embedder", f"hash:{DIM}",
                     "--sandbox", f"stub:{stub}",
                     "--set", "tau_ret=0.75",
                     "--set", "capacity=6"])
    if code:
        return code
    print()
    return cli_main(["inspect", str(run_dir / "library.json")])


if __name__ == "__main__":
    raise SystemExit(main())
