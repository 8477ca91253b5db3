"""Command-line entry points.

Subcommands: run (solve a corpus), inspect (summarize a snapshot),
sim (theory experiments as CSV), sample (stratified corpus sampling).
Exit codes: 0 success, 2 usage or config problem, 3 provider bootstrap
failure, 4 sandbox bootstrap failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path

from .embeddings import make_embedder
from .engine import EngineConfig, Problem, Providers, run_stream, trace_to_json
from .errors import CorruptSnapshot, ProviderUnavailable, SandboxUnavailable, ToolEvoError
from .metrics import (
    binned_histogram,
    cumulative_utility,
    hit_histogram,
    judge,
    stratified_seed_sample,
    trr_at_k,
    trr_stratified,
)
from .providers import make_model_provider
from .registry import ToolLibrary
from .sandbox import make_sandbox
from .theory_sim import (
    DecompositionSimConfig,
    GrowthParams,
    RetrievalNoiseModel,
    library_growth,
    retrieval_success_curve,
    simulate_decomposition_gain,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_SANDBOX = 4

REPORT_KS = (1, 2, 5, 10)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def atomic_write(path: Path, data: bytes) -> None:
    """Write-temp-then-rename so readers never observe a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_config(path: str | None, overrides: list[str]) -> EngineConfig:
    fields = {f.name: f for f in dataclasses.fields(EngineConfig)}
    values: dict[str, object] = {}
    if path is not None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in doc.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        target = fields[key].type
        if target in ("int", int):
            values[key] = int(raw)
        else:
            values[key] = float(raw)
    return EngineConfig(**values).validate()  # type: ignore[arg-type]


def load_corpus(path: str) -> list[Problem]:
    problems = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                problems.append(Problem.from_obj(obj))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus line: {exc}") from exc
    if not problems:
        raise ValueError(f"corpus {path} holds no problems")
    return problems


def _safe_name(problem_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in problem_id)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config, args.set or [])
        problems = load_corpus(args.corpus)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))

    try:
        model = make_model_provider(args.provider, temperature=config.temperature)
        desc_embedder = make_embedder(args.embedder)
        code_embedder = (make_embedder(args.code_embedder)
                         if args.code_embedder else desc_embedder)
        if hasattr(desc_embedder, "ensure_dim"):
            desc_embedder.ensure_dim()
        if hasattr(code_embedder, "ensure_dim"):
            code_embedder.ensure_dim()
    except ProviderUnavailable as exc:
        return _fail(EXIT_PROVIDER, str(exc))
    if desc_embedder.dim != code_embedder.dim:
        return _fail(EXIT_CONFIG,
                     "description and code embedders must share a dimension "
                     f"({desc_embedder.dim} vs {code_embedder.dim})")
    provider_id = desc_embedder.identity if args.code_embedder is None else (
        f"desc={desc_embedder.identity};code={code_embedder.identity}")

    try:
        sandbox = make_sandbox(args.sandbox)
    except SandboxUnavailable as exc:
        return _fail(EXIT_SANDBOX, str(exc))

    try:
        if args.library:
            try:
                library = ToolLibrary.load_snapshot(
                    Path(args.library).read_bytes(), expected_provider=provider_id)
            except (OSError, CorruptSnapshot) as exc:
                return _fail(EXIT_CONFIG, f"cannot load library: {exc}")
            library.capacity = config.capacity
            library.min_usage = config.min_usage
        else:
            library = ToolLibrary(provider=provider_id, dim=desc_embedder.dim,
                                  capacity=config.capacity,
                                  min_usage=config.min_usage)

        providers = Providers(model=model, desc_embedder=desc_embedder,
                              code_embedder=code_embedder)
        stream = run_stream(problems, library, config, providers, sandbox)
    finally:
        sandbox.close()

    out_dir = Path(args.out)
    for problem, result in zip(problems, stream.results):
        atomic_write(out_dir / "traces" / f"{_safe_name(problem.id)}.json",
                     (trace_to_json(problem, result) + "\n").encode("utf-8"))
    atomic_write(out_dir / "library.json", stream.library.save_snapshot())

    records = [judge(p.id, r.answer, p.gold_answer or {"kind": "text", "value": ""})
               for p, r in zip(problems, stream.results)]
    histogram = (hit_histogram(stream.library) if len(stream.library) else None)
    report = {
        "problems": len(problems),
        "accuracy": sum(1 for r in records if r.correct) / len(records),
        "trr": {str(k): (trr_at_k(stream.library, k) if len(stream.library) else None)
                for k in REPORT_KS},
        "trr_evol": None,
        "trr_trans": None,
        "utility": cumulative_utility(records, stream.sizes, config.lam),
        "library_size": len(stream.library),
        "histogram": binned_histogram(histogram) if histogram else None,
    }
    if len(stream.library):
        report.update(trr_stratified(stream.library, 2))
    atomic_write(out_dir / "report.json",
                 (json.dumps(report, ensure_ascii=False, indent=1) + "\n").encode("utf-8"))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["problem_id", "predicted", "gold_kind", "gold_value",
                     "correct", "judge_mode"])
    for record in records:
        writer.writerow([
            record.problem_id,
            "" if record.predicted is None else record.predicted,
            record.gold.get("kind", ""),
            record.gold.get("value", ""),
            str(record.correct).lower(),
            record.judge_mode,
        ])
    atomic_write(out_dir / "records.csv", buf.getvalue().encode("utf-8"))
    print(f"solved {len(problems)} problems; library size {len(stream.library)}; "
          f"outputs in {out_dir}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        library = ToolLibrary.load_snapshot(Path(args.snapshot).read_bytes())
    except (OSError, CorruptSnapshot) as exc:
        return _fail(EXIT_CONFIG, f"cannot load snapshot: {exc}")
    print(f"provider: {library.provider}  dim: {library.dim}")
    print(f"tools: {len(library)}  capacity: {library.capacity}  "
          f"min_usage: {library.min_usage}")
    if len(library) == 0:
        print("TRR: undefined (empty library)")
        return EXIT_OK
    for k in REPORT_KS:
        print(f"TRR@{k}: {trr_at_k(library, k):.4f}")
    strat = trr_stratified(library, 2)
    for key in ("trr_evol", "trr_trans"):
        value = strat[key]
        print(f"{key}@2: " + ("undefined" if value is None else f"{value:.4f}"))
    print("hit histogram:")
    for label, count in binned_histogram(hit_histogram(library)).items():
        print(f"  {label:>6}: {count}")
    return EXIT_OK


def cmd_sim(args: argparse.Namespace) -> int:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if args.kind == "growth":
        params = GrowthParams(lambda_g=args.lambda_g, lambda_p=args.lambda_p,
                              k_cap=args.k_cap, l0=args.l0,
                              horizon=args.horizon, dt=args.dt)
        result = library_growth(params)
        writer.writerow(["t", "L_numeric", "L_closed"])
        for t, numeric, closed in result["trajectory"]:
            writer.writerow([f"{t:.6f}", repr(numeric), repr(closed)])
    elif args.kind == "retrieval":
        model = RetrievalNoiseModel(mu_r=args.mu_r, sigma_r=args.sigma_r,
                                    mu_n=args.mu_n, sigma_n=args.sigma_n,
                                    samples=args.samples, seed=args.seed)
        writer.writerow(["N", "p_mc", "p_quad"])
        for row in retrieval_success_curve(model):
            writer.writerow([row["n_tools"], repr(row["p_mc"]), repr(row["p_quad"])])
    elif args.kind == "decomposition":
        config = DecompositionSimConfig(
            k=args.k, op_marginals=[args.marginal] * args.k,
            joint_model=args.joint_model, p_partial=args.p_partial,
            num_queries=args.samples, seed=args.seed)
        result = simulate_decomposition_gain(config)
        writer.writerow(["atomic_sum", "k_times_mono", "gap", "gap_se"])
        writer.writerow([repr(result["atomic_sum"]), repr(result["k_times_mono"]),
                         repr(result["gap"]), repr(result["gap_se"])])
    else:  # unreachable behind argparse choices
        return _fail(EXIT_CONFIG, f"unknown sim kind {args.kind!r}")
    if args.out:
        atomic_write(Path(args.out), buf.getvalue().encode("utf-8"))
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    try:
        problems = load_corpus(args.corpus)
        embedder = make_embedder(args.embedder)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except ProviderUnavailable as exc:
        return _fail(EXIT_PROVIDER, str(exc))
    items = [(p.id, embedder.embed(p.question)) for p in problems]
    for item_id in stratified_seed_sample(items, args.clusters,
                                          args.per_cluster, args.seed):
        print(item_id)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toolevo",
        description="Evolve a library of verified atomic tools over a problem stream.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a JSONL corpus")
    run.add_argument("--corpus", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config field")
    run.add_argument("--provider", required=True,
                     help="scripted:<path> or an http(s) completion URL")
    run.add_argument("--embedder", default="hash:64",
                     help="hash:<dim> or an http(s) embedding URL")
    run.add_argument("--code-embedder", default=None,
                     help="separate embedder for tool source (defaults to --embedder)")
    run.add_argument("--sandbox", required=True,
                     help="stub:<rules.json> or cmd:<command line>")
    run.add_argument("--library", default=None, help="starting snapshot")
    run.add_argument("--seed", type=int, default=0)
    run.set_defaults(func=cmd_run)

    inspect = sub.add_parser("inspect", help="summarize a library snapshot")
    inspect.add_argument("snapshot")
    inspect.set_defaults(func=cmd_inspect)

    sim = sub.add_parser("sim", help="run a theory experiment, emit CSV")
    sim.add_argument("kind", choices=["growth", "retrieval", "decomposition"])
    sim.add_argument("--out", default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--samples", type=int, default=100_000)
    # growth
    sim.add_argument("--lambda-g", dest="lambda_g", type=float, default=10.0)
    sim.add_argument("--lambda-p", dest="lambda_p", type=float, default=0.1)
    sim.add_argument("--k-cap", dest="k_cap", type=float, default=500.0)
    sim.add_argument("--l0", type=float, default=0.0)
    sim.add_argument("--horizon", type=float, default=10.0)
    sim.add_argument("--dt", type=float, default=0.001)
    # retrieval
    sim.add_argument("--mu-r", dest="mu_r", type=float, default=0.6)
    sim.add_argument("--sigma-r", dest="sigma_r", type=float, default=0.15)
    sim.add_argument("--mu-n", dest="mu_n", type=float, default=0.4)
    sim.add_argument("--sigma-n", dest="sigma_n", type=float, default=0.15)
    # decomposition
    sim.add_argument("--k", type=int, default=3)
    sim.add_argument("--marginal", type=float, default=0.5)
    sim.add_argument("--joint-model", dest="joint_model",
                     choices=["independent", "all_or_subset"],
                     default="independent")
    sim.add_argument("--p-partial", dest="p_partial", type=float, default=0.5)
    sim.set_defaults(func=cmd_sim)

    sample = sub.add_parser("sample", help="stratified sample of a corpus")
    sample.add_argument("--corpus", required=True)
    sample.add_argument("--clusters", type=int, default=8)
    sample.add_argument("--per-cluster", dest="per_cluster", type=int, default=3)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--embedder", default="hash:64")
    sample.set_defaults(func=cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolEvoError as exc:
        return _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
