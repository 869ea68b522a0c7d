"""Command-line entry point.

Four commands: ``run`` drives records through the loop or a baseline and
writes trajectories; ``eval`` scores a trajectory file against its dataset;
``analyze`` reports decomposition behaviour; ``simulate`` iterates a
transition system from a JSON description.

Settings may come from a JSON config file (``--config``); explicit flags
always win over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

from . import baselines, data, engine, eval as evaluation
from .complexity import (
    Bounds,
    ComplexityScore,
    PerplexityClient,
    ScoreBasis,
    ScorerConfig,
    load_perplexity_cache,
    load_transition_model,
    make_scorer,
    simulate_transition,
    stopping_turn,
)
from .errors import MicroActError
from .provider import CompletionParams, HttpProvider, scripted_load

_METHODS = ("micro_act",) + tuple(m.value for m in baselines.BaselineMethod)

_DEFAULTS: dict[str, Any] = {
    "method": "micro_act",
    "model": "gpt-4o",
    "endpoint": "",
    "script": "",
    "max_turns": 10,
    "max_depth": 4,
    "tau": 100.0,
    "scorer": "token_length",
    "n_per_type": 0,
    "seed": 0,
    "width": 8,
    "prices": "",
    "ppl_endpoint": "",
    "ppl_cache": "",
    "credential_env": "OPENAI_API_KEY",
    "no_force_split": False,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microact",
        description="Conflict-aware QA agent runtime and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run records through a method")
    run.add_argument("--config", help="JSON file of default settings")
    run.add_argument("--dataset", required=True, help="line-delimited dataset file")
    run.add_argument("--method", choices=_METHODS)
    run.add_argument("--model", help="model name sent to the backend")
    run.add_argument("--endpoint", help="chat-completions URL")
    run.add_argument("--script", help="JSON file of scripted replies (offline runs)")
    run.add_argument("--max-turns", type=int, dest="max_turns")
    run.add_argument("--max-depth", type=int, dest="max_depth")
    run.add_argument("--tau", type=float, help="complexity threshold for forced splits")
    run.add_argument(
        "--scorer", choices=[basis.value for basis in ScoreBasis], dest="scorer"
    )
    run.add_argument("--n-per-type", type=int, dest="n_per_type")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True, help="trajectory output file")
    run.add_argument("--width", type=int, help="concurrent records")
    run.add_argument("--prices", help="JSON price table (reserved for eval)")
    run.add_argument("--ppl-endpoint", dest="ppl_endpoint", help="perplexity service URL")
    run.add_argument("--ppl-cache", dest="ppl_cache", help="perplexity cache file")
    run.add_argument("--credential-env", dest="credential_env")
    run.add_argument(
        "--no-force-split",
        action="store_true",
        dest="no_force_split",
        default=None,
        help="disable forced splits after conflicts",
    )
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="score a trajectory file")
    ev.add_argument("--trajectories", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--model", default="gpt-4o")
    ev.add_argument("--method", default="")
    ev.add_argument("--prices", default="")
    ev.add_argument("--out", default="", help="write the report as JSON here")
    ev.set_defaults(func=_cmd_eval)

    an = sub.add_parser("analyze", help="decomposition behaviour of a trajectory file")
    an.add_argument("--trajectories", required=True)
    an.add_argument("--dataset", required=True)
    an.add_argument("--out", default="", help="write the analysis as JSON here")
    an.set_defaults(func=_cmd_analyze)

    sim = sub.add_parser("simulate", help="iterate a transition system")
    sim.add_argument("--model-file", dest="model_file", required=True)
    sim.add_argument("--steps", type=int, required=True)
    sim.add_argument("--tau", type=float, default=None)
    sim.set_defaults(func=_cmd_simulate)

    return parser


def _merge_settings(args: argparse.Namespace) -> dict[str, Any]:
    """defaults < config file < explicit flags."""
    settings = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as handle:
            file_settings = json.load(handle)
        unknown = set(file_settings) - set(_DEFAULTS)
        if unknown:
            raise MicroActError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        settings.update(file_settings)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _build_provider(settings: dict[str, Any]):
    if settings["script"]:
        with open(settings["script"], encoding="utf-8") as handle:
            raw = json.load(handle)
        if isinstance(raw, list):
            replies, counts = raw, None
        else:
            replies, counts = raw["replies"], raw.get("token_counts")
        return scripted_load(replies, counts), 1
    if not settings["endpoint"]:
        raise MicroActError("either --endpoint or --script is required for run")
    credential_env = settings["credential_env"]
    if not os.environ.get(credential_env):
        raise MicroActError(
            f"credential environment variable {credential_env!r} is not set; "
            "refusing to start a live run"
        )
    provider = HttpProvider(
        endpoint=settings["endpoint"],
        model_name=settings["model"],
        credential_env=credential_env,
    )
    return provider, int(settings["width"])


def _build_scorer(settings: dict[str, Any]):
    basis = ScoreBasis(settings["scorer"])
    cache = (
        load_perplexity_cache(settings["ppl_cache"]) if settings["ppl_cache"] else None
    )
    lookup = (
        PerplexityClient(settings["ppl_endpoint"]) if settings["ppl_endpoint"] else None
    )
    config = ScorerConfig(
        basis=basis,
        ppl_lookup=lookup,
        ppl_cache=cache,
        cache_path=Path(settings["ppl_cache"]) if settings["ppl_cache"] else None,
    )
    return make_scorer(config)


def _cmd_run(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    provider, width = _build_provider(settings)
    records, manifest = data.load_dataset(args.dataset)
    if settings["n_per_type"]:
        records = data.sample_stratified(
            records, int(settings["n_per_type"]), int(settings["seed"])
        )
    params = CompletionParams(model_name=settings["model"])
    method = settings["method"]
    if method == "micro_act":
        config = engine.EngineConfig(
            turn_budget=int(settings["max_turns"]),
            max_depth=int(settings["max_depth"]),
            threshold=ComplexityScore(
                float(settings["tau"]), ScoreBasis(settings["scorer"])
            ),
            force_split_enabled=not settings["no_force_split"],
            method="micro_act",
        )
        scorer = _build_scorer(settings)
        trajectories = engine.run_many(
            records, config, provider, scorer, params, width=width
        )
    else:
        baseline = baselines.BaselineMethod(method)
        if width == 1 or len(records) <= 1:
            trajectories = [
                baselines.run_baseline(baseline, r, provider, params) for r in records
            ]
        else:
            with ThreadPoolExecutor(max_workers=width) as pool:
                trajectories = list(
                    pool.map(
                        lambda r: baselines.run_baseline(baseline, r, provider, params),
                        records,
                    )
                )
    engine.write_trajectories(args.out, trajectories)
    solved = sum(t.solved for t in trajectories)
    failed = sum(t.failed for t in trajectories)
    print(
        f"wrote {len(trajectories)} trajectories to {args.out} "
        f"({solved} solved, {failed} failed; dataset {manifest.record_count} records)"
    )
    return 0


def _load_prices(path: str, model: str) -> dict[str, dict[str, float]]:
    if path:
        return evaluation.load_prices(path)
    return {model: {"input_per_token": 0.0, "output_per_token": 0.0}}


def _cmd_eval(args: argparse.Namespace) -> int:
    trajectories = engine.read_trajectories(args.trajectories)
    records, _ = data.load_dataset(args.dataset)
    method = args.method or (trajectories[0].method if trajectories else "unknown")
    report = evaluation.build_report(
        trajectories,
        records,
        method=method,
        model_name=args.model,
        prices=_load_prices(args.prices, args.model),
    )
    print(evaluation.render_report_table(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(evaluation.report_to_dict(report), handle, indent=2, sort_keys=True)
            handle.write("\n")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    trajectories = engine.read_trajectories(args.trajectories)
    records, _ = data.load_dataset(args.dataset)
    stats = evaluation.decomposition_stats(trajectories, records)
    buckets = data.bucket_by_length(records)
    payload = {
        "rate_by_bucket": dict(stats.rate_by_bucket),
        "bucket_sizes": {label: len(ids) for label, ids in buckets.items()},
        "avg_steps_by_conflict": dict(stats.avg_steps_by_conflict),
        "avg_turns": stats.avg_turns,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    model, initial, schedule = load_transition_model(args.model_file)
    history = simulate_transition(model, initial, args.steps)
    for t, distribution in enumerate(history):
        print(json.dumps({"t": t, "distribution": distribution}, sort_keys=True))
    if schedule is not None and args.tau is not None:
        turn = stopping_turn(schedule, args.tau)
        print(json.dumps({"stopping_turn": turn}))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MicroActError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
