"""Command-line front end: generate, train, evaluate, bounds, sweep.

All commands are driven by one JSON config file, validated up front with
unknown keys rejected.  Outputs (line-delimited datasets, policy JSON, CSV
tables, JSON summaries) are byte-identical across reruns of the same
config, including when seeds are fanned out to worker processes.  Worker
count comes from ``--jobs`` or, failing that, the ``DPRL_JOBS`` variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from .baselines import BaselinePolicy
from .bounds import VARIANT_PROOF, VARIANT_STATEMENT, bound_comparison_rows
from .discrete import DecisionPointPolicy
from .envs import build_environment
from .estimation import EVERY_VISIT, FIRST_VISIT, count_visits
from .evaluation import (
    AlgorithmSpec,
    MixedPolicy,
    exact_value,
    run_reliability_experiment,
    train_algorithm,
)
from .mdp import load_dataset, save_dataset, simulate

JOBS_ENV_VAR = "DPRL_JOBS"


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration content."""


_ENV_KEYS = {
    "forest": {"num_chains", "depth", "epsilon", "gamma"},
    "cql": {"num_risky", "epsilon", "gamma"},
    "gridworld": {"side", "noise", "careless_states", "gamma", "explore"},
}
_ALGO_KEYS = {
    "dprl": ({"n_wedge"}, {"tail_mode", "tol", "count_mode"}),
    "spibb": ({"n_wedge"}, {"behavior"}),
    "pqi": ({"density_threshold"}, set()),
    "behavior_clone": (set(), set()),
    "behavior": (set(), set()),
}


def _reject_unknown(section: str, payload: dict, allowed: set[str]) -> None:
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {unknown}")


def _require(section: str, payload: dict, required: set[str]) -> None:
    missing = sorted(k for k in required if k not in payload)
    if missing:
        raise ConfigError(f"{section}: missing keys {missing}")


def validate_config(config: dict) -> dict:
    """Check structure and fill in algorithm labels; returns a copy."""
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(
        "config", config, {"environment", "dataset", "seeds", "algorithms", "bounds", "output_dir"}
    )
    _require("config", config, {"environment", "dataset", "seeds", "algorithms"})

    env = config["environment"]
    if not isinstance(env, dict) or "id" not in env:
        raise ConfigError("environment: must be an object with an 'id'")
    if env["id"] not in _ENV_KEYS:
        raise ConfigError(f"environment: unknown id {env['id']!r}")
    _reject_unknown(f"environment[{env['id']}]", {k: v for k, v in env.items() if k != "id"},
                    _ENV_KEYS[env["id"]])

    dataset = config["dataset"]
    if not isinstance(dataset, dict):
        raise ConfigError("dataset: must be an object")
    _reject_unknown("dataset", dataset, {"num_trajectories", "horizon", "master_seed"})
    _require("dataset", dataset, {"num_trajectories", "horizon", "master_seed"})

    if not isinstance(config["seeds"], int) or config["seeds"] < 0:
        raise ConfigError("seeds: must be a nonnegative integer")

    algorithms = config["algorithms"]
    if not isinstance(algorithms, list) or not algorithms:
        raise ConfigError("algorithms: must be a non-empty list")
    name_totals: dict[str, int] = {}
    for entry in algorithms:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError("algorithms: each entry must be an object with a 'name'")
        if entry["name"] not in _ALGO_KEYS:
            raise ConfigError(f"algorithms: unknown name {entry['name']!r}")
        name_totals[entry["name"]] = name_totals.get(entry["name"], 0) + 1
        required, optional = _ALGO_KEYS[entry["name"]]
        params = {k: v for k, v in entry.items() if k not in ("name", "label")}
        _reject_unknown(f"algorithms[{entry['name']}]", params, required | optional)
        _require(f"algorithms[{entry['name']}]", params, required)

    normalized = json.loads(json.dumps(config))  # deep copy, JSON-clean
    occurrence: dict[str, int] = {}
    for entry in normalized["algorithms"]:
        name = entry["name"]
        occurrence[name] = occurrence.get(name, 0) + 1
        if "label" not in entry:
            entry["label"] = name if name_totals[name] == 1 else f"{name}_{occurrence[name]}"
    labels = [e["label"] for e in normalized["algorithms"]]
    if len(set(labels)) != len(labels):
        raise ConfigError("algorithms: labels must be unique")

    if "bounds" in normalized:
        bounds = normalized["bounds"]
        if not isinstance(bounds, dict):
            raise ConfigError("bounds: must be an object")
        _reject_unknown("bounds", bounds, {"delta", "n_wedge_grid", "pqi_b", "variant"})
        _require("bounds", bounds, {"delta", "n_wedge_grid", "pqi_b"})
        if bounds.get("variant", VARIANT_STATEMENT) not in (VARIANT_STATEMENT, VARIANT_PROOF):
            raise ConfigError("bounds: variant must be 'statement' or 'proof'")
    return normalized


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_env(config: dict):
    env = dict(config["environment"])
    env_id = env.pop("id")
    return build_environment(env_id, **env)


def _algorithm_specs(config: dict) -> list[AlgorithmSpec]:
    specs = []
    for entry in config["algorithms"]:
        params = {k: v for k, v in entry.items() if k not in ("name", "label")}
        specs.append(AlgorithmSpec(name=entry["name"], label=entry["label"], params=params))
    return specs


def _resolve_jobs(args) -> int:
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    env_value = os.environ.get(JOBS_ENV_VAR, "")
    if env_value.strip():
        try:
            return max(1, int(env_value))
        except ValueError as exc:
            raise ConfigError(f"{JOBS_ENV_VAR} must be an integer, got {env_value!r}") from exc
    return 1


def _out_dir(args, config: dict) -> Path:
    if args.out:
        return Path(args.out)
    if "output_dir" in config:
        return Path(config["output_dir"])
    raise ConfigError("no output directory: pass --out or set output_dir in the config")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _dataset_path(out: Path, index: int) -> Path:
    return out / "datasets" / f"seed_{index:04d}.jsonl"


def cmd_generate(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    mdp, behavior = _build_env(config)
    num_seeds = args.seeds if args.seeds is not None else config["seeds"]
    if num_seeds == 0:
        print("no seeds requested; nothing to write")
        return 0
    spec = config["dataset"]
    master_seeds = []
    for i in range(num_seeds):
        master = spec["master_seed"] + i
        master_seeds.append(master)
        dataset = simulate(mdp, behavior, spec["num_trajectories"], spec["horizon"], master)
        save_dataset(dataset, _dataset_path(out, i))
    _write_json(
        out / "datasets" / "meta.json",
        {
            "config_hash": config_hash(config),
            "environment": mdp.name,
            "num_datasets": num_seeds,
            "master_seeds": master_seeds,
        },
    )
    print(f"wrote {num_seeds} dataset(s) under {out / 'datasets'}")
    return 0


def _load_policy_file(path: Path):
    text = path.read_text(encoding="utf-8")
    payload = json.loads(text)
    if payload.get("kind") == "decision-point":
        return DecisionPointPolicy.from_json(text)
    return BaselinePolicy.from_json(text)


def cmd_train(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    mdp, behavior = _build_env(config)
    specs = {spec.label: spec for spec in _algorithm_specs(config)}
    if args.algorithm not in specs:
        raise ConfigError(
            f"unknown algorithm label {args.algorithm!r}; configured: {sorted(specs)}"
        )
    dataset = load_dataset(args.dataset, num_states=mdp.num_states, num_actions=mdp.num_actions)
    learned, defer_fraction = train_algorithm(specs[args.algorithm], dataset, mdp, behavior)
    if learned is None:
        learned = BaselinePolicy(
            action_probabilities=behavior.action_probabilities, kind="behavior", params={}
        )
    path = out / f"policy_{args.algorithm}.json"
    learned.save(path)
    print(f"trained {args.algorithm}: defer_fraction={defer_fraction:.6f} -> {path}")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    mdp, behavior = _build_env(config)
    policy = _load_policy_file(Path(args.policy))
    learned = None if getattr(policy, "kind", "") == "behavior" else policy
    value = exact_value(mdp, MixedPolicy(learned, behavior))
    behavior_value = exact_value(mdp, MixedPolicy(None, behavior))
    payload = {
        "config_hash": config_hash(config),
        "environment": mdp.name,
        "policy_file": Path(args.policy).name,
        "value": value,
        "behavior_value": behavior_value,
        "improvement": value - behavior_value,
    }
    _write_json(out / "evaluation.json", payload)
    print(f"value={value!r} behavior={behavior_value!r}")
    return 0


def cmd_bounds(args) -> int:
    config = load_config(args.config)
    if "bounds" not in config:
        raise ConfigError("config has no 'bounds' section")
    out = _out_dir(args, config)
    mdp, behavior = _build_env(config)
    spec = config["dataset"]
    dataset = simulate(mdp, behavior, spec["num_trajectories"], spec["horizon"], spec["master_seed"])
    first = count_visits(dataset, mode=FIRST_VISIT)
    every = count_visits(dataset, mode=EVERY_VISIT)
    section = config["bounds"]
    rows = bound_comparison_rows(
        first,
        pessimism_counts=every,
        v_max=mdp.v_max,
        gamma=mdp.gamma,
        delta=section["delta"],
        n_wedge_grid=[int(x) for x in section["n_wedge_grid"]],
        num_states=mdp.num_states,
        num_actions=mdp.num_actions,
        pqi_b=section["pqi_b"],
        dataset_size=len(dataset),
        variant=section.get("variant", VARIANT_STATEMENT),
    )
    _write_csv(
        out / "bounds.csv",
        ["method", "n_wedge", "b", "num_states", "c_n_wedge", "bound", "note"],
        rows,
    )
    print(f"wrote {len(rows)} bound rows -> {out / 'bounds.csv'}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    mdp, behavior = _build_env(config)
    num_seeds = args.seeds if args.seeds is not None else config["seeds"]
    spec = config["dataset"]
    result = run_reliability_experiment(
        mdp,
        behavior,
        _algorithm_specs(config),
        num_seeds=num_seeds,
        num_trajectories=spec["num_trajectories"],
        horizon=spec["horizon"],
        master_seed=spec["master_seed"],
        jobs=_resolve_jobs(args),
        config_hash=config_hash(config),
    )
    rows = []
    for i, seed in enumerate(result.seeds):
        for label in result.labels:
            rows.append(
                {
                    "seed": seed,
                    "algorithm": label,
                    "value": result.values[label][i],
                    "defer_fraction": result.defer_fractions[label][i],
                }
            )
    _write_csv(out / "per_seed.csv", ["seed", "algorithm", "value", "defer_fraction"], rows)
    _write_json(out / "summary.json", result.summary())
    print(f"swept {num_seeds} seed(s) x {len(result.labels)} algorithm(s) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dprl",
        description="Safe offline policy improvement: datasets, training, evaluation, bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, jobs: bool = False, seeds: bool = False) -> None:
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if seeds:
            p.add_argument("--seeds", type=int, default=None, help="override config seed count")
        if jobs:
            p.add_argument("--jobs", type=int, default=None, help="worker processes")

    p = sub.add_parser("generate", help="write per-seed trajectory datasets")
    common(p, jobs=True, seeds=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one configured algorithm on a dataset file")
    common(p)
    p.add_argument("--dataset", required=True, help="line-delimited trajectory file")
    p.add_argument("--algorithm", required=True, help="algorithm label from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="exact value of a saved policy")
    common(p)
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bounds", help="emit the bound-comparison table")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="seeded reliability experiment")
    common(p, jobs=True, seeds=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface anything else as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
