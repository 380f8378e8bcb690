"""Batch experiment driver.

Subcommands: run (dispatch seeds, write per-seed CSVs plus summary.json),
check (schedule condition sets), lambda (momentum-reparameterization
analyzer), rates (fit decay exponents over a records directory),
oracle-check (envelope audits) and block-check (mask unbiasedness).

Exit codes encode pass/fail so CI can gate on them: 0 success, 1 a check or
trajectory failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis
from .block import policy_from_spec, verify_block_unbiasedness, mask_variance
from .lambda_appendix import (default_lambda0, iterate_lambda, verify_lemma_A1,
                              verify_lemma_A2)
from .objectives import objective_from_spec
from .oracles import audit_oracle, declared_envelope, oracle_from_spec
from .schedules import (check_power_law_conditions, check_sebbouh_conditions,
                        schedule_from_spec)
from .unified import (ParameterValidationError, UnifiedParams, custom_params,
                      run as run_trajectory, sgd_params, shb_params, snag_params,
                      validate_params)
from ._rng import STREAM_PROBE, Substreams

ENV_OUT = "MOMENTA_DEFAULT_OUT"
CONDITION_SET_NAMES = ("rm", "kwb", "theorem21", "sebbouh")


class ConfigError(ValueError):
    """Invalid configuration; carries a JSON-pointer to the offending node."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


# ---------------------------------------------------------------------------
# Config handling


def canonicalize(node, pointer: str = ""):
    """Key-sorted, numerically normalized copy of a JSON tree.

    Integral floats collapse to ints so 1 and 1.0 hash identically;
    non-finite numbers are rejected.
    """
    if isinstance(node, dict):
        return {str(k): canonicalize(v, f"{pointer}/{k}") for k, v in sorted(node.items())}
    if isinstance(node, (list, tuple)):
        return [canonicalize(v, f"{pointer}/{i}") for i, v in enumerate(node)]
    if isinstance(node, bool) or node is None or isinstance(node, (int, str)):
        return node
    if isinstance(node, float):
        if not math.isfinite(node):
            raise ConfigError(pointer or "/", f"non-finite number {node!r}")
        if node == int(node) and abs(node) < 2**53:
            return int(node)
        return node
    raise ConfigError(pointer or "/", f"unsupported value type {type(node).__name__}")


HASHED_KEYS = ("objective", "oracle", "block", "params", "init", "horizon")


def config_hash(config: dict) -> str:
    """Stable digest of the canonicalized trajectory-defining fields."""
    payload = {k: config[k] for k in HASHED_KEYS if k in config}
    blob = json.dumps(canonicalize(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def params_from_spec(spec: dict) -> UnifiedParams:
    if not isinstance(spec, dict):
        raise ConfigError("/params", "must be an object")
    preset = spec.get("preset", "custom")

    def sched(key):
        if key not in spec:
            raise ConfigError(f"/params/{key}", f"required for preset {preset!r}")
        try:
            return schedule_from_spec(spec[key])
        except ValueError as e:
            raise ConfigError(f"/params/{key}", str(e)) from e

    try:
        if preset == "shb":
            return shb_params(sched("mu"), sched("alpha"))
        if preset == "snag":
            return snag_params(sched("mu"), sched("alpha"))
        if preset == "sgd":
            return sgd_params(sched("alpha"))
        if preset == "custom":
            return custom_params(sched("a"), sched("b"), sched("eps"),
                                 sched("mu"), sched("alpha"))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("/params", str(e)) from e
    raise ConfigError("/params/preset", f"unknown preset {preset!r}")


def build_config(config: dict):
    """Validate a raw config dict and construct the run ingredients.

    Returns (objective, oracle, policy, params, w0, v0, horizon).  Raises
    ConfigError with a JSON-pointer location, or ParameterValidationError
    naming the violated parameter bound.
    """
    if not isinstance(config, dict):
        raise ConfigError("/", "config must be a JSON object")
    for key in ("objective", "oracle", "params", "horizon"):
        if key not in config:
            raise ConfigError(f"/{key}", "missing required field")

    try:
        objective = objective_from_spec(config["objective"])
    except ValueError as e:
        raise ConfigError("/objective", str(e)) from e
    try:
        oracle = oracle_from_spec(config["oracle"], objective)
    except ValueError as e:
        raise ConfigError("/oracle", str(e)) from e
    try:
        policy = policy_from_spec(config.get("block"))
    except ValueError as e:
        raise ConfigError("/block", str(e)) from e
    params = params_from_spec(config["params"])

    horizon = config["horizon"]
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError("/horizon", f"must be a positive integer, got {horizon!r}")

    init = config.get("init", {})
    w0 = np.asarray(init.get("w", np.ones(objective.dimension)), dtype=float)
    v0 = np.asarray(init["v"], dtype=float) if "v" in init else None
    if w0.shape != (objective.dimension,):
        raise ConfigError("/init/w", f"length {w0.shape} does not match objective "
                                     f"dimension {objective.dimension}")
    if v0 is not None and v0.shape != w0.shape:
        raise ConfigError("/init/v", "length does not match /init/w")

    # Parameter box constraints over (a capped window of) the horizon, and
    # one oracle envelope evaluation to surface bad increments early.
    validate_params(params, min(horizon, 20_000))
    declared_envelope(oracle, 0)
    declared_envelope(oracle, horizon)
    return objective, oracle, policy, params, w0, v0, horizon


def apply_overrides(config: dict, overrides) -> dict:
    """Apply --override dotted.key=value entries; values parse as JSON first."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("/", f"override {item!r} must look like dotted.key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        keys = path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError("/" + "/".join(keys), f"cannot descend into {key!r}")
        node[keys[-1]] = value
    return config


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"/(line {e.lineno}, column {e.colno})", e.msg) from e
    except OSError as e:
        raise ConfigError("/", f"cannot read config: {e}") from e


def resolve_out_dir(cli_out, config: dict) -> str:
    out = cli_out or config.get("out") or os.environ.get(ENV_OUT) or "momenta_out"
    os.makedirs(out, exist_ok=True)
    return out


def _dump_json(obj, path: str) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# run


def _run_one_seed(config: dict, seed: int, out_dir: str, digest: str) -> dict:
    objective, oracle, policy, params, w0, v0, horizon = build_config(config)
    record = run_trajectory(objective, oracle, params, (w0, v0), horizon,
                            seed=seed, block_policy=policy, config_hash=digest)
    csv_name = analysis.record_filename(digest[:12], seed)
    analysis.save_record_csv(record, os.path.join(out_dir, csv_name))
    summary = record.terminal_summary()
    summary["csv"] = csv_name
    return summary


def cmd_run(args) -> int:
    config = apply_overrides(load_config(args.config), args.override)
    build_config(config)  # fail fast, before any worker starts
    digest = config_hash(config)
    out_dir = resolve_out_dir(args.out, config)

    if args.seed_list:
        seeds = [int(s) for s in args.seed_list.split(",")]
    elif args.seeds is not None:
        seeds = list(range(args.seeds))
    else:
        seeds = [int(s) for s in config.get("seeds", [0])]

    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one_seed, config, s, out_dir, digest) for s in seeds]
            entries = [f.result() for f in futures]
    else:
        entries = [_run_one_seed(config, s, out_dir, digest) for s in seeds]

    n_diverged = sum(1 for e in entries if e["diverged"])
    summary = {
        "config": canonicalize(config),
        "config_hash": digest,
        "seeds": seeds,
        "n_diverged": n_diverged,
        "records": entries,
    }
    _dump_json(summary, os.path.join(out_dir, "summary.json"))
    print(json.dumps({"config_hash": digest, "out_dir": out_dir,
                      "n_records": len(entries), "n_diverged": n_diverged}))
    if n_diverged and not args.allow_divergence:
        print(f"error: {n_diverged} trajectory(ies) diverged", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# check


def _power_law_exponent(spec: dict, pointer: str) -> float:
    """Decay exponent of a schedule spec for analytic condition checking."""
    kind = spec.get("kind")
    if kind == "constant":
        return 0.0
    if kind in ("power_law", "seeded_random"):
        return float(spec.get("exponent", 0.0))
    raise ConfigError(pointer, f"analytic condition checks need a constant or power_law "
                               f"schedule, got kind {kind!r}")


def derive_exponents(config: dict) -> tuple:
    """(p_alpha, gamma, delta) from a run config's schedules and oracle kind.

    gamma is the decay exponent of the bias envelope (1.0 when the oracle is
    unbiased, the convention the rate bound uses) and delta the growth
    exponent of the noise envelope.
    """
    params = config.get("params", {})
    if "alpha" not in params:
        raise ConfigError("/params/alpha", "missing step-size schedule")
    p_alpha = -_power_law_exponent(params["alpha"], "/params/alpha")
    if p_alpha < 0:
        raise ConfigError("/params/alpha", "step size must not grow with t")

    oracle = config.get("oracle", {})
    kind = oracle.get("kind", "exact")
    if kind in ("spsa", "blum_fd"):
        q = -_power_law_exponent(oracle.get("increment", {"kind": "constant"}),
                                 "/oracle/increment")
        gamma, delta = q, q
    else:
        noise = oracle.get("noise_scale")
        delta = _power_law_exponent(noise, "/oracle/noise_scale") if noise else 0.0
        bias = oracle.get("bias_scale")
        has_bias = kind == "biased_additive" and bias and bias.get("coefficient", 0.0) != 0
        gamma = -_power_law_exponent(bias, "/oracle/bias_scale") if has_bias else 1.0
    return p_alpha, gamma, delta


def cmd_check(args) -> int:
    cset = args.set.lower()
    if cset == "sebbouh":
        if not args.eta:
            raise ConfigError("/", "--set sebbouh requires --eta")
        eta = schedule_from_spec(json.loads(args.eta))
        report = check_sebbouh_conditions(eta, args.horizon)
        print(json.dumps(report.to_dict(), indent=2))
        return 0 if report.satisfied else 1

    config = apply_overrides(load_config(args.config), args.override)
    p_alpha, gamma, delta = derive_exponents(config)
    set_name = {"rm": "RM", "kwb": "KWB", "theorem21": "Theorem21"}[cset]
    report = check_power_law_conditions(p_alpha, gamma, delta, set_name)
    out = report.to_dict()
    out["exponents"] = {"p_alpha": p_alpha, "gamma": gamma, "delta": delta}
    print(json.dumps(out, indent=2))
    return 0 if report.satisfied else 1


# ---------------------------------------------------------------------------
# lambda


def cmd_lambda(args) -> int:
    mu = schedule_from_spec(json.loads(args.mu))
    alpha = schedule_from_spec(json.loads(args.alpha))
    lam0 = args.lambda0 if args.lambda0 is not None else default_lambda0(mu)
    trace = iterate_lambda(mu, alpha, lam0, args.horizon)
    out_dir = resolve_out_dir(args.out, {})

    mus = mu.values(args.horizon)
    diffs = np.diff(mus)
    verdict = {"lambda0": lam0, "monotonicity": trace.monotonicity,
               "first_negative_eta_index": trace.first_negative_eta_index,
               "hypothesis_ok": True, "t_first": None, "t0_bound": None}
    if np.all(diffs == 0.0):
        verdict["lemma"] = "fixed_point"
    elif np.all(diffs < 0.0):
        verdict["lemma"] = "A1"
        try:
            verdict["t_first"] = verify_lemma_A1(mu, args.horizon, threshold=args.threshold)
        except AssertionError as e:
            verdict["hypothesis_ok"] = False
            verdict["detail"] = str(e)
    elif np.all(diffs > 0.0):
        verdict["lemma"] = "A2"
        try:
            t_first, t0 = verify_lemma_A2(mu, args.horizon, lambda0=lam0)
            verdict["t_first"] = t_first
            verdict["t0_bound"] = t0
        except (AssertionError, ValueError) as e:
            verdict["hypothesis_ok"] = False
            verdict["detail"] = str(e)
    else:
        verdict["lemma"] = "mixed"

    csv_path = os.path.join(out_dir, "lambda_trace.csv")
    with open(csv_path, "w", newline="\n") as f:
        f.write("t,lambda,eta,one_plus_lambda\n")
        for t in range(args.horizon):
            f.write(f"{t},{float(trace.lam[t])!r},{float(trace.eta[t])!r},"
                    f"{float(1.0 + trace.lam[t + 1])!r}\n")
    _dump_json(verdict, os.path.join(out_dir, "lambda_verdict.json"))
    print(json.dumps(verdict))
    return 0 if verdict["hypothesis_ok"] else 1


# ---------------------------------------------------------------------------
# rates

# A batch counts as rate-consistent when at least this fraction of its
# non-diverged records individually classify as consistent.
AGGREGATE_CONSISTENT_FRACTION = 0.9


def cmd_rates(args) -> int:
    records = analysis.load_records_dir(args.records)
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        print(f"error: records mix config hashes: {sorted(hashes)}", file=sys.stderr)
        return 2

    live = [r for r in records if not r.diverged]
    per_seed = {}
    for r in records:
        if r.diverged or r.rows < 100:
            per_seed[r.seed] = {"classification": "inconclusive", "diverged": r.diverged}
        else:
            per_seed[r.seed] = analysis.fit_rate(
                r, metric=args.metric, tail_fraction=args.tail_fraction,
                target_lambda=args.target_lambda).to_dict()

    consistent = [s for s, est in per_seed.items()
                  if est.get("classification") == "o_rate_consistent"]
    fraction = len(consistent) / len(live) if live else 0.0
    aggregate = ("o_rate_consistent"
                 if live and fraction >= AGGREGATE_CONSISTENT_FRACTION
                 else ("inconclusive" if not live else "inconsistent"))
    report = {
        "config_hash": records[0].config_hash,
        "metric": args.metric,
        "target_lambda": args.target_lambda,
        "tail_fraction": args.tail_fraction,
        "per_seed": {str(k): v for k, v in sorted(per_seed.items())},
        "n_records": len(records),
        "n_diverged": len(records) - len(live),
        "consistent_fraction": fraction,
        "aggregate_classification": aggregate,
    }
    _dump_json(report, os.path.join(args.out or args.records, "rate_report.json"))
    print(json.dumps({k: report[k] for k in
                      ("config_hash", "consistent_fraction", "aggregate_classification")}))
    return 0 if aggregate == "o_rate_consistent" else 1


# ---------------------------------------------------------------------------
# oracle-check / block-check


def cmd_oracle_check(args) -> int:
    config = apply_overrides(load_config(args.config), args.override)
    try:
        objective = objective_from_spec(config["objective"])
        oracle = oracle_from_spec(config["oracle"], objective)
    except (KeyError, ValueError) as e:
        raise ConfigError("/", f"oracle-check needs objective and oracle specs: {e}") from e

    rng = Substreams(args.seed).at(STREAM_PROBE)
    results = []
    all_pass = True
    for i in range(args.points):
        w = rng.uniform(-2.0, 2.0, objective.dimension)
        t = int(rng.integers(0, 101))
        audit = audit_oracle(oracle, w, t, args.replications)
        entry = audit.to_dict()
        entry.update({"point": w.tolist(), "t": t})
        results.append(entry)
        all_pass &= audit.passed
    print(json.dumps({"audits": results, "passed": all_pass}, indent=2))
    return 0 if all_pass else 1


def cmd_block_check(args) -> int:
    policy = policy_from_spec(json.loads(args.block))
    h = np.asarray(json.loads(args.h), dtype=float)
    deviation = verify_block_unbiasedness(policy, h, args.replications)
    threshold = 4.0 * math.sqrt(float(np.sum(mask_variance(policy, h))) / args.replications)
    passed = bool(deviation <= threshold)
    print(json.dumps({"deviation": deviation, "threshold_4se": threshold,
                      "replications": args.replications, "passed": passed}))
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momenta",
                                     description="momentum-iteration experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config across seeds")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    p_run.add_argument("--seed-list", help="comma-separated explicit seeds")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out")
    p_run.add_argument("--override", action="append", metavar="dotted.key=value")
    p_run.add_argument("--allow-divergence", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="schedule condition sets")
    p_check.add_argument("--config")
    p_check.add_argument("--set", default="rm", choices=CONDITION_SET_NAMES)
    p_check.add_argument("--eta", help="schedule JSON for --set sebbouh")
    p_check.add_argument("--horizon", type=int, default=10_000)
    p_check.add_argument("--override", action="append")
    p_check.set_defaults(func=cmd_check)

    p_lam = sub.add_parser("lambda", help="momentum reparameterization analyzer")
    p_lam.add_argument("--mu", required=True, help="momentum schedule JSON")
    p_lam.add_argument("--alpha", required=True, help="step-size schedule JSON")
    p_lam.add_argument("--lambda0", type=float)
    p_lam.add_argument("--horizon", type=int, default=1000)
    p_lam.add_argument("--threshold", type=float, default=1e6)
    p_lam.add_argument("--out")
    p_lam.set_defaults(func=cmd_lambda)

    p_rates = sub.add_parser("rates", help="fit decay rates over a records directory")
    p_rates.add_argument("--records", required=True)
    p_rates.add_argument("--metric", default="j_theta", choices=analysis.METRICS)
    p_rates.add_argument("--target-lambda", type=float, required=True)
    p_rates.add_argument("--tail-fraction", type=float, default=0.5)
    p_rates.add_argument("--out")
    p_rates.set_defaults(func=cmd_rates)

    p_oc = sub.add_parser("oracle-check", help="Monte-Carlo envelope audits")
    p_oc.add_argument("--config", required=True)
    p_oc.add_argument("--points", type=int, default=5)
    p_oc.add_argument("--replications", type=int, default=10_000)
    p_oc.add_argument("--seed", type=int, default=0)
    p_oc.add_argument("--override", action="append")
    p_oc.set_defaults(func=cmd_oracle_check)

    p_bc = sub.add_parser("block-check", help="mask unbiasedness check")
    p_bc.add_argument("--block", required=True, help="block policy JSON")
    p_bc.add_argument("--h", required=True, help="gradient vector JSON")
    p_bc.add_argument("--replications", type=int, default=100_000)
    p_bc.set_defaults(func=cmd_block_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ParameterValidationError as e:
        print(f"parameter validation failed: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
