"""Command-line entry points: run, experiment, analyze, replay, serve.

Exit codes: 0 success, 2 usage/config error, 3 data-integrity error,
4 runtime failure.  All randomness flows from an explicit --seed; without the
flag a seed is derived and printed so the run stays reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import socket
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .agents import QLearningParams
from .analysis import (
    cross_cluster_matrix,
    diagonal_dominant_rows,
    elbow_k,
    kmeans,
    segment_summaries,
    wilcoxon_signed_rank,
)
from .content import apply_action, normalized_vector
from .patients import PatientModel, persona, random_patient
from .reward import RewardParams, reward as reward_fn
from .session import (
    EngineParams,
    SessionPlan,
    SessionTrace,
    TraceError,
    default_plan,
    load_trace,
    run_experiment,
    run_session,
    save_trace,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3
EXIT_RUNTIME = 4

CONFIG_VERSION = 1

_PATIENT_SPEC_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"persona": {"type": "integer", "minimum": 0, "maximum": 7}},
            "required": ["persona"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"random": {"type": "integer"}},
            "required": ["random"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"sensitivity": {"type": "array"}},
            "required": ["sensitivity"],
        },
    ]
}

_PARAM_PROPS = {
    "sigma": {"type": "number", "exclusiveMinimum": 0},
    "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "plan": {"type": "object"},
        "first_adapter": {"enum": ["rl", "rules"]},
        "patient": _PATIENT_SPEC_SCHEMA,
        "manual": {"type": "boolean"},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        **_PARAM_PROPS,
    },
    "required": ["version"],
    "additionalProperties": False,
}

EXPERIMENT_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "patients": {"type": "array", "items": _PATIENT_SPEC_SCHEMA, "minItems": 1},
        "seeds": {
            "oneOf": [
                {"type": "integer", "minimum": 1},
                {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            ]
        },
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        **_PARAM_PROPS,
    },
    "required": ["version", "patients"],
    "additionalProperties": False,
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config(path: str, schema: dict) -> dict:
    try:
        with open(path) as f:
            config = json.load(f)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}")
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "top level"
        raise CliError(f"config {path} invalid at {where}: {exc.message}")
    return config


def _resolve_patient(spec: dict) -> PatientModel:
    if set(spec) == {"persona"}:
        return persona(int(spec["persona"]))
    if set(spec) == {"random"}:
        return random_patient(int(spec["random"]))
    return PatientModel.from_json(spec)


def _engine_params(config: dict) -> EngineParams:
    ql = QLearningParams()
    return EngineParams(
        reward=RewardParams(sigma=float(config.get("sigma", RewardParams().sigma))),
        qlearning=QLearningParams(
            epsilon=float(config.get("epsilon", ql.epsilon)),
            alpha=float(config.get("alpha", ql.alpha)),
            gamma=float(config.get("gamma", ql.gamma)),
        ),
    )


def _pick_seed(args_seed: Optional[int], config_seed: Optional[int]) -> int:
    if args_seed is not None:
        return args_seed
    if config_seed is not None:
        return config_seed
    seed = secrets.randbelow(2**31)
    print(f"derived seed: {seed}")
    return seed


def _write_json(path: Path, payload: dict) -> None:
    """Atomic JSON write: temp file in the target directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- run ---------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config, RUN_CONFIG_SCHEMA)
    if config.get("manual"):
        raise CliError("manual sessions need the live service; use the serve command")
    if "patient" not in config:
        raise CliError("run config needs a patient")
    model = _resolve_patient(config["patient"])
    plan = (
        SessionPlan.from_json(config["plan"])
        if "plan" in config
        else default_plan(config.get("first_adapter", "rl"))
    )
    seed = _pick_seed(args.seed, config.get("seed"))
    out = Path(args.out or config.get("out") or f"trace-{model.name}-seed{seed}")
    if out.exists():
        raise CliError(f"output directory {out} already exists")
    try:
        trace = run_session(model, plan, _engine_params(config), seed=seed)
        save_trace(out, trace)
    except CliError:
        raise
    except Exception as exc:
        raise CliError(f"session failed: {type(exc).__name__}: {exc}", EXIT_RUNTIME)
    summary = {
        "trace": str(out),
        "outcome": trace.outcome,
        "steps": len(trace.steps),
        "seed": seed,
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"wrote {out} ({len(trace.steps)} steps, outcome {trace.outcome})")
    return EXIT_OK


# -- experiment --------------------------------------------------------------


def _experiment_seeds(config: dict, args: argparse.Namespace, base_seed: int) -> list[int]:
    if args.seeds is not None:
        count = args.seeds
    else:
        spec = config.get("seeds", 1)
        if isinstance(spec, list):
            return [int(s) for s in spec]
        count = int(spec)
    return [base_seed + i for i in range(count)]


def _one_replicate(job: tuple[list[dict], dict, int]) -> dict:
    patient_specs, config, seed = job
    population = [_resolve_patient(s) for s in patient_specs]
    results = run_experiment(population, _engine_params(config), seed=seed)
    rl_high, rules_high = [], []
    per_patient = {}
    for name, trace in results.traces:
        highs = {"rl": None, "rules": None}
        for summary in segment_summaries(trace):
            if summary.segment == "high":
                highs[summary.method] = summary.mse_level
        per_patient[name] = highs
        if highs["rl"] is not None:
            rl_high.append(highs["rl"])
        if highs["rules"] is not None:
            rules_high.append(highs["rules"])
    return {
        "seed": seed,
        "rl_high_mse_mean": float(np.mean(rl_high)) if rl_high else None,
        "rules_high_mse_mean": float(np.mean(rules_high)) if rules_high else None,
        "per_patient": per_patient,
        "failures": results.failures,
    }


def _experiment_report(replicates: list[dict]) -> dict:
    rl = [r["rl_high_mse_mean"] for r in replicates if r["rl_high_mse_mean"] is not None]
    rules = [r["rules_high_mse_mean"] for r in replicates if r["rules_high_mse_mean"] is not None]
    wins = sum(1 for a, b in zip(rl, rules) if a < b)
    report = {
        "version": CONFIG_VERSION,
        "replicates": replicates,
        "pooled": {
            "rl_high_mse_mean": float(np.mean(rl)),
            "rules_high_mse_mean": float(np.mean(rules)),
            "ratio": float(np.mean(rl) / np.mean(rules)) if np.mean(rules) > 0 else None,
            "rl_wins": wins,
            "n_seeds": len(replicates),
        },
    }
    # Paired per-patient comparison pooled over replicates.
    pairs = []
    for r in replicates:
        for highs in r["per_patient"].values():
            if highs["rl"] is not None and highs["rules"] is not None:
                pairs.append((highs["rl"], highs["rules"]))
    if len(pairs) >= 5:
        try:
            res = wilcoxon_signed_rank(pairs)
            report["wilcoxon"] = {
                "w": res.w,
                "p": res.p,
                "p_one_sided": res.p_one_sided,
                "n_effective": res.n_effective,
                "exact": res.exact,
            }
        except ValueError:
            report["wilcoxon"] = None
    return report


def _experiment_markdown(report: dict) -> str:
    pooled = report["pooled"]
    lines = [
        "# Method comparison",
        "",
        "High-segment MSE of the discretized anxiety estimate against the desired level.",
        "",
        "| seed | RL | rules |",
        "|------|----|-------|",
    ]
    for r in report["replicates"]:
        lines.append(f"| {r['seed']} | {r['rl_high_mse_mean']:.3f} | {r['rules_high_mse_mean']:.3f} |")
    lines += [
        "",
        f"Pooled mean: RL {pooled['rl_high_mse_mean']:.3f}, rules {pooled['rules_high_mse_mean']:.3f}"
        f" (ratio {pooled['ratio']:.3f}); RL lower in {pooled['rl_wins']}/{pooled['n_seeds']} seeds.",
    ]
    if report.get("wilcoxon"):
        w = report["wilcoxon"]
        kind = "exact" if w["exact"] else "approximate"
        lines.append(f"Signed-rank test over per-patient pairs: W={w['w']:.1f}, p={w['p']:.4g} ({kind}).")
    lines.append("")
    return "\n".join(lines)


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _load_config(args.config, EXPERIMENT_CONFIG_SCHEMA)
    base_seed = _pick_seed(args.seed, config.get("seed"))
    seeds = _experiment_seeds(config, args, base_seed)
    out = Path(args.out or config.get("out") or "experiment-report")
    jobs = [(config["patients"], config, s) for s in seeds]
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                replicates = list(pool.map(_one_replicate, jobs))
        else:
            replicates = [_one_replicate(job) for job in jobs]
    except Exception as exc:
        raise CliError(f"experiment failed: {type(exc).__name__}: {exc}", EXIT_RUNTIME)
    report = _experiment_report(replicates)
    report["seeds"] = seeds
    _write_json(out / "report.json", report)
    _write_text(out / "report.md", _experiment_markdown(report))
    if args.json:
        print(json.dumps(report["pooled"]))
    else:
        pooled = report["pooled"]
        print(
            f"wrote {out}/report.json: RL {pooled['rl_high_mse_mean']:.3f}"
            f" vs rules {pooled['rules_high_mse_mean']:.3f} over {len(seeds)} seed(s)"
        )
    return EXIT_OK


# -- analyze -----------------------------------------------------------------


def _patient_name(trace: SessionTrace) -> str:
    patient = trace.meta.get("patient")
    return patient["name"] if patient else "manual"


def cmd_analyze(args: argparse.Namespace) -> int:
    traces: list[tuple[str, SessionTrace]] = []
    for dir_path in args.traces:
        try:
            trace = load_trace(dir_path)
        except TraceError as exc:
            raise CliError(str(exc))
        traces.append((dir_path, trace))
    out = Path(args.out)
    report: dict = {"version": CONFIG_VERSION, "traces": {}}
    for dir_path, trace in traces:
        report["traces"][dir_path] = {
            "patient": _patient_name(trace),
            "outcome": trace.outcome,
            "segments": [
                {
                    "method": s.method,
                    "segment": s.segment,
                    "mse_level": s.mse_level,
                    "mean_estimate": s.mean_estimate,
                    "scr_count": s.scr.peak_count,
                    "scr_mean_amplitude": s.scr.mean_amplitude,
                    "scr_sum_amplitude": s.scr.sum_amplitude,
                }
                for s in segment_summaries(trace)
            ],
        }

    by_patient: dict[str, list[SessionTrace]] = {}
    for _, trace in traces:
        by_patient.setdefault(_patient_name(trace), []).append(trace)
    if len(by_patient) < 2:
        report["clustering"] = "skipped: need traces from at least 2 patients"
    else:
        points = []
        for patient_traces in by_patient.values():
            steps = [s for tr in patient_traces for s in tr.steps]
            top = max(steps, key=lambda s: s.estimate)
            points.append(list(normalized_vector(top.config)))
        k_hint = elbow_k(points, range(1, min(12, len(points)) + 1), seed=args.cluster_seed)
        model = kmeans(points, k_hint, seed=args.cluster_seed)
        matrix, patient_clusters = cross_cluster_matrix(by_patient, model)
        report["clustering"] = {
            "elbow_k": k_hint,
            "centroids": model.centroids.tolist(),
            "patients": {
                name: cluster for name, cluster in zip(by_patient, patient_clusters)
            },
            "cross_cluster_matrix": [
                [None if np.isnan(v) else float(v) for v in row] for row in matrix
            ],
            "diagonal_dominant_rows": diagonal_dominant_rows(matrix),
        }
    _write_json(out / "report.json", report)
    if args.json:
        print(json.dumps({"report": str(out / "report.json"), "n_traces": len(traces)}))
    else:
        notice = "" if len(by_patient) >= 2 else " (clustering skipped)"
        print(f"wrote {out}/report.json for {len(traces)} trace(s){notice}")
    return EXIT_OK


# -- replay ------------------------------------------------------------------


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        trace = load_trace(args.trace)
    except TraceError as exc:
        raise CliError(str(exc))
    sigma = float(trace.meta.get("params", {}).get("reward_sigma", RewardParams().sigma))
    params = RewardParams(sigma=sigma)
    step_interval = float(trace.meta["plan"].get("step_interval_s", 4.0))
    for i, step in enumerate(trace.steps, start=1):
        expected = reward_fn(step.estimate, step.desired, params)
        if abs(expected - step.reward) > 1e-6:
            raise CliError(
                f"step {i} (t={step.t_s:.3f}): logged reward {step.reward:.6f}"
                f" != recomputed {expected:.6f}",
                EXIT_INTEGRITY,
            )
    for i in range(len(trace.steps) - 1):
        prev, nxt = trace.steps[i], trace.steps[i + 1]
        if prev.phase_index != nxt.phase_index:
            continue
        if abs(nxt.phase_t_s - prev.phase_t_s - step_interval) > 1e-6:
            continue
        try:
            expected_config = apply_action(prev.config, prev.action) if prev.action else prev.config
        except ValueError:
            raise CliError(
                f"step {i + 1} (t={prev.t_s:.3f}): logged action"
                f" {prev.action.label()} does not follow from config {prev.config.to_list()}",
                EXIT_INTEGRITY,
            )
        if expected_config != nxt.config:
            raise CliError(
                f"step {i + 2} (t={nxt.t_s:.3f}): config {nxt.config.to_list()} does not"
                f" follow from step {i + 1} action {prev.action.label() if prev.action else 'none'}",
                EXIT_INTEGRITY,
            )
    if args.json:
        print(json.dumps({"trace": args.trace, "steps": len(trace.steps), "consistent": True}))
    else:
        print(f"{args.trace}: {len(trace.steps)} steps consistent")
    return EXIT_OK


# -- serve -------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_str = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_str)
    except ValueError:
        raise CliError(f"bad bind address {args.bind!r}; expected host:port")
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        raise CliError(f"cannot bind {args.bind}: {exc}")
    sock.listen(128)

    static_dir = Path(args.static) if args.static else None
    app = create_app(args.trace_root, allow_manual=args.manual, static_dir=static_dir)
    actual = sock.getsockname()
    print(f"serving on {actual[0]}:{actual[1]} (traces in {args.trace_root})", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    try:
        server.run(sockets=[sock])
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adex",
        description="Closed-loop adaptive exposure sessions with simulated EDA responders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one session from a JSON config and write a trace directory")
    p_run.add_argument("config", help="path to a run config (JSON, version 1)")
    p_run.add_argument("--seed", type=int, help="session seed; derived and printed if omitted")
    p_run.add_argument("--out", help="trace output directory (overrides config)")
    p_run.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p_run.set_defaults(func=cmd_run)

    p_exp = sub.add_parser("experiment", help="counterbalanced two-method comparison over a population")
    p_exp.add_argument("config", help="path to an experiment config (JSON, version 1)")
    p_exp.add_argument("--seed", type=int, help="base seed; derived and printed if omitted")
    p_exp.add_argument("--seeds", type=int, help="number of replicate seeds (base, base+1, ...)")
    p_exp.add_argument("--out", help="report output directory")
    p_exp.add_argument("--workers", type=int, default=1, help="parallel replicate workers")
    p_exp.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p_exp.set_defaults(func=cmd_experiment)

    p_ana = sub.add_parser("analyze", help="segment summaries and clustering over trace directories")
    p_ana.add_argument("traces", nargs="+", help="trace directories to analyze")
    p_ana.add_argument("--out", default="analysis-report", help="report output directory")
    p_ana.add_argument("--cluster-seed", type=int, default=0, help="seed for k-means/elbow")
    p_ana.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p_ana.set_defaults(func=cmd_analyze)

    p_rep = sub.add_parser("replay", help="verify a trace's internal consistency")
    p_rep.add_argument("trace", help="trace directory")
    p_rep.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p_rep.set_defaults(func=cmd_replay)

    p_srv = sub.add_parser("serve", help="serve live sessions over WebSocket/HTTP")
    p_srv.add_argument("--bind", default="127.0.0.1:8714", help="host:port to listen on")
    p_srv.add_argument("--trace-root", default="service-traces", help="directory for persisted traces")
    p_srv.add_argument("--manual", action="store_true", help="permit manual-SUDs sessions")
    p_srv.add_argument("--static", help="directory with the operator console build to serve at /")
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
