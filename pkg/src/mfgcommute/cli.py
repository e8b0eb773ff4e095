"""Configuration-driven experiment runner.

Reads a JSON experiment config, runs the fictitious play solve for the
configured scenario, and writes machine-readable traces: CSV matrices for
day-by-day artifacts, JSON for scalar diagnostics.  Floats are serialized
with 17 significant digits so every artifact round-trips exactly and reruns
are diffable.  Exit codes: 0 success, 1 config error, 2 solver failure.

The only environment knob is MFG_LOG (off|info|debug) for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bottleneck import bottleneck_cost_model, load_spec
from .core import (
    InvalidInputError,
    SolverFailure,
    check_distribution,
    dist_distance,
    forward_propagate,
    seq_distance,
    uniform_distribution,
)
from .fictitious import FPConfig, fictitious_play
from .route import RouteInertiaSpec, link_flows, load_network, logit_sue, route_cost_model
from .stationary import (
    augmented_cost_profile,
    omega_bound_check,
    sdsue_check,
    smfe_residuals,
    solve_smfe,
    value_gap_check,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run_experiment", "compare_smfe", "main"]

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """A config file field is missing or malformed; names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


@dataclass
class ExperimentConfig:
    scenario: str
    scenario_file: str
    horizon: int
    theta: float
    epsilon: float | None
    inertia_kind: str
    mu0: object  # "uniform" or list of floats
    max_iters: int
    exploitability_tol: float
    record_trace: bool
    outputs: str
    seed: int
    policy_days: list[int] | None
    base_dir: Path

    @property
    def scenario_path(self) -> Path:
        p = Path(self.scenario_file)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "scenario_file": self.scenario_file,
            "horizon": self.horizon,
            "theta": self.theta,
            "epsilon": self.epsilon,
            "inertia_kind": self.inertia_kind,
            "mu0": self.mu0,
            "solver": {
                "max_iters": self.max_iters,
                "exploitability_tol": self.exploitability_tol,
                "record_trace": self.record_trace,
            },
            "outputs": self.outputs,
            "seed": self.seed,
            "policy_days": self.policy_days,
        }


def _require(raw: dict, name: str):
    if name not in raw:
        raise ConfigError(name, "missing")
    return raw[name]


def _as_number(value, name, kind=float):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None


def config_from_dict(raw: dict, base_dir: Path) -> ExperimentConfig:
    scenario = _require(raw, "scenario")
    if scenario not in ("route", "bottleneck"):
        raise ConfigError("scenario", f"must be 'route' or 'bottleneck', got {scenario!r}")
    horizon = _as_number(_require(raw, "horizon"), "horizon", int)
    if horizon < 1:
        raise ConfigError("horizon", "must be >= 1")
    theta = _as_number(_require(raw, "theta"), "theta")
    if not theta > 0.0:
        raise ConfigError("theta", "must be > 0")
    epsilon = raw.get("epsilon")
    if epsilon is not None:
        epsilon = _as_number(epsilon, "epsilon")
        if epsilon < 0.0:
            raise ConfigError("epsilon", "must be >= 0")
    if scenario == "route" and epsilon is None:
        raise ConfigError("epsilon", "required for the route scenario")
    inertia_kind = raw.get("inertia_kind", "indicator" if scenario == "route" else "shift")
    if scenario == "route" and inertia_kind not in ("indicator", "overlap"):
        raise ConfigError("inertia_kind", f"must be 'indicator' or 'overlap', got {inertia_kind!r}")
    if scenario == "bottleneck" and inertia_kind != "shift":
        raise ConfigError("inertia_kind", "bottleneck inertia is always 'shift'")
    mu0 = raw.get("mu0", "uniform")
    if mu0 != "uniform":
        if not isinstance(mu0, list):
            raise ConfigError("mu0", "must be 'uniform' or a list of floats")
        mu0 = [_as_number(x, "mu0") for x in mu0]
    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("solver", "must be an object")
    max_iters = _as_number(solver.get("max_iters", 500), "solver.max_iters", int)
    tol = _as_number(solver.get("exploitability_tol", 1e-6), "solver.exploitability_tol")
    record_trace = solver.get("record_trace", True)
    if not isinstance(record_trace, bool):
        raise ConfigError("solver.record_trace", "must be a boolean")
    policy_days = raw.get("policy_days")
    if policy_days is not None:
        if not isinstance(policy_days, list):
            raise ConfigError("policy_days", "must be a list of day indices")
        policy_days = [_as_number(d, "policy_days", int) for d in policy_days]
        for d in policy_days:
            if not 0 <= d < horizon:
                raise ConfigError("policy_days", f"day {d} outside horizon")
    return ExperimentConfig(
        scenario=scenario,
        scenario_file=str(_require(raw, "scenario_file")),
        horizon=horizon,
        theta=theta,
        epsilon=epsilon,
        inertia_kind=inertia_kind,
        mu0=mu0,
        max_iters=max_iters,
        exploitability_tol=tol,
        record_trace=record_trace,
        outputs=str(raw.get("outputs", "out")),
        seed=_as_number(raw.get("seed", 0), "seed", int),
        policy_days=policy_days,
        base_dir=base_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(raw, path.resolve().parent)


def build_scenario(cfg: ExperimentConfig):
    """Instantiate the cost model and scenario object named by the config."""
    try:
        if cfg.scenario == "route":
            net = load_network(cfg.scenario_path)
            inertia = RouteInertiaSpec(kind=cfg.inertia_kind, epsilon=cfg.epsilon)
            return route_cost_model(net, cfg.theta, inertia), net
        spec = load_spec(cfg.scenario_path)
        if cfg.epsilon is not None:
            spec = replace(spec, epsilon=cfg.epsilon)
        return bottleneck_cost_model(spec, cfg.theta), spec
    except (OSError, InvalidInputError) as exc:
        raise ConfigError("scenario_file", str(exc)) from exc


def _resolve_mu0(cfg: ExperimentConfig, m: int) -> np.ndarray:
    if cfg.mu0 == "uniform":
        return uniform_distribution(m)
    arr = np.asarray(cfg.mu0, dtype=float)
    if arr.shape != (m,):
        raise ConfigError("mu0", f"needs {m} entries for this scenario, got {arr.shape}")
    try:
        return check_distribution(arr, "mu0")
    except InvalidInputError as exc:
        raise ConfigError("mu0", str(exc)) from exc


# ---------------------------------------------------------------------------
# deterministic serialization (floats at 17 significant digits)


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return "null"
    return f"{x:.17g}"


def _json_value(value, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt_float(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{inner}{_json_value(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_json_value(v, indent + 1)}"
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dump_json(obj, path: Path) -> None:
    path.write_text(_json_value(obj, 0) + "\n")


def write_csv(matrix, path: Path) -> None:
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [",".join(_fmt_float(v) for v in row) for row in arr]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment runner


def _augmented_flatness(avg_mf, cm):
    out = []
    for n in range(avg_mf.shape[0]):
        mu = avg_mf[n]
        if np.any(mu <= 0.0):
            out.append(None)
            continue
        profile = augmented_cost_profile(mu, cm.travel_cost_vector(mu), cm.theta)
        out.append(float(profile.max() - profile.min()))
    return out


def _smfe_summary(cm, avg_mf, max_outer=5_000):
    """Bounded stationary solve for the diagnostics file; never raises."""
    try:
        pair = solve_smfe(cm, max_outer=max_outer, fallback=False)
        r1, r2 = smfe_residuals(pair, cm)
        return {
            "converged": True,
            "r1": r1,
            "r2": r2,
            "lambda_bar": pair.lambda_bar,
            "df_last_day": dist_distance(pair.mu_bar, avg_mf[-1]),
        }
    except SolverFailure as exc:
        payload = exc.payload or {}
        return {
            "converged": False,
            "r1": payload.get("r1"),
            "r2": payload.get("r2"),
            "lambda_bar": payload.get("lambda_bar"),
            "df_last_day": (
                dist_distance(payload["mu_bar"], avg_mf[-1]) if "mu_bar" in payload else None
            ),
        }


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> int:
    """Run the configured experiment and write its artifact files."""
    started = time.perf_counter()
    cm, scen = build_scenario(cfg)
    mu0 = _resolve_mu0(cfg, cm.M)
    out = Path(out_dir) if out_dir is not None else Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)

    fp_cfg = FPConfig(
        mu0=mu0,
        horizon=cfg.horizon,
        max_iters=cfg.max_iters,
        exploitability_tol=cfg.exploitability_tol,
        record_trace=cfg.record_trace,
    )
    report = fictitious_play(cm, fp_cfg)

    write_csv(report.avg_mf, out / "mf_trace.csv")
    write_csv(report.value_seq, out / "values.csv")
    days = cfg.policy_days if cfg.policy_days else [0, cfg.horizon - 1]
    for n in sorted(set(days)):
        write_csv(report.avg_policy[n], out / f"policy_day_{n}.csv")
    write_csv(
        np.asarray(report.exploitability_trace, dtype=float).reshape(-1, 1),
        out / "exploitability.csv",
    )

    diagnostics = {
        "augmented_cost_flatness": _augmented_flatness(report.avg_mf, cm),
        "smfe": _smfe_summary(cm, report.avg_mf),
        "omega_bound": {
            "passed": omega_bound_check(report.avg_mf, cm),
            "theta": cm.theta,
            "bound_C": cm.bound_C,
        },
    }
    if cfg.scenario == "route":
        diagnostics["link_flow_trace"] = [
            [float(v) for v in link_flows(report.avg_mf[n], scen)]
            for n in range(cfg.horizon)
        ]
    dump_json(diagnostics, out / "diagnostics.json")

    runtime = time.perf_counter() - started
    dump_json(
        {
            "converged": report.converged,
            "iterations_run": report.iterations_run,
            "final_exploitability": (
                report.exploitability_trace[-1] if report.exploitability_trace else None
            ),
            "consistency_residual": seq_distance(
                forward_propagate(report.avg_policy, mu0), report.avg_mf
            ),
            "runtime_seconds": runtime,
            "config": cfg.to_dict(),
        },
        out / "report.json",
    )
    logger.info("experiment artifacts written to %s", out)
    return 0


def compare_smfe(cfg: ExperimentConfig, out_dir=None) -> int:
    """Solve the stationary pair, compare with the day-to-day run, write smfe.json."""
    cm, scen = build_scenario(cfg)
    mu0 = _resolve_mu0(cfg, cm.M)
    out = Path(out_dir) if out_dir is not None else Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)

    report = fictitious_play(
        cm,
        FPConfig(
            mu0=mu0,
            horizon=cfg.horizon,
            max_iters=cfg.max_iters,
            exploitability_tol=cfg.exploitability_tol,
            record_trace=False,
        ),
    )

    payload: dict = {"converged": False}
    code = 0
    try:
        pair = solve_smfe(cm)
        r1, r2 = smfe_residuals(pair, cm)
        payload = {
            "converged": True,
            "V_bar": pair.V_bar,
            "mu_bar": pair.mu_bar,
            "lambda_bar": pair.lambda_bar,
            "r1": r1,
            "r2": r2,
            "sdsue_residual": sdsue_check(pair.mu_bar, pair.pi_bar),
            "df_per_day": [
                dist_distance(report.avg_mf[n], pair.mu_bar) for n in range(cfg.horizon)
            ],
        }
        if cfg.scenario == "route" and cfg.inertia_kind == "indicator":
            payload["value_gap_check"] = value_gap_check(pair, cm)
        if cfg.scenario == "route" and cfg.epsilon == 0.0:
            try:
                sue = logit_sue(scen, cfg.theta)
                payload["df_to_logit_sue"] = dist_distance(pair.mu_bar, sue)
            except SolverFailure as exc:
                payload["df_to_logit_sue"] = None
                logger.warning("logit SUE benchmark failed: %s", exc)
    except SolverFailure as exc:
        data = exc.payload or {}
        payload = {
            "converged": False,
            "r1": data.get("r1"),
            "r2": data.get("r2"),
            "lambda_bar": data.get("lambda_bar"),
            "mu_bar": data.get("mu_bar"),
            "V_bar": data.get("V_bar"),
        }
        code = 2
        logger.warning("stationary solve failed: %s", exc)
    dump_json(payload, out / "smfe.json")
    return code


# ---------------------------------------------------------------------------
# entry point


def _setup_logging():
    level = os.environ.get("MFG_LOG", "off").lower()
    if level == "debug":
        logging.basicConfig(level=logging.DEBUG)
    elif level == "info":
        logging.basicConfig(level=logging.INFO)


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="mfgcommute",
        description="Day-to-day commute evolution as a mean field game",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write its artifacts")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.add_argument(
        "--policy-days", default=None, help="comma-separated day indices to dump"
    )

    p_smfe = sub.add_parser("smfe", help="stationary-equilibrium comparison")
    p_smfe.add_argument("--config", required=True)
    p_smfe.add_argument("--out", default=None)

    p_val = sub.add_parser("validate", help="dry-run schema check of a config")
    p_val.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            cm, _ = build_scenario(cfg)
            _resolve_mu0(cfg, cm.M)
            print(f"config OK: {args.config}")
            return 0
        if args.command == "run":
            if args.policy_days is not None:
                try:
                    days = [int(d) for d in args.policy_days.split(",") if d.strip()]
                except ValueError:
                    raise ConfigError("policy_days", "expected comma-separated integers")
                for d in days:
                    if not 0 <= d < cfg.horizon:
                        raise ConfigError("policy_days", f"day {d} outside horizon")
                cfg.policy_days = days
            return run_experiment(cfg, args.out)
        return compare_smfe(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}")
        return 1
    except SolverFailure as exc:
        print(f"solver failure: {exc}")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
