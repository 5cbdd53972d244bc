"""Command-line entry point: JSON configs in, CSV/JSON reports out.

Subcommands: coverage, contraction, bspline-check, demo.  All outputs are a
pure function of (config file, CLI overrides); files are written to a
temporary name and atomically renamed, so failures never leave partial
reports behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .basis import QuadSpec, default_grid
from .bspline import gram_matrix, make_bspline_basis, project_l2
from .experiments import (
    NOISELESS_POSTERIOR_SD,
    ConfigError,
    ContractionReport,
    CoverageReport,
    DnnMode,
    ExperimentConfig,
    OracleMode,
    TargetSpec,
    _build_basis,
    build_target,
    contraction_scan,
    mix64,
    run_coverage,
)
from .posterior import (
    design_matrix,
    fit_posterior,
    inflation_factor,
    pointwise_band,
    sample_posterior,
)
from .synth import eval_target, generate_dataset, split_dataset

SCHEMA_VERSION = 1

COVERAGE_HEADER = "n,norm,inflation,coverage,mean_dist,sd_dist,mean_radius,sd_radius,reps_used,failures"
CONTRACTION_HEADER = "n,mean_dist_l2,sd_dist_l2,reps_used,failures"

_CONFIG_FIELDS = {
    "target",
    "n_values",
    "reps",
    "master_seed",
    "beta",
    "d",
    "noise_sd",
    "alpha",
    "norms",
    "inflations",
    "draws",
    "basis_mode",
    "threads",
}
_TARGET_FIELDS = {"kind", "truncation", "order", "segments", "coefficients"}
_DNN_FIELDS = {"kind", "epochs", "batch_size", "learning_rate", "optimizer", "clip_sup"}
_ORACLE_FIELDS = {"kind", "order"}


def _parse_target(raw) -> TargetSpec:
    if isinstance(raw, str):
        return TargetSpec(kind=raw)
    if not isinstance(raw, dict):
        raise ConfigError("target: must be a string or an object")
    unknown = set(raw) - _TARGET_FIELDS
    if unknown:
        raise ConfigError(f"target: unknown keys {sorted(unknown)}")
    if "coefficients" in raw and raw["coefficients"] is not None:
        raw = dict(raw, coefficients=tuple(float(c) for c in raw["coefficients"]))
    return TargetSpec(**raw)


def _parse_basis_mode(raw) -> DnnMode | OracleMode:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("basis_mode: must be an object with a 'kind' key")
    if raw["kind"] == "dnn":
        unknown = set(raw) - _DNN_FIELDS
        if unknown:
            raise ConfigError(f"basis_mode: unknown keys {sorted(unknown)}")
        return DnnMode(**raw)
    if raw["kind"] == "bspline_oracle":
        unknown = set(raw) - _ORACLE_FIELDS
        if unknown:
            raise ConfigError(f"basis_mode: unknown keys {sorted(unknown)}")
        return OracleMode(**raw)
    raise ConfigError(f"basis_mode.kind: unknown kind {raw['kind']!r}")


def parse_config(path) -> ExperimentConfig:
    """Read a JSON experiment config; unknown keys are rejected and missing
    ones take the documented defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")

    kwargs = {}
    if "target" in raw:
        kwargs["target"] = _parse_target(raw["target"])
    if "basis_mode" in raw:
        kwargs["basis_mode"] = _parse_basis_mode(raw["basis_mode"])
    for key in ("n_values", "norms", "inflations"):
        if key in raw:
            if not isinstance(raw[key], list):
                raise ConfigError(f"{key}: must be a list")
            kwargs[key] = tuple(raw[key])
    for key in ("reps", "master_seed", "beta", "d", "noise_sd", "alpha", "draws", "threads"):
        if key in raw:
            kwargs[key] = raw[key]
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    mode = dataclasses.asdict(cfg.basis_mode)
    target = dataclasses.asdict(cfg.target)
    if target["coefficients"] is not None:
        target["coefficients"] = list(target["coefficients"])
    return {
        "target": target,
        "n_values": list(cfg.n_values),
        "reps": cfg.reps,
        "master_seed": cfg.master_seed,
        "beta": cfg.beta,
        "d": cfg.d,
        "noise_sd": cfg.noise_sd,
        "alpha": cfg.alpha,
        "norms": list(cfg.norms),
        "inflations": list(cfg.inflations),
        "draws": cfg.draws,
        "basis_mode": mode,
        "threads": cfg.threads,
    }


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def parse_config_dict(raw: dict) -> ExperimentConfig:
    """parse_config for an already-loaded JSON object (round-trip helper)."""
    kwargs = dict(raw)
    kwargs["target"] = _parse_target(raw["target"])
    kwargs["basis_mode"] = _parse_basis_mode(raw["basis_mode"])
    for key in ("n_values", "norms", "inflations"):
        kwargs[key] = tuple(raw[key])
    return ExperimentConfig(**kwargs)


def _write_atomic(path: Path, content: str) -> None:
    tmp = path.parent / (path.name + f".tmp-{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def coverage_csv(report: CoverageReport) -> str:
    lines = [COVERAGE_HEADER]
    for c in report.cells:
        lines.append(
            f"{c.n},{c.norm},{c.inflation},{_fmt(c.coverage)},{_fmt(c.mean_dist)},"
            f"{_fmt(c.sd_dist)},{_fmt(c.mean_radius)},{_fmt(c.sd_radius)},{c.reps_used},{c.failures}"
        )
    return "\n".join(lines) + "\n"


def coverage_json_dict(report: CoverageReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(report.config),
        "cells": [dataclasses.asdict(c) for c in report.cells],
    }


def write_coverage_report(report: CoverageReport, fmt: str, out_dir: Path) -> list[Path]:
    written = []
    if fmt in ("csv", "both"):
        path = out_dir / "coverage.csv"
        _write_atomic(path, coverage_csv(report))
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / "coverage.json"
        _write_atomic(path, json.dumps(coverage_json_dict(report), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def contraction_csv(report: ContractionReport) -> str:
    lines = [CONTRACTION_HEADER]
    for i, n in enumerate(report.n_values):
        lines.append(
            f"{n},{_fmt(report.mean_l2[i])},{_fmt(report.sd_l2[i])},"
            f"{report.reps_used[i]},{report.failures[i]}"
        )
    return "\n".join(lines) + "\n"


def contraction_json_dict(report: ContractionReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(report.config),
        "n_values": list(report.n_values),
        "mean_l2": list(report.mean_l2),
        "sd_l2": list(report.sd_l2),
        "reps_used": list(report.reps_used),
        "failures": list(report.failures),
        "slope": report.slope,
        "degenerate": report.degenerate,
    }


def cmd_coverage(cfg: ExperimentConfig, out_dir: Path, fmt: str, echo: ExperimentConfig | None = None) -> list[Path]:
    report = run_coverage(cfg)
    report = dataclasses.replace(report, config=echo or cfg)
    return write_coverage_report(report, fmt, out_dir)


def cmd_contraction(cfg: ExperimentConfig, out_dir: Path, fmt: str, echo: ExperimentConfig | None = None) -> list[Path]:
    report = contraction_scan(cfg)
    report = dataclasses.replace(report, config=echo or cfg)
    written = []
    if fmt in ("csv", "both"):
        path = out_dir / "contraction.csv"
        _write_atomic(path, contraction_csv(report))
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / "contraction.json"
        _write_atomic(path, json.dumps(contraction_json_dict(report), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def _bspline_check_payload(cfg: ExperimentConfig) -> dict:
    grid = np.linspace(0.0, 1.0, 10**4)
    partition = []
    for q in range(1, 6):
        for segments in (5, 10, 20, 64):
            basis = make_bspline_basis(segments, q, 1)
            dev = float(np.max(np.abs(basis.eval_batch(grid).sum(axis=1) - 1.0)))
            partition.append({"q": q, "segments": segments, "max_deviation": dev})

    order1 = []
    for segments in (4, 16):
        basis = make_bspline_basis(segments, 1, 1)
        gram = gram_matrix(basis).matrix
        dev = float(np.max(np.abs(gram - np.eye(segments) / segments)))
        order1.append({"segments": segments, "max_deviation_from_identity_over_J": dev})

    stability = []
    for q in (2, 3):
        for segments in (8, 16, 32, 64):
            basis = make_bspline_basis(segments, q, 1)
            k = basis.k
            gram = gram_matrix(basis).matrix * k
            eigs = np.linalg.eigvalsh(gram)
            stability.append(
                {"q": q, "segments": segments, "k": k,
                 "lambda_min": float(eigs[0]), "lambda_max": float(eigs[-1])}
            )

    target = build_target(cfg.target, 1)
    quad = QuadSpec(rule="trapezoid", points_per_axis=2**15 + 1)
    rate = []
    for k in (8, 16, 32, 64, 128):
        basis = make_bspline_basis(k - 1, 2, 1)
        _, residual = project_l2(target, basis, quad)
        rate.append({"k": k, "residual": float(residual)})
    ks = np.array([row["k"] for row in rate], dtype=float)
    res = np.array([row["residual"] for row in rate])
    slope = float(np.polyfit(np.log(ks), np.log(res), 1)[0]) if np.all(res > 0) else None

    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(cfg),
        "partition_of_unity": partition,
        "order1_gram": order1,
        "rescaled_gram_stability": stability,
        "projection_rate": {"rows": rate, "loglog_slope": slope},
    }


def cmd_bspline_check(cfg: ExperimentConfig, out_dir: Path, fmt: str, echo: ExperimentConfig | None = None) -> list[Path]:
    payload = _bspline_check_payload(echo or cfg)
    written = []
    if fmt in ("csv", "both"):
        lines = ["k,residual"]
        for row in payload["projection_rate"]["rows"]:
            lines.append(f"{row['k']},{_fmt(row['residual'])}")
        path = out_dir / "bspline_rate.csv"
        _write_atomic(path, "\n".join(lines) + "\n")
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / "bspline_check.json"
        _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


DEMO_HEADER = "x,f0,post_mean,pw_lo,pw_hi,pw_lo_infl,pw_hi_infl,env_lo,env_hi,env_lo_infl,env_hi_infl"


def _demo_payload(cfg: ExperimentConfig) -> dict:
    """One repetition's plot-ready curves (d = 1 only)."""
    if cfg.d != 1:
        raise ConfigError("d: the demo subcommand requires d = 1")
    n = cfg.n_values[0]
    rep_seed = mix64(cfg.master_seed, n, 0)
    target = build_target(cfg.target, 1)
    data = generate_dataset(target, n, cfg.noise_sd, mix64(rep_seed, 1))
    data1, data2 = split_dataset(data)
    basis, _ = _build_basis(cfg, n, data1, mix64(rep_seed, 2), mix64(rep_seed, 3))
    sigma = cfg.noise_sd if cfg.noise_sd > 0 else NOISELESS_POSTERIOR_SD
    post = fit_posterior(design_matrix(basis, data2), data2.y, sigma)
    draws = sample_posterior(post, cfg.draws, mix64(rep_seed, 4))

    grid = default_grid(1)
    x = grid.points[:, 0]
    phi = basis.eval_batch(grid.points)
    center = phi @ post.mean
    f0 = np.asarray(eval_target(target, grid.points), dtype=np.float64)

    kind = next((i for i in cfg.inflations if i != "none"), "none")
    factor = inflation_factor(kind, n)

    lower, upper = pointwise_band(draws, basis, grid, cfg.alpha)
    lo_in = center + factor * (lower - center)
    up_in = center + factor * (upper - center)

    curves = draws @ phi.T
    sup_dist = np.max(np.abs(curves - center), axis=1)
    keep = math.ceil((1.0 - cfg.alpha) * cfg.draws)
    kept = curves[np.argsort(sup_dist, kind="stable")[:keep]]
    env_lo = kept.min(axis=0)
    env_hi = kept.max(axis=0)
    env_lo_in = center + factor * (env_lo - center)
    env_hi_in = center + factor * (env_hi - center)

    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(cfg),
        "n": n,
        "inflation": {"kind": kind, "value": factor},
        "columns": {
            "x": x.tolist(),
            "f0": f0.tolist(),
            "post_mean": center.tolist(),
            "pw_lo": lower.tolist(),
            "pw_hi": upper.tolist(),
            "pw_lo_infl": lo_in.tolist(),
            "pw_hi_infl": up_in.tolist(),
            "env_lo": env_lo.tolist(),
            "env_hi": env_hi.tolist(),
            "env_lo_infl": env_lo_in.tolist(),
            "env_hi_infl": env_hi_in.tolist(),
        },
    }


def cmd_demo(cfg: ExperimentConfig, out_dir: Path, fmt: str, echo: ExperimentConfig | None = None) -> list[Path]:
    payload = _demo_payload(cfg)
    if echo is not None:
        payload["config"] = config_to_dict(echo)
    written = []
    if fmt in ("csv", "both"):
        cols = payload["columns"]
        names = DEMO_HEADER.split(",")
        lines = [DEMO_HEADER]
        for i in range(len(cols["x"])):
            lines.append(",".join(_fmt(cols[name][i]) for name in names))
        path = out_dir / "demo.csv"
        _write_atomic(path, "\n".join(lines) + "\n")
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / "demo.json"
        _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


_COMMANDS = {
    "coverage": cmd_coverage,
    "contraction": cmd_contraction,
    "bspline-check": cmd_bspline_check,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebdnn",
        description="Empirical-Bayes network regression experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("coverage", "coverage simulation across repetitions and inflation factors"),
        ("contraction", "estimation-error decay across sample sizes"),
        ("bspline-check", "spline basis diagnostics and projection rate scan"),
        ("demo", "single-repetition plot-ready curves"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker count (overrides config; env EBDNN_THREADS is the fallback)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return parser


def _resolve_threads(cli_value: int | None, cfg: ExperimentConfig) -> int:
    if cli_value is not None:
        return cli_value
    env = os.environ.get("EBDNN_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"threads: EBDNN_THREADS={env!r} is not an integer")
    return cfg.threads


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
        # the seed override defines the experiment and is echoed in reports;
        # the thread count only affects execution and is not
        exec_cfg = dataclasses.replace(cfg, threads=_resolve_threads(args.threads, cfg))
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](exec_cfg, out_dir, args.format, echo=cfg)
        return 0
    except Exception as exc:  # one-line machine-parsable failure
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
