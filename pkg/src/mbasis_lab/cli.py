"""Batch front-end: config parsing, pipeline dispatch, report emission.

Configuration is a line-oriented ``key = value`` text format (blank lines
and ``#`` comments allowed, unknown or duplicate keys rejected).  Every
run writes its artifacts plus a ``run.json`` manifest into the output
directory; failures leave a machine-readable ``failure.json`` naming the
violated condition and exit nonzero.

Usage: ``mbasis-lab <command> [--config FILE] [--out DIR] [--seed N]
[--truncation N]`` with commands build-system, perturb, represent,
pathology, unb.  The ``MBASIS_LOG`` environment variable sets verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys as _sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from .biorth import BiorthSystem, biorthogonality_defect, boundedness_constant
from .errors import ArgumentError, ConstructionError
from . import io as mio
from .pathology import (
    build_permutation,
    build_phi,
    build_pathological_system,
    default_eps_sequence,
    omega_stats,
    operator_T,
    unb_experiment,
)
from .perturbations import construct_flattened, verify_flattened
from .representing import (
    build_norming_indices,
    build_representing_indices,
    strong_partition,
)
from .biorth import norming_constant_estimate
from .subspace import ToleranceConfig

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "run", "emit_report", "main"]

log = logging.getLogger("mbasis_lab")

COMMANDS = ("build-system", "perturb", "represent", "pathology", "unb")


class ConfigError(ArgumentError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = ""
    truncation: int = 64
    seed: int = 0
    out: str = "mbasis_out"
    kind: str = "canonical"
    input_system: str = ""
    partition: str = ""
    auto_strong: bool = False
    depth: int = 6
    blocks: int = 2
    variant: str = "plain"
    c: float = 0.0
    eps: tuple = ()
    sizes: tuple = (64, 128, 256)
    cs: tuple = (1, 2, 4)
    lambda_schedule: str = "linear"
    m_bound: float = 2.0
    rank_tol: float = 1e-10
    biorth_tol: float = 1e-8
    span_tol: float = 1e-8
    net_resolution: float = 0.25

    def tolerances(self) -> ToleranceConfig:
        return ToleranceConfig(self.rank_tol, self.biorth_tol, self.span_tol,
                               self.net_resolution)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_int_list(text: str) -> tuple:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_float_list(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


_PARSERS = {
    "command": str,
    "truncation": int,
    "seed": int,
    "out": str,
    "kind": str,
    "input_system": str,
    "partition": str,
    "auto_strong": _parse_bool,
    "depth": int,
    "blocks": int,
    "variant": str,
    "c": float,
    "eps": _parse_float_list,
    "sizes": _parse_int_list,
    "cs": _parse_int_list,
    "lambda_schedule": str,
    "m_bound": float,
    "rank_tol": float,
    "biorth_tol": float,
    "span_tol": float,
    "net_resolution": float,
}


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(
            f"command is required and must be one of {', '.join(COMMANDS)}"
            + (f"; got '{cfg.command}'" if cfg.command else "")
        )
    if cfg.truncation < 2:
        raise ConfigError(f"truncation must be at least 2, got {cfg.truncation}")
    if cfg.depth < 1:
        raise ConfigError("depth must be at least 1")
    if cfg.blocks < 1:
        raise ConfigError("blocks must be at least 1")
    if cfg.variant not in ("plain", "norming"):
        raise ConfigError(f"variant must be plain or norming, got '{cfg.variant}'")
    if cfg.kind not in ("canonical", "pathological"):
        raise ConfigError(f"kind must be canonical or pathological, got '{cfg.kind}'")
    if cfg.lambda_schedule != "linear":
        raise ConfigError(f"unknown lambda schedule '{cfg.lambda_schedule}'")
    if any(s < 4 for s in cfg.sizes):
        raise ConfigError("sizes entries must be at least 4")
    if any(c < 1 for c in cfg.cs):
        raise ConfigError("cs entries must be positive")
    if cfg.m_bound < 1:
        raise ConfigError("m_bound must be at least 1")
    for name in ("rank_tol", "biorth_tol", "span_tol", "net_resolution"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.net_resolution >= 1:
        raise ConfigError("net_resolution must be below 1")
    return cfg


def parse_config(source: str, default_command: str = "") -> ExperimentConfig:
    """Parse the ``key = value`` text into a validated config."""
    values: dict = {}
    for ln, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got '{line}'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {ln}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {ln}: duplicate key '{key}'")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {ln}: bad value for '{key}': {exc}")
    if "command" not in values and default_command:
        values["command"] = default_command
    return _validate(ExperimentConfig(**values))


def emit_report(rows, columns, out_dir: str, name: str):
    """Write a report as a deterministic CSV plus its JSON mirror."""
    os.makedirs(out_dir, exist_ok=True)
    mio.write_report_csv(rows, columns, os.path.join(out_dir, f"{name}.csv"))
    mio.write_report_json({"columns": list(columns), "rows": [list(r) for r in rows]},
                          os.path.join(out_dir, f"{name}.json"))


def _load_or_canonical(cfg: ExperimentConfig) -> BiorthSystem:
    if cfg.input_system:
        return mio.load_system(cfg.input_system)
    return BiorthSystem.canonical(cfg.truncation, tol=cfg.tolerances())


def _cmd_build_system(cfg: ExperimentConfig, out: str) -> dict:
    tol = cfg.tolerances()
    if cfg.kind == "canonical":
        system = BiorthSystem.canonical(cfg.truncation, tol=tol)
        extras: dict = {}
    else:
        N = cfg.truncation
        phi = build_phi(lambda n: float(n), 4 * N)
        spec = build_permutation(phi, 4 * N)
        eps = np.asarray(cfg.eps, dtype=float) if cfg.eps else default_eps_sequence(N)
        pi_t = spec.compactified(N, keep_below=N)
        ambient = int(max(N, pi_t.max()))
        system, e_hats = build_pathological_system(spec, eps, N, ambient, tol)
        mio.write_matrix_csv(np.vstack([e.coords for e in e_hats]),
                             os.path.join(out, "E.csv"))
        extras = {"ambient": ambient}
    mio.save_system(system, os.path.join(out, "system"))
    emit_report(
        [("size", system.size), ("defect", biorthogonality_defect(system)),
         ("boundedness", boundedness_constant(system))],
        ("metric", "value"), out, "system_report")
    return {"system": "system", "size": system.size, **extras}


def _cmd_perturb(cfg: ExperimentConfig, out: str) -> dict:
    system = _load_or_canonical(cfg)
    if cfg.partition:
        partition = mio.load_partition(cfg.partition)
    elif cfg.auto_strong:
        r = build_representing_indices(system, cfg.depth)
        trace = strong_partition(r, cfg.blocks,
                                 eps=cfg.eps if cfg.eps else None)
        partition = trace.partition
        if partition.covered != set(range(1, system.size + 1)):
            system = system.prefix(max(partition.covered))
    else:
        raise ArgumentError("perturb needs a partition file or auto_strong = true")
    flattened = construct_flattened(system, partition, cfg.seed)
    report = verify_flattened(flattened, system, partition)
    mio.save_system(flattened, os.path.join(out, "flattened"))
    mio.save_partition(partition, os.path.join(out, "partition.txt"))
    rows = [(b.j, b.vector_gap, b.dual_gap, b.worst_slack) for b in report.blocks]
    emit_report(rows, ("block", "vector_gap", "dual_gap", "worst_slack"),
                out, "flattening_report")
    if not report.passed:
        raise ConstructionError("flattening verification failed; see flattening_report")
    return {"blocks": partition.count, "passed": report.passed}


def _cmd_represent(cfg: ExperimentConfig, out: str) -> dict:
    system = _load_or_canonical(cfg)
    if cfg.variant == "norming":
        c = cfg.c or norming_constant_estimate(system) / 2.0
        indices = build_norming_indices(system, cfg.depth, c)
    else:
        indices = build_representing_indices(system, cfg.depth)
    mio.save_indices(indices, os.path.join(out, "indices.txt"))
    rows = [(m, v, p, d) for m, (v, p, d) in enumerate(
        zip(indices.values, indices.interim_p, indices.deltas), start=1)]
    emit_report(rows, ("m", "r", "p", "delta"), out, "indices_report")
    return {"depth": indices.depth, "r_max": indices.values[-1]}


def _cmd_pathology(cfg: ExperimentConfig, out: str) -> dict:
    tol = cfg.tolerances()
    N = cfg.truncation
    table_len = max(cfg.cs) * N
    phi = build_phi(lambda n: float(n), table_len)
    spec = build_permutation(phi, table_len)
    stats = omega_stats(spec, cfg.cs, N)
    mio.save_permutation(spec, os.path.join(out, "permutation.txt"), upto=N)
    rows = list(zip(stats.grid_m, stats.omega, stats.two_phi))
    emit_report(rows, ("m", "omega", "two_phi"), out, "omega_growth")
    eps = np.asarray(cfg.eps, dtype=float) if cfg.eps else default_eps_sequence(N)
    pi_t = spec.compactified(N, keep_below=N)
    ambient = int(max(N, pi_t.max()))
    system, e_hats = build_pathological_system(spec, eps, N, ambient, tol)
    top = operator_T(e_hats, ambient, eps_seq=eps)
    mio.save_system(system, os.path.join(out, "system"))
    mio.write_matrix_csv(np.vstack([e.coords for e in e_hats]),
                         os.path.join(out, "E.csv"))
    emit_report(
        [("defect", biorthogonality_defect(system)), ("norm_T", top.norm),
         ("norm_T_inv", top.norm_inv)],
        ("metric", "value"), out, "pathology_report")
    return {"ambient": ambient, "norm_T": top.norm, "norm_T_inv": top.norm_inv}


def _cmd_unb(cfg: ExperimentConfig, out: str) -> dict:
    report = unb_experiment(lambda m: float(m), cfg.m_bound, cfg.sizes, cfg.seed,
                            tol=cfg.tolerances())
    for run_data in report.runs:
        emit_report(run_data.rows, report.columns, out,
                    f"unb_{run_data.truncation}")
    ok = report.control_ok and all(
        r.bracket_ok and r.capacity_ok and r.ratio_monotone for r in report.runs)
    summary = {
        "control_ok": report.control_ok,
        "runs": [
            {
                "truncation": r.truncation,
                "n0": r.n0,
                "first_jump": r.first_jump,
                "jump_ms": list(r.jump_ms),
                "window_end": r.window_end,
                "ratio_monotone": r.ratio_monotone,
                "bracket_ok": r.bracket_ok,
                "capacity_ok": r.capacity_ok,
            }
            for r in report.runs
        ],
    }
    mio.write_report_json(summary, os.path.join(out, "unb_summary.json"))
    if not ok:
        raise ConstructionError("growth-table invariants failed; see unb_summary.json")
    return summary


_DISPATCH = {
    "build-system": _cmd_build_system,
    "perturb": _cmd_perturb,
    "represent": _cmd_represent,
    "pathology": _cmd_pathology,
    "unb": _cmd_unb,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute the configured command; 0 iff every asserted invariant passed."""
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    started = time.time()
    try:
        summary = _DISPATCH[cfg.command](cfg, out)
    except (ArgumentError, ConstructionError) as exc:
        record = {
            "module": type(exc).__module__ + "." + type(exc).__qualname__,
            "operation": cfg.command,
            "invariant": str(exc),
        }
        mio.write_report_json(record, os.path.join(out, "failure.json"))
        print(json.dumps(record), file=_sys.stderr)
        return 1
    manifest = {
        "command": cfg.command,
        "seed": cfg.seed,
        "truncation": cfg.truncation,
        "tolerances": {
            "rank_tol": cfg.rank_tol,
            "biorth_tol": cfg.biorth_tol,
            "span_tol": cfg.span_tol,
            "net_resolution": cfg.net_resolution,
        },
        "grid": {"sizes": list(cfg.sizes), "cs": list(cfg.cs),
                 "lambda_schedule": cfg.lambda_schedule},
        "version": __version__,
        "numpy": np.__version__,
        "wall_time_s": round(time.time() - started, 3),
        "summary": summary,
    }
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(mio._clean(manifest), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mbasis-lab",
        description="Finite-truncation experiments on biorthogonal systems.",
        epilog=(
            "Config keys and defaults: "
            + ", ".join(f"{f.name}={f.default!r}" for f in fields(ExperimentConfig)
                        if f.name != "command")
        ),
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--truncation", type=int, help="truncation override")
    parser.add_argument("--partition", help="partition file (perturb)")
    parser.add_argument("--auto-strong", action="store_true", default=None,
                        help="derive the partition from representing indices (perturb)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("MBASIS_LOG", "WARNING").upper())
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = parse_config(fh.read(), default_command=args.command)
            if cfg.command != args.command:
                raise ConfigError(
                    f"config file commands '{cfg.command}' but the command line "
                    f"says '{args.command}'"
                )
        else:
            cfg = _validate(ExperimentConfig(command=args.command))
        overrides = {}
        if args.out is not None:
            overrides["out"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.truncation is not None:
            overrides["truncation"] = args.truncation
        if args.partition is not None:
            overrides["partition"] = args.partition
        if args.auto_strong is not None:
            overrides["auto_strong"] = args.auto_strong
        if overrides:
            cfg = _validate(replace(cfg, **overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    log.info("running %s into %s", cfg.command, cfg.out)
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
