"""Artifact serialization: CSV matrices, partitions, index tables, reports.

All numeric text uses 12 significant digits so artifacts are byte-stable
across runs with identical inputs.  Matrices are stored one vector per
row.  A biorthogonal system is a directory holding ``X.csv``, ``F.csv``
and a ``header.txt`` with the ambient dimension and tolerances.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .biorth import BiorthSystem
from .errors import ArgumentError
from .perturbations import BlockPartition
from .representing import RepresentingIndices
from .pathology import PermutationSpec
from .subspace import ToleranceConfig

__all__ = [
    "fmt",
    "write_matrix_csv",
    "read_matrix_csv",
    "save_system",
    "load_system",
    "save_partition",
    "load_partition",
    "save_indices",
    "load_indices",
    "save_permutation",
    "write_report_csv",
    "write_report_json",
]


def fmt(value) -> str:
    """Fixed 12-significant-digit formatting for floats; plain for ints."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def write_matrix_csv(M: np.ndarray, path: str):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join(fmt(v) for v in row))
            fh.write("\n")


def read_matrix_csv(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ArgumentError(f"ragged matrix rows in {path}")
    return np.asarray(rows, dtype=float)


def save_system(sys: BiorthSystem, directory: str):
    os.makedirs(directory, exist_ok=True)
    write_matrix_csv(sys.xs, os.path.join(directory, "X.csv"))
    write_matrix_csv(sys.fs, os.path.join(directory, "F.csv"))
    t = sys.tol
    with open(os.path.join(directory, "header.txt"), "w") as fh:
        fh.write(f"ambient_dim = {sys.ambient_dim}\n")
        fh.write(f"rank_tol = {fmt(t.rank_tol)}\n")
        fh.write(f"biorth_tol = {fmt(t.biorth_tol)}\n")
        fh.write(f"span_tol = {fmt(t.span_tol)}\n")
        fh.write(f"net_resolution = {fmt(t.net_resolution)}\n")


def load_system(directory: str, validate: bool = True) -> BiorthSystem:
    X = read_matrix_csv(os.path.join(directory, "X.csv"))
    F = read_matrix_csv(os.path.join(directory, "F.csv"))
    header = {}
    with open(os.path.join(directory, "header.txt")) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                header[k.strip()] = v.strip()
    tol = ToleranceConfig(
        rank_tol=float(header.get("rank_tol", 1e-10)),
        biorth_tol=float(header.get("biorth_tol", 1e-8)),
        span_tol=float(header.get("span_tol", 1e-8)),
        net_resolution=float(header.get("net_resolution", 0.25)),
    )
    sys = BiorthSystem(X, F, ambient_dim=int(header["ambient_dim"]), tol=tol)
    if validate:
        sys.validate()
    return sys


def save_partition(p: BlockPartition, path: str):
    """Lines of the form ``A j: n(j) | members | eps``."""
    with open(path, "w") as fh:
        for j, (blk, anchor, eps) in enumerate(
                zip(p.blocks, p.anchors, p.epsilons), start=1):
            members = " ".join(str(i) for i in blk)
            fh.write(f"A {j}: {anchor} | {members} | {fmt(eps)}\n")


def load_partition(path: str) -> BlockPartition:
    blocks, anchors, eps = [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                head, rest = line.split(":", 1)
                if not head.strip().startswith("A"):
                    raise ValueError("missing block marker")
                anchor_s, members_s, eps_s = (part.strip() for part in rest.split("|"))
                anchors.append(int(anchor_s))
                blocks.append(tuple(int(t) for t in members_s.split()))
                eps.append(float(eps_s))
            except ValueError as exc:
                raise ArgumentError(f"{path}:{ln}: malformed partition line ({exc})")
    return BlockPartition(tuple(blocks), tuple(anchors), tuple(eps))


def save_indices(r: RepresentingIndices, path: str):
    """Lines ``m r(m) p(m) delta(m)``."""
    with open(path, "w") as fh:
        for i, (val, p, d) in enumerate(zip(r.values, r.interim_p, r.deltas), start=1):
            fh.write(f"{i} {val} {p} {fmt(d)}\n")


def load_indices(path: str) -> RepresentingIndices:
    values, interim, deltas = [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) != 4:
                raise ArgumentError(f"{path}:{ln}: expected 'm r p delta'")
            values.append(int(toks[1]))
            interim.append(int(toks[2]))
            deltas.append(float(toks[3]))
    return RepresentingIndices(tuple(values), tuple(deltas), tuple(interim))


def save_permutation(spec: PermutationSpec, path: str, upto: int | None = None):
    """Text table ``n phi Phi inGamma pi``; -1 marks beyond-table values."""
    upto = spec.N if upto is None else min(int(upto), spec.N)
    gamma = set(int(g) for g in spec.Gamma)
    with open(path, "w") as fh:
        fh.write("n phi Phi inGamma pi\n")
        for n in range(1, upto + 1):
            fh.write(
                f"{n} {spec.phi[n - 1]} {spec.Phi[n - 1]} "
                f"{1 if n in gamma else 0} {spec.pi[n - 1]}\n"
            )


def _clean(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v) or math.isnan(v):
            return str(v)
        return float(fmt(v))
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    return value


def write_report_csv(rows, columns, path: str):
    """Deterministic CSV: fixed column order, 12 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns))
        fh.write("\n")
        for row in rows:
            if len(row) != len(columns):
                raise ArgumentError("row width does not match the column list")
            fh.write(",".join(fmt(v) for v in row))
            fh.write("\n")


def write_report_json(payload: dict, path: str):
    """JSON mirror of a report; keys sorted, values pinned to 12 digits."""
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
