"""Biorthogonal systems and their standard diagnostics.

A system is a paired finite family (x_n, f_n) of vectors and functionals
(functionals act by the l2 inner product).  The diagnostics quantify, at
truncation scale, the classical notions: biorthogonality defect,
C-boundedness, uniform minimality, norming constants, spanning indices of
a spanned system, block/pile perturbation structure, and the intersection
identity used to characterize strongness.

All index sets exposed by this module are 1-based, matching the usual
mathematical indexing; raw array rows are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ConstructionError
from .subspace import (
    ToleranceConfig,
    TruncatedVector,
    distance_to_span,
    orthonormal_rows,
    span_equal,
    span_gap,
    span_matrix,
)

__all__ = [
    "BiorthSystem",
    "IntervalFamily",
    "PerturbationClass",
    "biorthogonality_defect",
    "boundedness_constant",
    "uniform_minimality_constant",
    "norming_constant_estimate",
    "norming_estimate_envelope",
    "spanning_indices",
    "classify_perturbation",
    "block_duality_check",
    "intersection_defect",
]


@dataclass(frozen=True)
class BiorthSystem:
    """Paired finite sequences of vectors ``xs`` and functionals ``fs``.

    Rows of the two matrices are the x_n and f_n.  On validated systems the
    biorthogonality defect is at most ``tol.biorth_tol`` and no row is zero.
    """

    xs: np.ndarray
    fs: np.ndarray
    ambient_dim: int = 0
    tol: ToleranceConfig = field(default_factory=ToleranceConfig)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.xs, dtype=float))
        F = np.atleast_2d(np.asarray(self.fs, dtype=float))
        if X.shape[0] != F.shape[0]:
            raise ArgumentError(f"|xs| != |fs|: {X.shape[0]} vs {F.shape[0]}")
        if X.shape[0] and X.shape[1] != F.shape[1]:
            raise ArgumentError("vectors and functionals live in different dimensions")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(F))):
            raise ArgumentError("system entries must be finite")
        dim = self.ambient_dim or (X.shape[1] if X.size else 0)
        if X.size and dim != X.shape[1]:
            raise ArgumentError("ambient_dim does not match the matrices")
        X.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "xs", X)
        object.__setattr__(self, "fs", F)
        object.__setattr__(self, "ambient_dim", dim)

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_pairs(cls, xs, fs, tol: ToleranceConfig | None = None,
                   validate: bool = True) -> "BiorthSystem":
        tol = tol or ToleranceConfig()
        sys = cls(np.asarray(xs, dtype=float), np.asarray(fs, dtype=float), tol=tol)
        if validate:
            sys.validate()
        return sys

    @classmethod
    def canonical(cls, n: int, ambient_dim: int | None = None,
                  tol: ToleranceConfig | None = None) -> "BiorthSystem":
        """The canonical pairs (e_1..e_n) in the given ambient dimension."""
        dim = ambient_dim or n
        if dim < n:
            raise ArgumentError("ambient dimension below the system size")
        E = np.eye(dim)[:n]
        return cls(E, E.copy(), tol=tol or ToleranceConfig())

    # -- basic accessors ------------------------------------------------

    @property
    def size(self) -> int:
        return self.xs.shape[0]

    def x(self, n: int) -> np.ndarray:
        """n-th vector, 1-based."""
        return self.xs[n - 1]

    def f(self, n: int) -> np.ndarray:
        """n-th functional, 1-based."""
        return self.fs[n - 1]

    def x_vectors(self) -> list[TruncatedVector]:
        return [TruncatedVector(r) for r in self.xs]

    def f_vectors(self) -> list[TruncatedVector]:
        return [TruncatedVector(r) for r in self.fs]

    def prefix(self, m: int) -> "BiorthSystem":
        """Subsystem of the first m pairs."""
        if not 0 <= m <= self.size:
            raise ArgumentError(f"prefix length {m} out of range")
        return replace(self, xs=self.xs[:m].copy(), fs=self.fs[:m].copy())

    def validate(self):
        defect = biorthogonality_defect(self)
        if defect > self.tol.biorth_tol:
            raise ArgumentError(
                f"biorthogonality defect {defect:.3e} above tolerance "
                f"{self.tol.biorth_tol:.3e}"
            )
        norms_x = np.linalg.norm(self.xs, axis=1) if self.size else np.array([])
        norms_f = np.linalg.norm(self.fs, axis=1) if self.size else np.array([])
        if self.size and (np.any(norms_x == 0.0) or np.any(norms_f == 0.0)):
            raise ArgumentError("zero vectors are not allowed in a biorthogonal system")
        return self


@dataclass(frozen=True)
class IntervalFamily:
    """A family of integer intervals I(m), inclusive 1-based bounds."""

    intervals: tuple

    def __post_init__(self):
        ivs = tuple((int(lo), int(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if lo < 1 or hi < lo:
                raise ArgumentError(f"malformed interval ({lo}, {hi})")
        object.__setattr__(self, "intervals", ivs)

    def is_block(self) -> bool:
        """Successive disjoint intervals covering an initial segment."""
        expected = 1
        for lo, hi in self.intervals:
            if lo != expected:
                return False
            expected = hi + 1
        return len(self.intervals) > 0

    def is_pile(self) -> bool:
        """Left bounds all 1, right bounds strictly increasing."""
        rights = [hi for lo, hi in self.intervals if lo == 1]
        if len(rights) != len(self.intervals) or not rights:
            return False
        return all(b > a for a, b in zip(rights, rights[1:]))

    def covers(self, n: int) -> bool:
        seen = set()
        for lo, hi in self.intervals:
            seen.update(range(lo, hi + 1))
        return seen == set(range(1, n + 1))


# ---------------------------------------------------------------------------
# scalar diagnostics


def biorthogonality_defect(sys: BiorthSystem) -> float:
    """max over (k, n) of |<f_k, x_n> - delta_{k,n}|."""
    if sys.size == 0:
        return 0.0
    gram = sys.fs @ sys.xs.T
    return float(np.max(np.abs(gram - np.eye(sys.size))))


def boundedness_constant(sys: BiorthSystem) -> float:
    """Least C with ||x_n|| * ||f_n|| <= C for every n."""
    if sys.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(sys.xs, axis=1) * np.linalg.norm(sys.fs, axis=1)))


def uniform_minimality_constant(sys: BiorthSystem) -> float:
    """min over n of dist(x_n / ||x_n||, span of the other vectors)."""
    if sys.size < 2:
        raise ArgumentError("uniform minimality needs at least 2 vectors")
    dists = []
    for n in range(sys.size):
        others = np.delete(sys.xs, n, axis=0)
        xn = sys.xs[n]
        dists.append(distance_to_span(xn / np.linalg.norm(xn), others, sys.tol.rank_tol))
    return float(min(dists))


def norming_estimate_envelope(sys: BiorthSystem, samples: int, seed: int) -> np.ndarray:
    """Running minimum over sampled functionals of sup_x |<f, x>|.

    For each sampled unit f in span(fs) the supremum over unit x in
    span(xs) equals the norm of the projection of f onto span(xs), which is
    computed exactly.  The running minimum is the monotone envelope of the
    norming-constant estimate as the sample grows.
    """
    if samples <= 0:
        raise ArgumentError("need a positive number of samples")
    Qf = orthonormal_rows(sys.fs, sys.tol.rank_tol)
    if Qf.shape[0] == 0:
        raise ArgumentError("functional span is zero")
    Qx = orthonormal_rows(sys.xs, sys.tol.rank_tol)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((samples, Qf.shape[0]))
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    fs = coeffs @ Qf
    values = np.linalg.norm(fs @ Qx.T, axis=1) if Qx.shape[0] else np.zeros(samples)
    return np.minimum.accumulate(values)


def norming_constant_estimate(sys: BiorthSystem, samples: int = 128, seed: int = 0) -> float:
    """Monte-Carlo lower estimate of the norming constant of the system.

    Deterministic given the seed; non-increasing in ``samples`` in
    expectation (it is a minimum over a growing sample set).
    """
    return float(norming_estimate_envelope(sys, samples, seed)[-1])


# ---------------------------------------------------------------------------
# spanning indices


class _PrefixSpan:
    """Incrementally grown orthonormal basis of row prefixes."""

    def __init__(self, rows: np.ndarray, rank_tol: float):
        self.rows = rows
        self.rank_tol = rank_tol
        self.basis: list[np.ndarray] = []
        self.used = 0

    def grow(self):
        """Append the next row's new direction (if any) to the basis."""
        r = self.rows[self.used].astype(float)
        scale = np.linalg.norm(r)
        for b in self.basis:
            r = r - (b @ r) * b
        # one reorthogonalization pass keeps the basis clean
        for b in self.basis:
            r = r - (b @ r) * b
        nrm = np.linalg.norm(r)
        if scale > 0 and nrm > self.rank_tol * scale:
            self.basis.append(r / nrm)
        self.used += 1

    def residual(self, v: np.ndarray) -> np.ndarray:
        for b in self.basis:
            v = v - (b @ v) * b
        return v


def spanning_indices(zsys: BiorthSystem, xsys: BiorthSystem, tol: float | None = None) -> list[int]:
    """The spanning indices q(m) of ``zsys`` relative to ``xsys``.

    q(m) is the least q such that every z_n and z_n* with n <= m lies
    within ``tol`` of span{x_1..x_q} resp. span{f_1..f_q} (distances taken
    on normalized vectors).  Raises when no q <= |xsys| works, naming the
    offending m.  The result is non-decreasing and q(m) >= m is verified.
    """
    tol = xsys.tol.span_tol if tol is None else tol
    if zsys.ambient_dim != xsys.ambient_dim:
        raise ArgumentError("systems live in different ambient dimensions")
    x_span = _PrefixSpan(xsys.xs, xsys.tol.rank_tol)
    f_span = _PrefixSpan(xsys.fs, xsys.tol.rank_tol)
    pending: list[np.ndarray] = []
    q = 0
    out = []
    for m in range(1, zsys.size + 1):
        zn = zsys.x(m)
        fn = zsys.f(m)
        for v, span in ((zn, x_span), (fn, f_span)):
            nrm = np.linalg.norm(v)
            if nrm == 0:
                raise ArgumentError(f"zero vector at position {m}")
            pending.append(span.residual(v / nrm))
        span_of = [x_span, f_span] * (len(pending) // 2)
        while any(np.linalg.norm(r) > tol for r in pending):
            if q >= xsys.size:
                raise ArgumentError(
                    f"no q <= {xsys.size} spans the first {m} pairs within tol {tol}"
                )
            x_span.grow()
            f_span.grow()
            q += 1
            pending = [
                (x_span if i % 2 == 0 else f_span).residual(r)
                for i, r in enumerate(pending)
            ]
        q_m = max(q, m)
        if q_m < m:
            raise ConstructionError(f"q({m}) = {q_m} fell below m; degenerate input")
        out.append(q_m)
    return out


# ---------------------------------------------------------------------------
# perturbation classification


@dataclass(frozen=True)
class PerturbationClass:
    """Verdict of :func:`classify_perturbation`.

    kind is 'block', 'pile' or 'neither'.  For a block verdict,
    ``intervals`` holds the maximal (finest) successive-interval witness.
    ``pile_prefixes`` lists every prefix length at which both prefix spans
    agree.
    """

    kind: str
    intervals: IntervalFamily | None
    pile_prefixes: tuple


def _prefix_agreements(zsys: BiorthSystem, xsys: BiorthSystem, tol: float) -> list[int]:
    out = []
    for m in range(1, min(zsys.size, xsys.size) + 1):
        if span_equal(zsys.xs[:m], xsys.xs[:m], tol) and span_equal(
            zsys.fs[:m], xsys.fs[:m], tol
        ):
            out.append(m)
    return out


def classify_perturbation(zsys: BiorthSystem, xsys: BiorthSystem,
                          tol: float | None = None) -> PerturbationClass:
    """Classify ``zsys`` as a block or pile perturbation of ``xsys``.

    Block boundaries are found greedily left to right, closing each
    interval at the earliest index where both span equalities hold; this
    yields the maximal refinement when one exists.  Every block verdict
    also satisfies the pile predicate (asserted).
    """
    tol = xsys.tol.span_tol if tol is None else tol
    if zsys.size != xsys.size:
        raise ArgumentError("systems must have equal length")
    n = zsys.size
    intervals = []
    start = 1
    for end in range(1, n + 1):
        zs = zsys.xs[start - 1:end]
        xs = xsys.xs[start - 1:end]
        zfs = zsys.fs[start - 1:end]
        xfs = xsys.fs[start - 1:end]
        if span_equal(zs, xs, tol) and span_equal(zfs, xfs, tol):
            intervals.append((start, end))
            start = end + 1
    block = start == n + 1 and intervals
    prefixes = tuple(_prefix_agreements(zsys, xsys, tol))
    if block:
        fam = IntervalFamily(tuple(intervals))
        assert prefixes, "block verdict must imply the pile predicate"
        return PerturbationClass("block", fam, prefixes)
    if prefixes:
        rights = tuple((1, m) for m in prefixes)
        return PerturbationClass("pile", IntervalFamily(rights), prefixes)
    return PerturbationClass("neither", None, ())


def block_duality_check(zsys: BiorthSystem, xsys: BiorthSystem,
                        intervals: IntervalFamily) -> bool:
    """Check the dual span equalities of a block family through complements.

    For each interval I(m), the functional span over I(m) of a block
    perturbation equals the orthogonal complement, inside the total vector
    span, of the span of the other blocks' vectors.  Both sides are
    computed that way from the vectors alone and compared within span_tol.
    """
    n = zsys.size
    if not intervals.covers(n):
        raise ArgumentError(f"interval family does not cover 1..{n}")
    tol = xsys.tol
    ok = True
    for lo, hi in intervals.intervals:
        inside = list(range(lo - 1, hi))
        outside = [i for i in range(n) if not lo - 1 <= i <= hi - 1]
        sides = []
        for sys in (zsys, xsys):
            total = orthonormal_rows(sys.xs, tol.rank_tol)
            others = orthonormal_rows(sys.xs[outside], tol.rank_tol) if outside else None
            if others is None or others.shape[0] == 0:
                comp = total
            else:
                resid = total - (total @ others.T) @ others
                # rows fully inside the other blocks' span project to zero
                # and carry no complement direction
                keep = np.linalg.norm(resid, axis=1) > tol.span_tol
                comp = orthonormal_rows(resid[keep], tol.rank_tol)
            sides.append(comp)
        ok = ok and span_equal(sides[0], sides[1], tol.span_tol)
        # cross-check against the actual functionals of each system
        for sys, comp in zip((zsys, xsys), sides):
            ok = ok and span_equal(sys.fs[inside], comp, tol.span_tol)
    return bool(ok)


def intersection_defect(sys: BiorthSystem, A, B) -> float:
    """Gap between the computed intersection span and span over A&B (1-based index sets).

    The intersection subspace is computed from principal vectors at angle
    near zero.  A zero value means the intersection identity holds for
    this pair, as it always does for linearly independent finite systems;
    the check is therefore a diagnostic, not a strongness proof.
    """
    A = sorted(set(int(a) for a in A))
    B = sorted(set(int(b) for b in B))
    for idx in (*A, *B):
        if not 1 <= idx <= sys.size:
            raise ArgumentError(f"index {idx} out of range 1..{sys.size}")
    tol = sys.tol
    QA = orthonormal_rows(sys.xs[[a - 1 for a in A]], tol.rank_tol) if A else np.zeros((0, sys.ambient_dim))
    QB = orthonormal_rows(sys.xs[[b - 1 for b in B]], tol.rank_tol) if B else np.zeros((0, sys.ambient_dim))
    if QA.shape[0] == 0 or QB.shape[0] == 0:
        inter = np.zeros((0, sys.ambient_dim))
    else:
        U, s, Vt = np.linalg.svd(QA @ QB.T)
        keep = s >= 1.0 - tol.span_tol
        principal = U[:, : s.size].T[keep]
        inter = principal @ QA if principal.shape[0] else np.zeros((0, sys.ambient_dim))
    both = sorted(set(A) & set(B))
    target = sys.xs[[i - 1 for i in both]] if both else np.zeros((0, sys.ambient_dim))
    return span_gap(inter, span_matrix(target, sys.ambient_dim), tol.rank_tol)
