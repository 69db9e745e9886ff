"""The polytope M(Q -> P) of matrices realizing every linear map from a
sequence-form polytope Q into a bounded standard-form polytope P.

Variables are the columns A_(σ) in R^d, one per source sequence, plus one
auxiliary vector b_j in R^k per source infoset.  The constraints are

    P A_(ja) = b_j                 for terminal sequences ja
    A_(σ) = 0                      for non-terminal sequences σ
    Σ_{j in C_∅} b_j = p
    Σ_{j' in C_ja} b_j' = b_j      for non-terminal sequences ja
    0 <= A <= γ

When the source has no infosets the empty sequence is terminal and the
single column must satisfy P A_(∅) = p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sequence_form import (
    PlanCapExceeded,
    SequenceIndex,
    StandardPolytope,
    best_response_values,
    enumerate_reduced_plans,
    plan_count,
    sequence_form_polytope,
    subtree_polytope,
)
from .tolerances import DEFAULT


class CanonicalizationError(ValueError):
    """The input matrix does not map Q into the target polytope."""


@dataclass(frozen=True)
class LinMapSystem:
    source: SequenceIndex
    target: StandardPolytope
    E: sp.csr_matrix  # equality rows over the packed variable vector
    f: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_labels: tuple[str, ...] = field(repr=False, default=())

    @property
    def d(self) -> int:
        return self.target.P.shape[1]

    @property
    def k(self) -> int:
        return self.target.P.shape[0]

    @property
    def n(self) -> int:
        return self.source.num_sequences

    @property
    def m(self) -> int:
        return self.source.num_infosets

    @property
    def gamma(self) -> float:
        return self.target.gamma

    @property
    def num_variables(self) -> int:
        return self.d * self.n + self.k * self.m

    @property
    def num_matrix_variables(self) -> int:
        return self.d * self.n

    def a_var(self, row: int, seq: int) -> int:
        return seq * self.d + row

    def b_var(self, j: int, row: int) -> int:
        return self.d * self.n + j * self.k + row

    def pack(self, A: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        z = np.zeros(self.num_variables)
        z[: self.d * self.n] = np.asarray(A, dtype=float).reshape(self.d, self.n).T.ravel()
        if b is None:
            b = membership_report(A, self, tol=np.inf).b
        if self.m:
            z[self.d * self.n :] = np.asarray(b, dtype=float).ravel()
        return z

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        A = z[: self.d * self.n].reshape(self.n, self.d).T.copy()
        b = z[self.d * self.n :].reshape(self.m, self.k).copy()
        return A, b


def compile_linmap_system(source: SequenceIndex, target: StandardPolytope) -> LinMapSystem:
    P = np.asarray(target.P, dtype=float)
    k, d = P.shape
    n, m = source.num_sequences, source.num_infosets
    terminal = source.terminal
    nvars = d * n + k * m

    def a_cols(seq):
        return np.arange(seq * d, (seq + 1) * d)

    def b_cols(j):
        return np.arange(d * n + j * k, d * n + (j + 1) * k)

    rows, cols, vals, rhs, labels = [], [], [], [], []
    r0 = 0

    def add_block(entries, rhs_block, label):
        nonlocal r0
        for c_idx, mat in entries:
            mat = sp.coo_matrix(mat)
            rows.extend(mat.row + r0)
            cols.extend(c_idx[mat.col])
            vals.extend(mat.data)
        rhs.extend(rhs_block)
        labels.extend(f"{label}[{i}]" for i in range(len(rhs_block)))
        r0 += len(rhs_block)

    eye_k = sp.identity(k, format="coo")
    if m == 0:
        add_block([(a_cols(0), P)], target.p, "root(∅)")
    for s in range(1, n):
        if terminal[s]:
            j = source.seq_infoset[s]
            add_block([(a_cols(s), P), (b_cols(j), -eye_k)], np.zeros(k), f"term({source.seq_name(s)})")
    if m:
        add_block([(b_cols(j), eye_k) for j in source.root_infosets], target.p, "root")
    for s in range(1, n):
        if not terminal[s]:
            j = source.seq_infoset[s]
            entries = [(b_cols(jj), eye_k) for jj in source.children[s]]
            entries.append((b_cols(j), -eye_k))
            add_block(entries, np.zeros(k), f"flow({source.seq_name(s)})")

    E = sp.csr_matrix((vals, (rows, cols)), shape=(r0, nvars))
    E.sum_duplicates()
    lower = np.full(nvars, -np.inf)
    upper = np.full(nvars, np.inf)
    lower[: d * n] = 0.0
    upper[: d * n] = target.gamma
    for s in range(n):
        if not terminal[s]:
            upper[a_cols(s)] = 0.0
    return LinMapSystem(
        source, target, E, np.asarray(rhs, dtype=float), lower, upper, tuple(labels)
    )


def compile_self_map_system(index: SequenceIndex) -> LinMapSystem:
    return compile_linmap_system(index, sequence_form_polytope(index))


# -- membership -------------------------------------------------------------


@dataclass
class MembershipReport:
    ok: bool
    residual: float
    violations: list[str]
    b: np.ndarray

    def __bool__(self) -> bool:
        return self.ok


def membership_report(A: np.ndarray, system: LinMapSystem, tol: float = DEFAULT.audit) -> MembershipReport:
    """Check A against the system by assigning every b_j bottom-up."""
    A = np.asarray(A, dtype=float)
    ix = system.source
    if A.shape != (system.d, system.n):
        raise ValueError(f"matrix shape {A.shape} does not match ({system.d}, {system.n})")
    P, p = system.target.P, system.target.p
    terminal = ix.terminal
    b = np.zeros((system.m, system.k))
    issues: list[tuple[float, str]] = []

    for j in reversed(range(ix.num_infosets)):
        cands = []
        for s in ix.seqs_of(j):
            if terminal[s]:
                cands.append(P @ A[:, s])
            else:
                cands.append(b[list(ix.children[s])].sum(axis=0))
        b[j] = cands[0]
        for s, c in zip(ix.seqs_of(j), cands):
            dev = float(np.max(np.abs(c - b[j]), initial=0.0))
            issues.append((dev, f"infoset {ix.infosets[j]!r}: sequence {ix.seq_name(s)} disagrees by {dev:.3g}"))

    if system.m:
        top = b[list(ix.root_infosets)].sum(axis=0)
    else:
        top = P @ A[:, 0]
    dev = float(np.max(np.abs(top - p), initial=0.0))
    issues.append((dev, f"root constraint off by {dev:.3g}"))

    for s in range(system.n):
        if not terminal[s]:
            dev = float(np.max(np.abs(A[:, s]), initial=0.0))
            issues.append((dev, f"non-terminal column {ix.seq_name(s)} has magnitude {dev:.3g}"))

    lo = max(0.0, -float(A.min(initial=0.0)))
    hi = max(0.0, float(A.max(initial=0.0)) - system.gamma)
    issues.append((lo, f"entry below 0 by {lo:.3g}"))
    issues.append((hi, f"entry above gamma by {hi:.3g}"))

    residual = max(v for v, _ in issues)
    violations = [msg for v, msg in issues if v > tol]
    return MembershipReport(residual <= tol, residual, violations, b)


def check_membership(A: np.ndarray, system: LinMapSystem, tol: float = DEFAULT.audit) -> bool:
    return membership_report(A, system, tol).ok


# -- canonicalization ---------------------------------------------------------


def _vertex_plans(index: SequenceIndex, cap: int):
    if plan_count(index) > cap:
        return None
    try:
        return enumerate_reduced_plans(index, cap)
    except PlanCapExceeded:
        return None


def canonicalize(
    B: np.ndarray,
    system: LinMapSystem,
    verify: bool = True,
    cap: int = 10_000,
    tol: float = DEFAULT.audit,
) -> np.ndarray:
    """Rewrite B as an equivalent member of the system.

    Non-terminal columns are pushed down onto the first child infoset's action
    columns (valid because the child's sequences sum to the parent).  Where a
    sequence has several child infosets, each but the last subtree is shifted
    by its coordinate-wise minimum over the subtree polytope and the total is
    added to the last one, which leaves the map unchanged on Q while making
    every subtree block map into the nonnegative orthant.
    """
    ix = system.source
    A = np.array(B, dtype=float, copy=True)
    if A.shape != (system.d, system.n):
        raise ValueError(f"matrix shape {A.shape} does not match ({system.d}, {system.n})")

    plans = _vertex_plans(ix, cap) if verify else None
    if plans is not None:
        for plan in plans:
            res = system.target.residual(A @ plan)
            if res > tol:
                raise CanonicalizationError(
                    f"plan {np.flatnonzero(plan).tolist()} is mapped outside the target "
                    f"(residual {res:.3g})"
                )

    def settle(s: int) -> None:
        kids = ix.children[s]
        if not kids:
            return
        first = list(ix.seqs_of(kids[0]))
        A[:, first] += A[:, [s]]
        A[:, s] = 0.0
        if len(kids) > 1:
            val, _ = best_response_values(ix, A)
            total = np.zeros(system.d)
            for j in kids[:-1]:
                beta = val[:, j]
                A[:, list(ix.seqs_of(j))] -= beta[:, None]
                total += beta
            A[:, list(ix.seqs_of(kids[-1]))] += total[:, None]
        for j in kids:
            for t in ix.seqs_of(j):
                settle(t)

    settle(0)
    # clean round-off at the box edges
    A[np.abs(A) < 1e-15] = 0.0

    if plans is not None:
        gap = float(np.max(np.abs(A @ plans.T - B @ plans.T), initial=0.0))
        if gap > tol:
            raise CanonicalizationError(f"canonical form differs from input on plans by {gap:.3g}")
        report = membership_report(A, system, tol)
        if not report.ok:
            raise CanonicalizationError("; ".join(report.violations))
    return A


# -- constructors for particular maps ----------------------------------------------


def constant_map(index: SequenceIndex, y: np.ndarray) -> np.ndarray:
    """Matrix sending every point of Q to y (uses x[∅] = 1)."""
    A = np.zeros((len(y), index.num_sequences))
    A[:, 0] = y
    return A


def lift_affine(F: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Linear matrix equal to x -> F x + offset on Q."""
    A = np.array(F, dtype=float, copy=True)
    A[:, 0] += offset
    return A


def _embed_continuation(index: SequenceIndex, j: int | None, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if j is None:
        if y.shape != (index.num_sequences,):
            raise ValueError("continuation for the empty trigger must be a full strategy")
        return y
    cols = index.seqs_below_infoset(j)
    if y.shape == (len(cols),):
        full = np.zeros(index.num_sequences)
        full[cols] = y
        return full
    if y.shape != (index.num_sequences,):
        raise ValueError("continuation has the wrong length")
    outside = np.setdiff1d(np.arange(index.num_sequences), cols)
    if np.any(np.abs(y[outside]) > DEFAULT.feasibility):
        raise ValueError("continuation has mass outside the triggered subtree")
    return y


def trigger_map(index: SequenceIndex, trigger: int, continuation: np.ndarray,
                tol: float = DEFAULT.feasibility) -> np.ndarray:
    """Raw (uncanonicalized) trigger deviation.

    Plans that contain the trigger sequence (j, a) have their behavior at j and
    below replaced by the continuation, a point of the subtree polytope at j.
    Trigger 0 (the empty sequence) replaces everything, giving a constant map.
    """
    n = index.num_sequences
    if trigger == 0:
        y = _embed_continuation(index, None, continuation)
        res = sequence_form_polytope(index).residual(y)
    else:
        j = index.seq_infoset[trigger]
        y = _embed_continuation(index, j, continuation)
        cols = index.seqs_below_infoset(j)
        res = subtree_polytope(index, j).residual(y[cols])
    if res > tol:
        raise ValueError(f"continuation is infeasible (residual {res:.3g})")
    A = np.eye(n)
    below = index.seqs_from(trigger)
    A[below, below] = 0.0
    A[:, trigger] += y
    return A


def trigger_deviation_matrix(index: SequenceIndex, trigger: int, continuation: np.ndarray,
                             system: LinMapSystem | None = None) -> np.ndarray:
    if system is None:
        system = compile_self_map_system(index)
    return canonicalize(trigger_map(index, trigger, continuation), system)


# -- inequality-form targets ----------------------------------------------------


@dataclass(frozen=True)
class InequalityTarget:
    """A bounded polytope {y : C y <= c} inside [-γ, γ]^n, with its standard-form lift.

    The lift is {(ỹ, s) >= 0 : C ỹ + k n s = c + γ C 1}, contained in [0, 2γ]^(n+m),
    where k bounds the magnitudes of C and c; ỹ = y + γ 1.
    """

    C: np.ndarray
    c: np.ndarray
    gamma: float

    @property
    def scale(self) -> float:
        n = self.C.shape[1]
        kmax = max(float(np.max(np.abs(self.C))), float(np.max(np.abs(self.c))), 1e-300)
        return kmax * n

    def standard_form(self) -> StandardPolytope:
        mrows, n = self.C.shape
        P = np.hstack([self.C, self.scale * np.eye(mrows)])
        p = self.c + self.gamma * self.C.sum(axis=1)
        return StandardPolytope(P, p, 2.0 * self.gamma)

    def lift(self, F: np.ndarray, offset: np.ndarray) -> np.ndarray:
        """Matrix realizing x -> (F x + offset + γ1, slack) on Q."""
        F = np.asarray(F, dtype=float)
        top = lift_affine(F, offset + self.gamma)
        slack = -self.C @ F
        slack[:, 0] += self.c - self.C @ offset
        return np.vstack([top, slack / self.scale])

    def extract(self, A_lifted: np.ndarray) -> np.ndarray:
        """Back from a lifted member to a matrix realizing the affine map into C."""
        n = self.C.shape[1]
        A = np.array(A_lifted[:n], dtype=float, copy=True)
        A[:, 0] -= self.gamma
        return A
