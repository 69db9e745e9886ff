"""Linear programs, Euclidean projections and fixed points with explicit accuracy contracts."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linprog

from .linmap import LinMapSystem
from .sequence_form import StandardPolytope
from .tolerances import DEFAULT


class LPError(RuntimeError):
    pass


class LPInfeasible(LPError):
    pass


class LPUnbounded(LPError):
    pass


class LPIterationLimit(LPError):
    pass


class ProjectionError(RuntimeError):
    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


class FixedPointError(RuntimeError):
    pass


# -- linear programming -------------------------------------------------------


@dataclass
class LinearProgram:
    """min (or max) c.x subject to A_eq x = b_eq, A_ub x <= b_ub, lower <= x <= upper."""

    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def bounds(self) -> list[tuple[float | None, float | None]]:
        n = len(self.c)
        lo = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        return [
            (None if not np.isfinite(a) else float(a), None if not np.isfinite(b) else float(b))
            for a, b in zip(lo, hi)
        ]


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    duality_gap: float
    primal_residual: float
    iterations: int = 0


def _residual(lp: LinearProgram, x: np.ndarray) -> float:
    res = 0.0
    if lp.A_eq is not None:
        res = max(res, float(np.max(np.abs(lp.A_eq @ x - lp.b_eq), initial=0.0)))
    if lp.A_ub is not None:
        res = max(res, float(np.max(lp.A_ub @ x - lp.b_ub, initial=0.0)))
    for xi, (a, b) in zip(x, lp.bounds()):
        if a is not None:
            res = max(res, a - xi)
        if b is not None:
            res = max(res, xi - b)
    return res


def solve_lp(lp: LinearProgram, tol: float = DEFAULT.solve) -> LPResult:
    c = np.asarray(lp.c, dtype=float)
    sign = -1.0 if lp.maximize else 1.0
    highs_tol = max(min(tol, 1e-7) / 10, 1e-10)  # HiGHS rejects values below 1e-10
    out = linprog(
        sign * c,
        A_ub=lp.A_ub,
        b_ub=lp.b_ub,
        A_eq=lp.A_eq,
        b_eq=lp.b_eq,
        bounds=lp.bounds(),
        method="highs",
        options={
            "primal_feasibility_tolerance": highs_tol,
            "dual_feasibility_tolerance": highs_tol,
        },
    )
    if out.status == 2:
        raise LPInfeasible(out.message)
    if out.status == 3:
        raise LPUnbounded(out.message)
    if out.status == 1:
        raise LPIterationLimit(out.message)
    if out.status != 0:
        raise LPError(out.message)
    x = out.x
    primal = float(sign * c @ x)
    dual = 0.0
    if lp.A_eq is not None:
        dual += float(np.asarray(lp.b_eq) @ out.eqlin.marginals)
    if lp.A_ub is not None:
        dual += float(np.asarray(lp.b_ub) @ out.ineqlin.marginals)
    bnds = lp.bounds()
    lo = np.array([0.0 if a is None else a for a, _ in bnds])
    hi = np.array([0.0 if b is None else b for _, b in bnds])
    dual += float(lo @ out.lower.marginals + hi @ out.upper.marginals)
    return LPResult(
        x=x,
        value=sign * primal,
        duality_gap=abs(primal - dual),
        primal_residual=_residual(lp, x),
        iterations=int(getattr(out, "nit", 0)),
    )


def maximize_over_system(system: LinMapSystem, objective: np.ndarray,
                         tol: float = DEFAULT.solve) -> tuple[np.ndarray, float]:
    """max <objective, A> over the compiled system; returns (A, value)."""
    c = np.zeros(system.num_variables)
    c[: system.num_matrix_variables] = np.asarray(objective, dtype=float).T.ravel()
    lp = LinearProgram(c, system.E, system.f, lower=system.lower, upper=system.upper, maximize=True)
    res = solve_lp(lp, tol)
    A, _ = system.unpack(res.x)
    return A, res.value


# -- Euclidean projection -------------------------------------------------------


@dataclass
class BoxEqualitySet:
    """{y : E y = f, lo <= y <= hi} with finite bounds."""

    E: np.ndarray
    f: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    @cached_property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass
class ProjectionResult:
    y: np.ndarray
    gap: float  # duality gap; ‖y - y*‖² <= 2 gap
    iterations: int
    residual: float

    @property
    def error_bound(self) -> float:
        return 2.0 * self.gap


def _dual_value(S: BoxEqualitySet, q: np.ndarray, lam: np.ndarray) -> tuple[float, np.ndarray]:
    y = np.clip(q + S.E.T @ lam, S.lo, S.hi)
    return 0.5 * float((y - q) @ (y - q)) - float(lam @ (S.E @ y - S.f)), y


def project_box_equality(
    S: BoxEqualitySet, q: np.ndarray, eps: float = 1e-12, max_iter: int = 200,
    feas_tol: float = DEFAULT.feasibility,
) -> ProjectionResult:
    """Euclidean projection by a semismooth Newton method on the dual.

    The dual variable λ of E y = f gives y(λ) = clip(q + Eᵀλ).  Newton steps
    use the generalized Hessian E_F E_Fᵀ over currently free coordinates.  The
    iterate is polished by an equality-constrained least-squares solve on the
    identified free set, and accepted once the duality gap certifies
    ‖y − y*‖² <= eps.
    """
    q = np.asarray(q, dtype=float)
    E, f = S.E, S.f
    rows = E.shape[0]
    if rows == 0:
        y = np.clip(q, S.lo, S.hi)
        return ProjectionResult(y, 0.0, 0, 0.0)
    lam = np.zeros(rows)
    g_val, y = _dual_value(S, q, lam)
    best = None
    scale = 1.0 + float(np.abs(f).max(initial=0.0)) + float(np.abs(q).max(initial=0.0))
    it = 0
    for it in range(1, max_iter + 1):
        grad = f - E @ y  # ascent direction of the concave dual
        free = (q + E.T @ lam > S.lo) & (q + E.T @ lam < S.hi)
        Ef = E[:, free]
        H = Ef @ Ef.T + 1e-12 * scale * np.eye(rows)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t, accepted = 1.0, False
        slope = float(grad @ step)
        for _ in range(60):
            cand_val, cand_y = _dual_value(S, q, lam + t * step)
            if cand_val >= g_val + 1e-4 * t * slope or t < 1e-12:
                accepted = True
                break
            t *= 0.5
        if accepted:
            lam = lam + t * step
            g_val, y = cand_val, cand_y

        cand = _polish(S, q, y)
        if cand is not None:
            gap = min(_gap(S, q, cand, lam), _gap(S, q, cand, _recover_dual(S, q, cand)))
            res = float(np.max(np.abs(E @ cand - f), initial=0.0))
            if res <= feas_tol:
                if best is None or gap < best.gap:
                    best = ProjectionResult(cand, gap, it, res)
                if 2.0 * gap <= eps:
                    return best
        if float(np.max(np.abs(grad), initial=0.0)) < 1e-15 * scale and not accepted:
            break
    achieved = np.inf if best is None else best.gap
    raise ProjectionError(
        f"projection accuracy {eps:.3g} not reached in {it} iterations (gap {achieved:.3g})",
        achieved,
    )


def _gap(S: BoxEqualitySet, q: np.ndarray, y: np.ndarray, lam: np.ndarray) -> float:
    """Duality gap of a feasible y against the dual point lam.

    Equals ½‖y − w‖² − ½‖clip(w) − w‖² with w = q + Eᵀλ, written without
    cancellation between the two large terms.
    """
    w = q + S.E.T @ lam
    y_lam = np.clip(w, S.lo, S.hi)
    diff = y - y_lam
    return max(0.5 * float(diff @ diff) + float(diff @ (y_lam - w)), 0.0)


def _recover_dual(S: BoxEqualitySet, q: np.ndarray, y: np.ndarray) -> np.ndarray:
    span = S.hi - S.lo
    free = (y > S.lo + 1e-12 * span) & (y < S.hi - 1e-12 * span)
    if not np.any(free):
        return np.zeros(S.E.shape[0])
    return np.linalg.lstsq(S.E[:, free].T, (y - q)[free], rcond=None)[0]


def _polish(S: BoxEqualitySet, q: np.ndarray, y: np.ndarray) -> np.ndarray | None:
    """Restore E y = f exactly on the free coordinates of y, keeping the box."""
    span = S.hi - S.lo
    free = (y > S.lo + 1e-14 * span) & (y < S.hi - 1e-14 * span)
    r = S.f - S.E @ y
    if not np.any(free):
        return y if float(np.max(np.abs(r), initial=0.0)) <= 1e-12 else None
    Ef = S.E[:, free]
    delta = np.linalg.lstsq(Ef, r, rcond=None)[0]
    out = y.copy()
    out[free] += delta
    if np.any(out < S.lo - 1e-13) or np.any(out > S.hi + 1e-13):
        return None
    return np.clip(out, S.lo, S.hi)


def polytope_as_box_set(Q: StandardPolytope) -> BoxEqualitySet:
    d = Q.P.shape[1]
    return BoxEqualitySet(np.asarray(Q.P, dtype=float), np.asarray(Q.p, dtype=float),
                          np.zeros(d), np.full(d, Q.gamma))


@dataclass
class MatrixProjector:
    """Projection onto the matrix part of a LinMapSystem.

    The auxiliary b_j variables are eliminated: a matrix is feasible iff
    f − E_A a lies in the range of E_b, i.e. W E_A a = W f for a basis W of the
    left null space of E_b.  Only terminal columns carry free entries.
    """

    system: LinMapSystem
    reduced: BoxEqualitySet = field(init=False)
    columns: np.ndarray = field(init=False)  # packed positions of free matrix entries

    def __post_init__(self):
        sysm = self.system
        nA = sysm.num_matrix_variables
        E = sysm.E.toarray() if sp.issparse(sysm.E) else np.asarray(sysm.E)
        EA, Eb = E[:, :nA], E[:, nA:]
        W = sla.null_space(Eb.T).T if Eb.shape[1] else np.eye(E.shape[0])
        keep = np.flatnonzero(sysm.upper[:nA] > 0)
        Er = W @ EA[:, keep]
        fr = W @ sysm.f
        # drop numerically empty rows
        norms = np.abs(Er).max(axis=1, initial=0.0)
        mask = norms > 1e-12
        if np.any(~mask) and np.any(np.abs(fr[~mask]) > 1e-9):
            raise ValueError("system is infeasible")
        Er, fr = Er[mask], fr[mask]
        # orthonormalize the row space for a well-conditioned dual
        if Er.shape[0]:
            U, s, Vt = np.linalg.svd(Er, full_matrices=False)
            rank = int(np.sum(s > 1e-10 * s[0]))
            Er = Vt[:rank]
            fr = (U[:, :rank].T @ fr) / s[:rank]
        self.columns = keep
        self.reduced = BoxEqualitySet(Er, fr, sysm.lower[keep], sysm.upper[keep])

    def project(self, Q: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, ProjectionResult]:
        sysm = self.system
        q = np.asarray(Q, dtype=float).T.ravel()  # packed column-major
        res = project_box_equality(self.reduced, q[self.columns], eps)
        a = np.zeros(sysm.num_matrix_variables)
        a[self.columns] = res.y
        A = a.reshape(sysm.n, sysm.d).T
        return A, res


@dataclass
class ProjectionTask:
    target: object  # LinMapSystem or StandardPolytope
    query: np.ndarray
    eps: float = 1e-12


def euclidean_project(task: ProjectionTask) -> tuple[np.ndarray, ProjectionResult]:
    """Project the query; repeated projections onto one system should reuse a MatrixProjector."""
    if isinstance(task.target, LinMapSystem):
        return MatrixProjector(task.target).project(task.query, task.eps)
    if isinstance(task.target, StandardPolytope):
        res = project_box_equality(polytope_as_box_set(task.target), task.query, task.eps)
        return res.y, res
    raise TypeError(f"cannot project onto {type(task.target).__name__}")


def variational_slack(q: np.ndarray, y: np.ndarray, samples: np.ndarray, eps: float) -> float:
    """Largest excess of <q − y, z − y> over its allowance for sampled feasible z.

    For the exact projection y* the inner product is <= 0; an approximate y with
    ‖y − y*‖ <= √eps may exceed zero by at most √eps (‖q − y‖ + √eps + ‖z − y‖).
    A nonpositive return value certifies the sample.
    """
    q, y = np.ravel(q), np.ravel(y)
    r = np.sqrt(eps)
    worst = -np.inf
    for z in samples:
        z = np.ravel(z)
        allowance = r * (np.linalg.norm(q - y) + r + np.linalg.norm(z - y))
        worst = max(worst, float((q - y) @ (z - y)) - allowance)
    return worst


# -- fixed points -----------------------------------------------------------------


def fixed_point(A: np.ndarray, Q: StandardPolytope, tol: float = DEFAULT.fixed_point) -> np.ndarray:
    """A point x of Q with A x = x, found by an LP feasibility problem.

    The LP is solved at the solver's default tolerances and the answer is then
    polished by a least-squares correction on its support; very tight solver
    tolerances were observed to misreport feasible instances as infeasible.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    M = np.vstack([Q.P, A - np.eye(n)])
    rhs = np.concatenate([Q.p, np.zeros(n)])
    bounds = [(0.0, Q.gamma)] * n
    best, best_err = None, np.inf
    for attempt in ("highs-ds", "highs-ipm", "slack"):
        if attempt == "slack":
            # A that sits in M only up to rounding can make the exact system
            # infeasible; minimizing the fixed-point residual always succeeds.
            I = np.eye(n)
            out = linprog(
                np.concatenate([np.zeros(n), np.ones(2 * n)]),
                A_eq=np.block([
                    [Q.P, np.zeros((Q.P.shape[0], 2 * n))],
                    [A - I, I, -I],
                ]),
                b_eq=rhs,
                bounds=bounds + [(0.0, None)] * (2 * n),
                method="highs-ds",
                options={"primal_feasibility_tolerance": 1e-10,
                         "dual_feasibility_tolerance": 1e-10},
            )
        else:
            out = linprog(np.zeros(n), A_eq=M, b_eq=rhs, bounds=bounds, method=attempt)
        if out.status != 0:
            continue
        x = np.clip(out.x[:n], 0.0, Q.gamma) + 0.0
        for _ in range(3):
            err = _fp_error(A, Q, x)
            if err < best_err:
                best, best_err = x, err
            if err <= min(tol, DEFAULT.feasibility) / 10:
                break
            x = _polish_fixed_point(M, rhs, x, Q.gamma)
        if best_err <= min(tol, DEFAULT.feasibility):
            break
    if best is None:
        raise FixedPointError("no fixed point found; the matrix may lie outside M")
    if float(np.max(np.abs(A @ best - best))) > tol or Q.residual(best) > DEFAULT.feasibility:
        raise FixedPointError(f"fixed point residual {best_err:.3g} exceeds {tol:.3g}")
    return best


def _fp_error(A, Q, x):
    return max(float(np.max(np.abs(A @ x - x))), Q.residual(x))


def _polish_fixed_point(M, rhs, x, gamma):
    support = x > 1e-12
    r = rhs - M @ x
    delta = np.linalg.lstsq(M[:, support], r, rcond=None)[0]
    out = x.copy()
    out[support] += delta
    return np.clip(out, 0.0, gamma) + 0.0
