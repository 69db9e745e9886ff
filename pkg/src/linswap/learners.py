"""Online learners over sequence-form strategy spaces and the self-play driver.

The linear-swap learner runs projected gradient descent over the matrix
polytope M(Q -> Q) and plays a fixed point of its current matrix.  The
trigger learner does the same over the convex hull of trigger deviations,
and the external learner over Q itself (constant maps).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex_opt import BoxEqualitySet, MatrixProjector, fixed_point, project_box_equality
from .efg.model import GameTree
from .linmap import (
    canonicalize,
    compile_self_map_system,
    constant_map,
    membership_report,
)
from .payoffs import leaf_table
from .sequence_form import (
    SequenceIndex,
    derive_sequence_index,
    first_plan,
    sample_plan,
    sequence_form_polytope,
)
from .tolerances import DEFAULT, projection_accuracy

LEARNER_KINDS = ("linear-swap", "trigger", "external")


class AuditError(RuntimeError):
    """A learner iterate violated its membership or fixed-point postcondition."""


@dataclass(frozen=True)
class LearnerConfig:
    schedule: str = "sqrt"  # "sqrt": eta / sqrt(t); "constant": eta
    eta: float = 1.0
    eps_floor: float = 1e-12
    audit: bool = True
    verify_canonical: bool = True

    def __post_init__(self):
        if self.schedule not in ("sqrt", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not self.eta > 0:
            raise ValueError("step size must be positive")

    def step_size(self, t: int) -> float:
        return self.eta / np.sqrt(t) if self.schedule == "sqrt" else self.eta

    def accuracy(self, t: int) -> float:
        return projection_accuracy(t, self.eps_floor)


@dataclass
class AuditLog:
    membership: float = 0.0
    fixed_point: float = 0.0

    def record(self, membership: float, fp: float) -> None:
        self.membership = max(self.membership, membership)
        self.fixed_point = max(self.fixed_point, fp)


class _Learner:
    kind = ""

    def __init__(self, index: SequenceIndex, config: LearnerConfig | None = None):
        self.index = index
        self.config = config or LearnerConfig()
        self.system = compile_self_map_system(index)
        self.Q = sequence_form_polytope(index)
        self.t = 1
        self.audit = AuditLog()
        self.payoff_ledger = 0.0  # Σ <ℓ^t, x^t>
        self.matrix_ledger = 0.0  # Σ <ℓ^t x^tᵀ, A^t>
        n = index.num_sequences
        self.G = np.zeros((n, n))  # Σ ℓ^t x^tᵀ

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def A(self) -> np.ndarray:
        return self._A

    def _check(self) -> None:
        if not self.config.audit:
            return
        rep = membership_report(self._A, self.system, DEFAULT.audit)
        fp = float(np.max(np.abs(self._A @ self._x - self._x)))
        self.audit.record(rep.residual, fp)
        if not rep.ok:
            raise AuditError(f"iteration {self.t}: matrix left M: {rep.violations[:3]}")
        if fp > DEFAULT.fixed_point or self.Q.residual(self._x) > DEFAULT.feasibility:
            raise AuditError(f"iteration {self.t}: fixed-point residual {fp:.3g}")

    def observe(self, loss: np.ndarray) -> None:
        loss = np.asarray(loss, dtype=float)
        if loss.shape != (self.index.num_sequences,):
            raise ValueError("loss vector has the wrong length")
        if np.any(loss < -1e-12) or np.any(loss > 1 + 1e-12):
            raise ValueError("losses must lie in [0, 1]")
        L = np.outer(loss, self._x)
        self.G += L
        self.payoff_ledger += float(loss @ self._x)
        self.matrix_ledger += float(np.sum(L * self._A))
        self._step(L, self.config.step_size(self.t), self.config.accuracy(self.t))
        self.t += 1
        self._check()

    def _step(self, L: np.ndarray, eta: float, eps: float) -> None:
        raise NotImplementedError


class LinearSwapLearner(_Learner):
    """Projected gradient descent over M(Q -> Q) followed by a fixed-point computation."""

    kind = "linear-swap"

    def __init__(self, index, config=None):
        super().__init__(index, config)
        self.projector = MatrixProjector(self.system)
        plan = first_plan(index)
        self._A = canonicalize(constant_map(index, plan), self.system)
        self._x = plan
        self._check()

    def _step(self, L, eta, eps):
        self._A, _ = self.projector.project(self._A - eta * L, eps)
        self._x = fixed_point(self._A, self.Q)


class ExternalLearner(_Learner):
    """Projected gradient descent over Q; its play corresponds to constant maps."""

    kind = "external"

    def __init__(self, index, config=None):
        super().__init__(index, config)
        Q = self.Q
        self._box = BoxEqualitySet(Q.P, Q.p, np.zeros(index.num_sequences), np.ones(index.num_sequences))
        self._x = first_plan(index)
        self._A = canonicalize(constant_map(index, self._x), self.system,
                               verify=self.config.verify_canonical)
        self._check()

    def _step(self, L, eta, eps):
        # <L, y e_∅ᵀ> = <L[:, ∅], y>
        res = project_box_equality(self._box, self._x - eta * L[:, 0], eps)
        self._x = res.y
        self._A = canonicalize(constant_map(self.index, self._x), self.system,
                               verify=self.config.verify_canonical)


@dataclass(frozen=True)
class TriggerHull:
    """Explicit description of the convex hull of trigger deviations.

    Variables: weights λ_σ̂ over all triggers σ̂ (the empty sequence included)
    and, per trigger, a scaled continuation z_σ̂ in λ_σ̂ times the subtree
    polytope at σ̂'s infoset (all of Q for the empty trigger).  The matrix is
    Σ λ_σ̂ (I − D_σ̂) + Σ z_σ̂ e_σ̂ᵀ with D_σ̂ the diagonal indicator of the
    sequences extending σ̂.
    """

    index: SequenceIndex
    box: BoxEqualitySet
    blocks: tuple[np.ndarray, ...]  # per trigger: global sequence ids of its continuation
    offsets: tuple[int, ...]  # per trigger: start of its continuation variables

    @classmethod
    def build(cls, index: SequenceIndex) -> "TriggerHull":
        n = index.num_sequences
        blocks, offsets = [], []
        pos = n
        for s in range(n):
            cols = list(range(n)) if s == 0 else index.seqs_below_infoset(index.seq_infoset[s])
            blocks.append(np.array(cols, dtype=int))
            offsets.append(pos)
            pos += len(cols)
        rows = []
        rhs = []
        top = np.zeros(pos)
        top[:n] = 1.0
        rows.append(top)
        rhs.append(1.0)
        for s in range(n):
            cols = blocks[s]
            where = {c: offsets[s] + k for k, c in enumerate(cols)}
            if s == 0:
                r = np.zeros(pos)
                r[where[0]] = 1.0
                r[s] = -1.0
                rows.append(r)
                rhs.append(0.0)
                infosets = range(index.num_infosets)
            else:
                infosets = index.infosets_below(index.seq_infoset[s])
            head = None if s == 0 else index.seq_infoset[s]
            for j in infosets:
                r = np.zeros(pos)
                for c in index.seqs_of(j):
                    r[where[c]] = 1.0
                if j == head:
                    r[s] = -1.0  # Σ_a z[ja] = λ_σ̂
                else:
                    r[where[index.parent[j]]] -= 1.0
                rows.append(r)
                rhs.append(0.0)
        box = BoxEqualitySet(np.array(rows), np.array(rhs), np.zeros(pos), np.ones(pos))
        return cls(index, box, tuple(blocks), tuple(offsets))

    def matrix(self, v: np.ndarray) -> np.ndarray:
        ix = self.index
        n = ix.num_sequences
        A = np.zeros((n, n))
        for s in range(n):
            lam = v[s]
            if lam != 0.0:
                diag = np.ones(n)
                diag[ix.seqs_from(s)] = 0.0
                A[np.arange(n), np.arange(n)] += lam * diag
            cols = self.blocks[s]
            A[cols, s] += v[self.offsets[s] : self.offsets[s] + len(cols)]
        return A

    def gradient(self, L: np.ndarray) -> np.ndarray:
        """Gradient of v -> <L, matrix(v)>."""
        ix = self.index
        n = ix.num_sequences
        g = np.zeros(self.box.dim)
        tr = float(np.trace(L))
        diag = np.diag(L)
        for s in range(n):
            g[s] = tr - diag[ix.seqs_from(s)].sum()
            cols = self.blocks[s]
            g[self.offsets[s] : self.offsets[s] + len(cols)] = L[cols, s]
        return g

    def constant(self, y: np.ndarray) -> np.ndarray:
        v = np.zeros(self.box.dim)
        v[0] = 1.0
        v[self.offsets[0] : self.offsets[0] + len(y)] = y
        return v


class TriggerLearner(_Learner):
    """Projected gradient descent over the hull of trigger deviations, playing fixed points."""

    kind = "trigger"

    def __init__(self, index, config=None):
        super().__init__(index, config)
        self.hull = TriggerHull.build(index)
        plan = first_plan(index)
        self._v = self.hull.constant(plan)
        self._x = plan
        self._A = canonicalize(self.hull.matrix(self._v), self.system,
                               verify=self.config.verify_canonical)
        self._check()

    def _step(self, L, eta, eps):
        res = project_box_equality(self.hull.box, self._v - eta * self.hull.gradient(L), eps)
        self._v = res.y
        raw = self.hull.matrix(self._v)
        self._x = fixed_point(raw, self.Q)
        self._A = canonicalize(raw, self.system, verify=self.config.verify_canonical)


def make_learner(kind: str, index: SequenceIndex, config: LearnerConfig | None = None) -> _Learner:
    classes = {"linear-swap": LinearSwapLearner, "trigger": TriggerLearner, "external": ExternalLearner}
    try:
        return classes[kind](index, config)
    except KeyError:
        raise ValueError(f"unknown learner kind {kind!r}; expected one of {LEARNER_KINDS}") from None


# -- losses and self-play ----------------------------------------------------------------


def build_loss_vector(game: GameTree, player: int, strategies, table=None) -> np.ndarray:
    """Per-sequence loss of `player` against the others' sequence-form strategies.

    ℓ[σ] sums, over leaves whose last own sequence is σ, chance reach times
    the others' reach times (u_max − u)/(u_max − u_min), the player's utility
    range being taken over all leaves.  A constant-utility player gets ℓ = 0.
    """
    table = table or leaf_table(game)
    return table.loss_vector(player, strategies)


@dataclass
class PlayerTrace:
    kind: str
    index: SequenceIndex
    strategies: np.ndarray  # (T, |Σ|)
    losses: np.ndarray  # (T, |Σ|)
    payoffs: np.ndarray  # (T,) expected utility at each iteration
    matrices: dict[int, np.ndarray] = field(default_factory=dict)  # iteration -> A^t (thinned)
    sampled: np.ndarray | None = None
    payoff_ledger: float = 0.0
    matrix_ledger: float = 0.0
    cumulative: np.ndarray | None = None  # Σ ℓ^t x^tᵀ as tracked by the learner
    audit: AuditLog = field(default_factory=AuditLog)


@dataclass
class PlayTrace:
    players: list[PlayerTrace]
    complete: bool = True
    error: str = ""

    @property
    def iterations(self) -> int:
        return len(self.players[0].strategies)


def self_play(
    game: GameTree,
    kinds,
    T: int,
    configs=None,
    thin: int = 1,
    sample: bool = False,
    seed: int = 0,
    progress=None,
) -> PlayTrace:
    """Simultaneous self-play: every player emits x^t, then all observe their losses."""
    if T < 1:
        raise ValueError("need at least one iteration")
    n = game.num_players
    if isinstance(kinds, str):
        kinds = [kinds] * n
    if len(kinds) != n:
        raise ValueError(f"need one learner kind per player ({n})")
    if configs is None or isinstance(configs, LearnerConfig):
        configs = [configs] * n
    indexes = [derive_sequence_index(game, p) for p in range(1, n + 1)]
    table = leaf_table(game, indexes)
    learners = [make_learner(k, ix, c) for k, ix, c in zip(kinds, indexes, configs)]
    rng = np.random.default_rng(seed)

    xs = [np.zeros((T, ix.num_sequences)) for ix in indexes]
    ls = [np.zeros((T, ix.num_sequences)) for ix in indexes]
    pays = [np.zeros(T) for _ in indexes]
    mats: list[dict[int, np.ndarray]] = [{} for _ in indexes]
    samples = [np.zeros((T, ix.num_sequences)) for ix in indexes] if sample else None

    done, error = 0, ""
    try:
        for t in range(T):
            strategies = [lr.x.copy() for lr in learners]
            utils = table.expected_utilities(strategies)
            for i, lr in enumerate(learners):
                xs[i][t] = strategies[i]
                pays[i][t] = utils[i]
                if t % thin == 0 or t == T - 1:
                    mats[i][t + 1] = lr.A.copy()
                if sample:
                    samples[i][t] = sample_plan(indexes[i], strategies[i], rng)
            losses = [table.loss_vector(i + 1, strategies) for i in range(n)]
            for i, lr in enumerate(learners):
                ls[i][t] = losses[i]
                lr.observe(losses[i])
            done = t + 1
            if progress is not None:
                progress(done)
    except Exception as exc:  # keep what was computed and flag the trace
        error = f"{type(exc).__name__}: {exc}"

    players = [
        PlayerTrace(
            kind=lr.kind,
            index=indexes[i],
            strategies=xs[i][:done],
            losses=ls[i][:done],
            payoffs=pays[i][:done],
            matrices=mats[i],
            sampled=None if samples is None else samples[i][:done],
            payoff_ledger=lr.payoff_ledger,
            matrix_ledger=lr.matrix_ledger,
            cumulative=lr.G.copy(),
            audit=lr.audit,
        )
        for i, lr in enumerate(learners)
    ]
    return PlayTrace(players, complete=not error, error=error)


def adversarial_run(index: SequenceIndex, losses: np.ndarray, kind: str = "linear-swap",
                    config: LearnerConfig | None = None) -> PlayTrace:
    """Run a single learner against a fixed sequence of loss vectors (rows of `losses`)."""
    lr = make_learner(kind, index, config)
    ls = np.asarray(losses, dtype=float)
    T = len(ls)
    xs = np.zeros((T, index.num_sequences))
    last = None
    for t in range(T):
        xs[t] = lr.x
        last = lr.A.copy()
        lr.observe(ls[t])
    # keyed like self_play: matrix t produced iterate t
    rec = PlayerTrace(lr.kind, index, xs, ls, np.zeros(T), {T: last},
                      payoff_ledger=lr.payoff_ledger, matrix_ledger=lr.matrix_ledger,
                      cumulative=lr.G.copy(), audit=lr.audit)
    return PlayTrace([rec])


# -- trace files ---------------------------------------------------------------------


def save_trace(path, trace: PlayTrace, game_hash: str = "") -> None:
    """Write a trace to a compressed .npz archive; sequence indexes are not stored."""
    arrays: dict[str, np.ndarray] = {
        "game_hash": np.array(game_hash),
        "complete": np.array(trace.complete),
        "error": np.array(trace.error),
        "num_players": np.array(len(trace.players)),
    }
    for i, rec in enumerate(trace.players, start=1):
        its = sorted(rec.matrices)
        arrays.update({
            f"p{i}_kind": np.array(rec.kind),
            f"p{i}_strategies": rec.strategies,
            f"p{i}_losses": rec.losses,
            f"p{i}_payoffs": rec.payoffs,
            f"p{i}_matrix_iterations": np.array(its, dtype=np.int64),
            f"p{i}_matrices": np.array([rec.matrices[k] for k in its]).reshape(
                len(its), rec.index.num_sequences, rec.index.num_sequences),
            f"p{i}_ledgers": np.array([rec.payoff_ledger, rec.matrix_ledger]),
            f"p{i}_cumulative": rec.cumulative if rec.cumulative is not None else np.zeros(0),
            f"p{i}_audit": np.array([rec.audit.membership, rec.audit.fixed_point]),
        })
        if rec.sampled is not None:
            arrays[f"p{i}_sampled"] = rec.sampled
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_trace(path, game: GameTree) -> tuple[PlayTrace, str]:
    """Read a trace written by save_trace; returns (trace, stored game hash)."""
    with np.load(path, allow_pickle=False) as z:
        n = int(z["num_players"])
        if n != game.num_players:
            raise ValueError(f"trace has {n} players but the game has {game.num_players}")
        players = []
        for i in range(1, n + 1):
            index = derive_sequence_index(game, i)
            X = z[f"p{i}_strategies"]
            if X.shape[1:] != (index.num_sequences,):
                raise ValueError(f"player {i}: trace does not match the game's sequences")
            its = z[f"p{i}_matrix_iterations"]
            mats = z[f"p{i}_matrices"]
            ledgers = z[f"p{i}_ledgers"]
            cum = z[f"p{i}_cumulative"]
            audit = z[f"p{i}_audit"]
            players.append(PlayerTrace(
                kind=str(z[f"p{i}_kind"]),
                index=index,
                strategies=X,
                losses=z[f"p{i}_losses"],
                payoffs=z[f"p{i}_payoffs"],
                matrices={int(k): mats[r] for r, k in enumerate(its)},
                sampled=z[f"p{i}_sampled"] if f"p{i}_sampled" in z.files else None,
                payoff_ledger=float(ledgers[0]),
                matrix_ledger=float(ledgers[1]),
                cumulative=cum if cum.size else None,
                audit=AuditLog(float(audit[0]), float(audit[1])),
            ))
        trace = PlayTrace(players, complete=bool(z["complete"]), error=str(z["error"]))
        return trace, str(z["game_hash"])
