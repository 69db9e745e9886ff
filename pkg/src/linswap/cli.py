"""Command-line front end: ``linswap gen|inspect|dump-system|run|audit|verify-examples``.

Exit codes: 0 success, 1 a check or solver failure, 2 a usage, config or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .convex_opt import LPError
from .efg import (
    GameFormatError,
    GameTree,
    InvalidGameError,
    build_counterexample_game,
    build_kuhn_poker,
    build_sat_game,
    build_signaling_game,
    build_tree_example,
    dump_game,
    game_digest,
    load_game,
    parse_dimacs,
)
from .efg.model import LeafNode
from .equilibrium import (
    KINDS,
    GameContext,
    JointDistribution,
    equilibrium_gap,
    external_gap,
    is_linear_swap,
    lce_gap,
    linear_swap_gap,
    matrix_external_regret,
    regret_curves,
    swap_gain,
    trigger_gap,
)
from .learners import LEARNER_KINDS, LearnerConfig, load_trace, save_trace, self_play
from .linmap import canonicalize, compile_self_map_system, constant_map, membership_report, trigger_map
from .reference import (
    COUNTEREXAMPLE_LCE,
    COUNTEREXAMPLE_SWAP,
    SIGNALING_EFCE,
    SIGNALING_SWAP,
    SIGNALING_SWAP_MATRIX,
    pad_with_empty_sequence,
)
from .sequence_form import PlanCapExceeded, derive_sequence_index, plan_count

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
CSV_COLUMNS = ("t", "player", "avg_external_regret", "avg_trigger_regret", "avg_linear_swap_regret", "payoff")
REGRET_KINDS = ("external", "trigger", "linear-swap")


class UsageError(Exception):
    """Bad arguments, configuration or files; maps to exit code 2."""


# -- games ---------------------------------------------------------------------------


def resolve_game(spec: str, base: Path | None = None) -> GameTree:
    """A built-in game (``kuhn:R:P``, ``signaling``, ``counterexample``, ``tree``, ``sat:FILE``) or a game file."""
    base = base or Path.cwd()
    name, _, rest = spec.partition(":")
    try:
        if name == "kuhn":
            parts = rest.split(":") if rest else []
            ranks = int(parts[0]) if parts else 3
            players = int(parts[1]) if len(parts) > 1 else 2
            return build_kuhn_poker(ranks, players)
        if name == "signaling" and not rest:
            return build_signaling_game()
        if name == "counterexample" and not rest:
            return build_counterexample_game()
        if name == "tree" and not rest:
            return build_tree_example()
        if name == "sat" and rest:
            return build_sat_game(parse_dimacs(_read(base / rest)))
        return load_game(base / spec)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load game {spec!r}: {exc}") from exc


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _emit(text: str, output: str | None) -> None:
    if output:
        try:
            Path(output).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot write {output}: {exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    if args.family == "kuhn":
        game = build_kuhn_poker(args.ranks, args.players)
    elif args.family == "signaling":
        game = build_signaling_game()
    elif args.family == "counterexample":
        game = build_counterexample_game()
    elif args.family == "tree":
        game = build_tree_example()
    else:
        game = build_sat_game(parse_dimacs(_read(Path(args.cnf))))
    _emit(dump_game(game), args.output)
    return EXIT_OK


# -- inspect and dump-system -----------------------------------------------------------


def cmd_inspect(args) -> int:
    game = resolve_game(args.game)
    lines = [
        f"players {game.num_players}",
        f"nodes {len(game.node_ids)}",
        f"terminals {game.num_terminals}",
        f"infosets {game.num_infosets}",
        f"sequences {game.num_sequences}",
        f"sha256 {game_digest(game)}",
    ]
    players = [args.player] if args.player else range(1, game.num_players + 1)
    for p in players:
        ix = derive_sequence_index(game, p)
        lines.append(f"player {p}: {ix.num_infosets} infosets, {ix.num_sequences} sequences, "
                     f"{plan_count(ix)} reduced plans")
        for j, label in enumerate(ix.infosets):
            parent = ix.seq_name(ix.parent[j])
            acts = " ".join(ix.seq_name(s) for s in ix.seqs_of(j))
            lines.append(f"  infoset {j} {label} parent={parent} sequences: {acts}")
    _emit("\n".join(lines) + "\n", None)
    return EXIT_OK


def _lp_term(coef: float, name: str) -> str:
    sign = "-" if coef < 0 else "+"
    mag = abs(coef)
    return f"{sign} {name}" if mag == 1.0 else f"{sign} {mag!r} {name}"


def system_lp_text(system, index) -> str:
    """The compiled self-map system in CPLEX LP text form (zero objective)."""
    names = [""] * system.num_variables
    for r in range(system.d):
        for s in range(system.n):
            names[system.a_var(r, s)] = f"A_{r}_{s}"
    for j in range(system.m):
        for r in range(system.k):
            names[system.b_var(j, r)] = f"b_{j}_{r}"
    out = [
        f"\\ sequences: " + ", ".join(f"{s}={index.seq_name(s)}" for s in range(index.num_sequences)),
        "Minimize",
        " obj: 0 " + names[0],
        "Subject To",
    ]
    E = system.E.tocsr()
    for i in range(E.shape[0]):
        lo, hi = E.indptr[i], E.indptr[i + 1]
        terms = " ".join(_lp_term(float(v), names[c]) for c, v in zip(E.indices[lo:hi], E.data[lo:hi]))
        label = system.row_labels[i] if i < len(system.row_labels) else f"r{i}"
        safe = "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in label)
        out.append(f" c{i}_{safe}: {terms or '0 ' + names[0]} = {float(system.f[i])!r}")
    out.append("Bounds")
    free = []
    for v, nm in enumerate(names):
        lo, hi = float(system.lower[v]), float(system.upper[v])
        if np.isinf(lo) and np.isinf(hi):
            free.append(nm)
        else:
            out.append(f" {lo!r} <= {nm} <= {hi!r}")
    for nm in free:
        out.append(f" {nm} free")
    out.append("End")
    return "\n".join(out) + "\n"


def cmd_dump_system(args) -> int:
    game = resolve_game(args.game)
    if not 1 <= args.player <= game.num_players:
        raise UsageError(f"player must be between 1 and {game.num_players}")
    index = derive_sequence_index(game, args.player)
    _emit(system_lp_text(compile_self_map_system(index), index), args.output)
    return EXIT_OK


# -- run ----------------------------------------------------------------------------------


@dataclass
class RunConfig:
    game: str
    kinds: tuple[str, ...] = ("linear-swap",)
    schedule: str = "sqrt"
    eta: float = 1.0
    iterations: int = 1000
    seed: int = 0
    thin: int = 10
    sample: bool = False
    csv_every: int = 1
    output: str = "run"
    base: Path = field(default=Path("."), repr=False)

    def snapshot(self) -> dict:
        return {
            "game": self.game,
            "kinds": list(self.kinds),
            "schedule": self.schedule,
            "eta": self.eta,
            "iterations": self.iterations,
            "seed": self.seed,
            "thin": self.thin,
            "sample": self.sample,
            "csv_every": self.csv_every,
            "output": self.output,
        }


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_run_config(text: str, base: Path | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        if key in values:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value
    known = set(RunConfig.__dataclass_fields__) - {"base"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    if "game" not in values:
        raise UsageError("config needs a 'game' key")
    try:
        cfg = RunConfig(game=values["game"], base=base or Path("."))
        if "kinds" in values:
            cfg.kinds = tuple(k.strip() for k in values["kinds"].split(","))
        cfg.schedule = values.get("schedule", cfg.schedule)
        cfg.eta = float(values.get("eta", cfg.eta))
        for key in ("iterations", "seed", "thin", "csv_every"):
            if key in values:
                setattr(cfg, key, int(values[key]))
        if "sample" in values:
            cfg.sample = _BOOL[values["sample"].lower()]
        cfg.output = values.get("output", cfg.output)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    bad = [k for k in cfg.kinds if k not in LEARNER_KINDS]
    if bad:
        raise UsageError(f"unknown learner kind {bad[0]!r}; choose from {', '.join(LEARNER_KINDS)}")
    if cfg.schedule not in ("sqrt", "constant") or not cfg.eta > 0:
        raise UsageError("schedule must be sqrt or constant with a positive eta")
    if cfg.iterations < 1 or cfg.thin < 1 or cfg.csv_every < 1:
        raise UsageError("iterations, thin and csv_every must be positive")
    return cfg


def _checkpoints(T: int, every: int) -> list[int]:
    pts = list(range(every, T + 1, every))
    if not pts or pts[-1] != T:
        pts.append(T)
    return pts


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def regret_rows(trace, checkpoints: list[int]) -> list[tuple]:
    rows = []
    for p in range(1, len(trace.players) + 1):
        curves = regret_curves(trace, p, checkpoints, REGRET_KINDS)
        pay = trace.players[p - 1].payoffs
        for r, t in enumerate(checkpoints):
            rows.append((t, p, curves["external"][r], curves["trigger"][r], curves["linear-swap"][r], pay[t - 1]))
    return rows


def cmd_run(args) -> int:
    cfg_path = Path(args.config)
    cfg = parse_run_config(_read(cfg_path), cfg_path.parent)
    timings = {}
    t0 = time.perf_counter()
    game = resolve_game(cfg.game, cfg.base)
    if len(cfg.kinds) == 1:
        cfg.kinds = cfg.kinds * game.num_players
    if len(cfg.kinds) != game.num_players:
        raise UsageError(f"need one learner kind or {game.num_players} of them")
    timings["build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    config = LearnerConfig(cfg.schedule, cfg.eta)
    trace = self_play(game, list(cfg.kinds), cfg.iterations, config, thin=cfg.thin,
                      sample=cfg.sample, seed=cfg.seed)
    timings["play"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    done = trace.iterations
    rows = regret_rows(trace, _checkpoints(done, cfg.csv_every)) if done else []
    timings["audit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    prefix = cfg.base / cfg.output
    digest = game_digest(game)
    try:
        prefix.parent.mkdir(parents=True, exist_ok=True)
        with open(f"{prefix}.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for t, p, e, g, lsw, pay in rows:
                fh.write(f"{t},{p},{_fmt(e)},{_fmt(g)},{_fmt(lsw)},{_fmt(pay)}\n")
        save_trace(f"{prefix}.npz", trace, digest)
        timings["write"] = time.perf_counter() - t0
        manifest = {
            "config": cfg.snapshot(),
            "game_sha256": digest,
            "seed": cfg.seed,
            "version": __version__,
            "iterations_completed": done,
            "complete": trace.complete,
            "error": trace.error,
            "wall_clock_seconds": timings,
            "outputs": {"csv": f"{prefix.name}.csv", "trace": f"{prefix.name}.npz"},
        }
        Path(f"{prefix}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write outputs: {exc}") from exc

    finals = {p: r for r in rows for p in [r[1]] if r[0] == done}
    for p, (t, _, e, g, lsw, pay) in sorted(finals.items()):
        print(f"player {p} ({cfg.kinds[p - 1]}) t={t}: external {_fmt(e)}  trigger {_fmt(g)}  "
              f"linear-swap {_fmt(lsw)}  payoff {_fmt(pay)}")
    if not trace.complete:
        print(f"run stopped after {done} iterations: {trace.error}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# -- audit ---------------------------------------------------------------------------------


def _witness_matrix(kind: str, index, system, U) -> np.ndarray:
    if kind == "external":
        return canonicalize(constant_map(index, external_gap(index, U).witness), system)
    if kind == "trigger":
        s, y = trigger_gap(index, U).witness
        return canonicalize(trigger_map(index, s, y), system)
    return linear_swap_gap(system, U).witness


def cmd_audit(args) -> int:
    trace_path = Path(args.trace)
    if not trace_path.is_file():
        raise UsageError(f"trace file not found: {trace_path}")
    game = resolve_game(args.game)
    try:
        with np.load(trace_path, allow_pickle=False) as z:
            stored = str(z["game_hash"])
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read trace {trace_path}: {exc}") from exc
    if stored != game_digest(game):
        raise UsageError("game hash mismatch: the trace was produced on a different game")
    try:
        trace, _ = load_trace(trace_path, game)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read trace {trace_path}: {exc}") from exc
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    bad = [c for c in classes if c not in REGRET_KINDS]
    if bad or not classes:
        raise UsageError(f"classes must be drawn from {', '.join(REGRET_KINDS)}")
    T = trace.iterations
    if T == 0:
        raise UsageError("trace holds no iterations")
    if args.checkpoints:
        try:
            points = sorted({int(v) for v in args.checkpoints.split(",")})
        except ValueError as exc:
            raise UsageError(f"bad checkpoints: {exc}") from exc
        if points[0] < 1 or points[-1] > T:
            raise UsageError(f"checkpoints must lie in 1..{T}")
    else:
        points = sorted({min(100, T), T})

    ok = True
    print(f"trace {trace_path.name}: {len(trace.players)} players, {T} iterations"
          + ("" if trace.complete else f" (incomplete: {trace.error})"))
    for p, rec in enumerate(trace.players, start=1):
        system = compile_self_map_system(rec.index) if "linear-swap" in classes or rec.kind == "linear-swap" else None
        curves = regret_curves(trace, p, points, classes, system)
        for c in classes:
            vals = "  ".join(f"t={t}: {_fmt(v)}" for t, v in zip(points, curves[c]))
            print(f"player {p} ({rec.kind}) {c} regret  {vals}")
        ordered = [c for c in REGRET_KINDS if c in classes]
        for lo, hi in zip(ordered, ordered[1:]):
            holds = bool(np.all(curves[lo] <= curves[hi] + 1e-6))
            ok &= holds
            print(f"player {p} chain {lo} <= {hi}: {'ok' if holds else 'VIOLATED'}")
        if rec.kind == "linear-swap" and rec.cumulative is not None:
            matrix = matrix_external_regret(trace, p, system)
            traced = linear_swap_gap(system, -(rec.losses.T @ rec.strategies)).value
            holds = abs(matrix - traced) <= 2e-6 * T
            ok &= holds
            print(f"player {p} matrix-level regret {_fmt(matrix)} vs trace-level {_fmt(traced)}: "
                  f"{'ok' if holds else 'MISMATCH'}")
        print(f"player {p} audit maxima: membership {_fmt(rec.audit.membership)}  "
              f"fixed point {_fmt(rec.audit.fixed_point)}")
        if args.witness_dir:
            out = Path(args.witness_dir)
            try:
                out.mkdir(parents=True, exist_ok=True)
                U = -(rec.losses.T @ rec.strategies)
                sysw = system or compile_self_map_system(rec.index)
                for c in classes:
                    W = _witness_matrix(c, rec.index, sysw, U)
                    np.savetxt(out / f"player{p}_{c}.csv", W, delimiter=",", fmt="%.12g")
            except OSError as exc:
                raise UsageError(f"cannot write witnesses: {exc}") from exc
    return EXIT_OK if ok else EXIT_CHECK


# -- verify-examples -------------------------------------------------------------------------


def _perturbed_counterexample(delta: float) -> GameTree:
    game = build_counterexample_game()
    if not delta:
        return game
    nodes = {nid: node for nid, node in game.iter_nodes()}
    # Player 2's payoff at this leaf is slack at the equilibrium; any shift breaks it.
    u = list(nodes[13].utilities)
    u[1] += delta
    nodes[13] = LeafNode(tuple(u))
    return GameTree(game.num_players, nodes, game.root)


def verify_examples(perturb: float = 0.0) -> list[tuple[str, bool, str]]:
    """The six pinned checks on the two worked examples, as (name, passed, detail)."""
    checks = []
    sig = GameContext(build_signaling_game())
    mu = JointDistribution.from_table(sig, SIGNALING_EFCE)
    g = lce_gap(mu, 1).value
    checks.append(("signaling EFCE: player 1 linear-swap gap is 1.5", abs(g - 1.5) <= 1e-6, f"gap {g:.9g}"))

    ix = sig.indexes[0]
    table = {sig.plan_id(1, a): sig.plan_id(1, b) for a, b in SIGNALING_SWAP.items()}
    linear, _ = is_linear_swap(ix, sig.plans[0], table, sig.systems[0])
    B = canonicalize(pad_with_empty_sequence(SIGNALING_SWAP_MATRIX), sig.systems[0])
    rep = membership_report(B, sig.systems[0])
    agree = max(float(np.max(np.abs(B @ sig.plans[0][a] - sig.plans[0][b]))) for a, b in table.items())
    gain = swap_gain(mu, 1, SIGNALING_SWAP)
    checks.append(("signaling EFCE: the improving swap is linear",
                   linear and rep.ok and agree <= 1e-7 and abs(gain - 1.5) <= 1e-6,
                   f"feasible {linear}, membership {rep.residual:.3g}, agreement {agree:.3g}, gain {gain:.9g}"))

    ce = GameContext(_perturbed_counterexample(perturb))
    nu = JointDistribution.from_table(ce, COUNTEREXAMPLE_LCE)
    gaps = [lce_gap(nu, p).value for p in (1, 2)]
    checks.append(("counterexample: the table is an LCE for both players",
                   all(abs(v) <= 1e-7 for v in gaps), "gaps " + ", ".join(f"{v:.9g}" for v in gaps)))

    gain = swap_gain(nu, 1, COUNTEREXAMPLE_SWAP)
    checks.append(("counterexample: player 1 swap gain is 50.5", abs(gain - 50.5) <= 1e-6, f"gain {gain:.9g}"))

    table = {ce.plan_id(1, a): ce.plan_id(1, b) for a, b in COUNTEREXAMPLE_SWAP.items()}
    linear, _ = is_linear_swap(ce.indexes[0], ce.plans[0], table, ce.systems[0])
    checks.append(("counterexample: the improving swap is not linear", not linear, f"feasible {linear}"))

    chain_ok, worst = True, []
    for ctx, dist in ((sig, mu), (ce, nu)):
        for p in (1, 2):
            vals = [equilibrium_gap(dist, p, k).value for k in KINDS]
            chain_ok &= all(a <= b + 1e-6 for a, b in zip(vals, vals[1:]))
            worst.append("/".join(f"{v:.4g}" for v in vals))
    checks.append(("inclusion chain external <= trigger <= linear-swap <= full-swap", chain_ok, "; ".join(worst)))
    return checks


def cmd_verify_examples(args) -> int:
    checks = verify_examples(args.perturb)
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
    failed = sum(not c[1] for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECK


# -- entry point -------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linswap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="write a built-in game in the text format")
    gen_sub = gen.add_subparsers(dest="family", required=True, parser_class=_Parser)
    kuhn = gen_sub.add_parser("kuhn", help="Kuhn poker")
    kuhn.add_argument("--ranks", type=int, default=3)
    kuhn.add_argument("--players", type=int, default=2)
    gen_sub.add_parser("signaling", help="the signaling game")
    gen_sub.add_parser("counterexample", help="the game separating linear and non-linear swaps")
    gen_sub.add_parser("tree", help="the small decision-process example")
    sat = gen_sub.add_parser("sat", help="the welfare game of a CNF formula")
    sat.add_argument("--cnf", required=True, help="DIMACS file")
    for p in gen_sub.choices.values():
        p.add_argument("-o", "--output", help="output file (default: stdout)")
    gen.set_defaults(func=cmd_gen)

    ins = sub.add_parser("inspect", help="print sequence indexes and sizes")
    ins.add_argument("game", help="game file or built-in name such as kuhn:3:2")
    ins.add_argument("--player", type=int)
    ins.set_defaults(func=cmd_inspect)

    dump = sub.add_parser("dump-system", help="write the linear-map constraint system as LP text")
    dump.add_argument("game")
    dump.add_argument("--player", type=int, default=1)
    dump.add_argument("-o", "--output")
    dump.set_defaults(func=cmd_dump_system)

    run = sub.add_parser("run", help="run self-play from a key = value config")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    aud = sub.add_parser("audit", help="recompute regrets of a saved trace")
    aud.add_argument("trace")
    aud.add_argument("--game", required=True)
    aud.add_argument("--classes", default="external,trigger,linear-swap")
    aud.add_argument("--checkpoints", help="comma-separated iterations (default: 100 and the last)")
    aud.add_argument("--witness-dir", help="write maximizing deviation matrices as CSV here")
    aud.set_defaults(func=cmd_audit)

    ver = sub.add_parser("verify-examples", help="run the pinned checks on the two worked examples")
    ver.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    ver.set_defaults(func=cmd_verify_examples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"linswap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GameFormatError, InvalidGameError, PlanCapExceeded) as exc:
        print(f"linswap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LPError as exc:
        print(f"linswap: solver error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
