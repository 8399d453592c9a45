"""Command-line front end: ``mwu-lab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import analysis, onedim
from .dynamics import FP_TOL, LearningRates, check_rates, parse_rate, run
from .exceptions import MWULabError
from .game import CongestionGame, MixedProfile, check_profile, nash_residual, resolve_game

RATE_H = "1-exp(-10)"
RATE_G = "1-exp(-40)"


# -- argument helpers -------------------------------------------------------------


def _rates_from_args(args: argparse.Namespace, game: CongestionGame) -> LearningRates:
    if args.eps_per_agent:
        parts = [parse_rate(t.strip()) for t in args.eps_per_agent.split(",")]
        rates = LearningRates(
            tuple(r.eps[0] for r in parts), tuple(r.decay[0] for r in parts)
        )
    elif args.eps is not None:
        rates = parse_rate(args.eps, game.n_agents)
    else:
        rates = LearningRates.from_eps(0.5 * min(1.0, game.rate_bound), game.n_agents)
    return check_rates(game, rates, args.variant)


def _start_from_text(game: CongestionGame, text: str | None) -> MixedProfile:
    if text is None:
        return MixedProfile.uniform(game)
    text = text.strip()
    if text.startswith("["):
        return check_profile(game, json.loads(text))
    return MixedProfile.symmetric(game, float(text))


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(p: argparse.ArgumentParser, many_games: bool = False) -> None:
    if many_games:
        p.add_argument("--game", action="append", help="builtin name or JSON path (repeatable)")
    else:
        p.add_argument("--game", default="game1", help="builtin name (game1, game2) or JSON path")
    p.add_argument("--variant", choices=["linear", "exp"], default="linear")
    p.add_argument("--eps", help="learning rate, e.g. 0.3 or 1-exp(-10)")
    p.add_argument("--eps-per-agent", help="comma separated per-agent rates")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--fp-tol", type=float, default=FP_TOL)
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--seed", type=int, default=0)


# -- subcommands --------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    game = resolve_game(args.game)
    rates = _rates_from_args(args, game)
    traj = run(game, _start_from_text(game, args.start), rates, args.variant, max_iters=args.iters, fp_tol=args.fp_tol)
    if args.format == "csv":
        _emit(traj.to_csv(), args.out)
    else:
        body = traj.metadata()
        body["final"] = traj.final.tolist()
        body["psi"] = traj.psi.tolist()
        body["nash_residual"] = nash_residual(game, traj.final)
        _emit(json.dumps(body, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    game = resolve_game(args.game)
    grid = [t.strip() for t in (args.eps or "0.5").split(",")]
    starts: list = [float(s) for s in args.start.split(",")] if args.start else [MixedProfile.uniform(game)]
    report = analysis.rate_sweep(game, args.variant, grid, starts, max_iters=args.iters, fp_tol=args.fp_tol)
    _emit(report.bifurcation_csv() if args.format == "csv" else report.to_json() + "\n", args.out)
    return 0


def cmd_verify_lyapunov(args: argparse.Namespace) -> int:
    config = analysis.ExperimentConfig(
        seed=args.seed,
        n_games=args.n_games,
        games=tuple(args.game or ()),
        variant=args.variant,
        eps=args.eps,
        n_starts=args.n_starts,
        starts=tuple(float(s) for s in args.start.split(",")) if args.start else (),
        max_iters=args.iters,
        fp_tol=args.fp_tol,
    )
    report = analysis.verify_lyapunov(config)
    _emit(report.to_json() + "\n", args.out)
    print(
        f"{report.n_trajectories} trajectories, {report.violations} violations "
        f"(max rise {report.max_violation:.3e})",
        file=sys.stderr,
    )
    return 0 if report.ok or args.variant != "linear" else 1


def _one_dim_map(args: argparse.Namespace) -> onedim.IntervalMap:
    if args.map == "H":
        return onedim.H
    if args.map == "G":
        return onedim.G
    game = resolve_game(args.game)
    return onedim.symmetric_reduction(game, _rates_from_args(args, game), args.variant)


def cmd_analyze_1d(args: argparse.Namespace) -> int:
    fmap = _one_dim_map(args)
    if args.format == "csv":
        _emit(onedim.iterate_table(fmap), args.out)
        return 0
    body: dict = {"map": fmap.name, "fixed_points": {}}
    for k in range(1, args.k + 1):
        body["fixed_points"][str(k)] = [c.to_dict() for c in onedim.find_fixed_points(fmap, k)]
    body["derivative_signs"] = [
        {"interval": list(iv), "sign": s} for iv, s in onedim.derivative_sign_intervals(fmap, 1)
    ]
    if args.bracket:
        cert = onedim.find_period3(fmap, *args.bracket)
        point, report = onedim.li_yorke_from_orbit(fmap, cert)
        body["period3"] = cert.to_dict()
        body["li_yorke"] = report.to_dict()
    _emit(json.dumps(body, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    return reproduce_paper(args.out)


# -- reproduction bundle ------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _build_bundle() -> tuple[dict[str, str], list[tuple[str, bool, str]]]:
    """All output files plus (check name, passed, detail) triples."""
    files: dict[str, str] = {}
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str) -> None:
        checks.append((name, bool(ok), detail))

    H, G = onedim.H, onedim.G
    g1, g2 = resolve_game("game1"), resolve_game("game2")
    r1, r2 = parse_rate(RATE_H, 2), parse_rate(RATE_G, 2)

    files["H_iterates.csv"] = onedim.iterate_table(H)
    files["G_iterates.csv"] = onedim.iterate_table(G)
    files["H_linear_iterates.csv"] = onedim.iterate_table(onedim.symmetric_reduction(g1, r1, "linear"))
    files["G_linear_iterates.csv"] = onedim.iterate_table(onedim.symmetric_reduction(g2, r2, "linear"))

    hc = onedim.h_constants()
    signs = onedim.derivative_sign_intervals(H, 1)
    breaks = [iv[1] for iv, _ in signs[:-1]]
    check(
        "h_anchors",
        [s for _, s in signs] == [1, -1, 1]
        and abs(breaks[0] - hc.x0) < 1e-8 and abs(breaks[1] - hc.x1) < 1e-8
        and abs(H(hc.x0) - 0.8593) < 1e-4 and abs(H(hc.x1) - 0.1406) < 1e-4,
        f"breakpoints {breaks}, H(x0)={H(hc.x0):.6f}, H(x1)={H(hc.x1):.6f}",
    )
    signs2 = onedim.derivative_sign_intervals(H, 2)
    files["H_derivative_signs.json"] = _dump(
        {"k1": [[list(iv), s] for iv, s in signs], "k2": [[list(iv), s] for iv, s in signs2], "constants": hc.to_dict()}
    )
    check("h2_sign_pattern", [s for _, s in signs2] == [1, -1, 1, -1, 1] and hc.ordered(), "signs of (H^2)'")

    h2 = onedim.find_fixed_points(H, 2)
    files["H2_fixed_points.json"] = _dump([c.to_dict() for c in h2])
    pts = sorted(c.points[0] for c in h2)
    check(
        "h2_fixed_points",
        len(h2) == 5 and abs(pts[1] + pts[3] - 1) < 1e-10 and hc.x0 < pts[1] < 0.25,
        f"{len(h2)} roots {pts}",
    )
    cycle = onedim.make_certificate(H, hc.rho1, 2)
    files["H_period2_orbit.json"] = _dump({"certificate": cycle.to_dict(), "constants": hc.to_dict()})
    check(
        "h_cycle",
        abs(H(hc.rho1) - hc.rho2) < 1e-10 and abs(H(hc.rho2) - hc.rho1) < 1e-10 and cycle.valid,
        f"rho1={hc.rho1!r}",
    )
    basin = analysis.sample_basin(H, n=1000, seed=0, steps=2000)
    files["H_basin.csv"] = basin.to_csv()
    check(
        "h_basin",
        basin.labels.count("unresolved") == 0 and basin.flagged_fraction < 0.01,
        json.dumps(basin.counts()),
    )

    g1pts = onedim.find_fixed_points(G, 1)
    check(
        "g_fixed_points",
        len(g1pts) == 3 and all(abs(c.points[0] - t) < 1e-10 for c, t in zip(g1pts, (0, 0.75, 1))),
        str([c.points[0] for c in g1pts]),
    )
    lo, hi = onedim.iterate(G, 0.4, 3) - 0.4, onedim.iterate(G, 0.5, 3) - 0.5
    p3 = onedim.find_period3(G, 0.4, 0.5)
    files["G_period3.json"] = _dump({"bracket_values": [lo, hi], "certificate": p3.to_dict()})
    check(
        "g_period3",
        abs(lo + 0.158) < 2e-3 and abs(hi - 0.496) < 2e-3 and p3.residual <= 1e-10 and p3.separation > 1e-3,
        f"residual {p3.residual:.2e}, separation {p3.separation:.3f}",
    )
    point, ly = onedim.li_yorke_from_orbit(G, p3)
    files["G_li_yorke.json"] = _dump({"point": point, "report": ly.to_dict(), "at_0.4": onedim.li_yorke_certificate(G, 0.4).to_dict()})
    check("li_yorke", ly.holds, ly.orientation)

    periods = {}
    for k in range(1, 7):
        periods[str(k)] = [c.to_dict() for c in onedim.periodic_orbits(G, k) if c.valid]
    files["G_periodic_orbits.json"] = _dump(periods)
    check("g_periods_1_to_6", all(periods[str(k)] for k in range(1, 7)), str({k: len(v) for k, v in periods.items()}))

    lo_gap, hi_gap = onedim.scrambled_pair_evidence(G, 0.3, 0.3 + 1e-6, 10_000)
    files["G_scrambled_pair.json"] = _dump({"x": 0.3, "y": 0.3 + 1e-6, "horizon": 10_000, "min_gap": lo_gap, "max_gap": hi_gap})
    check("g_scrambled_pair", hi_gap > 0.1, f"max gap {hi_gap:.3f}")

    grid = np.linspace(0, 1, 1000)
    for name, game, rates, ref in (("h", g1, r1, H), ("g", g2, r2, G)):
        err = float(np.max(np.abs(onedim.symmetric_reduction(game, rates, "exp")(grid) - ref(grid))))
        check(f"reduction_{name}", err <= 1e-12, f"max error {err:.2e}")

    for name in ("game1", "game2"):
        rep = analysis.verify_lyapunov(
            analysis.ExperimentConfig(games=(name,), starts=(0.1, 0.3, 0.45, 0.7, 0.9), max_iters=5000, eps=0.5)
        )
        files[f"lyapunov_{name}.json"] = rep.to_json() + "\n"
        check(f"lyapunov_{name}", rep.ok, f"{rep.violations} violations")

    exp = run(g1, MixedProfile.symmetric(g1, 0.3), r1, "exp", max_iters=5000)
    lin = run(g1, MixedProfile.symmetric(g1, 0.3), r1, "linear", max_iters=5000)
    files["game1_exp_trajectory.csv"] = exp.to_csv()
    files["game1_linear_trajectory.csv"] = lin.to_csv()
    check(
        "contrast",
        exp.termination == "cycle_detected" and exp.period == 2
        and lin.termination == "converged" and abs(lin.final[0][0] - 0.5) < 1e-8,
        f"exp {exp.termination}/{exp.period}, linear {lin.termination} at {float(lin.final[0][0])!r}",
    )

    files["checks.json"] = _dump([{"name": n, "passed": ok, "detail": d} for n, ok, d in checks])
    return files, checks


def reproduce_paper(output_dir: str) -> int:
    """Write the reproduction bundle; 0 only when every check passes."""
    try:
        os.makedirs(output_dir, exist_ok=True)
        probe = os.path.join(output_dir, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        print(f"error: output directory not writable ({exc}); first failing check: output", file=sys.stderr)
        return 2
    files, checks = _build_bundle()
    try:
        for name, text in files.items():
            with open(os.path.join(output_dir, name), "w") as fh:
                fh.write(text)
    except OSError as exc:
        print(f"error: {exc}; first failing check: output", file=sys.stderr)
        return 2
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        print(f"first failing check: {failed[0]}", file=sys.stderr)
        return 1
    print(f"wrote {len(files)} files to {output_dir}")
    return 0


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwu-lab", description="Multiplicative-weights dynamics in congestion games.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory")
    _add_common(p)
    p.add_argument("--start", help="x for the symmetric start (x, 1-x) or a JSON nested list")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="classify outcomes over a grid of learning rates")
    _add_common(p)
    p.add_argument("--start", help="comma separated symmetric starts")
    p.set_defaults(func=cmd_sweep, iters=20_000)

    p = sub.add_parser("verify-lyapunov", help="check that the expected potential decreases")
    _add_common(p, many_games=True)
    p.set_defaults(iters=500)
    p.add_argument("--n-games", type=int, default=100)
    p.add_argument("--n-starts", type=int, default=5)
    p.add_argument("--start", help="comma separated symmetric starts (replaces random starts)")
    p.set_defaults(func=cmd_verify_lyapunov)

    p = sub.add_parser("analyze-1d", help="fixed points, periodic orbits and Li-Yorke checks")
    _add_common(p)
    p.add_argument("--map", choices=["H", "G", "reduce"], default="H")
    p.add_argument("--k", type=int, default=2, help="largest iterate to scan for fixed points")
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"), help="period-3 bracket")
    p.set_defaults(func=cmd_analyze_1d, variant="exp")

    p = sub.add_parser("reproduce-paper", help="write every reproduction table and certificate")
    p.add_argument("--out", default="reproduction")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MWULabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
