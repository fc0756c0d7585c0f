"""Experiment driver.

Subcommands: solve-kyle, solve-exec, train, evaluate, compare, diagnose,
plot. Every command takes a JSON config (--config); outputs land in
``<root>/<config-hash>/{checkpoints,traces,reports,figures}`` where the root
comes from --out, the KYLELAB_RUNS environment variable, or ``./runs``.
Emitted CSVs carry the manifest hash in a leading comment line, and re-running
a command on the same inputs and seed reproduces its outputs byte for byte.

Exit codes: 0 success, 2 bad usage or config, 3 solver non-convergence,
1 other errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, plotting, strategies
from .configio import Experiment, atomic_write, load_experiment, prepare_run
from .equilibrium import solve_kyle
from .errors import InvalidConfig, KyleLabError, NoConvergence
from .execution import ImpactPath, optimal_schedule
from .game import ResetMode, read_traces_csv, write_traces_csv
from .marl import evaluate_policies, load_policy_set, save_policy_set, train_marl


def _load(args) -> Experiment:
    exp = load_experiment(args.config)
    if getattr(args, "seed", None) is not None:
        exp = dataclasses.replace(
            exp, game=dataclasses.replace(exp.game, seed=args.seed)
        )
    return exp


def cmd_solve_kyle(args) -> int:
    exp = _load(args)
    sigma0_sq, sigma_u_sq, dt, N, tol = exp.kyle_inputs()
    eq = solve_kyle(sigma0_sq, sigma_u_sq, dt, N, tol)
    layout = prepare_run(exp, args.out)
    path = layout.reports / "kyle_equilibrium.csv"
    atomic_write(path, eq.to_csv(f"manifest: {layout.manifest_hash}"))
    print(path)
    return 0


def _exec_path(exp: Experiment) -> ImpactPath:
    ex = exp.exec
    if ex.lambdas is not None:
        lams = np.asarray(ex.lambdas, dtype=float)
    else:
        sigma0_sq, sigma_u_sq, dt, N, tol = exp.kyle_inputs()
        lams = solve_kyle(sigma0_sq, sigma_u_sq, dt, N, tol).lam * ex.lambda_rescale
    return ImpactPath(
        lambdas=lams,
        alpha=ex.alpha if ex.alpha is not None else exp.game.mean_reversion,
        phi=ex.phi if ex.phi is not None else exp.game.risk_aversion,
    )


def cmd_solve_exec(args) -> int:
    exp = _load(args)
    path_model = _exec_path(exp)
    Q = exp.exec.Q if exp.exec.Q is not None else exp.game.target_inventory
    schedule = optimal_schedule(path_model, Q)
    layout = prepare_run(exp, args.out)
    path = layout.reports / "execution_schedule.csv"
    atomic_write(path, schedule.to_csv(f"manifest: {layout.manifest_hash}"))
    print(path)
    return 0


def cmd_train(args) -> int:
    exp = _load(args)
    if args.episodes is not None:
        exp = dataclasses.replace(
            exp, ppo=dataclasses.replace(exp.ppo, total_episodes=args.episodes)
        )
    layout = prepare_run(exp, args.out)
    policies, curves = train_marl(exp.game, exp.ppo, progress=args.progress)
    save_policy_set(policies, layout.checkpoints, exp.game, layout.manifest_hash)
    atomic_write(
        layout.reports / "learning_curves.csv",
        curves.to_csv(f"manifest: {layout.manifest_hash}"),
    )
    print(layout.checkpoints)
    return 0


def cmd_evaluate(args) -> int:
    exp = _load(args)
    layout = prepare_run(exp, args.out)
    policies = load_policy_set(args.checkpoints)
    mode = ResetMode(args.mode)
    episodes = args.episodes if args.episodes is not None else exp.eval.episodes
    traces = evaluate_policies(policies, exp.game, mode, episodes,
                               base_seed=exp.game.seed)
    trace_path = layout.traces / f"traces_{mode.value}.csv"
    buf = io.StringIO()
    write_traces_csv(traces, buf, layout.manifest_hash)
    atomic_write(trace_path, buf.getvalue())
    report = diagnostics.full_report(
        traces,
        mode=mode.value,
        act_type=exp.game.policy_param.value,
        lob=1 if exp.game.lob_mode.value == "exchange" else 0,
    )
    report_path = layout.reports / f"discovery_{mode.value}.csv"
    atomic_write(
        report_path,
        diagnostics.report_csv([report], f"manifest: {layout.manifest_hash}"),
    )
    print(trace_path)
    print(report_path)
    return 0


def cmd_compare(args) -> int:
    exp = _load(args)
    layout = prepare_run(exp, args.out)
    policies = load_policy_set(args.checkpoints)
    episodes = args.episodes if args.episodes is not None else exp.compare.episodes
    reports, _ = strategies.compare_strategies(
        policies, exp.game, exp.ppo, episodes=episodes,
        ppo_single_episodes=exp.compare.ppo_single_episodes,
        lambda_rescale=exp.compare.lambda_rescale,
    )
    path = layout.reports / "strategy_comparison.csv"
    atomic_write(
        path,
        strategies.comparison_csv(reports, exp.game,
                                  f"manifest: {layout.manifest_hash}"),
    )
    print(path)
    return 0


def _read_trace_files(paths: list[str]):
    out = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise InvalidConfig(f"trace file {path} does not exist")
        with open(path) as f:
            loaded = read_traces_csv(f)
        if not loaded:
            raise InvalidConfig(f"trace file {path} holds no episodes")
        out.append((path, loaded))
    if not out:
        raise InvalidConfig("no trace files given")
    return out


def _guess_mode(path: Path, flag: str | None) -> str:
    if flag:
        return flag
    for candidate in ("down", "up"):
        if candidate in path.stem:
            return candidate
    return "train"


def cmd_diagnose(args) -> int:
    exp = _load(args)
    layout = prepare_run(exp, args.out)
    rows = []
    for path, traces in _read_trace_files(args.traces):
        rows.append(
            diagnostics.full_report(
                traces,
                mode=_guess_mode(path, args.mode),
                act_type=exp.game.policy_param.value,
                lob=1 if exp.game.lob_mode.value == "exchange" else 0,
            )
        )
    out_path = layout.reports / "discovery_report.csv"
    atomic_write(
        out_path, diagnostics.report_csv(rows, f"manifest: {layout.manifest_hash}")
    )
    print(out_path)
    return 0


def cmd_plot(args) -> int:
    exp = _load(args)
    layout = prepare_run(exp, args.out)
    for path, traces in _read_trace_files(args.traces):
        fig_path = layout.figures / f"price_paths_{path.stem}.svg"
        plotting.price_path_figure(traces, fig_path)
        print(fig_path)
        if np.any([np.abs(t.x_lt).sum() > 0 for t in traces]):
            inv_path = layout.figures / f"inventory_{path.stem}.svg"
            plotting.inventory_figure(traces, inv_path)
            print(inv_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kylelab",
        description="market-game laboratory: solvers, MARL training, "
        "evaluation, strategy comparison, diagnostics, plots",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoints=False, mode=False, episodes=False, traces=False):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output root (default $KYLELAB_RUNS or ./runs)")
        p.add_argument("--seed", type=int, default=None, help="override game seed")
        if checkpoints:
            p.add_argument("--checkpoints", required=True, help="checkpoint directory")
        if mode:
            p.add_argument("--mode", choices=["down", "up", "train"], required=True)
        if episodes:
            p.add_argument("--episodes", type=int, default=None)
        if traces:
            p.add_argument("--traces", nargs="+", required=True, help="trace CSV files")

    common(sub.add_parser("solve-kyle", help="solve the recursive equilibrium"))
    common(sub.add_parser("solve-exec", help="solve the optimal acquisition schedule"))
    p_train = sub.add_parser("train", help="train independent PPO agents")
    common(p_train, episodes=True)
    p_train.add_argument("--progress", action="store_true")
    common(sub.add_parser("evaluate", help="roll out saved policies"),
           checkpoints=True, mode=True, episodes=True)
    common(sub.add_parser("compare", help="compare the five execution strategies"),
           checkpoints=True, episodes=True)
    p_diag = sub.add_parser("diagnose", help="diagnostics over trace CSVs")
    common(p_diag, traces=True)
    p_diag.add_argument("--mode", default=None, help="mode label for the report rows")
    common(sub.add_parser("plot", help="render price/inventory figures"), traces=True)
    return parser


_COMMANDS = {
    "solve-kyle": cmd_solve_kyle,
    "solve-exec": cmd_solve_exec,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (KyleLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
