"""Command-line interface: bound, match, poa, sweep, online, sim.

Every command writes its artifacts into an output directory and finishes by
writing a run manifest listing all produced files; the manifest doubles as an
atomic completion marker.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiment, online, poa, returns, svgplot
from .fair import solve_fair
from .market import InstanceSampler, MarketError, read_instance
from .online import ArrivalSequence, greedy_online
from .returns import ReturnModelError
from .selfish import MONOPOLY, Stationary, kkt_residual_of, solve_selfish

EXIT_USAGE = 1
EXIT_ASSUMPTIONS = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Run:
    """Collects output files and writes the manifest last."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.seed = args.seed
        self.started = time.time()
        self.outputs: list[str] = []
        payload = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        self.config_hash = hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()
        ).hexdigest()

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "tool_version": __version__,
            "started": self.started,
            "finished": time.time(),
            "outputs": self.outputs,
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n"
        )


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MATCHMARKET_THREADS", "")
    return max(1, int(env)) if env.isdigit() else 1


def _models(args, m: int) -> list:
    if not (0.0 <= args.alpha < 1.0):
        raise CliError(f"invalid alpha {args.alpha}: must lie in [0, 1)",
                       EXIT_ASSUMPTIONS)
    return [returns.parametric(args.alpha)] * m


def _stationary(args) -> Stationary:
    if getattr(args, "eps", None) is not None:
        return Stationary("competition", args.eps)
    return MONOPOLY


def cmd_bound(args) -> int:
    models = _models(args, args.users)
    for mod in models:
        report = returns.check_assumptions(mod)
        if not report.all_ok:
            print(f"assumption check failed: {report}", file=sys.stderr)
            return EXIT_ASSUMPTIONS
    run = _Run("bound", args)
    rep = poa.theorem1_bound(models)
    print(f"H = {rep.H:.9g}")
    print(f"c = {rep.c:.9g}")
    print(f"L = {rep.L:.9g}")
    print(f"bound = {rep.bound:.9g}")
    run.path("bound.json").write_text(json.dumps({
        "H": rep.H, "h": rep.h, "c": rep.c, "L": rep.L, "bound": rep.bound,
        "u_bars": list(rep.u_bars),
    }, indent=2) + "\n")
    run.finish()
    return 0


def _write_matrix_csv(path: Path, mat: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(mat):
            writer.writerow([f"{v:.9g}" for v in row])


def cmd_match(args) -> int:
    inst = read_instance(args.instance)
    models = _models(args, inst.m)
    stat = _stationary(args)
    run = _Run("match", args)
    extra: dict = {}
    if args.mode == "fair":
        sol = solve_fair(inst)
        x, u, value = sol.matching.x, sol.matching.u, sol.value
    elif args.mode == "selfish":
        sol = solve_selfish(inst, models, stat, seed=args.seed)
        x, u = sol.matching.x, sol.matching.u
        value = sol.value
        kkt = kkt_residual_of(inst, models, sol, stat)
        extra = {"fw_gap": sol.fw_gap, "mode": sol.mode,
                 "kkt_max_residual": kkt.max_residual,
                 "kkt_stationarity": kkt.stationarity}
    else:
        rng = np.random.default_rng(np.random.SeedSequence((args.seed, 1)))
        seq = ArrivalSequence(order=rng.permutation(inst.m), instance=inst)
        sol = greedy_online(seq, models, stat)
        x, u, value = sol.matching.x, sol.matching.u, sol.value
        extra = {"order": [int(i) for i in seq.order]}
    _write_matrix_csv(run.path("x.csv"), x)
    _write_matrix_csv(run.path("utilities.csv"), u.reshape(1, -1))
    run.path("solution.json").write_text(json.dumps(
        {"mode": args.mode, "value": value, **extra}, indent=2) + "\n")
    print(f"value = {value:.9g}")
    run.finish()
    return 0


def _sampler(args) -> InstanceSampler:
    return InstanceSampler(distribution=args.dist, a=args.beta_a, b=args.beta_b,
                           seed=args.seed)


def cmd_poa(args) -> int:
    models = _models(args, args.m)
    run = _Run("poa", args)
    rep = poa.empirical_poa(models, _sampler(args), args.m, args.n, args.trials,
                            _stationary(args), threads=_threads(args))
    poa.write_trials_csv(rep, run.path("poa_trials.csv"))
    poa.write_summary_json(rep, run.path("poa_summary.json"))
    print(f"min_ratio = {rep.min_ratio:.9g}")
    print(f"mean_ratio = {rep.mean_ratio:.9g}")
    run.finish()
    return 0


def cmd_sweep(args) -> int:
    try:
        eps_list = [float(tok) for tok in args.eps.split(",") if tok]
    except ValueError as exc:
        raise CliError(f"invalid --eps list: {exc}") from exc
    if not eps_list or any(e <= 0.0 or e > 1.0 for e in eps_list):
        raise CliError("--eps values must lie in (0, 1]")
    models = _models(args, args.m)
    run = _Run("sweep", args)
    sweep = poa.competition_sweep(models, _sampler(args), args.m, args.n,
                                  args.trials, eps_list, threads=_threads(args))
    poa.write_sweep_csv(sweep, run.path("sweep.csv"))
    eps_sorted = sorted(sweep, reverse=True)
    svgplot.plot_lines(
        run.path("sweep.svg"),
        [("min ratio", eps_sorted, [sweep[e].min_ratio for e in eps_sorted]),
         ("mean ratio", eps_sorted, [sweep[e].mean_ratio for e in eps_sorted])],
        title="Empirical PoA vs eps", xlabel="eps", ylabel="ratio", log_x=True)
    for e in eps_sorted:
        print(f"eps={e:g}: min_ratio={sweep[e].min_ratio:.9g}")
    run.finish()
    return 0


def cmd_online(args) -> int:
    models = _models(args, args.m)
    run = _Run("online", args)
    rep = online.online_poa_empirical(models, _sampler(args), args.m, args.n,
                                      args.trials, _stationary(args),
                                      threads=_threads(args))
    online.write_online_csv(rep, run.path("online_trials.csv"))
    poa.write_summary_json(rep, run.path("online_summary.json"))
    print(f"min_ratio = {rep.min_ratio:.9g}")
    print(f"mean_ratio = {rep.mean_ratio:.9g}")
    run.finish()
    return 0


_SIM_CONFIG_KEYS = {
    "study", "players_per_condition", "slots", "rounds", "outside_per_round",
    "payoff_scale", "noise_sd", "alpha_learn", "seed", "selfish_objective",
}
_SIM_BEHAVIOR_KEYS = {
    "switch_hi", "switch_slope", "switch_lo", "risk_decay",
    "drop_base", "drop_low_bonus",
}


def _sim_setup(args):
    cfg_kwargs = {"study": args.study, "seed": args.seed}
    beh_kwargs: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise CliError("config must be a JSON object")
        behavior_part = data.pop("behavior", {})
        if not isinstance(behavior_part, dict):
            raise CliError("config key 'behavior' must be an object")
        for key in data:
            if key not in _SIM_CONFIG_KEYS:
                raise CliError(f"unknown config key {key!r}")
        for key in behavior_part:
            if key not in _SIM_BEHAVIOR_KEYS:
                raise CliError(f"unknown behavior config key {key!r}")
        cfg_kwargs.update(data)
        beh_kwargs = behavior_part
    try:
        config = experiment.StudyConfig(**cfg_kwargs)
        behavior = experiment.BehaviorModel(**beh_kwargs)
    except (experiment.ExperimentError, TypeError) as exc:
        raise CliError(f"invalid config: {exc}") from exc
    return config, behavior


def cmd_sim(args) -> int:
    config, behavior = _sim_setup(args)
    run = _Run("sim", args)
    results, agg = experiment.run_batch(config, behavior, pairs=args.pairs)
    experiment.write_metrics_csv(agg, run.path("metrics.csv"))
    experiment.write_round_log_csv(results[0], run.path("round_log_game0.csv"))

    hist = experiment.realized_payoff_histogram(results[0])
    with open(run.path("histograms.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "bin_lo", "bin_hi", "count"])
        for name, data in hist.items():
            edges, counts = data["edges"], data["counts"]
            for k in range(len(counts)):
                writer.writerow([name, f"{edges[k]:.9g}", f"{edges[k + 1]:.9g}",
                                 int(counts[k])])

    rounds = list(range(1, config.rounds + 1))
    for metric, fname, ylabel in (
        ("mean_payoff_per_round", "utility_per_round.svg", "mean payoff (cents)"),
        ("engagement_per_round", "engagement_per_round.svg", "engagement rate"),
        ("drop_count_per_round", "drops_per_round.svg", "drops"),
    ):
        series = []
        for arm in ("Fair", "Selfish"):
            per_round = np.mean(
                [getattr(res.arms[arm], metric) for res in results], axis=0)
            series.append((arm, rounds, list(per_round)))
        svgplot.plot_lines(run.path(fname), series, title=metric,
                           xlabel="round", ylabel=ylabel)
    poa_vals = [res.metrics["poa_pair"] for res in results
                if res.metrics["poa_pair"] == res.metrics["poa_pair"]]
    svgplot.plot_lines(
        run.path("poa_pairs.svg"),
        [("per-pair PoA", list(range(len(poa_vals))), poa_vals),
         ("mean", [0, len(poa_vals) - 1], [float(np.mean(poa_vals))] * 2)],
        title="Selfish/Fair welfare per pair", xlabel="pair", ylabel="ratio")
    for key in ("fair_mean_total", "selfish_mean_total", "fair_engagement",
                "selfish_engagement", "poa_pair"):
        print(f"{key} = {agg[key]:.9g}")
    run.finish()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchmarket",
        description="Fair vs. selfish matching: bounds, solvers, simulations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: MATCHMARKET_THREADS or 1)")

    def sampled(p: argparse.ArgumentParser) -> None:
        p.add_argument("--m", type=int, default=5)
        p.add_argument("--n", type=int, default=5)
        p.add_argument("--trials", type=int, default=500)
        p.add_argument("--dist", choices=("beta", "uniform"), default="beta")
        p.add_argument("--beta-a", type=float, default=2.0)
        p.add_argument("--beta-b", type=float, default=2.0)

    p = sub.add_parser("bound", help="constant PoA lower bound")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--users", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("match", help="solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--mode", choices=("fair", "selfish", "online"),
                   default="fair")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=None,
                   help="competition chain return probability")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("poa", help="empirical PoA by Monte Carlo")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=None)
    sampled(p)
    common(p)
    p.set_defaults(func=cmd_poa)

    p = sub.add_parser("sweep", help="competition sweep over eps")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--eps", default="0.5,0.1,0.01,0.001")
    sampled(p)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("online", help="online greedy PoA")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=None)
    sampled(p)
    common(p)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("sim", help="behavioral study simulation")
    p.add_argument("--study", choices=("A", "B", "C"), default="B")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--config", default=None,
                   help="JSON file with StudyConfig/BehaviorModel overrides")
    common(p)
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (MarketError, experiment.ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReturnModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
