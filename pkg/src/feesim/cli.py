"""Command-line front end.

Subcommands: ``eval`` (one strategy decision), ``curve`` (utility against
elapsed time), ``ctmc`` (fee-bumping parameter sweep), ``simulate``
(Monte Carlo runs).  Reports are CSV with a metadata comment line carrying
the version, seed and configuration hash; ``--plot`` additionally renders
a figure next to the delimited output.

Exit codes: 0 success, 2 scenario/argument parse error, 3 domain error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import sys

import numpy as np

from . import __version__
from .ctmc import SWEEPABLE, sweep
from .errors import DomainError, InvalidStateError, NumericalError, ScenarioError
from .model import MempoolSnapshot, fee_sample
from .scenario_io import ScenarioDocument, parse_scenario_file, scenario_digest
from .simulate import simulate_oblivious, simulate_semi_strategic
from .strategies import (
    StrategyDecision,
    baseline_decision,
    fbr_decide,
    ibr_optimize,
    nbr_optimize,
    nbr_success_prob,
    utility_vs_elapsed_curve,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DOMAIN = 3
EXIT_NUMERICAL = 4

_STRATEGIES = ("nbr", "ibr", "fbr", "baseline")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows, meta: str):
    buf = io.StringIO()
    buf.write(f"# feesim={__version__} {meta}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    text = buf.getvalue()
    if path:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load(args) -> ScenarioDocument:
    return parse_scenario_file(args.scenario)


def _parse_pool(spec: str | None, doc: ScenarioDocument, elapsed: float) -> MempoolSnapshot:
    """Pool specs: inline fees 'a,b,c', a CSV path, or 'draw:<seed>'."""
    if not spec:
        return MempoolSnapshot((), elapsed)
    if spec.startswith("draw:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"draw spec needs an integer seed, got {spec!r}") from None
        rng = np.random.Generator(np.random.Philox(seed))
        arrivals = doc.scenario.arrivals
        if hasattr(arrivals, "count"):
            n = arrivals.count(elapsed)
        else:
            n = int(rng.poisson(arrivals.rate * elapsed))
        fees = np.atleast_1d(fee_sample(doc.scenario.fees, rng, size=n))
        return MempoolSnapshot(tuple(float(f) for f in fees), elapsed)
    if "," not in spec:
        try:
            return MempoolSnapshot((float(spec),), elapsed)
        except ValueError:
            pass
        with open(spec, "r", encoding="utf-8") as handle:
            fields = [f for line in handle for f in line.replace(",", " ").split()]
        fees = tuple(float(f) for f in fields if not f.startswith("#"))
        return MempoolSnapshot(fees, elapsed)
    return MempoolSnapshot(tuple(float(f) for f in spec.split(",") if f.strip()), elapsed)


def _parse_grid(spec: str) -> list[float]:
    """Either 'start:stop:count' or a comma list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise DomainError(f"grid spec must be start:stop:count, got {spec!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise DomainError("grid needs at least one point")
        return list(np.linspace(start, stop, count))
    return [float(f) for f in spec.split(",") if f.strip()]


def _decide(doc: ScenarioDocument, strategy: str, elapsed: float, pool: MempoolSnapshot):
    scenario = doc.scenario
    if strategy == "nbr":
        return nbr_optimize(scenario, elapsed)
    if strategy == "ibr":
        return ibr_optimize(scenario, pool)
    if strategy == "fbr":
        return fbr_decide(scenario, pool)
    if strategy == "baseline":
        return baseline_decision(scenario, elapsed)
    if strategy.startswith("fixed:"):
        raw = strategy.split(":", 1)[1]
        try:
            fee = scenario.valuation if raw.lower() == "v" else float(raw)
        except ValueError:
            raise DomainError(f"fixed strategy needs a fee, got {raw!r}") from None
        if pool.fees:
            from .strategies import ibr_success_prob

            win = ibr_success_prob(scenario, pool, fee)
        else:
            win = nbr_success_prob(scenario, elapsed, fee)
        return StrategyDecision(fee, elapsed, (scenario.valuation - fee) * win, win)
    raise DomainError(f"unknown strategy {strategy!r}")


def _cmd_eval(args) -> int:
    doc = _load(args)
    pool = _parse_pool(args.pool, doc, args.elapsed)
    decision = _decide(doc, args.strategy, args.elapsed, pool)
    print(f"strategy          {args.strategy}")
    print(f"fee               {decision.fee:.6f}")
    print(f"broadcast_time    {decision.broadcast_time:.6f}")
    print(f"expected_utility  {decision.expected_utility:.6f}")
    print(f"win_probability   {decision.inclusion_probability:.6f}")
    if args.out:
        seed = args.pool.split(":", 1)[1] if args.pool and args.pool.startswith("draw:") else 0
        meta = (f"seed={seed} config={scenario_digest(doc)} "
                f"strategy={args.strategy} elapsed={args.elapsed}")
        _write_csv(args.out,
                   ("strategy", "fee", "broadcast_time", "expected_utility", "win_probability"),
                   [(args.strategy, decision.fee, decision.broadcast_time,
                     decision.expected_utility, decision.inclusion_probability)],
                   meta)
    return EXIT_OK


def _cmd_curve(args) -> int:
    doc = _load(args)
    grid = _parse_grid(args.grid)
    points = utility_vs_elapsed_curve(doc.scenario, args.strategy, grid,
                                      draws=args.draws, seed=args.seed)
    meta = (f"seed={args.seed} config={scenario_digest(doc)} "
            f"strategy={args.strategy} draws={args.draws}")
    rows = [(p.elapsed, p.utility, p.fee, p.win_probability) for p in points]
    _write_csv(args.out, ("t_elapsed", "utility", "fee", "win_prob"), rows, meta)
    if args.plot:
        from .plots import save_curve_figure

        save_curve_figure(points, args.plot, title=f"{args.strategy} utility")
    return EXIT_OK


def _cmd_ctmc(args) -> int:
    doc = _load(args)
    if doc.semi_strategic is None:
        raise DomainError("the scenario has no [semi_strategic] section")
    params = doc.semi_strategic
    key, _, values = args.sweep.partition("=")
    key = key.strip()
    if not values:
        raise DomainError(f"sweep spec must be param=v1,v2,..., got {args.sweep!r}")
    grid = [float(v) for v in values.split(",") if v.strip()]
    points = sweep(params, key, grid)
    meta = f"seed=0 config={scenario_digest(doc)} sweep={key}"
    rows = [(p.value, p.utility, p.residual, p.state_count) for p in points]
    _write_csv(args.out, ("swept_value", "utility", "residual", "state_count"), rows, meta)
    if args.plot:
        from .plots import save_sweep_figure

        save_sweep_figure(points, args.plot, xlabel=key)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    doc = _load(args)
    if args.mode == "oblivious":
        pool = _parse_pool(args.pool, doc, args.elapsed) if args.pool else None
        report = simulate_oblivious(doc.scenario, args.strategy, args.elapsed,
                                    args.trials, args.seed, pool=pool)
        detail = args.strategy
    else:
        if doc.semi_strategic is None:
            raise DomainError("the scenario has no [semi_strategic] section")
        report = simulate_semi_strategic(doc.semi_strategic, args.trials, args.seed)
        detail = "semi"
    meta = (f"seed={args.seed} config={scenario_digest(doc)} mode={args.mode} "
            f"detail={detail} trials={args.trials}")
    rows = [(args.mode, detail, report.trials, report.seed, report.mean_utility,
             report.utility_stderr, report.inclusion_rate)]
    _write_csv(args.out,
               ("mode", "detail", "trials", "seed", "mean_utility",
                "utility_stderr", "inclusion_rate"),
               rows, meta)
    if args.plot:
        from .plots import save_report_figure

        save_report_figure(report, args.plot, title=f"{args.mode}: {detail}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feesim",
        description="Evaluate, optimize and simulate blockchain transaction "
                    "fee strategies against an observable mempool.",
    )
    parser.add_argument("--version", action="version", version=f"feesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, plot=True):
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--out", help="write the CSV report here instead of stdout")
        p.add_argument("--format", choices=("csv",), default="csv",
                       help="report format (csv)")
        if plot:
            p.add_argument("--plot", help="also render a figure to this file")

    p_eval = sub.add_parser("eval", help="evaluate one strategy decision")
    common(p_eval, plot=False)
    p_eval.add_argument("--strategy", required=True,
                        help="nbr | ibr | fbr | baseline | fixed:<fee or V>")
    p_eval.add_argument("--elapsed", type=float, default=0.0,
                        help="time since the last block")
    p_eval.add_argument("--pool", help="inline fees 'a,b,c', a CSV path, or draw:<seed>")
    p_eval.set_defaults(func=_cmd_eval)

    p_curve = sub.add_parser("curve", help="utility against elapsed time")
    common(p_curve)
    p_curve.add_argument("--strategy", required=True, choices=_STRATEGIES)
    p_curve.add_argument("--grid", required=True,
                         help="elapsed times: 'start:stop:count' or comma list")
    p_curve.add_argument("--draws", type=int, default=200,
                         help="mempool draws per grid point for ibr/fbr")
    p_curve.add_argument("--seed", type=int, default=0)
    p_curve.set_defaults(func=_cmd_curve)

    p_ctmc = sub.add_parser("ctmc", help="sweep the fee-bumping chain")
    common(p_ctmc)
    p_ctmc.add_argument("--sweep", required=True,
                        help=f"param=v1,v2,... with param in {'/'.join(SWEEPABLE)}")
    p_ctmc.set_defaults(func=_cmd_ctmc)

    p_sim = sub.add_parser("simulate", help="Monte Carlo simulation")
    common(p_sim)
    p_sim.add_argument("--mode", required=True, choices=("oblivious", "semi"))
    p_sim.add_argument("--strategy", default="nbr",
                       help="oblivious policy: nbr | ibr | fbr | baseline | fixed:<fee>")
    p_sim.add_argument("--elapsed", type=float, default=0.0)
    p_sim.add_argument("--pool", help="pin the observed mempool (oblivious mode)")
    p_sim.add_argument("--trials", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, InvalidStateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
