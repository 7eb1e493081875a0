"""Command-line interface.

Every subcommand writes UTF-8 CSV to stdout (or files, for ``study``).
Failures exit nonzero after printing ``error,<kind>,<message>`` on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import calibrate, montecarlo, study
from .detect import GaussianStream, Procedure, trace_statistics
from .errors import SRError
from .model import GaussianModel, zeta
from .solver import GridConfig, Scheme, build_grid, solve_arl, stadd
from .study import fmt


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, code=2)


def _fail(kind, message, code=1):
    sys.stderr.write(f"error,{kind},{' '.join(str(message).split())}\n")
    sys.exit(code)


def _out(lines):
    sys.stdout.write("".join(line + "\n" for line in lines))


def _row(*values):
    return ",".join(fmt(v) for v in values)


def _grid_config(args) -> GridConfig:
    return GridConfig(n_nodes=args.nodes, scheme=Scheme(args.scheme))


def _add_grid_args(p):
    p.add_argument("--nodes", type=int, default=None, help="solver node count (default: automatic)")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.GAUSS_LEGENDRE.value)


def _threshold(args, theta_putative):
    if args.threshold is not None:
        return args.threshold
    return calibrate.threshold_from_zeta(args.gamma, theta_putative)


def cmd_zeta(args):
    _out(["theta_putative,zeta", f"{fmt(args.theta)},{zeta(args.theta, args.terms):.6f}"])


def cmd_calibrate(args):
    config = _grid_config(args)
    a = calibrate.threshold_from_zeta(args.gamma, args.theta_putative)
    grid = build_grid(GaussianModel(0.0, args.theta_putative), a, config.n_nodes, config.scheme, config)
    header = "gamma,theta_putative,threshold_asymptotic,arl_asymptotic"
    row = [args.gamma, args.theta_putative, a, solve_arl(grid)]
    if args.exact:
        cal = calibrate.calibrate_exact(args.gamma, args.theta_putative, args.rel_tol, config)
        header += ",threshold_exact,achieved_arl"
        row += [cal.threshold_exact, cal.achieved_arl]
    _out([header, _row(*row)])


def cmd_arl(args):
    config = _grid_config(args)
    a = _threshold(args, args.theta_putative)
    grid = build_grid(GaussianModel(0.0, args.theta_putative), a, config.n_nodes, config.scheme, config)
    _out(["theta_putative,threshold,arl", _row(args.theta_putative, a, solve_arl(grid))])


def cmd_stadd(args):
    config = _grid_config(args)
    mode = "exact" if args.exact else "zeta"
    ideal = stadd(GaussianModel(args.theta, args.theta), gamma=args.gamma, config=config,
                  threshold_mode=mode)
    rep = stadd(GaussianModel(args.theta, args.theta_putative), gamma=args.gamma, config=config,
                threshold_mode=mode, ideal=ideal.stadd)
    _out(["theta_putative,theta_true,gamma,threshold,arl,stadd,re,est_rel_error",
          _row(args.theta_putative, args.theta, args.gamma, rep.threshold, rep.arl, rep.stadd, rep.re,
               rep.est_rel_error)])


def cmd_study(args):
    config_cls = study.StudyConfig.quick if args.quick else study.StudyConfig
    grid = GridConfig(n_nodes=args.nodes, scheme=Scheme(args.scheme), estimate_error=False)
    gammas = args.gamma
    table1_gammas = study.TABLE1_GAMMAS if not args.quick else tuple(sorted(set(gammas)))
    config = config_cls(gamma_list=tuple(sorted(set(table1_gammas) | set(gammas))),
                        threshold_mode="exact" if args.exact else "zeta",
                        output_dir=Path(args.out), grid=grid, workers=args.workers)
    study.run_study(gammas, config, table1=not args.no_table1, mc_replications=args.mc_reps,
                    seed=args.seed)
    _out(["output_dir", str(args.out)])


def _parse_nu(text):
    if text is None:
        return None
    if text.lower() in ("inf", "infinite", "none"):
        return math.inf
    return int(text)


def cmd_simulate(args):
    theta = args.theta
    if args.trajectory:
        nu = _parse_nu(args.nu)
        nu = 50 if nu is None else nu
        model = GaussianModel(theta, args.theta_putative)
        stream = GaussianStream(model, None if nu == math.inf else nu, seed=args.seed)
        xs = []
        for x in stream:
            xs.append(x)
            if len(xs) == args.length:
                break
        rows = trace_statistics(xs, args.theta_putative)
        _out(["n,x,cusum,sr"] + [f"{n},{x:.6g},{w:.6g},{r:.6g}" for n, x, w, r in rows])
        return

    nu = _parse_nu(args.nu)
    if nu is None:
        nu = math.inf
    if args.threshold is None and args.gamma is None:
        _fail("usage", "one of --threshold or --gamma is required", code=2)
    model = GaussianModel(theta, args.theta_putative)
    a = _threshold(args, args.theta_putative)
    if nu == math.inf:
        metric, fn = "arl", montecarlo.estimate_arl
    elif nu == 0:
        metric, fn = "delay_nu0", montecarlo.estimate_delay_nu0
    else:
        metric, fn = "stadd", montecarlo.estimate_stadd
    cfg = montecarlo.McConfig(replications=args.reps, seed=args.seed, change_point_nu=nu,
                              worker_count=args.workers)
    est = fn(model, Procedure(args.procedure), a, cfg)
    lines = [est.csv_record(metric)]
    if args.header:
        lines.insert(0, "metric,mean,se,reps,truncated")
    _out(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srrobust", description="Shiryaev-Roberts robustness toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("zeta", help="limiting average exponential overshoot")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--terms", type=int, default=10**6)
    p.set_defaults(func=cmd_zeta)

    p = sub.add_parser("calibrate", help="threshold for a target ARL")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--theta-putative", type=float, required=True)
    p.add_argument("--exact", action="store_true", help="also root-find ARL(A) = gamma")
    p.add_argument("--rel-tol", type=float, default=1e-3)
    _add_grid_args(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("arl", help="ARL to false alarm from the solver")
    p.add_argument("--theta-putative", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--threshold", type=float)
    g.add_argument("--gamma", type=float)
    _add_grid_args(p)
    p.set_defaults(func=cmd_arl)

    p = sub.add_parser("stadd", help="STADD and RE for one cell")
    p.add_argument("--theta-putative", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--exact", action="store_true", help="calibrate thresholds exactly")
    _add_grid_args(p)
    p.set_defaults(func=cmd_stadd)

    p = sub.add_parser("study", help="reproduce the threshold table and STADD/RE grids")
    p.add_argument("--gamma", type=float, nargs="+", default=list(study.STADD_GAMMAS))
    p.add_argument("--quick", action="store_true", help="4x4 subgrid")
    p.add_argument("--out", required=True)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--no-table1", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--mc-reps", type=int, default=0, help="Monte Carlo check of the diagonal cells")
    p.add_argument("--seed", type=int, default=montecarlo.DEFAULT_SEED)
    _add_grid_args(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("simulate", help="Monte Carlo estimate or sample trajectory")
    p.add_argument("--procedure", choices=[q.value for q in Procedure], default="sr")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--theta-putative", type=float, default=0.5)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float)
    g.add_argument("--gamma", type=float)
    p.add_argument("--nu", default=None, help="change-point (integer or 'inf')")
    p.add_argument("--reps", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=montecarlo.DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--header", action="store_true", help="print the CSV header line too")
    p.add_argument("--trajectory", action="store_true", help="emit n,x,cusum,sr for one sample path")
    p.add_argument("--length", type=int, default=100)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SRError as exc:
        _fail(type(exc).__name__, exc)
    except ValueError as exc:
        _fail("usage", exc, code=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
