"""Command-line experiment runner.

Exit codes: 0 success, 2 config error, 3 model-consistency error, 4 numerical error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import _rng, export
from .analysis import mse_monte_carlo, scaling_experiment, theorem1_bound, variance_bound
from .config import load_config
from .errors import ConfigError, DfrsError, ModelError, NumericalError, WireFormatError
from .geometry import exact_two_cell_failure, empirical_failure_rate, sanov_bound
from .reconstruction import full_pipeline
from .sensing import equivalence_test

SUBCOMMANDS = ("simulate", "scaling", "equivalence", "deploy", "bounds")


def _extra(cfg, key, conv, default):
    raw = cfg.extras.get(key)
    if raw is None:
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _int_list(raw):
    return [int(float(v)) for v in raw.split(",")]


class Run:
    def __init__(self, args, cfg):
        self.args, self.cfg = args, cfg
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.files = {}

    def csv(self, name, header, rows):
        self.files[name] = export.write_csv(os.path.join(self.out, name), header, rows)

    def manifest(self, **extra):
        cfg = self.cfg
        data = {"subcommand": self.args.command, "config": os.path.abspath(self.args.config),
                "output_dir": os.path.abspath(self.out), "experiment_id": cfg.experiment_id,
                "seed": cfg.seed, "seed_generated": cfg.seed_generated, "N": cfg.N,
                "L": cfg.partition.L, "M": cfg.partition.M, "trials": cfg.trials,
                "artifacts": dict(sorted(self.files.items()))}
        data.update(extra)
        with open(os.path.join(self.out, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return data


def cmd_simulate(run):
    cfg = run.cfg
    res = mse_monte_carlo(cfg, run.args.workers)
    run.csv("results.csv", export.RESULTS_HEADER, export.results_rows(res))
    dep = cfg.build_deployment()
    run.csv("deployment.csv", export.deployment_header(cfg.partition.d), export.deployment_rows(dep))
    run.csv("schedule.csv", ["t", "active_subcell"], export.schedule_rows(cfg.schedule))
    est = full_pipeline(cfg, trial=0)
    run.csv("estimate.csv", ["t", "supercell_j", "s_hat"], export.estimate_rows(est))
    run.csv("eval_grid.csv", export.eval_grid_header(cfg.partition.d),
            export.eval_grid_rows(est, cfg.field, cfg.eval_points, cfg.eval_snapshots))
    run.manifest(worst_mse=res.worst_mse, within_bound=res.within_bound())
    print(f"N={cfg.N} L={cfg.partition.L} M={cfg.partition.M} trials={cfg.trials} "
          f"worst_mse={res.worst_mse:.6g} within_bound={res.within_bound()}")


def cmd_scaling(run):
    cfg = run.cfg
    N_list = _extra(cfg, "scaling.N", _int_list, None)
    if not N_list:
        raise ConfigError("scaling needs scaling.N")
    if "scaling.l" in cfg.extras:
        l = _extra(cfg, "scaling.l", lambda v: int(float(v)), 1)
        rule = lambda N: l
    else:
        rule = cfg.extras.get("scaling.L_rule", "constant")
    trials = _extra(cfg, "scaling.trials", lambda v: int(float(v)), cfg.trials)
    table = scaling_experiment(N_list, rule, cfg, run.args.workers, trials)
    run.csv("scaling.csv", export.SCALING_HEADER, export.scaling_rows(table))
    errors = {r.N: r.error for r in table.rows if r.error}
    run.manifest(slope=None if math.isnan(table.slope) else table.slope, row_errors=errors)
    print(f"slope={table.slope:.4f}")
    for N, msg in errors.items():
        print(f"N={N}: {msg}", file=sys.stderr)


def cmd_equivalence(run):
    cfg = run.cfg
    c = _extra(cfg, "equivalence.c", float, cfg.c)
    points = _extra(cfg, "equivalence.points", lambda v: int(float(v)), 21)
    trials = _extra(cfg, "equivalence.trials", lambda v: int(float(v)), 10 ** 6)
    res = equivalence_test(c, np.linspace(-c, c, points), trials, cfg.seed)
    dev = np.abs(res.p_threshold - res.p_expansion)
    rows = ([y, e, a, b, d, res.max_deviation, res.threshold]
            for y, e, a, b, d in zip(res.y, res.expected, res.p_threshold, res.p_expansion, dev))
    run.csv("equivalence.csv", ["y", "expected", "p_threshold", "p_expansion", "abs_diff",
                                "max_deviation", "threshold"], rows)
    run.manifest(max_deviation=res.max_deviation, threshold=res.threshold, passed=res.within_tolerance)
    print(f"max_deviation={res.max_deviation:.3g} threshold={res.threshold:.3g} "
          f"pass={res.within_tolerance}")


def cmd_deploy(run):
    cfg = run.cfg
    P = cfg.partition
    N_list = _extra(cfg, "deploy.N", _int_list, [50, 100, 200])
    delta = _extra(cfg, "deploy.delta", float, 0.5)
    trials = _extra(cfg, "deploy.trials", lambda v: int(float(v)), 10 ** 4)
    rows = []
    for N in N_list:
        sb = sanov_bound(N, P.L, P.M, delta)
        exact = exact_two_cell_failure(N, 1 - delta) if P.L * P.M == 2 else math.nan
        emp = empirical_failure_rate(P, N, 1 - delta, trials, _rng.stream(cfg.seed, _rng.DEPLOYMENT, N))
        rows.append([N, P.L, P.M, delta, 1 - delta, sb.bound, sb.divergence, exact, emp, trials])
    run.csv("deploy.csv", ["N", "L", "M", "delta", "gamma", "sanov_bound", "divergence_bits",
                           "exact_failure", "empirical_failure", "trials"], rows)
    run.manifest()
    for r in rows:
        print(f"N={r[0]} sanov={r[5]:.4g} exact={r[7]:.4g} empirical={r[8]:.4g}")


def cmd_bounds(run):
    cfg = run.cfg
    P, N, c = cfg.partition, cfg.N, cfg.c
    var = variance_bound(P.L, P.M, N, c)
    diag = P.supercell_diagonal
    rows = []
    for t in cfg.eval_snapshots:
        for x in cfg.eval_points:
            loc, glob = theorem1_bound(cfg.field, P.L, P.M, N, c, x, t)
            rows.append([t, export.coords(x), cfg.field.local_modulus(diag, x, t),
                         cfg.field.global_modulus(diag, t), var, loc, glob])
    run.csv("bounds.csv", ["t", "x_coords", "modulus_local", "modulus_global", "variance_term",
                           "bound_local", "bound_global"], rows)
    run.manifest()
    print(f"variance_term={var:.17g} max_bound_local={max(r[5] for r in rows):.17g}")


def build_parser():
    parser = argparse.ArgumentParser(prog="dfrs", description="One-bit sensor-network field reconstruction experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=os.environ.get("DFRS_OUT", "dfrs_out"), help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
        if cfg.seed_generated:
            print(f"generated seed {cfg.seed}", file=sys.stderr)
        run = Run(args, cfg)
        globals()[f"cmd_{args.command}"](run)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, WireFormatError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except DfrsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
