"""Command-line entry point: run, certify, and compare scenarios.

Subcommands
-----------
run CONFIG
    Execute one scenario, write the trajectory CSV, the metric or
    tracking reports, and a rendered figure next to them.
certify CONFIG
    Evaluate the sufficient gain conditions of a tracking scenario and
    write the certificate table.
compare CONFIG [CONFIG ...]
    Run several traffic scenarios on one network and horizon and emit
    the comparison table {mean throughput, max violation, compute time}.

The output directory is --out when given, else $SADDLEFLOW_OUT, else
the working directory.  Exit codes: 0 success, 2 invalid config, 1 any
other package error.
"""

import argparse
import os
import sys

import numpy as np

from .certificates import certify_equality, certify_inequality
from .config import load_scenario
from .errors import ConfigInvalid, IncompatibleScenarios, SaddleflowError
from .experiments import run_alinea_traffic, run_mpc_traffic, run_pd_traffic
from .figures import tracking_figure, traffic_figure
from .plant import check_stability
from .simulator import integrate, tracking_report

OUT_ENV_VAR = "SADDLEFLOW_OUT"


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV_VAR) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _say(args, text):
    if not args.quiet:
        print(text)


def _write_kv_csv(path, mapping, comment):
    """Two-column key,value table; lists are flattened to JSON-ish text."""
    with open(path, "w") as fh:
        fh.write("# %s\n" % comment)
        fh.write("key,value\n")
        for key, value in mapping.items():
            if isinstance(value, float):
                fh.write("%s,%.17g\n" % (key, value))
            else:
                fh.write("%s,%s\n" % (key, str(value).replace("\n", " ")))


def _certificate(scenario):
    plant_cert = check_stability(scenario.plant)
    if scenario.problem.kind == "inequality":
        eps, eta = scenario.gains.for_inequality()
        return certify_inequality(scenario.plant, plant_cert,
                                  scenario.problem, eta, eps)
    eps, eta_u, eta_lam = scenario.gains.for_equality()
    return certify_equality(scenario.plant, plant_cert, scenario.problem,
                            eta_u, eta_lam, eps)


def _run_tracking(scenario, out, args):
    report = _certificate(scenario) if scenario.certify else None
    log = integrate(scenario.plant, scenario.problem, scenario.controller,
                    scenario.gains, scenario.x0, scenario.z0,
                    scenario.t_span, scenario.dt,
                    log_every=scenario.log_every, report=report)
    base = os.path.join(out, scenario.name)
    log.to_csv(base + ".csv")
    written = [base + ".csv"]
    if report is not None:
        _write_kv_csv(base + "_certificate.csv", report.as_dict(),
                      "gain-condition certificate for scenario %s"
                      % scenario.name)
        scores = tracking_report(log, report)
        _write_kv_csv(base + "_report.csv", scores,
                      "tracking scores for scenario %s" % scenario.name)
        written += [base + "_certificate.csv", base + "_report.csv"]
        _say(args, report.summary())
        _say(args, "envelope violation: %.6g (<= 0 means certified bound "
             "held)" % scores["max_violation"])
        _say(args, "asymptotic error:   %.6g" % scores["asymptotic_error"])
    written.append(tracking_figure(log, base + ".png", title=scenario.name))
    for path in written:
        _say(args, "wrote %s" % path)
    return 0


def _execute_traffic(scenario):
    if scenario.controller == "projected_pd":
        return run_pd_traffic(scenario.network, scenario.problem,
                              scenario.eta, scenario.x0, scenario.z0,
                              scenario.t_span, scenario.dt,
                              noise=scenario.noise,
                              log_every=scenario.log_every)
    if scenario.controller == "alinea":
        return run_alinea_traffic(scenario.network, scenario.gain,
                                  scenario.x0, scenario.u0, scenario.t_span,
                                  scenario.dt, noise=scenario.noise,
                                  log_every=scenario.log_every)
    return run_mpc_traffic(scenario.network, scenario.problem, scenario.x0,
                           scenario.t_span, scenario.dt,
                           noise=scenario.noise,
                           log_every=scenario.log_every, **scenario.mpc)


def _run_traffic(scenario, out, args):
    run = _execute_traffic(scenario)
    base = os.path.join(out, scenario.name)
    run.log.to_csv(base + ".csv")
    _write_kv_csv(base + "_metrics.csv", run.metrics(),
                  "case-study metrics for scenario %s" % scenario.name)
    figure = traffic_figure(run, scenario.network, base + ".png",
                            title=scenario.name)
    for key, value in run.metrics().items():
        _say(args, "%-26s %s" % (key, "%.6g" % value
                                 if isinstance(value, float) else value))
    for path in (base + ".csv", base + "_metrics.csv", figure):
        _say(args, "wrote %s" % path)
    return 0


def cmd_run(args):
    scenario = load_scenario(args.config)
    out = _out_dir(args)
    if scenario.kind == "tracking":
        return _run_tracking(scenario, out, args)
    return _run_traffic(scenario, out, args)


def cmd_certify(args):
    scenario = load_scenario(args.config)
    if scenario.kind != "tracking":
        raise ConfigInvalid("certify needs a tracking scenario, got kind "
                            "%r" % scenario.kind)
    report = _certificate(scenario)
    out = _out_dir(args)
    path = os.path.join(out, scenario.name + "_certificate.csv")
    _write_kv_csv(path, report.as_dict(),
                  "gain-condition certificate for scenario %s" % scenario.name)
    _say(args, report.summary())
    _say(args, "wrote %s" % path)
    return 0


def _require_same(label, values, names):
    first = values[0]
    for name, value in zip(names[1:], values[1:]):
        same = np.allclose(first, value) if isinstance(first, np.ndarray) \
            else first == value
        if not same:
            raise IncompatibleScenarios(
                "scenario %r differs from %r in %s" % (name, names[0], label))


def cmd_compare(args):
    scenarios = [load_scenario(path) for path in args.configs]
    for scenario in scenarios:
        if scenario.kind != "traffic":
            raise ConfigInvalid("compare needs traffic scenarios; %r is %s"
                                % (scenario.name, scenario.kind))
    names = [s.name for s in scenarios]
    nets = [s.network for s in scenarios]
    _require_same("link ids", [n.ids for n in nets], names)
    _require_same("routing matrix", [n.R for n in nets], names)
    _require_same("metered ramps", [n.controllable for n in nets], names)
    for field in ("phi", "beta", "d_max", "s_max", "x_jam"):
        _require_same("link parameter %s" % field,
                      [getattr(n, field) for n in nets], names)
    _require_same("horizon", [s.t_span for s in scenarios], names)
    _require_same("step size", [s.dt for s in scenarios], names)

    out = _out_dir(args)
    runs = []
    for scenario in scenarios:
        run = _execute_traffic(scenario)
        run.log.to_csv(os.path.join(out, scenario.name + ".csv"))
        runs.append(run)

    columns = ["controller", "mean_throughput", "max_violation",
               "post_transient_violation", "violation_integral",
               "compute_time"]
    with open(os.path.join(out, "compare.csv"), "w") as fh:
        fh.write("# metering comparison on a shared network and horizon\n")
        fh.write("# violation is ||max(y - ceilings, 0)||_2 of measured "
                 "densities\n")
        fh.write(",".join(columns) + "\n")
        for run in runs:
            metrics = run.metrics()
            fh.write(",".join(
                metrics["controller"] if c == "controller"
                else "%.17g" % metrics[c] for c in columns) + "\n")

    figure = traffic_figure(runs, nets[0], os.path.join(out, "compare.png"),
                            title="metering comparison")
    header = "%-14s %16s %14s %14s" % ("controller", "mean throughput",
                                       "max violation", "compute time")
    _say(args, header)
    for run in runs:
        metrics = run.metrics()
        _say(args, "%-14s %16.6g %14.6g %14.6g"
             % (metrics["controller"], metrics["mean_throughput"],
                metrics["max_violation"], metrics["compute_time"]))
    for path in (os.path.join(out, "compare.csv"), figure):
        _say(args, "wrote %s" % path)
    return 0


def _parser():
    parser = argparse.ArgumentParser(
        prog="saddleflow",
        description="Closed-loop tracking controllers and the ramp-metering "
                    "case study.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None,
                       help="output directory (default: $%s or the working "
                            "directory)" % OUT_ENV_VAR)
        p.add_argument("--quiet", action="store_true",
                       help="write files but print nothing")

    p_run = sub.add_parser("run", help="execute one scenario config")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cert = sub.add_parser("certify",
                            help="evaluate the gain-condition certificate")
    p_cert.add_argument("config")
    common(p_cert)
    p_cert.set_defaults(func=cmd_certify)

    p_cmp = sub.add_parser("compare",
                           help="run traffic scenarios and tabulate metrics")
    p_cmp.add_argument("configs", nargs="+")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigInvalid as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except SaddleflowError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
