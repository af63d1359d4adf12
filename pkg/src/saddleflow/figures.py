"""Report figures rendered next to the delimited output.

All rendering uses the Agg backend so the CLI works headless; every
function writes one PNG and returns its path.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 130


def _finite(values):
    values = np.asarray(values, dtype=float)
    return values[np.isfinite(values)]


def tracking_figure(log, path, title=None):
    """Tracking error against its certified envelope, plus the inputs.

    The error panel switches to a log scale when the data allow it; runs
    scored without a certificate have no envelope column and get the
    error trace alone.
    """
    fig, (ax_err, ax_u) = plt.subplots(
        2, 1, figsize=(7.0, 5.4), sharex=True,
        gridspec_kw={"height_ratios": [3, 2]})
    ax_err.plot(log.t, log.err, label="tracking error", color="tab:blue")
    if np.any(np.isfinite(log.env)):
        ax_err.plot(log.t, log.env, label="certified envelope",
                    color="tab:red", linestyle="--")
    positive = _finite(log.err)
    if positive.size and np.all(positive > 0):
        ax_err.set_yscale("log")
    ax_err.set_ylabel("||controller state error||")
    ax_err.legend(loc="upper right", frameon=False)
    ax_err.set_title(title or log.kind)

    for i in range(log.u.shape[1]):
        ax_u.plot(log.t, log.u[:, i], label="u[%d]" % i)
    ax_u.set_xlabel("t")
    ax_u.set_ylabel("inputs")
    if log.u.shape[1] <= 6:
        ax_u.legend(loc="best", frameon=False, ncol=3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def traffic_figure(runs, network, path, title=None):
    """Throughput, ceiling violation, and bottleneck density per run.

    Accepts one TrafficRun or a list; all runs share the time axis of
    their own logs, so comparison runs should share a grid.
    """
    if not isinstance(runs, (list, tuple)):
        runs = [runs]
    fig, (ax_flow, ax_viol, ax_x) = plt.subplots(
        3, 1, figsize=(7.0, 7.2), sharex=True)
    for run in runs:
        ax_flow.plot(run.t, run.flow, label=run.controller)
        ax_viol.plot(run.t, run.violation, label=run.controller)
    ax_flow.set_ylabel("exit flow")
    ax_flow.legend(loc="lower right", frameon=False)
    ax_flow.set_title(title or "metering comparison")
    ax_viol.set_ylabel("ceiling violation")

    # the tightest link tells the congestion story; plot its density
    bottleneck = int(np.argmin(network.ceilings))
    for run in runs:
        ax_x.plot(run.t, run.log.x[:, bottleneck], label=run.controller)
    ax_x.axhline(network.ceilings[bottleneck], color="black", linewidth=0.8,
                 linestyle=":", label="ceiling %s" % network.ids[bottleneck])
    ax_x.set_xlabel("t")
    ax_x.set_ylabel("density %s" % network.ids[bottleneck])
    ax_x.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
