"""Closed-loop case-study runs: the CTM plant under three metering laws.

Each runner integrates the nonlinear cell-transmission model with RK4 on
a fixed grid while one controller supplies the ramp inflows: the tracking
controller (primal-dual flow on the measured densities), the local
integral law, or receding-horizon optimization on the free-flow model.
All runners log on the same grid and report the same metrics so runs are
directly comparable: exit flow from the true densities, constraint
violation from the measured ones, and controller-side compute time.
"""

import time

import numpy as np

from .controllers import (alinea_vector_field, mpc_policy,
                          projected_pd_vector_field)
from .errors import DimensionMismatch, NonFiniteState
from .signals import as_signal
from .simulator import TrajectoryLog
from .traffic import alinea_tables, ctm_vector_field, throughput

# Fraction of the horizon treated as transient when a cutoff is not given.
TRANSIENT_FRACTION = 0.5


def violation_norm(y, ceilings):
    """Positive-part violation ||max(y - ceilings, 0)||_2 per sample.

    Accepts a single sample or a (samples, n) stack; negative slack does
    not cancel violation elsewhere, hence the one-sided clip.
    """
    excess = np.maximum(np.asarray(y, dtype=float) - ceilings, 0.0)
    return np.linalg.norm(excess, axis=-1)


class TrafficRun:
    """One closed-loop run: trajectory log plus case-study metrics.

    Fields
    ------
    log : TrajectoryLog
        CSV-ready trajectory (err/envelope/Lyapunov columns are nan; the
        tracking certificates live on the LTI benchmarks, not here).
    flow : ndarray
        Exit flow at each sample, from the true densities.
    violation : ndarray
        Ceiling violation norm at each sample, from the measured output.
    compute_time : float
        Seconds spent inside controller evaluations (integration and
        logging excluded).
    controller : str
    """

    def __init__(self, log, flow, violation, compute_time, controller):
        self.log = log
        self.flow = np.asarray(flow)
        self.violation = np.asarray(violation)
        self.compute_time = float(compute_time)
        self.controller = controller

    @property
    def t(self):
        return self.log.t

    def mean_throughput(self):
        """Time-average exit flow over the whole run (trapezoid rule)."""
        if len(self.t) < 2:
            return float(self.flow[0]) if len(self.t) else 0.0
        return float(np.trapezoid(self.flow, self.t) / (self.t[-1] - self.t[0]))

    def max_violation(self, t_from=None):
        """Largest violation norm from `t_from` on (default: whole run)."""
        keep = np.ones(len(self.t), dtype=bool) if t_from is None \
            else self.t >= t_from
        return float(np.max(self.violation[keep]))

    def post_transient_violation(self):
        """Max violation over the trailing part of the run."""
        t0, t1 = self.t[0], self.t[-1]
        return self.max_violation(t0 + TRANSIENT_FRACTION * (t1 - t0))

    def violation_integral(self):
        """Time integral of the violation norm (trapezoid rule)."""
        if len(self.t) < 2:
            return 0.0
        return float(np.trapezoid(self.violation, self.t))

    def metrics(self):
        return {
            "controller": self.controller,
            "mean_throughput": self.mean_throughput(),
            "max_violation": self.max_violation(),
            "post_transient_violation": self.post_transient_violation(),
            "violation_integral": self.violation_integral(),
            "compute_time": self.compute_time,
        }


def _noise_signal(noise, n):
    if noise is None:
        return as_signal(np.zeros(n))
    return as_signal(noise, n)


def _grid(t_span, dt, log_every):
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise DimensionMismatch("t_span end %g precedes start %g" % (t1, t0))
    if dt <= 0:
        raise DimensionMismatch("dt must be positive, got %g" % dt)
    steps = int(round((t1 - t0) / dt))
    if abs(t0 + steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        steps = int(np.ceil((t1 - t0) / dt - 1e-12))
    log_every = max(int(log_every), 1)
    return t0, steps, log_every


def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("state became non-finite at t = %g" % t)


def _traffic_log(network, samples, lam_dim, kind):
    t, X, U, LAM, Y = samples
    t = np.asarray(t)
    nanv = np.full(len(t), np.nan)
    return TrajectoryLog(t=t, x=np.asarray(X), u=np.asarray(U),
                         lam=np.asarray(LAM).reshape(len(t), lam_dim),
                         y=np.asarray(Y), w=np.zeros((len(t), 0)),
                         err=nanv.copy(), env=nanv.copy(), V=nanv.copy(),
                         W=nanv.copy(), U=nanv.copy(),
                         zstar=np.full((len(t), 0), np.nan), kind=kind,
                         sup_zdot=float("nan"), sup_wdot=float("nan"))


def _rk4_joint(field, s, t, dt):
    k1 = field(t, s)
    k2 = field(t + 0.5 * dt, s + 0.5 * dt * k1)
    k3 = field(t + 0.5 * dt, s + 0.5 * dt * k2)
    k4 = field(t + dt, s + dt * k3)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_pd_traffic(network, problem, eta, x0, z0, t_span, dt, noise=None,
                   log_every=1):
    """Projected primal-dual metering in closed loop with the CTM.

    The controller sees only the measured densities y = x + w and the
    stored problem data; the plant it actually drives is the nonlinear
    FIFO model. z0 stacks the initial ramp flows and multipliers.
    """
    n, m, r = network.n, problem.m, problem.r
    w = _noise_signal(noise, n)
    x0 = np.asarray(x0, dtype=float).ravel()
    z0 = np.asarray(z0, dtype=float).ravel()
    if x0.shape != (n,) or z0.shape != (m + r,):
        raise DimensionMismatch("x0 needs %d densities and z0 needs %d + %d "
                                "controller states" % (n, m, r))
    t0, steps, log_every = _grid(t_span, dt, log_every)

    cost = [0.0]

    def field(t, s):
        x, z = s[:n], s[n:]
        u = np.maximum(z[:m], 0.0)
        y = np.maximum(x, 0.0) + w(t)
        tick = time.perf_counter()
        zdot = projected_pd_vector_field(problem, z, y, t, eta)
        cost[0] += time.perf_counter() - tick
        xdot = ctm_vector_field(network, x, u)
        return np.concatenate([xdot, zdot])

    s = np.concatenate([x0, z0])
    ts, X, U, LAM, Y, flow = [], [], [], [], [], []

    def record(t, s):
        x, z = s[:n], s[n:]
        ts.append(t)
        X.append(x.copy())
        U.append(np.maximum(z[:m], 0.0))
        LAM.append(z[m:].copy())
        Y.append(np.maximum(x, 0.0) + w(t))
        flow.append(throughput(network, x))

    record(t0, s)
    for k in range(steps):
        t = t0 + k * dt
        s = _rk4_joint(field, s, t, dt)
        _check_finite(s, t + dt)
        if (k + 1) % log_every == 0 or k == steps - 1:
            record(t0 + (k + 1) * dt, s)

    log = _traffic_log(network, (ts, X, U, LAM, Y), r, "traffic-pd")
    viol = violation_norm(np.asarray(Y), network.ceilings)
    return TrafficRun(log, flow, viol, cost[0], "projected_pd")


def run_alinea_traffic(network, gain, x0, u0, t_span, dt, noise=None,
                       log_every=1):
    """Local integral metering in closed loop with the CTM.

    Each ramp integrates gain * (ceiling - measured density) over its
    direct successors.  The integrator state is clamped to u >= 0 after
    every step; the law itself knows nothing about remote bottlenecks.
    """
    n, m = network.n, network.m
    downstream, gains, setpoints = alinea_tables(network, gain)
    w = _noise_signal(noise, n)
    x0 = np.asarray(x0, dtype=float).ravel()
    u0 = np.asarray(u0, dtype=float).ravel()
    if x0.shape != (n,) or u0.shape != (m,):
        raise DimensionMismatch("x0 needs %d densities and u0 needs %d ramp "
                                "flows" % (n, m))
    t0, steps, log_every = _grid(t_span, dt, log_every)

    cost = [0.0]

    def field(t, s):
        x, u = s[:n], np.maximum(s[n:], 0.0)
        y = np.maximum(x, 0.0) + w(t)
        measured = {network.ids[i]: y[i] for i in range(n)}
        tick = time.perf_counter()
        udot = alinea_vector_field(downstream, gains, setpoints, measured)
        cost[0] += time.perf_counter() - tick
        xdot = ctm_vector_field(network, x, u)
        return np.concatenate([xdot, udot])

    s = np.concatenate([x0, u0])
    ts, X, U, LAM, Y, flow = [], [], [], [], [], []

    def record(t, s):
        x, u = s[:n], np.maximum(s[n:], 0.0)
        ts.append(t)
        X.append(x.copy())
        U.append(u)
        LAM.append(np.zeros(0))
        Y.append(np.maximum(x, 0.0) + w(t))
        flow.append(throughput(network, x))

    record(t0, s)
    for k in range(steps):
        t = t0 + k * dt
        s = _rk4_joint(field, s, t, dt)
        # anti-windup clamp: the integrator may not push a metering rate
        # negative between steps
        s[n:] = np.maximum(s[n:], 0.0)
        _check_finite(s, t + dt)
        if (k + 1) % log_every == 0 or k == steps - 1:
            record(t0 + (k + 1) * dt, s)

    log = _traffic_log(network, (ts, X, U, LAM, Y), 0, "traffic-alinea")
    viol = violation_norm(np.asarray(Y), network.ceilings)
    return TrafficRun(log, flow, viol, cost[0], "alinea")


def run_mpc_traffic(network, problem, x0, t_span, dt, prediction_horizon,
                    replan_interval, control_dt, noise=None, log_every=1,
                    tol=1e-6, max_iter=None, on_infeasible="soften"):
    """Receding-horizon metering in closed loop with the CTM.

    Every `replan_interval` the controller measures y(t_k), clips it to
    nonnegative densities, solves the finite-horizon problem on the
    free-flow model, and applies the resulting plan with zero-order hold
    in `control_dt` slices until the next replan.
    """
    if problem.plant is None:
        raise DimensionMismatch("the metering problem must carry its plant "
                                "for prediction")
    n, m = network.n, network.m
    w = _noise_signal(noise, n)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (n,):
        raise DimensionMismatch("x0 needs %d densities" % n)
    t0, steps, log_every = _grid(t_span, dt, log_every)
    inner = int(round(replan_interval / dt))
    if inner < 1 or abs(inner * dt - replan_interval) > 1e-9:
        raise DimensionMismatch("dt = %g must divide the replan interval %g"
                                % (dt, replan_interval))

    kwargs = {"tol": tol, "on_infeasible": on_infeasible}
    if max_iter is not None:
        kwargs["max_iter"] = max_iter

    cost = [0.0]
    infeasible_count = [0]

    def replan(t, x):
        xhat = np.maximum(np.maximum(x, 0.0) + w(t), 0.0)
        tick = time.perf_counter()
        plan, info = mpc_policy(problem.plant, problem, xhat,
                                prediction_horizon, replan_interval,
                                control_dt, t=t, **kwargs)
        cost[0] += time.perf_counter() - tick
        infeasible_count[0] += bool(info["infeasible_horizon"])
        return plan

    slices_per_plan = int(round(replan_interval / control_dt))
    steps_per_slice = max(int(round(control_dt / dt)), 1)

    def held_input(plan, k_local):
        idx = min(k_local // steps_per_slice, slices_per_plan - 1)
        return np.maximum(plan[idx], 0.0)

    s = x0.copy()
    plan = replan(t0, s)
    ts, X, U, LAM, Y, flow = [], [], [], [], [], []

    def record(t, x, u):
        ts.append(t)
        X.append(x.copy())
        U.append(u.copy())
        LAM.append(np.zeros(0))
        Y.append(np.maximum(x, 0.0) + w(t))
        flow.append(throughput(network, x))

    # the u column holds the input applied over the step ending at each
    # sample (left limits), so plan changes appear one sample late
    record(t0, s, held_input(plan, 0))
    for k in range(steps):
        t = t0 + k * dt
        k_local = k % inner
        if k > 0 and k_local == 0:
            plan = replan(t, s)
        u = held_input(plan, k_local)
        s = _rk4_joint(lambda tt, xx: ctm_vector_field(network, xx, u), s, t, dt)
        _check_finite(s, t + dt)
        if (k + 1) % log_every == 0 or k == steps - 1:
            record(t0 + (k + 1) * dt, s, u)

    log = _traffic_log(network, (ts, X, U, LAM, Y), 0, "traffic-mpc")
    log.meta["infeasible_replans"] = infeasible_count[0]
    viol = violation_norm(np.asarray(Y), network.ceilings)
    return TrafficRun(log, flow, viol, cost[0], "mpc")
