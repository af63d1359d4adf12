"""Closed-loop integration and trajectory analysis.

`integrate` runs the interconnection of a fast LTI plant (time scale eps)
with one of the dynamic controllers using classical fixed-step RK4, logs
uniformly sampled records, and scores them against the saddle-point
oracle and, when a certificate report is supplied, against its tracking
envelope. Static equality-track runs are advanced by the exact affine
one-step map of RK4 instead of the step loop; the certified time-scale
bounds can demand millions of steps there, and the affine map gives the
same trajectory at matrix-polynomial cost.

`reduced_controller_run` integrates the reduced (quasi-steady-state)
controller flow alone, either the Lipschitz projected field or the
discontinuous one-sided-limit comparison; the latter uses a catching-up
projected Euler scheme, since the limit operation itself is ill-posed
within a step of the boundary.

`tracking_report` and `lyapunov_diagnostics` post-process a log.
"""

from dataclasses import dataclass, field

import numpy as np

from .controllers import (equality_pd_vector_field,
                          projected_pd_vector_field)
from .costs import QuadraticCost
from .errors import (DimensionMismatch, NonFiniteState, StepTooLarge)
from .problem import saddle_path

LOG_EVERY_DEFAULT = 10
STEP_MARGIN = 1e-12
SPAN_TOL = 1e-6


def rk4_step(f, t, s, h):
    """One classical Runge-Kutta step of size h for sdot = f(t, s)."""
    k1 = f(t, s)
    k2 = f(t + 0.5 * h, s + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, s + 0.5 * h * k2)
    k4 = f(t + h, s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(f, s0, t_span, dt):
    """Fixed-step RK4 over t_span = (t0, t1); returns (times, states)."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_steps = int(round((t1 - t0) / dt)) if t1 > t0 else 0
    if n_steps and abs(n_steps * dt - (t1 - t0)) > SPAN_TOL * dt:
        n_steps = int(np.ceil((t1 - t0) / dt - 1e-9))
    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, np.size(s0)))
    s = np.asarray(s0, dtype=float).copy()
    states[0] = s
    for k in range(n_steps):
        s = rk4_step(f, times[k], s, dt)
        states[k + 1] = s
    return times, states


@dataclass
class TrajectoryLog:
    """Uniformly sampled closed-loop records plus oracle-based scores."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    y: np.ndarray
    w: np.ndarray
    err: np.ndarray
    env: np.ndarray
    V: np.ndarray
    W: np.ndarray
    U: np.ndarray
    zstar: np.ndarray
    kind: str
    sup_zdot: float
    sup_wdot: float
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        """Write the fixed-format CSV: comment block, header, 17-digit rows."""
        n = self.x.shape[1]
        m = self.u.shape[1]
        r = self.lam.shape[1]
        p = self.y.shape[1]
        header = (["t"] + ["x_%d" % (i + 1) for i in range(n)] +
                  ["u_%d" % (i + 1) for i in range(m)] +
                  ["lambda_%d" % (i + 1) for i in range(r)] +
                  ["y_%d" % (i + 1) for i in range(p)] +
                  ["err", "envelope", "V", "W", "U"])
        comments = [
            "# closed-loop trajectory log (%s track)" % self.kind,
            "# t: simulation time",
            "# x_i: plant state",
            "# u_i: input (controller primal state)",
            "# lambda_i: multiplier (controller dual state)",
            "# y_i: measured output",
            "# err: ||xi_tilde|| joint distance of (x, u, lambda) to the",
            "#      oracle equilibrium/saddle pair at that time",
            "# envelope: certified tracking bound at that time (nan when the",
            "#      run carried no certificate report)",
            "# V: controller Lyapunov value (nan when it needs a report that",
            "#      was not supplied)",
            "# W: plant Lyapunov value x_tilde' P_x x_tilde (nan without a report)",
            "# U: combined Lyapunov value (1-theta) V + theta W (nan without",
            "#      a report)",
            "# disturbance columns are omitted; w_t is reconstructable from",
            "#      the scenario config",
        ]
        rows = np.column_stack([self.t, self.x, self.u, self.lam, self.y,
                                self.err, self.env, self.V, self.W, self.U])
        with open(path, "w") as fh:
            for line in comments:
                fh.write(line + "\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def _controller_field(controller, problem, gains):
    if controller == "projected_pd":
        _, eta = gains.for_inequality()

        def fz(z, y, t):
            return projected_pd_vector_field(problem, z, y, t, eta)
    elif controller == "equality_pd":
        _, eta_u, eta_lam = gains.for_equality()

        def fz(z, y, t):
            return equality_pd_vector_field(problem, z, y, t, eta_u, eta_lam)
    else:
        raise ValueError("unknown controller %r: expected projected_pd or "
                         "equality_pd" % (controller,))
    return fz


def _wants_fast_path(problem, controller):
    return (controller == "equality_pd" and problem.kind == "equality" and
            isinstance(problem.cost, QuadraticCost) and problem.is_static)


def _affine_closed_loop(plant, problem, gains, eps, t0):
    """Stacked matrices (M, v): sdot = M s + v for the static equality loop."""
    _, eta_u, eta_lam = gains.for_equality()
    n, m, r = plant.n, problem.m, problem.r
    cost = problem.cost
    G = problem.ssmap.G
    K = problem.constraint.K_of(t0)
    e = problem.constraint.e_of(t0)
    w0 = problem.disturbance(t0)

    M = np.zeros((n + m + r, n + m + r))
    v = np.zeros(n + m + r)
    sx = slice(0, n)
    su = slice(n, n + m)
    sl = slice(n + m, n + m + r)

    M[sx, sx] = plant.A / eps
    M[sx, su] = plant.B / eps
    v[sx] = (plant.E @ w0) / eps

    GtQy = G.T @ cost.Q_y
    M[su, sx] = -eta_u * (GtQy @ plant.C)
    M[su, su] = -eta_u * cost.Q_u
    M[su, sl] = -eta_u * (G.T @ K.T)
    v[su] = -eta_u * (-cost.Q_u @ cost.r_u(t0) +
                      GtQy @ (plant.D @ w0 - cost.r_y(t0)) + G.T @ cost.c(t0))

    M[sl, sx] = eta_lam * (K @ plant.C)
    v[sl] = eta_lam * (K @ plant.D @ w0 - e)
    return M, v


def _rk4_affine_step_maps(M, v, h):
    """Exact one-step RK4 maps (Phi, d): s+ = Phi s + d for sdot = M s + v."""
    dim = M.shape[0]
    Phi = np.eye(dim)
    term = np.eye(dim)
    for i in range(1, 5):
        term = term @ (h * M) / i
        Phi = Phi + term
    Theta = h * np.eye(dim)
    term = h * np.eye(dim)
    for i in range(1, 4):
        term = term @ (h * M) / (i + 1)
        Theta = Theta + term
    return Phi, Theta @ v


def _group_maps(Phi, d, k):
    """(Phi^k, sum_{i<k} Phi^i d) by binary doubling."""
    dim = Phi.shape[0]
    P_acc = np.eye(dim)
    d_acc = np.zeros(dim)
    P_pow = Phi
    d_pow = d
    bits = k
    while bits:
        if bits & 1:
            d_acc = d_pow + P_pow @ d_acc
            P_acc = P_pow @ P_acc
        bits >>= 1
        if bits:
            d_pow = d_pow + P_pow @ d_pow
            P_pow = P_pow @ P_pow
    return P_acc, d_acc


def integrate(plant, problem, controller, gains, x0, z0, t_span, dt,
              log_every=LOG_EVERY_DEFAULT, report=None, oracle_tol=1e-10,
              use_fast_path=True):
    """Integrate the plant-controller interconnection and score the log.

    Parameters
    ----------
    plant : LtiPlant
    problem : TimeVaryingProblem
    controller : {"projected_pd", "equality_pd"}
    gains : ControllerGains
        Must carry eps plus the gains of the chosen track.
    x0, z0 : ndarray
        Initial plant state (n,) and controller state (m + r,).
    t_span : (t0, t1) or float
        Integration window; a bare float means (0, t1).
    dt : float
        RK4 step; dt <= eps/10 is required to resolve the plant time scale.
    log_every : int
        Log every log_every-th step; the step count is rounded up to a
        whole number of log periods so the grid stays uniform.
    report : certificate report, optional
        Enables the envelope column and the Lyapunov columns.
    use_fast_path : bool
        Permit the exact affine advance on static equality runs.

    Returns
    -------
    TrajectoryLog

    Raises
    ------
    StepTooLarge
        If dt > eps/10.
    NonFiniteState
        If a logged state stops being finite.
    """
    if np.isscalar(t_span):
        t_span = (0.0, float(t_span))
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not np.isfinite(t1 - t0) or t1 < t0:
        raise DimensionMismatch("t_span must be a finite forward window")
    eps = gains.eps
    if eps is None:
        raise DimensionMismatch("gains.eps is required for closed-loop runs")
    if dt > eps / 10.0 + STEP_MARGIN:
        raise StepTooLarge("dt = %g exceeds eps/10 = %g: the plant time "
                           "scale is unresolved" % (dt, eps / 10.0))
    log_every = int(log_every)
    if log_every < 1:
        raise DimensionMismatch("log_every must be at least 1")

    x0 = np.asarray(x0, dtype=float).reshape(plant.n)
    z0 = np.asarray(z0, dtype=float).reshape(problem.m + problem.r)
    n_steps = int(round((t1 - t0) / dt)) if t1 > t0 else 0
    if n_steps and abs(n_steps * dt - (t1 - t0)) > SPAN_TOL * dt:
        n_steps = int(np.ceil((t1 - t0) / dt - 1e-9))
    n_groups = int(np.ceil(n_steps / log_every)) if n_steps else 0
    n_steps = n_groups * log_every

    fz = _controller_field(controller, problem, gains)
    n, m = plant.n, problem.m

    times = t0 + dt * log_every * np.arange(n_groups + 1)
    states = np.empty((n_groups + 1, n + problem.m + problem.r))
    s = np.concatenate([x0, z0])
    states[0] = s

    fast = use_fast_path and _wants_fast_path(problem, controller)
    if fast and n_steps:
        M, v = _affine_closed_loop(plant, problem, gains, eps, t0)
        Phi, d = _rk4_affine_step_maps(M, v, dt)
        Phi_g, d_g = _group_maps(Phi, d, log_every)
        for g in range(n_groups):
            s = Phi_g @ s + d_g
            states[g + 1] = s
            if not np.all(np.isfinite(s)):
                raise NonFiniteState("state diverged by t = %g"
                                     % times[g + 1])
    elif n_steps:
        def field(t, sv):
            x = sv[:n]
            z = sv[n:]
            w = problem.disturbance(t)
            y = plant.output(x, w)
            xdot = (plant.A @ x + plant.B @ z[:m] + plant.E @ w) / eps
            return np.concatenate([xdot, fz(z, y, t)])

        for g in range(n_groups):
            tg = times[g]
            for k in range(log_every):
                s = rk4_step(field, tg + k * dt, s, dt)
            states[g + 1] = s
            if not np.all(np.isfinite(s)):
                raise NonFiniteState("state diverged by t = %g"
                                     % times[g + 1])

    return _score_log(plant, problem, times, states, report, oracle_tol,
                      meta={"dt": dt, "log_every": log_every,
                            "controller": controller, "eps": eps,
                            "fast_path": bool(fast and n_steps)})


def _score_log(plant, problem, times, states, report, oracle_tol, meta):
    n, m, r = plant.n, problem.m, problem.r
    x = states[:, :n]
    u = states[:, n:n + m]
    lam = states[:, n + m:]
    w = np.array([problem.disturbance(t) for t in times])
    y = np.array([plant.output(x[k], w[k]) for k in range(len(times))])

    zstar = saddle_path(problem, times, tol=oracle_tol)
    z = states[:, n:]
    z_err = z - zstar
    Ainv_B = np.linalg.solve(plant.A, plant.B)
    Ainv_E = np.linalg.solve(plant.A, plant.E)
    x_tilde = x + u @ Ainv_B.T + w @ Ainv_E.T
    err = np.sqrt(np.einsum("ij,ij->i", x_tilde, x_tilde) +
                  np.einsum("ij,ij->i", z_err, z_err))

    sup_wdot = problem.disturbance.derivative_bound(times[0], times[-1]) \
        if len(times) > 1 else 0.0
    if problem.is_static or len(times) < 2:
        sup_zdot = 0.0
    else:
        dz = np.diff(zstar, axis=0) / np.diff(times)[:, None]
        sup_zdot = float(np.max(np.linalg.norm(dz, axis=1)))

    nan = np.full(len(times), np.nan)
    env = nan.copy()
    V = nan.copy()
    W = nan.copy()
    U = nan.copy()
    if problem.kind == "inequality":
        V = 0.5 * np.einsum("ij,ij->i", z_err, z_err)
    if report is not None:
        from .certificates import envelope as _envelope
        env = _envelope(report, err[0], times[0], times, sup_zdot, sup_wdot)
        P_x = report.P_x
        W = np.einsum("ij,jk,ik->i", x_tilde, P_x, x_tilde)
        if problem.kind == "equality":
            V = np.einsum("ij,jk,ik->i", z_err, report.P_z, z_err)
        U = (1.0 - report.theta) * V + report.theta * W

    return TrajectoryLog(t=times, x=x, u=u, lam=lam, y=y, w=w, err=err,
                         env=env, V=V, W=W, U=U, zstar=zstar,
                         kind=problem.kind, sup_zdot=sup_zdot,
                         sup_wdot=sup_wdot, meta=meta)


def reduced_controller_run(problem, z0, t_span, dt, eta, field="projected"):
    """Integrate the reduced controller flow with y held at G u + H w_t.

    field = "projected" uses RK4 on the Lipschitz projected field;
    field = "discontinuous" uses catching-up projected Euler
    z+ = P_Omega(z + dt (-eta L_u, eta L_lam)), the standard discretization
    of the one-sided-limit dynamics (the limit operator itself cannot be
    evaluated within a step of the boundary).

    Returns (times, Z, rates) with rates the forward differences /dt.
    """
    t0, t1 = (0.0, float(t_span)) if np.isscalar(t_span) else \
        (float(t_span[0]), float(t_span[1]))
    n_steps = int(round((t1 - t0) / dt))
    times = t0 + dt * np.arange(n_steps + 1)
    m = problem.m
    Z = np.empty((n_steps + 1, m + problem.r))
    z = np.asarray(z0, dtype=float).copy()
    Z[0] = z
    if field == "projected":
        def f(t, zz):
            y = problem.output_of(zz[:m], t)
            return projected_pd_vector_field(problem, zz, y, t, eta)

        for k in range(n_steps):
            z = rk4_step(f, times[k], z, dt)
            Z[k + 1] = z
    elif field == "discontinuous":
        from .problem import modified_gradients
        for k in range(n_steps):
            t = times[k]
            u, lam = problem.split(z)
            y = problem.output_of(u, t)
            L_u, L_lam = modified_gradients(problem, u, y, lam, t)
            u_next = problem.input_set.project(u - dt * eta * L_u)
            lam_next = problem.dual_set.project(lam + dt * eta * L_lam)
            z = np.concatenate([u_next, lam_next])
            Z[k + 1] = z
    else:
        raise ValueError("field must be projected or discontinuous, got %r"
                         % (field,))
    rates = np.diff(Z, axis=0) / dt
    return times, Z, rates


def tracking_report(log, report):
    """Envelope violation, asymptotic error and fitted decay of a log.

    Returns a dict with max_violation = max_t (err - envelope), the mean
    error over the last tenth of the window, the least-squares slope of
    log(err) over the initial transient, and a degenerate flag for
    windows too short to fit.
    """
    err = log.err
    env = log.env
    max_violation = float(np.max(err - env)) if np.all(np.isfinite(env)) \
        else float("nan")
    tail = max(1, int(np.ceil(0.1 * len(err))))
    asymptotic = float(np.mean(err[-tail:]))

    floor = max(asymptotic * 2.0, err[0] * 1e-6, 1e-12)
    fit_mask = err > floor
    cut = int(np.argmin(fit_mask)) if not fit_mask.all() else len(err)
    degenerate = cut < 3 or len(err) < 3
    if degenerate:
        fitted_rate = float("nan")
    else:
        tt = log.t[:cut]
        yy = np.log(err[:cut])
        slope = np.polyfit(tt, yy, 1)[0]
        fitted_rate = float(slope)
    return {"max_violation": max_violation, "asymptotic_error": asymptotic,
            "fitted_rate": fitted_rate, "degenerate": degenerate,
            "initial_error": float(err[0]), "sup_zdot": log.sup_zdot,
            "sup_wdot": log.sup_wdot}


def lyapunov_diagnostics(log, problem, report):
    """Flag combined-Lyapunov increases outside the residual ball.

    A consecutive pair (k, k+1) is flagged when U increases beyond a
    relative tolerance while err[k] exceeds the envelope's asymptotic
    offset plus a numerical floor. Certified static runs must flag 0.
    """
    U = log.U
    err = log.err
    offset = report.gamma_z * log.sup_zdot + report.gamma_w * log.sup_wdot
    radius = offset + max(1e-7, 1e-6 * err[0])
    scale = max(1.0, float(U[0])) if np.isfinite(U[0]) else 1.0
    flagged = []
    for k in range(len(U) - 1):
        if not (np.isfinite(U[k]) and np.isfinite(U[k + 1])):
            continue
        if U[k + 1] > U[k] + 1e-12 * scale and err[k] > radius:
            flagged.append(k)
    return {"V": log.V, "W": log.W, "U": U, "flagged": flagged,
            "count": len(flagged), "radius": radius}
