"""Feedback controllers for steady-state output regulation.

Four control laws share this module:

* ``projected_pd_vector_field``: Lipschitz projected primal-dual flow for
  inequality-constrained problems (the main controller).
* ``discontinuous_projected_field``: one-sided-limit projected dynamics,
  kept only as a smoothness comparison and excluded from certificates.
* ``equality_pd_vector_field``: unprojected primal-dual gradient flow for
  equality-constrained problems.
* ``alinea_vector_field``: local integral ramp-metering rule.
* ``mpc_policy``: receding-horizon quadratic program on a linear
  prediction model.

The primal-dual fields consume a problem description together with the
measured plant output; they never read plant internals. ``ControllerGains``
carries the time-scale gain eps alongside the controller gains so one
object describes a closed-loop configuration.
"""

from dataclasses import dataclass

import numpy as np

from .costs import QuadraticCost
from .errors import (DimensionMismatch, InfeasibleHorizon, LimitNotSettled,
                     QPNoConvergence, UnknownLink)
from .problem import modified_gradients

DELTA_SEQ_DEFAULT = tuple(10.0 ** (-k) for k in range(2, 9))
LIMIT_SETTLE_TOL = 1e-4
QP_TOL = 1e-8
QP_MAX_ITER = 100000
QP_PENALTY = 1e4


@dataclass
class ControllerGains:
    """Gain bundle for the closed loop.

    Parameters
    ----------
    eps : float, optional
        Plant time-scale gain (the plant runs at speed 1/eps).
    eta : float, optional
        Projected-controller gain (inequality track).
    eta_u, eta_lam : float, optional
        Primal and dual gains of the equality track.

    Every provided value must be strictly positive. Which fields are
    required depends on the controller; the ``for_*`` accessors check.
    """

    eps: float = None
    eta: float = None
    eta_u: float = None
    eta_lam: float = None

    def __post_init__(self):
        for name in ("eps", "eta", "eta_u", "eta_lam"):
            value = getattr(self, name)
            if value is not None:
                value = float(value)
                if not np.isfinite(value) or value <= 0:
                    raise DimensionMismatch("gain %s must be strictly positive, "
                                            "got %s" % (name, value))
                setattr(self, name, value)

    def for_inequality(self):
        if self.eps is None or self.eta is None:
            raise DimensionMismatch("inequality track needs eps and eta")
        return self.eps, self.eta

    def for_equality(self):
        if self.eps is None or self.eta_u is None or self.eta_lam is None:
            raise DimensionMismatch("equality track needs eps, eta_u and eta_lam")
        return self.eps, self.eta_u, self.eta_lam


@dataclass
class ControllerState:
    """Controller state z = (u, lambda)."""

    u: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))

    def as_vector(self):
        return np.concatenate([self.u, self.lam])

    @classmethod
    def from_vector(cls, z, m):
        z = np.asarray(z, dtype=float)
        return cls(u=z[:m], lam=z[m:])


def _state_vector(problem, z):
    if isinstance(z, ControllerState):
        z = z.as_vector()
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.m + problem.r,):
        raise DimensionMismatch("controller state has shape %s, expected (%d,)"
                                % (z.shape, problem.m + problem.r))
    return z


def projected_pd_vector_field(problem, z, y, t, eta):
    """Projected primal-dual flow zdot for the inequality track.

    zdot_u = P_U(u - eta L_u) - u and zdot_lam = P_C(lam + eta L_lam) - lam,
    evaluated at the measured output y. Globally Lipschitz in (u, lam, y).
    """
    if problem.kind != "inequality":
        raise ValueError("projected_pd_vector_field needs an inequality problem")
    z = _state_vector(problem, z)
    u, lam = problem.split(z)
    L_u, L_lam = modified_gradients(problem, u, y, lam, t)
    du = problem.input_set.project(u - eta * L_u) - u
    dlam = problem.dual_set.project(lam + eta * L_lam) - lam
    return np.concatenate([du, dlam])


def _one_sided_quotient(input_set, v, f, delta):
    """(P(v + delta f) - v)/delta without cancellation for separable sets."""
    if input_set.kind == "full-space":
        return f.astype(float).copy()
    if input_set.kind in ("box", "nonneg-orthant"):
        lower, upper = input_set.lower, input_set.upper
        step = v + delta * f
        q = f.astype(float).copy()
        low_hit = step < lower
        high_hit = step > upper
        q[low_hit] = (lower[low_hit] - v[low_hit]) / delta
        q[high_hit] = (upper[high_hit] - v[high_hit]) / delta
        return q
    return (input_set.project(v + delta * f) - v) / delta


def discontinuous_projected_field(problem, z, y, t, eta, delta_seq=None):
    """One-sided-limit projected dynamics, the discontinuous comparison.

    Returns the numerical limit of (P_Omega(z + delta F) - z)/delta over a
    decreasing delta sequence, where F is the drift (-eta L_u, eta L_lam).
    Diagnostic only: raises LimitNotSettled when the last two quotients
    disagree by more than 1e-4, which happens within delta-resolution of a
    projection boundary.
    """
    if problem.kind != "inequality":
        raise ValueError("discontinuous_projected_field needs an inequality "
                         "problem")
    if delta_seq is None:
        delta_seq = DELTA_SEQ_DEFAULT
    z = _state_vector(problem, z)
    u, lam = problem.split(z)
    L_u, L_lam = modified_gradients(problem, u, y, lam, t)
    drift_u = -eta * L_u
    drift_lam = eta * L_lam
    quotients = []
    for delta in delta_seq:
        q_u = _one_sided_quotient(problem.input_set, u, drift_u, delta)
        q_lam = _one_sided_quotient(problem.dual_set, lam, drift_lam, delta)
        quotients.append(np.concatenate([q_u, q_lam]))
    gap = float(np.linalg.norm(quotients[-1] - quotients[-2], np.inf))
    if gap > LIMIT_SETTLE_TOL:
        raise LimitNotSettled("one-sided limit not settled: last quotients "
                              "differ by %.3e (state within delta of a "
                              "projection boundary)" % gap)
    return quotients[-1]


def equality_pd_vector_field(problem, z, y, t, eta_u, eta_lam):
    """Primal-dual gradient flow for the equality track, no projections.

    zdot_u = -eta_u L_u and zdot_lam = eta_lam (K y - e), with nu = 0.
    """
    if problem.kind != "equality":
        raise ValueError("equality_pd_vector_field needs an equality problem")
    z = _state_vector(problem, z)
    u, lam = problem.split(z)
    L_u, L_lam = modified_gradients(problem, u, y, lam, t)
    return np.concatenate([-eta_u * L_u, eta_lam * L_lam])


def alinea_vector_field(downstream, gains, setpoints, densities):
    """Local integral ramp metering: udot_i = sum_j K_j (xhat_j - x_j).

    Parameters
    ----------
    downstream : sequence of sequences
        For each controlled ramp, the ids of its watched downstream links.
    gains : mapping
        Link id -> integral gain K_j.
    setpoints : mapping
        Link id -> density setpoint xhat_j.
    densities : mapping
        Link id -> measured density x_j.

    Returns
    -------
    ndarray
        One integrator rate per ramp, in `downstream` order. The caller
        owns the integrator state and its clamping to u >= 0.
    """
    udot = np.zeros(len(downstream))
    for i, watched in enumerate(downstream):
        for link in watched:
            for table, label in ((gains, "gain"), (setpoints, "setpoint"),
                                 (densities, "density")):
                if link not in table:
                    raise UnknownLink("no %s for link %r" % (label, link))
            udot[i] += gains[link] * (setpoints[link] - densities[link])
    return udot


def _stack_project_nonneg_like(input_set, U, horizon, m):
    out = np.empty_like(U)
    for k in range(horizon):
        out[k * m:(k + 1) * m] = input_set.project(U[k * m:(k + 1) * m])
    return out


def _prediction_matrices(A_d, B_d, horizon):
    n, m = B_d.shape
    S_x = np.zeros((horizon * n, n))
    S_u = np.zeros((horizon * n, horizon * m))
    power = np.eye(n)
    powers = [power]
    for k in range(horizon):
        power = A_d @ power
        powers.append(power)
        S_x[k * n:(k + 1) * n] = power
    for k in range(horizon):
        for j in range(k + 1):
            S_u[k * n:(k + 1) * n, j * m:(j + 1) * m] = powers[k - j] @ B_d
    return S_x, S_u


def _extragradient_qp(P_U, q, G_c, h, input_set, horizon, m, tol, max_iter):
    """Hard-constrained QP via extragradient on the primal-dual saddle."""
    dim_u = P_U.shape[0]
    dim_mu = G_c.shape[0]
    step = 1.0 / (np.linalg.norm(P_U, 2) + np.linalg.norm(G_c, 2))

    def saddle(Uv, mu):
        return (P_U @ Uv + q + G_c.T @ mu, -(G_c @ Uv - h))

    def proj(Uv, mu):
        return (_stack_project_nonneg_like(input_set, Uv, horizon, m),
                np.maximum(mu, 0.0))

    U = np.zeros(dim_u)
    mu = np.zeros(dim_mu)
    target = tol * min(1.0, step)
    for it in range(max_iter):
        F_u, F_mu = saddle(U, mu)
        U_half, mu_half = proj(U - step * F_u, mu - step * F_mu)
        res = np.sqrt(np.linalg.norm(U - U_half) ** 2 +
                      np.linalg.norm(mu - mu_half) ** 2)
        if res <= target:
            return U, mu, it
        Fh_u, Fh_mu = saddle(U_half, mu_half)
        U, mu = proj(U - step * Fh_u, mu - step * Fh_mu)
    raise QPNoConvergence("extragradient residual %.3e above %.3e after %d "
                          "iterations" % (res, target, max_iter))


def _fista_penalized(P_U, q, G_c, h, penalty, input_set, horizon, m, tol,
                     max_iter):
    """Penalized QP (softened ceilings) via accelerated projected gradient."""
    L = np.linalg.norm(P_U, 2) + penalty * np.linalg.norm(G_c, 2) ** 2
    step = 1.0 / L

    def grad(Uv):
        viol = np.maximum(G_c @ Uv - h, 0.0)
        return P_U @ Uv + q + penalty * (G_c.T @ viol)

    scale = max(1.0, float(np.linalg.norm(q)))
    U = np.zeros(P_U.shape[0])
    Y = U.copy()
    t_acc = 1.0
    for it in range(max_iter):
        g = grad(Y)
        U_next = _stack_project_nonneg_like(input_set, Y - step * g, horizon, m)
        res = float(np.linalg.norm(U - _stack_project_nonneg_like(
            input_set, U - step * grad(U), horizon, m))) / step
        if res <= tol * scale:
            return U, it
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc ** 2))
        momentum = (t_acc - 1.0) / t_next
        Y_next = U_next + momentum * (U_next - U)
        # adaptive restart keeps the momentum from overshooting
        if (Y - U_next) @ (U_next - U) > 0:
            Y_next = U_next
            t_next = 1.0
        U, Y, t_acc = U_next, Y_next, t_next
    raise QPNoConvergence("penalized projected gradient residual %.3e above "
                          "%.3e after %d iterations"
                          % (res, tol * scale, max_iter))


def mpc_policy(plant, problem, xhat, T_p, T_s, dt, t=0.0, tol=QP_TOL,
               max_iter=QP_MAX_ITER, penalty=QP_PENALTY,
               on_infeasible="soften"):
    """Receding-horizon quadratic program on the linear prediction model.

    Discretizes xdot = A x + B u with forward Euler at step dt, minimizes
    the accumulated stage cost phi(u_k) + psi(y_{k+1}) over the horizon T_p
    subject to u_k in the input set and K y_k <= e, and returns the first
    T_s/dt inputs together with a solve report.

    Parameters
    ----------
    plant : LtiPlant
        Prediction model; disturbances are not predicted.
    problem : TimeVaryingProblem
        Supplies the quadratic stage cost, input set and output ceilings.
        References and ceilings are frozen at the replan time t.
    xhat : ndarray
        State estimate at the replan instant (measured output convention).
    T_p, T_s, dt : float
        Prediction horizon, applied horizon, discretization step. dt must
        divide both and T_s <= T_p.
    on_infeasible : {"soften", "raise"}
        An infeasible horizon (U = 0 already violates a ceiling) either
        switches to the penalty formulation or raises InfeasibleHorizon.

    Returns
    -------
    inputs : (T_s/dt, m) ndarray
        Input trajectory to apply, one row per step.
    info : dict
        status, iterations, infeasible_horizon flag, residual target.
    """
    if not isinstance(problem.cost, QuadraticCost):
        raise TypeError("mpc_policy needs a QuadraticCost stage cost")
    if T_s > T_p:
        raise DimensionMismatch("T_s = %g exceeds T_p = %g" % (T_s, T_p))
    n_p = T_p / dt
    n_s = T_s / dt
    if abs(n_p - round(n_p)) > 1e-9 or abs(n_s - round(n_s)) > 1e-9:
        raise DimensionMismatch("dt = %g must divide T_p = %g and T_s = %g"
                                % (dt, T_p, T_s))
    n_p, n_s = int(round(n_p)), int(round(n_s))
    if n_s < 1:
        raise DimensionMismatch("T_s/dt must be at least 1")

    xhat = np.asarray(xhat, dtype=float)
    if xhat.shape != (plant.n,):
        raise DimensionMismatch("xhat has shape %s, expected (%d,)"
                                % (xhat.shape, plant.n))
    m = problem.m
    A_d = np.eye(plant.n) + dt * plant.A
    B_d = dt * plant.B
    S_x, S_u = _prediction_matrices(A_d, B_d, n_p)

    cost = problem.cost
    I_N = np.eye(n_p)
    Qu_bar = np.kron(I_N, cost.Q_u)
    Qy_bar = np.kron(I_N, cost.Q_y)
    r_u = np.tile(cost.r_u(t), n_p)
    r_y = np.tile(cost.r_y(t), n_p)
    c_bar = np.tile(cost.c(t), n_p)

    KC = problem.constraint.K_of(t) @ plant.C
    e_t = problem.constraint.e_of(t)
    KC_bar = np.kron(I_N, KC)
    h = np.tile(e_t, n_p) - KC_bar @ (S_x @ xhat)
    G_c = KC_bar @ S_u

    CS_x = np.kron(I_N, plant.C) @ S_x
    CS_u = np.kron(I_N, plant.C) @ S_u
    P_U = Qu_bar + CS_u.T @ Qy_bar @ CS_u
    P_U = 0.5 * (P_U + P_U.T)
    q = -Qu_bar @ r_u + CS_u.T @ (Qy_bar @ (CS_x @ xhat - r_y) + c_bar)

    info = {"infeasible_horizon": False, "status": "", "iterations": 0,
            "horizon_steps": n_p, "applied_steps": n_s}
    feasible = bool(np.min(h) >= -1e-12)
    if not feasible:
        if on_infeasible == "raise":
            raise InfeasibleHorizon("ceilings already violated along the "
                                    "uncontrolled rollout from xhat (margin "
                                    "%.3e)" % float(np.min(h)))
        info["infeasible_horizon"] = True
        U, iters = _fista_penalized(P_U, q, G_c, h, penalty,
                                    problem.input_set, n_p, m, tol, max_iter)
        info["status"] = "softened"
    else:
        U, _, iters = _extragradient_qp(P_U, q, G_c, h, problem.input_set,
                                        n_p, m, tol, max_iter)
        info["status"] = "optimal"
    info["iterations"] = iters
    inputs = U[:n_s * m].reshape(n_s, m)
    return inputs, info
