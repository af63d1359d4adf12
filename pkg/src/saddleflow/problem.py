"""Time-varying design problem and its saddle-point oracle.

The problem at each time t is

    min_{u in U}  phi_t(u) + psi_t(y)    s.t.  y = G u + H w_t,
                                               K_t y <= e_t   (inequality kind)
                                               K_t y  = e_t   (equality kind),

handled through the regularized Lagrangian

    L_{nu,t}(u, lam) = phi_t(u) + psi_t(G u + H w_t)
                       + lam' (K_t (G u + H w_t) - e_t) - nu/2 ||lam||^2.

The saddle operator stacked over z = (u, lam) is

    F_t(z) = [ grad phi_t(u) + G' grad psi_t(G u + H w_t) + G' K_t' lam ;
               -(K_t (G u + H w_t) - e_t - nu lam) ],

which is min{mu_u, nu}-strongly monotone and Lipschitz with constant
sqrt(2) (K_bar + max{ell_u + ||G||^2 ell_y, nu}).

`solve_saddle_point` computes the unique point where the projected flow
is stationary, z = P_Omega(z - eta F_t(z)).  A plain forward-Euler pass
on the projected flow converges but at rate 1 - (mu/ell)^2 per step,
which for small nu cannot reach tolerance 1e-10 in useful time, so the
solver drives the same fixed-point residual with damped semismooth
Newton steps and falls back to extragradient passes whenever a Newton
step fails to reduce the residual.  The returned point satisfies the
fixed-point equation for every admissible eta.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (ConstantViolated, DimensionMismatch, NoConvergence)
from .sets import InputSet
from .signals import as_signal

#: Default fixed-point residual tolerance for the oracle.
ORACLE_TOL = 1e-10

#: Default grid step for finite-difference drift bounds.
DRIFT_FD_STEP = 1e-3


class OutputConstraint:
    """Output constraint K_t y (<= | =) e_t with declared uniform bounds.

    Parameters
    ----------
    K : (r, p) array_like or callable t -> (r, p) array
        Constraint matrix; a callable must come with a declared K_bar.
    e : signal-like
        Right-hand side, dimension r.
    kind : {"inequality", "equality"}
    K_bar, e_bar : float, optional
        Uniform bounds sup_t ||K_t|| and sup_t ||e_t||; computed exactly
        for constant data, required otherwise.
    k_lo, k_hi : float, optional
        Declared eigenvalue bounds k_lo I <= K G G' K' <= k_hi I for the
        equality track; computed from constant K by `certify_equality`
        when omitted.
    """

    def __init__(self, K, e, kind="inequality", K_bar=None, e_bar=None,
                 k_lo=None, k_hi=None):
        if kind not in ("inequality", "equality"):
            raise DimensionMismatch("constraint kind must be inequality|equality, got %r"
                                    % kind)
        self.kind = kind
        if callable(K):
            self._K_fn = K
            K0 = np.atleast_2d(np.asarray(K(0.0), dtype=float))
            self.is_constant_K = False
            if K_bar is None:
                raise DimensionMismatch("time-varying K requires a declared K_bar")
        else:
            K0 = np.atleast_2d(np.asarray(K, dtype=float))
            self._K_fn = None
            self.is_constant_K = True
        self.r, self.p = K0.shape
        self._K0 = K0
        self.e = as_signal(e, self.r)
        self.K_bar = float(np.linalg.norm(K0, 2)) if (K_bar is None) else float(K_bar)
        if e_bar is None:
            if not self.e.is_constant:
                raise DimensionMismatch("time-varying e requires a declared e_bar")
            e_bar = float(np.linalg.norm(self.e(0.0)))
        self.e_bar = float(e_bar)
        self.k_lo = k_lo
        self.k_hi = k_hi

    @property
    def is_constant(self):
        return self.is_constant_K and self.e.is_constant

    def K_of(self, t):
        if self._K_fn is None:
            return self._K0
        return np.atleast_2d(np.asarray(self._K_fn(t), dtype=float))

    def e_of(self, t):
        return self.e(t)

    def spot_check(self, times, slack=1e-9):
        """Verify declared bounds at sampled times; raises ConstantViolated."""
        for t in np.atleast_1d(times):
            nk = float(np.linalg.norm(self.K_of(t), 2))
            if nk > self.K_bar + slack:
                raise ConstantViolated("||K_t|| = %.6g at t = %g exceeds declared "
                                       "K_bar = %.6g" % (nk, t, self.K_bar))
            ne = float(np.linalg.norm(self.e_of(t)))
            if ne > self.e_bar + slack:
                raise ConstantViolated("||e_t|| = %.6g at t = %g exceeds declared "
                                       "e_bar = %.6g" % (ne, t, self.e_bar))


class TimeVaryingProblem:
    """Problem data bundle: cost, constraint, input set, map, disturbance.

    Parameters
    ----------
    cost : QuadraticCost or CallbackCost
    constraint : OutputConstraint
    input_set : InputSet over R^m
    ssmap : SteadyStateMap
        Steady-state gains (G, H) of the plant.
    disturbance : signal-like
        w_t, dimension q = H.shape[1].
    nu : float
        Dual regularization weight; must be > 0 for the inequality kind
        and 0 for the equality kind (the equality track is unregularized).
    plant : LtiPlant, optional
        When present, oracles also return the matching plant equilibrium.
    """

    def __init__(self, cost, constraint, input_set, ssmap, disturbance, nu,
                 plant=None):
        self.cost = cost
        self.constraint = constraint
        self.input_set = input_set
        self.ssmap = ssmap
        self.nu = float(nu)
        self.plant = plant

        self.m = ssmap.G.shape[1]
        self.p = ssmap.G.shape[0]
        self.r = constraint.r
        self.q = ssmap.H.shape[1]
        self.disturbance = as_signal(disturbance, self.q)

        if cost.m != self.m:
            raise DimensionMismatch("cost has m = %d, map has m = %d" % (cost.m, self.m))
        if cost.p != self.p:
            raise DimensionMismatch("cost has p = %d, map has p = %d" % (cost.p, self.p))
        if constraint.p != self.p:
            raise DimensionMismatch("constraint has p = %d, map has p = %d"
                                    % (constraint.p, self.p))
        if input_set.dim != self.m:
            raise DimensionMismatch("input set has dim %d, expected m = %d"
                                    % (input_set.dim, self.m))
        if constraint.kind == "inequality":
            if self.nu <= 0:
                raise DimensionMismatch("inequality kind requires nu > 0, got %g" % self.nu)
        else:
            if self.nu != 0.0:
                raise DimensionMismatch("equality kind is unregularized; set nu = 0, "
                                        "got %g" % self.nu)
        # Multiplier set: nonnegative orthant for inequalities, free for equalities.
        self.dual_set = InputSet.nonneg(self.r) if constraint.kind == "inequality" \
            else InputSet.full(self.r)

    @property
    def kind(self):
        return self.constraint.kind

    @property
    def is_static(self):
        return (self.cost.is_static and self.constraint.is_constant
                and self.disturbance.is_constant)

    def output_of(self, u, t):
        """Steady-state output y = G u + H w_t."""
        return self.ssmap.G @ np.asarray(u, dtype=float) + self.ssmap.H @ self.disturbance(t)

    def strong_monotonicity(self, nu=None):
        """Modulus min{mu_u, nu} of the saddle operator (0 when nu = 0)."""
        nu = self.nu if nu is None else nu
        return min(self.cost.mu_u, nu)

    def lipschitz(self, nu=None):
        """Constant sqrt(2) (K_bar + max{ell_u + ||G||^2 ell_y, nu})."""
        nu = self.nu if nu is None else nu
        curv = self.cost.ell_u + self.ssmap.norm_G ** 2 * self.cost.ell_y
        return np.sqrt(2.0) * (self.constraint.K_bar + max(curv, nu))

    def split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.m + self.r,):
            raise DimensionMismatch("z has shape %s, expected (%d,)" % (z.shape,
                                                                        self.m + self.r))
        return z[:self.m], z[self.m:]


def modified_gradients(problem, u, y, lam, t):
    """Measurement-driven gradients of the regularized Lagrangian.

    Returns (L_u, L_lam) with

        L_u   = grad phi_t(u) + G' grad psi_t(y) + G' K_t' lam,
        L_lam = K_t y - e_t - nu lam,

    where y is the measured output (not recomputed from u), and nu = 0
    for the equality kind.
    """
    G = problem.ssmap.G
    K = problem.constraint.K_of(t)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    L_u = problem.cost.grad_phi(u, t) + G.T @ problem.cost.grad_psi(y, t) \
        + G.T @ (K.T @ lam)
    L_lam = K @ y - problem.constraint.e_of(t) - problem.nu * lam
    return L_u, L_lam


def saddle_map(problem, z, t, nu=None):
    """Stacked saddle operator F_t(z) at y = G u + H w_t.

    The dual block carries the opposite sign of L_lam, so that F is
    monotone: F = (L_u, -L_lam).
    """
    nu_eff = problem.nu if nu is None else nu
    u, lam = problem.split(z)
    y = problem.output_of(u, t)
    G = problem.ssmap.G
    K = problem.constraint.K_of(t)
    top = problem.cost.grad_phi(u, t) + G.T @ problem.cost.grad_psi(y, t) \
        + G.T @ (K.T @ lam)
    bottom = -(K @ y - problem.constraint.e_of(t) - nu_eff * lam)
    return np.concatenate([top, bottom])


def _saddle_jacobian(problem, z, t, nu_eff):
    """Jacobian of the stacked saddle operator (analytic for quadratics)."""
    u, _ = problem.split(z)
    y = problem.output_of(u, t)
    G = problem.ssmap.G
    K = problem.constraint.K_of(t)
    H_u = problem.cost.hess_phi(u, t)
    H_y = problem.cost.hess_psi(y, t)
    r = problem.r
    top = np.hstack([H_u + G.T @ H_y @ G, G.T @ K.T])
    bottom = np.hstack([-K @ G, nu_eff * np.eye(r)])
    return np.vstack([top, bottom])


@dataclass
class SaddlePoint:
    """Saddle point of the (regularized) Lagrangian at a frozen time."""

    u: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    kkt_residual: float
    iterations: int = 0


def _stack_project(problem, z):
    u, lam = problem.split(z)
    return np.concatenate([problem.input_set.project(u),
                           problem.dual_set.project(lam)])


def _stack_projection_jacobian(problem, z):
    u, lam = problem.split(z)
    m, r = problem.m, problem.r
    D = np.zeros((m + r, m + r))
    D[:m, :m] = problem.input_set.projection_jacobian(u)
    D[m:, m:] = problem.dual_set.projection_jacobian(lam)
    return D


def _solve_inequality_vi(problem, t, nu_eff, tol, max_iter, z0):
    """Semismooth Newton on the projected fixed-point residual.

    The residual R(z) = z - P_Omega(z - eta F(z)) is driven below
    tol * min(1, eta); an extragradient pass (convergent for monotone
    Lipschitz operators at step < 1/ell) is taken whenever the damped
    Newton step fails to shrink ||R||.
    """
    ell = problem.lipschitz(nu_eff)
    eta = 0.7 / max(ell, 1e-12)
    target = tol * min(1.0, eta)
    z = np.zeros(problem.m + problem.r) if z0 is None else np.asarray(z0, dtype=float)
    z = _stack_project(problem, z)
    eye = np.eye(problem.m + problem.r)

    def residual(zz):
        return zz - _stack_project(problem, zz - eta * saddle_map(problem, zz, t, nu_eff))

    R = residual(z)
    nR = np.linalg.norm(R)
    for it in range(max_iter):
        if nR < target:
            return z, it
        v = z - eta * saddle_map(problem, z, t, nu_eff)
        D = _stack_projection_jacobian(problem, v)
        J = eye - D + eta * D @ _saddle_jacobian(problem, z, t, nu_eff)
        try:
            dz = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(J, -R, rcond=None)[0]
        stepped = False
        alpha = 1.0
        while alpha >= 2.0 ** -6:
            z_try = z + alpha * dz
            R_try = residual(z_try)
            nR_try = np.linalg.norm(R_try)
            if nR_try <= (1.0 - 1e-4 * alpha) * nR:
                z, R, nR = z_try, R_try, nR_try
                stepped = True
                break
            alpha *= 0.5
        if not stepped:
            # Extragradient safeguard: z+ = P(z - eta F(P(z - eta F(z)))).
            z_half = _stack_project(problem, z - eta * saddle_map(problem, z, t, nu_eff))
            z = _stack_project(problem, z - eta * saddle_map(problem, z_half, t, nu_eff))
            R = residual(z)
            nR = np.linalg.norm(R)
    raise NoConvergence("saddle-point solve stalled at residual %.3e after %d "
                        "iterations (target %.1e)" % (nR, max_iter, target))


def _solve_equality_kkt(problem, t, tol, max_iter, z0):
    """Damped Newton on the stacked KKT residual of the equality problem."""
    z = np.zeros(problem.m + problem.r) if z0 is None else np.asarray(z0, dtype=float)

    def residual(zz):
        u, lam = problem.split(zz)
        y = problem.output_of(u, t)
        G = problem.ssmap.G
        K = problem.constraint.K_of(t)
        top = problem.cost.grad_phi(u, t) + G.T @ problem.cost.grad_psi(y, t) \
            + G.T @ (K.T @ lam)
        bottom = K @ y - problem.constraint.e_of(t)
        return np.concatenate([top, bottom])

    R = residual(z)
    nR = np.linalg.norm(R)
    for it in range(max_iter):
        if nR < tol:
            return z, it
        u, _ = problem.split(z)
        y = problem.output_of(u, t)
        G = problem.ssmap.G
        K = problem.constraint.K_of(t)
        H_u = problem.cost.hess_phi(u, t)
        H_y = problem.cost.hess_psi(y, t)
        J = np.vstack([np.hstack([H_u + G.T @ H_y @ G, G.T @ K.T]),
                       np.hstack([K @ G, np.zeros((problem.r, problem.r))])])
        try:
            dz = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(J, -R, rcond=None)[0]
        alpha = 1.0
        while alpha >= 2.0 ** -20:
            z_try = z + alpha * dz
            R_try = residual(z_try)
            nR_try = np.linalg.norm(R_try)
            if nR_try <= (1.0 - 1e-4 * alpha) * nR:
                z, R, nR = z_try, R_try, nR_try
                break
            alpha *= 0.5
        else:
            raise NoConvergence("equality KKT Newton step failed to reduce the "
                                "residual %.3e" % nR)
    raise NoConvergence("equality KKT solve stalled at residual %.3e after %d "
                        "iterations" % (nR, max_iter))


def solve_saddle_point(problem, t, tol=ORACLE_TOL, regularized=True, z0=None,
                       max_iter=500):
    """Oracle for the saddle point of L_{nu,t} (or the exact one for nu = 0).

    Parameters
    ----------
    problem : TimeVaryingProblem
    t : float
        Time at which all signals are frozen.
    tol : float
        Fixed-point / KKT residual tolerance.
    regularized : bool
        For the inequality kind, False solves the unregularized saddle
        problem (nu = 0).  Ignored for the equality kind.
    z0 : (m + r,) array, optional
        Warm start.

    Returns
    -------
    SaddlePoint
        With x = -A^{-1}(B u + E w_t) when the problem carries its plant,
        an empty array otherwise, and kkt_residual the natural residual
        ||z - P_Omega(z - F(z))|| (plain KKT residual for equalities).
    """
    if problem.kind == "equality":
        z, its = _solve_equality_kkt(problem, t, tol, max_iter, z0)
        u, lam = problem.split(z)
        y = problem.output_of(u, t)
        G = problem.ssmap.G
        K = problem.constraint.K_of(t)
        res = np.concatenate([
            problem.cost.grad_phi(u, t) + G.T @ problem.cost.grad_psi(y, t)
            + G.T @ (K.T @ lam),
            K @ y - problem.constraint.e_of(t)])
        kkt = float(np.linalg.norm(res))
    else:
        nu_eff = problem.nu if regularized else 0.0
        z, its = _solve_inequality_vi(problem, t, nu_eff, tol, max_iter, z0)
        u, lam = problem.split(z)
        kkt = float(np.linalg.norm(
            z - _stack_project(problem, z - saddle_map(problem, z, t, nu_eff))))
    if problem.plant is not None:
        x = problem.plant.equilibrium(u, problem.disturbance(t))
    else:
        x = np.empty(0)
    return SaddlePoint(u=u, lam=lam, x=x, kkt_residual=kkt, iterations=its)


def saddle_path(problem, times, tol=ORACLE_TOL, regularized=True):
    """Solve the saddle point along a time grid with warm starts.

    For a static problem the single solution is broadcast across the grid.
    Returns an (len(times), m + r) array of stacked (u, lam) rows.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((times.size, problem.m + problem.r))
    if problem.is_static and times.size > 1:
        sp = solve_saddle_point(problem, times[0], tol, regularized)
        out[:] = np.concatenate([sp.u, sp.lam])
        return out
    z0 = None
    for i, t in enumerate(times):
        sp = solve_saddle_point(problem, t, tol, regularized, z0=z0)
        z0 = np.concatenate([sp.u, sp.lam])
        out[i] = z0
    return out


def saddle_drift_bound(problem, t0, t1, step=DRIFT_FD_STEP, tol=ORACLE_TOL):
    """Estimate sup ||d/dt z*_nu(t)|| over [t0, t1] by central differences.

    Exact (zero) for static problems.  The grid step defaults to 1e-3;
    the estimate is the max sampled slope of the oracle path.
    """
    if problem.is_static:
        return 0.0
    if t1 <= t0:
        return 0.0
    n = max(2, int(np.ceil((t1 - t0) / step)))
    times = np.linspace(t0, t1, n + 1)
    h = float(times[1] - times[0])
    path = saddle_path(problem, times, tol=tol)
    slopes = np.linalg.norm(path[2:] - path[:-2], axis=1) / (2.0 * h)
    return float(np.max(slopes))


def regularization_error_check(problem, t, slack=1e-8, tol=ORACLE_TOL):
    """Compare the regularized saddle point against the exact optimizer.

    Verifies

        mu_u ||u*_nu - u*||^2 + nu/2 ||lam*_nu||^2  <=  nu/2 ||lam*||^2

    and the corollary ||u*_nu - u*|| <= sqrt(nu / (2 mu_u)) ||lam*||.

    Returns a dict with both sides, the input shift, the corollary bound
    and a boolean `passed`.
    """
    if problem.kind != "inequality":
        raise DimensionMismatch("regularization check applies to the inequality kind")
    exact = solve_saddle_point(problem, t, tol=tol, regularized=False)
    reg = solve_saddle_point(problem, t, tol=tol, regularized=True)
    mu_u = problem.cost.mu_u
    nu = problem.nu
    shift = float(np.linalg.norm(reg.u - exact.u))
    lhs = mu_u * shift ** 2 + 0.5 * nu * float(np.linalg.norm(reg.lam)) ** 2
    rhs = 0.5 * nu * float(np.linalg.norm(exact.lam)) ** 2
    corollary = float(np.sqrt(nu / (2.0 * mu_u)) * np.linalg.norm(exact.lam))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "u_shift": shift,
        "corollary_bound": corollary,
        "lam_exact": exact.lam.copy(),
        "lam_reg": reg.lam.copy(),
        "u_exact": exact.u.copy(),
        "u_reg": reg.u.copy(),
        "passed": bool(lhs <= rhs + slack and shift <= corollary + slack),
    }


def estimate_constants(problem, sample_count=1000, halfwidth=5.0, t_max=1.0,
                       seed=0, slack=1e-6):
    """Sample-based monotonicity and Lipschitz estimates of the saddle operator.

    Draws `sample_count` pairs (z, z') uniform in a centered box of the
    given halfwidth and matched times uniform in [0, t_max], then forms

        mu_hat  = min  (z - z')'(F(z) - F(z')) / ||z - z'||^2,
        ell_hat = max  ||F(z) - F(z')|| / ||z - z'||.

    Raises ConstantViolated if the samples contradict the analytic
    constants (mu_hat < mu - slack or ell_hat > ell + slack).
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100, got %d" % sample_count)
    rng = np.random.default_rng(seed)
    dim = problem.m + problem.r
    mu_hat = np.inf
    ell_hat = 0.0
    for _ in range(sample_count):
        t = float(rng.uniform(0.0, t_max)) if not problem.is_static else 0.0
        z = rng.uniform(-halfwidth, halfwidth, size=dim)
        z2 = rng.uniform(-halfwidth, halfwidth, size=dim)
        dz = z - z2
        ndz = float(np.linalg.norm(dz))
        if ndz < 1e-12:
            continue
        dF = saddle_map(problem, z, t) - saddle_map(problem, z2, t)
        mu_hat = min(mu_hat, float(dz @ dF) / ndz ** 2)
        ell_hat = max(ell_hat, float(np.linalg.norm(dF)) / ndz)
    mu = problem.strong_monotonicity()
    ell = problem.lipschitz()
    if mu_hat < mu - slack:
        raise ConstantViolated("sampled monotonicity %.9g is below analytic %.9g"
                               % (mu_hat, mu))
    if ell_hat > ell + slack:
        raise ConstantViolated("sampled Lipschitz %.9g is above analytic %.9g"
                               % (ell_hat, ell))
    return {"mu_hat": float(mu_hat), "ell_hat": float(ell_hat),
            "mu": float(mu), "ell": float(ell)}
