"""Cost models for the time-varying design objective phi_t(u) + psi_t(y).

The built-in quadratic family is

    phi_t(u) = 1/2 (u - r_u(t))' Q_u (u - r_u(t)),
    psi_t(y) = 1/2 (y - r_y(t))' Q_y (y - r_y(t)) + c(t)' y,

with Q_u positive definite and Q_y positive semidefinite, so the strong
convexity and gradient-Lipschitz constants are eigenvalue reads.  Custom
costs supply value/gradient callables plus declared constants, which are
spot-verified on random samples.
"""

import numpy as np

from .errors import ConstantViolated, DimensionMismatch
from .signals import ConstantSignal, as_signal

#: Central finite-difference step for callback-cost Hessians.
HESSIAN_FD_STEP = 1e-6


def _sym_eigvals(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("%s must be square, got shape %s" % (name, M.shape))
    if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
        raise DimensionMismatch("%s must be symmetric" % name)
    return np.linalg.eigvalsh(M)


class QuadraticCost:
    """Quadratic tracking costs with time-varying references.

    Parameters
    ----------
    Q_u : (m, m) array_like
        Input weight, symmetric positive definite.
    r_u : signal-like
        Input reference, dimension m.
    Q_y : (p, p) array_like, optional
        Output weight, symmetric positive semidefinite; zero when omitted.
    r_y : signal-like, optional
        Output reference, dimension p; zero when omitted.
    c : signal-like, optional
        Linear output price, dimension p; zero when omitted.
    p : int, optional
        Output dimension, required when Q_y/r_y/c are all omitted.
    """

    def __init__(self, Q_u, r_u, Q_y=None, r_y=None, c=None, p=None):
        self.Q_u = np.atleast_2d(np.asarray(Q_u, dtype=float))
        eig_u = _sym_eigvals(self.Q_u, "Q_u")
        if eig_u[0] <= 0:
            raise DimensionMismatch("Q_u must be positive definite, min eigenvalue %g"
                                    % eig_u[0])
        self.m = self.Q_u.shape[0]
        self.r_u = as_signal(r_u, self.m)

        if Q_y is None:
            if p is None:
                for probe in (r_y, c):
                    if probe is not None:
                        p = as_signal(probe).dim
                        break
            if p is None:
                raise DimensionMismatch("output dimension p is required when Q_y, r_y "
                                        "and c are all omitted")
            Q_y = np.zeros((p, p))
        self.Q_y = np.atleast_2d(np.asarray(Q_y, dtype=float))
        eig_y = _sym_eigvals(self.Q_y, "Q_y")
        if eig_y[0] < -1e-12:
            raise DimensionMismatch("Q_y must be positive semidefinite, min eigenvalue %g"
                                    % eig_y[0])
        self.p = self.Q_y.shape[0]
        self.r_y = as_signal(r_y, self.p) if r_y is not None else \
            ConstantSignal(np.zeros(self.p))
        self.c = as_signal(c, self.p) if c is not None else \
            ConstantSignal(np.zeros(self.p))

        self.mu_u = float(eig_u[0])
        self.ell_u = float(eig_u[-1])
        self.ell_y = float(max(eig_y[-1], 0.0))

    @property
    def is_static(self):
        return self.r_u.is_constant and self.r_y.is_constant and self.c.is_constant

    def phi(self, u, t):
        d = np.asarray(u, dtype=float) - self.r_u(t)
        return 0.5 * float(d @ self.Q_u @ d)

    def grad_phi(self, u, t):
        return self.Q_u @ (np.asarray(u, dtype=float) - self.r_u(t))

    def psi(self, y, t):
        y = np.asarray(y, dtype=float)
        d = y - self.r_y(t)
        return 0.5 * float(d @ self.Q_y @ d) + float(self.c(t) @ y)

    def grad_psi(self, y, t):
        return self.Q_y @ (np.asarray(y, dtype=float) - self.r_y(t)) + self.c(t)

    def hess_phi(self, u, t):
        return self.Q_u

    def hess_psi(self, y, t):
        return self.Q_y


class CallbackCost:
    """User-supplied cost callables with declared convexity constants.

    Parameters
    ----------
    phi, grad_phi : callables (u, t) -> float / (m,) array
    psi, grad_psi : callables (y, t) -> float / (p,) array
    mu_u : float
        Declared strong-convexity modulus of phi in u (> 0).
    ell_u, ell_y : float
        Declared gradient Lipschitz constants (ell_u >= mu_u, ell_y >= 0).
    m, p : int
        Input and output dimensions.
    """

    def __init__(self, phi, grad_phi, psi, grad_psi, mu_u, ell_u, ell_y, m, p,
                 is_static=False):
        if mu_u <= 0:
            raise DimensionMismatch("mu_u must be positive, got %g" % mu_u)
        if ell_u < mu_u:
            raise DimensionMismatch("ell_u = %g must be >= mu_u = %g" % (ell_u, mu_u))
        if ell_y < 0:
            raise DimensionMismatch("ell_y must be nonnegative, got %g" % ell_y)
        self._phi = phi
        self._grad_phi = grad_phi
        self._psi = psi
        self._grad_psi = grad_psi
        self.mu_u = float(mu_u)
        self.ell_u = float(ell_u)
        self.ell_y = float(ell_y)
        self.m = int(m)
        self.p = int(p)
        self.is_static = bool(is_static)

    def phi(self, u, t):
        return float(self._phi(np.asarray(u, dtype=float), t))

    def grad_phi(self, u, t):
        return np.asarray(self._grad_phi(np.asarray(u, dtype=float), t), dtype=float)

    def psi(self, y, t):
        return float(self._psi(np.asarray(y, dtype=float), t))

    def grad_psi(self, y, t):
        return np.asarray(self._grad_psi(np.asarray(y, dtype=float), t), dtype=float)

    def _fd_hessian(self, grad, x, t):
        x = np.asarray(x, dtype=float)
        n = x.size
        H = np.empty((n, n))
        h = HESSIAN_FD_STEP
        for j in range(n):
            step = np.zeros(n)
            step[j] = h
            H[:, j] = (grad(x + step, t) - grad(x - step, t)) / (2.0 * h)
        return 0.5 * (H + H.T)

    def hess_phi(self, u, t):
        return self._fd_hessian(self.grad_phi, u, t)

    def hess_psi(self, y, t):
        return self._fd_hessian(self.grad_psi, y, t)

    def spot_check(self, samples=200, halfwidth=5.0, t_max=1.0, seed=0, slack=1e-8):
        """Sample-test the declared constants; raises ConstantViolated.

        Checks, over random pairs at matched times,

            (u - u')'(grad phi(u) - grad phi(u')) >= mu_u ||u - u'||^2,
            ||grad phi(u) - grad phi(u')|| <= ell_u ||u - u'||,
            ||grad psi(y) - grad psi(y')|| <= ell_y ||y - y'||.
        """
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            t = float(rng.uniform(0.0, t_max))
            u, u2 = rng.uniform(-halfwidth, halfwidth, size=(2, self.m))
            y, y2 = rng.uniform(-halfwidth, halfwidth, size=(2, self.p))
            du = u - u2
            dg = self.grad_phi(u, t) - self.grad_phi(u2, t)
            nd = float(np.linalg.norm(du))
            if nd > 0:
                inner = float(du @ dg)
                if inner < self.mu_u * nd ** 2 - slack:
                    raise ConstantViolated(
                        "sampled strong convexity %.6g below declared mu_u %.6g"
                        % (inner / nd ** 2, self.mu_u))
                if np.linalg.norm(dg) > self.ell_u * nd + slack:
                    raise ConstantViolated(
                        "sampled phi-gradient slope %.6g above declared ell_u %.6g"
                        % (np.linalg.norm(dg) / nd, self.ell_u))
            dy = y - y2
            ndy = float(np.linalg.norm(dy))
            if ndy > 0:
                dgy = self.grad_psi(y, t) - self.grad_psi(y2, t)
                if np.linalg.norm(dgy) > self.ell_y * ndy + slack:
                    raise ConstantViolated(
                        "sampled psi-gradient slope %.6g above declared ell_y %.6g"
                        % (np.linalg.norm(dgy) / ndy, self.ell_y))
