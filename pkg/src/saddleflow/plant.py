"""Linear time-invariant plant model and its steady-state analysis.

The plant is

    eps * xdot = A x + B u + E w,      y = C x + D w,

with A Hurwitz so that for frozen (u, w) the state settles at
x_eq = -A^{-1} (B u + E w) and the input-to-output steady-state map is

    y_ss = G u + H w,   G = -C A^{-1} B,   H = D - C A^{-1} E.

`check_stability` certifies the Hurwitz property by solving the Lyapunov
equation A' P + P A = -Q for a chosen positive-definite Q and returns the
eigenvalue summaries the gain certificates consume.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotHurwitz, RankDeficientC, SingularA

#: Eigenvalues of A must satisfy Re(lambda) < -HURWITZ_MARGIN.
HURWITZ_MARGIN = 1e-9

#: Residual ceiling for the Lyapunov solve, ||A'P + PA + Q||_F.
LYAPUNOV_RESIDUAL_TOL = 1e-10

#: Condition-number ceiling beyond which A is treated as singular.
CONDITION_LIMIT = 1e12


def _as_matrix(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch("%s must be a 2-d matrix, got shape %s" % (name, M.shape))
    return M


class LtiPlant:
    """State-space data (A, B, C, D, E) with consistent dimensions.

    Parameters
    ----------
    A : (n, n) array_like
        State matrix; must be Hurwitz for any certificate to exist.
    B : (n, m) array_like
        Input matrix.
    C : (p, n) array_like
        Output matrix; its columns must be linearly independent.
    D : (p, q) array_like
        Disturbance feedthrough.
    E : (n, q) array_like
        Disturbance-to-state matrix.
    """

    def __init__(self, A, B, C, D=None, E=None):
        self.A = _as_matrix(A, "A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise DimensionMismatch("A must be square, got shape %s" % (self.A.shape,))
        self.B = _as_matrix(B, "B")
        self.C = _as_matrix(C, "C")
        if self.B.shape[0] != n:
            raise DimensionMismatch("B has %d rows, expected %d" % (self.B.shape[0], n))
        if self.C.shape[1] != n:
            raise DimensionMismatch("C has %d columns, expected %d" % (self.C.shape[1], n))
        p = self.C.shape[0]
        if E is None:
            E = np.zeros((n, 1))
        self.E = _as_matrix(E, "E")
        if self.E.shape[0] != n:
            raise DimensionMismatch("E has %d rows, expected %d" % (self.E.shape[0], n))
        q = self.E.shape[1]
        if D is None:
            D = np.zeros((p, q))
        self.D = _as_matrix(D, "D")
        if self.D.shape != (p, q):
            raise DimensionMismatch("D has shape %s, expected (%d, %d)"
                                    % (self.D.shape, p, q))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def q(self):
        return self.E.shape[1]

    def output(self, x, w):
        """Measured output y = C x + D w."""
        return self.C @ np.asarray(x, dtype=float) + self.D @ np.asarray(w, dtype=float)

    def equilibrium(self, u, w):
        """Frozen-input equilibrium x_eq = -A^{-1}(B u + E w)."""
        rhs = self.B @ np.asarray(u, dtype=float) + self.E @ np.asarray(w, dtype=float)
        return -np.linalg.solve(self.A, rhs)


@dataclass
class StabilityCertificate:
    """Lyapunov-equation solution and the eigenvalue summaries built on it."""

    P: np.ndarray
    Q: np.ndarray
    residual: float
    lmin_P: float
    lmax_P: float
    lmin_Q: float
    c_rank_ok: bool = True
    notes: list = field(default_factory=list)


@dataclass
class SteadyStateMap:
    """Steady-state input/disturbance-to-output gains y_ss = G u + H w."""

    G: np.ndarray
    H: np.ndarray

    @property
    def norm_G(self):
        return float(np.linalg.norm(self.G, 2))


def lyapunov_solve(A, Q):
    """Solve A' P + P A = -Q by Kronecker vectorization.

    Returns the symmetrized solution.  Small, dense systems only; the
    linear system has n^2 unknowns.
    """
    A = _as_matrix(A, "A")
    Q = _as_matrix(Q, "Q")
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionMismatch("Q has shape %s, expected (%d, %d)" % (Q.shape, n, n))
    # vec(A'P + PA) = (I (x) A' + A' (x) I) vec(P)
    eye = np.eye(n)
    M = np.kron(eye, A.T) + np.kron(A.T, eye)
    vec_P = np.linalg.solve(M, -Q.reshape(n * n))
    P = vec_P.reshape(n, n)
    return 0.5 * (P + P.T)


def check_stability(plant, Q=None):
    """Certify the plant state matrix and package eigenvalue summaries.

    Parameters
    ----------
    plant : LtiPlant
    Q : (n, n) array_like, optional
        Positive-definite Lyapunov right-hand side; identity when omitted.

    Returns
    -------
    StabilityCertificate

    Raises
    ------
    NotHurwitz
        If some eigenvalue of A has real part >= -1e-9.
    RankDeficientC
        If the columns of C are linearly dependent (rank C < n).  The
        rank condition is not consumed by any certificate formula, so it
        is enforced here and echoed as an advisory note in reports.
    DimensionMismatch
        If Q has the wrong shape or is not symmetric positive definite.
    """
    n = plant.n
    if Q is None:
        Q = np.eye(n)
    Q = _as_matrix(Q, "Q")
    if Q.shape != (n, n):
        raise DimensionMismatch("Q has shape %s, expected (%d, %d)" % (Q.shape, n, n))
    if np.linalg.norm(Q - Q.T) > 1e-12 * max(1.0, np.linalg.norm(Q)):
        raise DimensionMismatch("Q must be symmetric")
    lmin_Q = float(np.min(np.linalg.eigvalsh(Q)))
    if lmin_Q <= 0:
        raise DimensionMismatch("Q must be positive definite, min eigenvalue %g" % lmin_Q)

    eigs = np.linalg.eigvals(plant.A)
    worst = float(np.max(eigs.real))
    if worst >= -HURWITZ_MARGIN:
        raise NotHurwitz("max Re(eig(A)) = %.3e, must be < -%.0e" % (worst, HURWITZ_MARGIN))

    rank_C = np.linalg.matrix_rank(plant.C)
    if rank_C < n:
        raise RankDeficientC("rank(C) = %d < n = %d: columns of C are linearly "
                             "dependent" % (rank_C, n))

    P = lyapunov_solve(plant.A, Q)
    residual = float(np.linalg.norm(plant.A.T @ P + P @ plant.A + Q, "fro"))
    eig_P = np.linalg.eigvalsh(P)
    cert = StabilityCertificate(
        P=P,
        Q=Q,
        residual=residual,
        lmin_P=float(eig_P[0]),
        lmax_P=float(eig_P[-1]),
        lmin_Q=lmin_Q,
    )
    cert.notes.append("columns-of-C rank check passed (advisory: not used by any "
                      "certificate formula)")
    if residual > LYAPUNOV_RESIDUAL_TOL:
        cert.notes.append("Lyapunov residual %.3e exceeds %.0e"
                          % (residual, LYAPUNOV_RESIDUAL_TOL))
    return cert


def steady_state_map(plant):
    """Compute G = -C A^{-1} B and H = D - C A^{-1} E.

    Raises
    ------
    SingularA
        If A is singular to working precision (smallest singular value
        below max(largest singular value, 1) / 1e12).
    """
    sv = np.linalg.svd(plant.A, compute_uv=False)
    if sv[-1] <= max(sv[0], 1.0) / CONDITION_LIMIT:
        raise SingularA("A is numerically singular: sigma_min = %.3e, "
                        "sigma_max = %.3e" % (sv[-1], sv[0]))
    Ainv_B = np.linalg.solve(plant.A, plant.B)
    Ainv_E = np.linalg.solve(plant.A, plant.E)
    G = -plant.C @ Ainv_B
    H = plant.D - plant.C @ Ainv_E
    return SteadyStateMap(G=G, H=H)


def plant_vector_field(plant, x, u, w, eps):
    """Right-hand side xdot = (A x + B u + E w) / eps of the fast plant."""
    if eps <= 0:
        raise DimensionMismatch("eps must be positive, got %g" % eps)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (plant.n,):
        raise DimensionMismatch("x has shape %s, expected (%d,)" % (x.shape, plant.n))
    if u.shape != (plant.m,):
        raise DimensionMismatch("u has shape %s, expected (%d,)" % (u.shape, plant.m))
    if w.shape != (plant.q,):
        raise DimensionMismatch("w has shape %s, expected (%d,)" % (w.shape, plant.q))
    return (plant.A @ x + plant.B @ u + plant.E @ w) / eps
