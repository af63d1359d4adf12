"""Sufficient-condition constants and tracking envelopes.

Two layers live here. The lower layer is a set of pure formula evaluators
(`inequality_constants`, `inequality_rate`, `equality_rate`, `build_Pz`,
...) that map declared problem constants to certificate constants; they
know nothing about plants or problems and are directly testable against
hand arithmetic. The upper layer (`certify_inequality`,
`certify_equality`) pulls the constants out of a plant, its stability
certificate and a problem, runs the formula layer, and packages the
result with pass/fail flags. `envelope` turns a passing report into the
exponential-plus-offset tracking bound.

All matrix norms are spectral norms. `estimate_constants` is re-exported
from the problem module so the sampling check lives next to the analytic
constants it validates.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (FailedCertificate, GainRatioViolated, MissingCertificate,
                     NonpositiveRate, PzNotPD)
from .problem import estimate_constants

__all__ = [
    "CertificateReport", "EqualityCertificate", "certify_inequality",
    "certify_equality", "envelope", "estimate_constants",
    "inequality_constants", "inequality_eta_max", "inequality_rate",
    "inequality_k0", "inequality_psi_constant", "inequality_eps_max",
    "equality_lipschitz", "equality_rate", "equality_ratio_bound",
    "build_Pz",
]

PD_EIG_TOL = 1e-12


def _norm(M):
    return float(np.linalg.norm(np.atleast_2d(M), 2))


# ---------------------------------------------------------------------------
# formula layer, inequality track

def inequality_constants(mu_u, ell_u, ell_y, norm_G, K_bar, nu):
    """Monotonicity and Lipschitz constants (mu, ell) of the saddle map."""
    mu = min(mu_u, nu)
    ell = np.sqrt(2.0) * (K_bar + max(ell_u + norm_G ** 2 * ell_y, nu))
    return float(mu), float(ell)


def inequality_eta_max(mu, ell):
    """Largest admissible controller gain 4 mu / ell^2."""
    return 4.0 * mu / ell ** 2


def inequality_rate(eta, mu, ell):
    """Reduced-controller contraction rate rho_z = eta (mu - eta ell^2/4)."""
    rho_z = eta * (mu - eta * ell ** 2 / 4.0)
    if rho_z <= 0:
        raise NonpositiveRate("rho_z = %.6e is not positive: eta = %g is at "
                              "or above eta_max = %.6e"
                              % (rho_z, eta, inequality_eta_max(mu, ell)))
    return float(rho_z)


def inequality_k0(eta, ell_u, ell_y, norm_G, K_bar):
    """Auxiliary constant k_0 = max{2 + eta(ell_u + ell_y |G|^2), |G| K_bar}."""
    return float(max(2.0 + eta * (ell_u + ell_y * norm_G ** 2),
                     norm_G * K_bar))


def inequality_psi_constant(rho_z, ell_y, norm_C, norm_G, K_bar, k0):
    """Interconnection constant Psi of the time-scale bound."""
    return float(rho_z * ell_y * norm_C * norm_G +
                 np.sqrt(2.0) * norm_C * (ell_y * norm_G + K_bar) * k0)


def inequality_eps_max(rho_z, lmin_Q, eta, norm_PAinvB, psi_constant):
    """Time-scale separation bound rho_z lmin(Q_x) / (4 eta |P A^-1 B| Psi)."""
    denom = 4.0 * eta * norm_PAinvB * psi_constant
    if denom <= 0:
        return float("inf")
    return float(rho_z * lmin_Q / denom)


# ---------------------------------------------------------------------------
# formula layer, equality track

def equality_lipschitz(ell_u, ell_y, norm_G):
    """Equality-track primal Lipschitz constant ell = ell_u + |G|^2 ell_y."""
    return float(ell_u + norm_G ** 2 * ell_y)


def equality_ratio_bound(k_hi, ell, mu_u):
    """Gain-ratio threshold: eta_u must exceed (4 k_hi/(ell mu_u)) eta_lam."""
    return 4.0 * k_hi / (ell * mu_u)


def equality_rate(eta_u, eta_lam, k_lo, ell, mu_u):
    """Reduced rate rho_z = min{eta_lam k_lo/ell, eta_u mu_u/2} / 2."""
    rho_z = 0.5 * min(eta_lam * k_lo / ell, eta_u * mu_u / 2.0)
    if rho_z <= 0:
        raise NonpositiveRate("equality-track rho_z = %.6e is not positive "
                              "(k_lo = %g): K G must have full row rank"
                              % (rho_z, k_lo))
    return float(rho_z)


def build_Pz(G, K, ell, ratio):
    """Assemble P_z = [[ell I, G^T K^T], [K G, ell ratio I]]."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    KG = K @ G
    m = G.shape[1]
    r = K.shape[0]
    top = np.hstack([ell * np.eye(m), KG.T])
    bottom = np.hstack([KG, ell * ratio * np.eye(r)])
    P_z = np.vstack([top, bottom])
    return 0.5 * (P_z + P_z.T)


# ---------------------------------------------------------------------------
# reports

@dataclass
class CertificateReport:
    """Constants and flags of the inequality-track sufficient conditions."""

    eta: float
    eps: float
    nu: float
    mu: float
    ell: float
    eta_max: float
    rho_z: float
    k0: float
    psi_constant: float
    eps_max: float
    rho_xi: float
    rho_xi_proof: float
    kappa: float
    gamma_z: float
    gamma_w: float
    b: float
    g: float
    d: float
    theta: float
    P_x: np.ndarray
    lmin_Qx: float
    lmin_Px: float
    lmax_Px: float
    norm_PAinvB: float
    norm_PAinvE: float
    eta_ok: bool
    eps_ok: bool
    passed: bool
    kind: str = "inequality"
    notes: list = field(default_factory=list)

    def as_dict(self):
        out = {}
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                out[name] = value.tolist()
            else:
                out[name] = value
        return out

    def summary(self):
        lines = [
            "inequality-track certificate",
            "  mu = %.6g, ell = %.6g" % (self.mu, self.ell),
            "  eta = %.6g (eta_max = %.6g): %s"
            % (self.eta, self.eta_max, "ok" if self.eta_ok else "VIOLATED"),
            "  rho_z = %.6g" % self.rho_z,
            "  eps = %.6g (eps_max = %.6g): %s"
            % (self.eps, self.eps_max, "ok" if self.eps_ok else "VIOLATED"),
            "  rho_xi = %.6g (proof variant %.6g), kappa = %.6g"
            % (self.rho_xi, self.rho_xi_proof, self.kappa),
            "  gamma_z = %.6g, gamma_w = %.6g" % (self.gamma_z, self.gamma_w),
            "  passed: %s" % self.passed,
        ]
        lines.extend("  note: " + n for n in self.notes)
        return "\n".join(lines)


@dataclass
class EqualityCertificate:
    """Constants and flags of the equality-track sufficient conditions."""

    eta_u: float
    eta_lam: float
    eps: float
    mu_u: float
    ell: float
    k_lo: float
    k_hi: float
    ratio_bound: float
    P_z: np.ndarray
    lmin_Pz: float
    lmax_Pz: float
    norm_Pz: float
    rho_z: float
    sigma1: float
    sigma2: float
    sigma3: float
    eps_max: float
    rho_xi: float
    kappa: float
    gamma_z: float
    gamma_w: float
    theta: float
    P_x: np.ndarray
    lmin_Qx: float
    lmin_Px: float
    lmax_Px: float
    norm_PAinvE: float
    ratio_ok: bool
    pz_pd: bool
    eps_ok: bool
    passed: bool
    kind: str = "equality"
    notes: list = field(default_factory=list)

    def as_dict(self):
        out = {}
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                out[name] = value.tolist()
            else:
                out[name] = value
        return out

    def summary(self):
        lines = [
            "equality-track certificate",
            "  mu_u = %.6g, ell = %.6g, k in [%.6g, %.6g]"
            % (self.mu_u, self.ell, self.k_lo, self.k_hi),
            "  eta_u = %.6g, eta_lam = %.6g (ratio bound %.6g): %s"
            % (self.eta_u, self.eta_lam, self.ratio_bound,
               "ok" if self.ratio_ok else "VIOLATED"),
            "  P_z eigenvalues within [%.6g, %.6g]: %s"
            % (self.lmin_Pz, self.lmax_Pz,
               "positive definite" if self.pz_pd else "NOT PD"),
            "  rho_z = %.6g, sigma = (%.6g, %.6g, %.6g)"
            % (self.rho_z, self.sigma1, self.sigma2, self.sigma3),
            "  eps = %.6g (eps_max = %.6g): %s"
            % (self.eps, self.eps_max, "ok" if self.eps_ok else "VIOLATED"),
            "  rho_xi = %.6g, kappa = %.6g" % (self.rho_xi, self.kappa),
            "  gamma_z = %.6g, gamma_w = %.6g" % (self.gamma_z, self.gamma_w),
            "  passed: %s" % self.passed,
        ]
        lines.extend("  note: " + n for n in self.notes)
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# certification

def _require_certificate(certificate):
    if certificate is None:
        raise MissingCertificate("no stability certificate: run "
                                 "check_stability(plant) and pass the result")


def certify_inequality(plant, certificate, problem, eta, eps):
    """Evaluate the inequality-track sufficient conditions at (eta, eps).

    Raises
    ------
    MissingCertificate
        If `certificate` is None.
    NonpositiveRate
        If eta is at or above eta_max, so no contraction rate exists.
    """
    _require_certificate(certificate)
    if problem.kind != "inequality":
        raise ValueError("certify_inequality needs an inequality problem")
    cost = problem.cost
    norm_G = problem.ssmap.norm_G
    K_bar = problem.constraint.K_bar
    nu = problem.nu

    mu, ell = inequality_constants(cost.mu_u, cost.ell_u, cost.ell_y, norm_G,
                                   K_bar, nu)
    eta_max = inequality_eta_max(mu, ell)
    rho_z = inequality_rate(eta, mu, ell)
    k0 = inequality_k0(eta, cost.ell_u, cost.ell_y, norm_G, K_bar)
    norm_C = _norm(plant.C)
    psi_constant = inequality_psi_constant(rho_z, cost.ell_y, norm_C, norm_G,
                                           K_bar, k0)

    P_x = certificate.P
    Ainv_B = np.linalg.solve(plant.A, plant.B)
    Ainv_E = np.linalg.solve(plant.A, plant.E)
    norm_PAinvB = _norm(P_x @ Ainv_B)
    norm_PAinvE = _norm(P_x @ Ainv_E)
    lmin_Q = certificate.lmin_Q

    eps_max = inequality_eps_max(rho_z, lmin_Q, eta, norm_PAinvB, psi_constant)
    rho_xi = 0.5 * min(2.0 * rho_z,
                       lmin_Q / (4.0 * eps * certificate.lmax_P))
    rho_xi_proof = 0.5 * min(2.0 * rho_z,
                             lmin_Q / (2.0 * eps * certificate.lmax_P))
    kappa = max(0.5, certificate.lmax_P) / min(0.5, certificate.lmin_P)
    gamma_z = 2.0 / rho_z
    gamma_w = 4.0 * eps * norm_PAinvE / lmin_Q

    b = eta * norm_C * (cost.ell_y * norm_G + K_bar)
    g = 2.0 * np.sqrt(2.0) * norm_PAinvB * k0
    d = 2.0 * eta * cost.ell_y * norm_PAinvB * norm_C * norm_G
    theta = b / (b + g) if b + g > 0 else 0.5

    eta_ok = eta < eta_max
    eps_ok = eps < eps_max
    report = CertificateReport(
        eta=eta, eps=eps, nu=nu, mu=mu, ell=ell, eta_max=eta_max, rho_z=rho_z,
        k0=k0, psi_constant=psi_constant, eps_max=eps_max, rho_xi=rho_xi,
        rho_xi_proof=rho_xi_proof, kappa=kappa, gamma_z=gamma_z,
        gamma_w=gamma_w, b=b, g=g, d=d, theta=theta, P_x=P_x, lmin_Qx=lmin_Q,
        lmin_Px=certificate.lmin_P, lmax_Px=certificate.lmax_P,
        norm_PAinvB=norm_PAinvB, norm_PAinvE=norm_PAinvE, eta_ok=eta_ok,
        eps_ok=eps_ok, passed=bool(eta_ok and eps_ok))
    return report


def certify_equality(plant, certificate, problem, eta_u, eta_lam, eps):
    """Evaluate the equality-track sufficient conditions at (eta_u, eta_lam, eps).

    Raises
    ------
    MissingCertificate
        If `certificate` is None, or K is time-varying and no coupling
        bounds k_lo/k_hi were declared.
    GainRatioViolated
        If eta_u <= (4 k_hi / (ell mu_u)) eta_lam.
    PzNotPD
        If the assembled P_z has a nonpositive eigenvalue.
    """
    _require_certificate(certificate)
    if problem.kind != "equality":
        raise ValueError("certify_equality needs an equality problem")
    cost = problem.cost
    G = problem.ssmap.G
    norm_G = problem.ssmap.norm_G
    notes = []

    ell = equality_lipschitz(cost.ell_u, cost.ell_y, norm_G)
    k_lo, k_hi = problem.constraint.k_lo, problem.constraint.k_hi
    if k_lo is None or k_hi is None:
        if not problem.constraint.is_constant_K:
            raise MissingCertificate("time-varying K needs declared coupling "
                                     "bounds k_lo and k_hi")
        K = problem.constraint.K_of(0.0)
        coupling = K @ G @ G.T @ K.T
        eig = np.linalg.eigvalsh(0.5 * (coupling + coupling.T))
        k_lo = float(eig[0]) if k_lo is None else k_lo
        k_hi = float(eig[-1]) if k_hi is None else k_hi
        notes.append("coupling bounds computed from eigenvalues of K G G^T "
                     "K^T")
    ratio_bound = equality_ratio_bound(k_hi, ell, cost.mu_u)
    if eta_u <= ratio_bound * eta_lam:
        raise GainRatioViolated("eta_u = %g must exceed %.6g * eta_lam = %.6g"
                                % (eta_u, ratio_bound,
                                   ratio_bound * eta_lam))

    K = problem.constraint.K_of(0.0)
    P_z = build_Pz(G, K, ell, eta_u / eta_lam)
    eig_Pz = np.linalg.eigvalsh(P_z)
    if eig_Pz[0] <= PD_EIG_TOL:
        raise PzNotPD("P_z has min eigenvalue %.3e" % eig_Pz[0])
    lmin_Pz, lmax_Pz = float(eig_Pz[0]), float(eig_Pz[-1])
    norm_Pz = lmax_Pz

    rho_z = equality_rate(eta_u, eta_lam, k_lo, ell, cost.mu_u)

    P_x = certificate.P
    norm_C = _norm(plant.C)
    KG = K @ G
    Ainv_B = np.linalg.solve(plant.A, plant.B)
    Ainv_E = np.linalg.solve(plant.A, plant.E)
    PAinv_B = P_x @ Ainv_B
    norm_PAinvB = _norm(PAinv_B)
    norm_PAinvE = _norm(P_x @ Ainv_E)

    sigma1 = (2.0 * eta_u * cost.ell_y * norm_C * norm_G * (ell + _norm(KG)) +
              2.0 * eta_lam * _norm(G.T @ K.T @ K @ plant.C) +
              2.0 * ell * eta_u * _norm(K @ plant.C))
    if plant.p == plant.n:
        PAinv_G = P_x @ np.linalg.solve(plant.A, G)
        sigma2 = (2.0 * eta_u * ell * norm_PAinvB +
                  2.0 * eta_u * _norm(PAinv_G @ G.T @ K.T))
    else:
        sigma2 = (2.0 * eta_u * ell * norm_PAinvB +
                  2.0 * eta_u * _norm(PAinv_B @ G.T @ K.T))
        notes.append("sigma2 cross term uses P_x A^-1 B G^T K^T because the "
                     "output dimension differs from the state dimension")
    sigma3 = 2.0 * eta_u * cost.ell_y * norm_C * _norm(PAinv_B @ G.T)

    denom = 16.0 * sigma1 * sigma2 + 4.0 * rho_z * lmin_Pz * sigma3
    lmin_Q = certificate.lmin_Q
    if denom <= 0:
        eps_max = float("inf")
    else:
        eps_max = rho_z * certificate.lmin_P * lmin_Pz / denom
    rho_xi = 0.25 * min(rho_z * lmin_Pz / lmax_Pz,
                        lmin_Q / (eps * certificate.lmax_P))
    kappa = (max(certificate.lmax_P, lmax_Pz) /
             min(certificate.lmin_P, lmin_Pz))
    gamma_z = 4.0 * norm_Pz * np.sqrt(kappa) / (rho_z * lmin_Pz)
    gamma_w = 4.0 * norm_PAinvE * np.sqrt(kappa) / lmin_Q
    theta = sigma1 / (sigma1 + sigma2) if sigma1 + sigma2 > 0 else 0.5

    eps_ok = eps < eps_max
    report = EqualityCertificate(
        eta_u=eta_u, eta_lam=eta_lam, eps=eps, mu_u=cost.mu_u, ell=ell,
        k_lo=k_lo, k_hi=k_hi, ratio_bound=ratio_bound, P_z=P_z,
        lmin_Pz=lmin_Pz, lmax_Pz=lmax_Pz, norm_Pz=norm_Pz, rho_z=rho_z,
        sigma1=sigma1, sigma2=sigma2, sigma3=sigma3, eps_max=eps_max,
        rho_xi=rho_xi, kappa=kappa, gamma_z=gamma_z, gamma_w=gamma_w,
        theta=theta, P_x=P_x, lmin_Qx=lmin_Q, lmin_Px=certificate.lmin_P,
        lmax_Px=certificate.lmax_P, norm_PAinvE=norm_PAinvE, ratio_ok=True,
        pz_pd=True, eps_ok=eps_ok, passed=bool(eps_ok), notes=notes)
    return report


def envelope(report, initial_error, t0, t, sup_zdot=0.0, sup_wdot=0.0):
    """Tracking envelope sqrt(kappa) |xi(t0)| e^{-rho_xi (t-t0)/2} + offsets.

    `t` may be a scalar or an array; the result matches its shape. The
    offset is gamma_z sup_zdot + gamma_w sup_wdot with the
    track-appropriate coefficients taken from the report.

    Raises
    ------
    FailedCertificate
        If the report did not pass (the bound is not claimed there).
    """
    if not report.passed:
        raise FailedCertificate("certificate did not pass; the envelope is "
                                "not claimed for these gains")
    t = np.asarray(t, dtype=float)
    decay = np.sqrt(report.kappa) * float(initial_error) * \
        np.exp(-report.rho_xi * (t - t0) / 2.0)
    offset = report.gamma_z * float(sup_zdot) + report.gamma_w * float(sup_wdot)
    return decay + offset
