"""Cell-transmission traffic networks and the ramp-metering case study.

The network is a directed graph of road cells, each carrying a triangular
fundamental diagram: demand d_i(x) = min{phi_i x, d_i^max} and supply
s_i(x) = min{beta_i (x_i^jam - x), s_i^max}.  Outflows follow the FIFO
allocation rule, so one blocked successor throttles the whole cell.  Below
the critical densities every min saturates on its linear branch and the
dynamics collapse to the LTI model used by the tracking controllers; the
linearization and the metering problem built here are exact in that regime.
"""

import numpy as np

from .costs import QuadraticCost
from .errors import (ConfigInvalid, DimensionMismatch, NegativeDensity,
                     NotHurwitz, UnknownLink)
from .plant import LtiPlant, steady_state_map
from .problem import OutputConstraint, TimeVaryingProblem
from .sets import InputSet

# Densities this far below zero are treated as integration noise and
# clipped; anything lower is a caller error.
DENSITY_TOL = 1e-9

# Curvature of the quadratic term added to the throughput reward so psi
# has a Lipschitz gradient and the saddle oracle stays well posed when
# the ceiling constraints are inactive.
PSI_CURVATURE = 1e-3

LINK_KINDS = ("on-ramp", "off-ramp", "internal")


class TrafficLink:
    """One road cell with a triangular demand/supply diagram.

    Parameters
    ----------
    link_id : str
        Unique name used by edges, controllers, and configs.
    kind : {"on-ramp", "off-ramp", "internal"}
    phi : float
        Free-flow speed (1/time); demand slope d(x) = phi x below x_crt_d.
    beta : float
        Back-propagation speed (1/time); supply slope from the jam side.
    d_max : float
        Demand saturation (veh/time).
    s_max : float
        Supply saturation (veh/time).
    x_jam : float
        Jam density (veh); supply vanishes there.

    Notes
    -----
    Derived criticals: x_crt_d = d_max / phi is where demand saturates,
    x_crt_s = x_jam - s_max / beta is where supply starts to drop.  All
    parameters must be positive and x_crt_d must not exceed x_jam.
    """

    def __init__(self, link_id, kind, phi, beta, d_max, s_max, x_jam):
        if kind not in LINK_KINDS:
            raise ConfigInvalid("link %r: kind must be one of %s, got %r"
                                % (link_id, "|".join(LINK_KINDS), kind))
        self.id = str(link_id)
        self.kind = kind
        self.phi = float(phi)
        self.beta = float(beta)
        self.d_max = float(d_max)
        self.s_max = float(s_max)
        self.x_jam = float(x_jam)
        bad = [name for name, v in (("phi", self.phi), ("beta", self.beta),
                                    ("d_max", self.d_max), ("s_max", self.s_max),
                                    ("x_jam", self.x_jam)) if v <= 0]
        if bad:
            raise ConfigInvalid("link %r: parameters must be positive, got "
                                "nonpositive %s" % (self.id, ", ".join(bad)))
        self.x_crt_d = self.d_max / self.phi
        self.x_crt_s = self.x_jam - self.s_max / self.beta
        if self.x_crt_d > self.x_jam + 1e-12:
            raise ConfigInvalid("link %r: demand critical d_max/phi = %g exceeds "
                                "jam density %g" % (self.id, self.x_crt_d, self.x_jam))

    @property
    def ceiling(self):
        """Free-flow ceiling min{x_crt_d, x_crt_s} enforced by metering."""
        return min(self.x_crt_d, self.x_crt_s)

    def demand(self, x):
        return min(self.phi * x, self.d_max)

    def supply(self, x):
        # clamped at zero so a link pushed past jam admits nothing
        # instead of producing negative flow
        return max(min(self.beta * (self.x_jam - x), self.s_max), 0.0)

    def __repr__(self):
        return "TrafficLink(%r, %s, phi=%g)" % (self.id, self.kind, self.phi)


class TrafficNetwork:
    """Immutable road graph: links, routing ratios, metered on-ramps.

    Parameters
    ----------
    links : sequence of TrafficLink
    edges : sequence of (src_id, dst_id, ratio)
        Routing ratio r_ij in (0, 1]; for every link with successors the
        ratios must sum to one (all outflow is accounted for).
    controllable : sequence of str
        On-ramp ids whose inflow is the control input, in input order.

    Raises
    ------
    UnknownLink
        An edge or the controllable list references an id that is not a
        link.
    ConfigInvalid
        Any other inconsistency; the message aggregates every problem
        found so a config can be fixed in one pass.
    """

    def __init__(self, links, edges, controllable):
        self.links = list(links)
        self.ids = [link.id for link in self.links]
        if len(set(self.ids)) != len(self.ids):
            raise ConfigInvalid("duplicate link ids: %s" % sorted(
                i for i in set(self.ids) if self.ids.count(i) > 1))
        self.index = {link_id: i for i, link_id in enumerate(self.ids)}
        n = len(self.links)

        for src, dst, _ in edges:
            for link_id in (src, dst):
                if link_id not in self.index:
                    raise UnknownLink("edge (%r, %r) references unknown link %r"
                                      % (src, dst, link_id))
        for link_id in controllable:
            if link_id not in self.index:
                raise UnknownLink("controllable ramp %r is not a link" % link_id)

        problems = []
        R = np.zeros((n, n))
        for src, dst, ratio in edges:
            i, j = self.index[src], self.index[dst]
            ratio = float(ratio)
            if not 0.0 < ratio <= 1.0:
                problems.append("edge (%r, %r): ratio %g outside (0, 1]"
                                % (src, dst, ratio))
            if R[i, j] != 0.0:
                problems.append("edge (%r, %r) listed twice" % (src, dst))
            R[i, j] = ratio

        successors = [np.nonzero(R[i])[0] for i in range(n)]
        predecessors = [np.nonzero(R[:, j])[0] for j in range(n)]
        for i in range(n):
            if len(successors[i]) and abs(R[i].sum() - 1.0) > 1e-9:
                problems.append("link %r: routing ratios sum to %.12g, expected 1"
                                % (self.ids[i], R[i].sum()))
            kind = self.links[i].kind
            if kind == "on-ramp" and len(predecessors[i]):
                problems.append("on-ramp %r has predecessors; its inflow is the "
                                "control input" % self.ids[i])
            if kind == "off-ramp" and len(successors[i]):
                problems.append("off-ramp %r has successors; its outflow exits "
                                "the network" % self.ids[i])
        seen = set()
        for link_id in controllable:
            if link_id in seen:
                problems.append("controllable ramp %r listed twice" % link_id)
            seen.add(link_id)
            if link_id in self.index and \
                    self.links[self.index[link_id]].kind != "on-ramp":
                problems.append("controllable link %r is not an on-ramp" % link_id)
        if problems:
            raise ConfigInvalid("inconsistent network:\n  " + "\n  ".join(problems))

        self.R = R
        self.successors = successors
        self.predecessors = predecessors
        self.controllable = list(controllable)
        self.B = np.zeros((n, len(self.controllable)))
        for k, link_id in enumerate(self.controllable):
            self.B[self.index[link_id], k] = 1.0

        # flat parameter arrays for vectorized evaluation
        self.phi = np.array([l.phi for l in self.links])
        self.beta = np.array([l.beta for l in self.links])
        self.d_max = np.array([l.d_max for l in self.links])
        self.s_max = np.array([l.s_max for l in self.links])
        self.x_jam = np.array([l.x_jam for l in self.links])
        self.off_ramps = np.array([l.kind == "off-ramp" for l in self.links])
        # edge triples as index arrays, for the FIFO supply caps
        self.edge_src = np.array([self.index[s] for s, _, _ in edges], dtype=int)
        self.edge_dst = np.array([self.index[d] for _, d, _ in edges], dtype=int)
        self.edge_ratio = np.array([float(r) for _, _, r in edges])

    @property
    def n(self):
        return len(self.links)

    @property
    def m(self):
        return len(self.controllable)

    @property
    def ceilings(self):
        return np.array([l.ceiling for l in self.links])

    def link(self, link_id):
        if link_id not in self.index:
            raise UnknownLink("no link named %r" % link_id)
        return self.links[self.index[link_id]]

    def demand(self, x):
        return np.minimum(self.phi * np.asarray(x, dtype=float), self.d_max)

    def supply(self, x):
        raw = np.minimum(self.beta * (self.x_jam - np.asarray(x, dtype=float)),
                         self.s_max)
        return np.maximum(raw, 0.0)

    def __repr__(self):
        return "TrafficNetwork(%d links, %d metered ramps)" % (self.n, self.m)


def ctm_vector_field(network, x, u):
    """Density derivative of the FIFO cell-transmission model.

    Parameters
    ----------
    network : TrafficNetwork
    x : (n,) array_like
        Densities, elementwise >= 0 (values above -1e-9 are clipped).
    u : (m,) array_like
        Metered on-ramp inflows, one per controllable ramp.

    Returns
    -------
    ndarray
        xdot = f_in - f_out per link.  Outflow is the demand capped by
        every successor's supply divided by its routing share; off-ramps
        (and any link without successors) discharge at demand and the
        flow leaves the network.  Inflow is the routing-weighted sum of
        upstream outflows, plus u on metered ramps.

    Raises
    ------
    NegativeDensity
        Some density is below -1e-9.
    DimensionMismatch
        x or u has the wrong length.
    """
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.shape != (network.n,):
        raise DimensionMismatch("expected %d densities, got shape %s"
                                % (network.n, x.shape))
    if u.shape != (network.m,):
        raise DimensionMismatch("expected %d ramp inflows, got shape %s"
                                % (network.m, u.shape))
    if np.any(x < -DENSITY_TOL):
        worst = int(np.argmin(x))
        raise NegativeDensity("density of link %r is %.3g"
                              % (network.ids[worst], x[worst]))
    x = np.maximum(x, 0.0)

    f_out = network.demand(x)
    if len(network.edge_src):
        caps = network.supply(x)[network.edge_dst] / network.edge_ratio
        np.minimum.at(f_out, network.edge_src, caps)
    f_in = network.R.T @ f_out + network.B @ u
    return f_in - f_out


def throughput(network, x):
    """Total exit flow: the sum of off-ramp demands min{phi x, d_max}."""
    demands = network.demand(np.maximum(np.asarray(x, dtype=float), 0.0))
    return float(demands[network.off_ramps].sum())


def freeflow_linearization(network, hurwitz_margin=0.0):
    """LTI plant matching the CTM below the critical densities.

    In free flow f_out = phi x and no supply cap binds, so
    xdot = (R' - I) F x + B u with F = diag(phi).  The output is the
    measured density y = x + w (C = I, D = I, E = 0), giving the noise
    channel of the case-study scenarios.

    Raises
    ------
    NotHurwitz
        (R' - I) F has an eigenvalue with real part >= -hurwitz_margin,
        e.g. a routing cycle that conserves mass.
    """
    n = network.n
    F = np.diag(network.phi)
    A = (network.R.T - np.eye(n)) @ F
    growth = float(np.max(np.linalg.eigvals(A).real))
    if growth >= -hurwitz_margin:
        raise NotHurwitz("free-flow matrix has an eigenvalue with real part "
                         "%.6g; the routing graph must drain" % growth)
    return LtiPlant(A, network.B, np.eye(n), D=np.eye(n), E=np.zeros((n, n)))


class RampMeteringProblem:
    """Data of the metering objective, kept alongside the built problem.

    Fields
    ------
    u_ref : (m,) ndarray
        Desired ramp flows (the arriving demand to serve).
    Q_u : (m, m) ndarray
        Positive definite tracking weight.
    throughput_coefficients : (n,) ndarray
        Linear throughput gradient: phi_i on off-ramps, zero elsewhere,
        so the free-flow exit rate is coefficients . y.
    ceilings : (n,) ndarray
        Per-link density ceilings min{x_crt_d, x_crt_s}, all positive.
    """

    def __init__(self, u_ref, Q_u, throughput_coefficients, ceilings):
        self.u_ref = np.asarray(u_ref, dtype=float).ravel()
        self.Q_u = np.atleast_2d(np.asarray(Q_u, dtype=float))
        self.throughput_coefficients = np.asarray(throughput_coefficients,
                                                  dtype=float).ravel()
        self.ceilings = np.asarray(ceilings, dtype=float).ravel()
        m = self.u_ref.shape[0]
        if self.Q_u.shape != (m, m):
            raise DimensionMismatch("Q_u has shape %s, expected (%d, %d)"
                                    % (self.Q_u.shape, m, m))
        eigs = np.linalg.eigvalsh(0.5 * (self.Q_u + self.Q_u.T))
        if eigs[0] <= 0:
            raise DimensionMismatch("Q_u must be positive definite, min "
                                    "eigenvalue %g" % eigs[0])
        if np.any(self.u_ref < 0):
            raise DimensionMismatch("u_ref must be nonnegative, got %s"
                                    % self.u_ref)
        if np.any(self.ceilings <= 0):
            raise ConfigInvalid("density ceilings must be positive, got %s"
                                % self.ceilings)


def build_metering_problem(network, u_ref, Q_u, nu=0.05, delta=PSI_CURVATURE,
                           disturbance=None, plant=None):
    """Ramp-metering tracking problem on the free-flow linearization.

    The objective is (u - u_ref)' Q_u (u - u_ref) on the ramps plus a
    throughput reward on the outputs: psi(y) = -sum over off-ramps of
    phi_i y_i, convexified by delta ||y||^2 so its gradient is Lipschitz.
    Density ceilings enter as y_i <= min{x_crt_d, x_crt_s} with K = I,
    and the input set is the nonnegative orthant.

    Parameters
    ----------
    network : TrafficNetwork
    u_ref : (m,) array_like
        Desired ramp flows, nonnegative.
    Q_u : (m, m) array_like
        Positive definite tracking weight (the plain quadratic-form
        convention; the stored cost carries 2 Q_u because it evaluates
        one-half of the quadratic form).
    nu : float
        Dual regularization weight of the built problem.
    delta : float
        Throughput-reward curvature; keep small so the reward stays
        effectively linear in the free-flow band.
    disturbance : signal-like, optional
        Measurement noise w with y = x + w; zero when omitted.
    plant : LtiPlant, optional
        Reuse an existing linearization instead of rebuilding it.

    Returns
    -------
    TimeVaryingProblem
        With the metering record attached as `problem.metering`.
    """
    n = network.n
    u_ref = np.asarray(u_ref, dtype=float).ravel()
    if u_ref.shape != (network.m,):
        raise DimensionMismatch("u_ref has shape %s, expected (%d,)"
                                % (u_ref.shape, network.m))
    coefficients = np.where(network.off_ramps, network.phi, 0.0)
    record = RampMeteringProblem(u_ref, Q_u, coefficients, network.ceilings)

    if plant is None:
        plant = freeflow_linearization(network)
    cost = QuadraticCost(2.0 * record.Q_u, u_ref,
                         Q_y=2.0 * float(delta) * np.eye(n),
                         c=-coefficients)
    constraint = OutputConstraint(np.eye(n), record.ceilings, kind="inequality")
    if disturbance is None:
        disturbance = np.zeros(n)
    problem = TimeVaryingProblem(cost, constraint, InputSet.nonneg(network.m),
                                 steady_state_map(plant), disturbance, nu,
                                 plant=plant)
    problem.metering = record
    return problem


def alinea_tables(network, gain):
    """Watched-link tables for the local integral metering law.

    Each metered ramp watches its direct successors (the links it merges
    onto) and drives them to their free-flow ceiling.  Remote bottlenecks
    are invisible to this law; that blind spot is what the case study
    exercises.

    Returns
    -------
    (downstream, gains, setpoints)
        downstream is one id list per controllable ramp in input order;
        gains and setpoints map watched link id -> value.
    """
    downstream = []
    gains = {}
    setpoints = {}
    for ramp_id in network.controllable:
        ramp = network.index[ramp_id]
        watched = [network.ids[j] for j in network.successors[ramp]]
        if not watched:
            raise ConfigInvalid("metered ramp %r has no successors to watch"
                                % ramp_id)
        downstream.append(watched)
        for link_id in watched:
            gains[link_id] = float(gain)
            setpoints[link_id] = network.link(link_id).ceiling
    return downstream, gains, setpoints


# Shipped 7-link example: two metered ramps feeding a three-link mainline
# with an off-ramp at the first diverge and a terminal off-ramp.  The
# mainline tail l3 has the lowest ceiling and no adjacent ramp, so local
# metering cannot see the congestion it causes there.
EXAMPLE_NETWORK = {
    "links": [
        {"id": "r1", "kind": "on-ramp", "phi": 1.0, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
        {"id": "r2", "kind": "on-ramp", "phi": 1.0, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
        {"id": "l1", "kind": "internal", "phi": 1.0, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
        {"id": "l2", "kind": "internal", "phi": 1.0, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
        {"id": "l3", "kind": "internal", "phi": 0.8, "beta": 1.0,
         "d_max": 0.9, "s_max": 2.0, "x_jam": 4.0},
        {"id": "e1", "kind": "off-ramp", "phi": 1.2, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
        {"id": "e2", "kind": "off-ramp", "phi": 1.2, "beta": 1.0,
         "d_max": 2.0, "s_max": 2.0, "x_jam": 4.0},
    ],
    "edges": [
        {"from": "r1", "to": "l1", "ratio": 1.0},
        {"from": "l1", "to": "e1", "ratio": 0.3},
        {"from": "l1", "to": "l2", "ratio": 0.7},
        {"from": "r2", "to": "l2", "ratio": 1.0},
        {"from": "l2", "to": "l3", "ratio": 1.0},
        {"from": "l3", "to": "e2", "ratio": 1.0},
    ],
    "controllable": ["r1", "r2"],
}


def network_from_config(block):
    """Build a TrafficNetwork from its mapping form (see EXAMPLE_NETWORK)."""
    try:
        links = [TrafficLink(spec["id"], spec["kind"], spec["phi"], spec["beta"],
                             spec["d_max"], spec["s_max"], spec["x_jam"])
                 for spec in block["links"]]
        edges = [(spec["from"], spec["to"], spec["ratio"])
                 for spec in block["edges"]]
        controllable = list(block["controllable"])
    except (KeyError, TypeError) as exc:
        raise ConfigInvalid("network block is malformed: %s" % exc) from exc
    return TrafficNetwork(links, edges, controllable)


def example_network():
    """The shipped 7-link network (two metered ramps, bottleneck at l3)."""
    return network_from_config(EXAMPLE_NETWORK)
