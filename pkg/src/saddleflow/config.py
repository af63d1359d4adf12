"""JSON scenario configs: loading, validation, object construction.

A scenario file is one self-describing JSON mapping.  Two kinds exist:
``tracking`` scenarios close a primal-dual controller around an LTI plant
and can carry a certificate request; ``traffic`` scenarios run one of the
metering laws against the nonlinear cell-transmission model.  Validation
aggregates every problem found before raising, so a config can be fixed
in one pass.
"""

import json
import os

import numpy as np

from .controllers import ControllerGains
from .costs import QuadraticCost
from .errors import ConfigInvalid, SaddleflowError
from .plant import LtiPlant, steady_state_map
from .problem import OutputConstraint, TimeVaryingProblem
from .sets import InputSet
from .signals import seeded_piecewise_noise, signal_from_config
from .traffic import build_metering_problem, network_from_config

TRACKING_CONTROLLERS = ("projected_pd", "equality_pd")
TRAFFIC_CONTROLLERS = ("projected_pd", "alinea", "mpc")


class Scenario:
    """Parsed scenario: constructed objects plus the run parameters.

    Fields common to both kinds: name, kind, t_span, dt, log_every, x0.
    Tracking adds plant, problem, controller, gains, z0, certify.
    Traffic adds network, controller, problem (pd/mpc), eta, gain, mpc,
    noise, z0 (pd) and u0 (alinea).
    """

    def __init__(self, **fields):
        self.__dict__.update(fields)

    def __repr__(self):
        return "Scenario(%r, kind=%s, controller=%s)" % (
            self.name, self.kind, getattr(self, "controller", None))


def load_config(path):
    """Read one JSON mapping; ConfigInvalid on I/O or parse failure."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigInvalid("cannot read config %r: %s" % (path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("config %r is not valid JSON: %s"
                            % (path, exc)) from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config %r must hold a JSON object, got %s"
                            % (path, type(data).__name__))
    return data


def load_scenario(path):
    name = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_mapping(load_config(path), name=name)


def _matrix(block, key, problems, required=True):
    if key not in block:
        if required:
            problems.append("missing %r" % key)
        return None
    try:
        return np.asarray(block[key], dtype=float)
    except (TypeError, ValueError):
        problems.append("%r is not numeric" % key)
        return None


def _positive(block, key, problems, default=None):
    value = block.get(key, default)
    if value is None:
        problems.append("missing %r" % key)
        return None
    try:
        value = float(value)
    except (TypeError, ValueError):
        problems.append("%r must be a number" % key)
        return None
    if value <= 0:
        problems.append("%r must be positive, got %g" % (key, value))
        return None
    return value


def _t_span(block, problems):
    span = block.get("t_span")
    if span is None:
        problems.append("missing 't_span'")
        return None
    if isinstance(span, (int, float)):
        return (0.0, float(span))
    try:
        t0, t1 = float(span[0]), float(span[1])
    except (TypeError, ValueError, IndexError):
        problems.append("'t_span' must be a number or a [t0, t1] pair")
        return None
    if t1 <= t0:
        problems.append("'t_span' end %g must exceed start %g" % (t1, t0))
        return None
    return (t0, t1)


def plant_from_config(block, problems):
    A = _matrix(block, "A", problems)
    B = _matrix(block, "B", problems)
    C = _matrix(block, "C", problems)
    D = _matrix(block, "D", problems, required=False)
    E = _matrix(block, "E", problems, required=False)
    if A is None or B is None or C is None:
        return None
    try:
        return LtiPlant(A, B, C, D=D, E=E)
    except SaddleflowError as exc:
        problems.append("plant: %s" % exc)
        return None


def cost_from_config(block, problems):
    Q_u = _matrix(block, "Q_u", problems)
    r_u = _matrix(block, "r_u", problems)
    if Q_u is None or r_u is None:
        return None
    extra = {}
    for key in ("Q_y", "r_y", "c"):
        if key in block:
            extra[key] = _matrix(block, key, problems, required=False)
    if "p" in block:
        extra["p"] = int(block["p"])
    try:
        return QuadraticCost(Q_u, r_u, **extra)
    except SaddleflowError as exc:
        problems.append("cost: %s" % exc)
        return None


def constraint_from_config(block, problems):
    K = _matrix(block, "K", problems)
    if K is None or "e" not in block:
        if "e" not in block:
            problems.append("missing 'e'")
        return None
    try:
        e = signal_from_config(block["e"])
        return OutputConstraint(K, e, kind=block.get("kind", "inequality"),
                                K_bar=block.get("K_bar"),
                                e_bar=block.get("e_bar"),
                                k_lo=block.get("k_lo"),
                                k_hi=block.get("k_hi"))
    except SaddleflowError as exc:
        problems.append("constraint: %s" % exc)
        return None


def noise_from_config(block, dim, t_end, problems):
    """Noise block: a signal spec, or {"seed", "amplitude", "knot_spacing"}."""
    if block is None:
        return None
    if isinstance(block, dict) and "seed" in block:
        try:
            return seeded_piecewise_noise(dim, int(block["seed"]),
                                          float(block["amplitude"]),
                                          float(block["knot_spacing"]), t_end)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append("noise block needs seed, amplitude, knot_spacing:"
                            " %s" % exc)
            return None
    try:
        return signal_from_config(block, dim)
    except SaddleflowError as exc:
        problems.append("noise: %s" % exc)
        return None


def _vector(block, key, dim, problems, default=0.0):
    raw = block.get(key)
    if raw is None:
        return np.full(dim, float(default))
    vec = np.asarray(raw, dtype=float).ravel()
    if vec.shape != (dim,):
        problems.append("%r must have %d entries, got %d" % (key, dim, len(vec)))
        return np.full(dim, float(default))
    return vec


def _tracking_scenario(mapping, name, problems):
    plant = plant_from_config(mapping.get("plant", {}), problems)
    cost = cost_from_config(mapping.get("cost", {}), problems)
    constraint = constraint_from_config(mapping.get("constraint", {}), problems)
    gains_block = mapping.get("gains", {})
    eps = _positive(gains_block, "eps", problems, default=1.0)
    dt = _positive(mapping, "dt", problems)
    span = _t_span(mapping, problems)
    log_every = int(mapping.get("log_every", 10))

    # plant time-scale resolution is a load-time contract, not just a
    # runtime one, so a bad config fails before any work is done
    if dt is not None and eps is not None and dt > eps / 10.0 + 1e-15:
        problems.append("dt = %g exceeds eps/10 = %g" % (dt, eps / 10.0))

    controller = mapping.get("controller")
    kind = mapping.get("constraint", {}).get("kind", "inequality")
    if controller is None:
        controller = "projected_pd" if kind == "inequality" else "equality_pd"
    if controller not in TRACKING_CONTROLLERS:
        problems.append("tracking controller must be one of %s, got %r"
                        % ("|".join(TRACKING_CONTROLLERS), controller))

    gains = None
    if eps is not None:
        try:
            gains = ControllerGains(eps=eps, eta=gains_block.get("eta"),
                                    eta_u=gains_block.get("eta_u"),
                                    eta_lam=gains_block.get("eta_lam"))
        except SaddleflowError as exc:
            problems.append("gains: %s" % exc)

    problem = None
    if plant is not None and cost is not None and constraint is not None:
        nu = mapping.get("nu", 0.0 if kind == "equality" else None)
        if nu is None:
            problems.append("inequality scenarios must set 'nu' > 0")
        else:
            try:
                disturbance = mapping.get("disturbance", 0.0)
                if isinstance(disturbance, (int, float)):
                    disturbance = np.full(plant.q, float(disturbance))
                else:
                    disturbance = signal_from_config(disturbance, plant.q)
                input_set = InputSet.from_config(
                    mapping.get("input_set", {"kind": "full-space"}), plant.m)
                problem = TimeVaryingProblem(cost, constraint, input_set,
                                             steady_state_map(plant),
                                             disturbance, float(nu),
                                             plant=plant)
            except SaddleflowError as exc:
                problems.append("problem: %s" % exc)

    if problems:
        return None
    return Scenario(name=name, kind="tracking", plant=plant, problem=problem,
                    controller=controller, gains=gains,
                    x0=_vector(mapping, "x0", plant.n, problems),
                    z0=_vector(mapping, "z0", problem.m + problem.r, problems),
                    t_span=span, dt=dt, log_every=log_every,
                    certify=bool(mapping.get("certify", True)))


def _traffic_scenario(mapping, name, problems):
    network = None
    block = mapping.get("network")
    if block is None:
        problems.append("missing 'network'")
    else:
        try:
            network = network_from_config(block)
        except SaddleflowError as exc:
            problems.append("network: %s" % exc)

    controller = mapping.get("controller")
    if controller not in TRAFFIC_CONTROLLERS:
        problems.append("traffic controller must be one of %s, got %r"
                        % ("|".join(TRAFFIC_CONTROLLERS), controller))

    dt = _positive(mapping, "dt", problems)
    span = _t_span(mapping, problems)
    log_every = int(mapping.get("log_every", 10))

    problem = None
    eta = gain = mpc = None
    if controller in ("projected_pd", "mpc") and network is not None:
        pblock = mapping.get("problem")
        if not isinstance(pblock, dict):
            problems.append("%s scenarios need a 'problem' block with u_ref "
                            "and Q_u" % controller)
        else:
            local = []
            u_ref = _matrix(pblock, "u_ref", local)
            Q_u = _matrix(pblock, "Q_u", local)
            if not local and u_ref is not None and Q_u is not None:
                try:
                    problem = build_metering_problem(
                        network, u_ref, Q_u,
                        nu=float(pblock.get("nu", 0.05)),
                        delta=float(pblock.get("delta", 1e-3)))
                except SaddleflowError as exc:
                    local.append(str(exc))
            problems.extend("problem: %s" % p for p in local)
    if controller == "projected_pd":
        eta = _positive(mapping, "eta", problems)
    if controller == "alinea":
        gain = _positive(mapping, "gain", problems)
    if controller == "mpc":
        block = mapping.get("mpc", {})
        local = []
        mpc = {
            "prediction_horizon": _positive(block, "prediction_horizon", local),
            "replan_interval": _positive(block, "replan_interval", local),
            "control_dt": _positive(block, "control_dt", local),
            "tol": float(block.get("tol", 1e-6)),
            "on_infeasible": block.get("on_infeasible", "soften"),
        }
        if block.get("max_iter") is not None:
            mpc["max_iter"] = int(block["max_iter"])
        problems.extend("mpc: %s" % p for p in local)

    noise = None
    if network is not None and span is not None:
        noise = noise_from_config(mapping.get("noise"), network.n, span[1],
                                  problems)

    if problems:
        return None
    n, m = network.n, network.m
    return Scenario(name=name, kind="traffic", network=network,
                    controller=controller, problem=problem, eta=eta,
                    gain=gain, mpc=mpc, noise=noise,
                    x0=_vector(mapping, "x0", n, problems),
                    z0=_vector(mapping, "z0", m + n, problems),
                    u0=_vector(mapping, "u0", m, problems),
                    t_span=span, dt=dt, log_every=log_every)


def scenario_from_mapping(mapping, name=None):
    """Validate one config mapping and construct its Scenario.

    Raises
    ------
    ConfigInvalid
        With every problem found, one per line.
    """
    if not isinstance(mapping, dict):
        raise ConfigInvalid("scenario must be a mapping, got %s"
                            % type(mapping).__name__)
    name = mapping.get("name", name) or "scenario"
    kind = mapping.get("kind")
    problems = []
    if kind == "tracking":
        scenario = _tracking_scenario(mapping, name, problems)
    elif kind == "traffic":
        scenario = _traffic_scenario(mapping, name, problems)
    else:
        problems.append("'kind' must be tracking | traffic, got %r" % kind)
        scenario = None
    if problems:
        raise ConfigInvalid("scenario %r is invalid:\n  %s"
                            % (name, "\n  ".join(problems)))
    return scenario
