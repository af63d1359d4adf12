"""Acceptance gate: the nine headline checks, one verdict line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines
alongside the pytest statuses.  Every check prints exactly one line of the
form `[PASS] criterion N: ...` or `[FAIL] criterion N: ...` and then
asserts, so a red test always comes with its printed counterpart.

The tracking and traffic checks run the shipped scenario configs end to
end; the remaining checks build their fixtures inline.  Wall-clock limits
are part of the acceptance conditions and are asserted alongside the
numerical tolerances.
"""

import json
import time
from pathlib import Path

import numpy as np

from saddleflow import (ControllerGains, InputSet, LtiPlant, OutputConstraint,
                        QuadraticCost, TimeVaryingProblem, certify_equality,
                        certify_inequality, check_stability,
                        estimate_constants, integrate, load_config,
                        load_scenario, regularization_error_check,
                        reduced_controller_run, rk4, scenario_from_mapping,
                        solve_saddle_point, steady_state_map, tracking_report)
from saddleflow.experiments import (run_alinea_traffic, run_mpc_traffic,
                                    run_pd_traffic)
from saddleflow.traffic import (ctm_vector_field, example_network,
                                freeflow_linearization)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _verdict(number, description, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    extra = " [%s]" % detail if detail else ""
    print("\n[%s] criterion %d: %s%s" % (tag, number, description, extra))
    assert ok, "criterion %d: %s%s" % (number, description, extra)


def _scalar_benchmark(nu):
    # xdot = -x + u, y = x, phi(u) = (u - 1)^2, constraint y <= 0
    plant = LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]])
    return TimeVaryingProblem(
        QuadraticCost(Q_u=[[2.0]], r_u=[1.0], p=1),
        OutputConstraint(K=[[1.0]], e=[0.0]),
        InputSet.full(1), steady_state_map(plant), [0.0], nu, plant=plant)


def _certificate(scenario):
    plant_cert = check_stability(scenario.plant)
    if scenario.problem.kind == "inequality":
        eps, eta = scenario.gains.for_inequality()
        return certify_inequality(scenario.plant, plant_cert,
                                  scenario.problem, eta, eps)
    eps, eta_u, eta_lam = scenario.gains.for_equality()
    return certify_equality(scenario.plant, plant_cert, scenario.problem,
                            eta_u, eta_lam, eps)


def _run_scenario(scenario):
    report = _certificate(scenario)
    log = integrate(scenario.plant, scenario.problem, scenario.controller,
                    scenario.gains, scenario.x0, scenario.z0,
                    scenario.t_span, scenario.dt,
                    log_every=scenario.log_every, report=report)
    return report, log, tracking_report(log, report)


def test_criterion_1_regularization_error_bound():
    start = time.perf_counter()
    ok = True
    for nu in (1e-3, 1e-2, 1e-1):
        check = regularization_error_check(_scalar_benchmark(nu), 0.0,
                                           slack=1e-8)
        ok = ok and check["passed"]
    check = regularization_error_check(_scalar_benchmark(0.1), 0.0,
                                       slack=1e-8)
    # closed forms at nu = 0.1: lhs = 7/36, rhs = nu/2 lam*^2 = 0.2
    ok = ok and abs(check["lhs"] - 7.0 / 36.0) < 1e-9
    ok = ok and abs(check["rhs"] - 0.2) < 1e-9
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 1.0
    _verdict(1, "regularized-saddle error bound holds for nu in "
             "{1e-3, 1e-2, 1e-1} with closed-form sides at nu = 0.1", ok,
             "lhs %.6f <= rhs %.6f, %.2fs" % (check["lhs"], check["rhs"],
                                              elapsed))


def test_criterion_2_certified_tracking_envelopes():
    ok = True
    details = []
    for name in ("static_scalar", "two_state"):
        start = time.perf_counter()
        scenario = load_scenario(str(CONFIGS / (name + ".json")))
        report, log, scores = _run_scenario(scenario)
        elapsed = time.perf_counter() - start
        settle = 20.0 / report.rho_xi
        tail = log.err[log.t >= log.t[0] + settle]
        terminal = float(np.max(tail)) if tail.size else np.inf
        ok = ok and report.passed
        ok = ok and scores["max_violation"] <= 0.0
        ok = ok and terminal < 1e-4
        ok = ok and elapsed < 10.0
        details.append("%s viol %.3g term %.3g %.1fs"
                       % (name, scores["max_violation"], terminal, elapsed))
    _verdict(2, "certified envelope bounds the tracking error at every "
             "sample and the error settles below 1e-4", ok,
             "; ".join(details))


def test_criterion_3_iss_bound_and_frequency_halving():
    start = time.perf_counter()
    scenario = load_scenario(str(CONFIGS / "sinusoid_iss.json"))
    report, log, scores = _run_scenario(scenario)
    bound = (report.gamma_z * scores["sup_zdot"]
             + report.gamma_w * scores["sup_wdot"])
    mapping = load_config(str(CONFIGS / "sinusoid_iss.json"))
    mapping["disturbance"]["frequency"] = 0.05
    halved = scenario_from_mapping(mapping, name="sinusoid_iss_half")
    _, _, scores_half = _run_scenario(halved)
    elapsed = time.perf_counter() - start
    ok = scores["asymptotic_error"] <= bound
    ok = ok and scores_half["asymptotic_error"] <= scores["asymptotic_error"] + 1e-9
    ok = ok and elapsed < 30.0
    _verdict(3, "sinusoidal-disturbance asymptotic error sits under the "
             "input-to-state bound and does not grow when the frequency "
             "halves", ok,
             "asymp %.4f <= bound %.4f, halved %.4f, %.1fs"
             % (scores["asymptotic_error"], bound,
                scores_half["asymptotic_error"], elapsed))


def test_criterion_4_equality_track_certificate():
    start = time.perf_counter()
    scenario = load_scenario(str(CONFIGS / "equality_scalar.json"))
    report, log, scores = _run_scenario(scenario)
    saddle = solve_saddle_point(scenario.problem, 0.0)
    elapsed = time.perf_counter() - start
    ok = report.pz_pd and report.lmin_Pz > 0.0
    ok = ok and report.passed
    ok = ok and scores["max_violation"] <= 0.0
    ok = ok and saddle.kkt_residual < 1e-6
    ok = ok and elapsed < 10.0
    _verdict(4, "equality track: quadratic-form matrix is positive "
             "definite, envelope holds at all samples, stationarity "
             "residual below 1e-6", ok,
             "eig(P_z) >= %.3g, viol %.3g, kkt %.2g, %.2fs"
             % (report.lmin_Pz, scores["max_violation"],
                saddle.kkt_residual, elapsed))


def test_criterion_5_sampled_operator_constants():
    start = time.perf_counter()
    problems = [
        _scalar_benchmark(0.1),
        load_scenario(str(CONFIGS / "two_state.json")).problem,
        load_scenario(str(CONFIGS / "equality_scalar.json")).problem,
    ]
    ok = True
    worst = np.inf
    for problem in problems:
        est = estimate_constants(problem, sample_count=1000, slack=1e-8)
        ok = ok and est["mu_hat"] >= est["mu"] - 1e-8
        ok = ok and est["ell_hat"] <= est["ell"] + 1e-8
        worst = min(worst, est["mu_hat"] - est["mu"],
                    est["ell"] - est["ell_hat"])
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 1.0
    _verdict(5, "1000 sampled operator pairs per problem respect the "
             "analytic monotonicity and Lipschitz constants", ok,
             "worst slack %.3g, %.2fs" % (worst, elapsed))


def test_criterion_6_forward_invariance_and_jump():
    start = time.perf_counter()
    plant = LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]])
    # box face at u = 0.05 is reached in finite time; constraint stays slack
    problem = TimeVaryingProblem(
        QuadraticCost(Q_u=[[2.0]], r_u=[1.0], p=1),
        OutputConstraint(K=[[1.0]], e=[5.0]),
        InputSet.box([0.0], [0.05]), steady_state_map(plant), [0.0],
        nu=0.1, plant=plant)
    dt = 1e-3
    _, Z_s, rates_s = reduced_controller_run(problem, [0.0, 0.0], 2.0, dt,
                                             0.5, field="projected")
    _, Z_d, rates_d = reduced_controller_run(problem, [0.0, 0.0], 2.0, dt,
                                             0.5, field="discontinuous")
    tol = 1e-9
    ok = True
    for Z in (Z_s, Z_d):
        ok = ok and float(np.min(Z[:, 0])) >= -tol
        ok = ok and float(np.max(Z[:, 0])) <= 0.05 + tol
        ok = ok and float(np.min(Z[:, 1])) >= -tol
    jump_d = float(np.max(np.abs(np.diff(rates_d[:, 0]))))
    jump_s = float(np.max(np.abs(np.diff(rates_s[:, 0]))))
    ok = ok and jump_d > 10.0 * jump_s
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 5.0
    _verdict(6, "both reduced flows stay inside the input set to 1e-9 and "
             "the one-sided field shows a rate jump over 10x the smooth "
             "field's variation", ok,
             "jump %.3g vs %.3g, %.2fs" % (jump_d, jump_s, elapsed))


def test_criterion_7_traffic_case_study():
    start = time.perf_counter()

    def execute(name):
        scenario = load_scenario(str(CONFIGS / (name + ".json")))
        if scenario.controller == "projected_pd":
            return scenario, run_pd_traffic(
                scenario.network, scenario.problem, scenario.eta,
                scenario.x0, scenario.z0, scenario.t_span, scenario.dt,
                noise=scenario.noise, log_every=scenario.log_every)
        if scenario.controller == "alinea":
            return scenario, run_alinea_traffic(
                scenario.network, scenario.gain, scenario.x0, scenario.u0,
                scenario.t_span, scenario.dt, noise=scenario.noise,
                log_every=scenario.log_every)
        return scenario, run_mpc_traffic(
            scenario.network, scenario.problem, scenario.x0,
            scenario.t_span, scenario.dt, noise=scenario.noise,
            log_every=scenario.log_every, **scenario.mpc)

    scenario, pd = execute("traffic_pd")
    _, alinea = execute("traffic_alinea")
    _, pd_noise = execute("traffic_pd_noise")
    _, mpc = execute("traffic_mpc_noise")
    elapsed = time.perf_counter() - start

    ceiling_norm = float(np.linalg.norm(scenario.network.ceilings))
    ok = pd.mean_throughput() >= alinea.mean_throughput()
    ok = ok and pd.post_transient_violation() < 0.05 * ceiling_norm
    ok = ok and pd_noise.violation_integral() <= mpc.violation_integral()
    ok = ok and pd_noise.compute_time <= mpc.compute_time
    ok = ok and elapsed < 120.0
    _verdict(7, "metering case study: saddle flow matches or beats the "
             "local integral law on throughput with near-zero settled "
             "violation, and beats receding horizon on violation and "
             "compute under noise", ok,
             "flow %.4f >= %.4f, settled viol %.3g < %.3g; noise viol "
             "%.3f <= %.3f, compute %.2fs <= %.2fs; total %.1fs"
             % (pd.mean_throughput(), alinea.mean_throughput(),
                pd.post_transient_violation(), 0.05 * ceiling_norm,
                pd_noise.violation_integral(), mpc.violation_integral(),
                pd_noise.compute_time, mpc.compute_time, elapsed))


def test_criterion_8_freeflow_linearization_agreement():
    start = time.perf_counter()
    network = example_network()
    plant = freeflow_linearization(network)
    u = np.array([0.5, 0.02])

    def nonlinear(t, x):
        return ctm_vector_field(network, x, u)

    def linear(t, x):
        return plant.A @ x + plant.B @ u

    x0 = np.zeros(network.n)
    _, X_ctm = rk4(nonlinear, x0, (0.0, 5.0), 0.01)
    _, X_lin = rk4(linear, x0, (0.0, 5.0), 0.01)
    gap = float(np.max(np.abs(X_ctm - X_lin)))
    elapsed = time.perf_counter() - start
    ok = gap < 1e-8 and elapsed < 5.0
    _verdict(8, "cell-transmission trajectories match the free-flow "
             "linearization to 1e-8 on a feasible-demand run", ok,
             "sup gap %.3g, %.2fs" % (gap, elapsed))


def test_criterion_9_integrator_order_and_lyapunov_residuals():
    start = time.perf_counter()
    problem = _scalar_benchmark(2.0)

    def terminal(dt):
        _, Z, _ = reduced_controller_run(problem, [2.0, 1.0], 1.0, dt, 0.2,
                                         field="projected")
        return Z[-1]

    reference = terminal(0.05 / 8.0)
    err_coarse = float(np.linalg.norm(terminal(0.05) - reference))
    err_fine = float(np.linalg.norm(terminal(0.025) - reference))
    ratio = err_coarse / err_fine
    ok = 16.0 * 0.7 <= ratio <= 16.0 * 1.3

    worst = 0.0
    plants = [
        LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]]),
        load_scenario(str(CONFIGS / "two_state.json")).plant,
        freeflow_linearization(example_network()),
    ]
    for plant in plants:
        cert = check_stability(plant)
        worst = max(worst, cert.residual)
    ok = ok and worst < 1e-10
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 1.0
    _verdict(9, "integrator error shrinks 16x per halving and every "
             "benchmark Lyapunov solve closes below 1e-10", ok,
             "ratio %.2f, residual %.2g, %.2fs" % (ratio, worst, elapsed))
