"""Controller vector fields and the receding-horizon policy."""

import numpy as np
import pytest

from saddleflow.controllers import (ControllerGains, ControllerState,
                                    alinea_vector_field,
                                    discontinuous_projected_field,
                                    equality_pd_vector_field, mpc_policy,
                                    projected_pd_vector_field)
from saddleflow.costs import QuadraticCost
from saddleflow.errors import (DimensionMismatch, InfeasibleHorizon,
                               LimitNotSettled, UnknownLink)
from saddleflow.plant import LtiPlant, steady_state_map
from saddleflow.problem import (OutputConstraint, TimeVaryingProblem,
                                modified_gradients, solve_saddle_point)
from saddleflow.sets import InputSet


def scalar_problem(nu=0.1, input_set=None):
    plant = LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]])
    cost = QuadraticCost(Q_u=[[2.0]], r_u=[1.0], p=1)
    constraint = OutputConstraint(K=[[1.0]], e=[0.0])
    if input_set is None:
        input_set = InputSet.full(1)
    return TimeVaryingProblem(cost, constraint, input_set,
                              steady_state_map(plant), [0.0], nu, plant=plant)


def equality_problem():
    plant = LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]])
    return TimeVaryingProblem(
        QuadraticCost(Q_u=[[2.0]], r_u=[1.0], p=1),
        OutputConstraint(K=[[1.0]], e=[0.0], kind="equality"),
        InputSet.full(1), steady_state_map(plant), [0.0], nu=0.0, plant=plant)


class TestControllerGains:
    def test_positive_required(self):
        with pytest.raises(DimensionMismatch):
            ControllerGains(eps=-0.1, eta=0.1)
        with pytest.raises(DimensionMismatch):
            ControllerGains(eps=0.1, eta=0.0)

    def test_track_accessors(self):
        g = ControllerGains(eps=0.1, eta=0.2)
        assert g.for_inequality() == (0.1, 0.2)
        with pytest.raises(DimensionMismatch):
            g.for_equality()

    def test_state_round_trip(self):
        s = ControllerState(u=[1.0, 2.0], lam=[3.0])
        assert ControllerState.from_vector(s.as_vector(), 2).lam == pytest.approx([3.0])


class TestProjectedPdField:
    def test_zero_at_saddle(self):
        prob = scalar_problem(nu=0.1)
        sp = solve_saddle_point(prob, 0.0)
        z = np.concatenate([sp.u, sp.lam])
        y = prob.output_of(sp.u, 0.0)
        zdot = projected_pd_vector_field(prob, z, y, 0.0, eta=0.05)
        assert np.linalg.norm(zdot) < 1e-8

    def test_interior_equals_drift(self):
        prob = scalar_problem(nu=0.1)
        z = np.array([0.4, 0.3])
        u, lam = prob.split(z)
        y = prob.output_of(u, 0.0)
        eta = 0.05
        L_u, L_lam = modified_gradients(prob, u, y, lam, 0.0)
        zdot = projected_pd_vector_field(prob, z, y, 0.0, eta)
        assert zdot == pytest.approx(np.concatenate([-eta * L_u, eta * L_lam]),
                                     abs=1e-14)

    def test_boundary_stays_feasible_directed(self):
        # u at the top of the box with the cost pulling further up: the
        # projected step lands inside the box, so u + zdot_u stays feasible.
        prob = scalar_problem(nu=0.1, input_set=InputSet.box([0.0], [0.25]))
        z = np.array([0.25, 0.0])
        u, _ = prob.split(z)
        y = prob.output_of(u, 0.0)
        zdot = projected_pd_vector_field(prob, z, y, 0.0, eta=0.05)
        assert zdot[0] <= 1e-15
        assert prob.input_set.contains(np.array([0.25]) + zdot[:1], tol=1e-12)

    def test_lipschitz_bound_sampled(self):
        prob = scalar_problem(nu=0.1)
        eta = 0.05
        bound = 1.0 + eta * prob.lipschitz()
        rng = np.random.default_rng(7)

        def field(z):
            u, _ = prob.split(z)
            y = prob.output_of(u, 0.0)
            return projected_pd_vector_field(prob, z, y, 0.0, eta)

        for _ in range(200):
            z1 = rng.normal(scale=3.0, size=2)
            z2 = rng.normal(scale=3.0, size=2)
            z1[1] = abs(z1[1])
            z2[1] = abs(z2[1])
            lhs = np.linalg.norm(field(z1) - field(z2))
            assert lhs <= bound * np.linalg.norm(z1 - z2) + 1e-9

    def test_requires_inequality_kind(self):
        prob = equality_problem()
        with pytest.raises(ValueError):
            projected_pd_vector_field(prob, np.zeros(2), np.zeros(1), 0.0, 0.1)


class TestDiscontinuousField:
    def test_interior_equals_drift(self):
        prob = scalar_problem(nu=0.1)
        z = np.array([0.4, 0.3])
        u, lam = prob.split(z)
        y = prob.output_of(u, 0.0)
        eta = 0.05
        L_u, L_lam = modified_gradients(prob, u, y, lam, 0.0)
        out = discontinuous_projected_field(prob, z, y, 0.0, eta)
        assert out == pytest.approx(np.concatenate([-eta * L_u, eta * L_lam]),
                                    abs=1e-12)
        smooth = projected_pd_vector_field(prob, z, y, 0.0, eta)
        assert out == pytest.approx(smooth, abs=1e-12)

    def test_boundary_outward_drift_tangential(self):
        # lam = 0 with the dual drift pointing negative: the limit removes
        # the normal component, so the lam rate is exactly 0.
        prob = scalar_problem(nu=0.1)
        z = np.array([-1.0, 0.0])
        u, lam = prob.split(z)
        y = prob.output_of(u, 0.0)
        eta = 0.05
        L_u, L_lam = modified_gradients(prob, u, y, lam, 0.0)
        assert L_lam[0] < 0
        out = discontinuous_projected_field(prob, z, y, 0.0, eta)
        assert out[1] == 0.0
        assert out[0] == pytest.approx(-eta * L_u[0], abs=1e-12)

    def test_boundary_inward_drift_unchanged(self):
        # lam = 0 with the dual drift pointing positive: projection inactive.
        prob = scalar_problem(nu=0.1)
        z = np.array([1.0, 0.0])
        u, lam = prob.split(z)
        y = prob.output_of(u, 0.0)
        eta = 0.05
        L_u, L_lam = modified_gradients(prob, u, y, lam, 0.0)
        assert L_lam[0] > 0
        out = discontinuous_projected_field(prob, z, y, 0.0, eta)
        assert out[1] == pytest.approx(eta * L_lam[0], abs=1e-12)

    def test_unsettled_near_boundary(self):
        # lam sits between the last two deltas of the sequence, so the
        # quotients straddle the kink and cannot settle.
        prob = scalar_problem(nu=0.1)
        z = np.array([-1.0, 3e-8])
        u, lam = prob.split(z)
        y = prob.output_of(u, 0.0)
        with pytest.raises(LimitNotSettled):
            discontinuous_projected_field(prob, z, y, 0.0, eta=0.5)


class TestEqualityField:
    def test_zero_at_kkt_point(self):
        plant = LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[1.0]])
        prob = TimeVaryingProblem(
            QuadraticCost(Q_u=[[2.0]], r_u=[1.0], p=1),
            OutputConstraint(K=[[1.0]], e=[0.5], kind="equality"),
            InputSet.full(1), steady_state_map(plant), [0.0], nu=0.0,
            plant=plant)
        sp = solve_saddle_point(prob, 0.0)
        z = np.concatenate([sp.u, sp.lam])
        y = prob.output_of(sp.u, 0.0)
        zdot = equality_pd_vector_field(prob, z, y, 0.0, 0.3, 0.2)
        assert np.linalg.norm(zdot) < 1e-8

    def test_plugin_values_at_origin(self):
        prob = equality_problem()
        z = np.zeros(2)
        y = prob.output_of(np.zeros(1), 0.0)
        eta_u, eta_lam = 0.3, 0.2
        zdot = equality_pd_vector_field(prob, z, y, 0.0, eta_u, eta_lam)
        assert zdot == pytest.approx([2.0 * eta_u, 0.0], abs=1e-14)

    def test_multiplier_sensitivity_exact(self):
        prob = equality_problem()
        y = prob.output_of(np.array([0.2]), 0.0)
        eta_u = 0.7
        base = equality_pd_vector_field(prob, np.array([0.2, 0.0]), y, 0.0,
                                        eta_u, 0.2)
        shifted = equality_pd_vector_field(prob, np.array([0.2, 1.3]), y, 0.0,
                                           eta_u, 0.2)
        G = prob.ssmap.G
        K = prob.constraint.K_of(0.0)
        expected = -eta_u * (G.T @ K.T @ np.array([1.3]))
        assert shifted[0] - base[0] == pytest.approx(expected[0], abs=1e-14)

    def test_requires_equality_kind(self):
        with pytest.raises(ValueError):
            equality_pd_vector_field(scalar_problem(), np.zeros(2),
                                     np.zeros(1), 0.0, 0.1, 0.1)


class TestAlinea:
    def test_single_link(self):
        udot = alinea_vector_field([["l1"]], {"l1": 0.5}, {"l1": 5.0},
                                   {"l1": 6.0})
        assert udot == pytest.approx([-0.5])

    def test_setpoint_equilibrium(self):
        udot = alinea_vector_field([["l1"]], {"l1": 0.5}, {"l1": 5.0},
                                   {"l1": 5.0})
        assert udot == pytest.approx([0.0])

    def test_two_downstream_links_sum(self):
        udot = alinea_vector_field([["a", "b"]], {"a": 1.0, "b": 1.0},
                                   {"a": 1.0, "b": 0.0},
                                   {"a": 0.0, "b": 2.0})
        assert udot == pytest.approx([-1.0])

    def test_unknown_link(self):
        with pytest.raises(UnknownLink):
            alinea_vector_field([["ghost"]], {"l1": 0.5}, {"l1": 5.0},
                                {"l1": 5.0})


def ramp_problem(u_ref, e_ceiling, plant, Q_y=None, c=None):
    p = plant.p
    cost = QuadraticCost(Q_u=2.0 * np.eye(plant.m), r_u=u_ref,
                         Q_y=Q_y if Q_y is not None else np.zeros((p, p)),
                         c=c)
    constraint = OutputConstraint(K=np.eye(p), e=e_ceiling)
    return TimeVaryingProblem(cost, constraint, InputSet.nonneg(plant.m),
                              steady_state_map(plant), np.zeros(plant.q),
                              nu=0.1, plant=plant)


class TestMpcPolicy:
    def scalar_plant(self):
        return LtiPlant(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[1.0]],
                        E=[[0.0]])

    def test_horizon_shapes(self):
        plant = self.scalar_plant()
        prob = ramp_problem([0.3], [100.0], plant)
        inputs, info = mpc_policy(plant, prob, np.zeros(1), T_p=20.0, T_s=5.0,
                                  dt=1.0)
        assert info["horizon_steps"] == 20
        assert info["applied_steps"] == 5
        assert inputs.shape == (5, 1)

    def test_zero_demand_origin(self):
        plant = self.scalar_plant()
        prob = ramp_problem([0.0], [100.0], plant)
        inputs, info = mpc_policy(plant, prob, np.zeros(1), T_p=20.0, T_s=5.0,
                                  dt=1.0)
        assert info["status"] == "optimal"
        assert inputs == pytest.approx(np.zeros((5, 1)), abs=1e-10)

    def test_matches_direct_solve_when_unconstrained(self):
        # Loose ceilings, interior optimum: the iterative solve must agree
        # with the dense linear-algebra solution of the condensed QP.
        plant = self.scalar_plant()
        prob = ramp_problem([0.7], [100.0], plant, Q_y=[[0.002]], c=[-1.0])
        xhat = np.array([0.1])
        T_p, T_s, dt = 10.0, 2.0, 0.5
        inputs, info = mpc_policy(plant, prob, xhat, T_p, T_s, dt)
        assert info["status"] == "optimal"

        N = int(T_p / dt)
        A_d = np.eye(1) + dt * plant.A
        B_d = dt * plant.B
        S_x = np.vstack([np.linalg.matrix_power(A_d, k + 1) for k in range(N)])
        S_u = np.zeros((N, N))
        for k in range(N):
            for j in range(k + 1):
                S_u[k, j] = (np.linalg.matrix_power(A_d, k - j) @ B_d)[0, 0]
        Qu = 2.0 * np.eye(N)
        Qy = 0.002 * np.eye(N)
        c = -1.0 * np.ones(N)
        P = Qu + S_u.T @ Qy @ S_u
        q = -Qu @ (0.7 * np.ones(N)) + S_u.T @ (Qy @ S_x @ xhat + c)
        U_direct = np.linalg.solve(P, -q)
        assert np.min(U_direct) > 0
        assert inputs[:, 0] == pytest.approx(U_direct[:int(T_s / dt)],
                                             abs=1e-6)

    def test_infeasible_horizon_raises_or_softens(self):
        # dt = 0.25 gives A_d = 0.75, so from xhat = 5 the uncontrolled
        # rollout still sits above the ceiling 1 after the first step.
        plant = self.scalar_plant()
        prob = ramp_problem([0.3], [1.0], plant)
        xhat = np.array([5.0])
        with pytest.raises(InfeasibleHorizon):
            mpc_policy(plant, prob, xhat, 5.0, 1.0, 0.25,
                       on_infeasible="raise")
        inputs, info = mpc_policy(plant, prob, xhat, 5.0, 1.0, 0.25)
        assert info["status"] == "softened"
        assert info["infeasible_horizon"]
        assert np.min(inputs) >= 0.0

    def test_validation(self):
        plant = self.scalar_plant()
        prob = ramp_problem([0.3], [100.0], plant)
        with pytest.raises(DimensionMismatch):
            mpc_policy(plant, prob, np.zeros(1), T_p=5.0, T_s=10.0, dt=1.0)
        with pytest.raises(DimensionMismatch):
            mpc_policy(plant, prob, np.zeros(1), T_p=20.0, T_s=5.0, dt=0.7)

    def test_nonnegative_inputs_always(self):
        plant = self.scalar_plant()
        prob = ramp_problem([0.5], [2.0], plant)
        rng = np.random.default_rng(3)
        for _ in range(5):
            xhat = rng.uniform(0.0, 4.0, size=1)
            inputs, _ = mpc_policy(plant, prob, xhat, 10.0, 2.0, 0.5)
            assert np.min(inputs) >= 0.0
