import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from anikep import (
    REASON_ANGLE,
    REASON_CONVERGED,
    REASON_HORIZON,
    REASON_RADIUS,
    REASON_STEP_FAILURE,
    AngularPotential,
    CartesianState,
    GeneralState,
    McGeheeState,
    PerturbationSpec,
    PotentialSpec,
    energy_residuals,
    field_3d,
    field_collision,
    field_general,
    from_mcgehee,
    general_from_planar,
    grad_V,
    integrate,
    lift_planar,
    physical_time,
    shell_residual,
    speed_scale,
    sundman_values,
    to_mcgehee,
    write_trajectory_csv,
)
from anikep.angles import wrap_signed
from support import random_spec


def random_shell_state(spec, h, rng, r_range=(0.1, 0.6)):
    """Random planar state; r kept small enough to stay inside the Hill region."""
    for _ in range(100):
        r = rng.uniform(*r_range)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        radicand = 2.0 * spec.angular.value(theta) + 2.0 * h * r**spec.alpha
        if spec.perturbation is not None:
            w = spec.perturbation
            radicand += 2.0 * w.c * r ** (spec.alpha - w.beta) * w.g.value(theta)
        if radicand > 0.1:
            return McGeheeState(r=r, theta=theta, phi=phi)
    raise AssertionError("could not draw a shell state inside the Hill region")


class TestTransforms:
    def test_round_trip_from_mcgehee(self, benchmark_spec, rng):
        h = -0.5
        for _ in range(50):
            state = random_shell_state(benchmark_spec, h, rng)
            cart = from_mcgehee(benchmark_spec, h, state)
            back = to_mcgehee(benchmark_spec, h, cart)
            assert abs(back.r - state.r) <= 1e-12
            assert abs(wrap_signed(back.theta - state.theta)) <= 1e-12
            assert abs(wrap_signed(back.phi - state.phi)) <= 1e-12

    def test_round_trip_perturbed(self, benchmark_spec, rng):
        spec = PotentialSpec(
            alpha=benchmark_spec.alpha,
            angular=benchmark_spec.angular,
            perturbation=PerturbationSpec(
                c=0.3, beta=0.4, g=AngularPotential(a0=1.0, cos_coeffs=(0.5,))
            ),
        )
        h = -0.4
        for _ in range(20):
            state = random_shell_state(spec, h, rng)
            back = to_mcgehee(spec, h, from_mcgehee(spec, h, state))
            assert abs(back.r - state.r) <= 1e-12
            assert abs(wrap_signed(back.phi - state.phi)) <= 1e-12

    def test_lift_is_on_shell(self, benchmark_spec, rng):
        h = -0.5
        for _ in range(20):
            state = random_shell_state(benchmark_spec, h, rng)
            cart = from_mcgehee(benchmark_spec, h, state)
            v = 0.5 * float(cart.p @ cart.p)
            from anikep import eval_V

            assert abs(v - eval_V(benchmark_spec, cart.q) - h) <= 1e-12

    def test_to_mcgehee_rejects_off_shell(self, benchmark_spec):
        h = -0.5
        state = McGeheeState(r=0.5, theta=0.3, phi=1.0)
        cart = from_mcgehee(benchmark_spec, h, state)
        bad = CartesianState(q=cart.q, p=cart.p * 1.01)
        with pytest.raises(ValueError, match="shell"):
            to_mcgehee(benchmark_spec, h, bad)

    def test_to_mcgehee_rejects_degenerate(self, benchmark_spec):
        with pytest.raises(ValueError):
            to_mcgehee(benchmark_spec, -0.5, CartesianState(q=(0.0, 0.0), p=(1.0, 0.0)))
        with pytest.raises(ValueError, match="momentum"):
            to_mcgehee(benchmark_spec, -0.5, CartesianState(q=(1.0, 0.0), p=(0.0, 0.0)))

    def test_from_mcgehee_rejects_collision_and_hill_exterior(self, benchmark_spec):
        with pytest.raises(ValueError):
            from_mcgehee(benchmark_spec, -0.5, McGeheeState(r=0.0, theta=0.0, phi=0.0))
        # at theta = 0, U = 1, h = -0.5: 2U + 2 h r = 0 at r = 2
        with pytest.raises(ValueError, match="Hill"):
            from_mcgehee(benchmark_spec, -0.5, McGeheeState(r=3.0, theta=0.0, phi=0.0))

    def test_angles_normalized_on_construction(self):
        state = McGeheeState(r=1.0, theta=-0.25, phi=7.0)
        assert 0.0 <= state.theta < 2.0 * math.pi
        assert 0.0 <= state.phi < 2.0 * math.pi
        assert abs(state.theta - (2.0 * math.pi - 0.25)) <= 1e-12

    def test_general_state_validation(self):
        with pytest.raises(ValueError, match="\\|s\\|"):
            GeneralState(r=0.1, v=0.0, s=np.array([1.1, 0.0]), u=np.zeros(2))
        st = GeneralState(
            r=0.1, v=0.2, s=np.array([1.0, 1e-9]), u=np.array([1e-9, 0.5])
        )
        assert abs(np.linalg.norm(st.s) - 1.0) <= 1e-15
        assert abs(st.u @ st.s) <= 1e-15


class TestFields:
    def test_planar_field_example(self, kepler_spec):
        # isotropic U = 1, alpha = 1, h = -1/2 at (1, 0, pi/2): circular values
        f = field_3d(kepler_spec, -0.5, (1.0, 0.0, 0.5 * math.pi))
        assert np.allclose(f, [0.0, 1.0, 1.0], atol=1e-14)

    def test_collision_field_example(self, kepler_spec):
        f = field_collision(kepler_spec, 0.0, 0.5 * math.pi)
        assert np.allclose(f, [2.0, 1.0], atol=1e-14)

    def test_collision_field_matches_planar_at_r_zero(self, benchmark_spec, rng):
        for _ in range(25):
            th = rng.uniform(0.0, 2.0 * math.pi)
            ph = rng.uniform(0.0, 2.0 * math.pi)
            f3 = field_3d(benchmark_spec, -0.5, (0.0, th, ph))
            f2 = field_collision(benchmark_spec, th, ph)
            assert f3[0] == 0.0
            # energy terms vanish with r, so h cannot enter at r = 0
            f3b = field_3d(benchmark_spec, 3.7, (0.0, th, ph))
            assert np.allclose(f3[1:], f2, rtol=1e-14, atol=1e-14)
            assert np.allclose(f3b[1:], f2, rtol=1e-14, atol=1e-14)

    def test_field_matches_cartesian_chain_rule(self, benchmark_spec, rng):
        """Every planar field component against the lifted Newtonian flow.

        dr/dt = (q.p)/r, dtheta/dt = (q x p)/r^2, dphi/dt = (p x grad V)/|p|^2,
        each multiplied by dt/dtau = z r^(1+alpha/2).
        """
        perturbed = PotentialSpec(
            alpha=benchmark_spec.alpha,
            angular=benchmark_spec.angular,
            perturbation=PerturbationSpec(
                c=0.35,
                beta=0.4,
                g=AngularPotential(a0=0.5, cos_coeffs=(0.3,), sin_coeffs=(-0.2,)),
            ),
        )
        for spec, h in [(benchmark_spec, -0.5), (perturbed, -0.35), (benchmark_spec, 0.25)]:
            for _ in range(50):
                state = random_shell_state(spec, h, rng)
                f = field_3d(spec, h, state)
                cart = from_mcgehee(spec, h, state)
                q, p = cart.q, cart.p
                r = state.r
                g = grad_V(spec, q)
                rate = speed_scale(spec, h, r, state.theta) * r ** (
                    1.0 + 0.5 * spec.alpha
                )
                dr = (q @ p) / r * rate
                dth = (q[0] * p[1] - q[1] * p[0]) / r**2 * rate
                dph = (p[0] * g[1] - p[1] * g[0]) / (p @ p) * rate
                ref = np.array([dr, dth, dph])
                assert np.allclose(f, ref, rtol=1e-10, atol=1e-12)

    def test_general_field_equilibrium_is_fixed(self, benchmark_spec):
        # theta = 0 is a critical angle of the benchmark potential
        v_star = -math.sqrt(2.0 * benchmark_spec.angular.value(0.0))
        state = GeneralState(r=0.0, v=v_star, s=np.array([1.0, 0.0]), u=np.zeros(2))
        f = field_general(benchmark_spec, -0.5, state)
        assert np.max(np.abs(f)) <= 1e-14

    def test_general_field_shell_derivative_vanishes(self, rng):
        """d/dtau of (1/2)(|u|^2+v^2) - V(s) - r^alpha h is identically zero."""
        for _ in range(30):
            spec = random_spec(rng)
            h = rng.uniform(-1.0, 0.5)
            th = rng.uniform(0.0, 2.0 * math.pi)
            s = np.array([math.cos(th), math.sin(th)])
            t_hat = np.array([-s[1], s[0]])
            r = rng.uniform(0.0, 0.5)
            budget = 2.0 * (spec.angular.value(th) + r**spec.alpha * h)
            if budget <= 0.0:
                continue
            v = rng.uniform(-1.0, 1.0) * math.sqrt(budget)
            u = math.copysign(math.sqrt(budget - v * v), rng.uniform(-1, 1)) * t_hat
            y = np.concatenate(([r, v], s, u))
            f = field_general(spec, h, y)
            # chain rule: u.du + v.dv - U'(th) dth - alpha r^(alpha-1) h dr
            up = spec.angular.derivative(th)
            d_shell = (
                float(u @ f[4:6])
                + v * f[1]
                - up * (s[0] * f[3] - s[1] * f[2])
                - (spec.alpha * r ** (spec.alpha - 1.0) * h * f[0] if r > 0 else 0.0)
            )
            assert abs(d_shell) <= 1e-10 * max(1.0, budget)

    def test_general_matches_planar_for_d2(self, benchmark_spec, rng):
        """The d = 2 general field reproduces the planar one up to the factor z."""
        h = -0.5
        for _ in range(100):
            state = random_shell_state(benchmark_spec, h, rng)
            z = speed_scale(benchmark_spec, h, state.r, state.theta)
            gen = general_from_planar(benchmark_spec, h, state)
            fg = field_general(benchmark_spec, h, gen)
            fp = field_3d(benchmark_spec, h, state)
            s, u = gen.s, gen.u
            dr = fg[0]
            ds = fg[2:4]
            du = fg[4:6]
            dtheta = s[0] * ds[1] - s[1] * ds[0]
            w = gen.v * s + u
            dw = fg[1] * s + gen.v * ds + du
            dphi = (w[0] * dw[1] - w[1] * dw[0]) / float(w @ w)
            ref = z * np.array([dr, dtheta, dphi])
            assert np.allclose(fp, ref, rtol=1e-9, atol=1e-11)

    def test_general_rejects_perturbation(self, benchmark_spec):
        spec = PotentialSpec(
            alpha=1.0,
            angular=benchmark_spec.angular,
            perturbation=PerturbationSpec(c=0.1, beta=0.0, g=AngularPotential(a0=1.0)),
        )
        state = GeneralState(r=0.1, v=0.0, s=np.array([1.0, 0.0]), u=np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="unperturbed"):
            field_general(spec, -0.5, state)

    def test_d3_field_conserves_shell(self, rng):
        spec = PotentialSpec(
            alpha=1.2, angular=AngularPotential(a0=1.5, cos_coeffs=(0.2, 0.1))
        )
        h = -0.3
        s = np.array([0.3, 0.8, 0.52])
        s /= np.linalg.norm(s)
        raw = np.array([0.1, -0.4, 0.9])
        u_dir = raw - (raw @ s) * s
        u_dir /= np.linalg.norm(u_dir)
        r = 0.2
        polar = math.acos(s[0])
        budget = 2.0 * (spec.angular.value(polar) + r**spec.alpha * h)
        v = 0.4 * math.sqrt(budget)
        u = math.sqrt(budget - v * v) * u_dir
        state = GeneralState(r=r, v=v, s=s, u=u)
        assert abs(shell_residual(spec, h, state)) <= 1e-12
        traj = integrate(spec, h, state, horizon=15.0, rtol=1e-11, atol=1e-13)
        assert traj.reason == REASON_HORIZON
        res = energy_residuals(spec, h, traj)
        assert np.max(np.abs(res)) <= 1e-10 * 15.0
        norms = np.linalg.norm(traj.states[:, 2:5], axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-14


class TestIntegration:
    def test_horizon_termination(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        traj = integrate(benchmark_spec, -0.5, state, horizon=3.0)
        assert traj.reason == REASON_HORIZON
        assert abs(traj.taus[-1] - 3.0) <= 1e-12
        assert np.all(np.diff(traj.taus) > 0.0)

    def test_energy_residual_small(self, benchmark_spec, rng):
        h = -0.5
        for _ in range(10):
            state = random_shell_state(benchmark_spec, h, rng)
            traj = integrate(benchmark_spec, h, state, horizon=10.0)
            res = energy_residuals(benchmark_spec, h, traj)
            assert np.max(np.abs(res)) <= 1e-8

    def test_collision_manifold_is_exactly_invariant(self, benchmark_spec):
        state = McGeheeState(r=0.0, theta=0.7, phi=2.0)
        traj = integrate(benchmark_spec, -0.5, state, horizon=8.0)
        assert np.all(traj.states[:, 0] == 0.0)

    def test_shell_constraint_general_long_run(self, benchmark_spec):
        state = general_from_planar(
            benchmark_spec, -0.5, McGeheeState(r=0.4, theta=0.5, phi=2.2)
        )
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=20.0, rtol=1e-11, atol=1e-13
        )
        res = energy_residuals(benchmark_spec, -0.5, traj)
        assert np.max(np.abs(res)) <= 1e-10 * 20.0

    def test_wrong_tangential_coefficient_drifts(self, benchmark_spec):
        """Replacing (2 - alpha)/2 by (2 - alpha)/alpha breaks the shell.

        Integrated with an independent reference integrator so the failure is
        attributable to the coefficient, not to this package's stepper.
        """
        spec = benchmark_spec
        alpha, h = spec.alpha, -0.5
        state = general_from_planar(spec, h, McGeheeState(r=0.4, theta=0.5, phi=2.2))

        def wrong_rhs(_, y):
            r = max(y[0], 0.0)
            v = y[1]
            s = y[2:4]
            u = y[4:6]
            th = math.atan2(s[1], s[0])
            val = spec.angular.value(th)
            grad_t = spec.angular.derivative(th) * np.array([-s[1], s[0]])
            u2 = float(u @ u)
            return np.concatenate(
                (
                    [r * v, 0.5 * alpha * v * v + u2 - alpha * val],
                    u,
                    -((2.0 - alpha) / alpha) * v * u - u2 * s + grad_t,
                )
            )

        sol = solve_ivp(
            wrong_rhs, (0.0, 10.0), state.as_array(), rtol=1e-9, atol=1e-10
        )
        end = sol.y[:, -1]
        drift = abs(shell_residual(spec, h, end) - shell_residual(spec, h, state))
        assert drift > 1e-4

    def test_homothetic_orbit_keeps_angles_fixed(self, benchmark_spec):
        """Along theta* = 0 with phi = theta + pi, both angles are constant."""
        state = McGeheeState(r=0.5, theta=0.0, phi=math.pi)
        traj = integrate(benchmark_spec, -0.5, state, horizon=10.0)
        assert traj.reason == REASON_HORIZON
        assert np.max(np.abs(traj.states[:, 1])) <= 1e-8
        assert np.max(np.abs(traj.states[:, 2] - math.pi)) <= 1e-8
        r = traj.states[:, 0]
        assert np.all(np.diff(r) < 0.0)

    def test_scaling_invariance(self, benchmark_spec):
        """(r, h) -> (lam r, lam^-alpha h) maps orbits to orbits at the same tau."""
        lam = 0.5
        alpha = benchmark_spec.alpha
        h = -0.5
        state = McGeheeState(r=0.4, theta=1.1, phi=2.6)
        scaled = McGeheeState(r=lam * 0.4, theta=1.1, phi=2.6)
        opts = dict(rtol=1e-11, atol=1e-13, max_step=0.05)
        traj_a = integrate(benchmark_spec, h, state, horizon=4.0, **opts)
        traj_b = integrate(benchmark_spec, h / lam**alpha, scaled, horizon=4.0, **opts)
        for tau in np.linspace(0.1, 3.9, 17):
            ya = traj_a.sample(tau)
            yb = traj_b.sample(tau)
            assert abs(yb[0] - lam * ya[0]) <= 1e-7 * max(1.0, ya[0])
            assert abs(yb[1] - ya[1]) <= 1e-7
            assert abs(yb[2] - ya[2]) <= 1e-7
        # physical clocks relate by lam^(1 + alpha/2)
        ta = physical_time(benchmark_spec, h, traj_a)[-1]
        tb = physical_time(benchmark_spec, h / lam**alpha, traj_b)[-1]
        assert abs(tb - lam ** (1.0 + 0.5 * alpha) * ta) <= 1e-6 * ta

    def test_moment_of_inertia_convex_inside_lj_radius(self, benchmark_spec):
        """r(t)^2 has nonnegative second differences in physical time."""
        state = McGeheeState(r=0.5, theta=0.0, phi=math.pi)
        traj = integrate(benchmark_spec, -0.5, state, horizon=8.0, max_step=0.05)
        t = physical_time(benchmark_spec, -0.5, traj)
        i_vals = traj.states[:, 0] ** 2
        d1 = np.diff(i_vals) / np.diff(t)
        # slopes of a convex function are nondecreasing
        assert np.all(np.diff(d1) >= -1e-7)

    def test_backward_returns_to_start(self, benchmark_spec):
        h = -0.5
        start = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        fwd = integrate(benchmark_spec, h, start, horizon=3.0)
        end = McGeheeState(*fwd.states[-1])
        back = integrate(benchmark_spec, h, end, horizon=3.0, backward=True)
        assert back.backward
        assert np.max(np.abs(back.states[-1] - start.as_array())) <= 1e-6

    def test_dense_output_matches_nodes_and_interior(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        traj = integrate(benchmark_spec, -0.5, state, horizon=2.0)
        for i in (0, len(traj) // 2, len(traj) - 1):
            assert np.allclose(traj.sample(traj.taus[i]), traj.states[i], atol=1e-12)
        fine = integrate(benchmark_spec, -0.5, state, horizon=2.0, max_step=1e-3)
        for tau in (0.37, 1.001, 1.93):
            coarse = traj.sample(tau)
            ref = fine.sample(tau)
            assert np.max(np.abs(coarse - ref)) <= 1e-6
        with pytest.raises(ValueError):
            traj.sample(2.5)


class TestEvents:
    def test_convergence_along_homothetic_ray(self, benchmark_spec):
        target = McGeheeState(r=0.0, theta=0.0, phi=math.pi)
        state = McGeheeState(r=0.5, theta=0.0, phi=math.pi)
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=40.0,
            equilibrium=target, eps_eq=1e-6, dwell=5,
        )
        assert traj.reason == REASON_CONVERGED
        assert traj.converged_tau is not None and 0.0 < traj.converged_tau < 40.0
        assert traj.min_event_distance < 1e-6
        assert traj.states[-1, 0] < 1e-6

    def test_convergence_to_spiral_sink_on_collision_manifold(self, benchmark_spec):
        # theta* = pi/2 has U'' < 0, so the k = 0 equilibrium is a spiral sink
        target = McGeheeState(r=0.0, theta=0.5 * math.pi, phi=0.5 * math.pi)
        state = McGeheeState(r=0.0, theta=0.5 * math.pi + 0.08, phi=0.5 * math.pi - 0.03)
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=80.0,
            equilibrium=target, eps_eq=1e-6, dwell=5,
        )
        assert traj.reason == REASON_CONVERGED
        assert abs(wrap_signed(traj.states[-1, 1] - target.theta)) < 1e-6

    def test_radius_window_exit_outward(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.3)
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=50.0, r_window=(1e-10, 0.8)
        )
        assert traj.reason == REASON_RADIUS
        assert traj.detail == "r_max"
        assert abs(traj.states[-1, 0] - 0.8) <= 1e-6

    def test_radius_window_exit_toward_collision(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.3 + math.pi)
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=50.0, r_window=(0.01, 2.0)
        )
        assert traj.reason == REASON_RADIUS
        assert "r_min" in traj.detail and "trapping" in traj.detail
        assert abs(traj.states[-1, 0] - 0.01) <= 1e-6

    def test_angular_window_exit(self, benchmark_spec):
        state = McGeheeState(r=0.0, theta=0.0, phi=0.5 * math.pi)
        traj = integrate(
            benchmark_spec, -0.5, state, horizon=50.0, theta_window=(0.0, 0.3)
        )
        assert traj.reason == REASON_ANGLE
        assert abs(abs(wrap_signed(traj.states[-1, 1])) - 0.3) <= 1e-6

    def test_step_budget_exhaustion_reported(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        traj = integrate(benchmark_spec, -0.5, state, horizon=1e6, max_steps=5)
        assert traj.reason == REASON_STEP_FAILURE
        assert "step count" in traj.detail


class TestSundman:
    def test_monotone_on_collision_orbits(self, benchmark_spec, rng):
        for _ in range(50):
            th = rng.uniform(0.0, 2.0 * math.pi)
            ph = th + rng.uniform(0.05, math.pi - 0.05)
            traj = integrate(
                benchmark_spec, -0.5, McGeheeState(r=0.0, theta=th, phi=ph),
                horizon=30.0,
            )
            vals = sundman_values(benchmark_spec, traj)
            assert np.all(np.diff(vals) >= -1e-9)

    def test_range_is_pm_sqrt_u(self, benchmark_spec):
        traj = integrate(
            benchmark_spec, -0.5, McGeheeState(r=0.0, theta=1.0, phi=2.5),
            horizon=40.0,
        )
        vals = sundman_values(benchmark_spec, traj)
        u_max = benchmark_spec.angular.max_value()
        assert np.all(np.abs(vals) <= math.sqrt(u_max) + 1e-12)
        # late-time value approaches +sqrt(U) at the limiting angle
        assert vals[-1] > 0.0


class TestPhysicalTime:
    def test_circular_kepler_period(self, kepler_spec):
        state = McGeheeState(r=1.0, theta=0.0, phi=0.5 * math.pi)
        traj = integrate(kepler_spec, -0.5, state, horizon=2.0 * math.pi)
        t = physical_time(kepler_spec, -0.5, traj)
        assert abs(t[-1] - 2.0 * math.pi) <= 1e-6
        assert abs(traj.states[-1, 1] - 2.0 * math.pi) <= 1e-6
        assert np.max(np.abs(traj.states[:, 0] - 1.0)) <= 1e-9

    def test_time_frozen_on_collision_manifold(self, benchmark_spec):
        traj = integrate(
            benchmark_spec, -0.5, McGeheeState(r=0.0, theta=0.3, phi=1.0), horizon=5.0
        )
        t = physical_time(benchmark_spec, -0.5, traj)
        assert np.all(t == 0.0)

    def test_backward_times_decrease(self, benchmark_spec):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        traj = integrate(benchmark_spec, -0.5, state, horizon=2.0, backward=True)
        t = physical_time(benchmark_spec, -0.5, traj)
        assert t[0] == 0.0
        assert np.all(np.diff(t) < 0.0)


class TestCsvExport:
    def test_planar_round_trip(self, benchmark_spec, tmp_path):
        state = McGeheeState(r=0.5, theta=0.3, phi=0.9)
        traj = integrate(benchmark_spec, -0.5, state, horizon=2.0)
        path = tmp_path / "orbit.csv"
        write_trajectory_csv(benchmark_spec, -0.5, traj, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "tau,r,theta,phi,t,energy_residual"
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
        assert data.shape == (len(traj), 6)
        assert np.array_equal(data[:, 0], traj.taus)
        assert np.array_equal(data[:, 1:4], traj.states)

    def test_collision_rows_report_zero_residual(self, benchmark_spec, tmp_path):
        traj = integrate(
            benchmark_spec, -0.5, McGeheeState(r=0.0, theta=0.3, phi=1.0), horizon=3.0
        )
        path = tmp_path / "cm.csv"
        write_trajectory_csv(benchmark_spec, -0.5, traj, path)
        lines = path.read_text().strip().split("\n")
        residuals = [float(ln.split(",")[-1]) for ln in lines[1:]]
        assert all(x == 0.0 for x in residuals)

    def test_general_header_and_shape(self, benchmark_spec, tmp_path):
        state = general_from_planar(
            benchmark_spec, -0.5, McGeheeState(r=0.4, theta=0.5, phi=2.2)
        )
        traj = integrate(benchmark_spec, -0.5, state, horizon=2.0)
        path = tmp_path / "gen.csv"
        write_trajectory_csv(benchmark_spec, -0.5, traj, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "tau,r,v,s_1,s_2,u_1,u_2,t,energy_residual"
        assert len(lines) == len(traj) + 1
