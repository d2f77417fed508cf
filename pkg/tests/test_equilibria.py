import math

import numpy as np
import pytest

from anikep import (
    AngularPotential,
    PotentialSpec,
    central_configurations,
    field_3d,
    field_collision,
)
from anikep.equilibria import (
    Classification,
    classify,
    eigen_3d,
    eigen_collision,
    equilibrium_records,
    jacobian_collision,
    tangency_direction,
)
from support import random_spec


def fd_jacobian_collision(spec, theta_hat, k, step=1e-6):
    """Central-difference Jacobian of field_collision at the equilibrium."""
    phi_hat = theta_hat + k * math.pi
    j = np.zeros((2, 2))
    for col, (dth, dph) in enumerate([(step, 0.0), (0.0, step)]):
        fp = field_collision(spec, theta_hat + dth, phi_hat + dph)
        fm = field_collision(spec, theta_hat - dth, phi_hat - dph)
        j[:, col] = (fp - fm) / (2.0 * step)
    return j


def fd_jacobian_3d(spec, h, theta_star, k, step=1e-6):
    """Finite-difference Jacobian of field_3d at (0, theta*, theta* + k pi).

    The r-column is not plain-differentiable at r = 0 when alpha < 1 (the
    field's radial component is exactly a r + b r^(1+alpha) there), so it is
    recovered by eliminating the r^alpha error term between one-sided
    three-point stencils at spacings s and 2s; the angular columns are smooth
    and use central differences.
    """
    phi_star = theta_star + k * math.pi
    y0 = np.array([0.0, theta_star, phi_star])
    f0 = field_3d(spec, h, y0)
    j = np.zeros((3, 3))

    def one_sided(s):
        f1 = field_3d(spec, h, (s, theta_star, phi_star))
        f2 = field_3d(spec, h, (2.0 * s, theta_star, phi_star))
        return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * s)

    s = 1e-4
    d1, d2 = one_sided(s), one_sided(2.0 * s)
    ta = 2.0**spec.alpha
    j[:, 0] = (ta * d1 - d2) / (ta - 1.0)
    for col in (1, 2):
        e = np.zeros(3)
        e[col] = step
        j[:, col] = (field_3d(spec, h, y0 + e) - field_3d(spec, h, y0 - e)) / (
            2.0 * step
        )
    return j


def sorted_by_real(values):
    return sorted(values, key=lambda z: (complex(z).real, complex(z).imag))


BENCH_ROOT = math.sqrt(4.2)


class TestJacobianCollision:
    def test_benchmark_example(self, benchmark_spec):
        j = jacobian_collision(benchmark_spec, 0.0, 1)
        assert np.allclose(j, [[2.0, -2.0], [0.6, -1.0]], atol=1e-12)

    def test_parity_flips_sign(self, benchmark_spec):
        j0 = jacobian_collision(benchmark_spec, 0.0, 0)
        j1 = jacobian_collision(benchmark_spec, 0.0, 1)
        assert np.allclose(j0, -j1, atol=1e-15)

    def test_rejects_non_critical_angle(self, benchmark_spec):
        with pytest.raises(ValueError, match="critical"):
            jacobian_collision(benchmark_spec, 0.3, 1)

    def test_matches_finite_differences(self, rng):
        checked = 0
        while checked < 12:
            spec = random_spec(rng)
            ccs = central_configurations(spec)
            for cc in ccs:
                for k in (0, 1):
                    j = jacobian_collision(spec, cc.theta, k)
                    j_fd = fd_jacobian_collision(spec, cc.theta, k)
                    assert np.max(np.abs(j - j_fd)) <= 1e-8 * max(
                        1.0, np.max(np.abs(j))
                    )
            checked += 1


class TestEigenCollision:
    def test_benchmark_example(self, benchmark_spec):
        mu_m, mu_p = eigen_collision(benchmark_spec, 0.0, 1)
        assert abs(mu_m - 0.5 * (1.0 + BENCH_ROOT)) <= 1e-12
        assert abs(mu_p - 0.5 * (1.0 - BENCH_ROOT)) <= 1e-12
        assert abs(mu_m - 1.52470) <= 1e-5
        assert abs(mu_p - (-0.52470)) <= 1e-5

    def test_flat_second_derivative_gives_zero_eigenvalue(self, kepler_spec):
        # U = 1 has a continuum of critical angles; every angle qualifies
        mu_m, mu_p = eigen_collision(kepler_spec, 0.3, 1)
        assert abs(mu_m - 1.0) <= 1e-14
        assert mu_p == 0.0

    def test_matches_numeric_eigenvalues(self, rng):
        for _ in range(12):
            spec = random_spec(rng)
            for cc in central_configurations(spec):
                for k in (0, 1):
                    mu = eigen_collision(spec, cc.theta, k)
                    numeric = np.linalg.eigvals(jacobian_collision(spec, cc.theta, k))
                    got = sorted_by_real(mu)
                    want = sorted_by_real(numeric)
                    for g, w in zip(got, want):
                        assert abs(complex(g) - complex(w)) <= 1e-10 * max(
                            1.0, abs(complex(w))
                        )

    def test_characteristic_polynomial_and_trace_det(self, benchmark_spec, rng):
        specs = [benchmark_spec] + [random_spec(rng) for _ in range(8)]
        for spec in specs:
            for cc in central_configurations(spec):
                for k in (0, 1):
                    j = jacobian_collision(spec, cc.theta, k)
                    tr, det = np.trace(j), np.linalg.det(j)
                    scale = max(1.0, np.max(np.abs(j))) ** 2
                    for mu in eigen_collision(spec, cc.theta, k):
                        mu = complex(mu)
                        assert abs(mu * mu - tr * mu + det) <= 1e-10 * scale
                    mu_m, mu_p = (complex(m) for m in eigen_collision(spec, cc.theta, k))
                    assert abs(mu_m + mu_p - tr) <= 1e-10 * scale
                    assert abs(mu_m * mu_p - det) <= 1e-10 * scale

    def test_complex_pair_at_benchmark_maximum(self, benchmark_spec):
        # theta = pi/2: U = 1.2, U'' = -0.4, radicand 1 - 8/3 < 0
        mu_m, mu_p = eigen_collision(benchmark_spec, 0.5 * math.pi, 0)
        assert isinstance(mu_m, complex) and isinstance(mu_p, complex)
        assert abs(mu_m.real - (-0.6)) <= 1e-12
        assert abs(mu_m - mu_p.conjugate()) <= 1e-12


class TestClassify:
    def test_saddle_for_both_parities(self, benchmark_spec):
        assert classify(benchmark_spec, 0.0, 0) is Classification.SADDLE
        assert classify(benchmark_spec, 0.0, 1) is Classification.SADDLE

    def test_complex_pair_sink_source(self):
        # U = 0.8 + 0.2 cos(theta): at 0, U = 1, U'' = -0.2 < -1/8,
        # radicand 1 - 1.6 < 0
        spec = PotentialSpec(
            alpha=1.0, angular=AngularPotential(a0=0.8, cos_coeffs=(0.2,))
        )
        assert classify(spec, 0.0, 0) is Classification.SINK
        assert classify(spec, 0.0, 1) is Classification.SOURCE

    def test_degenerate_node_for_flat_potential(self, kepler_spec):
        assert classify(kepler_spec, 0.7, 0) is Classification.STABLE_DEGENERATE_NODE
        assert classify(kepler_spec, 0.7, 1) is Classification.UNSTABLE_DEGENERATE_NODE

    def test_two_tangent_window(self):
        # U(0) = 1, U''(0) = -0.1: -1/8 < -0.1 < 0
        spec = PotentialSpec(
            alpha=1.0, angular=AngularPotential(a0=0.9, cos_coeffs=(0.1,))
        )
        assert classify(spec, 0.0, 0) is Classification.STABLE_TWO_TANGENT_NODE
        assert classify(spec, 0.0, 1) is Classification.UNSTABLE_TWO_TANGENT_NODE

    def test_exact_repeated_root_branch(self):
        # U = 7 + cos(theta): at 0, U = 8, U'' = -1, radicand 1 - 1 = 0.0
        spec = PotentialSpec(alpha=1.0, angular=AngularPotential(a0=7.0, cos_coeffs=(1.0,)))
        assert classify(spec, 0.0, 0) is Classification.ASYMPTOTICALLY_STABLE
        assert classify(spec, 0.0, 1) is Classification.UNSTABLE
        recs = [r for r in equilibrium_records(spec) if abs(r.theta_hat) < 1e-9]
        assert recs and all(r.borderline for r in recs)

    def test_scale_invariance(self, rng):
        for _ in range(8):
            spec = random_spec(rng)
            base = spec.angular
            for cc in central_configurations(spec):
                for k in (0, 1):
                    ref = classify(spec, cc.theta, k)
                    for c in (0.1, 10.0):
                        scaled = PotentialSpec(
                            alpha=spec.alpha,
                            angular=AngularPotential(
                                a0=c * base.a0,
                                cos_coeffs=tuple(c * x for x in base.cos_coeffs),
                                sin_coeffs=tuple(c * x for x in base.sin_coeffs),
                            ),
                        )
                        assert classify(scaled, cc.theta, k) is ref


class TestEigen3d:
    def test_benchmark_example(self, benchmark_spec):
        lam_r, lam_m, lam_p, v_r, v_m, v_p = eigen_3d(benchmark_spec, -0.5, 0.0)
        assert abs(lam_r - (-2.0)) <= 1e-14
        assert abs(lam_p - (0.5 + 0.5 * BENCH_ROOT)) <= 1e-12
        assert abs(lam_m - (0.5 - 0.5 * BENCH_ROOT)) <= 1e-12
        assert np.allclose(v_r, [1.0, 0.0, 0.0])
        # eigendirection slopes: (2U - lambda)/(2U); the stable one is the
        # larger slope 0.75 + 0.25 sqrt(4.2)
        assert abs(v_m[2] - (0.75 + 0.25 * BENCH_ROOT)) <= 1e-12
        assert abs(v_p[2] - (0.75 - 0.25 * BENCH_ROOT)) <= 1e-12
        assert abs(v_m[2] - 1.26235) <= 1e-5
        assert abs(v_p[2] - 0.23765) <= 1e-5

    def test_closed_form_vectors_satisfy_eigen_equation(self, benchmark_spec, rng):
        specs = [benchmark_spec] + [random_spec(rng, alpha=a) for a in (0.5, 1.5)]
        for spec in specs:
            for cc in central_configurations(spec):
                lam_r, lam_m, lam_p, v_r, v_m, v_p = eigen_3d(spec, -0.5, cc.theta)
                j = fd_jacobian_3d(spec, -0.5, cc.theta, 1)
                for lam, v in ((lam_r, v_r), (lam_m, v_m), (lam_p, v_p)):
                    residual = j.astype(complex) @ v - complex(lam) * v
                    assert np.max(np.abs(residual)) <= 1e-6 * max(
                        1.0, abs(complex(lam))
                    )

    def test_matches_fd_eigendecomposition(self, rng):
        for alpha in (0.5, 1.0, 1.5):
            for _ in range(6):
                spec = random_spec(rng, alpha=alpha)
                for cc in central_configurations(spec):
                    lam_r, lam_m, lam_p, v_r, v_m, v_p = eigen_3d(spec, -0.4, cc.theta)
                    j = fd_jacobian_3d(spec, -0.4, cc.theta, 1)
                    numeric = np.linalg.eigvals(j)
                    got = sorted_by_real([lam_r, lam_m, lam_p])
                    want = sorted_by_real(numeric)
                    scale = max(1.0, max(abs(complex(w)) for w in want))
                    for g, w in zip(got, want):
                        assert abs(complex(g) - complex(w)) <= 1e-8 * scale

    def test_directions_match_fd_eigenvectors(self, benchmark_spec):
        j = fd_jacobian_3d(benchmark_spec, -0.5, 0.0, 1)
        vals, vecs = np.linalg.eig(j)
        _, lam_m, lam_p, _, v_m, v_p = eigen_3d(benchmark_spec, -0.5, 0.0)
        for lam, v in ((lam_m, v_m), (lam_p, v_p)):
            idx = int(np.argmin(np.abs(vals - lam)))
            w = vecs[:, idx]
            cosang = abs(np.vdot(w, v)) / (np.linalg.norm(w) * np.linalg.norm(v))
            assert math.acos(min(1.0, cosang)) <= 1e-6

    def test_rejects_non_critical(self, benchmark_spec):
        with pytest.raises(ValueError, match="critical"):
            eigen_3d(benchmark_spec, -0.5, 0.2)


class TestTangency:
    def test_benchmark_prefers_weak_tangential_direction(self, benchmark_spec):
        name, v = tangency_direction(benchmark_spec, 0.0)
        assert name == "v_minus"
        assert abs(v[2] - (0.75 + 0.25 * BENCH_ROOT)) <= 1e-12

    def test_flat_potential_prefers_tangential(self, kepler_spec):
        name, v = tangency_direction(kepler_spec, 1.0)
        assert name == "v_minus"
        assert np.allclose(v, [0.0, 1.0, 1.0], atol=1e-14)

    def test_strong_anisotropy_prefers_radial(self):
        # U = 4 + 3 cos(theta): at pi, U = 1, U'' = 3; 3 - (4 - 1.9) > 0
        spec = PotentialSpec(alpha=1.9, angular=AngularPotential(a0=4.0, cos_coeffs=(3.0,)))
        name, v = tangency_direction(spec, math.pi)
        assert name == "v_r"
        assert np.allclose(v, [1.0, 0.0, 0.0])


class TestRecords:
    def test_benchmark_enumeration(self, benchmark_spec):
        recs = equilibrium_records(benchmark_spec)
        assert len(recs) == 8
        angles = sorted({round(r.theta_hat, 9) for r in recs})
        expected = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]
        assert np.allclose(angles, expected, atol=1e-9)
        for rec in recs:
            close_to_min = min(
                abs(rec.theta_hat - 0.0), abs(rec.theta_hat - math.pi)
            ) < 1e-6
            if close_to_min:
                assert rec.classification is Classification.SADDLE
            elif rec.k == 0:
                assert rec.classification is Classification.SINK
            else:
                assert rec.classification is Classification.SOURCE
            assert not rec.borderline or not close_to_min

    def test_saddle_sign_pattern_for_ingoing_parity(self, benchmark_spec):
        recs = equilibrium_records(benchmark_spec)
        saddles = [
            r for r in recs if r.classification is Classification.SADDLE and r.k == 1
        ]
        assert saddles
        for r in saddles:
            assert r.lambda_r < 0.0
            assert r.lambda_minus < 0.0
            assert r.lambda_plus > 0.0

    def test_outgoing_parity_negates_spectrum(self, benchmark_spec):
        recs = equilibrium_records(benchmark_spec)
        by_key = {(round(r.theta_hat, 9), r.k): r for r in recs}
        for (th, k), rec in by_key.items():
            if k == 1:
                twin = by_key[(th, 0)]
                assert abs(twin.lambda_r + rec.lambda_r) <= 1e-14
                assert abs(complex(twin.lambda_minus) + complex(rec.lambda_plus)) <= 1e-12
                assert abs(complex(twin.lambda_plus) + complex(rec.lambda_minus)) <= 1e-12

    def test_continuum_rejected(self, kepler_spec):
        with pytest.raises(ValueError, match="continuum"):
            equilibrium_records(kepler_spec)
