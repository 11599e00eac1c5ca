import numpy as np
import pytest

from oqctrl.core import (
    PAULI_Z,
    apply_kraus,
    expectation,
    random_density,
    random_hermitian,
    random_kraus,
    random_unitary,
)
from oqctrl.stiefel import (
    classify_critical_point,
    gradient,
    hessian_apply,
    hessian_curve,
    kraus_from_stiefel,
    maximize,
    multistart_maximize,
    objective,
    project_tangent,
    random_stiefel,
    retract,
    stiefel_from_kraus,
    stiefel_residual,
    tangency_residual,
)


def inner(a, b):
    return float(np.real(np.sum(a.conj() * b)))


def random_tangent(s, rng):
    z = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
    d = project_tangent(s, z)
    return d / np.linalg.norm(d)


def replace_channel_point(v):
    """Stiefel point of the channel rho -> |v><v| (K_i = |v><i|)."""
    n = v.size
    kraus = [np.outer(v, np.eye(n)[i]) for i in range(n)]
    return stiefel_from_kraus(kraus)


def fit_slope(ts, errs):
    return np.polyfit(np.log(ts), np.log(np.asarray(errs) + 1e-300), 1)[0]


class TestStacking:
    def test_identity_padding(self):
        s = stiefel_from_kraus([np.eye(2, dtype=complex)])
        assert s.shape == (8, 2)
        assert stiefel_residual(s) < 1e-15
        np.testing.assert_allclose(s[:2], np.eye(2))
        np.testing.assert_allclose(s[2:], 0)

    def test_padding_equivalence(self):
        k = [np.eye(2, dtype=complex)]
        padded = k + [np.zeros((2, 2), dtype=complex)] * 3
        np.testing.assert_allclose(stiefel_from_kraus(k), stiefel_from_kraus(padded))

    def test_random_kraus_residual(self):
        rng = np.random.default_rng(0)
        for n in (2, 3):
            s = stiefel_from_kraus(random_kraus(n, n * n, rng))
            assert stiefel_residual(s) < 1e-12

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        kraus = random_kraus(2, 4, rng)
        back = kraus_from_stiefel(stiefel_from_kraus(kraus))
        for a, b in zip(kraus, back):
            np.testing.assert_allclose(a, b)

    def test_violating_set_rejected(self):
        with pytest.raises(ValueError):
            stiefel_from_kraus([1.1 * np.eye(2, dtype=complex)])


class TestObjective:
    def test_identity_channel_reduces_to_expectation(self):
        rng = np.random.default_rng(2)
        rho = random_density(2, rng)
        obs = random_hermitian(2, rng)
        s = stiefel_from_kraus([np.eye(2, dtype=complex)])
        assert objective(s, rho, obs) == pytest.approx(expectation(rho, obs), abs=1e-12)

    def test_replace_channel_reaches_max_eigenvalue(self):
        rng = np.random.default_rng(3)
        obs = random_hermitian(3, rng)
        w, v = np.linalg.eigh(obs)
        s = replace_channel_point(v[:, -1])
        rho = random_density(3, rng)
        assert objective(s, rho, obs) == pytest.approx(w[-1], abs=1e-12)

    def test_matches_kraus_form(self):
        rng = np.random.default_rng(4)
        for n in (2, 3):
            kraus = random_kraus(n, n * n, rng)
            rho = random_density(n, rng)
            obs = random_hermitian(n, rng)
            via_kraus = expectation(apply_kraus(kraus, rho), obs)
            via_stiefel = objective(stiefel_from_kraus(kraus), rho, obs)
            assert via_stiefel == pytest.approx(via_kraus, abs=1e-12)

    def test_bounded_by_spectrum(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 4))
            s = random_stiefel(n, rng)
            rho = random_density(n, rng)
            obs = random_hermitian(n, rng)
            w = np.linalg.eigvalsh(obs)
            j = objective(s, rho, obs)
            assert w[0] - 1e-9 <= j <= w[-1] + 1e-9


class TestGradient:
    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(6)
        for n in (2, 3):
            for _ in range(10):
                s = random_stiefel(n, rng)
                rho = random_density(n, rng)
                obs = random_hermitian(n, rng)
                g = gradient(s, rho, obs)
                d = random_tangent(s, rng)
                t = 1e-5
                fd = (objective(retract(s, t * d), rho, obs)
                      - objective(retract(s, -t * d), rho, obs)) / (2 * t)
                assert fd == pytest.approx(inner(g, d), rel=1e-6)

    def test_gradient_is_tangent(self):
        rng = np.random.default_rng(7)
        s = random_stiefel(3, rng)
        g = gradient(s, random_density(3, rng), random_hermitian(3, rng))
        assert tangency_residual(s, g) < 1e-12
        assert np.max(np.abs(project_tangent(s, g) - g)) < 1e-12

    def test_zero_at_replace_channel_maximizer(self):
        rng = np.random.default_rng(8)
        obs = random_hermitian(3, rng)
        _, v = np.linalg.eigh(obs)
        s = replace_channel_point(v[:, -1])
        rho = random_density(3, rng)  # full rank
        g = project_tangent(s, gradient(s, rho, obs))
        assert np.linalg.norm(g) < 1e-8

    def test_constant_objective_gives_zero_gradient(self):
        rng = np.random.default_rng(9)
        n = 3
        s = random_stiefel(n, rng)
        g = gradient(s, np.eye(n) / n, np.eye(n))
        assert np.max(np.abs(g)) < 1e-12

    def test_gauge_invariance(self):
        # remixing K_i -> sum_j U_ij K_j is S -> (U kron I) S; J and the
        # gradient norm are unchanged
        rng = np.random.default_rng(10)
        n = 2
        s = random_stiefel(n, rng)
        rho = random_density(n, rng)
        obs = random_hermitian(n, rng)
        u = random_unitary(n * n, rng)
        s2 = np.kron(u, np.eye(n)) @ s
        assert stiefel_residual(s2) < 1e-12
        assert objective(s2, rho, obs) == pytest.approx(objective(s, rho, obs), abs=1e-12)
        g1 = np.linalg.norm(gradient(s, rho, obs))
        g2 = np.linalg.norm(gradient(s2, rho, obs))
        assert g2 == pytest.approx(g1, abs=1e-10)


class TestHessian:
    def test_zero_direction(self):
        rng = np.random.default_rng(11)
        s = random_stiefel(2, rng)
        h = hessian_apply(s, np.zeros_like(s), random_density(2, rng), random_hermitian(2, rng))
        assert np.max(np.abs(h)) == 0.0

    def test_linearity(self):
        rng = np.random.default_rng(12)
        s = random_stiefel(2, rng)
        rho = random_density(2, rng)
        obs = random_hermitian(2, rng)
        d1 = random_tangent(s, rng)
        d2 = random_tangent(s, rng)
        a, b = 0.7, -1.3
        lhs = hessian_apply(s, a * d1 + b * d2, rho, obs)
        rhs = a * hessian_apply(s, d1, rho, obs) + b * hessian_apply(s, d2, rho, obs)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_non_tangent_direction_rejected(self):
        rng = np.random.default_rng(13)
        s = random_stiefel(2, rng)
        with pytest.raises(ValueError, match="tangent"):
            hessian_apply(s, s.copy(), random_density(2, rng), random_hermitian(2, rng))

    def test_quadratic_model_along_hessian_curve(self):
        # generic point: remainder of the second-order model is O(t^3)
        rng = np.random.default_rng(14)
        for n in (2, 3):
            s = random_stiefel(n, rng)
            rho = random_density(n, rng)
            obs = random_hermitian(n, rng)
            d = random_tangent(s, rng)
            g = gradient(s, rho, obs)
            q = inner(d, hessian_apply(s, d, rho, obs))
            ts = np.geomspace(1e-2, 1e-3, 6)
            errs = [
                abs(objective(hessian_curve(s, d, t), rho, obs)
                    - objective(s, rho, obs) - t * inner(g, d) - 0.5 * t * t * q)
                for t in ts
            ]
            assert fit_slope(ts, errs) == pytest.approx(3.0, abs=0.2)

    def test_second_difference_at_critical_point(self):
        # at a critical point the quadratic form is curve independent and the
        # QR-retracted second difference must match to 1e-4 relative
        rng = np.random.default_rng(15)
        obs = random_hermitian(3, rng)
        _, v = np.linalg.eigh(obs)
        s = replace_channel_point(v[:, 1])
        rho = random_density(3, rng)
        d = random_tangent(s, rng)
        q = inner(d, hessian_apply(s, d, rho, obs))
        h = 1e-3
        j0 = objective(s, rho, obs)
        fd = (objective(retract(s, h * d), rho, obs) - 2 * j0
              + objective(retract(s, -h * d), rho, obs)) / h**2
        assert fd == pytest.approx(q, rel=1e-4)

    def test_quadratic_model_at_critical_point_with_retract(self):
        rng = np.random.default_rng(16)
        obs = random_hermitian(3, rng)
        _, v = np.linalg.eigh(obs)
        s = replace_channel_point(v[:, 1])
        rho = random_density(3, rng)
        d = random_tangent(s, rng)
        q = inner(d, hessian_apply(s, d, rho, obs))
        j0 = objective(s, rho, obs)
        ts = np.geomspace(1e-2, 1e-3, 6)
        errs = [
            abs(objective(retract(s, t * d), rho, obs) - j0 - 0.5 * t * t * q) for t in ts
        ]
        assert fit_slope(ts, errs) >= 2.8


class TestProjectionRetraction:
    def test_projecting_the_point_gives_zero(self):
        rng = np.random.default_rng(17)
        s = random_stiefel(2, rng)
        assert np.max(np.abs(project_tangent(s, s))) < 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(18)
        s = random_stiefel(3, rng)
        z = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
        once = project_tangent(s, z)
        twice = project_tangent(s, once)
        assert np.max(np.abs(once - twice)) < 1e-12
        assert tangency_residual(s, once) < 1e-12

    def test_retract_zero_is_identity(self):
        rng = np.random.default_rng(19)
        s = random_stiefel(3, rng)
        np.testing.assert_allclose(retract(s, np.zeros_like(s)), s, atol=1e-13)

    def test_retract_first_order_agreement(self):
        rng = np.random.default_rng(20)
        s = random_stiefel(2, rng)
        d = random_tangent(s, rng)
        ts = np.geomspace(1e-2, 1e-4, 5)
        errs = [np.linalg.norm(retract(s, t * d) - (s + t * d)) for t in ts]
        assert fit_slope(ts, errs) == pytest.approx(2.0, abs=0.1)

    def test_retract_satisfies_constraint(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            s = random_stiefel(2, rng)
            z = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
            z /= max(1.0, np.linalg.norm(z))
            assert stiefel_residual(retract(s, z)) < 1e-12


class TestMaximize:
    def test_identity_observable_converges_immediately(self):
        rng = np.random.default_rng(22)
        report = maximize(random_density(2, rng), np.eye(2), seed=0)
        assert report.converged
        assert report.iterations == 1
        assert report.objective_value == pytest.approx(1.0, abs=1e-12)

    def test_qubit_reaches_top_eigenvalue(self):
        rng = np.random.default_rng(23)
        report = maximize(random_density(2, rng), PAULI_Z, seed=1, grad_tol=1e-7)
        assert report.converged
        assert report.objective_value == pytest.approx(1.0, abs=1e-6)

    def test_stall_at_floating_point_optimum_is_diagnosed(self):
        # an unreachable gradient tolerance must end in a diagnosed stall,
        # not an endless loop or an exception
        rng = np.random.default_rng(230)
        report = maximize(random_density(2, rng), PAULI_Z, seed=1, grad_tol=1e-14)
        assert not report.converged
        assert report.stalled
        assert "underflow" in report.stall_message
        assert report.objective_value == pytest.approx(1.0, abs=1e-8)

    def test_monotone_history_and_constraint(self):
        rng = np.random.default_rng(24)
        report = maximize(random_density(3, rng), random_hermitian(3, rng), seed=2)
        assert np.all(np.diff(report.objective_history) >= 0)
        assert stiefel_residual(report.point) < 1e-10

    def test_multistart_all_reach_global_maximum(self):
        rng = np.random.default_rng(25)
        rho = random_density(3, rng)
        obs = random_hermitian(3, rng)
        lam_max = np.linalg.eigvalsh(obs).max()
        reports = multistart_maximize(rho, obs, starts=5, seed=7, grad_tol=1e-7)
        for rep in reports:
            assert rep.converged
            assert rep.objective_value == pytest.approx(lam_max, abs=1e-5)

    def test_multistart_deterministic(self):
        rng = np.random.default_rng(26)
        rho = random_density(2, rng)
        obs = random_hermitian(2, rng)
        a = multistart_maximize(rho, obs, starts=3, seed=11)
        b = multistart_maximize(rho, obs, starts=3, seed=11)
        for ra, rb in zip(a, b):
            assert ra.objective_value == rb.objective_value
            assert ra.iterations == rb.iterations


class TestClassification:
    @pytest.fixture()
    def spectrum(self):
        rng = np.random.default_rng(27)
        obs = random_hermitian(3, rng)
        rho = random_density(3, rng)  # full rank
        _, v = np.linalg.eigh(obs)
        return rho, obs, v

    def test_top_eigenvector_is_maximum(self, spectrum):
        rho, obs, v = spectrum
        assert classify_critical_point(replace_channel_point(v[:, -1]), rho, obs) == "maximum"

    def test_bottom_eigenvector_is_minimum(self, spectrum):
        rho, obs, v = spectrum
        assert classify_critical_point(replace_channel_point(v[:, 0]), rho, obs) == "minimum"

    def test_middle_eigenvector_is_saddle(self, spectrum):
        rho, obs, v = spectrum
        assert classify_critical_point(replace_channel_point(v[:, 1]), rho, obs) == "saddle"

    def test_non_critical_point_rejected(self, spectrum):
        rho, obs, _ = spectrum
        rng = np.random.default_rng(28)
        with pytest.raises(ValueError, match="critical"):
            classify_critical_point(random_stiefel(3, rng), rho, obs)
