"""Estimator engine vs. independent dense-matrix algebra."""
import numpy as np
import pytest

from cmatrix_iv import (
    DesignData,
    EstimatorSpec,
    Family,
    NAMED_ESTIMATORS,
    NearSingularError,
    OracleInfeasibleError,
    SingularWeightError,
    apply_c,
    estimate,
    jive1_loo_oracle,
    k_class,
    lambda1,
    lambda2,
    omega1,
    omega2,
    partial_out,
    project,
    resolve_named,
    spec_for,
    stack,
    standard_errors,
)
from cmatrix_iv.errors import DesignError

from conftest import dense_c, dense_fit, random_design


# ------------------------------------------------------------------ Family


class TestFamily:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown family kind"):
            Family("pclass", 0.3)

    def test_param_coerced_to_float(self):
        fam = k_class(1)
        assert isinstance(fam.param, float)

    def test_constructors(self):
        assert k_class(0.5).kind == "kclass"
        assert lambda1(0.5).kind == "lambda1"
        assert lambda2(0.5).kind == "lambda2"
        assert omega1(0.5).kind == "omega1"
        assert omega2(0.5).kind == "omega2"


# ----------------------------------------------------------------- apply_c


FAMILY_GRID = [
    k_class(0.0),
    k_class(1.0),
    k_class(0.37),
    k_class(1.2),
    lambda1(0.6),
    lambda2(0.6),
    lambda2(1.0),
    omega1(0.0),
    omega1(0.05),
    omega2(0.0),
    omega2(0.05),
]


class TestApplyC:
    @pytest.mark.parametrize("family", FAMILY_GRID, ids=str)
    def test_matches_dense_matrix(self, family, rng):
        z = rng.standard_normal((40, 5))
        m = rng.standard_normal((40, 3))
        dec = project(z)
        c = dense_c(family, z)
        got = apply_c(family, dec, m)
        assert np.abs(got - c @ m).max() < 1e-12

    @pytest.mark.parametrize("family", FAMILY_GRID, ids=str)
    def test_transpose_matches_dense(self, family, rng):
        z = rng.standard_normal((40, 5))
        m = rng.standard_normal((40, 3))
        dec = project(z)
        c = dense_c(family, z)
        got = apply_c(family, dec, m, transpose=True)
        assert np.abs(got - c.T @ m).max() < 1e-12

    def test_vector_operand(self, rng):
        z = rng.standard_normal((30, 4))
        v = rng.standard_normal(30)
        dec = project(z)
        got = apply_c(omega1(0.1), dec, v)
        assert got.shape == (30,)
        want = dense_c(omega1(0.1), z) @ v
        assert np.abs(got - want).max() < 1e-12

    def test_adjoint_identity(self, rng):
        # <C m1, m2> == <m1, C' m2> for the non-symmetric families
        z = rng.standard_normal((35, 4))
        dec = project(z)
        m1 = rng.standard_normal(35)
        m2 = rng.standard_normal(35)
        for family in (lambda1(0.5), omega1(0.02)):
            lhs = apply_c(family, dec, m1) @ m2
            rhs = m1 @ apply_c(family, dec, m2, transpose=True)
            assert abs(lhs - rhs) < 1e-12

    def test_row_count_mismatch(self, rng):
        dec = project(rng.standard_normal((20, 3)))
        with pytest.raises(DesignError, match="rows"):
            apply_c(k_class(1.0), dec, np.ones(21))

    def test_omega1_pinned_leverage_raises(self):
        # row 0 is the only support of column 0 -> leverage exactly 1
        z = np.zeros((12, 2))
        z[0, 0] = 1.0
        z[1:, 1] = np.arange(1, 12, dtype=float)
        dec = project(z)
        assert dec.leverages[0] == pytest.approx(1.0)
        with pytest.raises(SingularWeightError, match="row 0") as info:
            apply_c(omega1(0.0), dec, np.ones(12))
        assert info.value.row == 0

    def test_lambda1_pinned_leverage_raises(self):
        z = np.zeros((12, 2))
        z[0, 0] = 1.0
        z[1:, 1] = np.arange(1, 12, dtype=float)
        dec = project(z)
        with pytest.raises(SingularWeightError, match="lambda"):
            apply_c(lambda1(1.0), dec, np.ones(12))

    def test_omega1_offset_rescues_pinned_leverage(self):
        z = np.zeros((12, 2))
        z[0, 0] = 1.0
        z[1:, 1] = np.arange(1, 12, dtype=float)
        dec = project(z)
        out = apply_c(omega1(0.5), dec, np.ones(12))
        assert np.isfinite(out).all()


# ---------------------------------------------------------------- estimate


class TestEstimate:
    def test_all_named_match_dense_oracle(self, rng):
        for trial in range(5):
            data = random_design(
                rng,
                n=int(rng.integers(50, 90)),
                k1=int(rng.integers(4, 9)),
                l2=int(rng.integers(1, 4)),
            )
            stacked = stack(data)
            for name in NAMED_ESTIMATORS:
                spec = spec_for(name, data)
                got = estimate(spec, data).beta_hat
                if spec.partialled:
                    pdata = partial_out(data)
                    want = dense_fit(
                        spec.family, pdata.x_t, pdata.y_t, pdata.z_t
                    )
                else:
                    want = dense_fit(
                        spec.family, stacked.x, data.y, stacked.z
                    )
                assert np.abs(got - want).max() < 1e-9, name

    def test_ols_equals_least_squares(self, rng):
        data = random_design(rng, n=70, k1=5, l2=2)
        stacked = stack(data)
        want, *_ = np.linalg.lstsq(stacked.x, data.y, rcond=None)
        got = estimate(spec_for("OLS", data), data).beta_hat
        assert np.abs(got - want).max() < 1e-10

    def test_tsls_equals_projected_least_squares(self, rng):
        data = random_design(rng, n=70, k1=5, l2=2)
        stacked = stack(data)
        p = stacked.z @ np.linalg.pinv(stacked.z)
        xhat = p @ stacked.x
        want = np.linalg.solve(xhat.T @ stacked.x, xhat.T @ data.y)
        got = estimate(spec_for("TSLS", data), data).beta_hat
        assert np.abs(got - want).max() < 1e-10

    def test_shared_decomposition_matches_fresh(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        dec = project(stack(data).z)
        pdata = partial_out(data)
        pdec = project(pdata.z_t)
        for name in ("TSLS", "UOJIVE1", "UIJIVE2"):
            spec = spec_for(name, data)
            fresh = estimate(spec, data)
            shared = estimate(
                spec, data, decomp=dec, partialled=pdata,
                partialled_decomp=pdec,
            )
            np.testing.assert_array_equal(fresh.beta_hat, shared.beta_hat)

    def test_sigma2_divisors(self, rng):
        data = random_design(rng, n=50, k1=5, l2=1)
        spec = spec_for("TSLS", data)
        plain = estimate(spec, data, sigma2_divisor="n")
        corrected = estimate(spec, data, sigma2_divisor="n-l")
        n, l = 50, 2
        assert plain.sigma2_hat * n == pytest.approx(
            corrected.sigma2_hat * (n - l)
        )
        with pytest.raises(ValueError, match="sigma2_divisor"):
            estimate(spec, data, sigma2_divisor="n-k")

    def test_collinear_regressors_raise(self, rng):
        n = 40
        z = rng.standard_normal((n, 4))
        base = rng.standard_normal(n)
        x = np.column_stack([base, base])  # perfectly collinear pair
        y = rng.standard_normal(n)
        data = DesignData(y=y, x_star=x, w=None, z_star=z)
        with pytest.raises(NearSingularError) as info:
            estimate(spec_for("TSLS", data), data)
        assert info.value.cond > 1e12

    def test_result_fields(self, rng):
        data = random_design(rng, n=50, k1=5, l2=2)
        res = estimate(spec_for("UOJIVE2", data), data)
        assert res.beta_hat.shape == (3,)
        assert res.se.shape == (3,)
        assert res.sigma2_hat > 0
        assert res.cond >= 1.0
        assert res.n_used == 50

    def test_partialled_coefficient_length(self, rng):
        data = random_design(rng, n=50, k1=5, l2=2)
        res = estimate(spec_for("UIJIVE1", data), data)
        assert res.beta_hat.shape == (1,)


# ------------------------------------------------------------ resolve_named


class TestResolveNamed:
    N, K, L, L1 = 100, 10, 3, 1

    def resolve(self, name):
        return resolve_named(name, self.N, self.K, self.L, self.L1)

    def test_parameter_formulas(self):
        n, k, l, l1 = self.N, self.K, self.L, self.L1
        expected = {
            "OLS": ("kclass", 0.0, False),
            "TSLS": ("kclass", 1.0, False),
            "Nagar": ("kclass", 1 + (k - l - 1) / n, False),
            "AUK": ("kclass", (n - l - 1) / (n - k), False),
            "TSJI1": ("lambda1", (k - l - 1) / k, False),
            "TSJI2": ("lambda2", (k - l - 1) / k, False),
            "JIVE1": ("omega1", 0.0, False),
            "JIVE2": ("omega2", 0.0, False),
            "UOJIVE1": ("omega1", (l + 1) / n, False),
            "UOJIVE2": ("omega2", (l + 1) / n, False),
            "IJIVE1": ("omega1", 0.0, True),
            "IJIVE2": ("omega2", 0.0, True),
            "UIJIVE1": ("omega1", (l1 + 1) / n, True),
            "UIJIVE2": ("omega2", (l1 + 1) / n, True),
        }
        assert set(expected) == set(NAMED_ESTIMATORS)
        for name, (kind, param, partialled) in expected.items():
            spec = self.resolve(name)
            assert spec.family.kind == kind, name
            assert spec.family.param == param, name
            assert spec.partialled is partialled, name
            assert spec.label == name
            assert spec.note is None

    def test_case_insensitive(self):
        spec = resolve_named("uojive2", self.N, self.K, self.L, self.L1)
        assert spec.label == "UOJIVE2"

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown estimator"):
            self.resolve("JIVE3")

    def test_no_controls_resolves_to_raw_sibling(self):
        pairs = {
            "IJIVE1": "JIVE1",
            "IJIVE2": "JIVE2",
            "UIJIVE1": "UOJIVE1",
            "UIJIVE2": "UOJIVE2",
        }
        for name, sibling in pairs.items():
            spec = resolve_named(name, 100, 10, 1, 1)
            target = resolve_named(sibling, 100, 10, 1, 1)
            assert spec.family == target.family
            assert not spec.partialled
            assert spec.label == name
            assert sibling in spec.note

    def test_rejects_degenerate_dimensions(self):
        with pytest.raises(DesignError):
            resolve_named("TSLS", 10, 10, 1, 1)  # n must exceed k
        with pytest.raises(DesignError):
            resolve_named("TSLS", 0, 3, 1, 1)


# --------------------------------------------------------- standard errors


class TestStandardErrors:
    def test_matches_estimate(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        for name in ("OLS", "TSLS", "UOJIVE1", "UIJIVE2"):
            spec = spec_for(name, data)
            res = estimate(spec, data)
            se = standard_errors(spec, data, res.beta_hat, res.sigma2_hat)
            np.testing.assert_allclose(se, res.se, rtol=1e-12)

    def test_validates_length(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        spec = spec_for("TSLS", data)
        with pytest.raises(DesignError, match="length"):
            standard_errors(spec, data, np.ones(7), 1.0)

    def test_ols_matches_textbook_formula(self, rng):
        data = random_design(rng, n=80, k1=5, l2=1)
        stacked = stack(data)
        spec = spec_for("OLS", data)
        res = estimate(spec, data)
        cov = res.sigma2_hat * np.linalg.inv(stacked.x.T @ stacked.x)
        np.testing.assert_allclose(
            res.se, np.sqrt(np.diag(cov)), rtol=1e-9
        )


# ------------------------------------------------------- leave-one-out oracle


class TestJive1Oracle:
    def test_matches_closed_form(self, rng):
        for trial in range(10):
            data = random_design(
                rng,
                n=int(rng.integers(25, 50)),
                k1=int(rng.integers(3, 6)),
                l2=int(rng.integers(0, 3)),
            )
            closed = estimate(spec_for("JIVE1", data), data).beta_hat
            loo = jive1_loo_oracle(data)
            scale = max(np.abs(loo).max(), 1.0)
            assert np.abs(closed - loo).max() / scale < 1e-8

    def test_infeasible_when_row_supports_column(self):
        # column 0 lives only on row 0: dropping row 0 kills the rank
        n = 15
        z = np.zeros((n, 2))
        z[0, 0] = 1.0
        z[1:, 1] = np.arange(1, n, dtype=float)
        x = np.arange(n, dtype=float)[:, None] + 1.0
        y = np.ones(n)
        data = DesignData(y=y, x_star=x, w=None, z_star=z)
        with pytest.raises(OracleInfeasibleError, match="row 0"):
            jive1_loo_oracle(data)


# ----------------------------------------------------------------- reductions


class TestReductions:
    """Algebraic identities between family members on random data."""

    def test_kclass_zero_is_ols(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        stacked = stack(data)
        want, *_ = np.linalg.lstsq(stacked.x, data.y, rcond=None)
        spec = EstimatorSpec(family=k_class(0.0), partialled=False,
                             label="kclass(0)")
        got = estimate(spec, data).beta_hat
        assert np.abs(got - want).max() < 1e-10

    def test_kclass_one_is_tsls(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        a = estimate(spec_for("TSLS", data), data).beta_hat
        spec = EstimatorSpec(family=k_class(1.0), partialled=False,
                             label="kclass(1)")
        b = estimate(spec, data).beta_hat
        np.testing.assert_array_equal(a, b)

    def test_omega2_zero_is_lambda2_one(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        a = estimate(
            EstimatorSpec(omega2(0.0), False, "omega2(0)"), data
        ).beta_hat
        b = estimate(
            EstimatorSpec(lambda2(1.0), False, "lambda2(1)"), data
        ).beta_hat
        np.testing.assert_array_equal(a, b)

    def test_omega1_large_offset_approaches_ols(self, rng):
        data = random_design(rng, n=60, k1=6, l2=2)
        ols = estimate(spec_for("OLS", data), data).beta_hat
        big = estimate(
            EstimatorSpec(omega1(1e8), False, "omega1(big)"), data
        ).beta_hat
        assert np.abs(big - ols).max() / np.abs(ols).max() < 1e-6
