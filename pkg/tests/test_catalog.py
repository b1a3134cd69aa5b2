import logging
import math

import numpy as np
import pytest

from feqstab.catalog import (
    ENTRIES,
    build,
    biadditivity_residual,
    derived_identity_checks,
    doubling_residual,
    fe312_bound_check,
    fe_residual,
    four_point_factor,
    jensen_residual,
    residual_check,
    rho_inequality_residual,
    scaling_residual,
    structure_checks,
    symmetry_check,
    symmetry_residual,
    thm31,
    thm32,
    verify_specialization,
    zero_residual,
)
from feqstab.feqtypes import FunctionModel, vector
from feqstab.perturb import make_perturbed_model, random_vectors
from feqstab.util import LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


BILINEAR = FunctionModel(np.array([[[1.0, -0.5], [2.0, 0.25]]]))
SYMMETRIC = FunctionModel(np.array([[[1.0, 2.0], [2.0, -3.0]]]))


def quadratic(q):
    x, y = q.first.floats(), q.second.floats()
    return x[0] ** 2 * y[0]


def samples(width, count=20, seed=0, dim=2):
    return random_vectors(count, width, 2.0, dim, np.random.default_rng(seed))


class TestThm31:
    def test_p4(self):
        entry = thm31(4)
        assert entry.factor == pytest.approx(four_point_factor(4))
        assert entry.contractive
        assert entry.series_constant == pytest.approx((12 / 25) ** 4 / (1 - 0.3859328))
        assert entry.params == {"p": 4.0}
        assert not entry.discrepancy
        assert len(entry.notes) == 2
        assert "sign-corrected" in entry.hypothesis_note

    def test_bound_shape(self):
        (term,) = thm31(5).bound.terms
        assert term.coef == pytest.approx((12 / 25) ** 5)
        assert (term.exp_first, term.exp_second) == (10.0, 10.0)

    def test_outside_hypothesis(self):
        with pytest.warns(UserWarning, match="p > 3"):
            entry = thm31(3)
        assert entry.contractive
        assert any("outside" in note for note in entry.notes)

    def test_not_contractive(self):
        with pytest.warns(UserWarning):
            entry = thm31(1)
        assert not entry.contractive
        assert entry.series_constant == math.inf
        assert entry.factor == pytest.approx(2.36)

    @pytest.mark.parametrize("p", [0, -1])
    def test_bad_p(self, p):
        with pytest.raises(ValueError):
            thm31(p)


class TestThm32:
    def test_r3(self):
        entry = thm32(3, 0.2)
        assert entry.factor == pytest.approx(0.5)
        assert entry.series_constant == pytest.approx(4.0)
        assert entry.stated_constant == pytest.approx(64 / 7)
        assert entry.discrepancy
        assert "discrepancy" in entry.hypothesis_note
        assert entry.probe_point().first == vector(2)

    def test_bound_coefficient(self):
        entry = thm32(4, 0.5)
        for term in entry.bound.terms:
            assert term.coef == pytest.approx(2 * 0.5**4 / 0.5)

    def test_boundary(self):
        entry = thm32(2, 0.2)
        assert entry.factor == pytest.approx(1.0)
        assert not entry.contractive
        assert entry.series_constant == math.inf
        assert not entry.discrepancy

    def test_rho_hypothesis(self):
        with pytest.warns(UserWarning, match="2\\*rho"):
            entry = thm32(3, 0.9, a=0.5)
        assert entry.params["a"] == 0.5

    def test_derived_identity_range(self):
        with pytest.warns(UserWarning, match="rho < 2/5"):
            entry = thm32(3, 0.4)
        assert any("derived identities" in note for note in entry.notes)
        assert not any("derived identities" in note for note in thm32(3, 0.39).notes)

    def test_r0_has_no_stated_constant(self):
        entry = thm32(0, 0.0)
        assert entry.factor == pytest.approx(4.0)
        assert not entry.contractive
        assert entry.series_constant == math.inf
        assert entry.stated_constant is None
        assert not entry.discrepancy

    @pytest.mark.parametrize("params", [(3, 1.0), (3, -1.5), (-1, 0.2), (3, 0.2, 0)])
    def test_bad_params(self, params):
        with pytest.raises(ValueError):
            thm32(*params)


class TestBuild:
    def test_names(self):
        assert set(ENTRIES) == {"thm31", "thm32"}
        assert build("thm32", r=3, rho=0.2).name == "thm32"
        assert build("thm31", p=4) == thm31(4)

    def test_unknown(self):
        with pytest.raises(ValueError, match="Unknown catalog entry"):
            build("thm99")


class TestResiduals:
    def test_bilinear_solves_everything(self):
        for x, y, z, w in samples(4):
            assert fe_residual(BILINEAR, x, y, z, w) == 0
            assert biadditivity_residual(BILINEAR, x, y, w, "first") == 0
            assert biadditivity_residual(BILINEAR, x, y, w, "second") == 0
            assert doubling_residual(BILINEAR, x, z) == 0
            assert scaling_residual(BILINEAR, 3.0, x, z) == 0
            assert jensen_residual(BILINEAR, x, y, z) == 0
            assert zero_residual(BILINEAR, x) == 0
            assert rho_inequality_residual(BILINEAR, 0.5, 0.2, x, y, z, w) == (0, 0)

    def test_quadratic_is_not_biadditive(self):
        x, y, w = vector(1.0), vector(2.0), vector(1.0)
        # (x+y)^2 - x^2 - y^2 = 2xy
        assert biadditivity_residual(quadratic, x, y, w, "first") == pytest.approx(4.0)
        assert biadditivity_residual(quadratic, x, y, w, "second") == 0

    def test_bad_slot(self):
        x = vector(1.0)
        with pytest.raises(ValueError):
            biadditivity_residual(BILINEAR, x, x, x, "third")

    def test_zero_scaling(self):
        x = vector(1.0)
        with pytest.raises(ValueError):
            scaling_residual(BILINEAR, 0, x, x)
        with pytest.raises(ValueError):
            rho_inequality_residual(BILINEAR, 0, 0.2, x, x, x, x)

    def test_specialization_is_exact(self):
        rng = np.random.default_rng(5)
        model = make_perturbed_model([[1]], thm31(4).bound, thm31(4).spec, 1.0, 3)
        for f in (model, quadratic, FunctionModel([[2]])):
            for _ in range(10):
                X, Y = (vector(list(rng.uniform(-2, 2, 1))) for _ in range(2))
                assert verify_specialization(f, X, Y) == 0

    def test_symmetry(self):
        for x, y in samples(2):
            assert symmetry_residual(SYMMETRIC, x, y) == 0
        x, y = vector(1.0, 0.0), vector(0.0, 1.0)
        assert symmetry_residual(BILINEAR, x, y) == pytest.approx(2.5)


class TestChecks:
    def test_fe312_pass(self):
        result = fe312_bound_check(BILINEAR, 3.0, samples(4))
        assert result.verdict == "PASS"
        assert result.metrics["quadruples"] == 20
        assert result.metrics["min_slack"] > 0

    def test_fe312_fail(self):
        quads = samples(4, dim=1, count=5)
        result = fe312_bound_check(lambda q: 1000.0, 3.0, quads)
        assert result.verdict == "FAIL"
        assert len(result.witness) == 4

    def test_residual_check_threshold(self):
        triples = [(vector(1.0), vector(2.0), vector(1.0))]
        first = lambda x, y, w: biadditivity_residual(quadratic, x, y, w)  # noqa: E731
        assert residual_check("b", first, triples, 5.0).verdict == "PASS"
        failed = residual_check("b", first, triples, 1.0)
        assert failed.verdict == "FAIL"
        assert failed.worst == pytest.approx(4.0)
        assert failed.witness == [[1.0], [2.0], [1.0]]

    def test_structure_names(self):
        results = structure_checks(BILINEAR, samples(3), samples(4), 1e-9)
        assert [r.name for r in results] == [
            "biadditivity_first",
            "biadditivity_second",
            "fe_residual",
        ]
        assert all(r.verdict == "PASS" for r in results)

    def test_derived_identities(self):
        results = derived_identity_checks(BILINEAR, samples(3), 2.0, 1e-9)
        assert [r.name for r in results] == ["zero", "doubling", "scaling", "jensen"]
        assert all(r.verdict == "PASS" for r in results)

    def test_derived_identities_catch_offset(self):
        results = derived_identity_checks(lambda q: 1.0, samples(3, dim=1), 2.0, 1e-9)
        verdicts = {r.name: r.verdict for r in results}
        # a constant solves the jensen identity but nothing else
        assert verdicts == {"zero": "FAIL", "doubling": "FAIL", "scaling": "FAIL", "jensen": "PASS"}

    def test_symmetry_check(self):
        assert symmetry_check(SYMMETRIC, samples(2), 1e-9).verdict == "PASS"
        assert symmetry_check(BILINEAR, samples(2), 1e-9).verdict == "FAIL"
