import logging

import numpy as np
import pytest

from feqstab.catalog import thm31, thm32
from feqstab.feqtypes import ArgMap, BoundSpec, FunctionModel, OperatorSpec, pair, vector
from feqstab.perturb import (
    AdmissibilityReport,
    audit_admissibility,
    audit_fe31,
    audit_fe34,
    axis_points,
    default_core,
    envelope_ratio,
    fe31_margin_search,
    make_grid,
    make_perturbed_model,
    make_quadruples,
    random_points,
)
from feqstab.util import LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


THM31 = thm31(4)
THM32 = thm32(3, 0.2)


class TestCore:
    def test_scalar(self):
        assert default_core().tolist() == [[[1.0]]]

    def test_shape(self):
        core = default_core(3, 2)
        assert core.shape == (2, 3, 3)
        assert core[1, 0, 0] == 2.0
        assert core[0, 1, 2] == pytest.approx(0.25)
        assert np.allclose(core[0], core[0].T)

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            default_core(0, 1)


class TestModels:
    @pytest.mark.parametrize("entry", [THM31, THM32], ids=["thm31", "thm32"])
    def test_envelope(self, entry):
        model = make_perturbed_model([[1]], entry.bound, entry.spec, 0.5, 7)
        grid = make_grid(30, 2.0)
        assert envelope_ratio(model, grid) <= 0.5 * (1 + 1e-12)
        scale = 1 + float(entry.spec.abs_coef_sum)
        assert model.perturbation.envelope.terms[0].coef == pytest.approx(
            entry.bound.terms[0].coef / scale
        )

    def test_unperturbed_ratio(self):
        assert envelope_ratio(FunctionModel([[1]]), make_grid(5, 1.0)) == 0.0

    def test_no_closed_form(self):
        rotation = OperatorSpec([(0.5, ArgMap(0.5, 0.5, 0.5, -0.5))])
        bound = BoundSpec([(1, 2, 0), (1, 0, 2)])
        with pytest.raises(ValueError, match="no closed-form"):
            make_perturbed_model([[1]], bound, rotation, 0.5, 1)
        with pytest.warns(UserWarning, match="no closed-form"):
            make_perturbed_model([[1]], bound, rotation, 0.5, 1, require_margin=False)

    def test_factor_above_coefficients(self):
        spec = OperatorSpec([(1, ArgMap.diagonal(2, 2))])
        with pytest.raises(ValueError, match="exceeds"):
            make_perturbed_model([[1]], BoundSpec([(1, 1, 1)]), spec, 0.5, 1)


class TestAdmissibility:
    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("eta", [0.0, 0.5, 1.0])
    @pytest.mark.parametrize("entry", [THM31, THM32], ids=["thm31", "thm32"])
    def test_generated_models_pass(self, entry, eta, seed):
        model = make_perturbed_model([[1]], entry.bound, entry.spec, eta, seed)
        grid = make_grid(40, 2.0)
        report = audit_admissibility(model, entry.spec, entry.bound, grid, seed=seed)
        assert report.verdict == "PASS"
        assert report.max_ratio < 1
        assert report.zero_violations == 0
        assert report.as_check().name == "admissibility"

    def test_non_bilinear_core_fails(self):
        def shifted(q):
            return q.first.floats()[0] * q.second.floats()[0] + 1.0

        report = audit_admissibility(shifted, THM31.spec, THM31.bound, make_grid(10, 2.0))
        assert report.verdict == "FAIL"
        assert report.zero_violations > 0
        assert report.witness is not None
        assert report.as_check().witness == report.witness

    def test_to_dict(self):
        report = AdmissibilityReport("admissibility", 10, 0.25, 0, seed=1, params={"p": 4.0})
        data = report.to_dict()
        assert data["verdict"] == "PASS"
        assert data["params"] == {"p": 4.0}

    def test_slack(self):
        assert AdmissibilityReport("a", 1, 1 + 1e-12, 0).verdict == "PASS"
        assert AdmissibilityReport("a", 1, 1.01, 0).verdict == "FAIL"


class TestFourPoint:
    def test_exact_core_passes(self):
        quads = make_quadruples(50, 2.0, 1, 1, zero_slots=True)
        report = audit_fe31(FunctionModel([[1]]), 4.0, quads)
        assert report.verdict == "PASS"
        assert report.name == "fe31"

    def test_zero_slots_need_exact_solution(self):
        quads = make_quadruples(50, 2.0, 1, 1, zero_slots=True)
        model = make_perturbed_model([[1]], THM31.bound, THM31.spec, 1.0, 1)
        assert audit_fe31(model, 4.0, quads).verdict == "FAIL"

    def test_margin_search_ends_at_zero(self):
        quads = make_quadruples(20, 2.0, 1, 1, zero_slots=True)
        eta, report = fe31_margin_search([[1]], THM31.bound, THM31.spec, 4.0, quads, 1, 2**-6)
        assert eta == 0.0
        assert report.verdict == "PASS"

    def test_margin_search_without_zero_slots(self):
        quads = make_quadruples(20, 0.5, 1, 1)
        eta, report = fe31_margin_search([[1]], THM31.bound, THM31.spec, 4.0, quads, 1, 2**-20)
        assert report.verdict == "PASS"
        assert eta == 0.0 or 2**-20 <= eta <= 1

    def test_margin_search_finds_positive_eta(self):
        # FE of the core vanishes; the perturbation sums to at most 0.0207 at eta = 1
        # against the allowance (1 * 0.5 * 1 * 0.75)^4 = 0.0198
        quads = [(vector(1), vector(0.5), vector(1), vector(0.75))]
        eta, report = fe31_margin_search([[1]], THM31.bound, THM31.spec, 4.0, quads, 1, 2**-20)
        assert eta in (1.0, 0.5)
        assert report.verdict == "PASS"
        assert report.max_ratio <= 1

    def test_fe34(self):
        quads = make_quadruples(50, 2.0, 1, 2, zero_slots=True)
        model = make_perturbed_model([[1]], THM32.bound, THM32.spec, 0.5, 2)
        report = audit_fe34(model, 1.0, 0.2, 3.0, quads, seed=2)
        assert report.verdict == "PASS"
        assert report.params == {"a": 1.0, "rho": 0.2, "r": 3.0}


class TestGrids:
    def test_grid_size(self):
        grid = make_grid(20, 2.0, dim=2)
        # 20 sample points, 2 * 2d axis points and the origin
        assert len(grid) == 20 + 8 + 1
        assert all(max(abs(x) for x in q.floats()) <= 2.0 for q in grid)
        assert grid[-1].floats() == [0.0] * 4

    def test_grid_is_deterministic(self):
        assert make_grid(10, 1.5) == make_grid(10, 1.5)

    def test_grid_points_distinct(self):
        grid = make_grid(50, 2.0)
        assert len(set(grid)) == len(grid)

    def test_axis_points(self):
        points = axis_points(2.0, 1)
        assert [q.floats() for q in points] == [[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0]]

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            make_grid(5, 0.0)
        with pytest.raises(ValueError):
            make_grid(-1, 1.0)

    def test_random_points(self):
        points = random_points(10, 1.0, 3, np.random.default_rng(0))
        assert len(points) == 10
        assert all(q.dim == 3 for q in points)

    def test_quadruples(self):
        quads = make_quadruples(10, 2.0, 2, 9, zero_slots=True)
        assert quads == make_quadruples(10, 2.0, 2, 9, zero_slots=True)
        assert quads[0][0].is_zero()
        assert quads[5][1].is_zero()
        assert not any(v.is_zero() for v in quads[1])

    def test_pair_helper(self):
        assert make_grid(0, 1.0)[0] == pair(1.0, 0.0)
