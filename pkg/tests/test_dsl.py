import logging
from fractions import Fraction

import pytest
from data.dsl_corpus import IDENTITY, INVALID, ROTATION, THM31_P4, THM32_R3, VALID

from feqstab.catalog import thm31, thm32
from feqstab.dsl import (
    SpecDocument,
    SpecError,
    document_for,
    export_entry,
    format_spec,
    parse_spec,
    tokenize,
)
from feqstab.engine import eigenfactor
from feqstab.feqtypes import ArgMap, BoundSpec, OperatorSpec
from feqstab.util import LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


@pytest.mark.parametrize(
    "text, n_operator, n_bound",
    VALID,
)
def test_parse_format_parse(text, n_operator, n_bound):
    document = parse_spec(text)
    assert len(document.operator.terms) == n_operator
    assert len(document.bound.terms) == n_bound
    again = parse_spec(format_spec(document))
    assert again == document
    assert format_spec(again) == format_spec(document)


@pytest.mark.parametrize("text, fragment", INVALID)
def test_invalid(text, fragment):
    with pytest.raises(SpecError) as info:
        parse_spec(text)
    error = info.value
    assert fragment in str(error)
    assert 1 <= error.line <= text.count("\n") + 1
    assert error.column >= 1


class TestTokens:
    def test_adjacent_coefficient(self):
        kinds = [t.kind for t in tokenize("2f")]
        assert kinds == ["number", "name", "eof"]

    def test_comments_dropped(self):
        texts = [t.text for t in tokenize("# all of this\n{ } # and this")]
        assert texts == ["{", "}", ""]

    def test_unexpected_character(self):
        with pytest.raises(SpecError) as info:
            parse_spec("operator { +1*f(x, y) } $")
        assert (info.value.line, info.value.column) == (1, 25)
        assert "unexpected character" in info.value.message


class TestPositions:
    def test_error_position(self):
        with pytest.raises(SpecError) as info:
            parse_spec("operator {\n  +1*f(x, z)\n}")
        assert (info.value.line, info.value.column) == (2, 11)
        assert str(info.value).startswith("2:11: unknown symbol z")

    def test_expected_tokens(self):
        with pytest.raises(SpecError) as info:
            parse_spec("bound { |x|^2 }")
        assert "'operator'" in info.value.expected

    def test_spans(self):
        document = parse_spec(THM31_P4)
        assert document.spans[("operator", 0)] == (3, 12)
        assert document.spans[("bound", 0)][0] == 4
        assert ("params", "p") in document.spans


class TestDocuments:
    def test_thm31_operator(self):
        document = parse_spec(THM31_P4)
        entry = thm31(4)
        assert document.operator.canonical() == entry.spec.canonical()
        assert document.param_dict == {"p": 4.0}
        assert eigenfactor(document.operator, document.bound) == pytest.approx(
            entry.factor, rel=1e-12
        )
        (term,) = document.bound.terms
        assert term.coef == entry.bound.terms[0].coef == 0.05308416
        assert (term.exp_first, term.exp_second) == (8.0, 8.0)

    def test_thm32_operator(self):
        document = parse_spec(THM32_R3)
        entry = thm32(3, 0.2)
        assert document.operator.canonical() == entry.spec.canonical()
        for parsed, built in zip(document.bound.canonical().terms, entry.bound.canonical().terms):
            assert parsed.coef == pytest.approx(built.coef, rel=1e-12)
            assert (parsed.exp_first, parsed.exp_second) == (built.exp_first, built.exp_second)
        assert eigenfactor(document.operator, document.bound) == pytest.approx(0.5)

    def test_identity(self):
        document = parse_spec(IDENTITY)
        assert document.operator == OperatorSpec([(1, ArgMap.identity())])
        assert eigenfactor(document.operator, document.bound) == 1.0

    def test_rotation_has_no_closed_form(self):
        document = parse_spec(ROTATION)
        assert not document.operator.is_diagonal
        assert eigenfactor(document.operator, document.bound) is None

    def test_decimal_coefficients_are_exact(self):
        document = parse_spec("operator { +1*f(-0.2 x, 3 y) }")
        (term,) = document.operator.terms
        assert term.map == ArgMap.diagonal(Fraction(-1, 5), 3)
        assert "-1/5 x" in format_spec(document)

    def test_division_forms_agree(self):
        first = parse_spec("operator { +2*f(x/2, y/2) }")
        second = parse_spec("operator { 2 f(1/2 x, 0.5*y) }")
        assert first == second

    def test_term_order_ignored(self):
        first = parse_spec("operator { +1*f(x, y) -1*f(x, -y) }")
        second = parse_spec("operator { -1*f(x, -y) +1*f(x, y) }")
        assert first == second
        assert hash(first) == hash(second)

    def test_params_change_identity(self):
        first = parse_spec("operator { +1*f(x, y) } params { p = 4 }")
        second = parse_spec("operator { +1*f(x, y) } params { p = 5 }")
        assert first != second

    def test_duplicate_param(self):
        with pytest.raises(SpecError, match="duplicate parameter p"):
            parse_spec("operator { +1*f(x, y) } params { p = 4 p = 5 }")

    def test_division_by_zero(self):
        with pytest.raises(SpecError, match="division by zero"):
            parse_spec("operator { +1*f(x/0, y) }")

    def test_constant_bound_term(self):
        document = parse_spec("operator { +1*f(x, y) } bound { 2 }")
        assert document.bound.terms[0].coef == 2.0
        assert document.bound.terms[0].exp_first == 0.0


class TestExport:
    @pytest.mark.parametrize("entry", [thm31(4), thm32(3, 0.2)], ids=["thm31", "thm32"])
    def test_export_parses(self, entry):
        text = export_entry(entry)
        assert text.startswith(f"# {entry.name}\n")
        document = parse_spec(text)
        params = {**entry.params, "probe": entry.probe_scale}
        assert document == document_for(entry.spec, entry.bound, params)
        assert document.param_dict["probe"] == entry.probe_scale
        assert isinstance(document, SpecDocument)

    def test_export_keeps_bound_bits(self):
        entry = thm31(4)
        document = parse_spec(export_entry(entry))
        assert document.bound.terms[0].coef == entry.bound.terms[0].coef

    def test_format_without_bound(self):
        text = format_spec(document_for(OperatorSpec([(2, ArgMap.diagonal(1, 1))]), BoundSpec(), {}))
        assert text == "operator {\n  +2 * f(x, y)\n}\n"
