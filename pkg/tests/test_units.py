"""Dimension-checked arithmetic, unit parsing and series containers."""

from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from colonykit.errors import (
    DimensionMismatch,
    DivisionByZero,
    InvalidInput,
    InvalidMetadata,
)
from colonykit.units import (
    AREA,
    AREA_RATE,
    DIMENSIONLESS,
    INTENSITY,
    LENGTH,
    RATE,
    TIME,
    Dimension,
    Quantity,
    QuantitySeries,
    parse_unit,
    px_to_physical,
    quantity,
    unit_token,
)

finite_floats = st.floats(
    min_value=-1e9, max_value=1e9, allow_nan=False, allow_infinity=False
)


class TestArithmetic:
    def test_add_same_dimension(self):
        assert (quantity(1, "um2") + quantity(2, "um2")).to("um2") == 3.0

    def test_add_converts_to_canonical(self):
        total = quantity(1, "h") + quantity(30, "min")
        assert total.to("h") == pytest.approx(1.5)

    def test_add_cross_dimension_raises(self):
        with pytest.raises(DimensionMismatch):
            quantity(1, "um") + quantity(1, "h")

    def test_sub(self):
        assert (quantity(5, "h") - quantity(2, "h")).value == 3.0

    def test_mul_lengths_gives_area(self):
        product = quantity(2, "um") * quantity(3, "um")
        assert product.dimension == AREA
        assert product.value == 6.0

    def test_div_area_by_time(self):
        rate = quantity(6, "um2") / quantity(2, "h")
        assert rate.dimension == AREA_RATE
        assert rate.value == 3.0

    def test_mul_by_dimensionless(self):
        assert (quantity(4, "au") * 0.5).to("au") == 2.0

    def test_div_by_zero_raises(self):
        with pytest.raises(DivisionByZero):
            quantity(1, "um") / quantity(0, "h")
        with pytest.raises(DivisionByZero):
            quantity(1, "um") / 0.0

    def test_compare_cross_dimension_raises(self):
        with pytest.raises(DimensionMismatch):
            quantity(1, "um") < quantity(1, "h")
        with pytest.raises(DimensionMismatch):
            quantity(1, "um") == quantity(1, "h")

    def test_eq_non_quantity_is_not_equal(self):
        assert (quantity(1, "um") == object()) is False
        assert (quantity(1, "um") != object()) is True

    def test_to_wrong_dimension_raises(self):
        with pytest.raises(DimensionMismatch):
            quantity(1, "um").to("h")

    @given(finite_floats, finite_floats)
    def test_add_commutes(self, a, b):
        qa, qb = quantity(a, "um2"), quantity(b, "um2")
        assert (qa + qb).value == (qb + qa).value

    @given(finite_floats)
    def test_zero_identity(self, a):
        qa = quantity(a, "h")
        assert (qa + quantity(0, "h")).value == qa.value

    def test_dimension_exponents_additive(self):
        # exhaustive over exponents in [-2, 2]^3 for both operands
        span = range(-2, 3)
        dims = [Dimension(*e) for e in itertools.product(span, span, span)]
        for da, db in itertools.product(dims, repeat=2):
            product = Quantity(1.0, da) * Quantity(1.0, db)
            assert product.dimension == Dimension(
                da.length + db.length,
                da.time + db.time,
                da.intensity + db.intensity,
            )

    @given(
        finite_floats,
        st.sampled_from(["um", "nm", "mm", "h", "min", "s", "au", "um2/h"]),
    )
    def test_display_round_trip(self, value, unit):
        q = quantity(value, unit)
        back = quantity(q.to(unit), unit)
        assert back.value == pytest.approx(q.value, rel=1e-12, abs=1e-300)


class TestParseUnit:
    @pytest.mark.parametrize(
        "token,dim,scale",
        [
            ("um", LENGTH, 1.0),
            ("um2", AREA, 1.0),
            ("h", TIME, 1.0),
            ("min", TIME, 1.0 / 60.0),
            ("s", TIME, 1.0 / 3600.0),
            ("nm", LENGTH, 1e-3),
            ("mm", LENGTH, 1e3),
            ("au", INTENSITY, 1.0),
            ("1/h", RATE, 1.0),
            ("um2/h", AREA_RATE, 1.0),
            ("", DIMENSIONLESS, 1.0),
            ("1", DIMENSIONLESS, 1.0),
        ],
    )
    def test_known_tokens(self, token, dim, scale):
        got_dim, got_scale = parse_unit(token)
        assert got_dim == dim
        assert got_scale == pytest.approx(scale)

    @pytest.mark.parametrize("bad", ["parsec", "um//h", "um-2", "h0"])
    def test_bad_tokens(self, bad):
        with pytest.raises(InvalidInput):
            parse_unit(bad)

    @pytest.mark.parametrize(
        "dim,token",
        [
            (AREA, "um2"),
            (RATE, "1/h"),
            (AREA_RATE, "um2/h"),
            (INTENSITY, "au"),
            (TIME, "h"),
            (DIMENSIONLESS, ""),
        ],
    )
    def test_unit_token_exact(self, dim, token):
        assert unit_token(dim) == token

    def test_token_round_trip(self):
        span = range(-2, 3)
        for e in itertools.product(span, span, span):
            dim = Dimension(*e)
            parsed, scale = parse_unit(unit_token(dim) or "1")
            assert parsed == dim
            assert scale == 1.0


class TestPxToPhysical:
    def test_area_conversion(self):
        q = px_to_physical(100.0, 2, quantity(0.065, "um"))
        assert q.dimension == AREA
        assert q.to("um2") == pytest.approx(0.4225)

    def test_length_conversion(self):
        assert px_to_physical(10.0, 1, quantity(0.1, "um")).to("um") == \
            pytest.approx(1.0)

    def test_identity_scale(self):
        assert px_to_physical(7.0, 2, quantity(1.0, "um")).to("um2") == 7.0

    def test_non_positive_pixel_size(self):
        with pytest.raises(InvalidMetadata):
            px_to_physical(1.0, 1, quantity(0.0, "um"))
        with pytest.raises(InvalidMetadata):
            px_to_physical(1.0, 1, quantity(-0.1, "um"))

    def test_wrong_dimension(self):
        with pytest.raises(DimensionMismatch):
            px_to_physical(1.0, 1, quantity(0.1, "h"))


class TestQuantityConstructor:
    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInput):
            quantity(math.nan, "um")
        with pytest.raises(InvalidInput):
            quantity(math.inf, "h")

    def test_rejects_non_number(self):
        with pytest.raises(InvalidInput):
            quantity("3", "um")
        with pytest.raises(InvalidInput):
            quantity(True, "um")

    def test_min_stored_as_hours(self):
        assert quantity(30, "min").value == pytest.approx(0.5)


class TestQuantitySeries:
    def test_basic(self):
        s = QuantitySeries([0.0, 1.0, 2.0], [1.0, 2.0, 4.0], AREA, "TSCA")
        assert len(s) == 3
        assert s.value_unit == "um2"
        assert s.name == "TSCA"

    def test_times_must_increase(self):
        with pytest.raises(InvalidInput):
            QuantitySeries([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(InvalidInput):
            QuantitySeries([1.0, 0.0], [1.0, 2.0])

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            QuantitySeries([0.0, 1.0], [1.0])

    def test_arrays_read_only(self):
        s = QuantitySeries([0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 99.0

    def test_from_quantities(self):
        s = QuantitySeries.from_quantities(
            [quantity(0, "h"), quantity(30, "min")],
            [quantity(1, "um2"), quantity(2, "um2")],
            name="areas",
        )
        assert s.times_h.tolist() == [0.0, 0.5]
        assert s.dimension == AREA

    def test_from_quantities_rejects_mixed_dims(self):
        with pytest.raises(DimensionMismatch):
            QuantitySeries.from_quantities(
                [quantity(0, "h"), quantity(1, "h")],
                [quantity(1, "um2"), quantity(2, "h")],
            )

    def test_from_quantities_rejects_non_time_axis(self):
        with pytest.raises(DimensionMismatch):
            QuantitySeries.from_quantities(
                [quantity(0, "um"), quantity(1, "um")],
                [quantity(1, "um2"), quantity(2, "um2")],
            )
