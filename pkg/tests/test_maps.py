import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from commonfix.errors import ConfigurationError, CoverageError, ParseError, SelfMapError
from commonfix.maps import PiecewiseMap, image_of, parse_guard, preimage
from commonfix.metric import Domain, Grid, sample

from conftest import STEP_A, STEP_T

unit_x = st.floats(0.0, 1.0, allow_nan=False)


@pytest.mark.parametrize(
    "which, x, value",
    [
        ("T", 0.25, 0.3125),
        ("T", 0.45, 0.375),
        ("T", 1.0, 1.0),
        ("A", 0.4, 0.35),
        ("A", 0.0, 11 / 32),
        ("A", 0.5, 0.75),
        ("A", 0.375, 0.34375),
    ],
)
def test_step_map_branch_values(step_maps, which, x, value):
    A, T = step_maps
    m = A if which == "A" else T
    assert abs(m((x,))[0] - value) <= 1e-15


def test_first_matching_branch_wins(unit):
    m = PiecewiseMap.from_spec([{"if": "x < 1/2", "then": "0"}, {"if": "x < 1", "then": "1/2"},
                                {"if": "otherwise", "then": "1"}], unit)
    assert [m((v,))[0] for v in (0.2, 0.7, 1.0)] == [0.0, 0.5, 1.0]


@pytest.mark.parametrize(
    "text, inside, outside",
    [
        ("3/8 <= x < 1/2", [0.375, 0.49], [0.5, 0.37]),
        ("x >= 1/2", [0.5, 1.0], [0.4999]),
        ("1/2 > x", [0.0], [0.5]),
        ("otherwise", [0.0, 1.0], []),
    ],
)
def test_guard_masks(text, inside, outside):
    g = parse_guard(text, frozenset({"x"}))
    pts = np.array(inside + outside, dtype=float)[:, None]
    expected = [True] * len(inside) + [False] * len(outside)
    assert g.mask(pts).tolist() == expected


@pytest.mark.parametrize("text", ["x", "x + 1 < 2", "x < y", "2 < 3"])
def test_guard_rejects_non_comparisons(text):
    with pytest.raises(ParseError):
        parse_guard(text, frozenset({"x"}))


def test_coverage_gap_is_reported(unit):
    m = PiecewiseMap.from_spec([{"if": "x < 1/2", "then": "x"}, {"if": "x >= 0.6", "then": "x"}], unit)
    assert m.uncovered(np.array([[0.55], [0.2]])).tolist() == [True, False]
    with pytest.raises(CoverageError):
        m((0.55,))


def test_self_map_violation(unit):
    m = PiecewiseMap.from_spec("2*x", unit)
    assert m((0.5,)) == (1.0,)
    with pytest.raises(SelfMapError):
        m((0.75,))
    lenient = m.evaluate_many(np.array([[0.75]]), strict=False)
    assert np.isnan(lenient).all()


def test_unknown_coordinate(unit):
    with pytest.raises((ParseError, ConfigurationError)):
        PiecewiseMap.from_spec("x_2", unit)


def test_two_dimensional_components():
    d = Domain((0.0, 0.0), (1.0, 1.0))
    m = PiecewiseMap.from_spec(["x_2", "x_1/2"], d)
    assert m((0.2, 0.8)) == (0.8, 0.1)
    assert not m.is_identity
    assert PiecewiseMap.identity(d).is_identity


@pytest.mark.parametrize("spec", ["identity", "x/2", STEP_A, STEP_T,
                                  [{"if": "x < 1/2", "then": "x/4"}, {"if": "otherwise", "then": "x/5"}]])
def test_spec_round_trip(step_domain, spec):
    m = PiecewiseMap.from_spec(spec, step_domain)
    again = PiecewiseMap.from_spec(m.to_spec(), step_domain)
    X = sample(step_domain, Grid(241)).array
    np.testing.assert_array_equal(m.evaluate_many(X), again.evaluate_many(X))


@given(unit_x)
def test_preimage_of_affine_image(x):
    m = PiecewiseMap.from_spec("(1 + x)/4", Domain.interval(0.0, 1.0))
    target = m((x,))
    p = preimage(m, target, tol=1e-12)
    assert p is not None
    assert abs(m(p)[0] - target[0]) <= 1e-12


@given(st.floats(0.5, 1.2))
def test_preimage_is_smallest_for_step_map(x):
    T = PiecewiseMap.from_spec(STEP_T, Domain.interval(0.0, 1.2))
    assert preimage(T, T((x,)), tol=1e-9) == (0.5,)


def test_preimage_misses_orphan_value(step_maps):
    A, _ = step_maps
    # A never takes the value 10/32: its range is {11/32} u [11/32, 3/8) u [3/4, 1.1]
    assert preimage(A, (10 / 32,), tol=1e-9) is None
    assert preimage(A, (11 / 32,), tol=1e-9) == (0.0,)


@given(st.floats(0.0, 1.0))
def test_preimage_by_search_for_nonlinear_map(x):
    m = PiecewiseMap.from_spec("x^2", Domain.interval(0.0, 1.0))
    target = m((x,))
    p = preimage(m, target, tol=1e-9)
    assert p is not None
    assert abs(m(p)[0] - target[0]) <= 1e-9


def test_preimage_in_two_dimensions():
    d = Domain((0.0, 0.0), (1.0, 1.0))
    m = PiecewiseMap.from_spec(["x_1/2 + x_2/4", "x_2/2"], d)
    p = preimage(m, (0.3, 0.2), tol=1e-9, resolution=21)
    assert p is not None
    assert np.hypot(*(np.array(m(p)) - [0.3, 0.2])) <= 1e-9


def test_preimage_tolerance_must_be_positive(step_maps):
    with pytest.raises(ConfigurationError):
        preimage(step_maps[0], (0.5,), tol=0.0)


def test_image_of_grid(step_maps):
    _, T = step_maps
    vals = np.unique(image_of(T, sample(T.domain, Grid(121)).points))
    assert vals.tolist() == [0.3125, 0.375, 1.0]
