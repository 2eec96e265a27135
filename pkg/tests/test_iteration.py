import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from commonfix import scenarios
from commonfix.auxiliary import AuxFunction, ControlFunction
from commonfix.contraction import MapQuadruple
from commonfix.errors import ConfigurationError, ParseError
from commonfix.iteration import (
    IterationConfig,
    IterationTrace,
    Terminal,
    Witness,
    certify,
    check_compatible_on_sequence,
    check_weak_compatible_ordered,
    check_weakly_compatible,
    diagnose_cauchy,
    find_coincidence_points,
    jungck_iterate,
)
from commonfix.maps import PiecewiseMap
from commonfix.metric import Domain, Grid, sample

UNIT = Domain.interval(0.0, 1.0)


def lin(text, domain=UNIT):
    return PiecewiseMap.from_spec(text, domain)


@given(st.floats(0.0, 1.0))
def test_banach_trace_replays(x0):
    sc = scenarios.builtin("banach")
    q = sc.maps
    trace = jungck_iterate(q, IterationConfig((x0,)))
    tol = sc.iteration.preimage_tol
    for n, y in enumerate(trace.ys):
        source = q.T if n % 2 == 0 else q.S
        assert source(trace.xs[n]) == y
        if n + 1 < len(trace.xs):
            cover = q.A if n % 2 == 0 else q.B
            assert abs(cover(trace.xs[n + 1])[0] - y[0]) <= tol
    for n, a in enumerate(trace.alphas):
        assert a == abs(trace.ys[n + 1][0] - trace.ys[n][0])


def test_banach_converges_to_zero(banach):
    trace = jungck_iterate(banach.maps, banach.iteration)
    assert trace.converged
    assert abs(trace.terminal.z[0]) < 1e-8
    assert len(trace.ys) <= 60
    np.testing.assert_allclose(trace.alphas[:5], [0.25, 0.125, 0.0625, 0.03125, 0.015625])


def test_iteration_is_deterministic(steps):
    a = jungck_iterate(steps.maps, steps.iteration)
    b = jungck_iterate(steps.maps, steps.iteration)
    assert a.to_dict() == b.to_dict()
    assert a.to_csv() == b.to_csv()


def test_step_maps_converge_from_upper_branch(steps):
    trace = jungck_iterate(steps.maps, IterationConfig((0.7,)))
    assert trace.converged and trace.terminal.z == (1.0,)


def test_step_maps_hit_orphan_target(steps):
    trace = jungck_iterate(steps.maps, IterationConfig((0.1,)))
    assert trace.terminal.kind == "preimage_failure"
    assert trace.terminal.step == 0
    assert trace.terminal.target == (0.3125,)


def test_oscillation_exhausts_budget():
    q = MapQuadruple(lin("identity"), lin("identity"), lin("1 - x"), lin("1 - x"))
    trace = jungck_iterate(q, IterationConfig((0.0,), max_iter=11))
    assert trace.terminal.kind == "max_iter_reached"
    assert len(trace.ys) == len(trace.xs) == 11
    assert set(trace.alphas) == {1.0}


def test_x0_outside_domain(banach):
    with pytest.raises(ConfigurationError):
        jungck_iterate(banach.maps, IterationConfig((1.5,)))


@pytest.mark.parametrize(
    "kwargs",
    [dict(max_iter=0), dict(max_iter=2.5), dict(conv_tol=0.0), dict(eq_tol=-1.0), dict(resolution=1)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        IterationConfig((0.0,), **kwargs)


def test_trace_csv_layout(banach):
    trace = jungck_iterate(banach.maps, banach.iteration)
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    assert rows[0] == ["n", "x", "y", "alpha"]
    assert len(rows) == len(trace.ys) + 1
    assert rows[-1][3] == ""
    assert float(rows[1][2]) == 0.5 and float(rows[1][3]) == 0.25


def test_cauchy_diagnostics_pass_on_banach(banach):
    trace = jungck_iterate(banach.maps, banach.iteration)
    rep = diagnose_cauchy(trace, banach.psi, banach.phi, conv_tol=banach.iteration.conv_tol)
    assert rep.passed
    assert rep.steps_checked == len(trace.alphas) - 1


def _fake_trace(alphas):
    ys = [(0.0,)] * (len(alphas) + 1)
    return IterationTrace(ys, ys, list(alphas), Terminal("max_iter_reached"))


def test_cauchy_negative_control_rising_steps():
    rep = diagnose_cauchy(_fake_trace([0.1, 0.2, 0.05]), AuxFunction.power_sum(1, 1), ControlFunction.linear(0.5))
    assert not rep.monotone_ok and rep.first_monotone_failure == 0
    assert not rep.contraction_ok and rep.first_contraction_failure == 0
    assert not rep.passed


def test_cauchy_negative_control_slow_decay():
    # alpha_{n+1} = 0.9 alpha_n is monotone but not a 1/2-contraction of psi(a, a) = 2a
    a = 0.9 ** np.arange(10)
    rep = diagnose_cauchy(_fake_trace(a), AuxFunction.power_sum(1, 1), ControlFunction.linear(0.5))
    assert rep.monotone_ok
    assert not rep.contraction_ok
    assert rep.worst_contraction_excess == pytest.approx(2 * 0.9 - 1.0)


def test_cauchy_needs_two_steps():
    with pytest.raises(ConfigurationError):
        diagnose_cauchy(_fake_trace([0.1]), AuxFunction.power_sum(1, 1), ControlFunction.linear(0.5))


def test_certify_banach(banach):
    trace = jungck_iterate(banach.maps, banach.iteration)
    cert = certify(banach.maps, trace, banach.probes, banach.iteration)
    assert cert.certified
    assert cert.max_residual < 1e-8
    assert [row["start"] for row in cert.probes] == [[1.0], [0.7], [0.31]]
    assert cert.witnesses["u"] is not None


def test_certify_refuses_unconverged_trace(steps):
    trace = jungck_iterate(steps.maps, IterationConfig((0.1,)))
    with pytest.raises(ConfigurationError):
        certify(steps.maps, trace, [], steps.iteration)


def test_identity_maps_are_not_certified():
    sc = scenarios.builtin("identity_violation")
    trace = jungck_iterate(sc.maps, sc.iteration)
    cert = certify(sc.maps, trace, sc.probes, sc.iteration)
    # every point is a common fixed point, so the probes land on different limits
    assert cert.max_residual == 0.0
    assert not cert.certified


@pytest.mark.parametrize(
    "f, g, expected",
    [
        ("x/2", "identity", [0.0]),
        ("1 - x", "identity", [0.5]),
        ("x^2", "identity", [0.0, 1.0]),
        ("x/3 + 1/3", "x", [0.5]),
    ],
)
def test_coincidence_points_of_simple_maps(f, g, expected):
    rep = find_coincidence_points(lin(f), lin(g), sample(UNIT, Grid(101)), eq_tol=1e-9)
    assert [p.point[0] for p in rep] == pytest.approx(expected, abs=1e-9)
    assert not rep.maps_coincide


def test_coincidence_off_grid_is_refined():
    rep = find_coincidence_points(lin("x/3 + 0.2"), lin("identity"), sample(UNIT, Grid(11)), eq_tol=1e-9)
    assert len(rep) == 1 and rep.points[0].point[0] == pytest.approx(0.3, abs=1e-9)


def test_identical_maps_coincide_everywhere():
    rep = find_coincidence_points(lin("x/2"), lin("x/2"), sample(UNIT, Grid(11)))
    assert rep.maps_coincide and len(rep) == 11


def test_step_maps_coincide_only_at_one(step_maps):
    A, T = step_maps
    rep = find_coincidence_points(A, T, sample(A.domain, Grid(1201)), eq_tol=1e-6, pair=("A", "T"))
    assert [p.point for p in rep] == [(1.0,)]
    # the gap A - T tends to zero only from the left of 1/2
    assert [r["point"][0] for r in rep.rejected] == pytest.approx([0.5], abs=1e-6)


def test_coincidence_in_two_dimensions():
    d = Domain((0.0, 0.0), (1.0, 1.0))
    f = PiecewiseMap.from_spec(["(x_1 + 1/3)/2", "(x_2 + 1/3)/2"], d)
    rep = find_coincidence_points(f, PiecewiseMap.identity(d), sample(d, Grid(11)), eq_tol=1e-9)
    assert len(rep) == 1
    np.testing.assert_allclose(rep.points[0].point, [1 / 3, 1 / 3], atol=1e-9)


def test_weak_compatibility_at_coincidences(step_maps):
    A, T = step_maps
    rep = check_weakly_compatible(A, T, [(1.0,)], pair=("A", "T"))
    assert rep.passed and not rep.vacuous
    assert rep.commutators[0]["distance"] < 1e-12


def test_weak_compatibility_failure():
    # x/2 and x^2 meet at 1/2 with common value 1/4, where they do not commute
    f, g = lin("x/2"), lin("x^2")
    found = find_coincidence_points(f, g, sample(UNIT, Grid(101)), eq_tol=1e-9)
    assert [p.point[0] for p in found] == pytest.approx([0.0, 0.5])
    rep = check_weakly_compatible(f, g, found)
    assert not rep.passed
    assert max(c["distance"] for c in rep.commutators) == pytest.approx(1 / 16)


def test_weak_compatibility_vacuous_without_points():
    rep = check_weakly_compatible(lin("x"), lin("x/2"), [])
    assert rep.vacuous and rep.passed


def test_step_maps_not_compatible(step_maps):
    A, T = step_maps
    probe = check_compatible_on_sequence(A, T, "1/2 - 1/n", N=10**6, pair=("A", "T"))
    assert probe.premise
    assert probe.tail == pytest.approx(1 / 32, abs=1e-9)
    assert probe.verdict == "not compatible"


def test_step_maps_ordered_probes(step_maps):
    A, T = step_maps
    ta = check_weak_compatible_ordered(A, T, "1/2 - 1/n", pair=("A", "T"))
    at = check_weak_compatible_ordered(T, A, "1/2 - 1/n", pair=("T", "A"))
    assert ta.ordered_pair == ("T", "A") and ta.verdict == "premise not established (vacuous)"
    assert at.ordered_pair == ("A", "T") and at.verdict == "not weak compatible"


@pytest.mark.parametrize("witness", ["1/n", "1 - 1/n", "1/2 + 1/n^2"])
def test_banach_pair_is_compatible(banach, witness):
    A, T = banach.maps.A, banach.maps.T
    probe = check_compatible_on_sequence(A, T, witness)
    if probe.premise:
        assert probe.verdict == "compatible at witness"
    else:
        assert probe.verdict == "premise not established"
    assert check_weak_compatible_ordered(A, T, "1/n").verdict == "weak compatible at witness"


def test_witness_parsing_and_errors(banach):
    w = Witness.parse("1/2 - 1/n")
    assert w.at(4) == (0.25,)
    with pytest.raises(ParseError):
        Witness.parse("x + n")
    A, T = banach.maps.A, banach.maps.T
    with pytest.raises(ConfigurationError):
        check_compatible_on_sequence(A, T, "1/n", N=50)
    with pytest.raises(ConfigurationError):
        check_compatible_on_sequence(A, T, "2 + 1/n")
