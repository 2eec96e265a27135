import json

import pytest

from commonfix import scenarios
from commonfix.contraction import check_inclusions, verify
from commonfix.errors import ConfigurationError, ParseError, ValidationError
from commonfix.iteration import check_compatible_on_sequence, find_coincidence_points, jungck_iterate
from commonfix.metric import Grid


def live(sc, check):
    """Recompute one expectation's observable from scratch."""
    if check == "verify":
        return "pass" if verify(sc.form, sc.maps, sc.samples(), sc.cond_tol).verdict else "fail"
    if check == "fixed_point":
        trace = jungck_iterate(sc.maps, sc.iteration)
        return list(trace.terminal.z) if trace.converged else None
    if check == "coincidence":
        cs = sc.coincidence_settings
        f, g = (sc.maps[n] for n in cs["pair"])
        rep = find_coincidence_points(f, g, sc.samples(Grid(cs.get("grid", 1001))), cs["eq_tol"])
        return [list(p.point) for p in rep]
    if check == "inclusions":
        rep = check_inclusions(sc.maps, sc.samples(), sc.iteration.preimage_tol, sc.iteration.resolution)
        return sorted({t for c in rep.checks.values() for t in c["unreachable_targets"]})
    cs = sc.compat_settings
    f, g = (sc.maps[n] for n in cs["pair"])
    return check_compatible_on_sequence(f, g, cs["witness"], cs["horizon"], cs["tol"], cs["premise_tol"]).verdict


def matches(expected, observed):
    if isinstance(expected, str):
        return expected == observed
    if observed is None:
        return False
    flat_e = json.loads(json.dumps(expected))
    flat_o = [list(v) if isinstance(v, tuple) else v for v in observed]
    if len(flat_e) != len(flat_o):
        return False
    for e, o in zip(flat_e, flat_o):
        e, o = (e, o) if isinstance(e, list) else ([e], [o])
        if any(abs(a - b) > 1e-8 for a, b in zip(e, o)):
            return False
    return True


CASES = [
    (name, dict(e)["check"])
    for name in scenarios.BUILTIN_NAMES
    for e in scenarios.builtin_document(name)["expectations"]
]


@pytest.mark.parametrize("name, check", CASES)
def test_builtin_expectations_hold(name, check):
    sc = scenarios.builtin(name)
    exp = next(e for e in scenarios.builtin_document(name)["expectations"] if e["check"] == check)
    assert matches(exp["expect"], live(sc, check)), (exp, live(sc, check))


@pytest.mark.parametrize("name", scenarios.BUILTIN_NAMES)
def test_round_trip_through_text(name):
    sc = scenarios.builtin(name)
    again = scenarios.loads(scenarios.dumps(sc))
    assert again.to_dict() == sc.to_dict()
    assert scenarios.dumps(again) == scenarios.dumps(sc)


@pytest.mark.parametrize("name", scenarios.BUILTIN_NAMES)
def test_file_equals_builtin(tmp_path, name):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(scenarios.builtin_document(name)))
    assert scenarios.resolve(str(path)).to_dict() == scenarios.builtin(name).to_dict()


def test_overrides_are_typed():
    sc = scenarios.builtin("banach", ["iteration.conv_tol=1e-12", "sampling.grid=11", "name=custom"])
    assert sc.iteration.conv_tol == 1e-12
    assert sc.sampling == Grid(11)
    assert sc.name == "custom"


def test_sampling_override_switches_generator():
    sc = scenarios.builtin("banach", ['sampling.uniform=50', 'sampling.seed=4'])
    assert len(sc.samples()) == 50


def test_control_ratio_one_is_rejected():
    with pytest.raises(ConfigurationError, match="r must be < 1"):
        scenarios.builtin("banach", ["phi.r=1.0"])


def test_coverage_gap_is_rejected():
    gap = [{"if": "x < 1/2", "then": "x/2"}, {"if": "x >= 0.6", "then": "x/2"}]
    with pytest.raises(ValidationError, match="branch coverage"):
        scenarios.builtin("banach", [(["maps", "T"], gap)])


def test_non_self_map_is_rejected():
    with pytest.raises(ValidationError, match="self-map"):
        scenarios.builtin("banach", ["maps.T=2*x"])


def test_x0_outside_domain_is_rejected():
    with pytest.raises(ValidationError):
        scenarios.builtin("banach", ["iteration.x0=[3]"])


def test_missing_B_and_S_default_to_A_and_T():
    doc = scenarios.builtin_document("weakly_compatible_steps")
    del doc["maps"]["B"], doc["maps"]["S"]
    sc = scenarios.from_dict(doc)
    assert sc.maps.B == sc.maps.A and sc.maps.S == sc.maps.T


def test_parse_error_has_position():
    with pytest.raises(ParseError, match="line 2"):
        scenarios.loads('{"name": "x",\n "domain": }')


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda d: d.update(colour="red"), "unknown scenario section"),
        (lambda d: d.pop("psi"), "missing section"),
        (lambda d: d["iteration"].update(speed=2), "unexpected iteration field"),
        (lambda d: d.update(expectations=[{"check": "verify", "expect": "pass"}]), "provenance"),
        (lambda d: d.update(expectations=[{"check": "vibes", "expect": 1, "provenance": "derived"}]),
         "unknown expectation"),
        (lambda d: d.update(compat={"pair": ["A", "Z"], "witness": "1/n"}), "pair"),
        (lambda d: d.update(sampling={"uniform": 5}), "seed"),
    ],
)
def test_document_validation(mutate, error):
    doc = scenarios.builtin_document("banach")
    mutate(doc)
    with pytest.raises((ConfigurationError, ValidationError), match=error):
        scenarios.from_dict(doc)


def test_unknown_reference():
    with pytest.raises(ConfigurationError, match="neither a built-in"):
        scenarios.resolve("no_such_thing")


def test_bad_override_syntax():
    with pytest.raises(ConfigurationError):
        scenarios.parse_override("novalue")
    assert scenarios.parse_override("a.b=hello") == (["a", "b"], "hello")


def test_every_expectation_has_provenance():
    for name in scenarios.BUILTIN_NAMES:
        for e in scenarios.builtin_document(name)["expectations"]:
            assert e["provenance"] in scenarios.PROVENANCE
