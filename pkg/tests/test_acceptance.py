"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also printed (uncaptured) during a normal run.
"""
import json

import numpy as np
import pytest

from commonfix import scenarios
from commonfix.auxiliary import AuxFunction, ControlFunction, audit_condition_A, square_grid
from commonfix.cli import TIMESTAMP_FIELD, main
from commonfix.contraction import ConditionForm, check_inclusions, falsify, pair_tables, verify
from commonfix.expr import parse, unparse
from commonfix.iteration import (
    certify,
    check_compatible_on_sequence,
    check_weakly_compatible,
    diagnose_cauchy,
    find_coincidence_points,
    jungck_iterate,
)
from commonfix.metric import Grid


@pytest.fixture
def announce(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
        assert passed, detail

    return emit


def test_criterion_1_step_map_example(announce):
    sc = scenarios.builtin("weakly_compatible_steps")
    A, T = sc.maps.A, sc.maps.T
    found = find_coincidence_points(A, T, sc.samples(Grid(1201)), eq_tol=1e-6, pair=("A", "T"))
    points = [p.point for p in found]
    weak = check_weakly_compatible(A, T, found, pair=("A", "T"))
    commutator = max(c["distance"] for c in weak.commutators) if weak.commutators else None
    probe = check_compatible_on_sequence(A, T, "1/2 - 1/n", N=10**6, pair=("A", "T"))
    ok = (
        points == [(1.0,)]
        and weak.passed and commutator is not None and commutator < 1e-12
        and probe.premise and abs(probe.tail - 1 / 32) <= 1e-9
        and probe.verdict == "not compatible"
    )
    announce(1, "step-map example", ok,
             f"coincidences={points} commutator={commutator} tail={probe.tail!r} "
             f"premise={probe.premise} verdict={probe.verdict!r}")


def test_criterion_2_banach_end_to_end(announce):
    sc = scenarios.builtin("banach")
    rep = verify(sc.form, sc.maps, sc.samples(Grid(101)))
    trace = jungck_iterate(sc.maps, sc.iteration)
    z = trace.terminal.z
    cert = certify(sc.maps, trace, [(1.0,), (0.7,), (0.31,)], sc.iteration)
    limits = [row["limit"][0] for row in cert.probes if row["limit"] is not None]
    spread = max(limits) - min(limits) if len(limits) == 3 else float("inf")
    ok = (
        rep.pairs_checked == 101 * 101 and rep.worst_slack >= -1e-9
        and trace.converged and abs(z[0]) < 1e-8 and len(trace.ys) <= 60
        and spread <= 1e-6 and cert.max_residual < 1e-8
    )
    announce(2, "banach end to end", ok,
             f"pairs={rep.pairs_checked} worst_slack={rep.worst_slack:.3g} z={z} iterations={len(trace.ys)} "
             f"probe_spread={spread:.3g} max_residual={cert.max_residual:.3g}")


def _passing_builtins():
    out = []
    for name in scenarios.BUILTIN_NAMES:
        sc = scenarios.builtin(name)
        if verify(sc.form, sc.maps, sc.samples(), sc.cond_tol).verdict:
            out.append(sc)
    return out


def test_criterion_3_cauchy_diagnostics(announce):
    rows = []
    ok = True
    for sc in _passing_builtins():
        trace = jungck_iterate(sc.maps, sc.iteration)
        # the summed form carries no control function; its coefficient r acts as phi(t) = r t
        phi = sc.phi if sc.phi is not None else ControlFunction.linear(sc.form.r)
        rep = diagnose_cauchy(trace, sc.psi, phi, tol=1e-9, monotone_tol=1e-12)
        good = rep.contraction_ok and rep.monotone_ok
        ok &= good
        rows.append(f"{sc.name}:{'ok' if good else 'bad'}({rep.steps_checked} steps)")
    ok &= len(rows) >= 4
    announce(3, "cauchy diagnostics", ok, " ".join(rows))


FAMILY_PARAMS = [(1, 1, 1, 1), (2, 1, 1, 1), (1, 2, 0.5, 2)]
FAMILIES = ("power_sum", "product_power", "max_power", "scaled_power")


@pytest.mark.xfail(
    strict=True,
    reason="s^p t^q + t^r vanishes on the whole axis t = 0, so the product_power family "
           "cannot satisfy positivity on the axis for any parameters",
)
def test_criterion_4_condition_audits(announce):
    grid = square_grid(1.0, 50)
    failed = []
    zero_rule_ok = True
    for family in FAMILIES:
        for params in FAMILY_PARAMS:
            rep = audit_condition_A(AuxFunction.from_tuple(family, params), grid)
            if not rep.passed:
                failed.append(f"{family}{params}[{','.join(c.name for c in rep.checks if not c.passed)}]")
            else:
                zero_rule_ok &= rep.check("zero_forces_first_zero").passed
    customs_fail_positivity = all(
        not audit_condition_A(AuxFunction.custom(text), grid).check("positive_on_axis").passed
        for text in ("t", "s*t")
    )
    ok = not failed and customs_fail_positivity and zero_rule_ok
    announce(4, "condition audits", ok,
             f"families failing={failed or 'none'} customs_fail_positivity={customs_fail_positivity} "
             f"zero_forces_first_zero_on_passing={zero_rule_ok}")


def test_criterion_5_negative_control(announce):
    sc = scenarios.builtin("identity_violation")
    rep = verify(sc.form, sc.maps, sc.samples())
    hits = [falsify(sc.form, sc.maps, 1000, 7, sc.cond_tol, workers=w) for w in (1, 1, 2, 4)]
    same = all(h == hits[0] for h in hits)
    ok = (not rep.verdict) and hits[0] is not None and same
    first = None if hits[0] is None else (hits[0].index, hits[0].x, hits[0].y)
    announce(5, "negative control", ok,
             f"verify={'pass' if rep.verdict else 'fail'} violations={rep.violation_count} "
             f"first_hit={first} identical_across_runs_and_workers={same}")


def test_criterion_6_reduction_identities(announce):
    worst = 0.0
    for name in ("banach", "four_maps", "weakly_compatible_steps"):
        sc = scenarios.builtin(name)
        X = sc.samples(Grid(101)).array
        # fixed power-family psi(s, t) = s with phi(t) = r t, against the linear-control form
        # fed the same psi as a parsed expression (evaluated on the independent numpy path)
        a = pair_tables(ConditionForm.power_family(1, 0, 0, 1, ControlFunction.linear(0.7)), sc.maps, X, X)
        b = pair_tables(ConditionForm.linear(AuxFunction.custom("s"), 0.7), sc.maps, X, X)
        worst = max(worst, *(float(np.max(np.abs(u - v))) for u, v in zip(a, b)))
        # single-pair form on (A, A, T, T) against the general form on the same quadruple
        psi, phi = AuxFunction.power_sum(1, 2), ControlFunction.custom("t/(1 + t)")
        q = sc.maps.__class__.pair(sc.maps.A, sc.maps.T, sc.metric)
        c = pair_tables(ConditionForm.single_pair(psi, phi), sc.maps, X, X)
        d = pair_tables(ConditionForm.phi_max(psi, phi), q, X, X)
        worst = max(worst, *(float(np.max(np.abs(u - v))) for u, v in zip(c, d)))
    announce(6, "reduction identities", worst <= 1e-12, f"max pairwise difference {worst:.3g} over 101^2 pairs")


def _builtin_expressions():
    texts = []
    for name in scenarios.BUILTIN_NAMES:
        sc = scenarios.builtin(name)
        for key in ("A", "B", "S", "T"):
            texts.extend(unparse(e) for e in sc.maps[key].expressions())
        doc = scenarios.builtin_document(name)
        for branches in doc["maps"].values():
            if isinstance(branches, list):
                texts.extend(b["then"] for b in branches)
            elif branches != "identity":
                texts.append(branches)
    return texts


def _report_bytes(tmp_path, argv, tag):
    path = tmp_path / f"{tag}.json"
    main(argv + ["--output", str(path)])
    doc = json.loads(path.read_text())
    doc.pop(TIMESTAMP_FIELD)
    return json.dumps(doc, sort_keys=True, indent=2)


def test_criterion_7_parser_and_determinism(announce, tmp_path, capsys):
    texts = _builtin_expressions()
    bad = []
    for text in texts:
        once = parse(text)
        if parse(unparse(once)) != once:
            bad.append(text)
    sc = scenarios.builtin("weakly_compatible_steps")
    A, T = sc.maps.A, sc.maps.T
    observed = [T((0.25,))[0], T((0.45,))[0], T((1.0,))[0], A((0.4,))[0]]
    values_ok = all(abs(o - e) <= 1e-15 for o, e in zip(observed, [0.3125, 0.375, 1.0, 0.35]))
    commands = [
        ["verify", "--scenario", "weakly_compatible_steps"],
        ["certify", "--scenario", "banach"],
        ["falsify", "--scenario", "identity_violation", "--seed", "7"],
        ["probe-compat", "--scenario", "weakly_compatible_steps"],
        ["coincidence", "--scenario", "weakly_compatible_steps"],
        ["inclusions", "--scenario", "weakly_compatible_steps"],
    ]
    unstable = [c[0] for i, c in enumerate(commands)
                if _report_bytes(tmp_path, c, f"a{i}") != _report_bytes(tmp_path, c, f"b{i}")]
    capsys.readouterr()
    ok = not bad and values_ok and not unstable
    announce(7, "parser and determinism", ok,
             f"{len(texts)} expressions, non-idempotent={bad or 'none'} step values={observed} "
             f"unstable reports={unstable or 'none'}")


def test_criterion_8_inclusion_diagnostics(announce):
    sc = scenarios.builtin("weakly_compatible_steps")
    rep = check_inclusions(sc.maps, sc.samples(), sc.iteration.preimage_tol, sc.iteration.resolution)
    targets = rep.checks["T(K) in A(K)"]["unreachable_targets"]
    banach = scenarios.builtin("banach")
    clean = check_inclusions(banach.maps, banach.samples()).passed
    ok = (not rep.passed) and targets == [(10 / 32,)] and clean
    announce(8, "inclusion diagnostics", ok,
             f"step-map A-preimage failures at {targets}; banach passes={clean}")
