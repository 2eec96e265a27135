"""Command-line entry point.

Exit codes: 0 when every check passed (or the certificate is valid), 1 on a
violation, failed audit or missing certificate, 2 on configuration or
runtime errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import scenarios
from .auxiliary import (
    AuxFunction,
    ControlFunction,
    audit_condition_A,
    audit_phi,
    positive_grid,
    square_grid,
)
from .contraction import check_inclusions, falsify, verify
from .errors import CommonFixError
from .iteration import (
    certify,
    check_compatible_on_sequence,
    check_weak_compatible_ordered,
    check_weakly_compatible,
    diagnose_cauchy,
    find_coincidence_points,
    jungck_iterate,
)
from .metric import Grid

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
MAX_PRINTED = 5
TIMESTAMP_FIELD = "generated_at"


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commonfix",
        description="Check contractive conditions, run the alternating iteration and probe "
                    "compatibility for quadruples of self-maps.",
        epilog="Built-in scenarios: " + ", ".join(scenarios.BUILTIN_NAMES),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_text, scenario_required=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--scenario", required=scenario_required,
                       help="built-in scenario name or path to a scenario file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key override applied before validation (repeatable)")
        p.add_argument("--output", type=Path, help="write the JSON report here")
        return p

    p = add("verify", "check the contractive condition on all sampled pairs")
    p.add_argument("--workers", type=int, default=1)

    for name, text in (("solve", "run the alternating iteration"),
                       ("certify", "run the iteration and certify the common fixed point")):
        p = add(name, text)
        p.add_argument("--trace", type=Path, help="write the trace CSV here")
        p.add_argument("--x0", type=_floats, help="start point (overrides iteration.x0)")

    p = add("audit-psi", "audit an auxiliary function for the required properties", False)
    p.add_argument("--family", help="psi family (power_sum, product_power, max_power, scaled_power)")
    p.add_argument("--params", type=_floats, help="p,q,r,lam (unused entries ignored)")
    p.add_argument("--expr", help="custom psi as an expression in s and t")
    p.add_argument("--grid", type=int, default=50, help="points per axis")
    p.add_argument("--t-max", type=float, help="grid extent (default: domain diameter, else 1)")

    p = add("audit-phi", "audit a control function", False)
    p.add_argument("--linear", type=float, metavar="R", help="phi(t) = R t")
    p.add_argument("--expr", help="custom phi as an expression in t")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--t-max", type=float, help="grid extent (default: domain diameter, else 1)")

    p = add("falsify", "search seeded random pairs for a violation")
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = add("probe-compat", "test compatibility notions along a witness sequence")
    p.add_argument("--witness", help="x_n as an expression in n (overrides compat.witness)")
    p.add_argument("--horizon", type=int, help="index N at which the tail is read")
    p.add_argument("--pair", help="two map names, e.g. A,T")

    p = add("coincidence", "find coincidence points and test commuting there")
    p.add_argument("--pair", help="two map names, e.g. A,T")
    p.add_argument("--grid", type=int, help="scan density")

    add("inclusions", "check that T(K) lies in A(K) and S(K) in B(K)")
    return parser


# -- helpers ----------------------------------------------------------------


def _report(args, payload: dict, passed: bool, scenario=None) -> dict:
    doc = {
        "command": args.command,
        "scenario": None if scenario is None else scenario.name,
        "passed": bool(passed),
        "result": payload,
        TIMESTAMP_FIELD: datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if scenario is not None:
        doc["config"] = scenario.to_dict()
    return doc


def _write_report(path, doc: dict):
    if path is None:
        return
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, tuple):
        return list(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(p) -> str:
    if p is None:
        return "-"
    return "(" + ", ".join(f"{c:.10g}" for c in p) + ")"


def _pair(text, default) -> tuple:
    if text is None:
        return tuple(default)
    names = tuple(s.strip() for s in text.split(","))
    if len(names) != 2 or not all(n in ("A", "B", "S", "T") for n in names):
        raise CommonFixError(f"--pair must name two of A, B, S, T, got {text!r}")
    return names


def _scenario(args, extra=()):
    return scenarios.resolve(args.scenario, list(args.overrides) + list(extra))


# -- commands ---------------------------------------------------------------


def cmd_verify(args):
    sc = _scenario(args)
    rep = verify(sc.form, sc.maps, sc.samples(), sc.cond_tol, args.workers)
    print(f"scenario {sc.name}: form {sc.form.tag}")
    print(f"pairs_checked {rep.pairs_checked}  worst_slack {rep.worst_slack:.6g}  "
          f"at x={_fmt(rep.worst_pair[0])} y={_fmt(rep.worst_pair[1])}")
    if rep.verdict:
        print("verdict: pass (no violation at this density)")
    else:
        print(f"verdict: fail ({rep.violation_count} violating pairs)")
        for v in rep.violations[:MAX_PRINTED]:
            print(f"  x={_fmt(v['x'])} y={_fmt(v['y'])} lhs={v['lhs']:.6g} rhs={v['rhs']:.6g} "
                  f"slack={v['slack']:.6g}")
    return _report(args, rep.to_dict(), rep.verdict, sc)


def _solve(args):
    extra = [] if args.x0 is None else [(["iteration", "x0"], list(args.x0))]
    sc = _scenario(args, extra)
    trace = jungck_iterate(sc.maps, sc.iteration)
    if args.trace is not None:
        Path(args.trace).write_text(trace.to_csv(), encoding="utf-8")
    term = trace.terminal
    print(f"scenario {sc.name}: x0={_fmt(sc.iteration.x0)} steps={len(trace.ys)} terminal={term.kind}")
    if term.kind == "converged":
        print(f"z = {_fmt(term.z)}  final alpha = {trace.alphas[-1]:.3g}")
    elif term.kind == "preimage_failure":
        print(f"no preimage for target {_fmt(term.target)} at step {term.step}")
    payload = {"trace": trace.to_dict()}
    if trace.converged and len(trace.alphas) >= 2 and sc.phi is not None:
        diag = diagnose_cauchy(trace, sc.psi, sc.phi, sc.cond_tol, conv_tol=sc.iteration.conv_tol)
        payload["cauchy"] = diag.to_dict()
        print(f"cauchy diagnostics: {'pass' if diag.passed else 'fail'}")
    return sc, trace, payload


def cmd_solve(args):
    sc, trace, payload = _solve(args)
    return _report(args, payload, trace.converged, sc)


def cmd_certify(args):
    sc, trace, payload = _solve(args)
    if not trace.converged:
        print("not certified: iteration did not converge")
        return _report(args, payload, False, sc)
    cert = certify(sc.maps, trace, sc.probes, sc.iteration)
    payload["certificate"] = cert.to_dict()
    res = "  ".join(f"d({k}z,z)={v:.3g}" for k, v in cert.residuals.items())
    print(res)
    for row in cert.probes:
        print(f"  probe {_fmt(row['start'])} -> {_fmt(row['limit'])} ({row['terminal']})")
    print(f"witnesses u={_fmt(cert.witnesses['u'])} v={_fmt(cert.witnesses['v'])}")
    print("certified" if cert.certified else "not certified")
    return _report(args, payload, cert.certified, sc)


def cmd_audit_psi(args):
    sc = None
    if args.expr is not None:
        psi = AuxFunction.custom(args.expr)
    elif args.family is not None:
        if args.params is None:
            raise CommonFixError("--family needs --params p,q,r,lam")
        psi = AuxFunction.from_tuple(args.family, tuple(args.params) + (0.0,) * (4 - len(args.params)))
    elif args.scenario is not None:
        sc = _scenario(args)
        psi = sc.psi
    else:
        raise CommonFixError("audit-psi needs --scenario, --family or --expr")
    t_max = _t_max(args, sc)
    rep = audit_condition_A(psi, square_grid(t_max, args.grid))
    _print_audit(rep)
    return _report(args, {"psi": psi.to_dict(), "t_max": t_max, **rep.to_dict()}, rep.passed, sc)


def cmd_audit_phi(args):
    sc = None
    if args.expr is not None:
        phi = ControlFunction.custom(args.expr)
    elif args.linear is not None:
        phi = ControlFunction.linear(args.linear)
    elif args.scenario is not None:
        sc = _scenario(args)
        if sc.phi is None:
            raise CommonFixError(f"scenario {sc.name} has no control function")
        phi = sc.phi
    else:
        raise CommonFixError("audit-phi needs --scenario, --linear or --expr")
    t_max = _t_max(args, sc)
    rep = audit_phi(phi, positive_grid(t_max, args.grid))
    _print_audit(rep)
    return _report(args, {"phi": phi.to_dict(), "t_max": t_max, **rep.to_dict()}, rep.passed, sc)


def _t_max(args, sc) -> float:
    # psi and phi only ever see distances within the domain
    if args.t_max is not None:
        return args.t_max
    return sc.domain.diameter if sc is not None else 1.0


def _print_audit(rep):
    print(f"audit of {rep.subject}")
    for c in rep.checks:
        where = "" if c.passed or c.witness is None else f"  witness {c.witness}"
        print(f"  {c.name:<24} {'pass' if c.passed else 'FAIL'}{where}")
    print("overall: " + ("pass" if rep.passed else "fail"))


def cmd_falsify(args):
    sc = _scenario(args)
    hit = falsify(sc.form, sc.maps, args.budget, args.seed, sc.cond_tol, args.workers)
    payload = {"budget": args.budget, "seed": args.seed, "violation": None if hit is None else hit.to_dict()}
    if hit is None:
        print(f"no violation in {args.budget} pairs (seed {args.seed})")
    else:
        print(f"violation at draw {hit.index}: x={_fmt(hit.x)} y={_fmt(hit.y)} "
              f"lhs={hit.lhs:.6g} rhs={hit.rhs:.6g} slack={hit.slack:.6g}")
    return _report(args, payload, hit is None, sc)


def cmd_probe_compat(args):
    sc = _scenario(args)
    settings = sc.compat_settings
    witness = args.witness or settings.get("witness")
    if witness is None:
        raise CommonFixError(f"scenario {sc.name} has no compat.witness; pass --witness")
    names = _pair(args.pair, settings.get("pair", ("A", "T")))
    N = args.horizon or int(settings.get("horizon", 10**6))
    tol = float(settings.get("tol", 1e-9))
    premise_tol = float(settings.get("premise_tol", 1e-6))
    f, g = sc.maps[names[0]], sc.maps[names[1]]
    kw = dict(N=N, tol=tol, premise_tol=premise_tol, metric=sc.metric, pair=names)
    forward = check_compatible_on_sequence(f, g, witness, **kw)
    ordered = [check_weak_compatible_ordered(f, g, witness, **kw),
               check_weak_compatible_ordered(g, f, witness, **{**kw, "pair": names[::-1]})]
    for probe in [forward] + ordered:
        label = f"({', '.join(probe.ordered_pair or probe.pair)})"
        print(f"{probe.notion:<24} {label}  tail(N)={probe.tail:.10g}  limit={probe.tail_limit:.3g}  "
              f"premise={'yes' if probe.premise else 'no'}  -> {probe.verdict}")
    violated = any(p.verdict.startswith("not ") for p in [forward] + ordered)
    payload = {"compatible": forward.to_dict(), "weak_compatible_ordered": [p.to_dict() for p in ordered]}
    return _report(args, payload, not violated, sc)


def cmd_coincidence(args):
    sc = _scenario(args)
    settings = sc.coincidence_settings
    names = _pair(args.pair, settings.get("pair", ("A", "T")))
    density = args.grid or int(settings.get("grid", 1001))
    eq_tol = float(settings.get("eq_tol", sc.iteration.eq_tol))
    f, g = sc.maps[names[0]], sc.maps[names[1]]
    found = find_coincidence_points(f, g, sc.samples(Grid(density)), eq_tol, names, sc.metric)
    weak = check_weakly_compatible(f, g, found, metric=sc.metric, pair=names)
    label = f"({names[0]}, {names[1]})"
    if found.maps_coincide:
        print(f"{label}: the maps coincide on every sampled point")
    else:
        print(f"{label}: {len(found)} coincidence point(s) at eq_tol {eq_tol:g}")
    for c in list(found)[:MAX_PRINTED]:
        print(f"  x={_fmt(c.point)} gap={c.gap:.3g}")
    for row in weak.commutators[:MAX_PRINTED]:
        print(f"  commutator at {_fmt(row['x'])}: {row['distance']:.3g}")
    status = "vacuous pass" if weak.vacuous else ("pass" if weak.passed else "fail")
    print(f"weakly compatible: {status}")
    payload = {"coincidence": found.to_dict(), "weakly_compatible": weak.to_dict(), "grid": density}
    return _report(args, payload, weak.passed, sc)


def cmd_inclusions(args):
    sc = _scenario(args)
    rep = check_inclusions(sc.maps, sc.samples(), sc.iteration.preimage_tol, sc.iteration.resolution)
    for name, c in rep.checks.items():
        status = "pass" if not c["failures"] else f"fail ({len(c['failures'])} of {c['samples']} samples)"
        print(f"{name}: {status}")
        for t in c["unreachable_targets"][:MAX_PRINTED]:
            print(f"  unreachable target {_fmt(t)}")
    return _report(args, rep.to_dict(), rep.passed, sc)


COMMANDS = {
    "verify": cmd_verify,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "audit-psi": cmd_audit_psi,
    "audit-phi": cmd_audit_phi,
    "falsify": cmd_falsify,
    "probe-compat": cmd_probe_compat,
    "coincidence": cmd_coincidence,
    "inclusions": cmd_inclusions,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = COMMANDS[args.command](args)
        _write_report(args.output, doc)
    except (CommonFixError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if doc["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
