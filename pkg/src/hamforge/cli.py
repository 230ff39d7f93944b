"""Command-line pipeline driver.

Commands: find-first-order, find-third-order, check-hamiltonian, schouten,
compat.  Each command reads and writes named artifacts in a session file and
prints a verdict plus a residual summary.  Exit code 0 means every verdict
passed, 1 means a mathematical verdict failed, 2 means a usage or parse
error.
"""

from __future__ import annotations

import argparse
import itertools
import sys

import sympy as sp

from .conditions import (
    check_third_order_hamiltonian,
    certificate_residuals,
    find_first_order,
    find_third_order,
)
from .expr import ExprError, canonical
from .geometry import invert_metric, velocity_matrix
from .operators import make_ferapontov, make_third_order
from .schouten import (
    CovectorSet,
    NonlocalRegistry,
    SchoutenContext,
    schouten_bracket,
)
from .session import Session, SessionError
from .systems import EtaSpec, generate_wdvv_n3, load_system

SYSTEM_KEY = "system"
FIRST_KEY = "first-order"
THIRD_KEY = "third-order"


class UsageError(Exception):
    pass


class VerdictFailure(Exception):
    pass


def _parse_eta(spec: str, workspace) -> EtaSpec:
    if spec == "eta4":
        return EtaSpec.eta4(workspace)
    if spec == "antidiagonal":
        return EtaSpec.canonical_antidiagonal(3)
    if spec == "identity":
        return EtaSpec(3, sp.eye(3).tolist())
    raise UsageError(
        f"unknown eta spec {spec!r} (choose eta4, antidiagonal, identity)")


def _parse_params(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for piece in text.split(","):
        name, sep, val = piece.partition("=")
        if not sep or val not in ("1", "-1"):
            raise UsageError(
                f"bad parameter assignment {piece!r} (expected name=1 or "
                "name=-1)")
        out[name.strip()] = int(val)
    return out


def _prepare_session(args) -> Session:
    """Load or create the session and make sure it holds a system."""
    import os
    session = None
    if os.path.exists(args.session):
        session = Session.load(args.session)
    if args.eta is not None:
        if session is None:
            session = Session.create(3, max_order=args.max_order)
        eta = _parse_eta(args.eta, session.workspace)
        equation, system = generate_wdvv_n3(eta, session.space)
        session.put_system(SYSTEM_KEY, system)
        from .expr import to_string
        session.put_info("wdvv", {"equation": to_string(equation)})
    elif args.system is not None:
        with open(args.system) as fh:
            text = fh.read()
        if session is None:
            probe = Session.create(1, max_order=args.max_order)
            loaded = load_system(text, probe.workspace,
                                 max_order=args.max_order)
            session = Session(probe.workspace, loaded.space)
            session.put_system(SYSTEM_KEY, loaded)
        else:
            loaded = load_system(text, session.workspace,
                                 max_order=args.max_order)
            session.put_system(SYSTEM_KEY, loaded)
    if session is None:
        raise UsageError(
            f"session file {args.session!r} not found; supply --eta or "
            "--system to create one")
    if not session.has(SYSTEM_KEY):
        raise UsageError("session holds no system; supply --eta or --system")
    return session


def _case_data(session: Session, fixed: dict):
    """(fluxes, parameter symbols) after applying fixed sign assignments."""
    system = session.get_system(SYSTEM_KEY)
    subs = {sp.Symbol(k): v for k, v in fixed.items()}
    fluxes = [canonical(f.subs(subs, simultaneous=True))
              for f in system.fluxes]
    params = [p for p in sorted(session.parameters, key=lambda s: s.name)
              if p not in subs]
    return fluxes, params


def _report(lines: list[str], args):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)


def _cmd_find_first_order(session: Session, args, lines: list[str]):
    fluxes, params = _case_data(session, _parse_params(args.params))
    result = find_first_order(session.space, fluxes, params)
    session.put_first_order(FIRST_KEY, result)
    from .expr import to_string
    lines.append(f"constants: alpha = {to_string(result.alpha)}, "
                 f"beta = {to_string(result.beta)}, "
                 f"gamma = {to_string(result.gamma)}")
    ok = True
    for signs, cert in sorted(result.cases.items(), reverse=True):
        nz = sum(1 for fam in cert.residuals.values()
                 for _, r in fam if sp.sympify(r) != 0)
        total = sum(len(fam) for fam in cert.residuals.values())
        label = _case_label(params, signs)
        lines.append(f"case {label}: {total - nz}/{total} residuals zero")
        ok = ok and nz == 0
    lines.append(f"find-first-order: {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise VerdictFailure


def _case_label(params, signs):
    if not params:
        return "-"
    return ",".join(f"{p}={s:+d}" for p, s in zip(params, signs))


def _cmd_find_third_order(session: Session, args, lines: list[str]):
    fluxes, params = _case_data(session, _parse_params(args.params))
    result = find_third_order(session.space, fluxes, params,
                              batch_size=args.batch_size)
    session.put_third_order(THIRD_KEY, result)
    ok = True
    for signs in sorted(result.dimensions, reverse=True):
        label = _case_label(params, signs)
        dim = result.dimensions[signs]
        lines.append(f"case {label}: solution dimension {dim}")
        if dim != 1:
            ok = False
        elif not result.reports[signs].passed:
            rep = result.reports[signs]
            lines.append(f"case {label}: conditions violated "
                         f"({len(rep.monge_violations)} cyclic, "
                         f"{len(rep.closure_violations)} closure)")
            ok = False
    lines.append(f"find-third-order: {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise VerdictFailure


def _first_order_cases(session: Session, fixed: dict):
    """Per sign case: (signs, label, covariant g, alpha, beta, gamma, V)."""
    data = session.get_first_order(FIRST_KEY)
    fluxes, params = _case_data(session, fixed)
    out = []
    for signs, case in sorted(data["cases"].items(), reverse=True):
        subs = dict(zip(data["params"], signs))
        fl = [canonical(f.subs(subs, simultaneous=True)) for f in fluxes]
        V = velocity_matrix(session.space, fl)
        consts = [canonical(sp.sympify(data[k]).subs(subs, simultaneous=True))
                  for k in ("alpha", "beta", "gamma")]
        label = _case_label(data["params"], signs)
        out.append((signs, label, case["g"], *consts, V))
    return out


def _cmd_check_hamiltonian(session: Session, args, lines: list[str]):
    checked = False
    ok = True
    if session.has(FIRST_KEY):
        checked = True
        for signs, label, g, al, be, ga, V in _first_order_cases(
                session, _parse_params(args.params)):
            res = certificate_residuals(session.space, g, V, al, be, ga)
            bad = [(fam, idx) for fam, famres in res.items()
                   for idx, r in famres if sp.sympify(r) != 0]
            if bad:
                ok = False
                fam, idx = bad[0]
                lines.append(f"first-order case {label}: FAIL "
                             f"({fam} at {idx})")
            else:
                lines.append(f"first-order case {label}: all conditions hold")
    if session.has(THIRD_KEY):
        data = session.get_third_order(THIRD_KEY)
        if data["h"] is not None:
            checked = True
            for signs in sorted(data["dimensions"], reverse=True):
                subs = dict(zip(data["params"], signs))
                h = data["h"].map(
                    lambda e: canonical(e.subs(subs, simultaneous=True)))
                from .geometry import Metric
                hm = Metric(session.space.n, h.m, "covariant")
                rep = check_third_order_hamiltonian(session.space, hm)
                label = _case_label(data["params"], signs)
                if rep.passed:
                    lines.append(
                        f"third-order case {label}: all conditions hold")
                else:
                    ok = False
                    witness = (rep.monge_violations or
                               rep.closure_violations)[0]
                    cond = ("cyclic-derivative" if rep.monge_violations
                            else "quadratic-closure")
                    lines.append(f"third-order case {label}: FAIL "
                                 f"({cond} at {witness[0]})")
    if not checked:
        raise UsageError("session holds no certificate or metric to check")
    lines.append(f"check-hamiltonian: {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise VerdictFailure


def _operators_for_case(session: Session, entry, third, signs):
    signs_key, label, g, al, be, ga, V = entry
    ops = []
    A1 = make_ferapontov(session.space, g, V, al, be, ga, tag="A1")
    ops.append(A1)
    if third is not None:
        subs = dict(zip(third["params"], signs))
        from .geometry import Metric
        h = Metric(session.space.n,
                   [[canonical(e.subs(subs, simultaneous=True))
                     for e in row] for row in third["h"].m], "covariant")
        ops.append(make_third_order(session.space, h, tag="A2"))
    return ops


def _bracket_zero(session: Session, A, B):
    covectors = CovectorSet(session.space)
    registry = NonlocalRegistry(session.space, covectors)
    for op in {A.tag: A, B.tag: B}.values():
        registry.register(op)
    ctx = SchoutenContext(session.space, covectors, registry)
    br = schouten_bracket(A, B, ctx)
    return br.is_zero()


def _run_brackets(session: Session, args, lines: list[str], need_both: bool):
    fixed = _parse_params(args.params)
    has_first = session.has(FIRST_KEY)
    third = session.get_third_order(THIRD_KEY) \
        if session.has(THIRD_KEY) else None
    if third is not None and third["h"] is None:
        third = None
    if need_both and (not has_first or third is None):
        raise UsageError("compat needs both the first-order certificate and "
                         "the third-order metric in the session")
    if not has_first and third is None:
        raise UsageError("session holds no operators to bracket")
    ok = True
    if has_first:
        entries = _first_order_cases(session, fixed)
    else:
        data = third
        fluxes, params = _case_data(session, fixed)
        entries = []
        for signs in sorted(data["dimensions"], reverse=True):
            subs = dict(zip(data["params"], signs))
            fl = [canonical(f.subs(subs, simultaneous=True)) for f in fluxes]
            entries.append((signs, _case_label(data["params"], signs),
                            None, None, None, None,
                            velocity_matrix(session.space, fl)))
    for entry in entries:
        signs, label = entry[0], entry[1]
        if entry[2] is not None:
            ops = _operators_for_case(session, entry, third, signs)
        else:
            subs = dict(zip(third["params"], signs))
            from .geometry import Metric
            h = Metric(session.space.n,
                       [[canonical(e.subs(subs, simultaneous=True))
                         for e in row] for row in third["h"].m], "covariant")
            ops = [make_third_order(session.space, h, tag="A2")]
        pairs = [(a, b) for i, a in enumerate(ops) for b in ops[i:]]
        for A, B in pairs:
            zero, witness = _bracket_zero(session, A, B)
            verdict = "zero" if zero else "NONZERO"
            lines.append(f"case {label}: [{A.tag},{B.tag}] {verdict}")
            if not zero:
                ok = False
                lines.append(f"  witness coefficient: {witness[2]}")
    name = "compat" if need_both else "schouten"
    lines.append(f"{name}: {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise VerdictFailure


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hamforge",
        description="Search for and certify Hamiltonian operators of "
                    "quasilinear systems of conservation laws.")
    ap.add_argument("command",
                    choices=["find-first-order", "find-third-order",
                             "check-hamiltonian", "schouten", "compat"])
    ap.add_argument("--session", required=True,
                    help="session file (created when --eta/--system given)")
    ap.add_argument("--eta", help="eta4 | antidiagonal | identity")
    ap.add_argument("--system", help="plain-text system file")
    ap.add_argument("--params",
                    help="fix sign parameters, e.g. lam=1,mu=-1")
    ap.add_argument("--batch-size", type=int, default=None)
    ap.add_argument("--max-order", type=int, default=8)
    ap.add_argument("--out", help="also write the report to this file")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    lines: list[str] = []
    try:
        session = _prepare_session(args)
        if args.command == "find-first-order":
            _cmd_find_first_order(session, args, lines)
        elif args.command == "find-third-order":
            _cmd_find_third_order(session, args, lines)
        elif args.command == "check-hamiltonian":
            _cmd_check_hamiltonian(session, args, lines)
        elif args.command == "schouten":
            _run_brackets(session, args, lines, need_both=False)
        elif args.command == "compat":
            _run_brackets(session, args, lines, need_both=True)
        session.save(args.session)
        _report(lines, args)
        return 0
    except VerdictFailure:
        session.save(args.session)
        _report(lines, args)
        return 1
    except (UsageError, SessionError, OSError) as exc:
        _report(lines + [f"error: {exc}"], args)
        return 2
    except ExprError as exc:
        _report(lines + [f"error ({args.command}): {exc}"], args)
        return 2


if __name__ == "__main__":
    sys.exit(main())
