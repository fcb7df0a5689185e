"""Batch front-end: file-driven certification, composition, inversion and
flow runs with machine-readable reports.

Exit codes: 0 success (report written), 1 input error (malformed files,
rejected preconditions), 2 mathematical certification failure (a checked
bound was violated; the report carries the witness).  Reports are JSON
with a stable key order and the seed recorded, so identical configs give
byte-identical output.  Flow runs also emit a trajectory CSV.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import calculus, flow as flow_mod, inverse as inverse_mod
from .errors import CertificationError, InputError
from .expressions import SmoothMap, parse_ast
from .jet import LipJet, certify, lip_grade
from .tensor import NormFamily, verify_norm_properties


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _load_jet(path) -> LipJet:
    return LipJet.from_dict(_load_json(path))


def _norm_from_args(args) -> NormFamily:
    if getattr(args, "family", None):
        return NormFamily.from_dict(_load_json(args.family))
    return NormFamily.from_spec(args.norm)


def _np_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_report(report: dict, path: str):
    text = json.dumps(report, sort_keys=True, indent=2, default=_np_default)
    with open(path, "w") as fh:
        fh.write(text + "\n")


# ---------------------------------------------------------------------------
# Handlers: each returns (report_payload, passed)
# ---------------------------------------------------------------------------


def _cmd_certify(args):
    jet = _load_jet(args.jet)
    if args.gamma is not None:
        if args.gamma > jet.grade.gamma + 1e-12:
            raise InputError(
                f"--gamma {args.gamma} exceeds the jet file grade {jet.grade.gamma}"
            )
        if args.gamma < jet.grade.gamma - 1e-12:
            jet = jet.truncate(lip_grade(args.gamma))
    fam = _norm_from_args(args)
    cert = certify(jet, fam)
    print(f"certify: M = {cert.M:.12g} (levels {cert.sup_levels:.6g}, ratios {cert.sup_ratios:.6g})")
    return {"certificate": cert.to_dict(), "norm": fam.to_dict()}, True


def _cmd_check_norms(args):
    fam = _norm_from_args(args)
    report = verify_norm_properties(fam, args.dim, args.kmax, args.samples, args.seed)
    for c in report.checks:
        print(f"check-norms: {c.name}: {'pass' if c.passed else 'FAIL'} (max ratio {c.max_ratio:.6g})")
    return {"norms": report.to_dict(), "family": fam.to_dict()}, report.passed


def _cmd_embed(args):
    jet = _load_jet(args.jet)
    fam = _norm_from_args(args)
    base_cert = certify(jet, fam)
    truncated, new_cert = calculus.embed(jet, args.gamma_prime, fam)
    const = calculus.embed_constant(jet.grade.gamma, args.gamma_prime, args.variant,
                                    L=args.diameter)
    bound = const.value * base_cert.M
    passed = new_cert.M <= bound * (1 + 1e-12)
    if args.jet_out:
        _write_report(truncated.to_dict(), args.jet_out)
    print(f"embed: M={base_cert.M:.6g} -> M'={new_cert.M:.6g}, bound {bound:.6g} "
          f"({'ok' if passed else 'VIOLATED'})")
    return {
        "certificate": base_cert.to_dict(),
        "embedded_certificate": new_cert.to_dict(),
        "embed_constant": const.to_dict(),
        "bound": bound,
        "passed": passed,
    }, passed


def _cmd_product(args):
    left = _load_jet(args.left)
    right = _load_jet(args.right)
    fam = _norm_from_args(args)
    h = calculus.cartesian_product(left, right, args.pair_norm)
    cert_l = certify(left, fam)
    cert_r = certify(right, fam)
    cert_h = calculus.product_certificate(h, fam, args.pair_norm)
    pair = {"l1": cert_l.M + cert_r.M,
            "l2": float(np.hypot(cert_l.M, cert_r.M)),
            "linf": max(cert_l.M, cert_r.M)}[args.pair_norm]
    passed = cert_h.M <= pair * (1 + 1e-12)
    if args.jet_out:
        _write_report(h.to_dict(), args.jet_out)
    print(f"product: M={cert_h.M:.6g}, pair bound {pair:.6g} ({'ok' if passed else 'VIOLATED'})")
    return {
        "left_certificate": cert_l.to_dict(),
        "right_certificate": cert_r.to_dict(),
        "product_certificate": cert_h.to_dict(),
        "pair_norm": args.pair_norm,
        "pair_bound": pair,
        "passed": passed,
    }, passed


def _cmd_compose(args):
    outer = _load_jet(args.outer)
    inner = _load_jet(args.inner)
    fam = _norm_from_args(args)
    composed = calculus.compose(outer, inner, fam, fam)
    cert_h = certify(composed, fam)
    cert_g = certify(outer, fam)
    cert_f = certify(inner, fam)
    realized = calculus.composition_constant(cert_h, cert_g, cert_f)
    if args.jet_out:
        _write_report(composed.to_dict(), args.jet_out)
    print(f"compose: M={cert_h.M:.6g}, realized constant {realized:.6g}")
    return {
        "composed_certificate": cert_h.to_dict(),
        "outer_certificate": cert_g.to_dict(),
        "inner_certificate": cert_f.to_dict(),
        "realized_constant": realized,
    }, True


def _cmd_estimate(args):
    jet = _load_jet(args.jet)
    fam = _norm_from_args(args)
    x0 = json.loads(args.x0)
    report = calculus.localize_vanishing(jet, x0, args.gamma_prime, args.delta, fam)
    print(f"estimate: local M'={report.local_certificate:.6g} vs bound {report.bound:.6g} "
          f"({'ok' if report.passed else 'VIOLATED'})")
    return {"estimate": report.to_dict()}, report.passed


def _load_problem(path) -> inverse_mod.InverseProblem:
    obj = _load_json(path)
    try:
        dim = int(obj["dim"])
        phi = SmoothMap([parse_ast(e, dim) for e in obj["phi"]], dim)
        return inverse_mod.InverseProblem(
            phi,
            np.asarray(obj["x0"], dtype=np.float64),
            float(obj["M1"]),
            float(obj["M2"]),
            float(obj["alpha"]),
            lip_grade(float(obj["gamma"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed problem file {path}: {exc}") from exc


def _cmd_invert(args):
    prob = _load_problem(args.problem)
    fam = _norm_from_args(args)
    targets = prob.sample_targets(args.targets, seed=args.seed)
    solves = []
    for y in targets:
        res = inverse_mod.solve_local_inverse(prob, y, tol=args.tol)
        entry = res.to_dict()
        entry["y"] = y.tolist()
        if not args.traces:
            entry.pop("trace")
        solves.append(entry)
    inner = inverse_mod.verify_inner_ball(prob, seed=args.seed)
    payload = {
        "radius": prob.radius,
        "alpha": prob.alpha,
        "condition": prob.condition,
        "solves": solves,
        "inner_ball": inner.to_dict(),
    }
    passed = inner.passed
    if args.jet_cloud:
        cloud = prob.sample_targets(args.jet_cloud, seed=args.seed + 1)
        jet, cert = inverse_mod.inverse_jet(prob, prob.grade, cloud, fam, tol=args.tol)
        payload["inverse_jet_certificate"] = cert.to_dict()
        if args.jet_out:
            _write_report(jet.to_dict(), args.jet_out)
    worst = max(s["residual"] for s in solves) if solves else 0.0
    print(f"invert: {len(solves)} targets solved, max residual {worst:.3g}, "
          f"inner ball {'ok' if inner.passed else 'VIOLATED'}")
    return payload, passed


def _cmd_rank(args):
    obj = _load_json(args.problem)
    try:
        dim = int(obj["dim"])
        m, p = (int(v) for v in obj["matrix_shape"])
        phi = SmoothMap([parse_ast(e, dim) for e in obj["field"]], dim)
        x0 = np.asarray(obj["x0"], dtype=np.float64)
        k = int(obj["k"])
        rows = obj["rows"]
        cols = obj["cols"]
        M2 = float(obj["M2"])
        gamma = float(obj["gamma"])
        cloud = np.asarray(obj["cloud"], dtype=np.float64)
        M1 = obj.get("M1")
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed rank problem {args.problem}: {exc}") from exc
    from .jet import jet_of_polynomial

    jet = jet_of_polynomial(phi, cloud, lip_grade(gamma))
    cert = inverse_mod.perturbation_rank_check(
        jet, x0, k, rows, cols, M2, (m, p), M1=M1
    )
    print(f"rank: delta={cert.delta:.6g}, checked {cert.n_checked} points, "
          f"{'ok' if cert.passed else 'VIOLATED'}")
    return {"rank_certificate": cert.to_dict()}, cert.passed


def _cmd_flow(args):
    field = flow_mod.VectorField.from_dict(_load_json(args.field))
    rng = np.random.default_rng(args.seed)
    payload = {"field": field.to_dict(), "T": args.T, "tol": args.tol, "check": args.check}
    certs = []
    passed = True
    y0 = np.asarray(json.loads(args.y0), dtype=np.float64) if args.y0 else np.mean(field.box, axis=1)

    traj = flow_mod.integrate(field, y0, args.T, args.tol)
    csv_path = args.csv or "flow_trajectory.csv"
    traj.to_csv(csv_path)
    payload["trajectory"] = {
        "csv": csv_path,
        "y0": y0.tolist(),
        "accepted": traj.accepted,
        "rejected": traj.rejected,
        "final_state": traj.final_state.tolist(),
    }

    if args.check == "space-lipschitz":
        lo, hi = field.box[:, 0], field.box[:, 1]
        pairs = rng.uniform(lo, hi, size=(args.pairs, 2, field.dim))
        certs = flow_mod.flow_space_lipschitz_check(field, args.T, pairs, args.tol)
    elif args.check == "jacobian":
        times, mats, cert = flow_mod.flow_jacobian(field, y0, args.T, args.tol)
        certs = [cert]
        payload["jacobian"] = {
            "times": times.tolist(),
            "matrices": [m.tolist() for m in mats],
        }
    elif args.check == "group":
        lo, hi = field.box[:, 0], field.box[:, 1]
        triples = np.column_stack([
            rng.uniform(-args.T / 2, args.T / 2, args.pairs),
            rng.uniform(-args.T / 2, args.T / 2, args.pairs),
            rng.uniform(lo, hi, size=(args.pairs, field.dim)),
        ])
        rep = flow_mod.flow_group_deviation(field, triples, args.tol)
        payload["group"] = rep
        passed = rep["passed"]
    elif args.check == "jet":
        grade = lip_grade(args.gamma or min(field.gamma, 2.0))
        r = args.radius or float(np.min(field.box[:, 1] - field.box[:, 0]) / 4)
        jet, cert, certs = flow_mod.flow_jet(
            field, y0, r, args.T, grade, (args.nt, args.nx), args.tol
        )
        payload["jet_certificate"] = cert.to_dict()
        if args.jet_out:
            _write_report(jet.to_dict(), args.jet_out)
    elif args.check == "integrate":
        pass
    else:
        raise InputError(f"unknown flow check {args.check!r}")

    if certs:
        payload["certificates"] = [c.to_dict() for c in certs]
        passed = passed and all(c.passed for c in certs)
    for c in certs:
        print(f"flow[{c.kind}]: margin {c.margin:.3g} "
              f"(allowance {c.allowance:.3g}) {'ok' if c.passed else 'VIOLATED'}")
    if args.check in ("integrate",):
        print(f"flow: integrated to t={args.T}, final state {traj.final_state.tolist()}")
    return payload, passed


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipjet",
        description="Certified Lipschitz-jet calculus: file-driven batch runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, norm=True):
        p.add_argument("--out", default=None, help="report JSON path")
        p.add_argument("--seed", type=int, default=0)
        if norm:
            p.add_argument("--norm", default="linf", help="l1 | linf | lp:Q")
            p.add_argument("--family", default=None, help="norm family JSON file")

    p = sub.add_parser("certify", help="certify a jet file")
    p.add_argument("--jet", required=True)
    p.add_argument("--gamma", type=float, default=None)
    common(p)

    p = sub.add_parser("check-norms", help="audit declared norm properties")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--samples", type=int, default=500)
    common(p)

    p = sub.add_parser("embed", help="lower the grade and check the constant")
    p.add_argument("--jet", required=True)
    p.add_argument("--gamma-prime", type=float, required=True, dest="gamma_prime")
    p.add_argument("--variant", default="general", choices=["general", "convex", "bounded"])
    p.add_argument("--diameter", type=float, default=None, help="L for the bounded variant")
    p.add_argument("--jet-out", default=None)
    common(p)

    p = sub.add_parser("product", help="cartesian product of two jets")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--pair-norm", default="linf", choices=["l1", "l2", "linf"], dest="pair_norm")
    p.add_argument("--jet-out", default=None)
    common(p)

    p = sub.add_parser("compose", help="compose outer o inner jets")
    p.add_argument("--outer", required=True)
    p.add_argument("--inner", required=True)
    p.add_argument("--jet-out", default=None)
    common(p)

    p = sub.add_parser("estimate", help="local bound at a vanishing point")
    p.add_argument("--jet", required=True)
    p.add_argument("--x0", required=True, help="JSON point, e.g. [0.0]")
    p.add_argument("--gamma-prime", type=float, required=True, dest="gamma_prime")
    p.add_argument("--delta", type=float, required=True)
    common(p)

    p = sub.add_parser("invert", help="solve local inverses from a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--targets", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--jet-cloud", type=int, default=0, dest="jet_cloud")
    p.add_argument("--jet-out", default=None)
    p.add_argument("--traces", action="store_true", help="include iteration traces")
    common(p)

    p = sub.add_parser("rank", help="certify a rank lower bound near a point")
    p.add_argument("--problem", required=True)
    common(p)

    p = sub.add_parser("flow", help="integrate a field and check flow bounds")
    p.add_argument("--field", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--check", default="integrate",
                   choices=["integrate", "space-lipschitz", "jacobian", "group", "jet"])
    p.add_argument("--y0", default=None, help="JSON initial state")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--nt", type=int, default=5)
    p.add_argument("--nx", type=int, default=5)
    p.add_argument("--csv", default=None)
    p.add_argument("--jet-out", default=None)
    common(p)
    return parser


_HANDLERS = {
    "certify": _cmd_certify,
    "check-norms": _cmd_check_norms,
    "embed": _cmd_embed,
    "product": _cmd_product,
    "compose": _cmd_compose,
    "estimate": _cmd_estimate,
    "invert": _cmd_invert,
    "rank": _cmd_rank,
    "flow": _cmd_flow,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_path = args.out or f"{args.command.replace('-', '_')}_report.json"
    report = {"command": args.command, "seed": args.seed}
    try:
        payload, passed = _HANDLERS[args.command](args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except CertificationError as exc:
        report["certification_error"] = str(exc)
        report["passed"] = False
        _write_report(report, out_path)
        print(f"certification failure: {exc}", file=sys.stderr)
        return 2
    report.update(payload)
    report["passed"] = passed
    _write_report(report, out_path)
    print(f"report written to {out_path}")
    return 0 if passed else 2


if __name__ == "__main__":
    sys.exit(main())
