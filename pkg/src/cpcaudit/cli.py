"""Command-line front end: ``cpcaudit build | audit | product``.

Exit codes:

* build: 0 ok, 2 a step failed c.p.c. verification (or no summable
  subsequence within the horizon), 3 bad config
* audit: 0 every verdict passes, 1 some verdict fails, 3 bad config
* product: 0 ok, 3 bad config or expression
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .audit import CSV_FIELDS, StageSchedule, bullet_product, reports_to_json, reports_to_rows
from .config import (AUDIT_PRESETS, SYSTEM_PRESETS, AuditConfig, audit_preset,
                     build_system, run_audit)
from .errors import ConfigError, ParameterError, ShapeError, StepRejected
from .expressions import parse_element
from .fdcstar import norm
from .groupalg import reduced_norm
from .groups import HorizonExhausted

EXIT_OK, EXIT_FAIL, EXIT_REJECTED, EXIT_CONFIG = 0, 1, 2, 3


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def _system_spec(args):
    if args.config:
        data = _load_json(args.config)
        # an audit config carries its system under "system"
        if isinstance(data, dict) and "system" in data and "conditions" in data:
            return data["system"]
        return data
    return args.preset or "z-folner"


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_build(args) -> int:
    try:
        spec = _system_spec(args)
        built = build_system(spec, verify=True, max_stage=args.max_stage)
    except StepRejected as exc:
        _err(f"{exc} (min Choi eigenvalue {exc.min_choi_eigenvalue})")
        return EXIT_REJECTED
    except HorizonExhausted as exc:
        _err(f"{exc}; partial certificate {exc.partial.to_dict()}")
        return EXIT_REJECTED
    except (ConfigError, ParameterError, ShapeError, TypeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(f"system: {built.name}")
    print(f"stages: {len(built.cpc)} (steps verified c.p.c. at tol {built.cpc.verified_tol:g})")
    for n, dims in enumerate(built.dims):
        print(f"  A_{n}: blocks {dims}")
    if args.certificate:
        if built.certificate is None:
            print("certificate: none (no summable subsequence requested)")
        else:
            print(f"certificate: {json.dumps(built.certificate.to_dict())}")
            check = built.approx.check_summable(range(len(built.approx)), built.certificate.eps)
            print(f"certificate re-check: {'pass' if check['pass'] else 'fail'}")
    return EXIT_OK


def _audit_config(args) -> AuditConfig:
    if args.config:
        cfg = AuditConfig.from_dict(_load_json(args.config))
    else:
        cfg = audit_preset(args.preset or "z-folner-encoding")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid_factor is not None:
        cfg.grid_factor = args.grid_factor
    if args.out is not None:
        cfg.output = args.out
    if args.format is not None:
        cfg.format = args.format
    return cfg


def render_reports(reports, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(reports_to_rows(reports))
        return buf.getvalue()
    return reports_to_json(reports) + "\n"


def cmd_audit(args) -> int:
    try:
        cfg = _audit_config(args)
        built = build_system(cfg.system, verify=True, max_stage=args.max_stage) if cfg.conditions else None
    except (ConfigError, ParameterError, ShapeError, StepRejected, HorizonExhausted, TypeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    reports = run_audit(cfg, built)
    text = render_reports(reports, cfg.format)
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            _err(f"cannot write {cfg.output}: {exc}")
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    for r in reports:
        print(f"{r.condition} (r={r.r}): {r.verdict}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def default_schedule(k: int, top: int) -> StageSchedule:
    """Doubling triples (j, 2j, 4j) with j a power of two, j >= max(k, 1), 4j <= top."""
    js = []
    j = 1
    while 4 * j <= top:
        if j >= k:
            js.append(j)
        j *= 2
    if not js:
        raise ParameterError(f"no doubling triple fits between stage {k} and {top}")
    return StageSchedule.doubling(js)


def _parse_schedule_arg(text: str) -> StageSchedule:
    try:
        js = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"schedule must be comma-separated integers, got {text!r}") from exc
    return StageSchedule.doubling(js)


def product_summary(built, k, x, y, schedule, grid_factor, top_terms=10) -> dict:
    bp = bullet_product(built.cpc, k, x, y, schedule)
    out = {"system": built.name, "k": k, "n": bp.n, "m": bp.m, "norm": norm(bp.representative),
           "diagnostics": bp.diagnostics}
    if built.approx is not None:
        a = built.approx.phi(bp.m, bp.representative)
        terms = sorted(a.coeffs.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:top_terms]
        out["pushforward"] = [{"element": list(g) if isinstance(g, tuple) else g, "re": c.real, "im": c.imag}
                              for g, c in terms]
        out["pushforward_support_size"] = len(a.coeffs)
        enc = reduced_norm(a, grid_factor)
        out["pushforward_norm"] = [enc.lower, enc.upper]
    return out


def cmd_product(args) -> int:
    try:
        spec = _system_spec(args)
        built = build_system(spec, verify=False, max_stage=args.max_stage)
        x = parse_element(args.x, built.cpc, args.k, built.approx, args.seed or 0)
        y = parse_element(args.y, built.cpc, args.k, built.approx, args.seed or 0)
        schedule = _parse_schedule_arg(args.schedule) if args.schedule else default_schedule(args.k, built.cpc.top)
        schedule.validate(built.cpc, args.k)
        summary = product_summary(built, args.k, x, y, schedule, args.grid_factor or 64)
    except (ConfigError, ParameterError, ShapeError, TypeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpcaudit", description="Audit c.p.c. systems built from Følner sets.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, presets):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON config file")
        src.add_argument("--preset", choices=presets, help="built-in preset")
        sp.add_argument("--max-stage", type=int, default=None, help="override the top stage")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--grid-factor", type=int, default=None, help="torus grid points per unit degree")

    b = sub.add_parser("build", help="build and verify a system")
    common(b, list(SYSTEM_PRESETS))
    b.add_argument("--certificate", action="store_true", help="print the summability certificate")
    b.set_defaults(func=cmd_build)

    a = sub.add_parser("audit", help="run an audit config or preset")
    common(a, list(AUDIT_PRESETS))
    a.add_argument("--out", help="write the report here instead of stdout")
    a.add_argument("--format", choices=["json", "csv"], default=None)
    a.set_defaults(func=cmd_audit)

    pr = sub.add_parser("product", help="estimate a limit product at the top of a schedule")
    common(pr, list(SYSTEM_PRESETS))
    pr.add_argument("--k", type=int, default=0, help="stage of x and y")
    pr.add_argument("--x", default="unit")
    pr.add_argument("--y", default="unit")
    pr.add_argument("--schedule", help="comma-separated j values of a doubling schedule")
    pr.set_defaults(func=cmd_product)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
