"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 divergence where a finite
value was required, 1 anything else.  Reports go to stdout, diagnostics
to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import funcdsl
from .conditions import (
    ExponentPair,
    constant_bound_wedestig,
    dual_weight_thm1,
    dual_weight_thm1b,
    geometric_condition,
    muckenhoupt_constant,
    wedestig_as,
)
from .errors import DivergenceError, HardyMeanError, ValidationError
from .estimator import SuiteSpec, TestFamily, best_constant_search, inequality_ratio, make_operator_for, run_suite
from .means import make_mean_function, phi_class_member
from .operators import evaluate
from .quadrature import QuadConfig
from .reduction import make_context, verify_reduction

log = logging.getLogger("hardymean")

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_DIVERGED = 0, 1, 2, 3
COMMANDS = ("eval-op", "classify-g", "check-condition", "dual-weight", "reduce", "ratio", "search", "suite")
CONDITION_KINDS = ("muckenhoupt", "geometric", "wedestig", "wedestig-bound")
SUITE_SECTIONS = ("setting", "conditions", "families", "checks", "quadrature")
SUITE_CONDITIONS = ("muckenhoupt", "geometric", "wedestig", "wedestig_bound", "classical")
SUITE_CHECKS = ("ratio_bound", "jensen", "reduction", "dual_weight", "modular_dual")


class SuiteSchemaError(ValidationError):
    pass


@dataclass
class RunConfig:
    command: str
    setting: dict
    output: str = "text"
    quad: QuadConfig = field(default_factory=QuadConfig)


@dataclass
class Outcome:
    results: list
    warnings: list = field(default_factory=list)
    must_be_finite: bool = False
    diverged: bool = False


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------


def _floats(text: str, where: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"{where}: expected numbers, got {text!r}") from None


def _float(text, where: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a number, got {text!r}") from None


def _sources(text: str) -> tuple:
    return tuple(s.strip() for s in text.split("|") if s.strip())


def _family(kind: str, grid: str, partition: str | None, members: str | None, where: str, name: str = "") -> TestFamily:
    if kind == "step":
        if not partition:
            raise ValidationError(f"{where}.partition: required for step families")
        params = tuple(_floats(chunk, f"{where}.grid") for chunk in grid.split("|"))
        return TestFamily("step", params, _floats(partition, f"{where}.partition"), name=name)
    if kind == "custom":
        if not members:
            raise ValidationError(f"{where}.members: required for custom families")
        srcs = _sources(members)
        for s in srcs:
            funcdsl.parse(s)
        return TestFamily("custom", tuple(range(len(srcs))), sources=srcs, name=name)
    return TestFamily(kind, _floats(grid, f"{where}.grid"), name=name)


# --------------------------------------------------------------------------
# suite files
# --------------------------------------------------------------------------


def _grouped(section) -> dict:
    """``name.key = value`` entries as ``{name: {key: value}}``; bare keys go under ``""``."""
    out: dict = {}
    for key, value in section.items():
        head, _, tail = key.partition(".")
        if tail:
            out.setdefault(head, {})[tail] = value
        else:
            out.setdefault("", {})[head] = value
    return out


def load_suite(path) -> SuiteSpec:
    """Parse an INI-style suite file into a validated :class:`SuiteSpec`.

    Schema errors name the offending field as ``section.key``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SuiteSchemaError(f"{path}: {exc.strerror}") from None
    if not text.strip():
        raise SuiteSchemaError(f"{path}: empty suite file (need at least a [setting] section)")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise SuiteSchemaError(f"{path}: {exc}") from None
    unknown = [s for s in parser.sections() if s not in SUITE_SECTIONS]
    if unknown:
        raise SuiteSchemaError(f"{unknown[0]}: unknown section (expected {', '.join(SUITE_SECTIONS)})")
    if not parser.has_section("setting"):
        raise SuiteSchemaError("setting: missing required section")

    st = parser["setting"]
    kw: dict = {"name": st.get("name", str(path))}
    for key in ("g", "ginv", "u", "v", "w"):
        if key in st:
            try:
                funcdsl.parse(st[key])
            except HardyMeanError as exc:
                raise SuiteSchemaError(f"setting.{key}: {exc}") from None
            kw[key] = st[key]
    for key in ("p", "q"):
        if key not in st:
            raise SuiteSchemaError(f"setting.{key}: required")
        kw[key] = _schema(_float, st[key], f"setting.{key}")
    if "lambda" in st:
        kw["lam"] = _schema(_float, st["lambda"], "setting.lambda")
    extra = set(st) - {"name", "g", "ginv", "u", "v", "w", "p", "q", "lambda"}
    if extra:
        raise SuiteSchemaError(f"setting.{sorted(extra)[0]}: unknown key")
    try:
        ExponentPair(kw["p"], kw["q"])
    except ValidationError as exc:
        raise SuiteSchemaError(f"setting.p: {exc}") from None

    if parser.has_section("conditions"):
        cs = parser["conditions"]
        names = tuple(n.strip() for n in cs.get("evaluate", "").split(",") if n.strip())
        bad = [n for n in names if n not in SUITE_CONDITIONS]
        if bad:
            raise SuiteSchemaError(f"conditions.evaluate: unknown condition {bad[0]!r}")
        kw["conditions"] = names
        if "wedestig.s" in cs:
            kw["wedestig_s"] = _schema(_float, cs["wedestig.s"], "conditions.wedestig.s")
        if "wedestig.variants" in cs:
            variants = tuple(v.strip() for v in cs["wedestig.variants"].split(",") if v.strip())
            if not variants or any(v not in ("paper", "alternate") for v in variants):
                raise SuiteSchemaError("conditions.wedestig.variants: expected paper and/or alternate")
            kw["variants"] = variants

    families = []
    if parser.has_section("families"):
        for name, fields in _grouped(parser["families"]).items():
            where = f"families.{name}"
            if not name:
                raise SuiteSchemaError(f"families.{next(iter(fields))}: expected <family>.<field>")
            kind = fields.get("kind")
            if kind is None:
                raise SuiteSchemaError(f"{where}.kind: required")
            try:
                if kind == "step" and "random" in fields:
                    fam = TestFamily.random_steps(
                        _floats(fields.get("partition", ""), f"{where}.partition"),
                        int(_float(fields["random"], f"{where}.random")),
                        int(_float(fields.get("seed", "0"), f"{where}.seed")),
                        name=name,
                    )
                else:
                    if "grid" not in fields and kind != "custom":
                        raise SuiteSchemaError(f"{where}.grid: required")
                    fam = _family(kind, fields.get("grid", ""), fields.get("partition"), fields.get("members"), where, name)
            except SuiteSchemaError:
                raise
            except HardyMeanError as exc:
                raise SuiteSchemaError(f"{where}: {exc}") from None
            families.append(fam)
    kw["families"] = tuple(families)

    checks: dict = {}
    if parser.has_section("checks"):
        for name, fields in _grouped(parser["checks"]).items():
            if name == "":
                for key, value in fields.items():
                    if key != "ratio_bound":
                        raise SuiteSchemaError(f"checks.{key}: unknown key")
                    checks["ratio_bound"] = _schema(_float, value, "checks.ratio_bound")
                continue
            if name not in SUITE_CHECKS:
                raise SuiteSchemaError(f"checks.{name}: unknown check (expected one of {', '.join(SUITE_CHECKS)})")
            params: dict = {}
            for key, value in fields.items():
                where = f"checks.{name}.{key}"
                if key == "functions":
                    params[key] = _sources(value)
                elif key == "grid":
                    params[key] = _schema(_floats, value, where)
                elif key in ("cutoff", "s", "lambda", "seed"):
                    params[key] = _schema(_float, value, where)
                elif key in ("phi", "family"):
                    params[key] = value.strip()
                else:
                    raise SuiteSchemaError(f"{where}: unknown key")
            checks[name] = params
    kw["checks"] = checks

    if parser.has_section("quadrature"):
        qs = parser["quadrature"]
        try:
            kw["cfg"] = QuadConfig(**{k: _schema(_float, v, f"quadrature.{k}") for k, v in qs.items()})
        except TypeError as exc:
            raise SuiteSchemaError(f"quadrature: {exc}") from None
    return SuiteSpec(**kw)


def _schema(fn, value, where):
    try:
        return fn(value, where)
    except SuiteSchemaError:
        raise
    except ValidationError as exc:
        raise SuiteSchemaError(str(exc)) from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _exponents(s) -> ExponentPair:
    return ExponentPair(s["p"], s["q"])


def _cmd_eval_op(s, cfg) -> Outcome:
    op = make_operator_for(s["g"], s["w"], cfg, s["ginv"])
    rows = []
    for x in s["at"]:
        r = evaluate(op, s["f"], x, full_output=True)
        rows.append({"x": x, "value": r.value, "err": r.err, "flag": r.flag})
    return Outcome(rows, must_be_finite=True)


def _cmd_classify_g(s, cfg) -> Outcome:
    rows = []
    if s["g"] is not None:
        m = make_mean_function(s["g"], s["ginv"])
        c = m.classification
        rows.append({
            "g": s["g"], "shape": c.shape, "direction": c.direction,
            "jensen_case": c.jensen_case, "affine": c.affine, "numeric_inverse": m.numeric_inverse,
        })
    if s["phi"] is not None:
        for r in s["r"]:
            res = phi_class_member(s["phi"], r)
            rows.append({
                "phi": s["phi"], "r": r if math.isfinite(r) else "inf", "member": res.member, "witness": res.witness,
                "window_lo": res.window[0], "window_hi": res.window[1], "skipped": res.skipped,
            })
    if not rows:
        raise ValidationError("classify-g needs --g and/or --phi")
    return Outcome(rows)


def _cmd_check_condition(s, cfg) -> Outcome:
    e = _exponents(s)
    U, V, kind = s["U"], s["V"], s["kind"]
    variants = ("paper", "alternate") if s["variant"] == "both" else (s["variant"],)
    if kind == "muckenhoupt":
        reps = [muckenhoupt_constant(U, V, e, cfg)]
    elif kind == "geometric":
        reps = [geometric_condition(U, V, e, cfg)]
    elif kind == "wedestig":
        if s["s"] is None:
            raise ValidationError("--s is required for --kind wedestig")
        reps = [wedestig_as(U, V, e, s["s"], v, cfg) for v in variants]
    else:
        reps = [constant_bound_wedestig(U, V, e, v, cfg) for v in variants]
    rows = [r.as_dict() for r in reps]
    return Outcome(rows, must_be_finite=True, diverged=any(r.diverged for r in reps))


def _cmd_dual_weight(s, cfg) -> Outcome:
    rows = []
    for t in s["at"]:
        if s["kind"] == "weighted":
            val = dual_weight_thm1(s["u"], s["w"], t, cfg)
        else:
            if s["lam"] is None:
                raise ValidationError("--lambda is required for --kind modular")
            val = dual_weight_thm1b(s["U"], s["lam"], t, cfg)
        rows.append({"t": t, "value": val})
    return Outcome(rows)


def _cmd_reduce(s, cfg) -> Outcome:
    ctx = make_context(s["w"], s["p"], s["q"], s["u"], s["v"], cfg)
    rep = verify_reduction(ctx, s["g"], s["f"], s["cutoff"], s["at"] or None)
    rows = [{"x": x, "weighted": a, "reduced": b, "abs_diff": abs(a - b)} for x, a, b in rep.identity_points]
    rows.append({
        "x": None, "ratio_weighted": rep.ratio_weighted.ratio, "ratio_reduced": rep.ratio_reduced.ratio,
        "ratio_difference": rep.ratio_difference, "ratio_tolerance": rep.ratio_tolerance, "agree": rep.ratios_agree,
    })
    warnings = [] if rep.ratios_agree else ["ratios differ by more than twice the combined error estimate"]
    return Outcome(rows, warnings, must_be_finite=True)


def _cmd_ratio(s, cfg) -> Outcome:
    r = inequality_ratio(s["f"], s["g"], s["u"], s["v"], s["w"], _exponents(s), cfg, s["ginv"])
    return Outcome([r.as_dict()], must_be_finite=True)


def _cmd_search(s, cfg) -> Outcome:
    fam = _family(s["family"], s["grid"] or "", s["partition"], s["members"], "--family")
    res = best_constant_search(fam, s["g"], s["u"], s["v"], s["w"], _exponents(s), cfg, s["ginv"], s["workers"])
    rows = [dict(r.as_dict(), best=(r.family_member == res.best_member)) for r in res.reports]
    warnings = [f"{m}: {err}" for m, err in res.failures]
    warnings.append(f"sup ratio {res.sup_ratio!r} is an empirical lower bound on the best constant")
    return Outcome(rows, warnings, must_be_finite=True)


def _cmd_suite(s, cfg) -> Outcome:
    spec = load_suite(s["path"])
    if s["quad_override"]:
        spec = SuiteSpec(**{**spec.__dict__, "cfg": cfg})
    rep = run_suite(spec)
    rows = []
    for c in rep.conditions:
        rows.append({"section": "conditions", **c})
    for k, v in rep.constants.items():
        rows.append({"section": "constants", "name": k, "value": v})
    for fam in rep.empirical:
        for m in fam["members"]:
            rows.append({"section": "empirical", "name": fam["family"], **m})
    for c in rep.checks:
        rows.append({"section": "checks", **{k: v for k, v in c.items() if k != "members"}})
    for err in rep.errors:
        rows.append({"section": "errors", "name": err["section"], "error": err["error"]})
    warnings = list(rep.observations)
    if not rep.passed:
        warnings.append("suite reported failed checks or section errors")
    return Outcome(rows, warnings)


HANDLERS = {
    "eval-op": _cmd_eval_op,
    "classify-g": _cmd_classify_g,
    "check-condition": _cmd_check_condition,
    "dual-weight": _cmd_dual_weight,
    "reduce": _cmd_reduce,
    "ratio": _cmd_ratio,
    "search": _cmd_search,
    "suite": _cmd_suite,
}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        out = {k: _clean(v) for k, v in obj.items()}
        for key in ("value", "ratio", "lhs"):
            if key in obj and isinstance(obj[key], (float, np.floating)) and not math.isfinite(obj[key]):
                out.setdefault("status", "diverged" if obj[key] > 0 else "non_finite")
        return out
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _report(cfg: RunConfig, out: Outcome) -> dict:
    return {
        "command": cfg.command,
        "setting": _clean(cfg.setting),
        "results": _clean(out.results),
        "quadrature": {"abs_tol": cfg.quad.abs_tol, "rel_tol": cfg.quad.rel_tol},
        "warnings": list(out.warnings),
    }


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (dict, list)):
        return json.dumps(v, allow_nan=False)
    return repr(v) if isinstance(v, float) else str(v)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, allow_nan=False, indent=2)
    rows = report["results"]
    header: list = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row.get(k)) for k in header])
        return buf.getvalue().rstrip("\n")
    lines = [f"# {report['command']}"]
    for row in rows:
        parts = []
        for k in header:
            if k not in row:
                continue
            v = row[k]
            if isinstance(v, float):
                v = f"{v:.10g}"
            elif isinstance(v, list):
                v = f"[{len(v)} entries]"
            parts.append(f"{k}={v}")
        lines.append("  ".join(parts))
    for w in report["warnings"]:
        lines.append(f"note: {w}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(p):
    p.add_argument("--output", choices=("text", "json", "csv"), default="text")
    p.add_argument("--abs-tol", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--divergence-threshold", type=float, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def _setting_args(p, *names):
    defaults = {"g": "x", "w": "1", "u": "1", "v": "1"}
    for name in names:
        if name in ("p", "q"):
            p.add_argument(f"--{name}", required=True)
        elif name in ("s", "lambda"):
            p.add_argument(f"--{name}", default=None)
        elif name in ("U", "V", "f"):
            p.add_argument(f"--{name}", required=True)
        elif name == "ginv":
            p.add_argument("--ginv", default=None)
        else:
            p.add_argument(f"--{name}", default=defaults.get(name))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardymean", description="Weighted mean-operator inequalities: operators, conditions, ratios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-op", help="evaluate M^g_w f at points")
    _setting_args(p, "g", "ginv", "w", "f")
    p.add_argument("--at", required=True, help="comma-separated evaluation points")

    p = sub.add_parser("classify-g", help="shape of g, or Levinson-class membership of phi")
    p.add_argument("--g", default=None)
    p.add_argument("--ginv", default=None)
    p.add_argument("--phi", default=None)
    p.add_argument("--r", default="inf", help="comma-separated r values (inf allowed)")

    p = sub.add_parser("check-condition", help="evaluate a sufficient condition on (U, V)")
    p.add_argument("--kind", choices=CONDITION_KINDS, required=True)
    _setting_args(p, "U", "V", "p", "q", "s")
    p.add_argument("--variant", choices=("paper", "alternate", "both"), default="paper")

    p = sub.add_parser("dual-weight", help="dual weight v from u (weighted) or V from U (modular)")
    p.add_argument("--kind", choices=("weighted", "modular"), default="weighted")
    p.add_argument("--u", default="1")
    p.add_argument("--w", default="1")
    p.add_argument("--U", default="1")
    p.add_argument("--lambda", default=None)
    p.add_argument("--at", required=True)

    p = sub.add_parser("reduce", help="check the change of variables y = W(x)")
    _setting_args(p, "g", "w", "u", "v", "p", "q", "f")
    p.add_argument("--cutoff", default="2")
    p.add_argument("--at", default="")

    p = sub.add_parser("ratio", help="inequality ratio LHS/RHS for one f")
    _setting_args(p, "g", "ginv", "u", "v", "w", "p", "q", "f")

    p = sub.add_parser("search", help="empirical best constant over a test family")
    _setting_args(p, "g", "ginv", "u", "v", "w", "p", "q")
    p.add_argument("--family", choices=("power_truncated", "exponential", "step", "custom"), required=True)
    p.add_argument("--grid", default=None, help="parameters (use --grid=-0.4,... for negatives); step heights as 'h1 h2 | h1 h2'")
    p.add_argument("--partition", default=None)
    p.add_argument("--members", default=None, help="custom sources separated by '|'")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("suite", help="run a suite file")
    p.add_argument("path")

    for sp in sub.choices.values():
        _common(sp)
    return parser


def _run_config(ns) -> RunConfig:
    """Validate and normalise parsed arguments before any computation."""
    quad = {k: getattr(ns, k) for k in ("abs_tol", "rel_tol", "max_depth", "divergence_threshold") if getattr(ns, k) is not None}
    cfg = QuadConfig(**quad)
    s = {k: v for k, v in vars(ns).items() if k not in ("command", "output", "verbose", *quad, "abs_tol", "rel_tol", "max_depth", "divergence_threshold")}
    for key in ("p", "q", "s", "lambda", "cutoff"):
        if s.get(key) is not None:
            s[key] = _float(s[key], f"--{key}")
    if "lambda" in s:
        s["lam"] = s.pop("lambda")
    if "at" in s:
        s["at"] = _floats(s["at"], "--at")
        if ns.command in ("eval-op", "dual-weight") and not s["at"]:
            raise ValidationError("--at: at least one point required")
    if "r" in s:
        s["r"] = _floats(s["r"], "--r")
    if "p" in s and "q" in s:
        ExponentPair(s["p"], s["q"])
    for key in ("g", "ginv", "u", "v", "w", "f", "U", "V", "phi"):
        if isinstance(s.get(key), str):
            funcdsl.parse(s[key])
    if ns.command == "suite":
        s["quad_override"] = bool(quad)
    return RunConfig(ns.command, s, ns.output, cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    try:
        rc = _run_config(ns)
        out = HANDLERS[rc.command](rc.setting, rc.quad)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except HardyMeanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001 - last-resort report
        log.exception("internal error")
        return EXIT_INTERNAL
    report = _report(rc, out)
    if rc.command == "suite":
        report["setting"] = {"path": rc.setting["path"]}
    print(render(report, rc.output))
    for w in out.warnings:
        log.info(w)
    if out.must_be_finite and out.diverged:
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
