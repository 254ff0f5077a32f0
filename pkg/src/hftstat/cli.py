"""Command-line front end: ``hftstat verify|sweep|converge|models``.

Exit status: 0 when every check passes, 1 when an identity check fails,
2 on a configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .canonical import (
    TOL_ABS,
    TOL_REL,
    average_of,
    dA_dlambda_commuting,
    dA_dlambda_general,
    dH_dlambda_beta_form,
    dH_dlambda_hft,
    dHprime_dbeta,
    dZ_dlambda,
    energy_average,
    F_operator,
    F_relation_residual,
    make_context,
    make_report,
    partition_function,
    thermal_average,
    verify_main_identity,
)
from .family import OperatorFamily, central_difference
from .grand import dHG_dlambda_hft, grand_average, make_grand_context
from .linalg import boltzmann, energy_boltzmann, real_part
from .models import REGISTRY, ModelSpec, fixed_observable, square_observable
from .truncation import QUANTITIES, convergence_sweep

# The explicit F operator is only compared when e^{beta (e_max - e_min)} stays
# well inside double precision; beyond that F e^{beta H} loses all digits.
F_CHECK_MAX_SPREAD = 20.0
F_RELATION_TOL = 1e-9
F_TRACE_TOL = 1e-8
CONVERGE_TOL = 1e-9
DEFAULT_MS = (8, 16, 32, 64, 128)

CONFIG_KEYS = {
    "model", "params", "lambda", "lambda_list", "beta", "beta_list", "mu",
    "format", "out", "seed", "quantity", "ms",
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunConfig:
    command: str
    model: str = "oscillator"
    params: dict[str, Any] = field(default_factory=dict)
    lambdas: tuple[float, ...] = (0.0,)
    betas: tuple[float, ...] = (1.0,)
    mu: float | None = None
    format: str = "json"
    out: str | None = None
    seed: int = 0
    quantity: str = "H"
    ms: tuple[int, ...] = DEFAULT_MS

    def record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["params"] = {k: _plain(v) for k, v in sorted(self.params.items())}
        return rec


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# -- parsing -------------------------------------------------------------------

def parse_range(text) -> tuple[float, ...]:
    """``"start:stop:count"`` (or a 3-element list) to evenly spaced values."""
    parts = text.split(":") if isinstance(text, str) else list(text)
    if len(parts) != 3:
        raise ConfigError(f"range must be start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (TypeError, ValueError):
        raise ConfigError(f"range must be start:stop:count, got {text!r}") from None
    if count < 1:
        raise ConfigError(f"range count must be >= 1, got {count}")
    if stop < start:
        raise ConfigError(f"range stop must be >= start, got {start}:{stop}")
    if count == 1:
        return (start,)
    return tuple(float(x) for x in np.linspace(start, stop, count))


def parse_list(text, cast=float) -> tuple:
    items = text.split(",") if isinstance(text, str) else list(text)
    try:
        return tuple(cast(x) for x in items if str(x).strip() != "")
    except (TypeError, ValueError):
        raise ConfigError(f"malformed list {text!r}") from None


def _axis(name: str, rng, lst) -> tuple[float, ...] | None:
    if rng is not None and lst is not None:
        raise ConfigError(f"{name} given both as a range and as a list; use one")
    if rng is not None:
        return parse_range(rng)
    if lst is not None:
        vals = parse_list(lst)
        if not vals:
            raise ConfigError(f"empty {name} list")
        return vals
    return None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(x) for x in text.split(",")]
    return text


def parse_set(items) -> dict[str, Any]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def coerce_params(spec: ModelSpec, params: dict[str, Any]) -> dict[str, Any]:
    """Cast parameter values to the types of the model's defaults."""
    out = {}
    for key, value in params.items():
        if key not in spec.defaults:
            raise ConfigError(f"model {spec.name!r} has no parameter {key!r}; "
                              f"valid: {', '.join(sorted(spec.defaults)) or '(none)'}")
        default = spec.defaults[key]
        try:
            if isinstance(default, bool):
                out[key] = bool(value)
            elif isinstance(default, int):
                if float(value) != int(float(value)):
                    raise ValueError
                out[key] = int(float(value))
            elif isinstance(default, float):
                out[key] = float(value)
            elif isinstance(default, tuple):
                seq = value if isinstance(value, (list, tuple)) else [value]
                out[key] = tuple(int(v) for v in seq)
            else:
                out[key] = value
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key}={value!r} has the wrong type "
                              f"(expected {type(default).__name__})") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hftstat", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("verify", "sweep", "converge", "models"))
    p.add_argument("--model")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", dest="set_")
    p.add_argument("--lambda", dest="lambda_range", metavar="A:B:N")
    p.add_argument("--lambda-list", metavar="V1,V2,...")
    p.add_argument("--beta", dest="beta_range", metavar="A:B:N")
    p.add_argument("--beta-list", metavar="V1,V2,...")
    p.add_argument("--mu", type=float)
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--quantity", help=f"converge only: one of {', '.join(QUANTITIES)}")
    p.add_argument("--ms", metavar="M1,M2,...", help="converge only: truncation sizes")
    return p


def read_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc.msg} at line {exc.lineno}, "
                          f"column {exc.colno}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    for key in data:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
    return data


_VALUE_FLAGS = ("--lambda", "--lambda-list", "--beta", "--beta-list", "--mu", "--set")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -0.5,1`` as ``--flag=-0.5,1`` so argparse accepts it."""
    out = []
    it = iter(range(len(argv)))
    for i in it:
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if tok in _VALUE_FLAGS and nxt is not None and len(nxt) > 1 and nxt[0] == "-" \
                and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{tok}={nxt}")
            next(it, None)
        else:
            out.append(tok)
    return out


def load_config(argv=None) -> RunConfig:
    """Merge a JSON config file (``--config``) with command-line flags; flags win."""
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_attach_negative_values(argv))
    file_cfg = read_config_file(args.config) if args.config else {}
    cfg = RunConfig(command=args.command)

    cfg.model = args.model or file_cfg.get("model", cfg.model)
    params = dict(file_cfg.get("params") or {})
    params.update(parse_set(args.set_))
    cfg.params = params

    for axis in ("lambda", "beta"):
        flag = _axis(axis, getattr(args, f"{axis}_range"), getattr(args, f"{axis}_list"))
        from_file = _axis(axis, file_cfg.get(axis), file_cfg.get(f"{axis}_list"))
        values = flag or from_file
        if values is not None:
            setattr(cfg, f"{axis}s", values)

    mu = args.mu if args.mu is not None else file_cfg.get("mu")
    cfg.mu = None if mu is None else float(mu)
    cfg.format = args.format or file_cfg.get("format", cfg.format)
    if cfg.format not in ("json", "csv"):
        raise ConfigError(f"format must be json or csv, got {cfg.format!r}")
    cfg.out = args.out or file_cfg.get("out")
    seed = args.seed if args.seed is not None else file_cfg.get("seed", cfg.seed)
    try:
        cfg.seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    cfg.quantity = args.quantity or file_cfg.get("quantity", cfg.quantity)
    ms = args.ms if args.ms is not None else file_cfg.get("ms")
    if ms is not None:
        cfg.ms = parse_list(ms, int)

    if any(not b > 0 or not math.isfinite(b) for b in cfg.betas):
        raise ConfigError(f"inverse temperature must satisfy beta > 0, got {cfg.betas}")
    return cfg


# -- model resolution ------------------------------------------------------------

def resolve_model(cfg: RunConfig, registry: dict[str, ModelSpec]) -> tuple[OperatorFamily, dict]:
    spec = registry.get(cfg.model)
    if spec is None:
        raise ConfigError(f"unknown model {cfg.model!r}; registered models: "
                          f"{', '.join(sorted(registry))}")
    params = coerce_params(spec, cfg.params)
    try:
        fam = spec.make(params, seed=cfg.seed if spec.seeded else None)
    except ValueError as exc:
        raise ConfigError(f"model {cfg.model!r}: {exc}") from None
    full = {k: _plain(v) for k, v in sorted({**spec.defaults, **params}.items())}
    if spec.seeded:
        full["seed"] = cfg.seed
    lo, hi = fam.domain
    bad = [x for x in cfg.lambdas if not lo < x < hi]
    if bad:
        raise ConfigError(f"lambda values {bad} outside the model domain ({lo}, {hi})")
    return fam, full


def _meta(cfg: RunConfig, fam_label: str | None, params: dict | None, **extra) -> dict:
    meta = {
        "tool": "hftstat",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.record(),
        "model": fam_label,
        "params": params,
        "tolerance_policy": {"abs": TOL_ABS, "rel": TOL_REL,
                             "rule": "pass if abs_residual <= abs or rel_residual <= rel"},
    }
    meta.update(extra)
    return meta


# -- verify ----------------------------------------------------------------------

def _spectral_spread(fam: OperatorFamily, lam: float, beta: float) -> tuple[float, float]:
    ev = make_context(fam, lam, beta).decomposition.eigenvalues
    return beta * float(ev[-1] - ev[0]), beta * float(np.max(np.abs(ev)))


def verify_point(fam: OperatorFamily, lam: float, beta: float, mu: float | None,
                 seed: int, base: dict) -> list:
    """Every applicable identity check of ``fam`` at one ``(lam, beta)`` point."""
    params = {**base, "lambda": lam, "beta": beta}
    reports = []

    for f in (boltzmann(beta), energy_boltzmann(beta)):
        reports.append(verify_main_identity(fam, f, lam, beta, parameters=base))

    def d_lam(obs=None):
        return central_difference(lambda x: average_of(fam, obs, x, beta), lam)

    z_fd = central_difference(lambda x: partition_function(fam, x, beta), lam)
    reports.append(make_report("Z_prime", z_fd, dZ_dlambda(fam, lam, beta), parameters=params))

    h_fd = d_lam()
    hft = dH_dlambda_hft(fam, lam, beta)
    closed = fam.closed_forms.get("dH_dlambda_hft")
    reports.append(make_report(
        "canonical_hft", h_fd, hft, parameters=params,
        oracle=None if closed is None else closed(lam, beta),
        oracle_kind="finite-difference" if closed is None else "closed-form",
    ))

    hp_fd = central_difference(lambda b: thermal_average(make_context(fam, lam, b), fam.dH(lam)), beta)
    reports.append(make_report("hprime_dbeta", hp_fd, dHprime_dbeta(fam, lam, beta), parameters=params))

    beta_form = dH_dlambda_beta_form(fam, lam, beta)
    reports.append(make_report("beta_form", h_fd, beta_form, parameters=params))
    reports.append(make_report("beta_form_consistency", hft, beta_form, parameters=params,
                               oracle_kind="algebraic", tol_abs=0.0, tol_rel=1e-12))

    sq = square_observable(fam)
    reports.append(make_report("commuting_observable", d_lam(sq),
                               dA_dlambda_commuting(fam, sq, lam, beta), parameters=params))

    obs = fixed_observable(fam.dim, seed)
    reports.append(make_report("general_observable", d_lam(obs),
                               dA_dlambda_general(fam, obs, lam, beta), parameters=params))

    spread, radius = _spectral_spread(fam, lam, beta)
    if spread <= F_CHECK_MAX_SPREAD and radius <= 300.0:
        reports.append(make_report("F_relation", F_relation_residual(fam, lam, beta), 0.0,
                                   parameters=params, oracle_kind="algebraic",
                                   tol_abs=F_RELATION_TOL, tol_rel=0.0))
        ctx = make_context(fam, lam, beta)
        f_trace = real_part(np.trace(ctx.rho @ F_operator(fam, lam, beta)), "<F>")
        reports.append(make_report("F_trace", f_trace, beta * thermal_average(ctx, ctx.derivative),
                                   parameters=params, oracle_kind="algebraic",
                                   tol_abs=F_TRACE_TOL, tol_rel=F_TRACE_TOL))

    if fam.number_operator is not None:
        n_op = fam.number_operator
        m = 0.0 if mu is None else mu

        def grand_h(x):
            return grand_average(make_grand_context(fam, n_op, m, x, beta), fam.H(x))

        reports.append(make_report("grand_hft", central_difference(grand_h, lam),
                                   dHG_dlambda_hft(fam, n_op, m, lam, beta),
                                   parameters={**params, "mu": m}))
    return reports


def cmd_verify(cfg: RunConfig, registry=REGISTRY) -> tuple[int, dict, list[dict]]:
    fam, params = resolve_model(cfg, registry)
    base = {"model": fam.label, "dim": fam.dim, "seed": cfg.seed}
    rows = []
    for lam in cfg.lambdas:
        for beta in cfg.betas:
            for rep in verify_point(fam, lam, beta, cfg.mu, cfg.seed, base):
                rows.append({
                    "identity": rep.identity_name,
                    "lambda": lam,
                    "beta": beta,
                    "mu": rep.parameters.get("mu"),
                    "lhs": rep.lhs,
                    "rhs": rep.rhs,
                    "oracle": rep.oracle,
                    "oracle_kind": rep.oracle_kind,
                    "abs_residual": rep.abs_residual,
                    "rel_residual": rep.rel_residual,
                    "tol_abs": rep.tol_abs,
                    "tol_rel": rep.tol_rel,
                    "passed": rep.passed,
                    "model": fam.label,
                    "dim": fam.dim,
                    "seed": cfg.seed,
                    "params": params,
                    "tool_version": __version__,
                })
    failed = sum(not r["passed"] for r in rows)
    meta = _meta(cfg, fam.label, params, checks=len(rows), failed=failed)
    return (1 if failed else 0), meta, rows


# -- sweep -----------------------------------------------------------------------

def cmd_sweep(cfg: RunConfig, registry=REGISTRY) -> tuple[int, dict, list[dict]]:
    fam, params = resolve_model(cfg, registry)
    closed = fam.closed_forms.get("H")
    rows = []
    for lam in cfg.lambdas:
        for beta in cfg.betas:
            ctx = make_context(fam, lam, beta)
            h = energy_average(ctx)
            ref = None if closed is None else float(closed(lam, beta))
            rows.append({
                "lambda": lam,
                "beta": beta,
                "H": h,
                "Hprime": thermal_average(ctx, ctx.derivative),
                "dH_dlambda_hft": dH_dlambda_hft(fam, lam, beta),
                "closed_form_H": ref,
                "abs_diff": None if ref is None else abs(h - ref),
                "reference_kind": "closed-form" if ref is not None else "none",
                "model": fam.label,
                "params": params,
                "tool_version": __version__,
            })
    return 0, _meta(cfg, fam.label, params), rows


# -- converge --------------------------------------------------------------------

def cmd_converge(cfg: RunConfig, registry=REGISTRY) -> tuple[int, dict, list[dict]]:
    fam, params = resolve_model(cfg, registry)
    if cfg.quantity not in QUANTITIES:
        raise ConfigError(f"unknown quantity {cfg.quantity!r}; valid: {', '.join(QUANTITIES)}")
    if any(m > fam.dim or m < 1 for m in cfg.ms):
        raise ConfigError(f"truncation sizes {list(cfg.ms)} exceed the parent dimension {fam.dim}")
    rows = []
    status = 0
    for lam in cfg.lambdas:
        for beta in cfg.betas:
            try:
                sweep = convergence_sweep(fam, cfg.quantity, lam, beta, cfg.ms, f=boltzmann(beta))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if sweep[-1].reference_kind == "closed-form" and sweep[-1].error_vs_reference > CONVERGE_TOL:
                status = 1
            for row in sweep:
                rows.append({
                    "quantity": cfg.quantity,
                    "lambda": lam,
                    "beta": beta,
                    "M": row.M,
                    "value": row.value,
                    "error_vs_reference": row.error_vs_reference,
                    "reference": row.reference,
                    "reference_kind": row.reference_kind,
                    "model": fam.label,
                    "params": params,
                    "tool_version": __version__,
                })
    meta = _meta(cfg, fam.label, params, function="exp(-beta x)" if "trace" in cfg.quantity else None,
                 final_error_tolerance=CONVERGE_TOL)
    return status, meta, rows


def cmd_models(cfg: RunConfig, registry=REGISTRY) -> tuple[int, dict, list[dict]]:
    rows = [{"name": spec.name,
             "parameters": {k: _plain(v) for k, v in spec.defaults.items()},
             "seeded": spec.seeded,
             "description": spec.description}
            for spec in sorted(registry.values(), key=lambda s: s.name)]
    return 0, _meta(cfg, None, None), rows


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "converge": cmd_converge, "models": cmd_models}


# -- output ----------------------------------------------------------------------

def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, separators=(",", ":"), sort_keys=True)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def render(meta: dict, rows: list[dict], fmt: str) -> str:
    """Serialize a report; non-finite floats become ``null`` in JSON, ``inf`` in CSV."""
    if fmt == "json":
        doc = _json_safe({"meta": meta, "rows": rows})
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, separators=(",", ":"), sort_keys=True) + "\n")
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row[k]) for k in header])
    return buf.getvalue()


def run(argv=None, registry=REGISTRY, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(argv)
        status, meta, rows = COMMANDS[cfg.command](cfg, registry)
    except ConfigError as exc:
        print(f"hftstat: error: {exc}", file=stderr)
        return 2
    text = render(meta, rows, cfg.format)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return status


def main() -> None:
    sys.exit(run())
