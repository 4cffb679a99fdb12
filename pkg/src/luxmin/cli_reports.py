"""Command-line front end: JSON experiment configs in, CSV/JSON artifacts out.

Subcommands: norm, minimize, sweep-j, sweep-l, distance, check-limit, report.
Configuration is merged in this order: built-in defaults, then the --config
file, then repeated --set key.path=value overrides, then convenience flags.
Unknown keys anywhere in the config are rejected.

Exit codes: 0 success, 2 validation/configuration error, 3 a solver run was
flagged non-convergent (artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import asymptotics, distance_ridge, infinity_operator
from .domain_grid import (DomainSpec, ScalarField, build_grid, dump_field_csv,
                          dump_grid_csv, field_csv_text, gradient,
                          load_field_csv, sup_norm_and_argmax,
                          write_text_atomic)
from .errors import ConfigError, LuxminError
from .exponents import check_subcritical, parse_exponent, sample_exponent
from .modular_norms import luxemburg_norm
from .rayleigh_solver import SolverOptions, minimize_quotient

OUTPUT_DIR_ENV = "LUXMIN_OUTPUT_DIR"

DEFAULT_CONFIG = {
    "domain": {"shape": "rectangle", "n": 64, "w": 1.0, "h": 1.0},
    "p_expr": "2",
    "q_expr": "2",
    "u_expr": None,
    "norm_variant": "weighted",
    "solver": {"max_iter": 20000, "tol": 1e-6, "el_tol": 1e-3,
               "restarts": 0, "seed": 0, "init": "distance"},
    "sweep": {"l": 4, "j_list": [1, 2, 4, 8, 16, 32, 64],
              "l_list": [4, 8, 16, 32]},
    "check": {"field_csv": None, "x_star_node": None,
              "exclusion_radius": None, "smoothing_width": None},
    "output_dir": None,
}

_SHAPE_KEYS = {
    "rectangle": {"w", "h"},
    "disk": {"r"},
    "ellipse": {"a", "b"},
    "lshape": {"w", "h", "notch_w", "notch_h"},
    "annulus": {"r_in", "r_out"},
}


# -- config assembly and validation ------------------------------------------

def _deep_merge(base, override, path=""):
    out = dict(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _set_dotted(cfg, dotted, raw):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    leaf = keys[-1]
    if not isinstance(node, dict) or (leaf not in node and keys[0] != "domain"):
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = json.loads(raw) if _looks_like_json(raw) else raw


def _looks_like_json(raw):
    try:
        json.loads(raw)
        return True
    except (ValueError, TypeError):
        return False


def _expect(cond, message):
    if not cond:
        raise ConfigError(message)


def _validate(cfg):
    dom = cfg["domain"]
    _expect(isinstance(dom, dict), "domain must be an object")
    _expect("shape" in dom and "n" in dom, "domain needs 'shape' and 'n'")
    shape = dom["shape"]
    _expect(shape in _SHAPE_KEYS, f"unknown shape {shape!r}; expected one of {sorted(_SHAPE_KEYS)}")
    allowed = _SHAPE_KEYS[shape] | {"shape", "n"}
    for key in dom:
        _expect(key in allowed, f"domain key {key!r} is not valid for shape {shape!r}")
    for key in _SHAPE_KEYS[shape]:
        _expect(key in dom, f"shape {shape!r} requires domain.{key}")
        _expect(isinstance(dom[key], (int, float)) and not isinstance(dom[key], bool),
                f"domain.{key} must be a number, got {dom[key]!r}")
    _expect(isinstance(dom["n"], int) and not isinstance(dom["n"], bool),
            f"domain.n must be an integer, got {dom['n']!r}")

    for key in ("p_expr", "q_expr"):
        _expect(isinstance(cfg[key], str) and cfg[key].strip(),
                f"{key} must be a nonempty string")
    if cfg["u_expr"] is not None:
        _expect(isinstance(cfg["u_expr"], str) and cfg["u_expr"].strip(),
                "u_expr must be a nonempty string when given")
    _expect(cfg["norm_variant"] in ("weighted", "classical"),
            f"norm_variant must be 'weighted' or 'classical', got {cfg['norm_variant']!r}")

    sol = cfg["solver"]
    _expect(isinstance(sol["max_iter"], int) and sol["max_iter"] >= 1,
            f"solver.max_iter must be a positive integer, got {sol['max_iter']!r}")
    for key in ("tol", "el_tol"):
        _expect(isinstance(sol[key], (int, float)) and 0 < sol[key] < 1,
                f"solver.{key} must be a number in (0, 1), got {sol[key]!r}")
    _expect(isinstance(sol["restarts"], int) and sol["restarts"] >= 0,
            f"solver.restarts must be a nonnegative integer, got {sol['restarts']!r}")
    _expect(isinstance(sol["seed"], int), f"solver.seed must be an integer, got {sol['seed']!r}")
    _expect(sol["init"] in ("distance", "random"),
            f"solver.init must be 'distance' or 'random', got {sol['init']!r}")

    sw = cfg["sweep"]
    _expect(isinstance(sw["l"], int) and sw["l"] >= 2,
            f"sweep.l must be an integer >= 2, got {sw['l']!r}")
    for key in ("j_list", "l_list"):
        lst = sw[key]
        _expect(isinstance(lst, list) and lst and all(isinstance(v, int) for v in lst),
                f"sweep.{key} must be a nonempty list of integers, got {lst!r}")
        _expect(all(b > a for a, b in zip(lst, lst[1:])),
                f"sweep.{key} must be strictly increasing, got {lst!r}")

    chk = cfg["check"]
    for key in ("exclusion_radius", "smoothing_width"):
        v = chk[key]
        _expect(v is None or (isinstance(v, (int, float)) and v > 0),
                f"check.{key} must be a positive number or null, got {v!r}")
    if chk["x_star_node"] is not None:
        _expect(isinstance(chk["x_star_node"], int) and chk["x_star_node"] >= 0,
                f"check.x_star_node must be a nonnegative integer, got {chk['x_star_node']!r}")
    return cfg


def _domain_spec(cfg):
    dom = cfg["domain"]
    kwargs = {k: float(v) for k, v in dom.items() if k not in ("shape", "n")}
    try:
        return DomainSpec(dom["shape"], dom["n"], **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _solver_options(cfg):
    sol = cfg["solver"]
    return SolverOptions(max_iter=sol["max_iter"], tol=float(sol["tol"]),
                         el_tol=float(sol["el_tol"]), restarts=sol["restarts"],
                         seed=sol["seed"], init=sol["init"])


def _meta(cfg, grid):
    return {
        "domain": dict(sorted(cfg["domain"].items())),
        "resolution": cfg["domain"]["n"],
        "spacing": grid.spacing,
        "solver": dict(sorted(cfg["solver"].items())),
        "p_expr": cfg["p_expr"],
        "q_expr": cfg["q_expr"],
        "norm_variant": cfg["norm_variant"],
    }


def _write_json(path, payload):
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- subcommand implementations -------------------------------------------------

def _cmd_distance(cfg, out_dir):
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    res = distance_ridge.distance_field(grid)
    dev = distance_ridge.eikonal_check(res.d, res.ridge_nodes)
    dump_field_csv(res.d, os.path.join(out_dir, "distance_field.csv"))
    dump_grid_csv(grid, os.path.join(out_dir, "grid.csv"))
    _write_json(os.path.join(out_dir, "distance.json"), {
        "meta": _meta(cfg, grid),
        "d_max": res.d_max,
        "lambda_inf": res.lambda_inf,
        "ridge_singleton": res.ridge_is_singleton,
        "ridge_size": int(len(res.ridge_nodes)),
        "eikonal_max_deviation_off_ridge": dev,
    })
    return 0


def _cmd_norm(cfg, out_dir):
    if not cfg["u_expr"]:
        raise ConfigError("norm needs u_expr (--u or config key 'u_expr')")
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    p = sample_exponent(cfg["p_expr"], grid)
    u = ScalarField.from_function(grid, lambda x, y: _eval_expr(cfg["u_expr"], x, y))
    gmag = np.hypot(*gradient(u).T)
    sup, _ = sup_norm_and_argmax(u)
    _write_json(os.path.join(out_dir, "norm.json"), {
        "meta": _meta(cfg, grid),
        "u_expr": cfg["u_expr"],
        "norm_weighted": luxemburg_norm(u, p, "weighted"),
        "norm_classical": luxemburg_norm(u, p, "classical"),
        "grad_norm_weighted": luxemburg_norm(gmag, p, "weighted"),
        "grad_norm_classical": luxemburg_norm(gmag, p, "classical"),
        "sup_norm": sup,
        "alpha": p.alpha,
        "p_minus": p.p_minus,
        "p_plus": p.p_plus,
    })
    return 0


def _eval_expr(text, x, y):
    from .exponents import evaluate
    return evaluate(parse_exponent(text), x, y)


def _cmd_minimize(cfg, out_dir):
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    p = sample_exponent(cfg["p_expr"], grid)
    q = sample_exponent(cfg["q_expr"], grid)
    check_subcritical(p, q)
    res = minimize_quotient(p, q, _solver_options(cfg))
    ax, ay = grid.nodes[res.argmax_node]
    dump_field_csv(res.minimizer, os.path.join(out_dir, "minimizer_field.csv"))
    _write_json(os.path.join(out_dir, "minimize.json"), {
        "meta": _meta(cfg, grid),
        "lambda": res.lambda_,
        "iterations": res.iterations,
        "el_residual": res.el_residual,
        "argmax": {"x": float(ax), "y": float(ay)},
        "converged": res.converged,
        "restart_lambdas": res.restart_lambdas,
    })
    return 0 if res.converged else 3


def _row_dict(row):
    out = {}
    for key, val in row.__dict__.items():
        if val is None:
            continue
        if isinstance(val, (np.floating, np.integer)):
            val = val.item()
        out[key] = val
    return out


def _sweep_csv(rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        rec = _row_dict(row)
        lines.append(",".join(_csv_cell(rec.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cmd_sweep_j(cfg, out_dir):
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    p = sample_exponent(cfg["p_expr"], grid)
    q = sample_exponent(cfg["q_expr"], grid)
    rep = asymptotics.sweep_j(cfg["sweep"]["l"], p, q, cfg["sweep"]["j_list"],
                              _solver_options(cfg))
    cols = ["index", "eigenvalue_estimate", "sup_norm_of_extremal", "argmax_x",
            "argmax_y", "gap_to_limit", "el_residual", "converged",
            "lower_bound", "upper_bound"]
    write_text_atomic(os.path.join(out_dir, "sweep_j.csv"), _sweep_csv(rep.rows, cols))
    write_text_atomic(os.path.join(out_dir, "sweep_j_final_field.csv"),
                      field_csv_text(rep.final_field))
    _write_json(os.path.join(out_dir, "sweep_j.json"), {
        "meta": _meta(cfg, grid),
        "limit_kind": rep.limit_kind,
        "limit_value": rep.limit_value,
        "context": rep.context,
        "rows": [_row_dict(r) for r in rep.rows],
    })
    return 0 if rep.converged else 3


def _cmd_sweep_l(cfg, out_dir):
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    p = sample_exponent(cfg["p_expr"], grid)
    rep = asymptotics.sweep_l(p, cfg["sweep"]["l_list"], _solver_options(cfg))
    cols = ["index", "eigenvalue_estimate", "sup_norm_of_extremal", "argmax_x",
            "argmax_y", "gap_to_limit", "el_residual", "converged",
            "sup_dist_to_scaled_distance", "bound_violation", "gamma_singleton"]
    write_text_atomic(os.path.join(out_dir, "sweep_l.csv"), _sweep_csv(rep.rows, cols))
    write_text_atomic(os.path.join(out_dir, "sweep_l_final_field.csv"),
                      field_csv_text(rep.final_field))
    _write_json(os.path.join(out_dir, "sweep_l.json"), {
        "meta": _meta(cfg, grid),
        "limit_kind": rep.limit_kind,
        "limit_value": rep.limit_value,
        "context": rep.context,
        "rows": [_row_dict(r) for r in rep.rows],
    })
    return 0 if rep.converged else 3


def _cmd_check_limit(cfg, out_dir):
    spec = _domain_spec(cfg)
    grid = build_grid(spec)
    p = sample_exponent(cfg["p_expr"], grid)
    chk = cfg["check"]
    field_csv = chk["field_csv"] or os.path.join(out_dir, "sweep_l_final_field.csv")
    if not os.path.exists(field_csv):
        raise ConfigError(f"field CSV not found: {field_csv} (run sweep-l first or pass --field)")
    w = load_field_csv(grid, field_csv)
    w = ScalarField(grid, w.values / np.abs(w.values).max(), zero_trace=False)
    x_star = chk["x_star_node"]
    if x_star is None:
        x_star = int(np.argmax(np.abs(w.values)))
    h = grid.spacing
    excl = chk["exclusion_radius"] if chk["exclusion_radius"] is not None else 8 * h
    width = chk["smoothing_width"] if chk["smoothing_width"] is not None else 2 * h

    stats = infinity_operator.limit_residual(w, p, x_star, excl, width)
    dres = distance_ridge.distance_field(grid)
    base_field = ScalarField(grid, dres.d.values / dres.d_max, zero_trace=True)
    base = infinity_operator.limit_residual(
        base_field, p, int(np.argmax(base_field.values)), excl, width)
    _write_json(os.path.join(out_dir, "check_limit.json"), {
        "meta": _meta(cfg, grid),
        "field_csv": os.path.basename(field_csv),
        "x_star_node": x_star,
        "residual": stats.__dict__,
        "distance_baseline": base.__dict__,
        "median_ratio_to_baseline": stats.median / base.median,
    })
    return 0


def _cmd_report(cfg, out_dir):
    bundle = {}
    for name in sorted(os.listdir(out_dir)):
        if not name.endswith(".json") or name == "report.json":
            continue
        with open(os.path.join(out_dir, name)) as f:
            bundle[name] = json.load(f)
    _write_json(os.path.join(out_dir, "report.json"), {"reports": bundle,
                                                       "count": len(bundle)})
    return 0


COMMANDS = {
    "norm": _cmd_norm,
    "minimize": _cmd_minimize,
    "sweep-j": _cmd_sweep_j,
    "sweep-l": _cmd_sweep_l,
    "distance": _cmd_distance,
    "check-limit": _cmd_check_limit,
    "report": _cmd_report,
}


# -- argument parsing ------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="luxmin",
                                 description="Variable-exponent quotient experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--output-dir", help=f"artifact directory (default ${OUTPUT_DIR_ENV} or '.')")
        sp.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config entry by dotted path")
        sp.add_argument("--shape", choices=sorted(_SHAPE_KEYS))
        sp.add_argument("--n", type=int)
        for flag in ("w", "h", "r", "a", "b", "notch-w", "notch-h", "r-in", "r-out"):
            sp.add_argument(f"--{flag}", type=float)
        sp.add_argument("--p", help="p exponent expression")
        sp.add_argument("--q", help="q exponent expression")
        sp.add_argument("--u", help="field expression (norm subcommand)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--l", type=int, help="l scale for sweep-j")
        sp.add_argument("--j-list", help="comma-separated j values")
        sp.add_argument("--l-list", help="comma-separated l values")
        sp.add_argument("--field", help="field CSV for check-limit")
        sp.add_argument("--x-star-node", type=int)
        sp.add_argument("--exclusion-radius", type=float)
        sp.add_argument("--smoothing-width", type=float)
    return ap


def _config_from_args(args):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if args.config:
        try:
            with open(args.config) as f:
                loaded = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        # the domain block is shape-specific: replace it wholesale and let
        # validation check the per-shape keys
        domain = loaded.pop("domain", None)
        cfg = _deep_merge(cfg, loaded)
        if domain is not None:
            if not isinstance(domain, dict):
                raise ConfigError("domain must be an object")
            cfg["domain"] = dict(domain)
            cfg["domain"].setdefault("n", 64)

    if args.shape:
        cfg["domain"] = {"shape": args.shape, "n": cfg["domain"].get("n", 64)}
    for flag in ("w", "h", "r", "a", "b", "notch_w", "notch_h", "r_in", "r_out"):
        val = getattr(args, flag)
        if val is not None:
            cfg["domain"][flag] = val
    if args.n is not None:
        cfg["domain"]["n"] = args.n
    if args.p is not None:
        cfg["p_expr"] = args.p
    if args.q is not None:
        cfg["q_expr"] = args.q
    if args.u is not None:
        cfg["u_expr"] = args.u
    if args.seed is not None:
        cfg["solver"]["seed"] = args.seed
    if args.l is not None:
        cfg["sweep"]["l"] = args.l
    if args.j_list is not None:
        cfg["sweep"]["j_list"] = _int_list(args.j_list, "--j-list")
    if args.l_list is not None:
        cfg["sweep"]["l_list"] = _int_list(args.l_list, "--l-list")
    if args.field is not None:
        cfg["check"]["field_csv"] = args.field
    if args.x_star_node is not None:
        cfg["check"]["x_star_node"] = args.x_star_node
    if args.exclusion_radius is not None:
        cfg["check"]["exclusion_radius"] = args.exclusion_radius
    if args.smoothing_width is not None:
        cfg["check"]["smoothing_width"] = args.smoothing_width

    for entry in args.set:
        if "=" not in entry:
            raise ConfigError(f"--set expects KEY.PATH=VALUE, got {entry!r}")
        dotted, raw = entry.split("=", 1)
        _set_dotted(cfg, dotted, raw)

    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    if cfg["output_dir"] is None:
        cfg["output_dir"] = os.environ.get(OUTPUT_DIR_ENV, ".")
    return _validate(cfg)


def _int_list(text, what):
    try:
        vals = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"{what} is empty")
    return vals


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        out_dir = cfg["output_dir"]
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LuxminError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
