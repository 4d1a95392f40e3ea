"""Manifest-driven command line front end.

    sdde-lindstedt --manifest run.json --out results/ [--verbose]

Each run writes result.json, residuals.csv and report.txt.  Exit status is
0 on success, 2 on a failed precondition (bad manifest, seed, frame or
obstruction), 3 on a near-resonance abort and 1 on anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .divisors import DIVISOR_FLOOR, check_diophantine
from .errors import DiophantineError, LindstedtError, ManifestError, NearResonanceError
from .limit_cycle import cycle_residual_scan, run_newton
from .lindstedt import expand_invariance, residual_scan
from .models import catalog, get_model
from .oracle import compare_trajectory, fit_order

COMMANDS = ("expand", "limit-cycle", "residual-scan", "oracle-compare", "diophantine-check",
            "catalog")

# key -> (type check, validator, description)
_NUM = (int, float)
_SCHEMA = {
    "command": (str, lambda v: v in COMMANDS, f"one of {', '.join(COMMANDS)}"),
    "model": (str, lambda v: len(v) > 0, "catalog id"),
    "params": (dict, lambda v: True, "model parameter overrides"),
    "N": (int, lambda v: 0 <= v <= 20, "integer in [0, 20]"),
    "cutoff": (int, lambda v: 1 <= v <= 512, "integer in [1, 512]"),
    "product_cutoff": (int, lambda v: 3 <= v <= 4096, "grid size in [3, 4096]"),
    "gamma": (_NUM, lambda v: v > 0, "positive"),
    "tau": (_NUM, lambda v: v > 0, "positive"),
    "kmax": (int, lambda v: 1 <= v <= 10000, "integer in [1, 10000]"),
    "floor": (_NUM, lambda v: 0 < v < 1, "in (0, 1)"),
    "strategy": (str, lambda v: v in ("hamiltonian", "reducible"), "hamiltonian or reducible"),
    "eps": (list, lambda v: len(v) >= 1 and all(isinstance(x, _NUM) and 0 <= x < 1 for x in v),
            "non-empty list of numbers in [0, 1)"),
    "T": (_NUM, lambda v: 0 < v <= 1e4, "in (0, 1e4]"),
    "dt": (_NUM, lambda v: 0 < v <= 1, "in (0, 1]"),
    "steps": (int, lambda v: 0 <= v <= 10, "integer in [0, 10]"),
    "order": (int, lambda v: 0 <= v <= 20, "integer in [0, 20]"),
    "omega": (list, lambda v: 1 <= len(v) <= 3 and all(isinstance(x, _NUM) for x in v),
              "list of 1 to 3 numbers"),
    "seed": (int, lambda v: v >= 0, "non-negative integer"),
}

_DEFAULT_EPS = [1e-3, 2e-3, 4e-3, 8e-3]


def validate_manifest(obj) -> dict:
    if not isinstance(obj, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = sorted(set(obj) - set(_SCHEMA))
    if unknown:
        raise ManifestError(f"unknown manifest keys: {', '.join(unknown)}", keys=unknown)
    if "command" not in obj:
        raise ManifestError("manifest needs a 'command'")
    for key, value in obj.items():
        typ, ok, what = _SCHEMA[key]
        if isinstance(value, bool) or not isinstance(value, typ) or not ok(value):
            raise ManifestError(f"manifest key {key!r} must be {what}", key=key)
    needs_model = obj["command"] in ("expand", "limit-cycle", "residual-scan", "oracle-compare")
    if needs_model and "model" not in obj:
        raise ManifestError(f"command {obj['command']!r} needs a 'model'")
    if obj["command"] == "diophantine-check" and "omega" not in obj:
        raise ManifestError("diophantine-check needs 'omega'")
    return obj


def jsonable(x):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(x.real), jsonable(x.imag)]
    if x is None or isinstance(x, str):
        return x
    if hasattr(x, "to_json"):
        return jsonable(x.to_json())
    return str(x)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _entry(m: dict):
    params = dict(m.get("params", {}))
    if "cutoff" in m:
        params.setdefault("cutoff", m["cutoff"])
    return get_model(m["model"], **params)


def _slope(rows):
    pos = [(r[0], r[1]) for r in rows if r[0] > 0 and r[1] > 0]
    if len(pos) < 3:
        return None
    slope, intercept, dev = fit_order(pos)
    return {"slope": slope, "log_constant": intercept, "max_deviation": dev}


def _expand(m: dict, entry):
    K0, om0 = entry.seed()
    kw = {"grid_size": m.get("product_cutoff"), "gamma": m.get("gamma", 0.1),
          "tau": m.get("tau"), "kmax": m.get("kmax", 100), "floor": m.get("floor", DIVISOR_FLOOR),
          "strategy": m.get("strategy")}
    return expand_invariance(entry.model, K0, om0, m.get("N", 2), **kw)


def _cycle(m: dict, entry):
    return run_newton(entry.model, entry.seed(), m.get("N", 2), steps=m.get("steps"),
                      grid_size=m.get("product_cutoff"))


def cmd_catalog(m: dict):
    models = [get_model(i).describe() for i in catalog()]
    lines = ["bundled models:"] + [f"  {d['id']}: {d['doc']}" for d in models]
    return {"command": "catalog", "models": models}, None, lines


def cmd_diophantine(m: dict):
    wit = check_diophantine(m["omega"], m.get("gamma", 0.1), m.get("tau"), m.get("kmax", 100))
    lines = [f"omega = {list(wit.omega)}",
             f"gamma = {wit.gamma}, tau = {wit.tau}, kmax = {wit.kmax}",
             f"min |omega.k| |k|^tau = {wit.min_product:.6e} at k = {list(wit.worst_k)}",
             f"passed = {str(wit.passed).lower()}"]
    return {"command": "diophantine-check", "witness": wit.to_json()}, None, lines


def cmd_expand(m: dict, scan_only: bool = False):
    entry = _entry(m)
    if entry.model.structure == "limit_cycle":
        raise ManifestError(f"model {entry.id!r} is a limit-cycle model; use limit-cycle")
    res = _expand(m, entry)
    eps = m.get("eps", _DEFAULT_EPS)
    rows = residual_scan(entry.model, res, eps, order=m.get("order"))
    fit = _slope(rows)
    out = {"command": m["command"], "model": entry.id, "residual_scan": rows, "fit": fit}
    if not scan_only:
        out["expansion"] = res.to_json()
    else:
        out["residual_by_order"] = res.residual_by_order
    lines = [f"model {entry.id}, N = {res.order}, strategy = {res.diagnostics.get('strategy')}",
             "per-order residual sup norms:"]
    lines += [f"  order {j}: {v:.3e}" for j, v in enumerate(res.residual_by_order)]
    dio = res.diagnostics.get("diophantine")
    if dio:
        lines.append(f"divisors: min product {dio['min_product']:.4e} at k = {dio['worst_k']}")
    lines += _scan_lines(rows, fit)
    return out, (["eps", "sup_defect", "l2_defect"], rows), lines


def _scan_lines(rows, fit):
    lines = ["residual scan (eps, sup, l2):"]
    lines += [f"  {r[0]:.3e}  {r[1]:.6e}  {r[2]:.6e}" for r in rows]
    if fit:
        lines.append(f"fitted slope {fit['slope']:.4f} (max deviation {fit['max_deviation']:.2e})")
    return lines


def cmd_limit_cycle(m: dict):
    entry = _entry(m)
    if entry.model.structure != "limit_cycle":
        raise ManifestError(f"model {entry.id!r} is not a limit-cycle model")
    ex = _cycle(m, entry)
    eps = m.get("eps", _DEFAULT_EPS)
    rows = cycle_residual_scan(entry.model, ex, eps, layers=0)
    fit = _slope(rows)
    lines = [f"model {entry.id}, N = {ex.order}, steps = {ex.diagnostics['steps']}",
             "residual eps-order after each step:"]
    lines += [f"  step {h['step']}: {h['residual_order']}" for h in ex.step_history]
    lines.append("omega_j: " + ", ".join(f"{float(x):.12g}" for x in ex.omega.terms))
    lines.append("lambda_j: " + ", ".join(f"{float(x):.12g}" for x in ex.lam.terms))
    lines += _scan_lines(rows, fit)
    out = {"command": "limit-cycle", "model": entry.id, "expansion": ex.to_json(),
           "residual_scan": rows, "fit": fit}
    return out, (["eps", "sup_defect", "l2_defect"], rows), lines


def cmd_oracle(m: dict):
    entry = _entry(m)
    eps = m.get("eps", [2e-3, 1e-3])
    dt = m.get("dt", 1e-3)
    if entry.model.structure == "limit_cycle":
        res = _cycle(m, entry)
        period = 1.0 / float(res.omega.terms[0])
    else:
        res = _expand(m, entry)
        period = 1.0 / float(np.min(np.abs(np.atleast_1d(res.omega.terms[0]))))
    T = m.get("T", period)
    rows = [(float(e), compare_trajectory(entry.model, res, float(e), T, dt=dt,
                                          order=m.get("order"))) for e in eps]
    fit = _slope(rows)
    lines = [f"model {entry.id}, N = {res.order}, T = {T:.6g}, dt = {dt:g}",
             "sup trajectory distance (eps, distance):"]
    lines += [f"  {e:.3e}  {d:.6e}" for e, d in rows]
    if fit:
        lines.append(f"fitted slope {fit['slope']:.4f}")
    out = {"command": "oracle-compare", "model": entry.id, "T": T, "dt": dt,
           "comparison": rows, "fit": fit}
    return out, (["eps", "sup_distance"], rows), lines


_DISPATCH = {
    "catalog": cmd_catalog,
    "diophantine-check": cmd_diophantine,
    "expand": cmd_expand,
    "residual-scan": lambda m: cmd_expand(m, scan_only=True),
    "limit-cycle": cmd_limit_cycle,
    "oracle-compare": cmd_oracle,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (NearResonanceError, DiophantineError)):
        return 3
    if isinstance(exc, LindstedtError):
        return 2
    return 1


def error_object(exc: BaseException) -> dict:
    if isinstance(exc, LindstedtError):
        return jsonable(exc.to_dict())
    return {"kind": "internal", "type": type(exc).__name__, "message": str(exc)}


def run(manifest: dict, out_dir: str) -> int:
    """Execute one manifest and write its artifacts; returns the exit status."""
    os.makedirs(out_dir, exist_ok=True)
    csv_table = (["eps", "sup_defect", "l2_defect"], [])
    try:
        m = validate_manifest(manifest)
        if "seed" in m:
            np.random.seed(m["seed"])
        result, table, lines = _DISPATCH[m["command"]](m)
        if table is not None:
            csv_table = table
        result = {"status": "ok", "version": __version__, "manifest": m, **result}
        status = 0
    except Exception as exc:  # every failure becomes an artifact plus an exit code
        status = exit_code(exc)
        err = error_object(exc)
        result = {"status": "error", "version": __version__, "manifest": manifest,
                  "error": err}
        lines = [f"error ({err.get('kind')}): {err.get('message')}"]
        if err.get("info"):
            lines.append("details: " + json.dumps(jsonable(err["info"]), sort_keys=True))
    text = json.dumps(jsonable(result), sort_keys=True, indent=2) + "\n"
    _atomic_write(os.path.join(out_dir, "result.json"), text)
    _atomic_write(os.path.join(out_dir, "residuals.csv"), _csv_text(*csv_table))
    _atomic_write(os.path.join(out_dir, "report.txt"),
                  "\n".join(lines + [f"exit status {status}"]) + "\n")
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sdde-lindstedt",
                                 description="Lindstedt series for state-dependent delay equations")
    ap.add_argument("--manifest", required=True, help="JSON run manifest")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--verbose", action="store_true", help="echo the report to stdout")
    args = ap.parse_args(argv)
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        manifest = {"_unreadable": str(exc)}
    status = run(manifest, args.out)
    if args.verbose:
        with open(os.path.join(args.out, "report.txt")) as fh:
            sys.stdout.write(fh.read())
    return status


if __name__ == "__main__":
    sys.exit(main())
