"""Command-line front end: figure data, rotor runs, oracle campaign, algebra report.

Every run takes one JSON config (merged over per-command defaults and checked
against a schema), writes its outputs into ``--out`` and finishes with a
``manifest.json`` listing the config, code version, outputs with checksums,
fixture checksums and timings.

Exit status: 0 ok, 2 config error, 3 numerical failure, 4 validation-suite failure.
"""

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, algebra, barrier, constrained, rotor, schrodinger, svg
from .errors import CQMError, GeometryError, NumericalError, ValidationError

log = logging.getLogger("cqmech")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SUITE = 0, 2, 3, 4


class SuiteFailure(CQMError):
    pass


# ---------------------------------------------------------------- configs

_POS = {"type": "number", "exclusiveMinimum": 0}
_ALPHA = {"oneOf": [_POS, {"const": "inf"}]}
_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_KGRID = {"type": "object", "additionalProperties": False,
          "required": ["k_min", "k_max", "n"],
          "properties": {"k_min": _POS, "k_max": _POS, "n": {"type": "integer", "minimum": 2}}}

DEFAULTS = {
    "fig1": {"V0": 1.0, "L": 8.0, "alphas": [0.25, 1, 2, 8],
             "x_min": -6.0, "x_max": 14.0, "n_points": 401},
    "fig2": {"L": 8.0, "modes": ["icm", "cm", "qm", "qm_avg", "cqm"],
             "alphas": [4, 16, 64, "inf"], "cqm_alphas": [0.25, 4],
             "k_grid": {"k_min": 0.02, "k_max": 2.5, "n": 250}, "cqm_tol": 1e-9},
    "rotor": {"moments": [1.0, 2.0, 3.0], "L_body": [0.4, 0.9, 0.6],
              "orientation_axis": [1.0, 1.0, 0.0], "orientation_angle": 0.3,
              "periods": 20, "n_out": 2001, "tol": 1e-10, "crosscheck_periods": 10,
              "precession": {"moments": [2.0, 2.0, 1.0], "L_body": [0.3, 0.4, 1.1],
                             "periods": 100}},
    "oracle": {"alpha": 400, "kbars": [1.1, 1.3, 1.5, 1.7, 2.0], "L": 8.0,
               "tolerance": 0.02, "argument": "sqrt", "detect_margin": 0.05,
               "fidelity": {"alpha": 400, "kbar": 1.0, "threshold": 0.99}},
    "algebra-report": {"fixtures": list(algebra.FIXTURES), "rotor_moments": [1.0, 2.0, 3.0]},
}

SCHEMAS = {
    "fig1": {"type": "object", "additionalProperties": False, "properties": {
        "V0": _POS, "L": _POS, "alphas": {"type": "array", "items": _POS, "minItems": 1},
        "x_min": {"type": "number"}, "x_max": {"type": "number"},
        "n_points": {"type": "integer", "minimum": 2}}},
    "fig2": {"type": "object", "additionalProperties": False, "properties": {
        "L": _POS,
        "modes": {"type": "array", "minItems": 1, "uniqueItems": True,
                  "items": {"enum": ["icm", "cm", "qm", "qm_avg", "cqm"]}},
        "alphas": {"type": "array", "items": _ALPHA, "minItems": 1},
        "cqm_alphas": {"type": "array", "items": _POS},
        "k_grid": _KGRID, "cqm_tol": _POS}},
    "rotor": {"type": "object", "additionalProperties": False, "properties": {
        "moments": {**_VEC3, "items": _POS}, "L_body": _VEC3,
        "orientation_axis": _VEC3, "orientation_angle": {"type": "number"},
        "periods": _POS, "n_out": {"type": "integer", "minimum": 2}, "tol": _POS,
        "crosscheck_periods": _POS,
        "precession": {"oneOf": [{"type": "null"}, {
            "type": "object", "additionalProperties": False,
            "required": ["moments", "L_body", "periods"],
            "properties": {"moments": {**_VEC3, "items": _POS}, "L_body": _VEC3,
                           "periods": _POS}}]}}},
    "oracle": {"type": "object", "additionalProperties": False, "properties": {
        "alpha": _POS, "kbars": {"type": "array", "items": _POS, "minItems": 1},
        "L": _POS, "tolerance": _POS, "argument": {"enum": ["sqrt", "linear"]},
        "detect_margin": _POS,
        "fidelity": {"oneOf": [{"type": "null"}, {
            "type": "object", "additionalProperties": False,
            "properties": {"alpha": _POS, "kbar": _POS, "threshold": _POS}}]}}},
    "algebra-report": {"type": "object", "additionalProperties": False, "properties": {
        "fixtures": {"type": "array", "items": {"enum": list(algebra.FIXTURES)}},
        "rotor_moments": {**_VEC3, "items": _POS}}},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(command, path=None, doc=None):
    """Defaults for ``command`` overlaid with the JSON at ``path`` (or ``doc``), then validated."""
    user = doc if doc is not None else {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ValidationError("config must be a JSON object")
    try:
        jsonschema.validate(user, SCHEMAS[command])
        cfg = _merge(DEFAULTS[command], user)
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config error at {where}: {exc.message}") from None
    return cfg


def _alpha(a):
    return math.inf if a == "inf" else float(a)


def _alpha_tag(a):
    return "inf" if a == "inf" or a == math.inf else f"{float(a):g}"


# ---------------------------------------------------------------- output helpers

class Outputs:
    """Collects files written by a run; writes are serialised through here."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _write(self, name, data):
        p = self.dir / name
        p.write_bytes(data)
        self.files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        return p

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        return self._write(name, buf.getvalue().encode())

    def json(self, name, obj):
        return self._write(name, (json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n").encode())

    def text(self, name, s):
        return self._write(name, s.encode())


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def fixture_checksums():
    return {name: hashlib.sha256(algebra.fixture_path(name).read_bytes()).hexdigest()
            for name in algebra.FIXTURES}


def _pmap(fn, items, threads):
    """Order-preserving map; results do not depend on the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- commands

def cmd_fig1(cfg, out, threads=1):
    V = barrier.BarrierPotential(cfg["V0"], cfg["L"])
    x = np.linspace(cfg["x_min"], cfg["x_max"], cfg["n_points"])
    rows, series, maxima = [], [], {}
    for a in cfg["alphas"]:
        v = barrier.smeared_potential(V, a, x)
        rows += [[float(xi), float(vi), float(a), V.V0, V.L] for xi, vi in zip(x, v)]
        series.append((f"alpha={a:g}", x.tolist(), v.tolist()))
        maxima[f"{a:g}"] = barrier.smeared_potential_max(V, a)
    out.csv("fig1_potential.csv", ["xbar", "Vbar", "alpha", "V0", "L"], rows)
    out.json("fig1_summary.json", {"max_Vbar": maxima, "V0": V.V0, "L": V.L})
    out.text("fig1.svg", svg.line_chart(series, title="Smeared barrier", xlabel="xbar",
                                        ylabel="Vbar", y_range=(0, 1.05 * V.V0),
                                        generator=f"cqmech {__version__}"))
    return {"max_Vbar": maxima}


def _cqm_point(args):
    alpha, k, L, tol = args
    return float(constrained.constrained_transmission(alpha, k, barrier.BarrierPotential(1.0, L), tol))


def cmd_fig2(cfg, out, threads=1):
    V = barrier.BarrierPotential(1.0, cfg["L"])
    g = cfg["k_grid"]
    if not g["k_max"] > g["k_min"]:
        raise ValidationError("config error at k_grid: k_max must exceed k_min")
    k = np.linspace(g["k_min"], g["k_max"], g["n"])
    curves = {}
    for mode in cfg["modes"]:
        if mode in ("icm", "qm"):
            curves[(mode, "inf")] = barrier.transmission_curve(mode, math.inf, k, V)
        elif mode in ("cm", "qm_avg"):
            for a in cfg["alphas"]:
                curves[(mode, a)] = barrier.transmission_curve(mode, _alpha(a), k, V)
        else:
            for a in cfg["cqm_alphas"]:
                T = _pmap(_cqm_point, [(float(a), float(kk), V.L, cfg["cqm_tol"]) for kk in k],
                          threads)
                curves[(mode, a)] = list(zip(k.tolist(), T))
    left, right = [], []
    for (mode, a), table in curves.items():
        tag = _alpha_tag(a)
        out.csv(f"fig2_{mode}_alpha{tag}.csv", barrier.CURVE_HEADER,
                barrier.curve_rows(mode, tag if tag == "inf" else float(a), table, V))
        label = mode if mode in ("icm", "qm") else f"{mode} a={tag}"
        s = (label, [p[0] for p in table], [p[1] for p in table])
        (right if mode in ("qm", "qm_avg") else left).append(s)
    gen = f"cqmech {__version__}"
    out.text("fig2_classical.svg", svg.line_chart(left, title="Classical", xlabel="k",
                                                  ylabel="T", y_range=(0, 1.05), generator=gen))
    out.text("fig2_quantum.svg", svg.line_chart(right, title="Quantum", xlabel="k",
                                                ylabel="T", y_range=(0, 1.05), generator=gen))
    return {"curves": len(curves)}


def _rotor_state(L_body, axis, angle):
    ax = np.asarray(axis, dtype=float)
    R = np.eye(3) if np.linalg.norm(ax) == 0 else rotor.rotation(ax, angle)
    return rotor.RotorState(R, L_body)


def cmd_rotor(cfg, out, threads=1):
    m = rotor.IntrinsicMoments.of(cfg["moments"])
    s0 = _rotor_state(cfg["L_body"], cfg["orientation_axis"], cfg["orientation_angle"])
    P = rotor.characteristic_period(m, s0)
    if not math.isfinite(P):
        raise ValidationError("config error at L_body: zero angular momentum has no period")
    t_end = cfg["periods"] * P
    tol = cfg["tol"]
    traj = rotor.evolve_rotor(m, s0, (0.0, t_end), tol=tol,
                              t_eval=np.linspace(0.0, t_end, cfg["n_out"]))
    out.csv("rotor_trajectory.csv", rotor.TRAJECTORY_HEADER, traj.rows())
    dH = float(np.max(np.abs(traj.energy - traj.energy[0])))
    dL = float(np.max(np.abs(traj.lsq - traj.lsq[0])))
    report = {
        "moments": m.values, "L_body0": s0.L_body, "period": P, "t_end": t_end, "tol": tol,
        "max_abs_dH": dH, "max_abs_dLsq": dL,
        "rel_dH": dH / abs(traj.energy[0]), "rel_dLsq": dL / traj.lsq[0],
    }
    tc = cfg["crosscheck_periods"] * P
    report["lie_poisson_deviation"] = rotor.lie_poisson_crosscheck(m, s0, (0.0, tc), tol=min(tol, 1e-11))
    report["lie_poisson_periods"] = cfg["crosscheck_periods"]
    pc = cfg["precession"]
    if pc is not None:
        mp = rotor.IntrinsicMoments.of(pc["moments"])
        sp = rotor.RotorState(np.eye(3), pc["L_body"])
        Pp = rotor.characteristic_period(mp, sp)
        tp = pc["periods"] * Pp
        tr = rotor.evolve_rotor(mp, sp, (0.0, tp), tol=min(tol, 1e-11),
                                t_eval=np.linspace(0.0, tp, 4001))
        lam = rotor.measured_precession_rate(tr)
        exact = rotor.symmetric_top_rate(mp, pc["L_body"][2])
        report["precession"] = {"moments": mp.values, "measured": lam, "analytic": exact,
                                "abs_error": abs(lam - exact)}
    out.json("rotor_conservation.json", report)
    out.json("rotor_geometry.json", rotor.orbit_geometry_report(m))
    t = traj.t.tolist()
    out.text("rotor_L.svg", svg.line_chart(
        [(f"L{i + 1}", t, traj.L_body[:, i].tolist()) for i in range(3)],
        title="Body angular momentum", xlabel="t", ylabel="L", generator=f"cqmech {__version__}"))
    return report


def _oracle_point(args):
    alpha, kbar, L = args
    r = schrodinger.transmission_of_packet(alpha, kbar, barrier.BarrierPotential(1.0, L))
    return r.transmission, r.norm_drift, r.t_end


def cmd_oracle(cfg, out, threads=1):
    V = barrier.BarrierPotential(1.0, cfg["L"])
    a = float(cfg["alpha"])
    measured = _pmap(_oracle_point, [(a, float(k), V.L) for k in cfg["kbars"]], threads)
    rows, worst, worst_other = [], 0.0, 0.0
    other = "linear" if cfg["argument"] == "sqrt" else "sqrt"
    for k, (T, drift, t_end) in zip(cfg["kbars"], measured):
        q = barrier.t_quantum_avg(a, k, V, argument=cfg["argument"])
        q_other = barrier.t_quantum_avg(a, k, V, argument=other)
        worst = max(worst, abs(T - q))
        worst_other = max(worst_other, abs(T - q_other))
        rows.append({"kbar": k, "T_packet": T, "T_formula": q, "T_other_formula": q_other,
                     "abs_diff": abs(T - q), "norm_drift": drift, "t_end": t_end})
    agree = worst <= cfg["tolerance"]
    report = {"alpha": a, "argument": cfg["argument"], "tolerance": cfg["tolerance"],
              "points": rows, "max_abs_diff": worst, "agreement_pass": agree,
              "other_argument": other, "other_max_abs_diff": worst_other,
              "other_rejected": worst_other > cfg["detect_margin"]}
    ok = agree
    if cfg["argument"] == "sqrt":
        # the suite must also be able to tell the two formulas apart
        ok = ok and report["other_rejected"]
    fc = cfg["fidelity"]
    if fc is not None:
        fa, fk = float(fc.get("alpha", 400)), float(fc.get("kbar", 1.0))
        thr = float(fc.get("threshold", 0.99))
        r = schrodinger.transmission_of_packet(fa, fk, V)
        g, xb, _ = schrodinger.auto_grid(fa, fk, V)
        f0 = schrodinger.fidelity_to_family(g, schrodinger.init_gaussian(g, fa, xb, fk), fa)
        f1 = schrodinger.fidelity_to_family(r.grid, r.state, fa)
        report["fidelity"] = {"alpha": fa, "kbar": fk, "threshold": thr,
                              "initial": f0["fidelity"], "after_barrier": f1["fidelity"],
                              "best_fit_after": f1["best_fit"], "t_end": r.t_end,
                              "pass": f1["fidelity"] < thr and f0["fidelity"] >= 1 - 1e-8}
        ok = ok and report["fidelity"]["pass"]
    report["pass"] = bool(ok)
    out.json("oracle_report.json", report)
    if not ok:
        raise SuiteFailure("oracle suite failed; see oracle_report.json")
    return report


def cmd_algebra_report(cfg, out, threads=1):
    rep = {}
    for name in cfg["fixtures"]:
        sc, r = algebra.load_fixture(name)
        entry = {"dim": sc.dim, "jacobi_residual": sc.jacobi_residual()}
        if r is not None:
            entry["hilbert_dim"] = r.dim_hilbert
            entry["closure_residual"] = r.closure_residual()
        rep[name] = entry
    rep["rotor_orbit"] = rotor.orbit_geometry_report(cfg["rotor_moments"])
    out.json("algebra_report.json", rep)
    return rep


COMMANDS = {"fig1": cmd_fig1, "fig2": cmd_fig2, "rotor": cmd_rotor, "oracle": cmd_oracle,
            "algebra-report": cmd_algebra_report}


def run(command, cfg, out_dir, threads=1, seed=None):
    """Execute ``command`` with a validated config and write its manifest."""
    out = Outputs(out_dir)
    t0 = time.perf_counter()
    status = "ok"
    try:
        result = COMMANDS[command](cfg, out, threads)
    except SuiteFailure:
        status = "suite-failure"
        result = None
        raise
    finally:
        manifest = {"command": command, "config": cfg, "version": __version__,
                    "seed": seed, "status": status,
                    "outputs": sorted(out.files, key=lambda f: f["path"]),
                    "fixture_checksums": fixture_checksums(),
                    "timings": {"wall_seconds": time.perf_counter() - t0}}
        (out.dir / "manifest.json").write_text(json.dumps(_plain(manifest), indent=1, sort_keys=True) + "\n")
    return result


def build_parser():
    p = argparse.ArgumentParser(prog="cqmech", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        sp.add_argument("--config", help="JSON config file (merged over defaults)")
        sp.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("--seed", type=int, default=None,
                        help="reserved; every computation is currently deterministic")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or str(Path("out") / args.command)
    try:
        cfg = load_config(args.command, args.config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            run(args.command, cfg, out_dir, args.threads, args.seed)
    except SuiteFailure as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_SUITE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, GeometryError, CQMError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("wrote %s", out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
