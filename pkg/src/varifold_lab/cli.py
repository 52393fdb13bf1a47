"""``varifold-lab`` command line front end.

Exit codes: 0 success, 1 acceptance failure (``suite`` only), 2 bad input,
3 numeric failure, 4 input outside the rigidity regime. Errors go to stderr
as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _accel, acceptance, bochner, curvature, mesh_io, moebius, monotonicity, rigidity, zoo
from .errors import InputError, InvalidSpec, VarifoldError

UNITS = {
    "willmore": "dimensionless (scale invariant)",
    "tracefree_sq_integral": "dimensionless",
    "full_sff_sq_integral": "dimensionless",
    "mean_curvature_sq_integral": "dimensionless",
    "gauss_integral": "dimensionless",
    "excluded_mass": "length^2",
    "mass": "length^2",
    "delta": "dimensionless",
    "radius": "length",
    "density_ratio": "dimensionless",
    "diameter": "length",
    "sup_deviation": "unit-sphere lengths",
    "laplace_defect": "unit-sphere area",
    "residual_l1": "chart area x density units",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidSpec(f"{self.prog}: {message}")


def _floats(text, n=None):
    try:
        vals = [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidSpec(f"expected comma separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise InvalidSpec(f"expected {n} numbers, got {len(vals)}")
    return vals


def _load(path):
    if path is None:
        raise InvalidSpec("--input is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{p}: no such file")
    return mesh_io.read_mesh(p)


def _provenance(v=None, t0=None):
    d = {"tool": "varifold-lab", "version": __version__,
         "backend": "numba" if _accel.numba_enabled() else "numpy"}
    if v is not None:
        d["mesh_sha256"] = mesh_io.mesh_hash(v)
        d["n_vertices"] = v.n_vertices
        d["n_faces"] = v.n_faces
    if t0 is not None:
        d["wall_time_s"] = time.perf_counter() - t0
    return d


def _report(args, operation, results, v=None, t0=None, units=None, caught=()):
    cfg = {k: val for k, val in vars(args).items() if k != "func" and val is not None}
    rep = {"operation": operation, "config": cfg, "results": results,
           "units": {k: UNITS[k] for k in (units or ()) if k in UNITS}}
    if caught:
        rep["warnings"] = [f"{w.category.__name__}: {w.message}" for w in caught]
    rep["provenance"] = _provenance(v, t0)
    return rep


def _emit(args, rep, dest=None):
    mesh_io.write_json(dest if dest is not None else getattr(args, "report", None) or "-", rep)


# ------------------------------------------------------------------ commands

GEN_FLAGS = {"subdiv": int, "radius": float, "eps": float, "l": int, "m": int, "R": float, "r": float,
             "n_tube": int, "theta": int, "truncation": float, "half_length": float,
             "pole_distance": float, "resolution": float, "jitter": float}


def cmd_gen(args, t0):
    if args.spec:
        text = Path(args.spec).read_text() if Path(args.spec).is_file() else args.spec
        try:
            spec = zoo.ZooSpec.from_json(text)
        except (json.JSONDecodeError, KeyError) as exc:
            raise InvalidSpec(f"bad --spec: {exc}") from exc
    else:
        if not args.kind:
            raise InvalidSpec("gen needs --kind or --spec")
        params = {k: getattr(args, k) for k in GEN_FLAGS if getattr(args, k) is not None}
        if args.axes is not None:
            params["axes"] = tuple(_floats(args.axes, 3))
        spec = zoo.ZooSpec(args.kind, params, args.seed)
    v = zoo.generate(spec)
    out = Path(args.output)
    mesh_io.write_mesh(out, v)
    try:
        ref = zoo.analytic_reference(spec)
    except InputError:
        ref = None
    res = {"zoo.generate": {"spec": json.loads(spec.to_json()), "resolved": spec.resolved(), "path": str(out),
                            "closed": v.is_closed, "euler_characteristic": v.euler_characteristic},
           "zoo.analytic_reference": ref}
    _emit(args, _report(args, "gen", res, v, t0, units=("mass", "willmore", "diameter")))
    return 0


def cmd_energy(args, t0):
    v = _load(args.input)
    field = curvature.mean_curvature(v)
    e = curvature.willmore_energy(v, field)
    res = {"curvature.willmore_energy": e.as_dict(),
           "curvature.delta_tolerance": {"delta": curvature.delta_tolerance(v, e)},
           "mesh.total_mass": {"mass": float(v.face_areas @ v.multiplicity)}}
    _emit(args, _report(args, "energy", res, v, t0, units=list(e.as_dict()) + ["delta", "mass"]))
    return 0


def cmd_curvature(args, t0):
    v = _load(args.input)
    field = curvature.mean_curvature(v)
    if args.format == "csv" or (args.output and str(args.output).endswith(".csv")):
        header, rows = mesh_io.curvature_rows(field)
        if args.output:
            mesh_io.write_csv(args.output, header, rows)
        else:
            import csv
            w = csv.writer(sys.stdout)
            w.writerow(header)
            w.writerows(rows)
        return 0
    Hn = np.linalg.norm(field.mean_curvature, axis=1)
    ok = field.validity_mask
    res = {"curvature.mean_curvature": {"valid_vertices": int(ok.sum()), "masked_vertices": int((~ok).sum()),
                                        "H_norm_min": float(Hn[ok].min()), "H_norm_max": float(Hn[ok].max())},
           "curvature.total_gauss_curvature": curvature.total_gauss_curvature(v)}
    _emit(args, _report(args, "curvature", res, v, t0), args.output)
    return 0


def cmd_density(args, t0):
    v = _load(args.input)
    radii = None if args.radii is None else np.array(_floats(args.radii))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.center is None and args.vertex is None:
            rep = monotonicity.li_yau_check(v, radii=radii)
            res = {"monotonicity.li_yau_check": rep.as_dict()}
            _emit(args, _report(args, "density", res, v, t0, units=("willmore", "diameter"), caught=caught))
            return 0
        if args.center is not None and args.vertex is not None:
            raise InvalidSpec("give --center or --vertex, not both")
        x = np.array(_floats(args.center)) if args.center is not None else v.vertices[_index(v, args.vertex)]
        prof = monotonicity.density_profile(v, x, radii=radii)
    if args.format == "csv":
        rows = prof.rows()
        header = ["radius", "density_ratio", "remainder"]
        if args.output:
            mesh_io.write_csv(args.output, header, rows)
        else:
            print(",".join(header))
            for r in rows:
                print(",".join(repr(t) for t in r))
        return 0
    res = {"monotonicity.density_profile": {"center": prof.center, "radius": prof.radii, "density_ratio": prof.ratios,
                                            "remainder": prof.remainder, "limit_estimate": prof.limit_estimate}}
    _emit(args, _report(args, "density", res, v, t0, units=("radius", "density_ratio"), caught=caught), args.output)
    return 0


def _index(v, i):
    if not 0 <= i < v.n_vertices:
        raise InputError(f"vertex {i} out of range [0, {v.n_vertices})")
    return i


def cmd_invert(args, t0):
    v = _load(args.input)
    if (args.pole is None) == (args.vertex is None):
        raise InvalidSpec("give exactly one of --pole or --vertex")
    p = np.array(_floats(args.pole)) if args.pole is not None else v.vertices[_index(v, args.vertex)]
    if p.shape[0] != v.ambient_dim:
        raise InvalidSpec(f"pole has {p.shape[0]} coordinates, mesh lives in R^{v.ambient_dim}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if v.is_closed:
            ident, result = moebius.verify_inversion_identities(v, p, eta=args.eta)
            idd = ident.as_dict()
        else:
            result = moebius.invert(v, p, eta=args.eta)
            idd = None
    if args.output:
        mesh_io.write_mesh(args.output, result.image)
    err, ok = result.vertex_discrepancy()
    res = {"moebius.invert": {"excised_mass": result.excised_mass, "excision_radius": result.excision_radius,
                              "image_vertices": result.image.n_vertices, "output": args.output,
                              "max_transformed_vs_recomputed_H": float(err.max()) if err.size else None},
           "moebius.verify_inversion_identities": idd}
    _emit(args, _report(args, "invert", res, v, t0, units=("excised_mass",), caught=caught))
    return 0


def cmd_rigidity(args, t0):
    v = _load(args.input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.sweep:
            eps = _floats(args.sweep)
            runs = rigidity.perturbation_sweep(v, eps, l=args.l, m=args.m, eta=args.eta)
            table = [{"eps": e, "delta": r.delta, **r.empirical_constants} for e, r in runs]
            res = {"rigidity.perturbation_sweep": {"runs": [dict(r.as_dict(), eps=e) for e, r in runs],
                                                   "empirical_constants": table}}
            last = runs[-1][1]
        else:
            last = rigidity.rigidity_pipeline(v, eta=args.eta)
            res = {"rigidity.rigidity_pipeline": last.as_dict()}
    if args.correspondence:
        header = ["vertex", "sx", "sy", "sz", "px", "py", "pz"]
        S, P = last.sphere_points, last.surface_points
        rows = [[i, *S[i].tolist(), *P[i].tolist()] for i in range(S.shape[0])]
        mesh_io.write_csv(args.correspondence, header, rows)
    if args.sphere_mesh:
        sph = v.__class__(last.sphere_points, v.faces, v.multiplicity, v.tags)
        mesh_io.write_mesh(args.sphere_mesh, sph)
    _emit(args, _report(args, "rigidity", res, v, t0, units=("delta", "sup_deviation", "laplace_defect"),
                        caught=caught))
    return 0


CHARTS = {"stereographic": lambda a: bochner.stereographic,
          "scaled_stereographic": lambda a: bochner.scaled_stereographic(a.scale),
          "plane": lambda a: bochner.plane_chart(a.scale)}


def cmd_bochner(args, t0):
    g = bochner.GridImmersion.from_function(CHARTS[args.chart](args), args.L, args.h)
    rep, vv, v0 = bochner.bochner_analysis(g)
    if args.field_csv:
        header = ["x", "y", "v", "v0"]
        c = g.coords
        rows = [(float(c[i]), float(c[j]), float(vv[i, j]), float(v0[i, j]))
                for i in range(c.size) for j in range(c.size)]
        mesh_io.write_csv(args.field_csv, header, rows)
    res = {"bochner.bochner_analysis": rep.as_dict(), "grid": {"half_width": args.L, "spacing": args.h,
                                                               "nodes_per_side": g.size}}
    _emit(args, _report(args, "bochner", res, None, t0, units=("residual_l1",)))
    return 0


def cmd_suite(args, t0):
    terms = None if not args.filter else args.filter.split(",")
    if not acceptance.select(terms):
        raise InvalidSpec(f"--filter {args.filter!r} matches no criterion")
    results = acceptance.run_suite(args.quick, terms, echo=lambda s: print(s, flush=True))
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed in {time.perf_counter() - t0:.1f}s")
    if args.report:
        rep = _report(args, "suite", {"acceptance": [r.as_dict() for r in results]}, None, t0)
        mesh_io.write_json(args.report, rep)
    return 1 if n_fail else 0


# ------------------------------------------------------------------ parser

def build_parser():
    ap = _Parser(prog="varifold-lab", description="Discrete varifold energies, densities, inversions and rigidity.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None,
                    help="numba worker threads (default: $VARIFOLD_LAB_THREADS or all)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a zoo surface")
    p.add_argument("--kind", choices=zoo.KINDS)
    p.add_argument("--spec", help="ZooSpec JSON (file path or literal)")
    for name, typ in GEN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("--axes", help="ellipsoid semi-axes a,b,c")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", required=True, help="mesh path (.off or .obj)")
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("energy", help="Willmore energy and curvature integrals")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--report", "--output", "-o", dest="report")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("curvature", help="per-vertex mean and Gauss curvature")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("density", help="density ratios at a point, or the energy/density check")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--center")
    p.add_argument("--vertex", type=int)
    p.add_argument("--radii", help="comma separated radii")
    p.add_argument("--output", "-o")
    p.add_argument("--report", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("invert", help="sphere inversion about a point")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--pole")
    p.add_argument("--vertex", type=int)
    p.add_argument("--eta", type=float, help="excision radius")
    p.add_argument("--output", "-o", help="image mesh path")
    p.add_argument("--report")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("rigidity", help="distance to the nearest round sphere")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--sweep", help="comma separated perturbation amplitudes")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--correspondence", help="CSV of sphere point / surface point pairs")
    p.add_argument("--sphere-mesh", help="write the unit-sphere parametrization mesh")
    p.add_argument("--report", "--output", "-o", dest="report")
    p.set_defaults(func=cmd_rigidity)

    p = sub.add_parser("bochner", help="grid identity check for a conformal chart")
    p.add_argument("--chart", choices=tuple(CHARTS), default="stereographic")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--L", type=float, default=2.0, help="grid half width")
    p.add_argument("--h", type=float, default=1 / 32, help="grid spacing")
    p.add_argument("--field-csv")
    p.add_argument("--report", "--output", "-o", dest="report")
    p.set_defaults(func=cmd_bochner)

    p = sub.add_parser("suite", help="run the acceptance battery")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--filter", help="comma separated module names or criterion numbers")
    p.add_argument("--report", "--output", "-o", dest="report")
    p.set_defaults(func=cmd_suite)
    return ap


def _fail(payload):
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    t0 = time.perf_counter()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except VarifoldError as exc:
        _fail(exc.to_dict())
        return exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        _accel.set_num_threads(args.threads)
        return args.func(args, t0)
    except VarifoldError as exc:
        _fail(exc.to_dict())
        return exc.exit_code
    except (OSError, ValueError) as exc:
        _fail({"error": type(exc).__name__, "message": str(exc), "exit_code": 2})
        return 2
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        _fail({"error": type(exc).__name__, "message": str(exc), "exit_code": 3})
        return 3


if __name__ == "__main__":
    sys.exit(main())
