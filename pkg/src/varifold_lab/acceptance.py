"""The acceptance battery, shared by the test suite and ``varifold-lab suite``.

Each criterion returns a :class:`CriterionResult` with the measured values,
the tolerance it was held to and its runtime. ``quick=True`` lowers the free
resolution knobs by one level; resolutions that a criterion fixes (the
subdiv-5 sphere, the subdiv-6 sweep) are kept.
"""
from __future__ import annotations

import contextlib
import io
import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import bochner, curvature, mesh, moebius, monotonicity, rigidity, zoo
from .errors import HypothesisViolated

FOUR_PI = 4 * math.pi


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict
    tolerance: str
    runtime_s: float
    budget_s: float | None = None
    modules: tuple = ()
    error: str | None = None
    warnings: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        budget = f" (budget {self.budget_s:.0f}s)" if self.budget_s else ""
        err = f" error={self.error}" if self.error else ""
        warn = f" ({len(self.warnings)} warnings)" if self.warnings else ""
        return (f"[{status}] C{self.number} {self.name}: {shown} | tol: {self.tolerance} | "
                f"{self.runtime_s:.2f}s{budget}{warn}{err}")

    def as_dict(self):
        return dict(vars(self))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _sphere(subdiv, **kw):
    return zoo.generate(zoo.ZooSpec("icosphere", {"subdiv": subdiv, **kw}))


def torus_energy_oracle(R: float, r: float) -> float:
    """``1/4 int |H|^2 dA`` of the round torus by one-variable quadrature."""
    def integrand(t):
        k2 = math.cos(t) / (R + r * math.cos(t))
        return (1.0 / r + k2) ** 2 * r * (R + r * math.cos(t))

    val, _ = quad(integrand, 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13)
    return 0.25 * 2 * math.pi * val


# ---------------------------------------------------------------- criteria

def c1_sphere_energy(quick=False):
    levels = (3, 4, 5)
    errs, hmax = [], []
    for k in levels:
        v = _sphere(k)
        errs.append(abs(curvature.willmore_energy(v).willmore / FOUR_PI - 1.0))
        hmax.append(float(v.edge_lengths.max()))
    order = math.log(errs[0] / errs[-1]) / math.log(hmax[0] / hmax[-1])
    ok = errs[-1] <= 0.005 and order >= 1.5
    return ok, {"rel_err_subdiv5": errs[-1], "order_3_to_5": order}, "rel err <= 0.5%, order >= 1.5", 10.0


def c2_invariances(quick=False):
    v = _sphere(3 if quick else 4)
    W = curvature.willmore_energy(v).willmore
    devs = {}
    for lam in (0.5, 3.0):
        devs[f"scale_{lam:g}"] = abs(curvature.willmore_energy(mesh.with_vertices(v, lam * v.vertices)).willmore / W - 1)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        Q, Rm = np.linalg.qr(rng.normal(size=(3, 3)))
        Q = Q * np.sign(np.diag(Rm))
        moved = mesh.with_vertices(v, v.vertices @ Q.T + rng.normal(size=3))
        worst = max(worst, abs(curvature.willmore_energy(moved).willmore / W - 1))
    devs["rigid_motion"] = worst
    W2 = curvature.willmore_energy(mesh.with_multiplicity(v, 2)).willmore
    devs["theta2_doubling"] = abs(W2 / (2 * W) - 1)
    ok = all(d <= 1e-10 for d in devs.values())
    return ok, devs, "relative deviation <= 1e-10", 10.0


def c3_li_yau(quick=False):
    k = 3 if quick else 4
    res = 0.02 if quick else 0.015
    cases = {
        "sphere": _sphere(k),
        "sphere_theta2": zoo.generate(zoo.ZooSpec("multiplicity_sphere", {"subdiv": k, "theta": 2})),
        "double_bubble": zoo.generate(zoo.ZooSpec("double_bubble", {"resolution": res})),
    }
    meas, ok = {}, True
    for name, v in cases.items():
        rep = monotonicity.li_yau_check(v)
        rel = rep.li_yau_slack / rep.willmore
        meas[f"{name}_slack_rel"] = rel
        ok &= rel >= -0.03
        if name == "sphere_theta2":
            meas["theta2_W_over_8pi"] = rep.willmore / (8 * math.pi)
            meas["theta2_density"] = rep.max_density_estimate
            ok &= abs(rep.willmore / (8 * math.pi) - 1) <= 0.01
            ok &= abs(rep.max_density_estimate / 2 - 1) <= 0.05
    return ok, meas, "slack >= -3% W; theta=2: W = 8pi +-1%, density 2 +-5%", None


def c4_inversion(quick=False):
    v = zoo.generate(zoo.ZooSpec("perturbed_sphere", {"subdiv": 4 if quick else 5, "eps": 0.05}))
    rep, _ = moebius.verify_inversion_identities(v, v.vertices[0])
    e_rel = abs(rep.lhs_energy - rep.rhs_energy) / max(rep.lhs_energy, rep.rhs_energy)
    t_rel = abs(rep.theta_infinity - rep.theta_at_p) / rep.theta_at_p
    p = np.array([0.1, -0.2, 3.0])
    once = moebius.invert(v, p)
    twice = moebius.invert(once.image, p)
    back = v.vertices[once.source_index][twice.source_index]
    round_trip = float(np.max(np.linalg.norm(twice.image.vertices - back, axis=1) / np.linalg.norm(back, axis=1)))
    ok = e_rel <= 0.05 and t_rel <= 0.05 and round_trip <= 1e-12
    return ok, {"energy_routes_rel": e_rel, "theta_routes_rel": t_rel, "double_inversion_rel": round_trip}, \
        "energy routes <= 5%, densities <= 5%, round trip <= 1e-12", 30.0


def double_bubble_truncation_energies(truncations=(10.0, 20.0, 40.0), resolution=0.015):
    out = []
    for T in truncations:
        v = zoo.generate(zoo.ZooSpec("double_bubble", {"truncation": T, "half_length": T, "resolution": resolution}))
        out.append(curvature.willmore_energy(v).willmore)
    return np.array(out)


def extrapolate_in_truncation(truncations, energies):
    """Fit ``W(T) = W_inf + a / T`` by least squares and return ``W_inf``."""
    T = np.asarray(truncations, float)
    A = np.stack([np.ones_like(T), 1.0 / T], 1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(energies, float), rcond=None)
    return float(coef[0])


def c5_double_bubble(quick=False):
    res = 0.02 if quick else 0.015
    Ts = (10.0, 20.0, 40.0)
    W = double_bubble_truncation_energies(Ts, res)
    W_inf = extrapolate_in_truncation(Ts, W)
    closed = zoo.generate(zoo.ZooSpec("double_bubble", {"resolution": res}))
    j = int(np.flatnonzero(closed.tags == "junction")[0])
    dens = monotonicity.density_profile(closed, closed.vertices[j], with_remainder=False).limit_estimate
    ok = abs(W_inf / (6 * math.pi) - 1) <= 0.02 and abs(dens / 1.5 - 1) <= 0.05
    return ok, {"energies": W.tolist(), "W_inf_over_6pi": W_inf / (6 * math.pi), "junction_density": dens}, \
        "W_inf = 6pi +-2%, junction density 1.5 +-5%", 60.0


def c6_torus(quick=False):
    R, r = math.sqrt(2.0), 1.0
    oracle = torus_energy_oracle(R, r)
    v = zoo.generate(zoo.ZooSpec("torus", {"R": R, "r": r, "n_tube": 48 if quick else 64}))
    W = curvature.willmore_energy(v).willmore
    ok = abs(W / oracle - 1) <= 0.01 and abs(oracle / (2 * math.pi ** 2) - 1) <= 1e-12
    return ok, {"W_over_oracle": W / oracle, "oracle_over_2pi2": oracle / (2 * math.pi ** 2)}, \
        "W = oracle +-1%", None


SWEEP = (0.025, 0.05, 0.1)


def c7_rigidity(quick=False):
    ratios = {"sup": [], "logc": [], "lap": []}
    deltas = []
    for eps in SWEEP:
        v = zoo.generate(zoo.ZooSpec("perturbed_sphere", {"subdiv": 6, "eps": eps}))
        rep = rigidity.rigidity_pipeline(v)
        d = rep.delta
        deltas.append(d)
        ratios["sup"].append(rep.sup_deviation / d if d > 0 else math.inf)
        ratios["logc"].append(rep.max_abs_log_conformal / d if d > 0 else math.inf)
        ratios["lap"].append(math.sqrt(rep.laplace_defect) / d if d > 0 else math.inf)
    spread = {k: max(x) / min(x) for k, x in ratios.items()}
    ex = rigidity.rigidity_pipeline(_sphere(5))
    exact = max(ex.sup_deviation, ex.max_abs_log_conformal, ex.laplace_defect, ex.w22_deviation)
    ok = all(s < 2.0 for s in spread.values()) and exact <= 1e-3
    meas = {"deltas": deltas, "spread_sup": spread["sup"], "spread_logconf": spread["logc"],
            "spread_sqrt_laplace": spread["lap"], "exact_sphere_max_metric": exact}
    return ok, meas, "each ratio spread < 2x; exact sphere metrics <= 1e-3", 180.0


def c8_gate(quick=False):
    from . import cli, mesh_io

    v = zoo.generate(zoo.ZooSpec("double_bubble", {"resolution": 0.02 if quick else 0.015}))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "double_bubble.off"
        mesh_io.write_mesh(path, v)
        err = io.StringIO()
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(io.StringIO()):
            code = cli.main(["rigidity", "--input", str(path)])
    reason = err.getvalue().strip().splitlines()[-1] if err.getvalue().strip() else ""
    return code == 4, {"exit_code": code, "reason": reason[:120]}, "exit code 4", None


def c9_bochner(quick=False):
    res = []
    for h in (1 / 32, 1 / 64):
        g = bochner.GridImmersion.from_function(bochner.stereographic, 2.0, h)
        rep, _, _ = bochner.bochner_analysis(g)
        res.append((h, rep))
    ratio = res[0][1].residual_l1 / res[1][1].residual_l1
    flat = max(bochner.bochner_residual(bochner.GridImmersion.from_function(bochner.plane_chart(s), 1.0, 1 / 32)).residual_l1
               for s in (1.0, 3.0))
    liou = [rep.liouville_spread / (5 * h * h * rep.rhs_max) for h, rep in res]
    ok = ratio >= 3.5 and flat <= 1e-12 and max(liou) <= 1.0
    return ok, {"residual_ratio": ratio, "flat_residual": flat, "liouville_over_bound": liou}, \
        "ratio >= 3.5, flat <= 1e-12, spread <= 5 h^2 max|rhs|", 30.0


def c10_diameter(quick=False):
    k = 3 if quick else 4
    specs = [
        zoo.ZooSpec("icosphere", {"subdiv": k}),
        zoo.ZooSpec("perturbed_sphere", {"subdiv": k, "eps": 0.1}),
        zoo.ZooSpec("ellipsoid", {"subdiv": k, "axes": (1.0, 1.0, 2.0)}),
        zoo.ZooSpec("torus", {"n_tube": 32}),
        zoo.ZooSpec("double_bubble", {"resolution": 0.02}),
        zoo.ZooSpec("multiplicity_sphere", {"subdiv": k, "theta": 1}),
    ]
    meas, ok = {}, True
    for s in specs:
        chk = monotonicity.diameter_bounds_check(zoo.generate(s))
        meas[f"{s.kind}_diam_over_lower"] = chk.diameter / chk.lower_bound
        ok &= chk.lower_ok
    try:
        monotonicity.diameter_bounds_check(zoo.generate(zoo.ZooSpec("multiplicity_sphere", {"subdiv": k, "theta": 2})))
        raised = False
    except HypothesisViolated:
        raised = True
    meas["theta2_raises"] = raised
    return ok and raised, meas, "diam >= sqrt(mu/4pi)/7; theta=2 sphere rejected", None


CRITERIA = [
    (1, "round-sphere energy", ("curvature", "zoo"), c1_sphere_energy),
    (2, "energy invariances", ("curvature",), c2_invariances),
    (3, "energy vs density", ("monotonicity", "curvature"), c3_li_yau),
    (4, "inversion identities", ("moebius",), c4_inversion),
    (5, "double bubble sharp value", ("zoo", "curvature", "monotonicity"), c5_double_bubble),
    (6, "torus threshold", ("zoo", "curvature"), c6_torus),
    (7, "rigidity scaling", ("rigidity",), c7_rigidity),
    (8, "out-of-hypothesis gate", ("rigidity", "cli"), c8_gate),
    (9, "bochner identity", ("bochner",), c9_bochner),
    (10, "diameter bounds", ("monotonicity", "mesh"), c10_diameter),
]


def run_criterion(number: int, quick: bool = False) -> CriterionResult:
    num, name, mods, fn = next(c for c in CRITERIA if c[0] == number)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            ok, meas, tol, budget = fn(quick)
            err = None
        except Exception as exc:  # a crash is a failure, reported with its message
            ok, meas, tol, budget, err = False, {}, "", None, f"{type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    seen = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    if budget is not None and dt >= budget:
        ok = False
    return CriterionResult(num, name, bool(ok), meas, tol, dt, budget, mods, err, seen)


def select(filter_terms=None):
    if not filter_terms:
        return [c[0] for c in CRITERIA]
    terms = [t.strip().lower() for t in filter_terms if t.strip()]
    out = []
    for num, name, mods, _ in CRITERIA:
        keys = set(mods) | {str(num), f"c{num}"} | set(name.lower().split())
        if any(t in keys for t in terms):
            out.append(num)
    return out


def run_suite(quick=False, filter_terms=None, echo=None):
    results = []
    for num in select(filter_terms):
        r = run_criterion(num, quick)
        if echo:
            echo(r.line())
        results.append(r)
    return results
