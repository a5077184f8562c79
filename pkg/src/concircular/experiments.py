"""Experiment kinds driven by a config, and the runner writing artifacts.

Every experiment returns a ResidualReport whose checks decide the exit
status; classifications are recorded in the report metadata.  Reports
carry no timings or absolute paths so they are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import circles, conformal, curvature, fields, plots
from .config import ExperimentConfig
from .connection import ConnectionJets
from .errors import ConfigError, DomainError
from .metric import ConformalScale, Euclidean, MetricSpec, TangentPoint, metric_from_dict, sample_points
from .report import ResidualReport, dumps

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = {"bases": 4, "per_base": 5, "box": [-0.5, 0.5]}


@dataclass
class ExperimentResult:
    id: str
    kind: str
    report: ResidualReport
    files: list = field(default_factory=list)      # artifact names relative to the output dir
    plots: list = field(default_factory=list)      # (kind, payload) requests for plot scripts


@dataclass
class Context:
    config: ExperimentConfig
    metric: MetricSpec
    out_dir: Path
    seed: int
    tol_scale: float = 1.0

    def tol(self, key):
        return self.config.tolerance(key, self.tol_scale)

    def rng(self, index):
        return np.random.default_rng(np.random.SeedSequence([self.seed, index]))


# -- helpers -------------------------------------------------------------------------

def _samples(ctx, exp, rng):
    s = {**DEFAULT_SAMPLES, **exp.get("samples", {})}
    return sample_points(ctx.metric, rng, s["bases"], s["per_base"], tuple(s["box"]))


def _sample_meta(sample):
    return [{"x": p.x, "y": p.y} for p in sample]


def check_positive(u, dim, box, what="u"):
    """Evaluate u on a grid over the box; DomainError at the first u <= 0."""
    lo, hi = box
    m = 5 if dim <= 3 else 3
    axis = np.linspace(lo, hi, m)
    for x in itertools.product(axis, repeat=dim):
        val = float(u(np.array(x)))
        if not val > 0:
            raise DomainError(f"{what} = {val:.6g} is not positive at x={list(map(float, x))} "
                              f"inside the sampling box {list(box)}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _vec(v, n, what):
    v = np.asarray(v, float)
    if v.shape != (n,):
        raise ConfigError(f"{what} must have {n} components")
    return v


# -- kinds ---------------------------------------------------------------------------

def trace_circle(ctx, exp, rng):
    n = ctx.metric.dim
    init = circles.CircleInit(_vec(exp["x0"], n, "x0"), _vec(exp["u"], n, "u"), _vec(exp["v"], n, "v"))
    s_max = float(exp["s_max"])
    closed = exp.get("closed_form", False)
    if closed and not isinstance(ctx.metric, Euclidean):
        raise ConfigError("closed_form comparison requires a euclidean metric")
    rep = ResidualReport(exp["id"])
    res = ExperimentResult(exp["id"], exp["kind"], rep)
    step = float(exp.get("step", 1e-3))
    traj = circles.integrate(ctx.metric, init, s_max, step)
    inv = circles.circle_invariants(ctx.metric, traj)
    for c in inv.checks:
        rep.add(c.name, c.value, ctx.tol("invariants"), tag=c.tag)
    if closed:
        ref = circles.euclidean_circle_samples(init.x0, init.u, init.v, traj.s)[0]
        rep.add("closed_form_error", np.abs(traj.gamma - ref).max(), ctx.tol("closed_form"),
                tag="Euclidean circle closed form")
    name = f"{exp['id']}_trajectory.csv"
    every = int(exp.get("csv_every", 1))
    sub = circles.Trajectory(traj.s[::every], traj.gamma[::every], traj.gamma1[::every],
                             traj.gamma2[::every], traj.gamma3[::every], traj.F_residual[::every],
                             traj.knorm[::every], traj.admissible, traj.meta)
    sub.to_csv(ctx.out_dir / name)
    res.files.append(name)
    res.plots.append(("overlay", {"id": exp["id"], "csv": [name], "labels": ["F-circle"]}))
    rep.meta.update({"step": step, "s_max": s_max, "steps_taken": len(traj) - 1,
                     "covariant_acceleration_norm": float(traj.knorm[0])})
    if "steps" in exp:
        steps = sorted(float(h) for h in exp["steps"])[::-1]
        errs = []
        fine = None
        if not closed:
            fine = circles.integrate(ctx.metric, init, s_max, steps[-1] / 4)
        for h in steps:
            t = circles.integrate(ctx.metric, init, s_max, h)
            if closed:
                ref = circles.euclidean_circle_samples(init.x0, init.u, init.v, t.s)[0]
                errs.append(float(np.abs(t.gamma - ref).max()))
            else:
                errs.append(float(np.abs(t.gamma[-1] - fine.gamma[-1]).max()))
        ratios = [errs[k] / errs[k + 1] for k in range(len(errs) - 1)]
        orders = [float(np.log(errs[k] / errs[k + 1]) / np.log(steps[k] / steps[k + 1]))
                  for k in range(len(errs) - 1)]
        conv = f"{exp['id']}_convergence.csv"
        _write_csv(ctx.out_dir / conv, ["step", "max_error"], zip(steps, errs))
        res.files.append(conv)
        res.plots.append(("convergence", {"id": exp["id"], "csv": conv, "slope": 4}))
        rep.meta["convergence"] = {"steps": steps, "errors": errs, "ratios": ratios, "orders": orders}
        rep.add("observed_order", min(orders), 3.5, tag="fourth-order Runge-Kutta convergence",
                expect="above")
    return res


def _field(ctx, exp):
    return fields.VectorFieldSpec(ctx.metric.dim, exp["field"])


def _cross_check(spec, V, p):
    lg, l2G = fields.lie_cross_check(spec, V, p)
    ld = fields.lie_derivatives(spec, V, p)
    return max(np.abs(lg - ld.lie_g).max(), np.abs(l2G - ld.lie_2G).max())


def classify_field(ctx, exp, rng):
    V = _field(ctx, exp)
    sample = _samples(ctx, exp, rng)
    tol = ctx.tol("conformal")
    rep = ResidualReport(exp["id"])
    conf = fields.classify_conformal(ctx.metric, V, sample, tol)
    proj = fields.classify_projective(ctx.metric, V, sample, tol)
    pde = [fields.concircular_residuals(ctx.metric, V, p).max_residual for p in sample]
    t2 = fields.theorem2_check(ctx.metric, V, sample, ctx.tol("pde"), strict=False)
    cross = max(_cross_check(ctx.metric, V, p) for p in sample[:5])
    rep.add("lie_formula_cross_check", cross, ctx.tol("curvature"),
            tag="Lie derivatives via covariant derivatives agree with the coordinate formula")
    if t2.meta.get("applicable"):
        rep.add("verdicts_agree", t2["verdicts_agree"].value, 0.5,
                tag="factor test agrees with the concircular PDE system")
    rep.notices.extend(t2.notices)
    rep.meta.update({
        "conformal_kind": conf.kind,
        "conformal_residual": conf.report["conformal_residual"].value,
        "projective": proj.projective, "affine": proj.affine,
        "projective_residual": proj.report["projective_residual"].value,
        "concircular": bool(max(pde) <= ctx.tol("pde")),
        "max_pde_residual": float(max(pde)),
        "factor_test": t2.to_dict(),
        "rho": conf.rho,
        "samples": _sample_meta(sample),
    })
    return ExperimentResult(exp["id"], exp["kind"], rep)


def concircular_check(ctx, exp, rng):
    V = _field(ctx, exp)
    sample = _samples(ctx, exp, rng)
    tol = ctx.tol("pde")
    rep = ResidualReport(exp["id"])
    rows = [fields.concircular_residuals(ctx.metric, V, p) for p in sample]
    rep.add("eq_T", max(r.eq1_residual for r in rows), tol, tag="first concircular tensor equation")
    rep.add("eq_S", max(r.eq2_residual for r in rows), tol, tag="second concircular tensor equation")
    rep.add("eq_Z", max(r.eq3_residual for r in rows), tol, tag="third concircular tensor equation")
    rep.add("trace_identity", max(r.contraction_gap for r in rows), tol,
            tag="trace of the first concircular equation")
    t1 = fields.theorem1_check(ctx.metric, V, sample, tol)
    rep.meta["conformal_iff_lie_I"] = t1.to_dict()
    conf = fields.classify_conformal(ctx.metric, V, sample, ctx.tol("conformal"))
    if conf.conformal:
        ident = max(fields.mean_torsion_identity_residual(ctx.metric, V, p) for p in sample)
        rep.add("mean_torsion_identity", ident, tol, tag="L y = F^-2 V^c(F^2) y + (2/3n) F^2 L I")
        rho = None
        if "rho" in exp:
            from .expr import parse_x
            rho = parse_x(exp["rho"], ctx.metric.dim)
        t2 = fields.theorem2_check(ctx.metric, V, sample, tol, rho=rho)
        rep.add("verdicts_agree", t2["verdicts_agree"].value, 0.5,
                tag="factor test agrees with the concircular PDE system")
        rep.meta["factor_test"] = t2.to_dict()
    else:
        rep.notice("field is not conformal; the factor test was skipped")
    rep.meta.update({"conformal_kind": conf.kind, "samples": _sample_meta(sample)})
    return ExperimentResult(exp["id"], exp["kind"], rep)


def _scale(ctx, u, box):
    s = conformal.ScaleFunction(ctx.metric.dim, u)
    check_positive(s, ctx.metric.dim, box)
    return s


def conformal_check(ctx, exp, rng):
    spec = ctx.metric
    box = {**DEFAULT_SAMPLES, **exp.get("samples", {})}["box"]
    u = _scale(ctx, exp["u"], box)
    sample = _samples(ctx, exp, rng)
    rep = ResidualReport(exp["id"])
    res = ExperimentResult(exp["id"], exp["kind"], rep)
    tilde = ConformalScale(spec, exp["u"])
    spray_err, n_err, two_path, gen_R, gen_ric = 0.0, 0.0, 0.0, 0.0, 0.0
    for p in sample:
        Gt, Nt = conformal.transformed_spray(spec, u, p)
        cj = ConnectionJets(tilde, p, 1, 3)
        spray_err = max(spray_err, np.abs(Gt - cj.G.value).max(), np.abs(Nt - cj.N.value).max())
        n_err = max(n_err, np.abs(conformal.transformed_spray_jet(spec, u, p).dy().value - Nt).max())
        direct, via = conformal.perturbation_two_path(spec, u, p)
        two_path = max(two_path, np.abs(direct - via).max() / (np.abs(direct).max() + 1))
        rel = conformal.conformal_curvature_relation(spec, u, p, ctx.tol("curvature"), ctx.tol("concircularity"))
        gen_R = max(gen_R, rel["general_riemann"].value)
        gen_ric = max(gen_ric, rel["general_ricci"].value)
    rep.add("spray_two_path", spray_err, ctx.tol("spray"), tag="spray of the rescaled metric in closed form")
    rep.add("connection_closed_form", n_err, ctx.tol("spray"), tag="nonlinear connection of the rescaled metric")
    rep.add("perturbation_two_path", two_path, ctx.tol("two_path"), tag="Riemann curvature of a perturbed spray")
    rep.add("general_riemann", gen_R, ctx.tol("curvature"), tag="general conformal Riemann curvature relation")
    rep.add("general_ricci", gen_ric, ctx.tol("curvature"), tag="general conformal Ricci relation")
    cond = conformal.concircularity_condition(spec, u, sample, ctx.tol("concircularity"))
    rep.meta["concircularity"] = cond.report.to_dict()
    rep.meta["concircular_scale"] = cond.holds
    if cond.holds:
        tr = conformal.curvature_transfer(spec, u, sample, rng, tol=ctx.tol("transfer"),
                                          class_tol=ctx.tol("classify"))
        rep.add("transfer_formula", tr["transfer_formula"].value, ctx.tol("transfer"),
                tag="flag curvature transfer K~ = K u^2 + 2 lambda u - u_m u^m")
        rep.meta["curvature_transfer"] = tr.to_dict()
    else:
        rep.notice("u fails the concircularity conditions; circle preservation and the curvature "
                   "transfer are reported but not asserted")
    if "circle" in exp:
        c = exp["circle"]
        n = spec.dim
        init = circles.CircleInit(_vec(c["x0"], n, "x0"), _vec(c["u"], n, "u"), _vec(c["v"], n, "v"))
        traj = circles.integrate(spec, init, float(c["s_max"]), float(c.get("step", 1e-3)))
        for x in traj.gamma:
            u.value(x)
        every = int(exp.get("check_every", 10))
        mt = conformal.circle_mapping_test(spec, u, traj, ctx.tol("tangency"), every=every)
        rep.add("deviation_identity", mt["deviation_identity"].value, ctx.tol("deviation"),
                tag="conformal change of the circle deviation vector")
        tang = mt["tilde_tangency"].value
        if cond.holds:
            rep.add("tilde_tangency", tang, ctx.tol("tangency"), tag="tangency test for the rescaled metric")
        rep.meta["tilde_tangency"] = tang
        rep.meta["input_invariants"] = mt.meta.get("input_invariants")
        curve = circles.CurveSamples.from_trajectory(traj).subsample(every)
        re = circles.reparametrize(tilde, curve)
        name = f"{exp['id']}_curves.csv"
        _write_csv(ctx.out_dir / name, ["s", "s_tilde"] + [f"gamma{i + 1}" for i in range(n)],
                   (np.concatenate([[curve.t[k], re.t[k]], curve.gamma[k]]) for k in range(len(curve.t))))
        res.files.append(name)
        res.plots.append(("reparam", {"id": exp["id"], "csv": name, "dim": n}))
    rep.meta["samples"] = _sample_meta(sample)
    return res


def curvature_scan(ctx, exp, rng):
    spec = ctx.metric
    sample = _samples(ctx, exp, rng)
    rep = ResidualReport(exp["id"])
    cl = curvature.classify(spec, sample, ctx.tol("classify"))
    yR, hom = 0.0, 0.0
    flags = []
    for p in sample:
        R = curvature.riemann(spec, p, n_flags=int(exp.get("flags", 2)), rng=rng)
        scale = np.abs(R.R).max() + 1
        yR = max(yR, np.abs(R.R @ p.y).max() / scale)
        R2 = curvature.riemann(spec, p.scaled(1.7)).R
        hom = max(hom, np.abs(R2 - 1.7 ** 2 * R.R).max() / (np.abs(R2).max() + 1e-300))
        flags.extend(k for _, k in R.flag_samples)
    rep.add("riemann_annihilates_y", yR, ctx.tol("curvature"), tag="R^i_k y^k = 0")
    rep.add("riemann_homogeneity", hom, ctx.tol("curvature"), tag="R is 2-homogeneous in y")
    if "perturbation_u" in exp:
        box = {**DEFAULT_SAMPLES, **exp.get("samples", {})}["box"]
        u = _scale(ctx, exp["perturbation_u"], box)
        err = 0.0
        for p in sample:
            direct, via = conformal.perturbation_two_path(spec, u, p)
            err = max(err, np.abs(direct - via).max() / (np.abs(direct).max() + 1))
        rep.add("perturbation_two_path", err, ctx.tol("two_path"), tag="Riemann curvature of a perturbed spray")
    rep.meta.update({"kind": cl.kind, "flags": cl.flags, "classification_residual": cl.residual,
                     "K_estimate": cl.K_estimate if cl.kind in ("constant_flag",) else None,
                     "flag_min": float(min(flags)), "flag_max": float(max(flags)),
                     "samples": _sample_meta(sample)})
    return ExperimentResult(exp["id"], exp["kind"], rep)


def remark61(ctx, exp, rng):
    spec = ctx.metric
    b = [float(v) for v in exp["b"]]
    if not isinstance(spec, Euclidean) or spec.dim != len(b):
        raise ConfigError("remark61 needs a euclidean metric of dimension len(b)")
    fam = conformal.Remark61Family(float(exp["a"]), tuple(b), float(exp["c"]))
    box = {**DEFAULT_SAMPLES, **exp.get("samples", {})}["box"]
    check_positive(fam.u, spec.dim, box, what="a|x|^2 + <b,x> + c")
    u = fam.scale()
    tilde = fam.metric()
    sample = _samples(ctx, exp, rng)
    rep = ResidualReport(exp["id"])
    K = fam.curvature()
    cond = conformal.concircularity_condition(spec, u, sample, ctx.tol("concircularity"))
    rep.add("concircular_scale", float(not cond.holds), 0.5, tag="u_{i|j} = lambda g_ij, u^r C^k_ri = 0")
    lam = cond.lam if isinstance(cond.lam, float) else float("nan")
    rep.add("lambda_is_2a", abs(lam - 2 * fam.a), ctx.tol("concircularity"), tag="lambda = 2a")
    worst = 0.0
    nflags = int(exp.get("flags", 50))
    per = max(1, -(-nflags // len(sample)))
    measured = []
    for p in sample:
        cj = ConnectionJets(tilde, p, *curvature.RIEMANN_ORDERS)
        R = curvature.riemann_jet(cj).value
        for v in curvature.flag_directions(cj.g.value, p.y, rng, per):
            if len(measured) == nflags:
                break
            Km = curvature.flag_curvature(R, cj.g.value, p.y, v)
            measured.append(Km)
            worst = max(worst, abs(Km - K) / max(abs(K), 1.0))
    rep.add("flag_curvature", worst, ctx.tol("transfer"), tag="K~ = 4ac - |b|^2")
    cl = curvature.classify(tilde, sample, ctx.tol("classify"))
    rep.add("constant_flag", float(cl.kind != "constant_flag"), 0.5, tag="constant flag curvature")
    K_tilde = cl.K_estimate if cl.kind == "constant_flag" else float(np.mean(measured))
    rep.add("K_tilde", abs(K_tilde - K) / max(abs(K), 1.0), ctx.tol("transfer"), tag="K~ = 4ac - |b|^2")
    lo, hi = box
    agree, tang = 0, 0.0
    nlines = int(exp.get("lines", 10))
    for _ in range(nlines):
        xi = rng.standard_normal(spec.dim)
        xi /= np.linalg.norm(xi)
        tau = rng.uniform(lo, hi, spec.dim) * 0.5
        lim = 0.25 * (hi - lo)
        curve = conformal.line_samples(xi, tau, np.linspace(-lim, lim, 41))
        for x in curve.gamma:
            u.value(x)
        pred = conformal.remark61_predicates(fam, ("line", xi, tau), ctx.tol("predicate"))
        num = conformal.tilde_acceleration_norm(fam, curve)
        kind = "geodesic" if num.max() <= ctx.tol("predicate") else "circle"
        agree += kind == pred.kind and abs(num.mean() - pred.curvature_norm) <= 1e-7 * (1 + pred.curvature_norm)
        mt = conformal.circle_mapping_test(spec, u, curve, ctx.tol("tangency"), check_invariants=False)
        tang = max(tang, mt["tilde_tangency"].value)
    if nlines:
        rep.add("line_predicate_agreement", nlines - agree, 0.5,
                tag="line classification: 2a tau + b parallel to xi")
    ncirc = int(exp.get("circles", 5))
    cagree = 0
    for _ in range(ncirc):
        k = rng.uniform(2.0, 6.0)
        e1 = rng.standard_normal(spec.dim)
        e1 /= np.linalg.norm(e1)
        e2 = rng.standard_normal(spec.dim)
        e2 -= (e2 @ e1) * e1
        e2 /= np.linalg.norm(e2)
        xi, eta = e1 / k, e2 / k
        tau = rng.uniform(lo, hi, spec.dim) * 0.5
        curve = conformal.circle_samples(xi, eta, tau, k, np.linspace(0, 2 * np.pi / k, 41))
        for x in curve.gamma:
            u.value(x)
        pred = conformal.remark61_predicates(fam, ("circle", xi, eta, tau), ctx.tol("predicate"))
        num = conformal.tilde_acceleration_norm(fam, curve)
        cagree += np.abs(num - pred.curvature_norm).max() <= 1e-7 * (1 + pred.curvature_norm)
        mt = conformal.circle_mapping_test(spec, u, curve, ctx.tol("tangency"), check_invariants=False)
        tang = max(tang, mt["tilde_tangency"].value)
    if ncirc:
        rep.add("circle_norm_agreement", ncirc - cagree, 0.5, tag="closed-form norm of the rescaled acceleration")
    if nlines or ncirc:
        rep.add("tilde_tangency", tang, ctx.tol("tangency"), tag="tangency test for the rescaled metric")
    rep.meta.update({"a": fam.a, "b": list(fam.b), "c": fam.c, "u": fam.expression(),
                     "K_tilde_expected": K, "K_tilde": K_tilde, "lambda": lam,
                     "tilde_kind": cl.kind, "flags_measured": len(measured),
                     "samples": _sample_meta(sample)})
    return ExperimentResult(exp["id"], exp["kind"], rep)


KINDS = {
    "trace_circle": trace_circle,
    "classify_field": classify_field,
    "concircular_check": concircular_check,
    "conformal_check": conformal_check,
    "curvature_scan": curvature_scan,
    "remark61": remark61,
}


# -- runner --------------------------------------------------------------------------

@dataclass
class RunResult:
    results: list
    manifest: dict
    error: str | None = None

    @property
    def passed(self):
        return self.error is None and all(r.report.passed for r in self.results)

    @property
    def exit_code(self):
        if self.error is not None:
            return 1
        return 0 if self.passed else 2


def build_metric(cfg):
    spec = metric_from_dict(cfg.metric)
    if isinstance(spec, ConformalScale):
        box = DEFAULT_SAMPLES["box"]
        for exp in cfg.experiments:
            box = exp.get("samples", {}).get("box", box)
            check_positive(spec.scale, spec.dim, box, what="conformal scale u")
    return spec


def run_config(cfg, out_dir, seed=None, tol_scale=1.0):
    """Run all experiments of ``cfg`` in order, writing artifacts to ``out_dir``.

    Errors stop the run; reports finished so far and a manifest recording
    the error are still written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else int(seed)
    manifest = {"name": cfg.name, "seed": seed, "tol_scale": tol_scale,
                "config": cfg.to_dict(), "experiments": [], "plots": [], "status": "running"}
    results, error = [], None
    try:
        spec = build_metric(cfg)
        ctx = Context(cfg, spec, out_dir, seed, tol_scale)
        for index, exp in enumerate(cfg.experiments):
            log.info("running %s (%s)", exp["id"], exp["kind"])
            try:
                res = KINDS[exp["kind"]](ctx, exp, ctx.rng(index))
            except Exception as exc:
                manifest["experiments"].append({"id": exp["id"], "kind": exp["kind"], "status": "error",
                                                "error": f"{type(exc).__name__}: {exc}"})
                raise
            res.report.meta.setdefault("kind", exp["kind"])
            name = f"{res.id}.json"
            (out_dir / name).write_text(res.report.to_json(), encoding="utf-8")
            res.files.insert(0, name)
            results.append(res)
            manifest["experiments"].append({"id": res.id, "kind": res.kind,
                                            "status": "pass" if res.report.passed else "fail",
                                            "files": res.files,
                                            "failures": [c.name for c in res.report.failures()]})
    except Exception as exc:
        error = f"{type(exc).__name__}: {exc}"
        manifest["error"] = error
    if error is None:
        manifest["plots"] = [p.name for p in plots.emit_plots(results, out_dir)]
        summary = {"name": cfg.name, "seed": seed, "passed": all(r.report.passed for r in results),
                   "experiments": [r.report.to_dict() for r in results]}
        (out_dir / "report.json").write_text(dumps(summary), encoding="utf-8")
    run = RunResult(results, manifest, error)
    manifest["status"] = {0: "pass", 1: "error", 2: "fail"}[run.exit_code]
    (out_dir / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
    return run
