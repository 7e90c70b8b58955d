"""Command line entry point: ``lightray <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or malformed file, 2 a selftest
tolerance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import geodesics as geo
from .config import ExperimentConfig
from .geometry import RayChart, ScalarField, Sinogram, SpacetimeGrid
from .lrtio import LrtError, LrtFile, provenance, read_lrt, write_lrt
from .parallel import set_threads
from .report import plot_image, plot_lines, write_csv

SUBCOMMANDS = ("phantom", "forward", "adjoint", "normal", "fbp", "cutoff", "invert", "slice-check",
               "geodesic", "jacobi", "conjugate", "relation", "cancel-demo", "traveltime", "selftest")

PHANTOMS = ("gaussian", "bandlimited", "timelike", "planewave")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- builders


def make_phantom(name: str, n: int, seed: int = 0):
    from .phantoms import BandlimitedRandom, Gaussian, PlaneWavePacket
    if name == "gaussian":
        return Gaussian.centered(n)
    if name == "bandlimited":
        return BandlimitedRandom(n, seed=seed)
    if name == "timelike":
        return BandlimitedRandom(n, seed=seed, timelike=True)
    if name == "planewave":
        return PlaneWavePacket((0.5,) + (0.0,) * (n - 1))
    raise UsageError(f"unknown phantom {name!r}; choose from {PHANTOMS}")


def make_metric(name: str, n: int = 2):
    if name == "minkowski":
        return geo.Minkowski(n)
    if name == "flrw-eds":
        return geo.FLRW.einstein_de_sitter(n)
    if name == "rxs2":
        if n != 2:
            raise UsageError("rxs2 has spatial dimension 2")
        return geo.RxS2()
    raise UsageError(f"unknown metric {name!r}")


def grid_from(args, cfg: ExperimentConfig) -> SpacetimeGrid:
    g = cfg.grid
    return SpacetimeGrid(args.n, float(_pick(args.T, g["T"])), float(_pick(args.R, g["R"])),
                         int(_pick(args.nt, g["nt"])), int(_pick(args.nx, g["nx"])))


def chart_from(args, cfg: ExperimentConfig) -> RayChart:
    c = cfg.chart
    Z = float(_pick(args.Z, c["Z"]))
    nz = int(_pick(args.nz, c["nz"]))
    if args.n == 2:
        return RayChart.circle(Z, nz, int(_pick(args.ndir, c["ndir"])))
    return RayChart.sphere(Z, nz, int(_pick(args.npolar, c["npolar"])),
                           int(_pick(args.nazimuth, c["nazimuth"])))


def plan_from(args, cfg: ExperimentConfig):
    from .minkowski import RaySamplingPlan
    p = cfg.plan
    return RaySamplingPlan(step=_pick(args.step, p["step"]),
                           interpolation=_pick(args.interp, p["interpolation"]),
                           mode=p["mode"])


def _pick(a, b):
    return b if a is None else a


def grid_meta(g: SpacetimeGrid) -> dict:
    return {"n": g.n, "T": g.t_extent, "R": g.x_extent, "nt": g.nt, "nx": g.nx}


def chart_meta(c: RayChart) -> dict:
    return {"n": c.n, "Z": c.z_extent, "nz": c.nz, "rule": list(c.rule)}


def plan_meta(p) -> dict:
    return {"step": p.step, "interpolation": p.interpolation, "mode": p.mode}


def field_to_file(f: ScalarField, meta: dict) -> LrtFile:
    g = f.grid
    return LrtFile("field", g.n, np.asarray(f.values), [g.t_extent, g.x_extent],
                   dict(meta, grid=grid_meta(g)))


def sinogram_to_file(s: Sinogram, meta: dict) -> LrtFile:
    c = s.chart
    return LrtFile("sinogram", c.n, np.asarray(s.values), [c.z_extent], dict(meta, chart=chart_meta(c)))


def file_to_field(lf: LrtFile) -> ScalarField:
    if lf.kind != "field":
        raise UsageError(f"expected a field file, got {lf.kind!r}")
    d = lf.dims
    if len(d) != lf.n + 1 or len(set(d[1:])) != 1:
        raise UsageError(f"field dims {d} do not describe an n = {lf.n} grid")
    g = SpacetimeGrid(lf.n, float(lf.extents[0]), float(lf.extents[1]), d[0], d[1])
    return ScalarField(g, lf.data)


def file_to_sinogram(lf: LrtFile) -> Sinogram:
    if lf.kind != "sinogram":
        raise UsageError(f"expected a sinogram file, got {lf.kind!r}")
    cm = lf.meta.get("chart")
    if not cm:
        raise UsageError("sinogram header lacks the chart description")
    c = RayChart.from_rule(lf.n, float(lf.extents[0]), int(cm["nz"]), cm["rule"])
    if list(c.shape) != lf.dims:
        raise UsageError(f"sinogram dims {lf.dims} do not match chart shape {list(c.shape)}")
    return Sinogram(c, lf.data)


def _recorded_argv(argv):
    """argv without the worker count, which must not change output bytes."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--threads":
            skip = True
            continue
        if a.startswith("--threads="):
            continue
        out.append(a)
    return out


def _meta(args, **extra):
    return provenance(_recorded_argv(getattr(args, "argv", [])), getattr(args, "seed", None), **extra)


def _out_dir(args, cfg):
    return args.report if args.report is not None else cfg.output


def _csv_and_plot(args, cfg, name, header, rows):
    path = os.path.join(_out_dir(args, cfg), name)
    write_csv(path, header, rows)
    return path


def _field_report(args, cfg, name, f: ScalarField):
    """Table and image of the t = 0 slice (the middle x3 plane for n = 3)."""
    if args.report is None:
        return
    g = f.grid
    v = f.values[g.nt // 2]
    if g.n == 3:
        v = v[..., g.nx // 2]
    xa = g.x_axis()
    rows = [(xa[i], xa[j], v[i, j]) for i in range(g.nx) for j in range(g.nx)]
    path = _csv_and_plot(args, cfg, name, ["x1", "x2", "value"], rows)
    R = g.x_extent
    plot_image(path, v, (-R, R, -R, R), "x1", "x2", f"{f.label or name} at t = 0")


# ---------------------------------------------------------------- commands


def cmd_phantom(args, cfg):
    g = grid_from(args, cfg)
    p = make_phantom(_pick(args.phantom, cfg.phantom), args.n, args.seed)
    from .phantoms import sample_phantom
    f = sample_phantom(p, g, label=p.kind, check_support=False)
    write_lrt(args.out, field_to_file(f, _meta(args, phantom={"name": _pick(args.phantom, cfg.phantom),
                                                              "seed": args.seed, "spec": _spec(p)})))
    print(f"wrote {args.out}: field {list(g.shape)}, norm {f.norm():.6g}")


def _spec(p):
    try:
        return json.loads(json.dumps(p.spec()))
    except (TypeError, ValueError):
        return {"kind": p.kind}


def cmd_forward(args, cfg):
    from .minkowski import forward
    from .phantoms import sample_phantom
    plan = plan_from(args, cfg)
    if args.input:
        f = file_to_field(read_lrt(args.input))
        args.n = f.grid.n
        ph_meta = None
        field_meta = {"source": os.path.basename(args.input)}
    else:
        name = _pick(args.phantom, cfg.phantom)
        p = make_phantom(name, args.n, args.seed)
        g = grid_from(args, cfg)
        f = sample_phantom(p, g, check_support=False)
        ph_meta = {"name": name, "seed": args.seed, "spec": _spec(p)}
        field_meta = None
    chart = chart_from(args, cfg)
    s = forward(f, chart, plan=plan)
    meta = _meta(args, plan=plan_meta(plan), grid=grid_meta(f.grid))
    if ph_meta:
        meta["phantom"] = ph_meta
    if field_meta:
        meta["field"] = field_meta
    write_lrt(args.out, sinogram_to_file(s, meta))
    print(f"wrote {args.out}: sinogram {list(chart.shape)}, norm {s.norm():.6g}")


def _field_for_sinogram(lf: LrtFile):
    """Rebuild the sampled field a sinogram was computed from, if recorded."""
    from .phantoms import sample_phantom
    gm, pm = lf.meta.get("grid"), lf.meta.get("phantom")
    if not gm or not pm:
        return None
    g = SpacetimeGrid(int(gm["n"]), float(gm["T"]), float(gm["R"]), int(gm["nt"]), int(gm["nx"]))
    return sample_phantom(make_phantom(pm["name"], g.n, pm.get("seed", 0)), g, check_support=False)


def cmd_adjoint(args, cfg):
    from .minkowski import RaySamplingPlan, adjoint_continuum, adjoint_discrete, forward
    lf = read_lrt(args.input)
    s = file_to_sinogram(lf)
    gm = lf.meta.get("grid")
    if gm and args.T is None and args.nt is None:
        g = SpacetimeGrid(int(gm["n"]), float(gm["T"]), float(gm["R"]), int(gm["nt"]), int(gm["nx"]))
    else:
        args.n = s.chart.n
        g = grid_from(args, cfg)
    pm = lf.meta.get("plan") or {}
    plan = RaySamplingPlan(step=pm.get("step"), interpolation=pm.get("interpolation", "linear"))
    if args.kind == "discrete":
        out = adjoint_discrete(s, g, plan=plan)
    else:
        out = adjoint_continuum(s, g)
    if args.out:
        write_lrt(args.out, field_to_file(out, _meta(args, adjoint=args.kind)))
        print(f"wrote {args.out}")
    f = _field_for_sinogram(lf)
    if f is not None and args.kind == "discrete" and f.grid == g:
        lf2 = forward(f, s.chart, plan=plan)
        a = lf2.inner(s)
        b = f.inner(out)
        res = abs(a - b) / (lf2.norm() * s.norm())
        print(f"pairing residual {res:.3e}")
    print(f"adjoint norm {out.norm():.6g}")


def cmd_normal(args, cfg):
    from .spectral import normal_via_composition, normal_via_multiplier
    if args.input:
        f = file_to_field(read_lrt(args.input))
    else:
        from .phantoms import sample_phantom
        f = sample_phantom(make_phantom(_pick(args.phantom, cfg.phantom), args.n, args.seed),
                           grid_from(args, cfg), check_support=False)
    if args.method == "multiplier":
        out = normal_via_multiplier(f, pad=cfg.pad)
    else:
        args.n = f.grid.n
        out = normal_via_composition(f, chart_from(args, cfg), plan=plan_from(args, cfg))
    write_lrt(args.out, field_to_file(out, _meta(args, method=args.method)))
    _field_report(args, cfg, "normal_slice.csv", out)
    print(f"wrote {args.out}: norm {out.norm():.6g}")


def cmd_fbp(args, cfg):
    from .spectral import fbp_reconstruct
    f = file_to_field(read_lrt(args.input))
    out = fbp_reconstruct(f, pad=cfg.pad)
    write_lrt(args.out, field_to_file(out, _meta(args)))
    print(f"wrote {args.out}: norm {out.norm():.6g}")


def cmd_cutoff(args, cfg):
    from .spectral import cutoff_Q
    lf = read_lrt(args.input)
    s = file_to_sinogram(lf)
    eps = _pick(args.eps, cfg.eps)
    q = cutoff_Q(s, eps, pad=cfg.pad)
    write_lrt(args.out, sinogram_to_file(q, _meta(args, eps=eps, grid=lf.meta.get("grid"))))
    print(f"wrote {args.out}: norm {q.norm():.6g}")


def cmd_invert(args, cfg):
    from .spectral import stable_inversion
    lf = read_lrt(args.input)
    s = file_to_sinogram(lf)
    gm = lf.meta.get("grid")
    if gm and args.T is None:
        g = SpacetimeGrid(int(gm["n"]), float(gm["T"]), float(gm["R"]), int(gm["nt"]), int(gm["nx"]))
    else:
        args.n = s.chart.n
        g = grid_from(args, cfg)
    eps = _pick(args.eps, cfg.eps)
    truth = file_to_field(read_lrt(args.truth)) if args.truth else _field_for_sinogram(lf)
    if truth is not None and truth.grid == g:
        rec, rep = stable_inversion(s, eps, grid=g, f_true=truth, pad=cfg.pad)
        print(f"relative error {rep.relative_error:.4e}; against the cutoff-filtered truth "
              f"{rep.filtered_relative_error:.4e}")
    else:
        rec = stable_inversion(s, eps, grid=g, pad=cfg.pad)
    write_lrt(args.out, field_to_file(rec, _meta(args, eps=eps)))
    _field_report(args, cfg, "inversion_slice.csv", rec)
    print(f"wrote {args.out}")


def cmd_slice(args, cfg):
    from .minkowski import fourier_slice_check
    p = make_phantom(_pick(args.phantom, cfg.phantom), args.n, args.seed)
    g = grid_from(args, cfg)
    chart = chart_from(args, cfg)
    oracle = "analytic" if args.analytic else "grid"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = fourier_slice_check(p, chart, g, oracle=oracle)
    print(f"L2 relative residual {rep.l2_relative:.4e}; worst direction {rep.max_relative:.4e}")
    rows = [(k, *chart.directions[k], float(v)) for k, v in enumerate(rep.per_direction)]
    head = ["direction"] + [f"theta_{j + 1}" for j in range(chart.n)] + ["relative_residual"]
    path = _csv_and_plot(args, cfg, "slice_check.csv", head, rows)
    plot_lines(path, np.arange(chart.ndir), {"residual": rep.per_direction}, "direction index",
               "relative residual", "slice residual per direction", logy=True)


def _parse_floats(s, name):
    try:
        return [float(v) for v in s.split(",")] if s else []
    except ValueError:
        raise UsageError(f"{name} must be comma-separated numbers, got {s!r}") from None


def _record(args):
    m = make_metric(args.metric, args.n)
    z = _parse_floats(args.z, "--z") or [0.0] * m.n
    a = _parse_floats(args.a, "--a") or [0.3] * (m.n - 1)
    if len(z) != m.n or len(a) != m.n - 1:
        raise UsageError(f"{args.metric} needs {m.n} z values and {m.n - 1} angles")
    length = args.length if args.length is not None else 3 * math.pi
    return geo.shoot_null_geodesic(m, z, a, length, step=args.h)


def cmd_geodesic(args, cfg):
    rec = _record(args)
    print(f"steps {rec.s.size - 1}, max null defect {rec.max_null_defect:.3e}"
          + (f", left the domain at s = {rec.s[rec.exit_index]:.6g}" if rec.truncated else ""))
    d = rec.metric.dim
    head = ["s"] + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["null_defect"]
    rows = [(rec.s[k], *rec.x[k], *rec.v[k], rec.null_defect[k]) for k in range(rec.s.size)]
    path = _csv_and_plot(args, cfg, "geodesic.csv", head, rows)
    plot_lines(path, rec.s, {f"x{i}": rec.x[:, i] for i in range(d)}, "s", "coordinate", "null geodesic")


def cmd_jacobi(args, cfg):
    rec = _record(args)
    b = geo.propagate_jacobi(rec)
    nf = b.nfields
    drift = 0.0
    for i in range(nf - 2):
        for j in range(i + 1, nf):
            w = b.wronskian(np.eye(nf)[i], np.eye(nf)[j])
            drift = max(drift, float(np.max(np.abs(w - w[0]))))
    print(f"fields {', '.join(b.names)}; max Wronskian drift {drift:.3e}")
    norms = np.linalg.norm(b.values, axis=2)
    rows = [(rec.s[k], *norms[:, k]) for k in range(rec.s.size)]
    path = _csv_and_plot(args, cfg, "jacobi.csv", ["s"] + [f"|{nm}|" for nm in b.names], rows)
    plot_lines(path, rec.s, {nm: norms[i] for i, nm in enumerate(b.names[:-2])}, "s",
               "Euclidean norm", "Jacobi fields")


def cmd_conjugate(args, cfg):
    rec = _record(args)
    b = geo.propagate_jacobi(rec)
    rep = geo.detect_conjugate(b, args.s1)
    if not rep.pairs:
        print(f"no parameter conjugate to s1 = {args.s1} on [0, {rec.length:.6g}]")
    for p in rep.pairs:
        print(f"s2 = {p.s2:.12f} (multiplicity {p.multiplicity}, |J'(s1)| = 1, residual {p.residual:.2e})")
    rows = [(s, d) for s, d in zip(rep.samples, rep.determinant)]
    path = _csv_and_plot(args, cfg, "conjugate.csv", ["s", "scaled_determinant"], rows)
    plot_lines(path, rep.samples, {"det": rep.determinant}, "s", "scaled determinant",
               f"fields vanishing at s1 = {args.s1}")


def cmd_relation(args, cfg):
    rec = _record(args)
    b = geo.propagate_jacobi(rec)
    s = args.s if args.s is not None else rec.length / 2
    x, v, _, _ = b.at(s)
    xi = _parse_floats(args.xi, "--xi")
    w = np.asarray(xi) if xi else rec.metric.g(x) @ v
    rel = geo.canonical_relation_data(b, s, w)
    stat = geo.lightlike_statistic(b, rel)
    print(f"zeta = {np.array2string(rel.zeta, precision=10)}")
    print(f"alpha = {np.array2string(rel.alpha, precision=10)}")
    print(f"lightlike statistic {stat:.3e}")


def cmd_cancel(args, cfg):
    from .lorentz_ray import build_cancellation_pair, default_sphere_chart, refocusing_times, \
        singularity_visibility_report
    from .phantoms import RidgeOnSphere
    pair = build_cancellation_pair(RidgeOnSphere(0.0, (0.0, 0.0, 1.0), args.width))
    chart = default_sphere_chart(nz=args.nz, ndir=args.ndir, nsteps=args.nsteps)
    rep = singularity_visibility_report(pair, chart)
    for name, sup, l2 in rep.rows():
        print(f"|L {name}|: sup {sup:.6e}, rms {l2:.6e}")
    print(f"ratio sup|L(f1+f2)| / sup|L f1| = {rep.ratio:.3e}")
    mid = chart.nodes // 2
    times = refocusing_times(chart, mid)
    print("refocusing times (t, +1 same point / -1 antipode): "
          + ", ".join(f"({t:.6f}, {s:+d})" for t, s in times))
    pr = rep.profiles
    rows = [(int(k), pr["L f1"][k], pr["L f2"][k], pr["L(f1+f2)"][k]) for k in pr["direction"]]
    path = _csv_and_plot(args, cfg, "cancellation.csv", ["direction", "L_f1", "L_f2", "L_sum"], rows)
    plot_lines(path, pr["direction"], {"L f1": pr["L f1"], "L f2": pr["L f2"], "L(f1+f2)": pr["L(f1+f2)"]},
               "direction index", "transform", "antipodal cancellation")
    write_csv(os.path.join(_out_dir(args, cfg), "refocusing.csv"), ["t", "sign"], times)


def cmd_traveltime(args, cfg):
    from .checks import _bump_d2h, _bump_dh, _bump_h, euclidean_background
    eps = _parse_floats(args.eps_list, "--eps-list")
    rep = geo.travel_time_linearization_check(euclidean_background(2), _bump_h, [-2.0, 0.3], [2.0, 0.5],
                                              eps, nsteps=args.nsteps, dh_fn=_bump_dh, d2h_fn=_bump_d2h)
    print(f"predicted derivative {rep.predicted:.10f}; unperturbed arrival {rep.arrival0:.10f}")
    for e, q, err in zip(rep.eps, rep.difference_quotient, rep.errors):
        print(f"eps {e:.4g}: quotient {q:.10f}, error {err:.3e}")
    print(f"error slope {rep.slope:.3f}")
    rows = list(zip(rep.eps, rep.arrival, rep.difference_quotient, rep.errors))
    path = _csv_and_plot(args, cfg, "traveltime.csv", ["eps", "arrival", "quotient", "error"], rows)
    plot_lines(path, np.log10(rep.eps), {"log10 error": np.log10(rep.errors)}, "log10 eps",
               "log10 error", "arrival-time linearization")


def cmd_selftest(args, cfg):
    from .checks import run_suite
    res = run_suite(args.suite)
    rows = [(r.number, r.name, "pass" if r.passed else "fail", json.dumps(r.measured, default=float),
             round(r.seconds, 3)) for r in res]
    if args.report is not None:
        write_csv(os.path.join(args.report, f"selftest_{args.suite}.csv"),
                  ["criterion", "name", "status", "measured", "seconds"], rows)
    bad = [r for r in res if not r.passed]
    print(f"{len(res) - len(bad)}/{len(res)} checks passed")
    return 2 if bad else 0


COMMANDS = {"phantom": cmd_phantom, "forward": cmd_forward, "adjoint": cmd_adjoint,
            "normal": cmd_normal, "fbp": cmd_fbp, "cutoff": cmd_cutoff, "invert": cmd_invert,
            "slice-check": cmd_slice, "geodesic": cmd_geodesic, "jacobi": cmd_jacobi,
            "conjugate": cmd_conjugate, "relation": cmd_relation, "cancel-demo": cmd_cancel,
            "traveltime": cmd_traveltime, "selftest": cmd_selftest}


# ---------------------------------------------------------------- parser


def _grid_args(p):
    p.add_argument("--n", type=int, default=2, choices=(2, 3), help="spatial dimension")
    p.add_argument("--T", type=float, help="time half-extent of the grid")
    p.add_argument("--R", type=float, help="space half-extent of the grid")
    p.add_argument("--nt", type=int, help="time samples")
    p.add_argument("--nx", type=int, help="space samples per axis")


def _chart_args(p):
    p.add_argument("--Z", type=float, help="half-extent of the ray offset grid")
    p.add_argument("--nz", type=int, help="offset samples per axis")
    p.add_argument("--ndir", type=int, help="directions (n = 2)")
    p.add_argument("--npolar", type=int, help="polar nodes (n = 3)")
    p.add_argument("--nazimuth", type=int, help="azimuthal nodes (n = 3)")
    p.add_argument("--step", type=float, help="ray quadrature step")
    p.add_argument("--interp", choices=("linear", "cubic"), help="grid interpolation")


def _geo_args(p):
    p.add_argument("--metric", default="rxs2", choices=("minkowski", "flrw-eds", "rxs2"))
    p.add_argument("--n", type=int, default=2, choices=(2, 3))
    p.add_argument("--z", help="chart point, comma separated")
    p.add_argument("--a", help="direction angles, comma separated")
    p.add_argument("--length", type=float, help="parameter length (default 3 pi)")
    p.add_argument("--h", type=float, help="RK4 step (default pi / 1024)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lightray", description="Light ray transforms on Lorentzian products.")
    ap.add_argument("--version", action="version", version=f"lightray {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, help="worker threads (fallback: LIGHTRAY_THREADS)")
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--report", help="directory for CSV tables and figures")
    sub = ap.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("phantom", parents=[common], help="sample a phantom to a field file")
    _grid_args(p)
    p.add_argument("--phantom", choices=PHANTOMS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("forward", parents=[common], help="light ray transform of a field")
    _grid_args(p)
    _chart_args(p)
    p.add_argument("--phantom", choices=PHANTOMS)
    p.add_argument("--in", dest="input", help="field file (instead of --phantom)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("adjoint", parents=[common], help="back projection of a sinogram")
    _grid_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", choices=("discrete", "continuum"), default="discrete")
    p.add_argument("--out")

    p = sub.add_parser("normal", parents=[common], help="normal operator of a field")
    _grid_args(p)
    _chart_args(p)
    p.add_argument("--phantom", choices=PHANTOMS)
    p.add_argument("--in", dest="input")
    p.add_argument("--method", choices=("multiplier", "composition"), default="multiplier")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fbp", parents=[common], help="filtered back projection (n = 3)")
    p.add_argument("--in", dest="input", required=True, help="normal operator output")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cutoff", parents=[common], help="apply the cone cutoff to a sinogram")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("invert", parents=[common], help="stable inversion from a sinogram")
    _grid_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--truth", help="field file to compare against")
    p.add_argument("--out", required=True)

    p = sub.add_parser("slice-check", parents=[common], help="Fourier slice residual")
    _grid_args(p)
    _chart_args(p)
    p.add_argument("--phantom", choices=PHANTOMS)
    p.add_argument("--analytic", action="store_true", help="use the closed-form transform (gaussian)")

    for name, hlp in (("geodesic", "integrate a null geodesic"), ("jacobi", "Jacobi fields along it"),
                      ("conjugate", "conjugate points along it"), ("relation", "canonical relation data")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        _geo_args(p)
        if name == "conjugate":
            p.add_argument("--s1", type=float, default=0.0)
        if name == "relation":
            p.add_argument("--s", type=float, help="parameter (default: middle of the record)")
            p.add_argument("--xi", help="covector components (default: gdot lowered)")

    p = sub.add_parser("cancel-demo", parents=[common], help="antipodal cancellation on R x S^2")
    p.add_argument("--width", type=float, default=0.05)
    p.add_argument("--nz", type=int, default=5)
    p.add_argument("--ndir", type=int, default=8)
    p.add_argument("--nsteps", type=int, default=2048)

    p = sub.add_parser("traveltime", parents=[common], help="arrival-time linearization")
    p.add_argument("--eps-list", default="0.04,0.02,0.01,0.005")
    p.add_argument("--nsteps", type=int, default=256)

    p = sub.add_parser("selftest", parents=[common], help="run acceptance checks")
    p.add_argument("--suite", default="all", choices=("minkowski", "spectral", "geodesics", "lorentz", "all"))
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    args.argv = argv
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.config:
            if hasattr(args, "n") and "--n" not in argv:
                args.n = cfg.n
            if args.seed == 0 and "--seed" not in argv:
                args.seed = cfg.seed
        set_threads(args.threads)
        rc = COMMANDS[args.command](args, cfg)
        return int(rc or 0)
    except LrtError as exc:
        print(f"error: malformed file: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
