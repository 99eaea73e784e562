"""Command line interface.

Subcommands: generate, simulate, kicked, estimate, kernel-eval, flight,
compare, renorm, rerun.  Every run writes a manifest (parameters, seed,
package version, artifact hashes); `rerun` reproduces a run from its
manifest alone.  All randomness derives from the --seed flag, and results
are independent of --threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import configio
from . import flight as fl
from . import kernels as kr
from . import pointset as ps
from . import stats as st
from .experiments import CRITERIA_ORDER, REGISTRY, run_experiment
from .microdyn import batch, engine as eng
from .microdyn.kicked import KickedConfig, kicked_run_batch
from .scatter import LorentzScatteringMap, specular_angle


def _fmt(v):
    return f"{float(v):.17g}"


def _outdir(args):
    out = args.out or os.environ.get("LORENTZGAS_OUT", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir, command, params, artifacts):
    manifest = {
        "command": command,
        "params": params,
        "package_version": __version__,
        "artifacts": {os.path.basename(p): _sha256(p) for p in artifacts},
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")
    return path


def _parse_box(text, dim=2):
    vals = [float(x) for x in text.split(",")]
    if len(vals) != 2 * dim:
        raise ps.ConfigError(f"box needs {2 * dim} numbers "
                             "(x0,x1,y0,y1 order)")
    lo = vals[0::2]
    hi = vals[1::2]
    return ps.Box(lo, hi)


def _scattering_map(name):
    from .scatter import KickPotential, map_by_name
    smap = map_by_name(name)
    if isinstance(smap, KickPotential):
        raise ps.ConfigError("kick maps belong to the `kicked` subcommand")
    return smap


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    outdir = _outdir(args)
    cfg = configio.load_config(args.config, radius=args.r,
                               radius_optional=True)
    box = _parse_box(args.box, cfg.dim)
    pts = ps.points_in_box(cfg, box)
    path = os.path.join(outdir, "points.csv")
    _write_csv(path, [f"x{i}" for i in range(cfg.dim)],
               (tuple(float(v) for v in p) for p in pts))
    _write_manifest(outdir, "generate",
                    {"config": os.path.abspath(args.config), "r": args.r,
                     "box": args.box}, [path])
    print(f"{len(pts)} points -> {path}")
    return 0


def _run_simulation(cfg, smap, n_traj, n_col, L_max_micro, seed):
    rng = np.random.default_rng(seed)
    if batch.supports_fast_path(cfg, smap):
        span = max(100.0, (n_traj * 10.0) ** 0.5)
        q0 = rng.random((n_traj, 2)) * span
        phi = rng.uniform(0.0, 2 * np.pi, n_traj)
        v0 = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return batch.run_batch(cfg, q0, v0, n_col, L_max_micro), "compiled"
    # Reference engine path for general configurations.
    engine = eng.Engine(cfg)
    span = 20.0 / max(cfg.density, 0.05)
    box = ps.Box([-span] * cfg.dim, [span] * cfg.dim)
    n = n_traj
    ell = np.full((n, n_col), np.nan)
    w = np.full((n, n_col), np.nan)
    vx = np.full((n, n_col), np.nan)
    vy = np.full((n, n_col), np.nan)
    censored = np.zeros(n, dtype=bool)
    n_done = np.zeros(n, dtype=np.int64)
    for i in range(n):
        state = eng.sample_initial_state(cfg, box, rng)
        rec = eng.run_trajectory(cfg, smap, state, n_collisions=n_col,
                                 L_max=L_max_micro, engine=engine)
        for j, ev in enumerate(rec.events):
            ell[i, j] = ev.ell
            w[i, j] = ev.w_signed
            vx[i, j] = ev.v_out[0]
            vy[i, j] = ev.v_out[1]
        censored[i] = rec.termination == "censored"
        n_done[i] = len(rec.events)
    return {"ell": ell, "w": w, "vx": vx, "vy": vy, "censored": censored,
            "n_done": n_done}, "reference"


def cmd_simulate(args):
    outdir = _outdir(args)
    t0 = time.time()
    cfg = configio.load_config(args.config, radius=args.r)
    smap = _scattering_map(args.scattering)
    n_col = args.collisions
    n_traj = max(1, int(np.ceil(args.paths / n_col)))
    d = cfg.dim
    L_max_micro = args.lmax_macro / cfg.radius ** (d - 1)
    out, engine_kind = _run_simulation(cfg, smap, n_traj, n_col, L_max_micro,
                                       args.seed)
    fac = cfg.radius ** (d - 1)
    rows = []
    for i in range(n_traj):
        nd = int(out["n_done"][i])
        for j in range(nd):
            rows.append((i, j + 1, float(out["ell"][i, j]),
                         float(out["ell"][i, j] * fac),
                         float(out["w"][i, j]), float(out["w"][i, j]),
                         float(out["vx"][i, j]), float(out["vy"][i, j])))
    path = os.path.join(outdir, "events.csv")
    _write_csv(path, ["traj", "n", "ell", "xi", "w", "s", "vx", "vy"], rows)
    summary = {
        "n_trajectories": n_traj,
        "collisions_per_trajectory": n_col,
        "n_events": int(out["n_done"].sum()),
        "censored_trajectories": int(out["censored"].sum()),
        "censored_fraction": float(out["censored"].sum()) / n_traj,
        "engine": engine_kind,
        "r": cfg.radius,
        "wall_seconds": time.time() - t0,
    }
    spath = os.path.join(outdir, "summary.json")
    with open(spath, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    _write_manifest(outdir, "simulate",
                    {"config": os.path.abspath(args.config), "r": args.r,
                     "paths": args.paths, "collisions": args.collisions,
                     "lmax_macro": args.lmax_macro, "seed": args.seed,
                     "scattering": args.scattering}, [path, spath])
    print(f"{summary['n_events']} events ({engine_kind} engine) -> {path}")
    return 0


def cmd_kicked(args):
    outdir = _outdir(args)
    t0 = time.time()
    kappa = args.kappa
    if args.map is not None:
        from .scatter import KickPotential, map_by_name
        pot = map_by_name(args.map)
        if not isinstance(pot, KickPotential):
            raise ps.ConfigError("kicked needs a kick-linear map")
        kappa = pot.kappa
    kc = KickedConfig(radius=args.r, kappa=kappa)
    rng = np.random.default_rng(args.seed)
    rho0 = rng.random(args.trajectories) * 1000.0
    out = kicked_run_batch(kc, rho0, args.p, args.collisions)
    rows = []
    for i in range(args.trajectories):
        for j in range(int(out["n_done"][i])):
            rows.append((i, j + 1, float(out["tau"][i, j]),
                         float(out["w"][i, j]), float(out["p"][i, j])))
    path = os.path.join(outdir, "kicked_events.csv")
    _write_csv(path, ["traj", "n", "tau", "w", "p_out"], rows)
    summary = {
        "n_trajectories": args.trajectories,
        "n_events": int(out["n_done"].sum()),
        "censored_trajectories": int(out["censored"].sum()),
        "mean_collision_time": float(np.nanmean(out["tau"])),
        "target": kc.mean_collision_time,
        "phat0": out["phat0"],
        "wall_seconds": time.time() - t0,
    }
    spath = os.path.join(outdir, "kicked_summary.json")
    with open(spath, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    _write_manifest(outdir, "kicked",
                    {"r": args.r, "p": args.p, "kappa": kappa,
                     "trajectories": args.trajectories,
                     "collisions": args.collisions, "seed": args.seed},
                    [path, spath])
    print(f"{summary['n_events']} kicks, mean collision time "
          f"{summary['mean_collision_time']:.3f} -> {path}")
    return 0


def cmd_estimate(args):
    outdir = _outdir(args)
    data = np.genfromtxt(args.events, delimiter=",", names=True)
    xi = np.asarray(data["xi"], dtype=float)
    traj = np.asarray(data["traj"], dtype=int)
    nidx = np.asarray(data["n"], dtype=int)
    keep = nidx > 1  # first flights follow K, not Phi0
    h = st.Histogram(st.make_xi_edges(args.xi_bar))
    h.add(xi[keep])
    e = h.edges[0]
    dens = h.density()
    path = os.path.join(outdir, "phi0_hist.csv")
    _write_csv(path, ["bin_lo", "bin_hi", "count", "density"],
               ((float(e[i]), float(e[i + 1]), int(h.counts[i]),
                 float(dens[i])) for i in range(len(e) - 1)))
    artifacts = [path]
    summary = {"n_paths": int(keep.sum()),
               "mean_xi": float(xi[keep].mean()),
               "xi_bar": args.xi_bar}
    if args.plot:
        artifacts += _emit_phi0_plot(outdir, h, args.kind, args.plot)
    spath = os.path.join(outdir, "estimate_summary.json")
    with open(spath, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    artifacts.append(spath)
    _write_manifest(outdir, "estimate",
                    {"events": os.path.abspath(args.events),
                     "xi_bar": args.xi_bar, "kind": args.kind,
                     "plot": args.plot}, artifacts)
    print(f"{summary['n_paths']} paths, mean xi {summary['mean_xi']:.4f} "
          f"-> {path}")
    return 0


def _emit_phi0_plot(outdir, h, kind, mode):
    from . import plotting
    if kind == "lattice2d":
        k2 = kr.LatticeKernel2D(1.0)
        analytic = lambda x: k2.phi0_grid(np.asarray(x, dtype=float))
    else:
        analytic = lambda x: kr.poisson_kernel(np.asarray(x, dtype=float),
                                               0.5)
    written = []
    if mode in ("svg", "png"):
        written.append(plotting.phi0_figure(
            h, analytic, os.path.join(outdir, f"phi0.{mode}")))
    elif mode == "script":
        centers = h.centers()
        dens = h.density()
        dat, gp = plotting.emit_gnuplot(
            os.path.join(outdir, "phi0"),
            [centers, dens, analytic(centers)],
            ["xi", "density", "analytic"],
            ["set logscale xy",
             "plot datafile using 1:2 with points title 'simulation', \\",
             "     datafile using 1:3 with lines title 'analytic'"])
        written += [dat, gp]
    return written


def cmd_kernel_eval(args):
    outdir = _outdir(args)
    if args.kind == "lattice2d":
        kernel = kr.LatticeKernel2D(args.nbar)
    else:
        kernel = kr.PoissonKernel(2, args.nbar)
    if args.grid == "default":
        wps = np.linspace(-0.9, 0.9, 13)
        xis = np.array([0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0])
        ws = np.linspace(-0.9, 0.9, 13)
        # Ensure the reference point (-0.5, 1, 0.5) is on the grid.
        wps = np.union1d(wps, [-0.5])
        ws = np.union1d(ws, [0.5])
    else:
        spec = dict(part.split(":", 1) for part in args.grid.split(";"))
        def _axis(s):
            lo, hi, n = s.split(",")
            return np.linspace(float(lo), float(hi), int(n))
        wps = _axis(spec["wp"])
        xis = _axis(spec["xi"])
        ws = _axis(spec["w"])
    rows = []
    for wp in wps:
        for xi in xis:
            kv = np.broadcast_to(np.asarray(kernel.k(wp, xi, ws), dtype=float),
                                 ws.shape)
            for w, val in zip(ws, kv):
                rows.append((float(wp), float(xi), float(w), float(val)))
    kpath = os.path.join(outdir, "k_table.csv")
    _write_csv(kpath, ["w_prime", "xi", "w", "k"], rows)
    prows = [(float(x), float(kernel.phi0(x))) for x in xis]
    ppath = os.path.join(outdir, "phi0_table.csv")
    _write_csv(ppath, ["xi", "phi0"], prows)
    Krows = [(float(x), float(w), float(kernel.K(x, w)))
             for x in xis for w in ws]
    Kpath = os.path.join(outdir, "K_table.csv")
    _write_csv(Kpath, ["xi", "w", "K"], Krows)
    _write_manifest(outdir, "kernel-eval",
                    {"kind": args.kind, "nbar": args.nbar,
                     "grid": args.grid}, [kpath, ppath, Kpath])
    print(f"k table ({len(rows)} rows) -> {kpath}")
    return 0


def cmd_flight(args):
    outdir = _outdir(args)
    t0 = time.time()
    kernel = (kr.LatticeKernel2D(args.nbar) if args.kernel == "lattice2d"
              else kr.PoissonKernel(2, args.nbar))
    smap = LorentzScatteringMap(2, specular_angle())
    snap_times = ([float(x) for x in args.snapshots.split(",")]
                  if args.snapshots else [])
    snaps = fl.evolve_ensemble(kernel, smap, fl.point_source, args.t_end,
                               args.n, args.seed, snapshot_times=snap_times)
    artifacts = []
    for s in snaps:
        tag = f"t{s.t:g}".replace(".", "p")
        h = st.Histogram(st.make_xi_edges(kernel.xi_bar))
        h.add(s.xi)
        e = h.edges[0]
        dens = h.density()
        path = os.path.join(outdir, f"flight_xi_{tag}.csv")
        _write_csv(path, ["bin_lo", "bin_hi", "count", "density"],
                   ((float(e[i]), float(e[i + 1]), int(h.counts[i]),
                     float(dens[i])) for i in range(len(e) - 1)))
        artifacts.append(path)
    nj = snaps[-1].n_jumps
    summary = {"n": args.n, "t_end": args.t_end,
               "mean_jumps": float(nj.mean()),
               "var_jumps": float(nj.var(ddof=1)),
               "wall_seconds": time.time() - t0}
    spath = os.path.join(outdir, "flight_summary.json")
    with open(spath, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    artifacts.append(spath)
    _write_manifest(outdir, "flight",
                    {"kernel": args.kernel, "nbar": args.nbar, "n": args.n,
                     "t_end": args.t_end, "snapshots": args.snapshots,
                     "seed": args.seed}, artifacts)
    print(f"flight: mean jumps {summary['mean_jumps']:.3f} -> {spath}")
    return 0


def cmd_compare(args):
    outdir = _outdir(args)
    names = CRITERIA_ORDER if args.experiment == "all" else [args.experiment]
    reports = []
    artifacts = []
    all_pass = True
    for name in names:
        res = run_experiment(name, seed=args.seed, quick=args.quick)
        reports.append(res.to_dict())
        all_pass &= res.passed
        for c in res.checks:
            mark = "PASS" if c.passed else "FAIL"
            print(f"[{mark}] {res.experiment}/{c.name}: value={c.value:.6g} "
                  f"target={c.target:.6g} tol={c.tol:.3g} ({c.kind}) "
                  f"{c.detail}")
        if args.plot:
            artifacts += _emit_experiment_plots(outdir, res, args.plot)
    rpath = os.path.join(outdir, "report.json")
    with open(rpath, "w") as f:
        json.dump(reports if len(reports) > 1 else reports[0], f, indent=2,
                  sort_keys=True)
    artifacts.append(rpath)
    _write_manifest(outdir, "compare",
                    {"experiment": args.experiment, "seed": args.seed,
                     "quick": args.quick, "plot": args.plot}, artifacts)
    print(("all checks passed" if all_pass else "CHECKS FAILED")
          + f" -> {rpath}")
    return 0 if all_pass else 1


def _emit_experiment_plots(outdir, res, mode):
    from . import plotting
    written = []
    ext = mode if mode in ("svg", "png") else "svg"
    hist = res.artifacts.get("hist")
    if hist is not None and res.experiment in ("poisson-phi0",
                                               "micro-vs-limit",
                                               "lattice2d-plateau"):
        if res.experiment == "poisson-phi0":
            analytic = lambda x: kr.poisson_kernel(np.asarray(x), 0.5)
        else:
            k2 = kr.LatticeKernel2D(1.0)
            analytic = lambda x: k2.phi0_grid(np.asarray(x))
        if mode == "script":
            centers = hist.centers()
            dat, gp = plotting.emit_gnuplot(
                os.path.join(outdir, f"{res.experiment}"),
                [centers, hist.density(), analytic(centers)],
                ["xi", "density", "analytic"],
                ["plot datafile using 1:2 with points, \\",
                 "     datafile using 1:3 with lines"])
            written += [dat, gp]
        else:
            written.append(plotting.phi0_figure(
                hist, analytic,
                os.path.join(outdir, f"{res.experiment}.{ext}"),
                title=res.experiment))
    if res.experiment == "lattice2d-tail" and mode != "script":
        written.append(plotting.tail_figure(
            res.artifacts["hist"], res.artifacts["slope"],
            res.artifacts["intercept"], res.artifacts["C"],
            os.path.join(outdir, f"tail.{ext}")))
    if res.experiment == "lattice2d-kernel" and mode != "script":
        written.append(plotting.kernel_slices_figure(
            res.artifacts["empirical"],
            os.path.join(outdir, f"kernel_slices.{ext}")))
    if res.experiment == "renorm-counts" and mode != "script":
        counts = res.artifacts.get("lattice_counts")
        if counts:
            written.append(plotting.counts_figure(
                counts, [f"box {j}" for j in range(4)],
                os.path.join(outdir, f"renorm_counts.{ext}")))
    return written


def cmd_renorm(args):
    outdir = _outdir(args)
    from .microdyn.renorm import ThetaView
    cfg = configio.load_config(args.config, radius=args.r)
    view = ThetaView(cfg, [0.0, 0.0], args.w_prime, args.r)
    box = _parse_box(args.box)
    pts = view.points_in_box(box)
    path = os.path.join(outdir, "theta_points.csv")
    _write_csv(path, ["x0", "x1"], (tuple(map(float, p)) for p in pts))
    _write_manifest(outdir, "renorm",
                    {"config": os.path.abspath(args.config), "r": args.r,
                     "w_prime": args.w_prime, "box": args.box}, [path])
    print(f"{len(pts)} renormalized points -> {path}")
    return 0


def cmd_rerun(args):
    with open(args.manifest) as f:
        manifest = json.load(f)
    command = manifest["command"]
    params = manifest["params"]
    argv = [command]
    for key, val in params.items():
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        else:
            argv += [flag, str(val)]
    if args.out:
        argv += ["--out", args.out]
    return main(argv)


# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="lorentzgas",
        description="Lorentz gas / kicked Hamiltonian simulation and "
                    "low-density-limit validation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--out", default=None,
                        help="output directory (default $LORENTZGAS_OUT "
                             "or ./out)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker hint; results are identical for any "
                             "value")

    g = sub.add_parser("generate", help="emit scatterer points as CSV")
    g.add_argument("--config", required=True)
    g.add_argument("--r", type=float, default=None)
    g.add_argument("--box", required=True,
                   help="x0,x1,y0,y1 (half-open per axis)")
    common(g)
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("simulate", help="run Lorentz trajectories")
    s.add_argument("--config", required=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--paths", type=int, default=100_000,
                   help="total free paths (trajectories = paths/collisions)")
    s.add_argument("--collisions", type=int, default=100)
    s.add_argument("--lmax-macro", type=float, default=500.0,
                   help="censoring cap on macroscopic flight length")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--scattering", default="specular",
                   help="specular | tabulated:file.csv")
    common(s)
    s.set_defaults(fn=cmd_simulate)

    k = sub.add_parser("kicked", help="run kicked-Hamiltonian trajectories")
    k.add_argument("--r", type=float, required=True)
    k.add_argument("--p", type=float, default=0.6180339887498949)
    k.add_argument("--kappa", type=float, default=1.0)
    k.add_argument("--map", default=None,
                   help="named kick map, e.g. kick-linear:2.0 "
                        "(overrides --kappa)")
    k.add_argument("--trajectories", type=int, default=1000)
    k.add_argument("--collisions", type=int, default=100)
    k.add_argument("--seed", type=int, default=1)
    common(k)
    k.set_defaults(fn=cmd_kicked)

    e = sub.add_parser("estimate", help="free-path histogram from events")
    e.add_argument("--events", required=True)
    e.add_argument("--xi-bar", type=float, default=0.5)
    e.add_argument("--kind", default="lattice2d",
                   choices=["lattice2d", "poisson"])
    e.add_argument("--plot", default=None, choices=["svg", "png", "script"])
    common(e)
    e.set_defaults(fn=cmd_estimate)

    kv = sub.add_parser("kernel-eval", help="tabulate analytic kernels")
    kv.add_argument("--kind", required=True,
                    choices=["poisson", "lattice2d"])
    kv.add_argument("--nbar", type=float, default=1.0)
    kv.add_argument("--grid", default="default",
                    help="default | 'wp:lo,hi,n;xi:lo,hi,n;w:lo,hi,n'")
    common(kv)
    kv.set_defaults(fn=cmd_kernel_eval)

    f = sub.add_parser("flight", help="limiting random flight process")
    f.add_argument("--kernel", required=True,
                   choices=["poisson", "lattice2d"])
    f.add_argument("--nbar", type=float, default=1.0)
    f.add_argument("--n", type=int, default=10_000)
    f.add_argument("--t-end", type=float, default=2.5)
    f.add_argument("--snapshots", default=None, help="comma-separated times")
    f.add_argument("--seed", type=int, default=1)
    common(f)
    f.set_defaults(fn=cmd_flight)

    c = sub.add_parser("compare", help="run validation experiments")
    c.add_argument("--experiment", required=True,
                   choices=list(REGISTRY) + ["all"])
    c.add_argument("--seed", type=int, default=101)
    c.add_argument("--quick", action="store_true",
                   help="reduced sample sizes (tolerances unchanged)")
    c.add_argument("--plot", default=None, choices=["svg", "png", "script"])
    common(c)
    c.set_defaults(fn=cmd_compare)

    r = sub.add_parser("renorm", help="renormalized point process queries")
    r.add_argument("--config", required=True)
    r.add_argument("--r", type=float, required=True)
    r.add_argument("--w-prime", type=float, required=True)
    r.add_argument("--box", required=True)
    common(r)
    r.set_defaults(fn=cmd_renorm)

    rr = sub.add_parser("rerun", help="reproduce a run from its manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", default=None)
    rr.set_defaults(fn=cmd_rerun)
    return p


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    import jsonschema
    try:
        return args.fn(args)
    except (ps.ConfigError, jsonschema.ValidationError, FileNotFoundError,
            KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
