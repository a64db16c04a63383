"""Command-line front end.

Exit codes: 0 success, 1 validation or check failure, 2 usage error.
Every subcommand accepts ``--config FILE`` (flat ``key = value``); explicit
flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import barriers, io
from .curvature import mean_curvature_field
from .flow import FlowConfig, FlowDivergedError, FlowError, SolverError, run_flow
from .kernels import KernelError, get_pair, normalization, unit_ball_volume, validate_natural_pair
from .operators import CONVERGING_SPECS, NULL_SPECS, OperatorSyntaxError, parse_operator
from .sff import SffError, sff_field
from .shapes import ShapeError, ShapeSampler, sample_shape
from .varifold import VarifoldError

USAGE_EXIT = 2
FAIL_EXIT = 1


class UsageError(Exception):
    pass


def _r(x) -> str:
    return repr(float(x))


def _csv_writer(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_csv(path: str | None, header, rows) -> None:
    fh, close = _csv_writer(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _setting(args, cfg: io.RunConfig, name: str, default=None, required: bool = False):
    val = getattr(args, name, None)
    if val is None:
        val = getattr(cfg, name)
    if val is None:
        val = default
    if val is None and required:
        raise UsageError(f"missing required setting --{name.replace('_', '-')}")
    return val


def _load(args, cfg, eps):
    path = _setting(args, cfg, "input", required=True)
    return io.load_cloud(path, tangent_radius=eps)


def cmd_validate_kernel(args, cfg) -> int:
    name = _setting(args, cfg, "kernel", "bump")
    n = int(_setting(args, cfg, "n", required=True))
    pair = get_pair(name, n)
    rep = validate_natural_pair(pair, n)
    print(f"kernel {name} n={n} natural={int(pair.is_natural)}")
    print(f"max_defect {_r(rep.max_defect)}")
    print(f"grid_size {rep.grid_size}")
    for d in range(1, n):
        c_rho = normalization(pair.rho, d).value
        c_xi = normalization(pair.xi, d).value
        print(f"d={d} C_rho {_r(c_rho)} C_xi {_r(c_xi)} ratio {_r(c_xi / c_rho)} d/n {_r(d / n)}")
    print(f"unit_ball_volume(n) {_r(unit_ball_volume(n))}")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else FAIL_EXIT


def cmd_curvature(args, cfg) -> int:
    eps = float(_setting(args, cfg, "epsilon", required=True))
    spec = parse_operator(_setting(args, cfg, "operator", "2*Id"))
    V = _load(args, cfg, eps)
    pair = get_pair(_setting(args, cfg, "kernel", "bump"), V.n)
    field = mean_curvature_field(V, pair, eps, spec, tangential=bool(_setting(args, cfg, "tangential", False)))
    header = ["index"] + [f"x{a}" for a in range(V.n)] + [f"H{a}" for a in range(V.n)] + ["denominator", "valid"]
    rows = ([k] + [_r(v) for v in V.points[k]] + [_r(v) for v in field.H[k]] + [_r(field.denominators[k]),
                                                                                  int(field.valid[k])]
            for k in range(V.N))
    _write_csv(_setting(args, cfg, "out"), header, rows)
    return 0


def cmd_sff(args, cfg) -> int:
    eps = float(_setting(args, cfg, "epsilon", required=True))
    spec = parse_operator(_setting(args, cfg, "operator", "S"))
    V = _load(args, cfg, eps)
    pair = get_pair(_setting(args, cfg, "kernel", "bump"), V.n)
    f = sff_field(V, pair, eps, spec)
    n = V.n
    idx3 = [(i, j, k) for i in range(n) for j in range(n) for k in range(n)]
    header = (["index"] + [f"beta{i}{j}{k}" for i, j, k in idx3] + [f"c{j}{k}" for j in range(n) for k in range(n)]
              + [f"A{i}{j}{k}" for i, j, k in idx3])
    rows = ([p] + [_r(v) for v in f.beta[p].ravel()] + [_r(v) for v in f.c[p].ravel()] + [_r(v) for v in f.A[p].ravel()]
            for p in range(V.N))
    _write_csv(_setting(args, cfg, "out"), header, rows)
    return 0


def _flow_config(args, cfg, n) -> tuple[FlowConfig, int | None, float | None]:
    center = _setting(args, cfg, "center")
    if center is not None and len(center) != n:
        raise UsageError(f"--center needs {n} coordinates")
    config = FlowConfig(
        epsilon=float(_setting(args, cfg, "epsilon", required=True)),
        tau=float(_setting(args, cfg, "tau", required=True)),
        scheme=_setting(args, cfg, "scheme", "rk4"),
        operator=_setting(args, cfg, "operator", "2*Id"),
        kernel=_setting(args, cfg, "kernel", "bump"),
        mass_policy=_setting(args, cfg, "mass_policy", "frozen"),
        tangent_policy=_setting(args, cfg, "tangent_policy", "recompute-per-step"),
        implicit_masses=bool(_setting(args, cfg, "implicit_masses", False)),
        implicit_weights=bool(_setting(args, cfg, "implicit_weights", False)),
        tol=float(_setting(args, cfg, "tol", 1e-12)),
        max_iter=int(_setting(args, cfg, "max_iter", 500)),
        center=None if center is None else tuple(center),
    )
    steps = _setting(args, cfg, "steps")
    t_end = _setting(args, cfg, "t_end")
    if (steps is None) == (t_end is None):
        raise UsageError("give exactly one of --steps and --t-end")
    return config, steps, t_end


def _diag_rows(traj):
    return ([i.step, _r(i.time), _r(i.r_min), _r(i.r_max), _r(i.barrier_c), i.solver_iters]
            for i in traj.diagnostics)


DIAG_HEADER = ["step", "time", "r_min", "r_max", "barrier_c", "solver_iters"]


def cmd_flow(args, cfg) -> int:
    eps = float(_setting(args, cfg, "epsilon", required=True))
    V = _load(args, cfg, eps)
    config, steps, t_end = _flow_config(args, cfg, V.n)
    prefix = _setting(args, cfg, "out_prefix", "flow_")
    every = int(_setting(args, cfg, "snapshot_every", 1))
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)

    def save(k, t, W, info):
        if k % every == 0:
            io.save_cloud(W, f"{prefix}{k:06d}.txt")

    traj = run_flow(V, config, steps=steps, t_end=t_end, keep_every=10**9, callback=save)
    if traj.steps[-1] % every:
        io.save_cloud(traj.final, f"{prefix}{traj.steps[-1]:06d}.txt")
    _write_csv(f"{prefix}diagnostics.csv", DIAG_HEADER, _diag_rows(traj))
    return 0


def cmd_barriers(args, cfg) -> int:
    eps = float(_setting(args, cfg, "epsilon", required=True))
    V = _load(args, cfg, eps)
    config, steps, t_end = _flow_config(args, cfg, V.n)
    check = _setting(args, cfg, "check", "internal")
    center = np.zeros(V.n) if config.center is None else np.asarray(config.center)
    R0 = _setting(args, cfg, "radius")
    if check in ("internal", "external") and R0 is None:
        raise UsageError(f"the {check} check needs --radius")
    traj = run_flow(V, config, steps=steps, t_end=t_end)
    if check == "internal":
        rep = barriers.check_internal_barrier(traj, center, R0, V.d)
    elif check == "external":
        rep = barriers.check_external_barrier(traj, center, R0, V.d, dt=config.tau)
    elif check == "weak-external":
        rep = barriers.check_weak_external_discrete(traj, center, V.d, config.tau)
    else:
        raise UsageError(f"unknown check {check!r}; expected internal, external or weak-external")
    _write_text(_setting(args, cfg, "out"), rep.to_csv())
    print(f"{rep.inequality}: {'PASS' if rep.passed else 'FAIL'} ({len(rep.failures)} failing steps, "
          f"min slack {_r(rep.min_slack)})", file=sys.stderr)
    return 0 if rep.passed else FAIL_EXIT


def cmd_converge(args, cfg) -> int:
    shape = _setting(args, cfg, "shape", "circle")
    ops = _setting(args, cfg, "operators", CONVERGING_SPECS + NULL_SPECS)
    eps = _setting(args, cfg, "epsilons", (0.4, 0.2, 0.1, 0.05))
    for op in ops:
        parse_operator(op)
    table = barriers.convergence_study(shape, ops, eps, seed=int(_setting(args, cfg, "seed", 0)),
                                       probes=int(_setting(args, cfg, "probes", 16)), n=_setting(args, cfg, "n"))
    _write_text(_setting(args, cfg, "out"), table.to_csv())
    return 0


def cmd_sample(args, cfg) -> int:
    shape = _setting(args, cfg, "shape", required=True)
    s = ShapeSampler(shape, int(_setting(args, cfg, "N", required=True)), radius=float(args.shape_radius),
                     n=int(_setting(args, cfg, "n", 2)), jitter=args.jitter, noise=args.noise,
                     seed=int(_setting(args, cfg, "seed", 0)), lattice=args.lattice)
    V = sample_shape(s)
    _write_text(_setting(args, cfg, "out"), io.format_cloud(V))
    return 0


def _floats(text: str):
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _strings(text: str):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varic", description="Varifold curvature estimation and point-cloud flows.")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_, func):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="flat key = value settings file")
        sp.set_defaults(func=func)
        return sp

    def common(sp, operator=True):
        sp.add_argument("--input", help="point-cloud file")
        sp.add_argument("--epsilon", type=float, help="kernel scale")
        if operator:
            sp.add_argument("--operator", help="operator expression, e.g. '2*Id' or 'Tperp.S'")
        sp.add_argument("--kernel", help="'bump' or a tabulated CSV profile")

    vk = add("validate-kernel", "check the natural-pair identity and print normalization constants",
             cmd_validate_kernel)
    vk.add_argument("--kernel")
    vk.add_argument("--n", type=int, help="ambient dimension")

    cu = add("curvature", "approximate mean curvature at every point", cmd_curvature)
    common(cu)
    cu.add_argument("--tangential", action="store_const", const=True, help="tangential-kernel variant")
    cu.add_argument("--out", help="CSV output (stdout if omitted)")

    sf = add("sff", "approximate second fundamental form tensors", cmd_sff)
    common(sf)
    sf.add_argument("--out", help="CSV output (stdout if omitted)")

    for name, help_, func in (("flow", "evolve a cloud by approximate mean curvature", cmd_flow),
                              ("barriers", "run a flow and check a sphere-barrier inequality", cmd_barriers)):
        fl = add(name, help_, func)
        common(fl)
        fl.add_argument("--scheme", choices=["rk4", "explicit", "implicit"])
        fl.add_argument("--tau", type=float, help="time step")
        fl.add_argument("--steps", type=int)
        fl.add_argument("--t-end", dest="t_end", type=float)
        fl.add_argument("--mass-policy", dest="mass_policy", choices=["frozen", "recompute-per-step"])
        fl.add_argument("--tangent-policy", dest="tangent_policy",
                        choices=["frozen", "recompute-per-step", "recompute-per-rhs"])
        fl.add_argument("--implicit-masses", dest="implicit_masses", action="store_const", const=True)
        fl.add_argument("--implicit-weights", dest="implicit_weights", action="store_const", const=True)
        fl.add_argument("--tol", type=float)
        fl.add_argument("--max-iter", dest="max_iter", type=int)
        fl.add_argument("--center", type=_floats, help="reference center, comma separated")
        if name == "flow":
            fl.add_argument("--snapshot-every", dest="snapshot_every", type=int)
            fl.add_argument("--out-prefix", dest="out_prefix", help="prefix for snapshots and diagnostics.csv")
        else:
            fl.add_argument("--check", choices=["internal", "external", "weak-external"])
            fl.add_argument("--radius", type=float, help="initial barrier radius R0")
            fl.add_argument("--out", help="report CSV (stdout if omitted)")

    cv = add("converge", "epsilon-convergence study against analytic curvature", cmd_converge)
    cv.add_argument("--shape", choices=["circle", "sphere", "torus", "plane", "segment"])
    cv.add_argument("--operators", type=_strings, help="comma-separated operator expressions")
    cv.add_argument("--epsilons", type=_floats, help="decreasing comma-separated scales")
    cv.add_argument("--seed", type=int)
    cv.add_argument("--probes", type=int)
    cv.add_argument("--n", type=int, help="ambient dimension for plane/segment")
    cv.add_argument("--out", help="CSV output (stdout if omitted)")

    sa = add("sample", "write a seeded sample of an analytic shape", cmd_sample)
    sa.add_argument("--shape", choices=["circle", "sphere", "torus", "plane", "segment"])
    sa.add_argument("--N", type=int)
    sa.add_argument("--n", type=int)
    sa.add_argument("--shape-radius", dest="shape_radius", type=float, default=1.0)
    sa.add_argument("--jitter", type=float, default=0.0)
    sa.add_argument("--noise", type=float, default=0.0)
    sa.add_argument("--lattice", choices=["fibonacci", "uv"], default="fibonacci")
    sa.add_argument("--seed", type=int)
    sa.add_argument("--out", help="cloud output (stdout if omitted)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        io.thread_cap()
        cfg = io.load_config(args.config) if args.config else io.RunConfig()
    except (io.ConfigError, OSError) as exc:
        print(f"varic: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args, cfg)
    except FlowDivergedError as exc:
        print(f"varic {args.command}: {exc}", file=sys.stderr)
        return FAIL_EXIT
    except (UsageError, OperatorSyntaxError, FlowError) as exc:
        print(f"varic {args.command}: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (io.CloudFormatError, VarifoldError, KernelError, ShapeError, SffError, SolverError,
            barriers.BarrierError, OSError) as exc:
        print(f"varic {args.command}: {exc}", file=sys.stderr)
        return FAIL_EXIT


if __name__ == "__main__":
    sys.exit(main())
