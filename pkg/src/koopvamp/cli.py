"""``koopvamp`` command line: simulate, estimate, score, cv, truth, export-density.

Exit codes are 0 on success, 1 on usage errors (bad or incompatible flags,
unreadable inputs) and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import systems
from .basis import INDICATOR, RBF, BasisSpec, grid_centers, indicator_grid, kmeans_centers, uniform_rbf
from .crossval import HyperParamPoint, cross_validate, exact_cv_curve
from .nonlinear import GoldenSectionConfig, optimize_w
from .scores import ScoreSpec, score
from .tcca import SingularCovarianceError, fit_tcca, load_model, reconstruct_transition_density, save_model
from .trajectory_store import (TrajectoryCollection, TrajectoryFormatError, load_trajectories, read_meta,
                               save_trajectories, split_folds)
from .whitening import EPS0, DegenerateBasisError

__all__ = ["main", "run_cli", "build_parser"]

SCORE_NAMES = {"vampe": "vamp-e", "vampr": "vamp-r", "subspace": "subspace-vamp-r"}
SYSTEMS = ("onedim", "double-gyre", "lorenz", "lorenz-eta")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _range(text: str):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def _bounds(text: str):
    return tuple(_range(part) for part in text.split(","))


def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_basis_flags(p):
    p.add_argument("--basis", choices=("indicator", "rbf"), default="rbf")
    p.add_argument("--m", type=int, help="basis size (1D indicator bins or number of rbf centers)")
    p.add_argument("--bins", type=_int_list, help="indicator bins per dimension, e.g. 50,25")
    p.add_argument("--bounds", type=_bounds,
                   help="domain as lo:hi[,lo:hi...]; default from meta.txt, else the data range")
    p.add_argument("--w", type=float, default=1.0, help="rbf smoothing parameter")
    p.add_argument("--optimize-w", action="store_true", help="golden-section search for w")
    p.add_argument("--log-w-range", type=_range, default=(-6.0, 6.0))
    p.add_argument("--w-tol", type=float, default=1e-3)
    p.add_argument("--centers", choices=("uniform", "kmeans"), default="uniform")
    p.add_argument("--lag", type=int, required=True, help="lag in steps")
    p.add_argument("--k", default="full", help="number of singular components or 'full'")
    p.add_argument("--eps", type=float, default=EPS0)
    p.add_argument("--seed", type=int, default=0)


def _add_score_flags(p, default="vampe"):
    p.add_argument("--score", choices=tuple(SCORE_NAMES), default=default)
    p.add_argument("--r", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="koopvamp", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a reference system to a CSV directory")
    p.add_argument("--system", choices=SYSTEMS, required=True)
    p.add_argument("--n-traj", type=int, default=10)
    p.add_argument("--length", type=int, help="steps per trajectory (onedim)")
    p.add_argument("--length-time", type=float, help="time length per trajectory (double-gyre, lorenz)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--printed-noise", action="store_true",
                   help="double gyre: per-step variance eps^2 (x/4+1) without the step factor")
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="fit a Koopman model by feature or nonlinear TCCA")
    p.add_argument("--data", required=True)
    _add_basis_flags(p)
    p.add_argument("--out", required=True, help="model file (JSON)")

    p = sub.add_parser("score", help="score a saved model on data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lag", type=int, help="defaults to the model's lag")
    _add_score_flags(p)

    p = sub.add_parser("cv", help="J-fold cross-validation over a basis-size grid")
    p.add_argument("--data", required=True)
    _add_basis_flags(p)
    _add_score_flags(p)
    p.add_argument("--m-grid", type=_int_list, required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--block-length", type=int, help="fold block length in steps; default whole trajectories")
    p.add_argument("--truth", choices=("onedim", "double-gyre"), help="add the exact score curve")
    p.add_argument("--out", help="CSV report path (default stdout)")
    p.add_argument("--plot", help="figure path for the CV curve")

    p = sub.add_parser("truth", help="export the exact oracle spectrum")
    p.add_argument("--system", choices=("onedim", "double-gyre"), required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--printed-noise", action="store_true")
    p.add_argument("--out", default=".")
    p.add_argument("--plot", action="store_true", help="also render spectrum and singular-function figures")

    p = sub.add_parser("export-density", help="true and rank-k transition densities of the 1D system")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--stride", type=int, default=10, help="keep every stride-th bin")
    p.add_argument("--model", help="also reconstruct from an indicator-basis model")
    p.add_argument("--data", help="data for the model's end-point weights")
    p.add_argument("--out", default=".")
    p.add_argument("--plot", action="store_true")
    return ap


# helpers


def _parse_k(text):
    if text == "full":
        return "full"
    try:
        k = int(text)
    except ValueError:
        raise UsageError(f"--k must be a positive integer or 'full', got {text!r}") from None
    if k < 1:
        raise UsageError("--k must be >= 1")
    return k


def _data_bounds(data: TrajectoryCollection):
    x = data.concatenated()
    lo, hi = x.min(0), x.max(0)
    pad = 1e-9 * np.maximum(hi - lo, 1.0)
    return tuple((float(a - p), float(b + p)) for a, b, p in zip(lo, hi, pad))


def _default_bounds(args, data):
    text = read_meta(args.data).get("bounds")
    return _bounds(text) if text else _data_bounds(data)


def _check_basis_flags(args, data, m=None):
    m = args.m if m is None else m
    if args.optimize_w and args.basis == "indicator":
        raise UsageError("--optimize-w needs --basis rbf")
    if args.basis == "indicator" and args.centers == "kmeans":
        raise UsageError("--centers applies to rbf bases only")
    if args.lag < 1:
        raise UsageError("--lag must be >= 1")
    bounds = args.bounds or _default_bounds(args, data)
    if len(bounds) != data.dim:
        raise UsageError(f"--bounds has {len(bounds)} dimensions, data has {data.dim}")
    if args.basis == "indicator":
        bins = tuple(args.bins) if args.bins else ((m,) if m and data.dim == 1 else None)
        if bins is None or len(bins) != data.dim:
            raise UsageError("indicator basis needs --m (1D) or --bins with one count per dimension")
    elif args.basis == "rbf" and args.centers == "uniform" and data.dim != 1:
        raise UsageError("uniform rbf centers are 1D only; use --centers kmeans")
    return bounds


def _gs_config(args, r=2):
    lo, hi = args.log_w_range
    try:
        return GoldenSectionConfig(lo, hi, args.w_tol, r)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _build_basis(args, data, bounds, m) -> BasisSpec:
    if args.basis == "indicator":
        return indicator_grid(bounds, tuple(args.bins) if args.bins else (m,))
    if m is None or m < 1:
        raise UsageError("rbf basis needs --m >= 1")
    if args.centers == "kmeans":
        return BasisSpec(RBF, bounds, centers=kmeans_centers(data.concatenated(), m, seed=args.seed), w=args.w)
    return uniform_rbf(bounds, m, args.w)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _score_line(spec: ScoreSpec, k: int, value: float) -> str:
    r = "" if spec.kind == "vamp-e" else spec.r
    return f"{spec.kind},{r},{k},{value!r}"


# subcommands


def cmd_simulate(args):
    if args.n_traj < 1:
        raise UsageError("--n-traj must be >= 1")
    if args.system == "onedim":
        if args.length_time is not None:
            raise UsageError("onedim takes --length (steps)")
        data = systems.simulate_onedim(args.n_traj, args.length or 500, args.seed)
    else:
        if args.length is not None:
            raise UsageError(f"{args.system} takes --length-time")
        if args.system == "double-gyre":
            truth = systems.build_double_gyre_truth(scale_noise_by_dt=not args.printed_noise)
            data = systems.simulate_double_gyre(args.n_traj, args.length_time or 4.0, args.seed, truth)
        else:
            data = systems.simulate_lorenz(args.n_traj, args.length_time or 25.0, args.seed)
            if args.system == "lorenz-eta":
                data = data.map(systems.eta_map)
    bounds = {"onedim": systems.ONEDIM_BOUNDS, "double-gyre": systems.GYRE_BOUNDS}.get(args.system)
    meta = {"system": args.system}
    if bounds:
        meta["bounds"] = ",".join(f"{lo!r}:{hi!r}" for lo, hi in bounds)
    files = save_trajectories(data, args.out, meta)
    print(f"wrote {len(files)} trajectories of dimension {data.dim} to {args.out} (dt={data.dt!r})")
    return 0


def _fit(args, data, bounds, m):
    k = _parse_k(args.k)
    basis = _build_basis(args, data, bounds, m)
    value = None
    if args.optimize_w:
        w, value = optimize_w(data, basis, args.lag, _gs_config(args), args.eps)
        basis = basis.with_w(w)
    model = fit_tcca(data, basis, basis, args.lag, None if k == "full" else k, args.eps)
    model.meta.update({"w_objective": value, "dt": data.dt, "lag_time": args.lag * data.dt})
    return model


def cmd_estimate(args):
    data = load_trajectories(args.data)
    bounds = _check_basis_flags(args, data)
    model = _fit(args, data, bounds, args.m)
    save_model(model, args.out)
    cov = model.covariances(data)
    w = "inf" if model.basis0.kind == INDICATOR else repr(model.basis0.w)
    print("lag_steps,lag_time,m,w,k")
    print(f"{args.lag},{args.lag * data.dt!r},{model.basis0.m},{w},{model.k}")
    print("singular_values," + ",".join(repr(float(s)) for s in model.singular_values))
    print("score_kind,r,k,value")
    for spec in (ScoreSpec("vamp-e"), ScoreSpec("vamp-r", 2)):
        print(_score_line(spec, model.k, score(model, cov, spec)))
    return 0


def cmd_score(args):
    model = load_model(args.model)
    data = load_trajectories(args.data)
    if data.dim != model.basis0.dim:
        raise UsageError(f"data dimension {data.dim} does not match the model ({model.basis0.dim})")
    spec = ScoreSpec(SCORE_NAMES[args.score], args.r)
    value = score(model, model.covariances(data, args.lag or model.lag_steps), spec)
    print("score_kind,r,k,value")
    print(_score_line(spec, model.k, value))
    return 0


def cmd_cv(args, threads):
    data = load_trajectories(args.data)
    if not args.m_grid or any(m < 1 for m in args.m_grid):
        raise UsageError("--m-grid values must be >= 1")
    bounds = _check_basis_flags(args, data, args.m_grid[0])
    k = _parse_k(args.k)
    if args.basis == "indicator" and data.dim != 1:
        raise UsageError("cv over --m-grid with indicator bases is 1D only")
    kind = INDICATOR if args.basis == "indicator" else RBF
    grid = [HyperParamPoint(kind, m, bounds, w=args.w, optimize_w=args.optimize_w, k=k, lag=args.lag,
                            centers=args.centers) for m in args.m_grid]
    block = args.block_length or min(data.lengths)
    folds = split_folds(data, args.folds, block, seed=args.seed, min_block=args.lag)
    spec = ScoreSpec(SCORE_NAMES[args.score], args.r)
    report = cross_validate(data, grid, folds, spec, _gs_config(args), args.eps, n_jobs=threads, seed=args.seed)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
        print(f"selected m={report.best.m} (theta_id {report.selected}); report in {args.out}")
    else:
        sys.stdout.write(text)
    if args.plot:
        from .plotting import plot_cv

        exact = None
        if args.truth:
            truth = _truth(args.truth)
            exact = exact_cv_curve(grid, data, truth, _gs_config(args), args.eps, args.seed)
        plot_cv(report, args.plot, exact)
    return 0


def _truth(name, printed_noise=False):
    if name == "onedim":
        return systems.build_onedim_truth()
    return systems.build_double_gyre_truth(scale_noise_by_dt=not printed_noise)


def cmd_truth(args):
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    truth = _truth(args.system, args.printed_noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = truth.centers.shape[1]
    coords = ["x", "y"][:d]
    _write_csv(out / "sigma.csv", ["i", "sigma"], [(i + 1, repr(float(s))) for i, s in enumerate(truth.sigma)])
    n = truth.psi.shape[1]
    for name, arr in (("psi", truth.psi), ("phi", truth.phi)):
        _write_csv(out / f"{name}.csv", coords + [f"{name}{i + 1}" for i in range(n)],
                   [[repr(float(v)) for v in row] for row in np.hstack([truth.centers, arr])])
    _write_csv(out / "mu.csv", coords + ["mu"],
               [[repr(float(v)) for v in row] for row in np.hstack([truth.centers, truth.mu[:, None]])])
    rel = truth.relative_truncation_error(args.k)
    print("system,k,sum_sigma_sq,relative_error")
    print(f"{args.system},{args.k},{truth.hs_norm_sq!r},{rel!r}")
    if args.plot:
        from .plotting import plot_field, plot_singular_functions, plot_spectrum

        plot_spectrum(truth.sigma[:100], out / "sigma.png", args.k)
        if d == 1:
            plot_singular_functions(truth.centers[:, 0], truth.psi[:, 1:4], out / "psi.png",
                                    labels=["psi2", "psi3", "psi4"])
        else:
            plot_field(truth.psi[:, 1], systems.GYRE_BOUNDS, systems.GYRE_BINS, out / "psi2.png", "psi2")
    return 0


def _onedim_density(P, width, stride):
    # bin probabilities to a density in y
    return P[::stride, ::stride] / width


def cmd_export_density(args):
    if args.k < 1 or args.stride < 1:
        raise UsageError("--k and --stride must be >= 1")
    if (args.model is None) != (args.data is None):
        raise UsageError("--model and --data go together")
    truth = systems.build_onedim_truth()
    if truth.psi.shape[1] < args.k:
        raise UsageError(f"--k at most {truth.psi.shape[1]} for the stored oracle components")
    width = 40.0 / truth.mu.size
    s = truth.sigma[:args.k]
    p_k = (truth.psi[:, :args.k] * s) @ truth.phi[:, :args.k].T * truth.mu1[None, :]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x = truth.centers[::args.stride, 0]
    outputs = {"density_true": _onedim_density(truth.P, width, args.stride),
               f"density_rank{args.k}": _onedim_density(p_k, width, args.stride)}
    if args.model:
        model = load_model(args.model)
        data = load_trajectories(args.data)
        b1 = model.basis1
        if b1.kind != INDICATOR:
            raise UsageError("density reconstruction needs an indicator-basis model")
        ends = np.concatenate([t[model.lag_steps:] for t in data.trajectories if t.shape[0] > model.lag_steps])
        mu1 = b1(ends).mean(0)
        p_model = reconstruct_transition_density(model, mu1)
        bw = (b1.bounds[0][1] - b1.bounds[0][0]) / b1.m
        xm = grid_centers(model.basis0.bounds, model.basis0.bins)[:, 0]
        _write_matrix(out / "density_model.csv", xm, xm, p_model / bw)
    for name, arr in outputs.items():
        _write_matrix(out / f"{name}.csv", x, x, arr)
    rel = truth.relative_truncation_error(args.k)
    print(f"wrote densities on {x.size} x {x.size} grid to {out}; rank-{args.k} relative error {rel!r}")
    if args.plot:
        from .plotting import plot_density

        for name, arr in outputs.items():
            plot_density(arr, systems.ONEDIM_BOUNDS, out / f"{name}.png", name.replace("_", " "))
    return 0


def _write_matrix(path, x, y, arr):
    """Long format ``x,y,density`` so the file loads as a table."""
    rows = ((repr(float(a)), repr(float(b)), repr(float(arr[i, j])))
            for i, a in enumerate(x) for j, b in enumerate(y))
    _write_csv(path, ["x", "y", "density"], rows)


NUMERICAL = (ArithmeticError, np.linalg.LinAlgError, SingularCovarianceError, DegenerateBasisError,
             systems.DivergenceError)


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "estimate":
            return cmd_estimate(args)
        if args.command == "score":
            return cmd_score(args)
        if args.command == "cv":
            return cmd_cv(args, args.threads)
        if args.command == "truth":
            return cmd_truth(args)
        return cmd_export_density(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, TrajectoryFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
