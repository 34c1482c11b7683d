"""Experiment runner: config parsing, seeds, machine-readable outputs.

Subcommands: lift, rsde, nbeta, tails, filter, rpde, convergence.  Every run
writes its artifacts plus a manifest (version, seeds, config echo) so results
can be reproduced bit-exactly from the manifest alone.

Exit codes: 0 ok, 2 validation failure, 3 numerical blow-up, 4 degenerate
Monte Carlo ensemble.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .brownian import EnsembleConfig, refine_times, sample_brownian
from .errors import (
    BlowUpError,
    DegenerateEnsembleError,
    RoughSDEError,
    ValidationError,
)
from .fields import VectorFieldSet, affine_field
from .filtering import FilterProblem, robust_filter
from .greedy import fernique_tail_fit, interval_pvar_table, n_beta_rough, nbeta_from_table
from .jointlift import batch_joint_increments, sample_joint_lift
from .paths import (
    RoughPathGrid,
    holder_norm,
    rough_from_csv,
    rough_from_json,
    rough_to_json,
    signature_pl,
)
from .rpde import RPDEProblem, feynman_kac
from .solver import solve_rde, solve_rsde_ensemble
from .utils import resolve_workers

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_DEGENERATE = 4


def _load_rough(path: str) -> RoughPathGrid:
    text = Path(path).read_text()
    if path.endswith(".csv"):
        return rough_from_csv(text)
    return rough_from_json(text)


def _write(path: str, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _manifest(out_path: str, subcommand: str, config: dict, seeds: dict):
    manifest = {
        "version": __version__,
        "subcommand": subcommand,
        "seeds": seeds,
        "config": config,
    }
    _write(out_path + ".manifest.json", json.dumps(manifest, indent=2))


def validate_exponents(alpha=None, alpha_prime=None, p=None, q=None):
    """Up-front exponent checks shared by the subcommands."""
    if alpha is not None and not (1.0 / 3.0 < alpha < 0.5):
        raise ValidationError(f"alpha must lie in (1/3, 1/2), got {alpha}")
    if alpha_prime is not None:
        if alpha is None:
            raise ValidationError("alpha_prime requires alpha")
        if not (0.0 < alpha_prime < alpha):
            raise ValidationError("alpha_prime must lie in (0, alpha)")
    if p is not None and p < 1.0:
        raise ValidationError("p must be >= 1")
    if q is not None:
        if q < 1.0 or (p is not None and q > p):
            raise ValidationError("q must lie in [1, p]")
        if p is not None and 1.0 / p + 1.0 / q <= 1.0:
            raise ValidationError("need 1/p + 1/q > 1")


def _phi_from_spec(spec: dict):
    kind = spec.get("kind", "coordinate")
    if kind == "coordinate":
        index = int(spec.get("index", 0))
        return lambda x: x[:, index]
    if kind == "square":
        return lambda x: np.sum(x**2, axis=1)
    if kind == "cos":
        return lambda x: np.cos(x[:, 0])
    if kind == "gauss":
        scale = float(spec.get("scale", 1.0))
        return lambda x: np.exp(-0.5 * np.sum((x / scale) ** 2, axis=1))
    if kind == "one":
        return lambda x: np.ones(x.shape[0])
    raise ValidationError(f"unknown test function kind '{kind}'")


def _affine_from_spec(spec: dict, m: int):
    A = np.asarray(spec.get("A", np.zeros((m, m))), dtype=float)
    b = np.asarray(spec.get("b", np.zeros(m)), dtype=float)
    return affine_field(A, b)


# ---------------------------------------------------------------------------
# subcommand handlers


def run_lift(args) -> int:
    eta = _load_rough(args.eta)
    lift, _ = sample_joint_lift(eta, args.e, args.seed, args.refine)
    _write(args.out, lift.to_json())
    _manifest(
        args.out,
        "lift",
        {"eta": args.eta, "e": args.e, "refine": args.refine},
        {"seed": args.seed},
    )
    return EXIT_OK


def run_nbeta(args) -> int:
    x = _load_rough(args.path)
    validate_exponents(p=args.p)
    if args.beta <= 0:
        raise ValidationError("beta must be positive")
    res = n_beta_rough(x, args.p, args.beta)
    _write(args.out, res.to_json())
    _manifest(
        args.out,
        "nbeta",
        {"path": args.path, "p": args.p, "beta": args.beta},
        {},
    )
    return EXIT_OK


def run_tails(args) -> int:
    validate_exponents(alpha=args.alpha, alpha_prime=args.alpha_prime, p=args.p)
    if args.beta <= 0:
        raise ValidationError("beta must be positive")
    eta = _load_rough(args.eta)
    fine_t = refine_times(eta.times, args.refine)
    sq = np.sqrt(np.diff(fine_t))[:, None]
    norms = np.empty(args.samples)
    counts = np.empty(args.samples)
    chunk = 512
    from .brownian import derive_rng
    from .paths import pair_dist_matrix

    done = 0
    while done < args.samples:
        size = min(chunk, args.samples - done)
        B = np.zeros((size, fine_t.size, args.e))
        for row in range(size):
            gen = derive_rng(args.seed, done + row)
            np.cumsum(
                gen.standard_normal((fine_t.size - 1, args.e)) * sq,
                axis=0,
                out=B[row, 1:],
            )
        l1, l2 = batch_joint_increments(eta, B, args.refine)
        dists = []
        for row in range(size):
            grid = RoughPathGrid(eta.dim + args.e, eta.times, l1[row], l2[row])
            norms[done + row] = holder_norm(grid, args.alpha_prime)
            dists.append(pair_dist_matrix(grid))
        W = interval_pvar_table(np.stack(dists), args.p)
        counts[done : done + size] = nbeta_from_table(W, args.beta)
        done += size
    fit_norm = fernique_tail_fit(norms)
    fit_count = fernique_tail_fit(counts, r0=max(1.0, float(np.quantile(counts, 0.6))))
    payload = {
        "holder_norm": json.loads(fit_norm.to_json()),
        "n_beta": json.loads(fit_count.to_json()),
    }
    _write(args.out, json.dumps(payload))
    _manifest(
        args.out,
        "tails",
        {
            "eta": args.eta,
            "e": args.e,
            "samples": args.samples,
            "refine": args.refine,
            "alpha": args.alpha,
            "alpha_prime": args.alpha_prime,
            "p": args.p,
            "beta": args.beta,
        },
        {"seed": args.seed},
    )
    return EXIT_OK


def _filter_problem_from_json(spec: dict) -> FilterProblem:
    if spec.get("kind") != "linear_gaussian":
        raise ValidationError("filter models must declare kind 'linear_gaussian'")
    F = np.asarray(spec["F"], dtype=float)
    d_x = F.shape[0]
    f = np.asarray(spec.get("f", np.zeros(d_x)), dtype=float)
    Z = np.atleast_2d(np.asarray(spec["Z"], dtype=float))
    L = np.atleast_2d(np.asarray(spec.get("L", np.zeros((d_x, 0))), dtype=float))
    H = np.atleast_2d(np.asarray(spec["H"], dtype=float))
    d_y = H.shape[0]
    Hy = np.asarray(spec.get("Hy", np.zeros((d_y, d_y))), dtype=float)
    h0 = np.asarray(spec.get("h0", np.zeros(d_y)), dtype=float)
    x0 = np.asarray(spec["x0"], dtype=float)
    G = np.asarray(spec.get("G", np.zeros((d_x, d_y))), dtype=float)
    phi = _phi_from_spec(spec.get("phi", {"kind": "coordinate"}))
    d_b = L.shape[1]

    def l0(x, y):
        return x @ F.T + y @ G.T + f

    def Zfn(x, y):
        return np.broadcast_to(Z, (x.shape[0],) + Z.shape).copy()

    def Lfn(x, y):
        return np.broadcast_to(L, (x.shape[0],) + L.shape).copy()

    def h(x, y):
        return x @ H.T + y @ Hy.T + h0

    return FilterProblem(
        d_x, d_y, d_b, l0, Zfn, Lfn if d_b > 0 else None, h, phi, x0
    )


def run_filter(args) -> int:
    spec = json.loads(Path(args.model).read_text())
    problem = _filter_problem_from_json(spec)
    eta = _load_rough(args.eta)
    cfg = EnsembleConfig(args.paths, args.seed, args.refine)
    res = robust_filter(problem, eta, cfg, n_workers=resolve_workers(None))
    payload = {
        "theta_hat": res.theta_hat,
        "stderr": res.stderr,
        "ess": res.ess,
        "n_paths": res.n_paths,
        "blowup_count": res.blowup_count,
        "weights_summary": res.weights_summary,
    }
    _write(args.out, json.dumps(payload))
    _manifest(
        args.out,
        "filter",
        {"model": args.model, "eta": args.eta, "paths": args.paths, "refine": args.refine},
        {"seed": args.seed},
    )
    return EXIT_OK


def _parse_lattice(text: str):
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except Exception as exc:
        raise ValidationError(f"lattice must be 'x0:x1:n', got '{text}'") from exc


def _rpde_problem_from_json(spec: dict, eta: RoughPathGrid) -> RPDEProblem:
    m = int(spec["m"])
    sigma_mat = np.atleast_2d(np.asarray(spec["sigma"], dtype=float))
    c_mat = np.atleast_2d(np.asarray(spec["c"], dtype=float))
    drift = _affine_from_spec(spec.get("drift", {}), m)
    phi = _phi_from_spec(spec.get("phi", {"kind": "cos"}))

    def sigma(x):
        return np.broadcast_to(sigma_mat, (x.shape[0],) + sigma_mat.shape).copy()

    def c(x):
        return np.broadcast_to(c_mat, (x.shape[0],) + c_mat.shape).copy()

    return RPDEProblem(m, sigma, drift, c, phi, eta)


def run_rpde(args) -> int:
    spec = json.loads(Path(args.problem).read_text())
    eta = _load_rough(args.eta)
    problem = _rpde_problem_from_json(spec, eta)
    lattice = _parse_lattice(args.lattice)
    if problem.m != 1:
        raise ValidationError("the CLI lattice is one-dimensional; use the library for m > 1")
    cfg = EnsembleConfig(args.paths, args.seed, args.refine)
    vg = feynman_kac(problem, args.t, lattice, cfg, n_workers=resolve_workers(None))
    lines = ["x,v,stderr"]
    for x, v, s in zip(lattice, vg.values, vg.stderr):
        lines.append(f"{float(x)!r},{float(v)!r},{float(s)!r}")
    _write(args.out, "\n".join(lines) + "\n")
    _manifest(
        args.out,
        "rpde",
        {
            "problem": args.problem,
            "eta": args.eta,
            "lattice": args.lattice,
            "t": args.t,
            "paths": args.paths,
            "refine": args.refine,
        },
        {"seed": args.seed},
    )
    return EXIT_OK


def run_rsde(args) -> int:
    spec = json.loads(Path(args.problem).read_text())
    eta = _load_rough(args.eta)
    m = int(spec["m"])
    drift = _affine_from_spec(spec.get("drift", {}), m)
    c_cols = [_affine_from_spec(cs, m) for cs in spec.get("c_columns", [])]
    b_cols = [_affine_from_spec(bs, m) for bs in spec.get("b_columns", [])]
    if len(c_cols) != eta.dim:
        raise ValidationError(
            f"problem declares {len(c_cols)} rough columns, driver has {eta.dim}"
        )
    fields = VectorFieldSet(m, drift, c_cols + b_cols)
    s0 = np.asarray(spec["S0"], dtype=float)
    cfg = EnsembleConfig(args.paths, args.seed, args.refine)
    res = solve_rsde_ensemble(
        s0, fields, eta, cfg, store_paths=True, n_workers=resolve_workers(None)
    )
    lines = ["path,t," + ",".join(f"S{i}" for i in range(m))]
    for pidx in range(res.states.shape[0]):
        for j, t in enumerate(res.times):
            vals = ",".join(repr(float(v)) for v in res.states[pidx, j])
            lines.append(f"{pidx},{float(t)!r},{vals}")
    _write(args.out, "\n".join(lines) + "\n")
    _write(args.out + ".summary.json", json.dumps(res.summary()))
    _manifest(
        args.out,
        "rsde",
        {"problem": args.problem, "eta": args.eta, "paths": args.paths, "refine": args.refine},
        {"seed": args.seed},
    )
    return EXIT_OK


def run_convergence(args) -> int:
    """Dyadic refinement study on the linear test problem dS = S d(eta),
    eta the lift of t on [0, 1]; the terminal value converges to e."""

    def col(s):
        return s.copy()

    def jac(s):
        return np.ones((s.shape[0], 1, 1))

    fields = VectorFieldSet(
        1, lambda s: np.zeros_like(s), [col], jacobians=[jac]
    )
    rows = ["level,n_steps,error"]
    errors = []
    for level in range(1, args.levels + 1):
        n = 2 ** (level + 3)
        times = np.linspace(0.0, 1.0, n + 1)
        from .paths import BVGridPath

        lift = signature_pl(BVGridPath(times, times.copy()))
        sol = solve_rde(np.array([1.0]), fields, lift, time_channel=None)
        err = abs(float(sol.states[-1, 0]) - float(np.e))
        errors.append(err)
        rows.append(f"{level},{n},{err!r}")
    if any(b >= a for a, b in zip(errors, errors[1:])):
        raise RoughSDEError("convergence study produced a non-monotone error column")
    _write(args.out, "\n".join(rows) + "\n")
    _manifest(args.out, "convergence", {"levels": args.levels}, {})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="roughsde",
        description="Joint rough-path/Brownian lifts, mixed differential equations, "
        "greedy counts, tail certificates, robust filtering and rough Feynman-Kac.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="joint lift of a rough path and a Brownian sample")
    p.add_argument("--eta", required=True, help="rough path JSON or CSV")
    p.add_argument("--e", type=int, default=1, help="Brownian dimension")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--refine", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_lift)

    p = sub.add_parser("nbeta", help="greedy partition count of a rough path")
    p.add_argument("--path", required=True, help="rough path JSON or CSV")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_nbeta)

    p = sub.add_parser("tails", help="Gaussian-tail certificates for lift statistics")
    p.add_argument("--eta", required=True)
    p.add_argument("--e", type=int, default=2)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--refine", type=int, default=8)
    p.add_argument("--alpha", type=float, default=0.45)
    p.add_argument("--alpha-prime", dest="alpha_prime", type=float, default=0.4)
    p.add_argument("--p", type=float, default=2.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_tails)

    p = sub.add_parser("filter", help="robust nonlinear filter (linear-Gaussian model JSON)")
    p.add_argument("--model", required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--refine", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_filter)

    p = sub.add_parser("rpde", help="Feynman-Kac value surface on a lattice")
    p.add_argument("--problem", required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--lattice", required=True, help="x0:x1:n")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--refine", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_rpde)

    p = sub.add_parser("rsde", help="Monte Carlo ensemble of a mixed equation")
    p.add_argument("--problem", required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--refine", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_rsde)

    p = sub.add_parser("convergence", help="dyadic error study on the linear test problem")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_convergence)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValidationError,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BlowUpError as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except DegenerateEnsembleError as exc:
        print(f"degenerate ensemble: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"validation error: malformed JSON input ({exc})", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
