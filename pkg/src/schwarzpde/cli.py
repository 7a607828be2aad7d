"""Command-line surface: shape/data generation, direct and iterative solves,
verification suites, parameter sweeps, and error computation.

Every command validates its inputs and fails with a single-line
``error: <kind>: <message>`` on stderr and a nonzero exit code.  Runs echo
their flags into the emitted JSON so results are reproducible from the output
alone.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .datagen import generate_dataset
from .errors import SchwarzPdeError
from .fem import (
    Equation,
    ProblemSpec,
    l2_relative_error,
    solve_direct,
    spec_from_dict,
)
from .geometry import mesh_from_dict, random_simple_polygon, triangulate
from .schwarz import (
    ExactSolver,
    PerturbedSolver,
    ProvidedInit,
    SniConfig,
    SurrogateSolver,
    ZeroInterior,
    sni_run,
    sni_run_spacetime,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_ERROR = 2


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SNI_THREADS")
    return int(env) if env else 1


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_json(path: str, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def _parse_local(text: str):
    if text == "exact":
        return ExactSolver()
    if text.startswith("perturbed:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("expected perturbed:<c>:<seed>")
        return PerturbedSolver(c=float(parts[1]), rng_seed=int(parts[2]))
    if text.startswith("surrogate:"):
        return SurrogateSolver(weights_path=text.split(":", 1)[1])
    raise ValueError(f"unknown local solver {text!r}")


def _parse_init(text: str):
    if text == "zero":
        return ZeroInterior()
    if text.startswith("file:"):
        payload = _load_json(text.split(":", 1)[1])
        return ProvidedInit(np.asarray(payload["values"], dtype=float))
    raise ValueError(f"unknown init {text!r} (use zero or file:<path>)")


def _echo_flags(args) -> dict:
    return {
        k: v
        for k, v in vars(args).items()
        if k != "func" and v is not None
    }


def cmd_gen_shape(args) -> int:
    poly = random_simple_polygon(args.n_min, args.n_max, rng_seed=args.seed)
    mesh = triangulate(poly, args.edge_length)
    payload = mesh.to_dict()
    payload["polygon"] = poly.to_dict()["vertices"]
    payload["flags"] = _echo_flags(args)
    _write_json(args.out, payload)
    print(f"wrote mesh with {mesh.n_vertices} vertices / {mesh.n_triangles} triangles to {args.out}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    manifest = generate_dataset(
        Equation(args.equation),
        n_shapes=args.shapes,
        samples_per_shape=args.per_shape,
        mesh_resolution=args.resolution,
        rng_seed=args.seed,
        out_dir=args.out_dir,
    )
    print(
        f"wrote {manifest['count']} records ({len(manifest['skipped'])} skipped) "
        f"to {args.out_dir}; sha256 {manifest['sha256'][:16]}..."
    )
    return EXIT_OK


def _diag_csv(diag: dict) -> str:
    lines = ["iteration,update_norm,error_vs_oracle"]
    errors = diag.get("error_history", [])
    for i, norm in enumerate(diag.get("update_norms", [])):
        err = errors[i] if i < len(errors) else ""
        lines.append(f"{i + 1},{norm!r},{err!r}" if err != "" else f"{i + 1},{norm!r},")
    return "\n".join(lines) + "\n"


def _emit_diagnostics(args, diag: dict) -> None:
    diag = dict(diag)
    diag["flags"] = _echo_flags(args)
    base = Path(args.out)
    if args.format == "csv":
        path = base.with_suffix(".diag.csv")
        path.write_text(_diag_csv(diag))
    else:
        path = base.with_suffix(".diag.json")
        _write_json(str(path), diag)
    print(f"diagnostics -> {path}")


def cmd_solve(args) -> int:
    mesh = mesh_from_dict(_load_json(args.mesh))
    spec = spec_from_dict(_load_json(args.problem))
    if args.method == "direct":
        t0 = time.perf_counter()
        u = solve_direct(mesh, spec)
        wall = time.perf_counter() - t0
        payload = {"values": u.tolist(), "mesh_ref": args.mesh, "flags": _echo_flags(args)}
        if spec.equation == Equation.HEAT:
            payload["steps"] = spec.n_steps
        _write_json(args.out, payload)
        print(f"direct solve: {mesh.n_vertices} vertices in {wall:.3f}s -> {args.out}")
        return EXIT_OK

    config = SniConfig(
        k=args.k,
        depth=args.depth,
        tau=args.tau,
        outer_tol=args.tol,
        max_outer=args.max_iter,
        local_solver=_parse_local(args.local),
        init=_parse_init(args.init),
        partition_seed=args.partition_seed,
        n_threads=_threads(args),
    )
    oracle = None
    if args.oracle:
        oracle = np.asarray(_load_json(args.oracle)["values"], dtype=float)
    u, diag = sni_run(config, mesh, spec, oracle=oracle)
    payload = {"values": u.tolist(), "mesh_ref": args.mesh, "flags": _echo_flags(args)}
    _write_json(args.out, payload)
    _emit_diagnostics(args, diag)
    print(
        f"iterations {diag['iterations']}, converged {diag['converged']}, "
        f"overlap factor {diag['overlap_factor']}"
    )
    return EXIT_OK if diag["converged"] else EXIT_NOT_CONVERGED


def cmd_solve_heat(args) -> int:
    mesh = mesh_from_dict(_load_json(args.mesh))
    spec = spec_from_dict(_load_json(args.problem))
    if spec.equation != Equation.HEAT:
        raise SchwarzPdeError("solve-heat expects a heat problem file")
    if args.method == "direct":
        u = solve_direct(mesh, spec)
        payload = {
            "values": u.tolist(),
            "mesh_ref": args.mesh,
            "steps": spec.n_steps,
            "flags": _echo_flags(args),
        }
        _write_json(args.out, payload)
        print(f"direct rollout of {spec.n_steps} steps -> {args.out}")
        return EXIT_OK
    config = SniConfig(
        k=args.k_spatial * args.k_temporal,
        depth=args.depth,
        tau=args.tau,
        outer_tol=args.tol,
        max_outer=args.max_iter,
        local_solver=_parse_local(args.local),
        init=_parse_init(args.init),
        partition_seed=args.partition_seed,
        n_threads=_threads(args),
    )
    u, diag = sni_run_spacetime(
        config, mesh, spec, args.k_spatial, args.k_temporal, args.delta_t_overlap
    )
    payload = {
        "values": u.tolist(),
        "mesh_ref": args.mesh,
        "steps": spec.n_steps,
        "flags": _echo_flags(args),
    }
    _write_json(args.out, payload)
    _emit_diagnostics(args, diag)
    print(f"iterations {diag['iterations']}, converged {diag['converged']}")
    return EXIT_OK if diag["converged"] else EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    results = verify_mod.run_suite(args.suite, progress=None)
    for r in results:
        print(r.line())
    if args.out:
        _write_json(
            args.out,
            {
                "suite": args.suite,
                "results": [
                    {"criterion": r.cid, "name": r.name, "passed": r.passed, "detail": r.detail}
                    for r in results
                ],
                "all_passed": all(r.passed for r in results),
            },
        )
    return EXIT_OK if all(r.passed for r in results) else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    mesh = mesh_from_dict(_load_json(args.mesh))
    spec = spec_from_dict(_load_json(args.problem))
    truth = solve_direct(mesh, spec)
    values = [float(v) for v in args.values.split(",")]
    rows = ["param,value,repeat,iterations,final_error,wall_time"]
    for value in values:
        for rep in range(args.repeat):
            k, depth, tau = args.k, args.depth, args.tau
            if args.param == "k":
                k = int(value)
                tau = 0.8 / k if args.tau is None else args.tau
            elif args.param == "d":
                depth = int(value)
            elif args.param == "tau":
                tau = value
            if tau is None:
                tau = 0.8 / k
            config = SniConfig(
                k=k, depth=depth, tau=tau, outer_tol=args.tol, max_outer=args.max_iter,
                partition_seed=args.partition_seed + rep, n_threads=_threads(args),
            )
            t0 = time.perf_counter()
            u, diag = sni_run(config, mesh, spec, oracle=truth, stop_error=args.stop_error)
            wall = time.perf_counter() - t0
            err = l2_relative_error(u, truth)
            rows.append(
                f"{args.param},{value!r},{rep},{diag['iterations']},{err!r},{wall!r}"
            )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {len(rows) - 1} sweep rows to {args.out}")
    return EXIT_OK


def cmd_error(args) -> int:
    pred = np.asarray(_load_json(args.pred)["values"], dtype=float)
    truth = np.asarray(_load_json(args.truth)["values"], dtype=float)
    err = l2_relative_error(pred, truth)
    print(f"{err!r}")
    print(f"{100 * err:.2f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="schwarzpde",
        description="overlapping domain-decomposition PDE toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-shape", help="random simple polygon + mesh JSON")
    g.add_argument("--n-min", type=int, default=3)
    g.add_argument("--n-max", type=int, default=12)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--edge-length", type=float, default=0.05)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_shape)

    d = sub.add_parser("gen-data", help="training dataset synthesis")
    d.add_argument("--equation", required=True,
                   choices=[e.value for e in Equation])
    d.add_argument("--shapes", type=int, required=True)
    d.add_argument("--per-shape", type=int, required=True)
    d.add_argument("--resolution", type=float, default=0.05)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--threads", type=int)
    d.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("solve", help="direct or iterative stationary solve")
    s.add_argument("--method", required=True, choices=["direct", "sni"])
    s.add_argument("--mesh", required=True)
    s.add_argument("--problem", required=True)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--tau", type=float, default=0.2)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=2000)
    s.add_argument("--local", default="exact",
                   help="exact | perturbed:<c>:<seed> | surrogate:<weights>")
    s.add_argument("--init", default="zero", help="zero | file:<path>")
    s.add_argument("--partition-seed", type=int, default=0)
    s.add_argument("--oracle", help="solution JSON to track the error against")
    s.add_argument("--format", default="json", choices=["json", "csv"])
    s.add_argument("--threads", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    h = sub.add_parser("solve-heat", help="direct rollout or space-time iterative solve")
    h.add_argument("--method", required=True, choices=["direct", "sni"])
    h.add_argument("--mesh", required=True)
    h.add_argument("--problem", required=True)
    h.add_argument("--k-spatial", type=int, default=4)
    h.add_argument("--k-temporal", type=int, default=4)
    h.add_argument("--delta-t-overlap", type=int, default=1)
    h.add_argument("--depth", type=int, default=2)
    h.add_argument("--tau", type=float, default=0.05)
    h.add_argument("--tol", type=float, default=None)
    h.add_argument("--max-iter", type=int, default=4000)
    h.add_argument("--local", default="exact")
    h.add_argument("--init", default="zero")
    h.add_argument("--partition-seed", type=int, default=0)
    h.add_argument("--format", default="json", choices=["json", "csv"])
    h.add_argument("--threads", type=int)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_solve_heat)

    v = sub.add_parser("verify", help="run acceptance suites")
    v.add_argument("--suite", required=True, choices=sorted(verify_mod.SUITES))
    v.add_argument("--out", help="write a JSON report here")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="hyperparameter sweep to CSV")
    w.add_argument("--param", required=True, choices=["k", "d", "tau"])
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--repeat", type=int, default=1)
    w.add_argument("--mesh", required=True)
    w.add_argument("--problem", required=True)
    w.add_argument("--k", type=int, default=20)
    w.add_argument("--depth", type=int, default=2)
    w.add_argument("--tau", type=float, default=None)
    w.add_argument("--tol", type=float, default=1e-14)
    w.add_argument("--max-iter", type=int, default=9000)
    w.add_argument("--stop-error", type=float, default=1e-6)
    w.add_argument("--partition-seed", type=int, default=0)
    w.add_argument("--threads", type=int)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    e = sub.add_parser("error", help="relative l2 error between two solution files")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.set_defaults(func=cmd_error)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchwarzPdeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
