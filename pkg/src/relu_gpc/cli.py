"""Command-line driver: index sets, PDE coefficients, assembly, verification and rate sweeps.

Every artifact carries the full configuration and a short hash of it.  The
default output directory is ``$RELU_GPC_OUT`` (else the working directory).
Exit codes: 0 ok, 2 invalid configuration, 3 budget abort, 4 numerical guard.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .assembler import TAYLOR, DeltaPolicy, assemble, make_plan
from .diffusion import (AFFINE, LOGNORMAL, DiffusionProblem, gpc_coefficient, h1_coordinates,
                        load_coefficients, problem_from_meta, save_coefficients, solve_batch,
                        taylor_coefficients_recursive)
from .errors import (BudgetError, ConstructionError, ConvergenceError, DomainError, NumericalGuardError,
                     RangeError)
from .multiindex import RhoRule, WeightSequence, build_index_set
from .orthopoly import HERMITE, JACOBI, hermite_coeffs, jacobi_coeffs
from .sweeps import HermiteSyntheticSweep, TaylorAffineSweep
from .synthetic import telescoping_expansion
from .verify import MonteCarlo, Quadrature, error_split, rate_sweep, xi_for_budget

log = logging.getLogger("relu_gpc")

OUT_ENV = "RELU_GPC_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_GUARD = 0, 2, 3, 4
MODE_OF_WEIGHTS = {"lognormal": HERMITE, "jacobi": JACOBI, "taylor": TAYLOR}
# options that do not change any result
_UNHASHED = ("out", "threads", "plot", "verbose")


class ConfigError(Exception):
    """Invalid combination of options."""


def config_of(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def config_hash(config: dict) -> str:
    core = {k: v for k, v in config.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]


def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, default=_jsonable))
    log.info("wrote %s", path)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from exc
    return a, b


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def weights_from(args) -> WeightSequence:
    return WeightSequence(args.model, RhoRule.parse(args.rho), args.q, eta=args.eta,
                          jacobi_ab=tuple(args.jacobi_ab))


def mode_of(args) -> str:
    return getattr(args, "mode", None) or MODE_OF_WEIGHTS[args.model]


def plan_from(args, iset, weights):
    mode = mode_of(args)
    if mode == HERMITE and args.theta is not None and args.theta < 4.0 / args.q - 1e-12:
        raise ConfigError(f"constraint theta >= 4/q violated: theta={args.theta}, 4/q={4.0 / args.q:g}")
    return make_plan(iset, mode, weights=weights, theta=args.theta, omega=args.omega,
                     delta_policy=DeltaPolicy.parse(args.delta), jacobi_ab=tuple(args.jacobi_ab),
                     dim_cap=args.dim_cap, deg_cap=args.deg_cap)


def _family(mode: str, args, degree: int):
    if mode == HERMITE:
        return hermite_coeffs(max(degree, 1))
    if mode == JACOBI:
        return jacobi_coeffs(*args.jacobi_ab, max(degree, 1))
    return None


def _problem(args) -> DiffusionProblem:
    return DiffusionProblem(args.mesh_size, args.pde, args.dims, args.psi_scale, args.psi_decay, args.abar)


def _synthetic(args, weights):
    xi_ref = args.xi_ref or 1.5 * args.xi
    if xi_ref < args.xi:
        raise ConfigError("constraint xi-ref >= xi violated")
    ref = build_index_set(weights, xi_ref)
    return telescoping_expansion(weights, xi_ref, _family(mode_of(args), args, ref.m1), args.eps)


def cmd_index_set(args, config: dict, digest: str) -> dict:
    iset = build_index_set(weights_from(args), args.xi)
    payload = {"configHash": digest, "config": config, "cardinality": iset.cardinality,
               "m": iset.m, "m1": iset.m1, **iset.to_dict()}
    _write_json(_out_dir(args) / f"index-set-{digest}.json", payload)
    return payload


def cmd_coeffs(args, config: dict, digest: str) -> dict:
    weights = weights_from(args)
    iset = build_index_set(weights, args.xi)
    prob = _problem(args)
    if iset.m > prob.active_dims:
        raise ConfigError(f"index set uses {iset.m} dimensions but --dims is {prob.active_dims}")
    if args.model == "taylor":
        if args.pde != AFFINE:
            raise ConfigError("Taylor coefficients need --pde affine")
        coeffs = taylor_coefficients_recursive(prob, list(iset))
    else:
        if args.model == "lognormal" and args.pde != LOGNORMAL:
            raise ConfigError("Hermite coefficients need --pde lognormal")
        if args.model == "jacobi" and args.pde != AFFINE:
            raise ConfigError("Jacobi coefficients need --pde affine")
        fam = _family(MODE_OF_WEIGHTS[args.model], args, iset.m1)
        nodes = max(args.nodes, iset.m1 + 1)
        coeffs = {s: gpc_coefficient(prob, s, fam, nodes, quad_dims=prob.active_dims) for s in iset}
    path = _out_dir(args) / f"coeffs-{digest}.json"
    save_coefficients(path, prob, coeffs, {"configHash": digest, "config": config})
    return {"configHash": digest, "path": str(path), "cardinality": iset.cardinality}


def _load_archive(path: str, args):
    meta, coeffs = load_coefficients(path)
    src = meta.get("config", {})
    for key in ("model", "rho", "q", "xi", "eta", "jacobi_ab"):
        if key in src and src[key] != getattr(args, key):
            log.info("using %s=%r from the archive", key, src[key])
            setattr(args, key, src[key] if key != "jacobi_ab" else tuple(src[key]))
    return problem_from_meta(meta), coeffs


def _build(args):
    """Index set, plan, coefficients and (for archives) the PDE problem."""
    prob = None
    if args.coeffs:
        prob, coeffs = _load_archive(args.coeffs, args)
    weights = weights_from(args)
    iset = build_index_set(weights, args.xi)
    plan = plan_from(args, iset, weights)
    if prob is None:
        truth = _synthetic(args, weights)
        return plan, truth.coeffs_on(iset), truth, None
    return plan, coeffs, None, prob


def cmd_assemble(args, config: dict, digest: str) -> dict:
    plan, coeffs, _, _ = _build(args)
    sur = assemble(plan, coeffs, budget=args.budget, threads=args.threads)
    out = _out_dir(args)
    manifest = {**sur.manifest, "configHash": digest, "config": config}
    _write_json(out / f"manifest-{digest}.json", manifest)
    if args.save_net:
        (out / f"network-{digest}.json").write_text(sur.net.to_json())
    return {k: manifest[k] for k in ("configHash", "mode", "cardinality", "W", "L", "m", "m1")}


def cmd_verify(args, config: dict, digest: str) -> dict:
    plan, coeffs, truth, prob = _build(args)
    if prob is not None:
        # H^1 coordinates are linear in the dofs, so Euclidean errors become H^1 seminorms
        coeffs = {s: h1_coordinates(prob, v) for s, v in coeffs.items()}
        dims = prob.active_dims

        def reference(y):
            return h1_coordinates(prob, solve_batch(prob, y[:, :dims]))
    else:
        reference, dims = truth, truth.dim
    sur = assemble(plan, coeffs, budget=args.budget, threads=args.threads)
    method = Quadrature(args.nodes, tuple(args.jacobi_ab)) if args.quadrature else \
        MonteCarlo(args.samples, args.seed, tuple(args.jacobi_ab))
    report = error_split(sur, reference, method, dim=dims)
    payload = {"configHash": digest, "config": config, "W": sur.manifest["W"], "L": sur.manifest["L"],
               "cardinality": sur.manifest["cardinality"], "error": report.to_dict()}
    if truth is not None:
        payload["exactTruncation"] = truth.truncation_error(args.xi)
    _write_json(_out_dir(args) / f"verify-{digest}.json", payload)
    return payload


def _sweep_builder(args):
    if args.mode == HERMITE:
        scale = args.rho_scale if args.rho_scale is not None else (8.0 if args.q <= 1 else 3.0)
        rate = args.rho_rate if args.rho_rate is not None else (1.5 if args.q <= 1 else 1.0)
        xi_ref = args.xi_ref or 1.5 * xi_for_budget(max(args.ns))
        return HermiteSyntheticSweep(args.q, scale, rate, xi_ref, eps=args.eps, samples=args.samples,
                                     seed=args.seed, delta_policy=DeltaPolicy.parse(args.delta),
                                     budget=args.budget, threads=args.threads), -1.0 / args.q
    if args.mode == TAYLOR:
        scale = args.rho_scale if args.rho_scale is not None else 2.0
        return TaylorAffineSweep(args.q, scale, args.dims, args.mesh_size, args.psi_scale, args.psi_decay,
                                 args.grid, args.threads), -(1.0 / args.q - 0.5)
    raise ConfigError(f"sweeps support --mode hermite or taylor, not {args.mode!r}")


def cmd_sweep(args, config: dict, digest: str) -> dict:
    builder, target = _sweep_builder(args)
    fit = rate_sweep(builder, args.ns, target, args.tolerance)
    out = _out_dir(args)
    fit.write_csv(out / f"sweep-{digest}.csv", digest)
    depth_ratios = [b["L"] / a["L"] for a, b in zip(fit.rows, fit.rows[1:])]
    payload = {"configHash": digest, "config": config, "slope": fit.slope, "r2": fit.r2, "target": target,
               "withinTolerance": fit.within, "sizeWithinBudget": all(r["W"] <= r["n"] for r in fit.rows),
               "maxDepthRatio": max(depth_ratios), "rows": fit.rows}
    _write_json(out / f"sweep-{digest}.json", payload)
    if args.plot:
        _plot(fit, out / f"sweep-{digest}.svg", digest)
    return {k: payload[k] for k in ("configHash", "slope", "r2", "target", "withinTolerance",
                                    "sizeWithinBudget", "maxDepthRatio")}


def _plot(fit, path: Path, digest: str) -> None:
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("--plot needs matplotlib (pip install relu_gpc[plot])") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = np.array([r["n"] / math.log(r["n"]) for r in fit.rows])
    err = np.array([r["error"] for r in fit.rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(x, err, "o-", label=f"measured, slope {fit.slope:.3f}")
    ax.loglog(x, err[0] * (x / x[0]) ** fit.target, "--", label=f"reference slope {fit.target:.3f}")
    ax.set_xlabel("n / log n")
    ax.set_ylabel("error")
    ax.set_title(f"config {digest}", fontsize=8)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Description": f"config {digest}"})
    plt.close(fig)


def cmd_replay(args, config: dict, digest: str) -> dict:
    recorded = json.loads(Path(args.artifact).read_text())
    if "config" not in recorded:
        raise ConfigError(f"{args.artifact} holds no configuration")
    cfg = dict(recorded["config"])
    if args.out:
        cfg["out"] = args.out
    ns = argparse.Namespace(**cfg)
    for key in ("jacobi_ab",):
        if hasattr(ns, key):
            setattr(ns, key, tuple(getattr(ns, key)))
    handler = COMMANDS[cfg["command"]]
    new_cfg = config_of(ns)
    new_digest = config_hash(new_cfg)
    if "configHash" in recorded and recorded["configHash"] != new_digest:
        log.warning("recorded hash %s differs from replayed %s", recorded["configHash"], new_digest)
    return handler(ns, new_cfg, new_digest)


COMMANDS = {"index-set": cmd_index_set, "coeffs": cmd_coeffs, "assemble": cmd_assemble,
            "verify": cmd_verify, "sweep": cmd_sweep, "replay": cmd_replay}


def _add_weights(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=sorted(MODE_OF_WEIGHTS), default="lognormal",
                   help="weight family; also selects the expansion (Hermite, Jacobi or Taylor)")
    p.add_argument("--rho", default="pow2", help="pow<b>, power:c:r, geometric:c:b or list:r1,r2,...")
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=8.0)
    p.add_argument("--eta", type=int, default=1)
    p.add_argument("--jacobi-ab", type=_pair, default=(0.0, 0.0), metavar="A,B")


def _add_pde(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pde", choices=(LOGNORMAL, AFFINE), default=LOGNORMAL)
    p.add_argument("--dims", type=int, default=1, help="active parameter dimensions")
    p.add_argument("--mesh-size", type=int, default=100)
    p.add_argument("--psi-scale", type=float, default=1.0)
    p.add_argument("--psi-decay", type=float, default=2.0)
    p.add_argument("--abar", type=float, default=1.0)


def _add_assembly(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=(HERMITE, JACOBI, TAYLOR),
                   help="expansion to emulate (default: the one matching --model)")
    p.add_argument("--coeffs", help="coefficient archive; without it a synthetic expansion is used")
    p.add_argument("--xi-ref", type=float, help="reference threshold of the synthetic expansion")
    p.add_argument("--eps", type=float, default=0.0, help="extra decay of the synthetic coefficients")
    p.add_argument("--theta", type=float)
    p.add_argument("--omega", type=int)
    p.add_argument("--delta", default="floor", help="paper, floor or floor:<value>")
    p.add_argument("--budget", type=int, help="abort when the predicted size exceeds this")
    p.add_argument("--dim-cap", type=int, default=40_000, help="dimensions summed for the tail constant")
    p.add_argument("--deg-cap", type=int, default=100, help="degrees summed for the tail constant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relu-gpc", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index-set", help="enumerate the index set for a threshold")
    _add_weights(p)

    p = sub.add_parser("coeffs", help="compute PDE expansion coefficients into an archive")
    _add_weights(p)
    _add_pde(p)
    p.add_argument("--nodes", type=int, default=12, help="Gauss nodes per dimension")

    p = sub.add_parser("assemble", help="build the surrogate network and write its manifest")
    _add_weights(p)
    _add_assembly(p)
    p.add_argument("--save-net", action="store_true", help="also write the network as JSON")

    p = sub.add_parser("verify", help="measure the surrogate error and its four-part split")
    _add_weights(p)
    _add_assembly(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--quadrature", action="store_true", help="tensor Gauss rule instead of sampling")
    p.add_argument("--nodes", type=int, default=20)

    p = sub.add_parser("sweep", help="error against n / log n over a list of budgets")
    p.add_argument("--mode", choices=(HERMITE, TAYLOR), default=HERMITE)
    p.add_argument("--ns", type=_int_list, default=[2**k for k in range(8, 14)])
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--rho-scale", type=float)
    p.add_argument("--rho-rate", type=float)
    p.add_argument("--xi-ref", type=float)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--delta", default="floor:1e-12")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--budget", type=int)
    p.add_argument("--tolerance", type=float, default=0.3)
    p.add_argument("--dims", type=int, default=1)
    p.add_argument("--mesh-size", type=int, default=64)
    p.add_argument("--psi-scale", type=float, default=0.1)
    p.add_argument("--psi-decay", type=float, default=2.0)
    p.add_argument("--grid", type=int, default=1001)
    p.add_argument("--plot", action="store_true", help="also write an SVG plot (needs matplotlib)")

    p = sub.add_parser("replay", help="rerun the configuration recorded in an artifact")
    p.add_argument("artifact")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    config = config_of(args)
    digest = config_hash(config)
    try:
        result = COMMANDS[args.command](args, config, digest)
    except (ConfigError, ConstructionError, DomainError) as exc:
        print(f"relu-gpc: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"relu-gpc: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalGuardError, ConvergenceError, RangeError) as exc:
        print(f"relu-gpc: numerical guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    summary = {k: v for k, v in result.items() if k not in ("config", "indices", "rows")}
    print(json.dumps(summary, indent=1, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
