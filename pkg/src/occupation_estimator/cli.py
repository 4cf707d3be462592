"""Command-line entry point ``occupation-estimator``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__, geometry
from .config import load_config
from .densities import make_density
from .diffusion import InitialMode, SdeConfig, make_generator, simulate
from .estimator import bandwidth_rule, default_dt, smooth
from .exceptions import OccupationError
from .experiments import (
    PRESETS,
    preset,
    run_kl_check,
    run_minimax_diagnostic,
    run_rate_experiment,
    write_json,
    write_rows_csv,
)
from .io import load_measure, load_path, save_estimate, save_path
from .kernels import NormalizedKernel, eta, make_profile, moment_integral, vanishing_moments
from .models.estimate import EstimatorSettings
from .models.experiment import ExperimentConfig, KLCheckConfig, MinimaxConfig
from .models.measure import SolverKind
from .spectral import FourierBasis, peyre_bound
from .specs import parse_manifold
from .transport import w1_exact, w2_entropic, w2_exact

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _cmd_simulate(args: argparse.Namespace) -> int:
    manifold = parse_manifold(args.manifold)
    generator = make_generator(manifold, args.density, args.generator)
    cfg = SdeConfig(
        generator=generator,
        horizon=args.T,
        dt=args.dt,
        initial=InitialMode(args.initial),
        initial_point=tuple(_floats(args.initial_point)) if args.initial_point else None,
        seed=args.seed,
        record_every=args.record_every,
    )
    path = simulate(cfg)
    save_path(path, args.output)
    print(f"{path.n_points} points over T={path.horizon:g} written to {args.output}")
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    path = load_path(args.path)
    manifold = path.manifold
    profile = make_profile(args.kernel, manifold.intrinsic_dim)
    h = args.h
    if h is None:
        h = bandwidth_rule(path.horizon, manifold.intrinsic_dim, args.sobolev_order, args.bandwidth_constant)
    if path.dt > default_dt(h):
        logger.warning("Path step %g is coarse for h=%g (suggested dt <= %g)", path.dt, h, default_dt(h))
    nk = NormalizedKernel(manifold, profile, h, args.distance_mode)
    grid = geometry.reference_grid(manifold, args.grid)
    settings = EstimatorSettings(margin=args.margin, method=args.method)
    estimate = smooth(path, nk, grid, settings)
    print(f"h={h:g} positivity_ok={estimate.positivity_ok} mass={estimate.mass:.12f}")
    if args.output:
        save_estimate(estimate, args.output)
    return 0


def _cmd_w2(args: argparse.Namespace) -> int:
    first = load_measure(args.a)
    second = load_measure(args.b, first.manifold)
    if args.w1:
        result = w1_exact(first, second, args.cost_mode)
    elif args.solver == SolverKind.EXACT.value:
        result = w2_exact(first, second, args.cost_mode)
    else:
        result = w2_entropic(first, second, args.epsilon)
    print(result.model_dump_json(exclude={"plan"}, indent=2))
    return 0


def _cmd_peyre(args: argparse.Namespace) -> int:
    manifold = parse_manifold(args.manifold)
    basis = FourierBasis(manifold, args.grid)
    p1, p2 = make_density(manifold, args.p1), make_density(manifold, args.p2)
    p_min = args.p_min if args.p_min is not None else p1.p_min
    bound = peyre_bound(p1, p2, p_min, basis.grid, basis)
    print(f"peyre_bound={bound:.10g} p_min={p_min:g}")
    if args.breakdown:
        modes = basis.breakdown(basis.values(p1) - basis.values(p2), top=args.top)
        write_rows_csv(modes, args.breakdown)
    return 0


def _cmd_rate(args: argparse.Namespace) -> int:
    overrides: Dict[str, Optional[str]] = {}
    if args.output:
        overrides["output"] = args.output
    if args.workers:
        overrides["workers"] = str(args.workers)
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    if args.preset:
        base = preset(args.preset)
        fields = {k: v for k, v in overrides.items() if v is not None}
        cfg = ExperimentConfig(**{**base.model_dump(), **fields})
    else:
        cfg = load_config(args.config, ExperimentConfig, overrides)
    report = run_rate_experiment(cfg)
    print(
        f"slope={report.slope} stderr={report.slope_stderr} "
        f"theory={report.theoretical_slope:.4f} reliable={report.fit_reliable}"
    )
    failed = sum(1 for row in report.rows if row.error)
    if failed:
        print(f"{failed} replica(s) failed; see the error column", file=sys.stderr)
    return 0


def _cmd_kl_check(args: argparse.Namespace) -> int:
    fields: Dict[str, Any] = {
        "manifold": args.manifold,
        "p": args.p,
        "q": args.q,
        "horizon": args.T,
        "dt": args.dt,
        "replicas": args.replicas,
        "master_seed": args.seed,
        "adjudicate_with": args.adjudicate_with,
        "workers": args.workers,
    }
    report = run_kl_check(KLCheckConfig(**{k: v for k, v in fields.items() if v is not None}))
    print(report.model_dump_json(exclude={"config"}, indent=2))
    if args.output:
        write_json(report, args.output)
    return 0


def _cmd_minimax(args: argparse.Namespace) -> int:
    fields: Dict[str, Any] = {
        "manifold": args.manifold,
        "epsilons": tuple(_floats(args.epsilons)) if args.epsilons else None,
        "amplitude_fractions": tuple(_floats(args.fractions)) if args.fractions else None,
        "horizon": args.T,
        "pairs": args.pairs,
        "master_seed": args.seed,
    }
    report = run_minimax_diagnostic(MinimaxConfig(**{k: v for k, v in fields.items() if v is not None}))
    print(
        f"w1 v-exponent={report.w1_amplitude_exponent} "
        f"kl v-exponent={report.kl_amplitude_exponent} "
        f"kl eps-exponent={report.kl_epsilon_exponent} "
        f"(theory {report.theoretical_kl_epsilon_exponent:g})"
    )
    if args.output:
        write_rows_csv(report.rows, args.output)
        write_json(report, Path(args.output).with_suffix(".json"))
    return 0


def _cmd_kernel_check(args: argparse.Namespace) -> int:
    profile = make_profile(args.kernel, args.dimension)
    mass = moment_integral(profile, (0,) * args.dimension)
    worst = max((abs(moment_integral(profile, a)) for a in vanishing_moments(profile)), default=0.0)
    print(
        f"{profile.spec} d={args.dimension}: integral={mass:.12f} "
        f"max|moment|={worst:.3e} nonneg={profile.nonneg} lipschitz={profile.lipschitz:g}"
    )
    if args.manifold:
        manifold = parse_manifold(args.manifold)
        for h in _floats(args.h):
            normalizer = eta(manifold, profile, h, args.distance_mode)
            print(f"eta(h={h:g}) = {normalizer.value:.10g} ({normalizer.method}), h^-d eta = {normalizer.scaled:.10g}")
    return 0 if abs(mass - 1.0) < 1e-8 and worst < 1e-8 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occupation-estimator",
        description="Estimate stationary measures of diffusions from occupation measures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a diffusion path")
    sim.add_argument("--manifold", default="circle:c=1")
    sim.add_argument("--density", default="uniform")
    sim.add_argument("--generator", default="langevin")
    sim.add_argument("--T", type=float, required=True)
    sim.add_argument("--dt", type=float, default=1e-3)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--initial", default="invariant", choices=[m.value for m in InitialMode])
    sim.add_argument("--initial-point", default=None, help="comma-separated intrinsic coordinates")
    sim.add_argument("--record-every", type=int, default=1)
    sim.add_argument("--output", required=True, help=".csv or .npz")
    sim.set_defaults(handler=_cmd_simulate)

    est = sub.add_parser("estimate", help="smooth a recorded path")
    est.add_argument("--path", required=True)
    est.add_argument("--kernel", default="poly:r=4")
    est.add_argument("--h", type=float, default=None)
    est.add_argument("--sobolev-order", type=int, default=2)
    est.add_argument("--bandwidth-constant", type=float, default=1.0)
    est.add_argument("--distance-mode", default="ambient", choices=["ambient", "geodesic"])
    est.add_argument("--grid", type=int, default=None)
    est.add_argument("--margin", default="lipschitz", choices=["lipschitz", "grid"])
    est.add_argument("--method", default="auto", choices=["auto", "direct", "binned"])
    est.add_argument("--output", default=None, help="estimate JSON")
    est.set_defaults(handler=_cmd_estimate)

    w2 = sub.add_parser("w2", help="Wasserstein distance between two stored measures")
    w2.add_argument("--a", required=True)
    w2.add_argument("--b", required=True)
    w2.add_argument("--solver", default="exact", choices=[k.value for k in SolverKind])
    w2.add_argument("--epsilon", type=float, default=None)
    w2.add_argument("--cost-mode", default="geodesic", choices=["geodesic", "ambient"])
    w2.add_argument("--w1", action="store_true", help="report W1 instead")
    w2.set_defaults(handler=_cmd_w2)

    pey = sub.add_parser("peyre", help="negative-Sobolev upper bound on W2²")
    pey.add_argument("--manifold", default="circle:c=1")
    pey.add_argument("--p1", required=True)
    pey.add_argument("--p2", required=True)
    pey.add_argument("--grid", type=int, default=256)
    pey.add_argument("--p-min", type=float, default=None)
    pey.add_argument("--breakdown", default=None, help="per-mode CSV")
    pey.add_argument("--top", type=int, default=None)
    pey.set_defaults(handler=_cmd_peyre)

    rate = sub.add_parser("rate", help="rate experiment over a grid of horizons")
    source = rate.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", default=None)
    source.add_argument("--preset", default=None, choices=sorted(PRESETS))
    rate.add_argument("--output", default=None)
    rate.add_argument("--workers", type=int, default=None)
    rate.add_argument("--seed", type=int, default=None)
    rate.set_defaults(handler=_cmd_rate)

    kl = sub.add_parser("kl-check", help="Monte Carlo path-space KL against quadrature")
    kl.add_argument("--manifold", default=None)
    kl.add_argument("--p", default=None)
    kl.add_argument("--q", default=None)
    kl.add_argument("--T", type=float, default=None)
    kl.add_argument("--dt", type=float, default=None)
    kl.add_argument("--replicas", type=int, default=None)
    kl.add_argument("--seed", type=int, default=None)
    kl.add_argument("--adjudicate-with", default=None, choices=["log_ratio", "compensator"])
    kl.add_argument("--workers", type=int, default=None)
    kl.add_argument("--output", default=None)
    kl.set_defaults(handler=_cmd_kl_check)

    mm = sub.add_parser("minimax", help="bump-family separation and KL scaling")
    mm.add_argument("--manifold", default=None)
    mm.add_argument("--epsilons", default=None)
    mm.add_argument("--fractions", default=None)
    mm.add_argument("--T", type=float, default=None)
    mm.add_argument("--pairs", type=int, default=None)
    mm.add_argument("--seed", type=int, default=None)
    mm.add_argument("--output", default=None)
    mm.set_defaults(handler=_cmd_minimax)

    kc = sub.add_parser("kernel-check", help="kernel moments and normalisers")
    kc.add_argument("--kernel", default="poly:r=4")
    kc.add_argument("--dimension", type=int, default=1)
    kc.add_argument("--manifold", default=None)
    kc.add_argument("--h", default="0.05,0.1,0.2")
    kc.add_argument("--distance-mode", default="geodesic", choices=["ambient", "geodesic"])
    kc.set_defaults(handler=_cmd_kernel_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except OccupationError as exc:
        logger.error("%s", exc)
        print(str(exc), file=sys.stderr)
        return 2
    except ValidationError as exc:
        logger.error("Invalid configuration: %s", exc)
        print(f"Input Error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
