"""
Simlab CLI - Command Line Interface
Provides command line tools for data generation, value estimation, rule
comparison and the Monte-Carlo study
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from simlab.config import load_config
from simlab.core import ValueEstimate, load_dataset, write_dataset
from simlab.estimators import value_cv, value_jackknife
from simlab.exceptions import SimlabError
from simlab.harness import run_study
from simlab.models import get_fitter_for_model
from simlab.models.krr import AUTO, DEFAULT_RIDGE
from simlab.propensity import estimate_propensity_empirical, fit_multinomial_logistic, known_uniform
from simlab.simgen import SCENARIOS, ScenarioSpec, generate
from simlab.stats import GREATER, TWO_SIDED, z_compare

logger = logging.getLogger(__name__)


def sidecar_path(data_path: str) -> str:
    return os.path.splitext(data_path)[0] + ".json"


def _write_json(payload: Dict[str, Any], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=str)


def _read_estimate(path: str) -> ValueEstimate:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Estimate file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return ValueEstimate.from_dict(json.load(f))


def _bandwidth(text: str):
    if text == AUTO:
        return AUTO
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a number or '{AUTO}', got '{text}'") from None


def gen_command(args) -> Dict[str, Any]:
    """Run the data generation command"""
    spec = ScenarioSpec(scenario_id=args.scenario, noise_sd=args.noise_sd, nuisance_dims=args.nuisance_dims)
    data, prop = generate(spec, args.n, args.seed)

    write_dataset(data, args.out)
    sidecar = sidecar_path(args.out)
    _write_json(
        {"scenario": spec.to_dict(), "n": args.n, "seed": args.seed, "propensity": prop.to_dict()},
        sidecar,
    )

    if not args.quiet:
        print(f"Generated {data.n} subjects from scenario {spec.scenario_id}")
        print(f"Arm counts: {', '.join(str(c) for c in data.arm_counts())}")
        print(f"Dataset saved to {args.out}")
    return {"dataset": data, "output_files": {"dataset": args.out, "sidecar": sidecar}}


def _load_sidecar(data_path: str) -> Optional[Dict[str, Any]]:
    path = sidecar_path(data_path)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def estimate_command(args) -> Dict[str, Any]:
    """Run the value estimation command"""
    sidecar = _load_sidecar(args.data)
    arm_count = args.arms
    if arm_count is None:
        if sidecar is None:
            raise ValueError(f"no sidecar next to {args.data}; pass --arms")
        arm_count = int(sidecar["scenario"]["arm_count"])
    data = load_dataset(args.data, arm_count)

    # A generated dataset carries its known randomization; anything else is fitted
    kind = args.propensity or ("uniform" if sidecar is not None else "empirical")
    if kind == "uniform":
        prop = known_uniform(arm_count)
    elif kind == "empirical":
        prop = estimate_propensity_empirical(data)
    else:
        prop = fit_multinomial_logistic(data)

    if args.model == "krr":
        fitter = get_fitter_for_model("krr", bandwidth=args.bandwidth, ridge=args.ridge).frozen_for(data)
    else:
        fitter = get_fitter_for_model("zom", propensity=prop)

    logger.info("Estimating the value of %s by %s on %d subjects", fitter.name, args.method, data.n)
    if args.method == "jackknife":
        estimate = value_jackknife(data, fitter, prop, jobs=args.jobs)
    else:
        folds = args.folds if args.folds is not None else min(10, data.n)
        estimate = value_cv(data, fitter, prop, folds, args.repeats, args.seed, jobs=args.jobs)

    result = estimate.to_dict()
    if args.out:
        _write_json(result, args.out)
        if not args.quiet:
            print("\nKey Metrics:")
            print(f"Value: {estimate.value:.4f}")
            print(f"Standard Error: {estimate.std_error:.4f}")
            print(f"Clipped Propensities: {estimate.metadata.get('clipped_propensities', 0)}")
            print(f"Estimate saved to {args.out}")
    else:
        print(json.dumps(result, indent=2, default=str))
    return {"estimate": estimate, "output_files": {"estimate": args.out} if args.out else {}}


def compare_command(args) -> Dict[str, Any]:
    """Run the PMM against ZOM comparison command"""
    pmm = _read_estimate(args.pmm)
    zom = _read_estimate(args.zom)
    comparison = z_compare(pmm, zom, TWO_SIDED if args.two_sided else GREATER)

    result = comparison.to_dict()
    if args.out:
        _write_json(result, args.out)
    if not args.quiet:
        print("\nKey Metrics:")
        print(f"PMM Value: {comparison.v_pmm:.4f}")
        print(f"ZOM Value: {comparison.v_zom:.4f}")
        print(f"SE of Difference: {comparison.se_diff:.4f}")
        print(f"T Statistic: {comparison.t_stat:.4f}")
        print(f"P-value ({comparison.alternative}): {comparison.p_value:.4f}")
    return {"comparison": comparison, "output_files": {"comparison": args.out} if args.out else {}}


def study_command(args) -> Dict[str, Any]:
    """Run the Monte-Carlo study command"""
    config = load_config(args.config)
    results = run_study(
        config,
        args.out,
        jobs=args.jobs,
        skip_failed=args.skip_failed,
        verbose=not args.quiet,
    )

    if not args.quiet:
        print("\nKey Metrics:")
        print(f"Replicates: {results['replicate_count']}")
        print(f"Failures: {len(results['failures'])}")
        coverage = results["tables"]["coverage"]
        power = results["tables"]["power"]
        for cov, pw in zip(coverage.itertuples(index=False), power.itertuples(index=False)):
            print(
                f"Scenario {cov.scenario}, n={cov.n}: coverage PMM {cov.coverage_pmm:.2f}, "
                f"ZOM {cov.coverage_zom:.2f}, power {pw.power:.2f}"
            )
        print(f"Results saved to {args.out}")
    return results


def _common_parser(default=False) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=default, help="Suppress output messages")
    common.add_argument("--verbose", action="store_true", default=default, help="Show verbose output")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simlab - Jackknife value estimation for individualized treatment rules",
        parents=[_common_parser()],
    )
    commands = parser.add_subparsers(dest="command", required=True)
    # Subcommand copies set the flags only when given
    common = _common_parser(default=argparse.SUPPRESS)

    gen = commands.add_parser("gen", parents=[common], help="Simulate a dataset from a scenario")
    gen.add_argument("--scenario", type=int, required=True, choices=SCENARIOS, help="Scenario number")
    gen.add_argument("--n", type=int, required=True, help="Number of subjects")
    gen.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    gen.add_argument("--noise-sd", type=float, default=1.0, help="Outcome noise SD (default: 1.0)")
    gen.add_argument("--nuisance-dims", type=int, default=1, help="Covariates beyond x1, x2 (default: 1)")
    gen.add_argument("--out", required=True, help="Output CSV path")
    gen.set_defaults(handler=gen_command)

    estimate = commands.add_parser("estimate", parents=[common], help="Estimate the value of a fitted rule")
    estimate.add_argument("--data", required=True, help="Dataset CSV (x1..xp,a,y)")
    estimate.add_argument("--method", choices=["jackknife", "cv"], default="jackknife",
                          help="Estimator (default: jackknife)")
    estimate.add_argument("--model", choices=["krr", "zom"], default="krr", help="Rule learner (default: krr)")
    estimate.add_argument("--arms", type=int, help="Number of arms (default: read from the dataset sidecar)")
    estimate.add_argument("--propensity", choices=["uniform", "empirical", "logistic"],
                          help="Propensity model (default: uniform with a sidecar, else empirical)")
    estimate.add_argument("--folds", type=int, help="CV folds (default: min(10, n))")
    estimate.add_argument("--repeats", type=int, default=1, help="CV repeats (default: 1)")
    estimate.add_argument("--seed", type=int, default=0, help="CV fold seed (default: 0)")
    estimate.add_argument("--bandwidth", type=_bandwidth, default=AUTO,
                          help="KRR Gaussian bandwidth or 'auto' (default: auto)")
    estimate.add_argument("--ridge", type=float, default=DEFAULT_RIDGE,
                          help=f"KRR ridge penalty (default: {DEFAULT_RIDGE})")
    estimate.add_argument("--jobs", type=int, default=1, help="Parallel refits (default: 1)")
    estimate.add_argument("--out", help="Output JSON path (default: print to stdout)")
    estimate.set_defaults(handler=estimate_command)

    compare = commands.add_parser("compare", parents=[common], help="Z-test of PMM against ZOM")
    compare.add_argument("--pmm", required=True, help="PMM estimate JSON")
    compare.add_argument("--zom", required=True, help="ZOM estimate JSON")
    compare.add_argument("--two-sided", action="store_true", help="Two-sided p-value")
    compare.add_argument("--out", help="Output JSON path")
    compare.set_defaults(handler=compare_command)

    study = commands.add_parser("study", parents=[common], help="Run the Monte-Carlo study")
    study.add_argument("--config", required=True, help="Study config JSON")
    study.add_argument("--out", default="output", help="Output directory for results (default: output)")
    study.add_argument("--jobs", type=int, default=1, help="Parallel replicates (default: 1)")
    study.add_argument("--skip-failed", action="store_true",
                       help="Record failed replicates instead of aborting")
    study.set_defaults(handler=study_command)

    return parser


def configure_logging(quiet: bool, verbose: bool):
    if quiet:
        level = logging.ERROR
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet, args.verbose and not args.quiet)

    try:
        args.handler(args)
    except (SimlabError, ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def study_main():
    """Entry point for the study command"""
    return main(["study"] + sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
