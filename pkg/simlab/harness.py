"""
Simlab Harness - Monte-Carlo study orchestration
Runs every (scenario, n, replicate) of a study grid, then aggregates the
replicates into coverage, power and normality tables and Q-Q data files
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, List, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm
from tqdm import tqdm

import simlab
from simlab.config import ExperimentConfig
from simlab.core import make_generator
from simlab.estimators import true_value_mc, value_cv, value_empirical, value_jackknife
from simlab.exceptions import DegenerateSampleError, StudyError
from simlab.models.krr import KrrFitter
from simlab.models.zom import ZomFitter
from simlab.report import create_study_report, write_table
from simlab.simgen import generate
from simlab.stats import coverage_from_arrays, power, shapiro_wilk, shifted_statistic, z_compare

logger = logging.getLogger(__name__)

REPLICATE_COLUMNS = [
    "scenario", "n", "replicate", "seed",
    "v_jk_pmm", "se_pmm", "v_jk_zom", "se_zom", "v_emp",
    "v0_pmm", "v0_zom", "t_stat", "p_value", "t0",
]
CV_COLUMNS = ["v_cv_pmm", "se_cv_pmm", "v_cv_zom", "se_cv_zom"]

# Independent random streams inside one replicate
TRAIN_STREAM, TEST_STREAM, TRUTH_STREAM, CV_STREAM = 0, 1, 2, 3


def replicate_seed(master_seed: int, scenario: int, n: int, replicate: int) -> int:
    """Seed of one replicate: the master seed hashed with its grid coordinates"""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(scenario, n, replicate))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def run_replicate(config: ExperimentConfig, scenario: int, n: int, replicate: int) -> Dict[str, Any]:
    """Simulate one dataset and produce every replicate-level quantity"""
    spec = config.scenario_spec(scenario)
    seed = replicate_seed(config.seed, scenario, n, replicate)

    train, prop = generate(spec, n, make_generator(seed, TRAIN_STREAM))
    pmm_fitter = KrrFitter(config.bandwidth, config.ridge).frozen_for(train)
    zom_fitter = ZomFitter(prop)

    pmm = value_jackknife(train, pmm_fitter, prop)
    zom = value_jackknife(train, zom_fitter, prop)

    # Both fitted rules are scored on the same covariate draws
    v0_pmm = true_value_mc(pmm_fitter.fit(train), spec, config.mc_draws, make_generator(seed, TRUTH_STREAM))
    v0_zom = true_value_mc(zom_fitter.fit(train), spec, config.mc_draws, make_generator(seed, TRUTH_STREAM))

    comparison = z_compare(pmm, zom, config.alternative)
    record = {
        "scenario": scenario,
        "n": n,
        "replicate": replicate,
        "seed": seed,
        "v_jk_pmm": pmm.value,
        "se_pmm": pmm.std_error,
        "v_jk_zom": zom.value,
        "se_zom": zom.std_error,
        "v_emp": np.nan,
        "v0_pmm": v0_pmm,
        "v0_zom": v0_zom,
        "t_stat": comparison.t_stat,
        "p_value": comparison.p_value,
        "t0": shifted_statistic(pmm, zom, v0_pmm, v0_zom),
    }

    if config.empirical:
        test, _ = generate(spec, n, make_generator(seed, TEST_STREAM))
        record["v_emp"] = value_empirical(train, test, pmm_fitter, prop)

    if config.cv is not None:
        cv_seed = np.random.SeedSequence(seed, spawn_key=(CV_STREAM,))
        cv_pmm = value_cv(train, pmm_fitter, prop, config.cv.folds, config.cv.repeats, cv_seed)
        cv_zom = value_cv(train, zom_fitter, prop, config.cv.folds, config.cv.repeats, cv_seed)
        record.update({
            "v_cv_pmm": cv_pmm.value,
            "se_cv_pmm": cv_pmm.std_error,
            "v_cv_zom": cv_zom.value,
            "se_cv_zom": cv_zom.std_error,
        })
    return record


def _run_task(task: Tuple[ExperimentConfig, int, int, int]) -> Dict[str, Any]:
    config, scenario, n, replicate = task
    try:
        return run_replicate(config, scenario, n, replicate)
    except Exception as e:
        return {
            "scenario": scenario,
            "n": n,
            "replicate": replicate,
            "seed": replicate_seed(config.seed, scenario, n, replicate),
            "error": f"{type(e).__name__}: {e}",
        }


def study_tasks(config: ExperimentConfig) -> List[Tuple[ExperimentConfig, int, int, int]]:
    return [
        (config, scenario, n, replicate)
        for scenario in config.scenarios
        for n in config.sample_sizes
        for replicate in range(config.replicates)
    ]


def _results_in_order(tasks, jobs: int) -> Iterator[Dict[str, Any]]:
    if jobs <= 1:
        for task in tasks:
            yield _run_task(task)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_task, task) for task in tasks]
        try:
            for future in futures:
                yield future.result()
        finally:
            for future in futures:
                future.cancel()


def emit_qq(sample, reference: Union[str, np.ndarray], out: str) -> str:
    """
    Write Q-Q plot data: (theoretical_quantile, sample_quantile) pairs

    Plotting positions are (i - 0.5)/m. reference is 'normal' for the
    standard normal or another sample, whose quantiles are read at the same
    positions.
    """
    sample = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    m = len(sample)
    if m < 2:
        raise ValueError(f"a Q-Q file needs at least 2 points, got {m}")
    positions = (np.arange(1, m + 1) - 0.5) / m

    if isinstance(reference, str):
        if reference != "normal":
            raise ValueError(f"reference must be 'normal' or a sample, got '{reference}'")
        theoretical = norm.ppf(positions)
    else:
        reference = np.sort(np.asarray(reference, dtype=float).reshape(-1))
        if len(reference) < 2:
            raise ValueError("a reference sample needs at least 2 points")
        if len(reference) == m:
            theoretical = reference
        else:
            theoretical = np.quantile(reference, positions, method="hazen")

    frame = pd.DataFrame({"theoretical_quantile": theoretical, "sample_quantile": sample})
    return write_table(frame, out)


def _normality(t0: np.ndarray) -> Tuple[float, float]:
    if len(t0) < 3:
        return np.nan, np.nan
    try:
        return shapiro_wilk(t0)
    except DegenerateSampleError:
        return np.nan, np.nan


def aggregate(replicates: pd.DataFrame, config: ExperimentConfig) -> Dict[str, pd.DataFrame]:
    """Coverage, power and normality tables, one row per (scenario, n)"""
    coverage_rows, power_rows, normality_rows = [], [], []
    for (scenario, n), group in replicates.groupby(["scenario", "n"], sort=True):
        count = len(group)
        row = {
            "scenario": scenario,
            "n": n,
            "replicates": count,
            "coverage_pmm": coverage_from_arrays(group["v_jk_pmm"], group["se_pmm"], group["v0_pmm"], config.ci_level),
            "coverage_zom": coverage_from_arrays(group["v_jk_zom"], group["se_zom"], group["v0_zom"], config.ci_level),
        }
        if config.cv is not None:
            row["coverage_cv"] = coverage_from_arrays(
                group["v_cv_pmm"], group["se_cv_pmm"], group["v0_pmm"], config.ci_level
            )
        coverage_rows.append(row)

        power_rows.append({"scenario": scenario, "n": n, "replicates": count,
                           "power": power(group["p_value"], config.alpha)})

        w, p = _normality(group["t0"].to_numpy())
        normality_rows.append({"scenario": scenario, "n": n, "replicates": count, "w": w, "p_value": p})

    return {
        "coverage": pd.DataFrame(coverage_rows),
        "power": pd.DataFrame(power_rows),
        "normality": pd.DataFrame(normality_rows),
    }


def run_study(
    config: ExperimentConfig,
    out_dir: str,
    jobs: int = 1,
    skip_failed: bool = False,
    verbose: bool = False,
) -> Dict[str, Any]:
    """
    Run the full Monte-Carlo study and write its tables

    Replicates may run concurrently (jobs > 1); results are consumed in grid
    order so every CSV is independent of scheduling. A failed replicate aborts
    the study unless skip_failed is set, in which case it is listed in
    failures.csv and left out of the tables.
    """
    os.makedirs(out_dir, exist_ok=True)
    tasks = study_tasks(config)
    logger.info("Running %d replicates with %d job(s)", len(tasks), jobs)

    records: List[Dict[str, Any]] = []
    failures: List[Dict[str, Any]] = []
    progress = tqdm(_results_in_order(tasks, jobs), total=len(tasks), disable=not verbose, desc="replicates")
    for result in progress:
        if "error" in result:
            location = f"scenario {result['scenario']}, n={result['n']}, replicate {result['replicate']}"
            if not skip_failed:
                progress.close()
                raise StudyError(f"replicate failed ({location}): {result['error']}")
            logger.warning("Skipping failed replicate (%s): %s", location, result["error"])
            failures.append(result)
            continue
        records.append(result)

    if not records:
        raise StudyError("every replicate failed; nothing to aggregate")

    columns = REPLICATE_COLUMNS + (CV_COLUMNS if config.cv is not None else [])
    replicates = pd.DataFrame(records, columns=columns)
    if not config.empirical:
        replicates = replicates.drop(columns=["v_emp"])

    output_files = {"replicates": write_table(replicates, os.path.join(out_dir, "replicates.csv"))}

    logger.info("Aggregating coverage, power and normality tables...")
    tables = aggregate(replicates, config)
    for name, frame in tables.items():
        output_files[name] = write_table(frame, os.path.join(out_dir, f"{name}.csv"))

    logger.info("Writing Q-Q data files...")
    for (scenario, n), group in replicates.groupby(["scenario", "n"], sort=True):
        if len(group) < 2:
            continue
        key = f"s{scenario}_n{n}"
        output_files[f"qq_t0_{key}"] = emit_qq(group["t0"], "normal", os.path.join(out_dir, f"qq_t0_{key}.csv"))
        if config.empirical:
            output_files[f"qq_value_{key}"] = emit_qq(
                group["v_jk_pmm"], group["v_emp"].to_numpy(), os.path.join(out_dir, f"qq_value_{key}.csv")
            )

    failure_frame = pd.DataFrame(failures, columns=["scenario", "n", "replicate", "seed", "error"])
    output_files["failures"] = write_table(failure_frame, os.path.join(out_dir, "failures.csv"))
    output_files["report"] = create_study_report(tables, os.path.join(out_dir, "report.html"))

    metadata = {
        "config": config.to_dict(),
        "code_version": simlab.__version__,
        "alternative": config.alternative,
        "replicates_requested": len(tasks),
        "replicates_completed": len(records),
        "failures": len(failures),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    metadata_path = os.path.join(out_dir, "metadata.json")
    with open(metadata_path, "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2)
    output_files["metadata"] = metadata_path

    return {
        "tables": tables,
        "replicate_count": len(records),
        "failures": failures,
        "output_files": output_files,
    }
