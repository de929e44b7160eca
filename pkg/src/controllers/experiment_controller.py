"""Multi-run experiments: learning-rate sweeps, optimizer comparison and thread scaling."""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..exceptions import ConfigurationError
from ..schemas import (
    OptimizerComparison,
    OptimizerKind,
    RunConfig,
    ScalingRow,
    SweepRow,
    TopKSummary,
)
from .training_controller import Clock, TrainResult, train

logger = logging.getLogger(__name__)


def derive_config(config: RunConfig, **updates: Any) -> RunConfig:
    """Copy of config with nested updates applied and validation re-run"""
    data = config.model_dump(mode="json")
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return RunConfig.from_dict(data)


def sample_log_uniform(rng: np.random.Generator, n_samples: int, low: float, high: float) -> np.ndarray:
    """eta = exp(U * (ln high - ln low) + ln low), U ~ Uniform(0, 1)"""
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    if not 0.0 < low <= high:
        raise ConfigurationError(f"need 0 < eta_low <= eta_high, got {low}, {high}")
    u = rng.random(n_samples)
    return np.exp(u * (np.log(high) - np.log(low)) + np.log(low))


def _sweep_run(payload: Dict[str, Any]) -> SweepRow:
    config = RunConfig.from_dict(payload)
    result = train(config)
    return SweepRow(
        eta0=config.optimizer.lr,
        seed=config.seed,
        final_score=result.final_record.eval_mean_score,
        optimizer=config.optimizer.kind,
        out_dir=config.out_dir,
    )


def _run_all(configs: List[RunConfig], processes: int) -> List[SweepRow]:
    payloads = [c.model_dump(mode="json") for c in configs]
    if processes <= 1:
        return [_sweep_run(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=processes) as pool:
        return list(pool.map(_sweep_run, payloads))


def rank_rows(rows: Iterable[SweepRow]) -> List[SweepRow]:
    """Sort by descending final score and number the ranks from 1"""
    ordered = sorted(rows, key=lambda r: (-r.final_score, r.eta0, r.seed))
    return [row.model_copy(update={"rank": i + 1}) for i, row in enumerate(ordered)]


def _write_rows(path: str, rows: Iterable[Any]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(row.model_dump_json() + "\n")


def _sweep_configs(
    config: RunConfig,
    etas: Sequence[float],
    seeds: Sequence[int],
    out_dir: str,
    kind: Optional[OptimizerKind] = None,
) -> List[RunConfig]:
    configs = []
    for i, (eta, seed) in enumerate(zip(etas, seeds)):
        optimizer = {"lr": float(eta)}
        if kind is not None:
            optimizer["kind"] = kind.value
        configs.append(derive_config(
            config, optimizer=optimizer, seed=int(seed), out_dir=os.path.join(out_dir, f"run-{i:03d}")
        ))
    return configs


def _draws(config: RunConfig, n_samples: int, eta_low: float, eta_high: float):
    rng = np.random.default_rng(config.seed)
    etas = sample_log_uniform(rng, n_samples, eta_low, eta_high)
    seeds = rng.integers(0, 2**31, size=n_samples)
    return etas, seeds


def sweep(
    config: RunConfig,
    n_samples: int = 50,
    eta_low: float = 1e-4,
    eta_high: float = 1e-2,
    processes: int = 1,
) -> List[SweepRow]:
    """
    Independent seeded runs at log-uniformly drawn initial learning rates

    Returns the rank-vs-score table (rank 1 is the best final score); it is also
    written to <out_dir>/sweep.jsonl.
    """
    etas, seeds = _draws(config, n_samples, eta_low, eta_high)
    logger.info(f"Sweep of {n_samples} runs over eta in [{eta_low}, {eta_high}] with {processes} process(es)")
    rows = rank_rows(_run_all(_sweep_configs(config, etas, seeds, config.out_dir), processes))
    _write_rows(os.path.join(config.out_dir, "sweep.jsonl"), rows)
    return rows


def summarize_top_k(rows: Sequence[SweepRow], k: int) -> TopKSummary:
    """Mean and std of the k best final scores"""
    if k < 1 or not rows:
        raise ConfigurationError(f"need k >= 1 and at least one row, got k={k}, {len(rows)} rows")
    best = sorted(rows, key=lambda r: -r.final_score)[:k]
    scores = np.array([r.final_score for r in best], dtype=np.float64)
    return TopKSummary(
        k=len(best),
        mean_score=float(scores.mean()),
        std_score=float(scores.std()),
        etas=[r.eta0 for r in best],
    )


def compare_optimizers(
    config: RunConfig,
    kinds: Sequence[OptimizerKind] = (OptimizerKind.SGD, OptimizerKind.RMSPROP, OptimizerKind.SHARED_RMSPROP),
    n_samples: int = 20,
    eta_low: float = 1e-4,
    eta_high: float = 1e-2,
    success_score: float = 1.0,
    processes: int = 1,
) -> OptimizerComparison:
    """
    The same learning-rate and seed draws run under each optimizer

    Reports each optimizer's descending score curve and how many of its runs
    reached success_score.
    """
    etas, seeds = _draws(config, n_samples, eta_low, eta_high)
    curves: Dict[str, List[SweepRow]] = {}
    successes: Dict[str, int] = {}
    for kind in kinds:
        kind = OptimizerKind(kind)
        out_dir = os.path.join(config.out_dir, kind.value)
        rows = rank_rows(_run_all(_sweep_configs(config, etas, seeds, out_dir, kind), processes))
        curves[kind.value] = rows
        successes[kind.value] = sum(1 for r in rows if r.final_score >= success_score)
        logger.info(f"{kind.value}: {successes[kind.value]}/{n_samples} runs reached {success_score}")

    comparison = OptimizerComparison(success_score=success_score, curves=curves, successes=successes)
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "compare.json"), "w", encoding="utf-8") as f:
        f.write(comparison.model_dump_json(indent=2))
    return comparison


def _median(values: List[float]) -> Optional[float]:
    return float(np.median(values)) if values else None


def compute_speedups(rows: List[ScalingRow]) -> List[ScalingRow]:
    """
    speedup(n) = median time(1) / median time(n); speedup(1) = 1 by definition.
    Unreached rows keep speedup None.
    """
    base = next((r for r in rows if r.threads == 1), None)
    if base is None or not base.reached:
        raise ConfigurationError("the 1-thread runs never reached the reference score")
    t1 = base.median_time_to_reference
    updated = []
    for row in rows:
        if row.threads == 1:
            speedup = 1.0
        elif not row.reached:
            speedup = None
        elif row.median_time_to_reference > 0:
            speedup = t1 / row.median_time_to_reference
        else:
            speedup = 1.0 if t1 == 0 else float("inf")
        updated.append(row.model_copy(update={"speedup": speedup}))
    return updated


def bench_scaling(
    config: RunConfig,
    thread_counts: Sequence[int],
    reference_score: float,
    seeds: int = 3,
    train_fn: Callable[..., TrainResult] = train,
    clock: Clock = time.monotonic,
) -> List[ScalingRow]:
    """
    Time to reach a reference score with n threads, relative to one thread

    For each thread count, runs `seeds` seeded trainings that stop once the
    greedy evaluation reaches reference_score, and reports the median time and
    frames to the reference, median throughput and the speedup over one thread.
    A thread count is reached when a majority of its seeds reached the reference.
    The table is also written to <out_dir>/scaling.jsonl.
    """
    if seeds < 3:
        raise ConfigurationError(f"bench_scaling needs at least 3 seeds, got {seeds}")
    counts = sorted(set(int(n) for n in thread_counts) | {1})
    rows = []
    for n in counts:
        times, frames, rates = [], [], []
        for s in range(seeds):
            run_config = derive_config(
                config,
                threads=n,
                seed=config.seed + s,
                deterministic=False,
                out_dir=os.path.join(config.out_dir, f"threads-{n}", f"seed-{s}"),
            )
            result = train_fn(run_config, clock=clock, reference_score=reference_score, stop_at_reference=True)
            rates.append(result.frames_per_second)
            if result.reached_reference:
                times.append(result.time_to_reference)
                frames.append(result.frames_to_reference)

        reached = len(times) * 2 > seeds
        rows.append(ScalingRow(
            threads=n,
            seeds=seeds,
            median_time_to_reference=_median(times) if reached else None,
            median_frames_to_reference=_median(frames) if reached else None,
            median_frames_per_second=_median(rates) or 0.0,
            reached=reached,
        ))
        logger.info(f"{n} thread(s): reached={reached}, median time {rows[-1].median_time_to_reference}")

    rows = compute_speedups(rows)
    _write_rows(os.path.join(config.out_dir, "scaling.jsonl"), rows)
    return rows
