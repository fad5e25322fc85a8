"""
Monte Carlo experiment runner.

Implements:
- Seed splitting (SplitMix64 over base + i * golden gamma)
- run_batch(): S_run seeded replicates, optionally on a process pool
- ExperimentResult: per-run metrics, sample tables, digest, JSON persistence
- cv_convergence(): coefficient of variation over a grid of run counts
- BatchLog: append-only JSONL log of batches (one line per batch)

Results never depend on the worker count: replicate i always uses
split_seed(base_seed, i) and results are collected in index order.
"""

import json
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import SimulationConfig, config_digest, parse_config, serialize_config
from src.engine import run_day
from src.metrics import OutcomeMetrics, apply_quanta_exclusion, compute_metrics

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# (level, parameter) pairs whose CV decides the number of runs
CRITICAL_PARAMETERS: Tuple[Tuple[str, str], ...] = (
    ("place", "max_co2"),
    ("place", "max_quanta"),
    ("department", "mean_co2"),
    ("department", "mean_quanta"),
)


class BatchRunError(RuntimeError):
    """A replicate failed; carries what is needed to replay it."""

    def __init__(self, message: str, run_index: Optional[int] = None, seed: Optional[int] = None):
        super().__init__(message)
        self.run_index = run_index
        self.seed = seed

    def __reduce__(self):
        return (type(self), (self.args[0], self.run_index, self.seed))


# ----------------------------------------------------------------------
# Seeds
# ----------------------------------------------------------------------

def split_seed(base_seed: int, index: int) -> int:
    """Seed of replicate ``index``. A bijection of index for a fixed base."""
    z = (base_seed + index * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def split_seeds(base_seed: int, count: int) -> np.ndarray:
    """Vectorized split_seed for indices 0..count-1 (uint64)."""
    index = np.arange(count, dtype=np.uint64)
    z = np.uint64(base_seed & MASK64) + index * np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


# ----------------------------------------------------------------------
# Replicates
# ----------------------------------------------------------------------

_worker_config: Optional[SimulationConfig] = None


def _init_worker(config_text: str) -> None:
    global _worker_config
    _worker_config = parse_config(config_text)


def _run_replicate(config: SimulationConfig, index: int, seed: int) -> dict:
    try:
        return compute_metrics(run_day(config, seed)).to_dict()
    except Exception as e:
        raise BatchRunError(f"run {index} (seed {seed}) failed: {e}", index, seed) from e


def _run_in_worker(task: Tuple[int, int]) -> dict:
    index, seed = task
    return _run_replicate(_worker_config, index, seed)


@dataclass
class ExperimentResult:
    name: str
    config_digest: str
    s_run: int
    base_seed: int
    seeds: List[int]
    runs: List[OutcomeMetrics] = field(default_factory=list)

    # ------------------------------------------------------------------
    # Sample tables (one row per run and entity)
    # ------------------------------------------------------------------

    def _samples(self, level: str) -> pd.DataFrame:
        rows = []
        for run, (seed, metrics) in enumerate(zip(self.seeds, self.runs)):
            if level == "building":
                entries = [metrics.to_dict()["building"]]
            else:
                entries = metrics.to_dict()[level]
            for entry in entries:
                rows.append({"run": run, "seed": seed, **entry})
        return pd.DataFrame(rows)

    def place_samples(self) -> pd.DataFrame:
        return self._samples("places")

    def person_samples(self) -> pd.DataFrame:
        return self._samples("persons")

    def department_samples(self) -> pd.DataFrame:
        return self._samples("departments")

    def building_samples(self) -> pd.DataFrame:
        return self._samples("building")

    def distributions(self, exclusion: str = "place") -> Dict[str, pd.DataFrame]:
        """All sample tables, with the quanta exclusion applied to places."""
        return {
            "places": apply_quanta_exclusion(self.place_samples(), exclusion),
            "persons": self.person_samples(),
            "departments": self.department_samples(),
            "building": self.building_samples(),
        }

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_digest": self.config_digest,
            "s_run": self.s_run,
            "base_seed": self.base_seed,
            "seeds": list(self.seeds),
            "runs": [m.to_dict() for m in self.runs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentResult":
        return cls(
            name=data["name"],
            config_digest=data["config_digest"],
            s_run=data["s_run"],
            base_seed=data["base_seed"],
            seeds=list(data["seeds"]),
            runs=[OutcomeMetrics.from_dict(m) for m in data["runs"]],
        )

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        payload = {**self.to_dict(), "digest": self.digest()}
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
        except OSError as e:
            raise OSError(f"cannot write experiment result to {path}: {e}") from e
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentResult":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        result = cls.from_dict(data)
        if "digest" in data and data["digest"] != result.digest():
            raise ValueError(f"{path}: experiment result digest mismatch")
        return result

    def write_tables(self, out_dir: Union[str, Path], exclusion: str = "place") -> List[Path]:
        """Write one CSV per level: ``<level>_metrics.csv``."""
        out_dir = Path(out_dir)
        written = []
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            for level, frame in self.distributions(exclusion).items():
                path = out_dir / f"{level}_metrics.csv"
                frame.to_csv(path, index=False)
                written.append(path)
        except OSError as e:
            raise OSError(f"cannot write metric tables to {out_dir}: {e}") from e
        return written


def run_batch(
    config: SimulationConfig,
    s_run: int,
    base_seed: int,
    parallelism: int = 1,
    name: str = "experiment",
) -> ExperimentResult:
    """Run ``s_run`` replicates; the result is identical for any ``parallelism``."""
    if s_run < 1:
        raise ValueError("s_run must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    seeds = [int(s) for s in split_seeds(base_seed, s_run)]
    tasks = list(enumerate(seeds))
    logger.info(f"Batch {name}: {s_run} runs, base seed {base_seed}, {parallelism} worker(s)")

    if parallelism == 1:
        runs = []
        for index, seed in tasks:
            runs.append(_run_replicate(config, index, seed))
            if (index + 1) % 50 == 0:
                logger.info(f"Batch {name}: {index + 1}/{s_run} runs done")
    else:
        chunksize = max(1, s_run // (parallelism * 4))
        with ProcessPoolExecutor(
            max_workers=parallelism,
            initializer=_init_worker,
            initargs=(serialize_config(config),),
        ) as executor:
            runs = list(executor.map(_run_in_worker, tasks, chunksize=chunksize))

    return ExperimentResult(
        name=name,
        config_digest=config_digest(config),
        s_run=s_run,
        base_seed=base_seed,
        seeds=seeds,
        runs=[OutcomeMetrics.from_dict(r) for r in runs],
    )


# ----------------------------------------------------------------------
# Run-count convergence
# ----------------------------------------------------------------------

def coefficient_of_variation(values: Sequence[float]) -> float:
    """Sample standard deviation (n-1) over mean; NaN when undefined."""
    data = np.asarray(values, dtype=float)
    data = data[~np.isnan(data)]
    if data.size < 2:
        return float("nan")
    mean = data.mean()
    if mean == 0.0:
        return float("nan")
    return float(data.std(ddof=1) / mean)


def _critical_values(result: ExperimentResult, s_run: int) -> Dict[Tuple[str, str], pd.DataFrame]:
    places = apply_quanta_exclusion(result.place_samples(), "place")
    departments = result.department_samples()
    places = places[places["run"] < s_run]
    departments = departments[departments["run"] < s_run]
    return {
        ("place", "max_co2"): places[["place", "max_co2"]].rename(columns={"place": "entity"}),
        ("place", "max_quanta"): places[["place", "max_quanta"]].rename(columns={"place": "entity"}),
        ("department", "mean_co2"): departments[["department", "mean_co2"]].rename(columns={"department": "entity"}),
        ("department", "mean_quanta"): departments[["department", "mean_quanta"]].rename(columns={"department": "entity"}),
    }


def cv_convergence(
    config: SimulationConfig,
    base_seed: int,
    grid: Sequence[int],
    repetitions: int,
    parallelism: int = 1,
) -> pd.DataFrame:
    """
    CV of the critical outcome parameters for every grid size and repetition.

    Repetition k runs one pool of max(grid) replicates seeded from
    split_seed(base_seed, k); grid point S uses its first S runs.
    Returns rows (repetition, s_run, level, parameter, entity, cv).
    """
    grid = list(grid)
    if grid != sorted(grid) or not grid or grid[0] < 1:
        raise ValueError("grid must be a non-empty ascending list of positive run counts")
    rows = []
    for repetition in range(repetitions):
        pool = run_batch(
            config, grid[-1], split_seed(base_seed, repetition), parallelism,
            name=f"cv-{repetition}",
        )
        for s_run in grid:
            for (level, parameter), frame in _critical_values(pool, s_run).items():
                for entity, values in frame.groupby("entity", sort=False)[parameter]:
                    cv = coefficient_of_variation(values.to_numpy())
                    rows.append((repetition, s_run, level, parameter, entity, cv))
    frame = pd.DataFrame(rows, columns=["repetition", "s_run", "level", "parameter", "entity", "cv"])
    if frame["cv"].isna().any():
        logger.warning(f"CV undefined for {int(frame['cv'].isna().sum())} samples (zero mean or too few values)")
    return frame


def cv_spread(curves: pd.DataFrame) -> pd.DataFrame:
    """Across-repetition spread of CV, averaged over entities, per parameter and grid size."""
    per_entity = (
        curves.groupby(["level", "parameter", "entity", "s_run"])["cv"]
        .std(ddof=1)
        .reset_index(name="spread")
    )
    return (
        per_entity.groupby(["level", "parameter", "s_run"])["spread"]
        .mean()
        .reset_index()
    )


# ----------------------------------------------------------------------
# Batch log
# ----------------------------------------------------------------------

class BatchLog:
    """Append-only log of batches, one JSON object per line."""

    def __init__(self, log_file: Union[str, Path] = "batch_history.jsonl"):
        self.log_file = Path(log_file)

    def log_batch(self, result: ExperimentResult, **extra) -> dict:
        entry = {
            "timestamp": datetime.now().isoformat(),
            "experiment": result.name,
            "config_digest": result.config_digest,
            "s_run": result.s_run,
            "base_seed": result.base_seed,
            "result_digest": result.digest(),
            **extra,
        }
        try:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
        except OSError as e:
            raise OSError(f"cannot append to batch log {self.log_file}: {e}") from e
        return entry

    def get_history(self, experiment: Optional[str] = None, last_n: Optional[int] = 10) -> List[dict]:
        if not self.log_file.exists():
            return []
        history = []
        with open(self.log_file, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                entry = json.loads(line)
                if experiment is None or entry.get("experiment") == experiment:
                    history.append(entry)
        return history[-last_n:] if last_n else history

    def conflicts(self, entry: dict) -> List[dict]:
        """Earlier batches with the same config, run count and seed but a different result."""
        key = (entry["config_digest"], entry["s_run"], entry["base_seed"])
        return [
            other for other in self.get_history(entry["experiment"], last_n=None)
            if (other["config_digest"], other["s_run"], other["base_seed"]) == key
            and other["result_digest"] != entry["result_digest"]
        ]

    def print_summary(self, experiment: Optional[str] = None) -> None:
        history = self.get_history(experiment)
        if not history:
            print(f"No batch history in {self.log_file}")
            return
        print(f"\n{'='*60}")
        print(f"Batch history - {experiment or 'all experiments'}")
        print(f"{'='*60}")
        for entry in history:
            print(
                f"  {entry['timestamp']}  {entry['experiment']:<24} "
                f"S_run={entry['s_run']:<5} seed={entry['base_seed']}  {entry['result_digest'][:12]}"
            )
        print(f"{'='*60}\n")


def write_manifest(
    path: Union[str, Path],
    experiment: str,
    config_path: str,
    s_run: int,
    base_seed: int,
    parallelism: int,
) -> Path:
    """Everything needed to reproduce a batch exactly."""
    path = Path(path)
    manifest = {
        "experiment": experiment,
        "config_path": config_path,
        "s_run": s_run,
        "base_seed": base_seed,
        "parallelism": parallelism,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write manifest {path}: {e}") from e
    return path
