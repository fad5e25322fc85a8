"""
Statistical comparison of an experiment against the baseline.

Implements:
- welch_t: unequal-variance t test (Welch-Satterthwaite df)
- mann_whitney_u: normal approximation with tie and continuity correction
- cohens_d: pooled-variance effect size
- rank_effect_size: r = Z / sqrt(n_a + n_b) with Z not continuity corrected
- compare_experiments: per-entity report with the significance rule

Significance rule: p < 0.001 and |effect| >= 0.5, evaluated separately for
the parametric pair (Welch p, Cohen's d) and the rank pair (U test p, r).
No normality test picks a family; both are reported.
"""

import json
import math
import logging
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata, t as t_dist

from src.batch import ExperimentResult

logger = logging.getLogger(__name__)

P_THRESHOLD = 0.001
EFFECT_THRESHOLD = 0.5

# (level, entity column, parameter) compared between experiments
COMPARED_PARAMETERS: Tuple[Tuple[str, str, str], ...] = (
    ("place", "place", "max_co2"),
    ("place", "place", "max_quanta"),
    ("department", "department", "mean_co2"),
    ("department", "department", "mean_quanta"),
    ("building", "building", "max_co2"),
    ("building", "building", "mean_quanta"),
)


class ComparisonError(ValueError):
    """The two experiment results do not describe the same entities."""


@dataclass
class WelchResult:
    t: float
    df: float
    p: float


@dataclass
class MannWhitneyResult:
    u: float
    z: float  # without continuity correction
    p: float


def _clean(values: Sequence[float]) -> np.ndarray:
    data = np.asarray(values, dtype=float)
    return data[~np.isnan(data)]


def welch_t(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    a, b = _clean(a), _clean(b)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("welch_t needs at least two values per sample")
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    if va + vb == 0.0:
        logger.warning("Welch test undefined: both samples have zero variance")
        return WelchResult(float("nan"), float("nan"), float("nan"))
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    p = float(min(1.0, 2.0 * t_dist.sf(abs(t), df)))
    return WelchResult(float(t), float(df), p)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """
    U statistic of ``a`` and its two-sided p value.

    Reliable from about eight values per sample. All values tied gives p = 1.
    """
    a, b = _clean(a), _clean(b)
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("mann_whitney_u needs non-empty samples")
    ranks = rankdata(np.concatenate([a, b]))
    u = ranks[:na].sum() - na * (na + 1) / 2.0
    n = na + nb
    mu = na * nb / 2.0
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float((counts ** 3 - counts).sum())
    variance = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if variance <= 0.0:
        return MannWhitneyResult(float(u), 0.0, 1.0)
    sigma = math.sqrt(variance)
    z = (u - mu) / sigma
    p = float(min(1.0, 2.0 * norm.sf((abs(u - mu) - 0.5) / sigma)))
    return MannWhitneyResult(float(u), float(z), p)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = _clean(a), _clean(b)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("cohens_d needs at least two values per sample")
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    if pooled == 0.0:
        logger.warning("Cohen's d undefined: zero pooled standard deviation")
        return float("nan")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def rank_effect_size(a: Sequence[float], b: Sequence[float]) -> float:
    result = mann_whitney_u(a, b)
    n = _clean(a).size + _clean(b).size
    return result.z / math.sqrt(n)


# ----------------------------------------------------------------------
# Experiment comparison
# ----------------------------------------------------------------------

@dataclass
class ComparisonRow:
    level: str
    entity: str
    parameter: str
    n_baseline: int
    n_experiment: int
    baseline_mean: float
    experiment_mean: float
    pct_diff: float
    welch_t: float
    welch_df: float
    p_welch: float
    u: float
    p_mwu: float
    cohens_d: float
    rank_r: float
    parametric_significant: bool
    rank_significant: bool
    significant: bool
    note: str = ""


@dataclass
class ComparisonReport:
    baseline: str
    experiment: str
    exclusion: str
    rows: List[ComparisonRow] = field(default_factory=list)
    only_baseline: List[str] = field(default_factory=list)
    only_experiment: List[str] = field(default_factory=list)

    @property
    def significant_rows(self) -> List[ComparisonRow]:
        return [r for r in self.rows if r.significant]

    def row(self, level: str, entity: str, parameter: str) -> ComparisonRow:
        for r in self.rows:
            if (r.level, r.entity, r.parameter) == (level, entity, parameter):
                return r
        raise KeyError((level, entity, parameter))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "experiment": self.experiment,
            "exclusion": self.exclusion,
            "only_baseline": self.only_baseline,
            "only_experiment": self.only_experiment,
            "rows": [asdict(r) for r in self.rows],
        }

    def save(self, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        json_path = out_dir / "comparison.json"
        csv_path = out_dir / "comparison.csv"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
            self.to_frame().to_csv(csv_path, index=False)
        except OSError as e:
            raise OSError(f"cannot write comparison to {out_dir}: {e}") from e
        return json_path, csv_path

    def format_table(self) -> str:
        lines = [
            f"{self.experiment} vs {self.baseline} (exclusion: {self.exclusion})",
            f"{'level':<11}{'entity':<18}{'parameter':<13}{'base':>11}{'exp':>11}"
            f"{'diff %':>9}{'p welch':>11}{'d':>8}{'p U':>11}{'r':>8}  sig",
        ]
        for r in self.rows:
            lines.append(
                f"{r.level:<11}{r.entity:<18}{r.parameter:<13}{r.baseline_mean:>11.4g}"
                f"{r.experiment_mean:>11.4g}{r.pct_diff:>9.1f}{r.p_welch:>11.2e}"
                f"{r.cohens_d:>8.2f}{r.p_mwu:>11.2e}{r.rank_r:>8.2f}  "
                f"{'*' if r.significant else ''}{(' ' + r.note) if r.note else ''}"
            )
        return "\n".join(lines)


def _is_significant(p: float, effect: float) -> bool:
    if math.isnan(p) or math.isnan(effect):
        return False
    return p < P_THRESHOLD and abs(effect) >= EFFECT_THRESHOLD


def compare_samples(
    level: str, entity: str, parameter: str, base: np.ndarray, exp: np.ndarray
) -> ComparisonRow:
    base, exp = _clean(base), _clean(exp)
    nan = float("nan")
    base_mean = float(base.mean()) if base.size else nan
    exp_mean = float(exp.mean()) if exp.size else nan
    pct = (exp_mean - base_mean) / base_mean * 100.0 if base.size and base_mean != 0.0 else nan
    row = ComparisonRow(
        level, entity, parameter, int(base.size), int(exp.size), base_mean, exp_mean, pct,
        nan, nan, nan, nan, nan, nan, nan, False, False, False,
    )
    if base.size < 2 or exp.size < 2:
        row.note = "insufficient samples"
        logger.warning(f"{level} {entity} {parameter}: insufficient samples after exclusion")
        return row
    welch = welch_t(exp, base)
    mwu = mann_whitney_u(exp, base)
    row.welch_t, row.welch_df, row.p_welch = welch.t, welch.df, welch.p
    row.u, row.p_mwu = mwu.u, mwu.p
    row.cohens_d = cohens_d(exp, base)
    row.rank_r = mwu.z / math.sqrt(base.size + exp.size)
    row.parametric_significant = _is_significant(row.p_welch, row.cohens_d)
    row.rank_significant = _is_significant(row.p_mwu, row.rank_r)
    row.significant = row.parametric_significant or row.rank_significant
    return row


def compare_experiments(
    baseline: ExperimentResult,
    experiment: ExperimentResult,
    exclusion: str = "place",
    allow_partial: bool = False,
) -> ComparisonReport:
    """
    Compare every (entity, parameter) distribution of ``experiment`` to ``baseline``.

    Place and department sets must match unless ``allow_partial``, in which
    case only shared entities are compared and the rest are listed.
    """
    base_tables = baseline.distributions(exclusion)
    exp_tables = experiment.distributions(exclusion)
    report = ComparisonReport(baseline.name, experiment.name, exclusion)

    shared: Dict[str, List[str]] = {}
    for level, table, column in (("place", "places", "place"), ("department", "departments", "department")):
        base_entities = list(pd.unique(base_tables[table][column])) if not base_tables[table].empty else []
        exp_entities = list(pd.unique(exp_tables[table][column])) if not exp_tables[table].empty else []
        only_base = [e for e in base_entities if e not in exp_entities]
        only_exp = [e for e in exp_entities if e not in base_entities]
        if (only_base or only_exp) and not allow_partial:
            raise ComparisonError(
                f"{level} sets differ: only in {baseline.name}: {only_base}; "
                f"only in {experiment.name}: {only_exp}"
            )
        report.only_baseline.extend(f"{level}:{e}" for e in only_base)
        report.only_experiment.extend(f"{level}:{e}" for e in only_exp)
        shared[level] = [e for e in base_entities if e in exp_entities]

    for level, column, parameter in COMPARED_PARAMETERS:
        if level == "building":
            report.rows.append(compare_samples(
                level, "building", parameter,
                base_tables["building"][parameter].to_numpy(),
                exp_tables["building"][parameter].to_numpy(),
            ))
            continue
        table = "places" if level == "place" else "departments"
        base_groups = dict(tuple(base_tables[table].groupby(column, sort=False)))
        exp_groups = dict(tuple(exp_tables[table].groupby(column, sort=False)))
        for entity in shared[level]:
            report.rows.append(compare_samples(
                level, entity, parameter,
                base_groups[entity][parameter].to_numpy(),
                exp_groups[entity][parameter].to_numpy(),
            ))
    logger.info(
        f"Compared {experiment.name} with {baseline.name}: "
        f"{len(report.significant_rows)}/{len(report.rows)} significant"
    )
    return report
