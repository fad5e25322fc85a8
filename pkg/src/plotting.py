"""
Static SVG charts drawn from exported CSV tables only.

Implements:
- Place timelines (CO2 and quanta per place over the day)
- Activity density over the day
- Distribution ridges (layered KDE polygons per place) from batch tables
- Building-level densities for one or more experiments
- Validation CO2 series
- CV convergence curves against the run count

Output is deterministic: fixed SVG hash salt and no date metadata.
"""

import logging
from pathlib import Path
from typing import Dict, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from scipy.stats import gaussian_kde  # noqa: E402

from src.history import activity_density  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams.update({
    "svg.hashsalt": "indoor-air-sim",
    "svg.fonttype": "none",
    "font.size": 9,
})

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OSError(f"cannot write chart {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.info(f"Chart written to {path}")
    return path


def _hours(minutes) -> np.ndarray:
    return np.asarray(minutes, dtype=float) / 60.0


def plot_place_timelines(places_csv: PathLike, out_path: PathLike) -> Path:
    """CO2 and quanta of every place, one line per place, from places.csv (or a densified table)."""
    frame = pd.read_csv(places_csv)
    fig, (ax_co2, ax_quanta) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for place, rows in frame.groupby("place", sort=False):
        ax_co2.plot(_hours(rows["time"]), rows["co2"], label=place, linewidth=1)
        ax_quanta.plot(_hours(rows["time"]), rows["quanta"], label=place, linewidth=1)
    ax_co2.set_ylabel("CO2 [ppm]")
    ax_quanta.set_ylabel("quanta [1/m3]")
    ax_quanta.set_xlabel("time [h]")
    if not frame.empty:
        ax_co2.legend(fontsize=6, ncol=2, loc="upper left")
    return _save(fig, out_path)


def plot_activity_density(persons_csv: PathLike, out_path: PathLike, bin_minutes: int = 15) -> Path:
    frame = pd.read_csv(persons_csv)
    density = activity_density(frame, bin_minutes)
    fig, ax = plt.subplots(figsize=(9, 4))
    for event in density.columns:
        ax.plot(_hours(density.index), density[event], label=event, drawstyle="steps-post")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("people")
    if not density.empty:
        ax.legend(fontsize=7)
    return _save(fig, out_path)


def _density_curve(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if values.size < 2 or np.ptp(values) == 0.0:
        # a spike where the constant sample sits
        curve = np.zeros_like(grid)
        if values.size:
            curve[int(np.argmin(np.abs(grid - values[0])))] = 1.0
        return curve
    curve = gaussian_kde(values)(grid)
    return curve / curve.max()


def plot_distribution_ridges(metrics_csv: PathLike, out_path: PathLike, parameter: str = "max_co2") -> Path:
    """
    One ridge per place from place_metrics.csv of a batch.

    Each ridge is a density polygon scaled to unit height and offset by its
    row; NaN samples (excluded quanta) are dropped.
    """
    frame = pd.read_csv(metrics_csv)
    groups = [(place, rows[parameter].dropna().to_numpy()) for place, rows in frame.groupby("place", sort=False)]
    values = np.concatenate([v for _, v in groups]) if groups else np.array([])
    fig, ax = plt.subplots(figsize=(8, 0.5 * max(len(groups), 2) + 1))
    if values.size:
        low, high = values.min(), values.max()
        pad = 0.05 * (high - low) if high > low else 1.0
        grid = np.linspace(low - pad, high + pad, 256)
        for row, (place, sample) in enumerate(groups):
            curve = _density_curve(sample, grid) * 0.9
            ax.fill_between(grid, row, row + curve, alpha=0.6, linewidth=0.5)
        ax.set_yticks(range(len(groups)))
        ax.set_yticklabels([place for place, _ in groups])
    ax.set_xlabel(parameter)
    return _save(fig, out_path)


def plot_building_densities(building_csvs: Dict[str, PathLike], out_path: PathLike) -> Path:
    """Building max CO2 and mean quanta densities, one curve per experiment."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, parameter in zip(axes, ("max_co2", "mean_quanta")):
        samples = {
            label: pd.read_csv(path)[parameter].dropna().to_numpy()
            for label, path in building_csvs.items()
        }
        values = np.concatenate(list(samples.values())) if samples else np.array([])
        if values.size:
            low, high = values.min(), values.max()
            pad = 0.05 * (high - low) if high > low else 1.0
            grid = np.linspace(low - pad, high + pad, 256)
            for label, sample in samples.items():
                ax.plot(grid, _density_curve(sample, grid), label=label)
            ax.legend(fontsize=7)
        ax.set_xlabel(parameter)
    return _save(fig, out_path)


def plot_validation(validation_csv: PathLike, out_path: PathLike) -> Path:
    frame = pd.read_csv(validation_csv)
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(_hours(frame["time"]), frame["co2"], color="tab:blue", label="simulated CO2")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("CO2 [ppm]")
    occupants = ax.twinx()
    occupants.step(_hours(frame["time"]), frame["occupants"], where="post", color="tab:gray", linewidth=0.8)
    occupants.set_ylabel("occupants")
    ax.legend(loc="upper left")
    return _save(fig, out_path)


def plot_cv_convergence(curves_csv: PathLike, out_path: PathLike) -> Path:
    """
    CV against run count for the critical outcome parameters, from cv_convergence.csv.

    One panel per (level, parameter). Thin lines are single (entity,
    repetition) curves; the thick line is the mean over them.
    """
    frame = pd.read_csv(curves_csv)
    panels = list(frame.groupby(["level", "parameter"], sort=False))
    fig, axes = plt.subplots(1, max(len(panels), 1), figsize=(3.2 * max(len(panels), 1), 3.5), squeeze=False)
    for ax, ((level, parameter), rows) in zip(axes[0], panels):
        for _, curve in rows.groupby(["entity", "repetition"], sort=False):
            ax.plot(curve["s_run"], curve["cv"], color="tab:gray", alpha=0.25, linewidth=0.5)
        mean = rows.groupby("s_run")["cv"].mean()
        ax.plot(mean.index, mean.to_numpy(), color="tab:blue", linewidth=1.5, marker="o", markersize=3)
        ax.set_xscale("log")
        ax.set_title(f"{level} {parameter}", fontsize=8)
        ax.set_xlabel("S_run")
    axes[0][0].set_ylabel("CV")
    return _save(fig, out_path)
