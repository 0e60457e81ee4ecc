"""Convergence and overfitting indicators computed from a loss curve.

Six per-run metrics: final train/test loss, an overfitting score, the tail
slope of the train curve with asymmetric spreads, the trainability (area
under the train curve) and the runtime.  The slope statistics are computed
over the last tenth of the curve: two disjoint averaging windows of
m = max(1, ceil(n/20)) epochs give the mean slope, and the one-epoch
differences of the same tail split at that mean give sigma+ / sigma-.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridrunError


class IndicatorError(GridrunError):
    pass


class CurveTooShort(IndicatorError):
    pass


@dataclass
class LossCurve:
    """Per-epoch train/test losses, epoch index 1..n."""

    train: list[float] = field(default_factory=list)
    test: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.train) != len(self.test):
            raise IndicatorError(
                f"train/test length mismatch: {len(self.train)} vs {len(self.test)}"
            )
        if len(self.train) == 0:
            raise IndicatorError("empty loss curve")
        for value in self.train + self.test:
            if not math.isfinite(value):
                raise IndicatorError("loss curve contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.train)


@dataclass
class IndicatorSet:
    final_train_loss: float
    final_test_loss: float
    overfitting: float
    slope_mean: float
    slope_sigma_plus: float
    slope_sigma_minus: float
    trainability: float
    runtime_s: float

    def to_dict(self) -> dict:
        return {
            "final_train_loss": self.final_train_loss,
            "final_test_loss": self.final_test_loss,
            "overfitting": self.overfitting,
            "slope_mean": self.slope_mean,
            "slope_sigma_plus": self.slope_sigma_plus,
            "slope_sigma_minus": self.slope_sigma_minus,
            "trainability": self.trainability,
            "runtime_s": self.runtime_s,
        }


RANGE_EPSILON = 1e-12


def overfitting(curve: LossCurve) -> float:
    """Final train/test gap normalized by the global range of both curves.

    A degenerate range (both curves essentially constant and equal) maps
    to 0 rather than dividing by zero.
    """
    gap = abs(curve.test[-1] - curve.train[-1])
    both = curve.train + curve.test
    spread = max(both) - min(both)
    if spread < RANGE_EPSILON:
        return 0.0
    return gap / spread


def _population_std(values: list[float]) -> float:
    # Spread of fewer than two samples is taken as 0.
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float)))


def slope_stats(
    curve: LossCurve, literal_normalization: bool = False
) -> tuple[float, float, float]:
    """Tail slope of the train curve and its asymmetric spreads.

    Returns (slope_mean, sigma_plus, sigma_minus).  slope_mean is the
    difference of the means of the last two m-epoch windows divided by m,
    i.e. an estimate of the per-epoch slope.  With
    ``literal_normalization=True`` the division by m is dropped and the
    value is the raw difference of window means (m times larger).

    sigma+/sigma- are population standard deviations of the one-epoch
    differences over the last ceil(n/10) epochs, split at slope_mean;
    ties enter both sides.
    """
    n = curve.n
    if n < 4:
        raise CurveTooShort(f"slope statistics need n >= 4, got {n}")
    train = np.asarray(curve.train, dtype=float)

    m = max(1, math.ceil(n / 20))
    window1 = train[n - m : n]
    window2 = train[n - 2 * m : n - m]
    mean_difference = float(np.mean(window1) - np.mean(window2))
    slope_mean = mean_difference if literal_normalization else mean_difference / m

    tail = math.ceil(n / 10)
    first_k = max(2, n - tail + 1)
    slopes = [curve.train[k - 1] - curve.train[k - 2] for k in range(first_k, n + 1)]
    sigma_plus = _population_std([s for s in slopes if s >= slope_mean])
    sigma_minus = _population_std([s for s in slopes if s <= slope_mean])
    return slope_mean, sigma_plus, sigma_minus


def trainability(curve: LossCurve) -> float:
    """Area under the train-loss curve (plain epoch sum); smaller is faster."""
    return float(sum(curve.train))


def compute_all(
    curve: LossCurve, runtime_s: float, literal_normalization: bool = False
) -> IndicatorSet:
    """Bundle all six indicators for one run."""
    slope_mean, sigma_plus, sigma_minus = slope_stats(curve, literal_normalization)
    return IndicatorSet(
        final_train_loss=curve.train[-1],
        final_test_loss=curve.test[-1],
        overfitting=overfitting(curve),
        slope_mean=slope_mean,
        slope_sigma_plus=sigma_plus,
        slope_sigma_minus=sigma_minus,
        trainability=trainability(curve),
        runtime_s=runtime_s,
    )


CURVE_HEADER = "epoch,train_loss,test_loss"


def write_curve(path: str | Path, curve: LossCurve) -> None:
    """Write the curve CSV (header, epoch starting at 1, repr-exact floats)."""
    lines = [CURVE_HEADER]
    for i, (tr, te) in enumerate(zip(curve.train, curve.test), start=1):
        lines.append(f"{i},{tr!r},{te!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path: str | Path) -> LossCurve:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CURVE_HEADER:
        raise IndicatorError(f"{path}: missing curve header")
    train, test = [], []
    for i, line in enumerate(lines[1:], start=1):
        epoch_str, train_str, test_str = line.split(",")
        if int(epoch_str) != i:
            raise IndicatorError(f"{path}: epoch index {epoch_str} at row {i}")
        train.append(float(train_str))
        test.append(float(test_str))
    return LossCurve(train=train, test=test)
