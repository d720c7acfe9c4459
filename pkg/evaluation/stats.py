"""
Trial Statistics
Five-trial ranges, "mean(low,high)" cells and two-sided paired t-tests
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

from shared.constants import Config


@dataclass(frozen=True)
class TrialSet:
    """Per-trial aggregate scores of one configuration"""
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) != Config.N_TRIALS:
            raise ValueError(f"a trial set holds exactly {Config.N_TRIALS} values, got {len(values)}")
        object.__setattr__(self, "values", values)


def trial_range(trials: TrialSet) -> Tuple[float, float, float]:
    """(mean, worst, best) of the trials"""
    values = np.asarray(trials.values, dtype=np.float64)
    return float(values.mean()), float(values.min()), float(values.max())


def format_cell(mean: float, low: float, high: float, digits: int = 1) -> str:
    """'96.2(96.0,96.5)'"""
    return f"{mean:.{digits}f}({low:.{digits}f},{high:.{digits}f})"


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """
    Paired t statistic on d = a - b with n - 1 degrees of freedom.

    Returns:
        (t, two-sided p)

    Raises:
        ValueError: "degenerate" when n < 2 or the differences have zero variance
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError(f"degenerate: paired t-test needs n >= 2, got {n}")
    diffs = a - b
    sd = float(diffs.std(ddof=1))
    if sd <= 1e-12 * max(1.0, abs(float(diffs.mean()))):
        raise ValueError("degenerate: differences have zero variance")
    t = float(diffs.mean() / (sd / np.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return t, p


@dataclass(frozen=True)
class TrialComparison:
    """Our trials against a baseline's, paired by trial index"""
    mean: float
    low: float
    high: float
    baseline_mean: float
    baseline_low: float
    baseline_high: float
    improvement: float
    effect_size: float
    t: float
    p: float


def compare_trials(ours: TrialSet, baseline: TrialSet) -> TrialComparison:
    """Mean improvement, Cohen's d on the paired differences, and the paired t-test"""
    t, p = paired_t_test(ours.values, baseline.values)
    diffs = np.asarray(ours.values) - np.asarray(baseline.values)
    mean, low, high = trial_range(ours)
    baseline_mean, baseline_low, baseline_high = trial_range(baseline)
    return TrialComparison(
        mean=mean,
        low=low,
        high=high,
        baseline_mean=baseline_mean,
        baseline_low=baseline_low,
        baseline_high=baseline_high,
        improvement=mean - baseline_mean,
        effect_size=float(diffs.mean() / diffs.std(ddof=1)),
        t=t,
        p=p,
    )
