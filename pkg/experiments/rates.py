# experiments/rates.py
# log-log slope fits with Student-t confidence bands for the convergence sweeps
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

RATE_COLUMNS = ('arm', 'metric', 'slope', 'slope_lo', 'slope_hi', 'points', 'flag')
SERIES_COLUMNS = ('parameter', 'metric', 'value')

MIN_POINTS = 3

TOO_FEW_POINTS = 'too_few_points'
NONPOSITIVE = 'nonpositive_values'
DEGENERATE = 'degenerate_parameters'


@dataclass(frozen=True)
class RateRow:
    arm: str
    metric: str
    slope: float
    slope_lo: float
    slope_hi: float
    points: int
    flag: str = ''

    @property
    def fitted(self):
        return not self.flag


def fit_slope(parameters, values, confidence=0.95):
    """
    Least-squares slope of log(value) against log(parameter) and its
    two-sided t band. Returns (slope, lo, hi, flag); the numbers are nan when flagged.
    """
    x = np.asarray(parameters, dtype=float)
    y = np.asarray(values, dtype=float)
    nan = (math.nan, math.nan, math.nan)
    if x.size < MIN_POINTS:
        return (*nan, TOO_FEW_POINTS)
    if np.any(y <= 0) or np.any(x <= 0) or not np.all(np.isfinite(y)):
        return (*nan, NONPOSITIVE)
    if np.unique(x).size < 2:
        return (*nan, DEGENERATE)
    fit = stats.linregress(np.log(x), np.log(y))
    half = float(stats.t.ppf(0.5 + 0.5 * confidence, x.size - 2)) * float(fit.stderr)
    return float(fit.slope), float(fit.slope) - half, float(fit.slope) + half, ''


@dataclass
class RateTable:
    rows: list = field(default_factory=list)
    # arm -> metric -> [(parameter, value)]
    series: dict = field(default_factory=dict)

    def add_point(self, arm, metric, parameter, value):
        self.series.setdefault(arm, {}).setdefault(metric, []).append((float(parameter), float(value)))

    def points(self, arm, metric):
        """(parameter, value) pairs sorted by decreasing parameter."""
        return sorted(self.series.get(arm, {}).get(metric, []), key=lambda pv: -pv[0])

    def fit(self, confidence=0.95):
        self.rows = []
        for arm in sorted(self.series):
            for metric in sorted(self.series[arm]):
                pairs = self.points(arm, metric)
                slope, lo, hi, flag = fit_slope([p for p, _ in pairs], [v for _, v in pairs], confidence)
                if flag:
                    logger.warning(f"{arm}/{metric}: no slope fitted ({flag}, {len(pairs)} points)")
                self.rows.append(RateRow(arm, metric, slope, lo, hi, len(pairs), flag))
        return self.rows

    def get(self, arm, metric):
        for row in self.rows:
            if row.arm == arm and row.metric == metric:
                return row
        raise KeyError((arm, metric))

    def write_series_csv(self, arm, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(SERIES_COLUMNS)
            for metric in sorted(self.series.get(arm, {})):
                for parameter, value in self.points(arm, metric):
                    writer.writerow([repr(parameter), metric, repr(value)])
        return path

    def write_rates_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(RATE_COLUMNS)
            for row in self.rows:
                writer.writerow([row.arm, row.metric, repr(row.slope), repr(row.slope_lo), repr(row.slope_hi),
                                 row.points, row.flag])
        return path
