"""Trajectory post-processing: records, rate fits, multi-seed aggregation.

Rate fitting is a least-squares slope of log(metric) against log(t+1) over a
tail window.  "Almost sure" statements are probed at desk scale as multi-seed
unanimity against fixed thresholds; the aggregate reports both the min-over-
prefix gradient metric and the tail-window minimum, the latter being the
stricter stand-in for asymptotic behavior.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CSV_COLUMNS = ("t", "J_theta", "grad_norm", "v_norm_sq", "lyapunov",
               "running_min_grad", "alpha")

METRICS = ("j_theta", "grad_norm_sq")

# Additive floor guarding log(0); fits where most of the window sits at the
# floor are declared inconclusive (converged past measurability).
RATE_FLOOR = 1e-30

# A fit counts as consistent with decay target lambda when the slope beats
# -(lambda - RATE_SLACK); finite-window log-log slopes carry this much noise.
RATE_SLACK = 0.1


@dataclass(frozen=True)
class RunRecord:
    """One trajectory: per-step metrics plus identity and terminal flags."""

    config_hash: str
    seed: int
    t: np.ndarray
    j_theta: np.ndarray
    grad_norm: np.ndarray
    v_norm_sq: np.ndarray
    lyapunov: np.ndarray
    running_min_grad: np.ndarray
    alpha: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        n = len(self.t)
        for name in ("j_theta", "grad_norm", "v_norm_sq", "lyapunov",
                     "running_min_grad", "alpha"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if n and (np.any(np.diff(self.t) != 1) or self.t[0] != 0):
            raise ValueError("record rows must cover t = 0..n-1 without gaps")

    @property
    def rows(self) -> int:
        return len(self.t)

    def terminal_summary(self) -> dict:
        last = self.rows - 1
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "diverged": self.diverged,
            "rows": self.rows,
            "terminal_t": int(self.t[last]) if self.rows else None,
            "terminal_j_theta": float(self.j_theta[last]) if self.rows else None,
            "terminal_grad_norm": float(self.grad_norm[last]) if self.rows else None,
            "min_grad_norm": float(self.running_min_grad[last]) if self.rows else None,
            "terminal_lyapunov": float(self.lyapunov[last]) if self.rows else None,
            "lyapunov_increases": lyapunov_increase_count(self) if self.rows else None,
        }


def record_filename(config_hash: str, seed: int) -> str:
    return f"run_{config_hash}_s{seed}.csv"


def save_record_csv(record: RunRecord, path: str) -> None:
    """Write the metric rows; float cells use shortest round-trip repr so the
    bytes are a pure function of the trajectory."""
    cols = (record.t, record.j_theta, record.grad_norm, record.v_norm_sq,
            record.lyapunov, record.running_min_grad, record.alpha)
    with open(path, "w", newline="\n") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for i in range(record.rows):
            f.write(f"{int(cols[0][i])}," + ",".join(repr(float(c[i])) for c in cols[1:]) + "\n")


def load_record_csv(path: str, config_hash: str = "", seed: int = 0,
                    diverged: bool = False) -> RunRecord:
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header in {path}: {header}")
        data = [line.strip().split(",") for line in f if line.strip()]
    arr = np.array(data, dtype=float) if data else np.empty((0, len(CSV_COLUMNS)))
    return RunRecord(
        config_hash=config_hash, seed=seed,
        t=arr[:, 0].astype(int), j_theta=arr[:, 1], grad_norm=arr[:, 2],
        v_norm_sq=arr[:, 3], lyapunov=arr[:, 4], running_min_grad=arr[:, 5],
        alpha=arr[:, 6], diverged=diverged,
    )


def load_records_dir(directory: str) -> list:
    """Load every record listed in the directory's summary.json."""
    summary_path = os.path.join(directory, "summary.json")
    if not os.path.exists(summary_path):
        raise FileNotFoundError(f"no summary.json in {directory}")
    with open(summary_path) as f:
        summary = json.load(f)
    records = []
    for entry in summary.get("records", []):
        records.append(load_record_csv(
            os.path.join(directory, entry["csv"]),
            config_hash=entry["config_hash"], seed=entry["seed"],
            diverged=entry["diverged"]))
    if not records:
        raise ValueError(f"summary.json in {directory} lists no records")
    return records


def lyapunov_increase_count(record: RunRecord, burn_in: int = 10,
                            rel_tol: float = 1e-12) -> int:
    """Number of strict one-step increases of the monitored V after burn-in."""
    v = record.lyapunov
    if len(v) <= burn_in + 1:
        return 0
    seg = v[burn_in:]
    return int(np.sum(seg[1:] > seg[:-1] * (1.0 + rel_tol) + 1e-15))


@dataclass(frozen=True)
class RateEstimate:
    fitted_exponent: float
    window: tuple
    r_squared: float
    classification: str  # o_rate_consistent | inconsistent | inconclusive
    target_lambda: float
    floor_fraction: float = 0.0
    curvature_gap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "fitted_exponent": self.fitted_exponent,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "classification": self.classification,
            "target_lambda": self.target_lambda,
            "floor_fraction": self.floor_fraction,
            "curvature_gap": self.curvature_gap,
        }


# Number of logarithmically spaced bins the fit window is collapsed into.
# Bin means of log(metric) tame the heavy-tailed per-step noise; weighting
# by sqrt(count) favors the early bins, which average more noise spans.
RATE_BINS = 16

# A fit is rejected as not-power-law-shaped when the slopes of the two
# window halves disagree by more than this.  Exponential decay steepens on a
# log-log axis, so its half-slopes disagree by multiples of this limit, while
# noisy genuine power laws at desk-scale exponents stay under it.
SHAPE_GAP_LIMIT = 3.0


def _weighted_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple:
    slope, intercept = np.polyfit(x, y, 1, w=w)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_sq = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r_sq


def _log_bins(ts: np.ndarray, values: np.ndarray, n_bins: int) -> tuple:
    """Per-bin means of (log t, log value) over log-spaced bins, with counts."""
    edges = np.unique(np.geomspace(ts[0] + 1.0, ts[-1] + 2.0, n_bins + 1))
    log_t = np.log(ts + 1.0)
    log_y = np.log(values + RATE_FLOOR)
    idx = np.digitize(log_t, np.log(edges)) - 1
    xs, ys, counts = [], [], []
    for b in range(len(edges) - 1):
        in_bin = idx == b
        n = int(in_bin.sum())
        if n:
            xs.append(float(log_t[in_bin].mean()))
            ys.append(float(log_y[in_bin].mean()))
            counts.append(n)
    return np.array(xs), np.array(ys), np.array(counts, dtype=float)


def fit_rate(record: RunRecord, metric: str = "j_theta", tail_fraction: float = 0.8,
             target_lambda: float = 0.5) -> RateEstimate:
    """Fit the decay exponent of a metric over the trajectory's tail.

    Least-squares slope of log(metric + floor) against log(t + 1), computed
    over log-spaced bin means of the window starting at
    max(10, 0.2*horizon, (1-tail_fraction)*horizon).

    Classification: ``inconclusive`` when most of the window sits at the
    floor; ``o_rate_consistent`` when the slope beats -(target - 0.1) and
    the two window halves agree on the slope (power-law shape);
    ``inconsistent`` otherwise.  The half-window slope gap rejects
    exponential decay, whose log-log curvature makes the halves disagree
    wildly, without tripping on noisy genuine power laws.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if not 0.0 < tail_fraction <= 0.9:
        raise ValueError(f"tail_fraction must lie in (0, 0.9], got {tail_fraction}")
    if record.rows < 100:
        raise ValueError(f"need at least 100 rows to fit a rate, got {record.rows}")

    horizon = int(record.t[-1])
    t_start = max(10, math.ceil(0.2 * horizon), math.ceil((1.0 - tail_fraction) * horizon))
    sel = record.t >= t_start
    ts = record.t[sel].astype(float)
    values = record.j_theta[sel] if metric == "j_theta" else record.grad_norm[sel] ** 2
    window = (t_start, horizon)

    floor_fraction = float(np.mean(values < RATE_FLOOR)) if len(values) else 1.0
    if record.diverged or len(values) < 10 or floor_fraction > 0.5:
        return RateEstimate(math.nan, window, 0.0, "inconclusive", target_lambda,
                            floor_fraction)

    x, y, counts = _log_bins(ts, values, RATE_BINS)
    w = np.sqrt(counts)
    slope, r_sq = _weighted_slope(x, y, w)
    half = len(x) // 2
    gap = 0.0
    if half >= 2 and len(x) - half >= 2:
        slope_lo, _ = _weighted_slope(x[:half], y[:half], w[:half])
        slope_hi, _ = _weighted_slope(x[half:], y[half:], w[half:])
        gap = abs(slope_hi - slope_lo)

    power_law_shape = gap <= SHAPE_GAP_LIMIT
    consistent = power_law_shape and slope <= -(target_lambda - RATE_SLACK)
    cls = "o_rate_consistent" if consistent else "inconsistent"
    return RateEstimate(slope, window, r_sq, cls, target_lambda, floor_fraction, gap)


@dataclass(frozen=True)
class SeedAggregate:
    """Cross-seed summary of one configuration's records."""

    config_hash: str
    n_records: int
    n_diverged: int
    seeds: tuple
    terminal_j: tuple
    min_grad: tuple          # min-over-prefix |grad| at the horizon, per seed
    tail_min_grad: tuple     # min |grad| over the last fifth of each trajectory
    terminal_j_quantiles: tuple
    min_grad_quantiles: tuple
    grad_threshold: Optional[float] = None
    fraction_min_grad_below: Optional[float] = None
    fraction_tail_min_below: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "n_records": self.n_records,
            "n_diverged": self.n_diverged,
            "seeds": list(self.seeds),
            "terminal_j": list(self.terminal_j),
            "min_grad": list(self.min_grad),
            "tail_min_grad": list(self.tail_min_grad),
            "terminal_j_quantiles": list(self.terminal_j_quantiles),
            "min_grad_quantiles": list(self.min_grad_quantiles),
            "grad_threshold": self.grad_threshold,
            "fraction_min_grad_below": self.fraction_min_grad_below,
            "fraction_tail_min_below": self.fraction_tail_min_below,
        }


QUANTS = (0.0, 0.25, 0.5, 0.75, 1.0)


def aggregate_seeds(records: Sequence[RunRecord],
                    grad_threshold: Optional[float] = None,
                    tail_fraction: float = 0.2) -> SeedAggregate:
    """Summarize >= 2 records of the same configuration across seeds.

    Diverged records are counted and excluded from the statistics.  Output is
    invariant to the input order (records are sorted by seed internally).
    """
    if len(records) < 1:
        raise ValueError("need at least one record")
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        raise ValueError(f"records mix config hashes: {sorted(hashes)}")

    ordered = sorted(records, key=lambda r: r.seed)
    live = [r for r in ordered if not r.diverged and r.rows > 0]
    n_div = len(ordered) - len(live)

    terminal_j = tuple(float(r.j_theta[-1]) for r in live)
    min_grad = tuple(float(r.running_min_grad[-1]) for r in live)
    tail_min = tuple(
        float(np.min(r.grad_norm[int((1.0 - tail_fraction) * (r.rows - 1)):]))
        for r in live)

    def quants(vals):
        if not vals:
            return tuple(math.nan for _ in QUANTS)
        return tuple(float(q) for q in np.quantile(vals, QUANTS))

    frac_min = frac_tail = None
    if grad_threshold is not None and live:
        frac_min = float(np.mean([g < grad_threshold for g in min_grad]))
        frac_tail = float(np.mean([g < grad_threshold for g in tail_min]))

    return SeedAggregate(
        config_hash=records[0].config_hash,
        n_records=len(ordered),
        n_diverged=n_div,
        seeds=tuple(r.seed for r in ordered),
        terminal_j=terminal_j,
        min_grad=min_grad,
        tail_min_grad=tail_min,
        terminal_j_quantiles=quants(terminal_j),
        min_grad_quantiles=quants(min_grad),
        grad_threshold=grad_threshold,
        fraction_min_grad_below=frac_min,
        fraction_tail_min_below=frac_tail,
    )
