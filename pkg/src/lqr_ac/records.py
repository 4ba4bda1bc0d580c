"""Per-run traces and cross-seed aggregation."""
from dataclasses import dataclass, field

import numpy as np

COLUMNS = (
    "t",
    "samples",
    "critic_err_sq",
    "critic_err_running_avg",
    "actor_gap",
    "actor_gap_running_avg",
    "rel_K_err",
    "rho_closed_loop",
    "eta",
    "J_Kt",
)
RAW_COLUMNS = ("t", "samples", "critic_err_sq", "actor_gap", "rel_K_err", "rho_closed_loop", "eta", "J_Kt")
METRICS = COLUMNS[2:]

COMPLETED = "completed"
UNSTABLE = "unstable"
NONFINITE = "nonfinite"
SINGULAR = "singular"


@dataclass
class RunRecord:
    """Trace of one algorithm run on a fixed metric grid.

    ``rows`` is a float array with one row per trace point and columns
    :data:`COLUMNS`. Running averages are recomputed from the raw columns by
    :meth:`finalize` so they always agree with them.
    """

    algorithm: str
    seed: int
    config_hash: str = ""
    rows: np.ndarray = field(default_factory=lambda: np.empty((0, len(COLUMNS))))
    status: str = COMPLETED
    message: str = ""
    stability_violations: int = 0
    monitor: dict = field(default_factory=dict)
    K_final: np.ndarray = None

    def column(self, name):
        return self.rows[:, COLUMNS.index(name)]

    @property
    def ok(self):
        return self.status == COMPLETED


class TraceBuilder:
    def __init__(self):
        self._raw = []

    def add(self, **values):
        self._raw.append([float(values.get(c, np.nan)) for c in RAW_COLUMNS])

    def __len__(self):
        return len(self._raw)

    def build(self):
        raw = np.asarray(self._raw, dtype=float).reshape(-1, len(RAW_COLUMNS))
        return with_running_averages(raw)


def running_average(values):
    values = np.asarray(values, dtype=float)
    return np.cumsum(values) / np.arange(1, values.size + 1)


def with_running_averages(raw):
    out = np.empty((raw.shape[0], len(COLUMNS)))
    for j, name in enumerate(RAW_COLUMNS):
        out[:, COLUMNS.index(name)] = raw[:, j]
    out[:, COLUMNS.index("critic_err_running_avg")] = running_average(raw[:, RAW_COLUMNS.index("critic_err_sq")])
    out[:, COLUMNS.index("actor_gap_running_avg")] = running_average(raw[:, RAW_COLUMNS.index("actor_gap")])
    return out


@dataclass
class AggregateRecord:
    """Per-grid-point mean and 95% normal-approximation CI half-width."""

    t: np.ndarray
    samples: np.ndarray
    mean: dict
    ci: dict
    n_runs: int
    n_excluded: int


def aggregate(records, z=1.96):
    """Aggregate completed runs sharing a trace grid, ordered by seed."""
    used = sorted((r for r in records if r.ok), key=lambda r: r.seed)
    excluded = len(records) - len(used)
    if not used:
        return AggregateRecord(np.empty(0), np.empty(0), {}, {}, 0, excluded)
    n_rows = min(r.rows.shape[0] for r in used)
    stack = np.stack([r.rows[:n_rows] for r in used])
    mean, ci = {}, {}
    for name in METRICS:
        vals = stack[:, :, COLUMNS.index(name)]
        mean[name] = vals.mean(axis=0)
        if len(used) > 1:
            ci[name] = z * vals.std(axis=0, ddof=1) / np.sqrt(len(used))
        else:
            ci[name] = np.zeros(n_rows)
    return AggregateRecord(
        t=stack[0, :, COLUMNS.index("t")],
        samples=stack[0, :, COLUMNS.index("samples")],
        mean=mean,
        ci=ci,
        n_runs=len(used),
        n_excluded=excluded,
    )


def samples_to_reach(agg, metric, target):
    """Smallest cumulative sample count at which the aggregate mean is <= target (inf if never)."""
    hit = np.nonzero(agg.mean[metric] <= target)[0]
    return float(agg.samples[hit[0]]) if hit.size else np.inf


def value_at_budget(agg, metric, budget):
    """Aggregate mean at the last grid point whose sample count does not exceed ``budget``."""
    idx = np.nonzero(agg.samples <= budget)[0]
    return float(agg.mean[metric][idx[-1]]) if idx.size else np.nan
