"""
Hourly series ingestion, the two-stage causal scaling, windowing and the
chronological train/test split.

The CSV contract is `timestamp,<asset1>,<asset2>,...` with timestamps in epoch
seconds on hour boundaries. Internally timestamps are kept as epoch hours.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ContractError, DegenerateWindowError, DimensionError
from tensor import derive_seed

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600
TWO_WEEKS_HOURS = 14 * 24
DEFAULT_SEQ_LEN = 30
DEFAULT_TRAIN_RATIO = 0.8


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    missing_hours: int = 0
    train_windows: Optional[int] = None
    test_windows: Optional[int] = None
    train_hours: Optional[int] = None
    test_hours: Optional[int] = None

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.rows_dropped

    def log(self):
        logger.info(
            "📥 Ingest: %d rows read, %d dropped (missing values or gaps), %d missing hours",
            self.rows_read, self.rows_dropped, self.missing_hours,
        )
        if self.train_windows is not None:
            logger.info(
                "📊 Windows: %d train / %d test (raw hours: %d train / %d test)",
                self.train_windows, self.test_windows, self.train_hours, self.test_hours,
            )


@dataclass(frozen=True)
class SeriesFrame:
    """Aligned hourly series, one column per asset"""

    timestamps: np.ndarray
    values: np.ndarray = field(repr=False)
    columns: Tuple[str, ...]
    target_column: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape != (len(self.timestamps), len(self.columns)):
            raise DimensionError(
                f"SeriesFrame values {self.values.shape} vs {len(self.timestamps)} timestamps "
                f"and {len(self.columns)} columns"
            )
        if self.target_column not in self.columns:
            raise ContractError(f"target column {self.target_column!r} not in {list(self.columns)}")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ContractError("SeriesFrame timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def target_index(self) -> int:
        return self.columns.index(self.target_column)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def with_values(self, values: np.ndarray, timestamps: Optional[np.ndarray] = None) -> "SeriesFrame":
        return SeriesFrame(self.timestamps if timestamps is None else timestamps, values, self.columns, self.target_column)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.columns))
        df.insert(0, "timestamp", self.timestamps.astype(np.int64) * SECONDS_PER_HOUR)
        return df

    def to_csv(self, path: Union[str, Path]):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_dataframe(cls, df: pd.DataFrame, target_column: Optional[str] = None) -> "SeriesFrame":
        columns = tuple(c for c in df.columns if c != "timestamp")
        if not columns:
            raise ContractError("series frame needs at least one value column")
        seconds = df["timestamp"].to_numpy(dtype=np.int64)
        return cls(
            timestamps=seconds // SECONDS_PER_HOUR,
            values=df[list(columns)].to_numpy(dtype=np.float64),
            columns=columns,
            target_column=target_column or columns[0],
        )


def count_missing_hours(hours: np.ndarray) -> int:
    if len(hours) < 2:
        return 0
    return int(np.sum(np.diff(hours) - 1))


def clean_frame(df: pd.DataFrame) -> Tuple[pd.DataFrame, IngestReport]:
    """Validate timestamps, sort, and drop rows with missing or duplicated values"""
    if "timestamp" not in df.columns:
        raise ContractError(f"CSV header must start with 'timestamp', got {list(df.columns)}")
    report = IngestReport(rows_read=len(df))
    if len(df) and (df["timestamp"].to_numpy(dtype=np.int64) % SECONDS_PER_HOUR != 0).any():
        raise ContractError("timestamps must be epoch seconds on hour boundaries")
    cleaned = (
        df.dropna()
        .drop_duplicates(subset="timestamp", keep="first")
        .sort_values("timestamp", kind="mergesort")
        .reset_index(drop=True)
    )
    report.rows_dropped = len(df) - len(cleaned)
    report.missing_hours = count_missing_hours(cleaned["timestamp"].to_numpy(dtype=np.int64) // SECONDS_PER_HOUR)
    return cleaned, report


def load_series_csv(path: Union[str, Path], target_column: Optional[str] = None) -> Tuple[SeriesFrame, IngestReport]:
    path = Path(path)
    if not path.exists():
        raise ContractError(f"series CSV not found: {path}")
    cleaned, report = clean_frame(pd.read_csv(path))
    if report.rows_dropped:
        logger.warning("Dropped %d rows with missing values from %s", report.rows_dropped, path)
    return SeriesFrame.from_dataframe(cleaned, target_column), report


def merge_columns(series: Mapping[str, pd.Series], target_column: str) -> Tuple[SeriesFrame, IngestReport]:
    """Inner-join per-asset hourly series (indexed by epoch hour) on their common hours"""
    if not series:
        raise ContractError("merge_columns needs at least one series")
    outer = pd.concat({name: s for name, s in series.items()}, axis=1).sort_index()
    df = outer.reset_index().rename(columns={"index": "timestamp"})
    df.columns = ["timestamp", *series.keys()]
    df["timestamp"] = df["timestamp"].astype(np.int64) * SECONDS_PER_HOUR
    cleaned, report = clean_frame(df)
    return SeriesFrame.from_dataframe(cleaned, target_column), report


# ---------------------------------------------------------------- scaling

def median_offset(median_window: int, shift: int) -> int:
    """Leading entries without a full, shifted median window"""
    return median_window + shift - 1


def moving_median_scale(series, median_window: int = TWO_WEEKS_HOURS, shift: int = 1) -> np.ndarray:
    """out[t] = x[t] / median(x[t-H-W+1 .. t-H]) for the usable range t >= W+H-1.

    Returns only the usable entries; entry j corresponds to series index
    j + median_offset(W, H).
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"moving_median_scale expects a vector, got shape {x.shape}")
    if median_window < 1 or shift < 0:
        raise ContractError(f"need median window >= 1 and shift >= 0, got W={median_window}, H={shift}")
    offset = median_offset(median_window, shift)
    if len(x) <= offset:
        raise ContractError(f"series of length {len(x)} is too short for W={median_window}, H={shift}")
    # medians[j] is the median of x[j-W+1 .. j]
    medians = pd.Series(x).rolling(median_window, min_periods=median_window).median().to_numpy()
    divisors = medians[median_window - 1: len(x) - shift]
    bad = np.flatnonzero(~(divisors > 0))
    if bad.size:
        raise DegenerateWindowError(int(bad[0]) + offset, float(divisors[bad[0]]))
    return x[offset:] / divisors


def minmax_fit_apply(train, test) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Divide both sets by the per-column train maximum; the minimum is taken as 0"""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if train.shape[0] == 0:
        raise ContractError("min-max stage needs a nonempty training set")
    maxima = train.max(axis=0)
    if np.any(~(maxima > 0)):
        raise ContractError(f"min-max stage needs a positive train maximum, got {maxima}")
    return train / maxima, test / maxima, maxima


@dataclass
class ScalerState:
    median_window: int
    shift: int
    maxima: Dict[str, float]

    @property
    def offset(self) -> int:
        return median_offset(self.median_window, self.shift)


# ---------------------------------------------------------------- windows and split

def count_windows(length: int, seq_len: int, horizon: int) -> int:
    return length - seq_len - horizon + 1


def make_windows(frame: Union[SeriesFrame, np.ndarray], seq_len: int = DEFAULT_SEQ_LEN, horizon: int = 1,
                 target_index: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """X[i] = rows i .. i+seq_len-1 (all columns); y[i] = target rows i+seq_len .. i+seq_len+horizon-1"""
    if isinstance(frame, SeriesFrame):
        values, target_index = frame.values, frame.target_index
    else:
        values = np.asarray(frame, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        target_index = 0 if target_index is None else target_index
    if seq_len < 1 or horizon < 1:
        raise ContractError(f"need seq_len >= 1 and horizon >= 1, got {seq_len}, {horizon}")
    n = count_windows(len(values), seq_len, horizon)
    if n < 1:
        raise ContractError(f"{len(values)} rows are too few for seq_len={seq_len}, horizon={horizon}")
    view = np.lib.stride_tricks.sliding_window_view(values, seq_len, axis=0)
    X = np.ascontiguousarray(view[:n].transpose(0, 2, 1))
    targets = np.lib.stride_tricks.sliding_window_view(values[seq_len:, target_index], horizon)
    y = np.ascontiguousarray(targets[:n])
    return X, y


def split_index(n_samples: int, ratio: float = DEFAULT_TRAIN_RATIO) -> int:
    if n_samples < 2:
        raise ContractError(f"need at least 2 samples to split, got {n_samples}")
    if not 0 < ratio < 1:
        raise ContractError(f"train ratio must be in (0, 1), got {ratio}")
    return min(max(int(math.floor(n_samples * ratio)), 1), n_samples - 1)


def split_train_test(samples: Sequence, ratio: float = DEFAULT_TRAIN_RATIO):
    """Chronological split with the boundary at floor(n * ratio)"""
    boundary = split_index(len(samples), ratio)
    return samples[:boundary], samples[boundary:]


# ---------------------------------------------------------------- full pipeline

@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    scaler: ScalerState
    seq_len: int
    horizon: int
    train_ratio: float
    columns: Tuple[str, ...]
    target_column: str
    train_end_hours: np.ndarray = field(repr=False)
    test_end_hours: np.ndarray = field(repr=False)
    # CSV the windows were built from, and the SHA-256 of its bytes
    source: str = ""
    source_digest: str = ""

    def matches(self, seq_len: int, horizon: int, median_window: int, train_ratio: float, target_column: str,
                source_digest: Optional[str] = None, columns: Optional[Sequence[str]] = None) -> bool:
        """Same protocol parameters and, when given, the same source bytes and column set"""
        return (
            self.seq_len == seq_len
            and self.horizon == horizon
            and self.scaler.median_window == median_window
            and self.train_ratio == train_ratio
            and self.target_column == target_column
            and (source_digest is None or self.source_digest == source_digest)
            and (columns is None or set(self.columns) == set(columns))
        )

    def save(self, path: Union[str, Path]):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            X_train=self.X_train, y_train=self.y_train, X_test=self.X_test, y_test=self.y_test,
            maxima=np.array([self.scaler.maxima[c] for c in self.columns]),
            columns=np.array(self.columns), target_column=np.array(self.target_column),
            median_window=self.scaler.median_window, shift=self.scaler.shift,
            seq_len=self.seq_len, horizon=self.horizon, train_ratio=self.train_ratio,
            train_end_hours=self.train_end_hours, test_end_hours=self.test_end_hours,
            source=np.array(self.source), source_digest=np.array(self.source_digest),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PreparedData":
        with np.load(path, allow_pickle=False) as npz:
            columns = tuple(str(c) for c in npz["columns"])
            return cls(
                X_train=npz["X_train"], y_train=npz["y_train"], X_test=npz["X_test"], y_test=npz["y_test"],
                scaler=ScalerState(
                    median_window=int(npz["median_window"]),
                    shift=int(npz["shift"]),
                    maxima=dict(zip(columns, (float(m) for m in npz["maxima"]))),
                ),
                seq_len=int(npz["seq_len"]), horizon=int(npz["horizon"]), train_ratio=float(npz["train_ratio"]),
                columns=columns, target_column=str(npz["target_column"]),
                train_end_hours=npz["train_end_hours"], test_end_hours=npz["test_end_hours"],
                source=str(npz["source"]) if "source" in npz.files else "",
                source_digest=str(npz["source_digest"]) if "source_digest" in npz.files else "",
            )


def prepare_dataset(frame: SeriesFrame, seq_len: int = DEFAULT_SEQ_LEN, horizon: int = 1,
                    median_window: int = TWO_WEEKS_HOURS, train_ratio: float = DEFAULT_TRAIN_RATIO,
                    report: Optional[IngestReport] = None) -> PreparedData:
    """Moving-median stage, then min-max stage fitted on training rows, then windows and split.

    The min-max maxima come from the rows the training windows touch (inputs
    and targets); test rows never enter the fit.
    """
    scaled = np.column_stack([
        moving_median_scale(frame.values[:, j], median_window, horizon) for j in range(len(frame.columns))
    ])
    offset = median_offset(median_window, horizon)
    hours = frame.timestamps[offset:]

    n_windows = count_windows(len(scaled), seq_len, horizon)
    if n_windows < 2:
        raise ContractError(
            f"{len(frame)} rows leave {max(n_windows, 0)} windows after scaling "
            f"(W={median_window}, seq_len={seq_len}, horizon={horizon}); need at least 2"
        )
    n_train = split_index(n_windows, train_ratio)
    fit_rows = n_train + seq_len + horizon - 1
    train_rows, rest_rows, maxima = minmax_fit_apply(scaled[:fit_rows], scaled[fit_rows:])
    normalized = np.concatenate([train_rows, rest_rows], axis=0)

    X, y = make_windows(normalized, seq_len, horizon, frame.target_index)
    ends = hours[seq_len - 1: seq_len - 1 + n_windows]
    prepared = PreparedData(
        X_train=X[:n_train], y_train=y[:n_train], X_test=X[n_train:], y_test=y[n_train:],
        scaler=ScalerState(median_window, horizon, dict(zip(frame.columns, (float(m) for m in maxima)))),
        seq_len=seq_len, horizon=horizon, train_ratio=train_ratio,
        columns=frame.columns, target_column=frame.target_column,
        train_end_hours=ends[:n_train], test_end_hours=ends[n_train:],
    )
    if report is not None:
        report.train_windows = n_train
        report.test_windows = n_windows - n_train
        report.train_hours = fit_rows
        report.test_hours = len(scaled) - fit_rows
    logger.info("Prepared horizon %d: %d train / %d test windows", horizon, n_train, n_windows - n_train)
    return prepared


# ---------------------------------------------------------------- synthetic series

SYNTHETIC_LEVEL = 10.0
# (period in hours, amplitude) of the daily and half-daily cycles
SYNTHETIC_CYCLES = ((24, 3.0), (12, 2.0))


def synthetic_frame(n_hours: int = 5000, seed: int = 0, n_assets: int = 2, names: Optional[Sequence[str]] = None,
                    start_hour: int = 438288, ar_coef: float = 0.5, noise: float = 0.4) -> SeriesFrame:
    """Daily and half-daily sines plus AR(1) noise around a positive level, one column per asset.

    With the defaults the last-value forecast one hour ahead explains about 84%
    of the variance, a forecaster that knows the cycles and the AR coefficient
    about 97.6%. Six hours ahead the half-daily cycle is in anti-phase, so the
    last value is a poor forecast there.

    The first column is the target; `names` overrides the default SYN0, SYN1, ... labels.
    Asset i is phase-shifted by 2*pi*i/(n_assets + 1).
    """
    if names is not None:
        n_assets = len(names)
    if n_hours < 1 or n_assets < 1:
        raise ContractError(f"need n_hours >= 1 and n_assets >= 1, got {n_hours}, {n_assets}")
    t = np.arange(n_hours, dtype=np.float64)
    columns: List[np.ndarray] = []
    for asset in range(n_assets):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, asset)))
        phase = 2 * np.pi * asset / (n_assets + 1)
        level = SYNTHETIC_LEVEL + sum(amp * np.sin(2 * np.pi * t / period + phase) for period, amp in SYNTHETIC_CYCLES)
        shocks = rng.normal(0.0, noise, n_hours)
        ar = np.zeros(n_hours)
        for i in range(1, n_hours):
            ar[i] = ar_coef * ar[i - 1] + shocks[i]
        columns.append(level + ar)
    names = tuple(names) if names is not None else tuple(f"SYN{asset}" for asset in range(n_assets))
    return SeriesFrame(
        timestamps=np.arange(start_hour, start_hour + n_hours, dtype=np.int64),
        values=np.column_stack(columns),
        columns=names,
        target_column=names[0],
    )
