"""
Experiment harness: configuration, the benchmark models, single runs, the
full (model × horizon × seed) factorial, report tables and checkpoints.

Every benchmark model is recurrent(units, full sequence) -> recurrent(units,
last state) -> dense(horizon), except the last-value baseline which has no
parameters. Metrics are computed on scaled data.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from data import PreparedData, load_series_csv, prepare_dataset
from database import RunStore
from errors import CheckpointError, ContractError, DimensionError
from klines import DEFAULT_ENDPOINT, default_symbols
from recurrent import (
    CANDIDATE_ACTIVATIONS,
    MEMORY_MODES,
    Cell,
    DenseLayer,
    dense_init,
    gru_cell_init,
    lstm_cell_init,
    tkan_cell_init,
    unroll,
)
from splines import MAX_ORDER
from tensor import Tensor, as_tensor, derive_seed
from training import FitHistory, TrainingConfig, fit, per_step_r_squared, predict, r_squared, rmse
from utils import file_digest, load_yaml, run_parallel, stable_fingerprint

logger = logging.getLogger(__name__)

MODEL_KINDS = ("tkan", "gru", "lstm", "naive")
MODEL_LABELS = {"tkan": "TKAN", "gru": "GRU", "lstm": "LSTM", "naive": "Last Value"}
DEFAULT_HORIZONS = [1, 3, 6, 9, 12, 15]
DEFAULT_SEEDS = [0, 1, 2, 3, 4]
MANIFEST_NAME = "manifest.json"
PARAMS_NAME = "params.npz"


# ---------------------------------------------------------------- configuration

@dataclass
class ModelConfig:
    units: int = 100
    spline_orders: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    grid_size: int = 5
    grid_range: List[float] = field(default_factory=lambda: [-1.0, 1.0])
    use_base: bool = True
    candidate_activation: str = "sigmoid"
    memory_mode: str = "vector"
    kan_in: Optional[int] = None
    kan_out: Optional[int] = None
    lstm_forget_bias: float = 1.0

    def __post_init__(self):
        if self.units < 1:
            raise ContractError(f"units must be >= 1, got {self.units}")
        if not self.spline_orders or any(not 0 <= k <= MAX_ORDER for k in self.spline_orders):
            raise ContractError(f"spline orders must be a nonempty list in [0, {MAX_ORDER}], got {self.spline_orders}")
        if len(self.grid_range) != 2 or not self.grid_range[0] < self.grid_range[1]:
            raise ContractError(f"grid_range must be [low, high] with low < high, got {self.grid_range}")
        if self.candidate_activation not in CANDIDATE_ACTIVATIONS:
            raise ContractError(f"candidate_activation must be one of {CANDIDATE_ACTIVATIONS}")
        if self.memory_mode not in MEMORY_MODES:
            raise ContractError(f"memory_mode must be one of {MEMORY_MODES}")


@dataclass
class DataConfig:
    csv: str = "data/frame.csv"
    data_dir: str = "data/klines"
    target_column: str = "BTCUSDT"
    seq_len: int = 30
    median_window: int = 336
    train_ratio: float = 0.8
    symbols: List[str] = field(default_factory=lambda: list(default_symbols()))
    start: str = "2020-01-01"
    # exclusive
    end: str = "2023-01-01"
    endpoint: str = DEFAULT_ENDPOINT

    def __post_init__(self):
        if self.seq_len < 1:
            raise ContractError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.median_window < 1:
            raise ContractError(f"median_window must be >= 1, got {self.median_window}")
        if not 0 < self.train_ratio < 1:
            raise ContractError(f"train_ratio must be in (0, 1), got {self.train_ratio}")


@dataclass
class BenchmarkConfig:
    models: List[str] = field(default_factory=lambda: list(MODEL_KINDS))
    horizons: List[int] = field(default_factory=lambda: list(DEFAULT_HORIZONS))
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        unknown = [m for m in self.models if m not in MODEL_KINDS]
        if unknown or not self.models:
            raise ContractError(f"models must be a nonempty subset of {MODEL_KINDS}, got {self.models}")
        if not self.horizons or any(h < 1 for h in self.horizons) or any(
            b <= a for a, b in zip(self.horizons, self.horizons[1:])
        ):
            raise ContractError(f"horizons must be positive and strictly increasing, got {self.horizons}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ContractError(f"seeds must be a nonempty list of distinct values, got {self.seeds}")
        if self.workers < 1:
            raise ContractError(f"workers must be >= 1, got {self.workers}")


def _section(cls, data: Optional[Mapping[str, Any]], name: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ContractError(f"unknown keys in config section '{name}': {unknown}")
    return cls(**data)


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        unknown = sorted(set(raw) - {"model", "training", "data", "benchmark"})
        if unknown:
            raise ContractError(f"unknown config sections: {unknown}")
        return cls(
            model=_section(ModelConfig, raw.get("model"), "model"),
            training=_section(TrainingConfig, raw.get("training"), "training"),
            data=_section(DataConfig, raw.get("data"), "data"),
            benchmark=_section(BenchmarkConfig, raw.get("benchmark"), "benchmark"),
        )

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.from_dict(load_yaml(path))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def fingerprint(self) -> str:
        """Hash of every setting that changes a run's result (not seeds, horizons or workers)"""
        data = {k: getattr(self.data, k) for k in ("csv", "target_column", "seq_len", "median_window", "train_ratio")}
        return stable_fingerprint({"model": asdict(self.model), "training": asdict(self.training), "data": data})

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Replace benchmark/data fields from CLI flags; None values are ignored"""
        bench = {k: v for k, v in overrides.items() if v is not None and k in {f.name for f in fields(BenchmarkConfig)}}
        data = {k: v for k, v in overrides.items() if v is not None and k in {f.name for f in fields(DataConfig)}}
        return replace(self, benchmark=replace(self.benchmark, **bench), data=replace(self.data, **data))


# ---------------------------------------------------------------- models

@dataclass(frozen=True)
class ForecastModel:
    kind: str
    layers: Tuple[Cell, ...]
    dense: DenseLayer
    input_dim: int
    horizon: int

    def named_parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for index, layer in enumerate(self.layers):
            params.update(layer.parameters(f"rnn{index}."))
        params.update(self.dense.parameters("dense."))
        return params

    def with_parameters(self, params: Mapping[str, Tensor]) -> "ForecastModel":
        layers = tuple(layer.with_parameters(params, f"rnn{i}.") for i, layer in enumerate(self.layers))
        return replace(self, layers=layers, dense=self.dense.with_parameters(params, "dense."))

    def forward(self, X: Tensor) -> Tensor:
        h = as_tensor(X)
        if h.ndim != 3 or h.shape[2] != self.input_dim:
            raise DimensionError(f"{self.kind} model expects [batch × T × {self.input_dim}], got {h.shape}")
        for index, layer in enumerate(self.layers):
            h = unroll(layer, h, return_sequences=index < len(self.layers) - 1)
        return self.dense(h)

    def metadata(self) -> Dict[str, Any]:
        return {"layers": [layer.metadata() for layer in self.layers]}


@dataclass(frozen=True)
class NaiveModel:
    input_dim: int
    horizon: int
    target_index: int = 0
    kind: str = "naive"

    def named_parameters(self) -> Dict[str, Tensor]:
        return {}

    def with_parameters(self, params: Mapping[str, Tensor]) -> "NaiveModel":
        return self

    def forward(self, X: Tensor) -> Tensor:
        return Tensor(naive_last_value(as_tensor(X).data, self.horizon, self.target_index))

    def metadata(self) -> Dict[str, Any]:
        return {"target_index": self.target_index}


Model = Union[ForecastModel, NaiveModel]


def _recurrent_layer(kind: str, config: ModelConfig, input_dim: int, seed: int) -> Cell:
    if kind == "tkan":
        return tkan_cell_init(
            input_dim, config.units, config.spline_orders, seed, config.grid_size, tuple(config.grid_range),
            config.use_base, config.kan_in, config.kan_out, config.candidate_activation, config.memory_mode,
        )
    if kind == "gru":
        return gru_cell_init(input_dim, config.units, seed)
    return lstm_cell_init(input_dim, config.units, seed, config.lstm_forget_bias)


def build_model(kind: str, config: ModelConfig, input_dim: int, horizon: int, seed: int = 0,
                target_index: int = 0) -> Model:
    if kind not in MODEL_KINDS:
        raise ContractError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if input_dim < 1 or horizon < 1:
        raise ContractError(f"need input_dim >= 1 and horizon >= 1, got {input_dim}, {horizon}")
    if kind == "naive":
        return NaiveModel(input_dim, horizon, target_index)
    first = _recurrent_layer(kind, config, input_dim, derive_seed(seed, 0))
    second = _recurrent_layer(kind, config, config.units, derive_seed(seed, 1))
    return ForecastModel(kind, (first, second), dense_init(config.units, horizon, derive_seed(seed, 2)), input_dim, horizon)


def naive_last_value(X, horizon: int, target_index: int = 0) -> np.ndarray:
    """Repeat the last observed target value of every window across the horizon"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] < 1:
        raise ContractError(f"naive baseline needs windows [N × T × d] with T >= 1, got {X.shape}")
    return np.repeat(X[:, -1, target_index][:, None], horizon, axis=1)


# ---------------------------------------------------------------- checkpoints

def checkpoint_save(model: Model, path: Union[str, Path], model_config: Optional[ModelConfig] = None):
    """Write `manifest.json` and `params.npz` into the directory `path`"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = model.named_parameters()
    manifest = {
        "kind": model.kind,
        "input_dim": model.input_dim,
        "horizon": model.horizon,
        "target_index": getattr(model, "target_index", 0),
        "model_config": asdict(model_config) if model_config is not None else None,
        "structure": model.metadata(),
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in params.items()],
    }
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    np.savez(path / PARAMS_NAME, **{name: t.data for name, t in params.items()})


def _read_manifest(path: Path) -> Dict[str, Any]:
    try:
        with open(path / MANIFEST_NAME, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"no checkpoint manifest in {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint manifest in {path}: {e}") from e


def checkpoint_load(path: Union[str, Path], model: Optional[Model] = None) -> Model:
    """Load a checkpoint into `model`, or into a model rebuilt from the manifest"""
    path = Path(path)
    manifest = _read_manifest(path)
    if model is None:
        if manifest.get("model_config") is None and manifest.get("kind") != "naive":
            raise CheckpointError(f"checkpoint in {path} carries no model config; pass a template model")
        try:
            config = ModelConfig(**manifest["model_config"]) if manifest.get("model_config") else ModelConfig()
            model = build_model(manifest["kind"], config, manifest["input_dim"], manifest["horizon"],
                                target_index=manifest.get("target_index", 0))
        except (KeyError, TypeError, ContractError) as e:
            raise CheckpointError(f"checkpoint manifest in {path} does not describe a model: {e}") from e
    elif manifest.get("kind") != model.kind:
        raise CheckpointError(f"checkpoint holds a {manifest.get('kind')} model, template is {model.kind}")

    template = model.named_parameters()
    listed = {entry["name"]: tuple(entry["shape"]) for entry in manifest.get("tensors", [])}
    for name, tensor in template.items():
        if name not in listed:
            raise CheckpointError(f"tensor {name} missing from checkpoint manifest", tensor=name)
        if listed[name] != tensor.shape:
            raise CheckpointError(f"tensor {name} has shape {listed[name]} in the checkpoint, model expects {tensor.shape}",
                                  tensor=name)
    extra = sorted(set(listed) - set(template))
    if extra:
        raise CheckpointError(f"checkpoint has tensors the model lacks: {extra}", tensor=extra[0])
    if not template:
        return model

    try:
        with np.load(path / PARAMS_NAME, allow_pickle=False) as npz:
            arrays = {name: npz[name] for name in template}
    except FileNotFoundError as e:
        raise CheckpointError(f"no parameter file in {path}") from e
    except KeyError as e:
        raise CheckpointError(f"tensor {e.args[0]} missing from the parameter file", tensor=str(e.args[0])) from e
    except (OSError, ValueError) as e:
        raise CheckpointError(f"corrupt parameter file in {path}: {e}") from e
    for name, array in arrays.items():
        if array.shape != template[name].shape:
            raise CheckpointError(f"tensor {name} has shape {array.shape} on disk, model expects {template[name].shape}",
                                  tensor=name)
    return model.with_parameters({name: Tensor(array) for name, array in arrays.items()})


# ---------------------------------------------------------------- runs

@dataclass(frozen=True)
class RunSpec:
    model: str
    horizon: int
    seed: int

    @property
    def name(self) -> str:
        return f"{self.model}_h{self.horizon}_s{self.seed}"

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.model, self.horizon, self.seed)


@dataclass
class RunResult:
    model: str
    horizon: int
    seed: int
    status: str = "ok"
    r2: Optional[float] = None
    rmse: Optional[float] = None
    epochs: int = 0
    best_epoch: int = 0
    step_r2: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def prepared_cache_path(out_dir: Union[str, Path], horizon: int) -> Path:
    return Path(out_dir) / f"prepared_h{horizon}.npz"


def load_prepared(config: ExperimentConfig, horizon: int, out_dir: Optional[Union[str, Path]] = None) -> PreparedData:
    """Scaled windows for one horizon, reusing `prepared_h{H}.npz` when it matches the config and the CSV bytes"""
    csv_path = Path(config.data.csv)
    cache = prepared_cache_path(out_dir, horizon) if out_dir is not None else None
    if cache is not None and cache.exists() and csv_path.exists():
        digest = file_digest(csv_path)
        header = [c for c in pd.read_csv(csv_path, nrows=0).columns if c != "timestamp"]
        cached = PreparedData.load(cache)
        if cached.matches(config.data.seq_len, horizon, config.data.median_window, config.data.train_ratio,
                          config.data.target_column, source_digest=digest, columns=header):
            logger.debug("Using prepared cache %s", cache)
            return cached
        logger.info("🔄 Prepared cache %s is stale for %s, rebuilding", cache, csv_path)
    frame, report = load_series_csv(csv_path, config.data.target_column)
    prepared = prepare_dataset(frame, config.data.seq_len, horizon, config.data.median_window,
                               config.data.train_ratio, report)
    report.log()
    prepared.source = str(csv_path)
    prepared.source_digest = file_digest(csv_path)
    if cache is not None:
        prepared.save(cache)
    return prepared


def train_run(config: ExperimentConfig, spec: RunSpec, prepared: PreparedData,
              out_dir: Optional[Union[str, Path]] = None, progress: bool = False) -> Tuple[RunResult, Model, Optional[FitHistory]]:
    """Build, fit and evaluate one (model, horizon, seed) run"""
    if prepared.horizon != spec.horizon:
        raise ContractError(f"prepared data is for horizon {prepared.horizon}, run asks for {spec.horizon}")
    model = build_model(spec.model, config.model, prepared.X_train.shape[2], spec.horizon, spec.seed,
                        prepared.columns.index(prepared.target_column))
    history = None
    if spec.model != "naive":
        history = fit(model, prepared.X_train, prepared.y_train, config.training, spec.seed, progress)
        model = history.model

    pred = predict(model, prepared.X_test, config.training.batch_size * 8)
    result = RunResult(
        spec.model, spec.horizon, spec.seed,
        r2=r_squared(pred, prepared.y_test),
        rmse=rmse(pred, prepared.y_test),
        epochs=history.epochs_run if history else 0,
        best_epoch=history.best_epoch if history else 0,
        step_r2=per_step_r_squared(pred, prepared.y_test),
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if history is not None:
            history.to_csv(out_dir / f"history_{spec.name}.csv")
        checkpoint_save(model, out_dir / "checkpoints" / spec.name, config.model)
    logger.info("✅ %s: R² %.5f, RMSE %.5f, %d epochs", spec.name, result.r2, result.rmse, result.epochs)
    return result, model, history


# ---------------------------------------------------------------- report

def aggregate(values: Sequence[float]) -> Tuple[float, float]:
    """Arithmetic mean and sample standard deviation (0 for a single value)"""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ContractError("aggregate needs at least one value")
    if np.all(values == values[0]):
        # identical runs (e.g. the naive baseline) aggregate exactly
        return float(values[0]), 0.0
    std = float(np.std(values, ddof=1))
    return float(np.mean(values)), std


def aggregate_table(per_seed: pd.DataFrame, models: Sequence[str]) -> pd.DataFrame:
    """Horizons as rows, `<model>_mean` / `<model>_std` columns, from successful runs only"""
    ok = per_seed[per_seed["status"] == "ok"]
    horizons = sorted(per_seed["horizon"].unique())
    rows = []
    for horizon in horizons:
        row: Dict[str, Any] = {"horizon": int(horizon)}
        for model in models:
            values = ok[(ok["model"] == model) & (ok["horizon"] == horizon)]["r2"]
            mean, std = aggregate(values) if len(values) else (np.nan, np.nan)
            row[f"{model}_mean"] = mean
            row[f"{model}_std"] = std
        rows.append(row)
    return pd.DataFrame(rows, columns=["horizon", *[f"{m}_{s}" for m in models for s in ("mean", "std")]])


@dataclass
class RunReport:
    models: List[str]
    rows: List[RunResult]

    @property
    def complete(self) -> bool:
        return all(row.ok for row in self.rows)

    def _sorted(self) -> List[RunResult]:
        order = {m: i for i, m in enumerate(self.models)}
        return sorted(self.rows, key=lambda r: (order.get(r.model, len(order)), r.horizon, r.seed))

    def per_seed_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"model": r.model, "horizon": r.horizon, "seed": r.seed, "status": r.status, "r2": r.r2,
              "rmse": r.rmse, "epochs": r.epochs, "best_epoch": r.best_epoch} for r in self._sorted()],
            columns=["model", "horizon", "seed", "status", "r2", "rmse", "epochs", "best_epoch"],
        )

    def aggregate_frame(self) -> pd.DataFrame:
        return aggregate_table(self.per_seed_frame(), self.models)

    def steps_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"model": r.model, "horizon": r.horizon, "seed": r.seed, "step": step, "r2": value}
             for r in self._sorted() for step, value in enumerate(r.step_r2, start=1)],
            columns=["model", "horizon", "seed", "step", "r2"],
        )

    def timings_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"model": r.model, "horizon": r.horizon, "seed": r.seed, "wall_time": r.wall_time} for r in self._sorted()],
            columns=["model", "horizon", "seed", "wall_time"],
        )

    def write(self, out_dir: Union[str, Path]):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.per_seed_frame().to_csv(out_dir / "report.csv", index=False, float_format="%.17g")
        self.aggregate_frame().to_csv(out_dir / "report_agg.csv", index=False, float_format="%.17g")
        self.steps_frame().to_csv(out_dir / "report_steps.csv", index=False, float_format="%.17g")
        self.timings_frame().to_csv(out_dir / "timings.csv", index=False, float_format="%.6f")
        if not self.complete:
            failed = [r for r in self.rows if not r.ok]
            (out_dir / "INCOMPLETE").write_text(
                "\n".join(f"{r.model}_h{r.horizon}_s{r.seed}: {r.error}" for r in failed) + "\n", encoding="utf-8"
            )
        elif (out_dir / "INCOMPLETE").exists():
            (out_dir / "INCOMPLETE").unlink()


def load_reference(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def render_table(agg: pd.DataFrame, models: Sequence[str], reference: Optional[pd.DataFrame] = None,
                 console: Optional[Console] = None) -> List[Table]:
    """Mean and standard-deviation tables with horizons as rows and models as columns"""
    console = console or Console()
    tables = []
    for stat, title in (("mean", "Average R² over seeds"), ("std", "Standard deviation of R² over seeds")):
        table = Table(title=title)
        table.add_column("Horizon", justify="right")
        for model in models:
            table.add_column(MODEL_LABELS.get(model, model), justify="right")
        for _, row in agg.iterrows():
            cells = [str(int(row["horizon"]))]
            for model in models:
                value = row[f"{model}_{stat}"]
                cell = "-" if pd.isna(value) else f"{value:.5f}"
                if reference is not None:
                    ref = reference[(reference["model"] == model) & (reference["horizon"] == row["horizon"])]
                    if len(ref) and not pd.isna(ref[stat].iloc[0]):
                        cell += f" (ref {ref[stat].iloc[0]:.5f})"
                cells.append(cell)
            table.add_row(*cells)
        console.print(table)
        tables.append(table)
    return tables


# ---------------------------------------------------------------- benchmark

def run_benchmark(config: ExperimentConfig, store: Optional[RunStore] = None, resume: bool = False,
                  progress: bool = True) -> RunReport:
    """Every (model, horizon, seed) of the config; failures are recorded and do not stop other runs"""
    bench = config.benchmark
    out_dir = Path(bench.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("🚀 Starting benchmark: models %s, horizons %s, seeds %s", bench.models, bench.horizons, bench.seeds)

    prepared = {horizon: load_prepared(config, horizon, out_dir) for horizon in bench.horizons}
    specs = [RunSpec(m, h, s) for m in bench.models for h in bench.horizons for s in bench.seeds]
    fingerprint = config.fingerprint()
    done = store.get_completed_keys(fingerprint) if store is not None and resume else set()

    def execute(spec: RunSpec) -> RunResult:
        if spec.key in done:
            row = store.get_run(fingerprint, *spec.key)
            logger.info("⏭️  %s already stored, skipping", spec.name)
            return RunResult(spec.model, spec.horizon, spec.seed, "ok", row["r2"], row["rmse"], row["epochs"],
                             row["best_epoch"], row["step_r2"] or [], row["wall_time"] or 0.0)
        start = time.perf_counter()
        try:
            result, _, _ = train_run(config, spec, prepared[spec.horizon], out_dir)
        except Exception as e:
            logger.exception("❌ Run %s failed", spec.name)
            result = RunResult(spec.model, spec.horizon, spec.seed, status="failed", error=f"{type(e).__name__}: {e}")
        result.wall_time = time.perf_counter() - start
        if store is not None:
            store.record_run(fingerprint, spec.model, spec.horizon, spec.seed, result.status, result.r2, result.rmse,
                             result.epochs, result.best_epoch, result.wall_time, result.step_r2, result.error)
        return result

    results = run_parallel(execute, specs, bench.workers, desc="runs", progress=progress)
    report = RunReport(list(bench.models), [result for _, result in results])
    report.write(out_dir)
    if report.complete:
        logger.info("✅ Benchmark finished: %d runs written to %s", len(specs), out_dir)
    else:
        logger.warning("⚠️  Benchmark incomplete: %d of %d runs failed", sum(not r.ok for r in report.rows), len(specs))
    return report
