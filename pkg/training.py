"""
Losses, metrics, the Adam optimizer and the callback-driven fit loop.

Training follows the benchmark protocol: the last part of the training
windows is held out (chronologically) for validation, mini-batch Adam runs
until early stopping fires, the learning rate is halved on validation
plateaus, and the weights of the best validation epoch are restored.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from errors import ContractError, DimensionError, UndefinedMetricError
from tensor import Tape, Tensor, as_tensor, backward, derive_seed, mean_all, square, sub

logger = logging.getLogger(__name__)

Params = Dict[str, Tensor]


class Model(Protocol):
    def named_parameters(self) -> Params: ...

    def with_parameters(self, params: Mapping[str, Tensor]) -> "Model": ...

    def forward(self, X: Tensor) -> Tensor: ...


@dataclass
class TrainingConfig:
    batch_size: int = 128
    max_epochs: int = 100
    learning_rate: float = 1e-3
    min_lr: float = 1e-6
    validation_split: float = 0.2
    early_stopping_patience: int = 6
    plateau_patience: int = 3
    plateau_factor: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ContractError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 < self.min_lr <= self.learning_rate:
            raise ContractError(f"need 0 < min_lr <= learning_rate, got {self.min_lr}, {self.learning_rate}")
        if not 0 < self.validation_split < 1:
            raise ContractError(f"validation_split must be in (0, 1), got {self.validation_split}")
        if not 0 < self.plateau_factor < 1:
            raise ContractError(f"plateau_factor must be in (0, 1), got {self.plateau_factor}")


# ---------------------------------------------------------------- losses and metrics

def mse(pred: Tensor, truth: Union[Tensor, np.ndarray]) -> Tensor:
    """Mean squared error over all N·H entries (tape-aware)"""
    pred, truth = as_tensor(pred), as_tensor(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"mse: prediction {pred.shape} vs truth {truth.shape}")
    return mean_all(square(sub(pred, truth)))


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return math.sqrt(mse(pred, truth).item())


def r_squared(pred, truth) -> float:
    """1 - SSE/SST with SST taken about the mean of the truth"""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionError(f"r_squared: prediction {pred.shape} vs truth {truth.shape}")
    if truth.size < 2:
        raise ContractError("r_squared needs at least two values")
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        raise UndefinedMetricError("r_squared is undefined for a constant truth")
    sse = float(np.sum((pred - truth) ** 2))
    return 1.0 - sse / sst


def per_step_r_squared(pred, truth) -> List[float]:
    """R² of each forecast step (column) of [N × H] predictions"""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 2 or pred.shape != truth.shape:
        raise DimensionError(f"per_step_r_squared: prediction {pred.shape} vs truth {truth.shape}")
    return [r_squared(pred[:, step], truth[:, step]) for step in range(pred.shape[1])]


# ---------------------------------------------------------------- Adam

@dataclass(frozen=True)
class AdamState:
    step: int
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: Mapping[str, Tensor], lr: float = 1e-3) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros(p.shape) for name, p in params.items()},
            v={name: np.zeros(p.shape) for name, p in params.items()},
            lr=float(lr),
        )


def adam_update(params: Mapping[str, Tensor], grads: Mapping[str, Tensor], state: AdamState) -> Tuple[Params, AdamState]:
    """One bias-corrected Adam step; returns new parameters and a new state"""
    if set(params) != set(grads):
        raise ContractError(f"gradients do not cover the parameters: {sorted(set(params) ^ set(grads))}")
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params: Params = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        grad = as_tensor(grads[name]).data
        if grad.shape != param.shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = Tensor.wrap(param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m[name] = m
        new_v[name] = v
    return new_params, replace(state, step=step, m=new_m, v=new_v)


# ---------------------------------------------------------------- callbacks

class EarlyStopping:
    """Stop after `patience` epochs without a strictly lower validation loss"""

    def __init__(self, patience: int = 6, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.wait = 0
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_params: Optional[Params] = None
        self.stopped_epoch: Optional[int] = None

    def on_epoch_end(self, epoch: int, val_loss: float, params: Optional[Params] = None) -> bool:
        if val_loss < self.best_loss - self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_params = dict(params) if params is not None else None
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.stopped_epoch = epoch
            logger.info("Early stopping at epoch %d (best epoch %d, val loss %.6g)", epoch, self.best_epoch, self.best_loss)
            return True
        return False


class ReduceLROnPlateau:
    """Multiply the learning rate by `factor` after `patience` stagnant epochs"""

    def __init__(self, patience: int = 3, factor: float = 0.5, min_lr: float = 1e-6):
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.wait = 0
        self.best_loss = math.inf

    def on_epoch_end(self, epoch: int, val_loss: float, lr: float) -> float:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.wait = 0
            return lr
        self.wait += 1
        if self.wait >= self.patience:
            self.wait = 0
            new_lr = max(lr * self.factor, self.min_lr)
            if new_lr < lr:
                logger.info("Epoch %d: reducing learning rate %.3g -> %.3g", epoch, lr, new_lr)
            return new_lr
        return lr


# ---------------------------------------------------------------- fit

@dataclass
class FitHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    best_params: Optional[Params] = field(default=None, repr=False)
    stopped_early: bool = False
    model: Optional[Model] = field(default=None, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, self.epochs_run + 1),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "lr": self.lr,
        })

    def to_csv(self, path: Union[str, Path]):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def validation_split(n_samples: int, fraction: float) -> int:
    """Index of the first validation sample when the last `fraction` is held out"""
    if n_samples < 2:
        raise ContractError(f"need at least 2 samples to hold out a validation set, got {n_samples}")
    n_val = max(1, int(math.floor(n_samples * fraction)))
    return n_samples - n_val


def predict(model: Model, X: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Forward pass in fixed-size chunks, without recording a tape"""
    outputs = [model.forward(Tensor(X[start:start + batch_size])).data for start in range(0, len(X), batch_size)]
    return np.concatenate(outputs, axis=0)


def evaluate_loss(model: Model, X: np.ndarray, y: np.ndarray, batch_size: int = 1024) -> float:
    return mse(predict(model, X, batch_size), y).item()


def loss_and_grads(model: Model, params: Params, X: np.ndarray, y: np.ndarray) -> Tuple[float, Params]:
    tape = Tape()
    attached = {name: tape.watch(value, name) for name, value in params.items()}
    loss = mse(model.with_parameters(attached).forward(Tensor(X)), y)
    by_handle = backward(tape, loss)
    return loss.item(), {name: by_handle[t.handle] for name, t in attached.items()}


def fit(model: Model, X: np.ndarray, y: np.ndarray, config: TrainingConfig, seed: int = 0,
        progress: bool = False) -> FitHistory:
    """Train `model` on windows X [N × T × d] -> y [N × H] and return its history.

    `history.model` carries the weights of the best validation epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ContractError("fit needs a nonempty training set")
    if len(X) != len(y):
        raise DimensionError(f"fit: {len(X)} input windows vs {len(y)} targets")

    boundary = validation_split(len(X), config.validation_split)
    X_train, y_train = X[:boundary], y[:boundary]
    X_val, y_val = X[boundary:], y[boundary:]
    logger.debug("fit: %d training / %d validation windows", len(X_train), len(X_val))

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 7)))
    params = model.named_parameters()
    adam = AdamState.create(params, config.learning_rate)
    stopper = EarlyStopping(config.early_stopping_patience)
    plateau = ReduceLROnPlateau(config.plateau_patience, config.plateau_factor, config.min_lr)
    history = FitHistory()

    epochs = tqdm(range(1, config.max_epochs + 1), desc="epochs", leave=False, disable=not progress)
    for epoch in epochs:
        order = rng.permutation(len(X_train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, params, X_train[batch], y_train[batch])
            params, adam = adam_update(params, grads, adam)
            total += loss * len(batch)
        train_loss = total / len(X_train)
        val_loss = evaluate_loss(model.with_parameters(params), X_val, y_val)

        stop = stopper.on_epoch_end(epoch, val_loss, params)
        adam = replace(adam, lr=plateau.on_epoch_end(epoch, val_loss, adam.lr))
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(adam.lr)
        logger.debug("epoch %d: train %.6g, val %.6g, lr %.3g", epoch, train_loss, val_loss, adam.lr)
        epochs.set_postfix(train=f"{train_loss:.4g}", val=f"{val_loss:.4g}")
        if stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    history.best_val_loss = stopper.best_loss
    history.best_params = stopper.best_params if stopper.best_params is not None else params
    history.model = model.with_parameters(history.best_params)
    return history
