import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, os.path.dirname(__file__))

from benchmark import BenchmarkConfig, DataConfig, ExperimentConfig, ModelConfig  # noqa: E402
from data import synthetic_frame  # noqa: E402
from training import TrainingConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def small_frame():
    """1,000 synthetic hours of two assets"""
    return synthetic_frame(1000, seed=3, names=("BTCUSDT", "ETHUSDT"))


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return path


@pytest.fixture
def tiny_config(tmp_path, small_frame, out_dir):
    """A config small enough for a full benchmark in a few seconds"""
    csv = tmp_path / "frame.csv"
    small_frame.to_csv(csv)
    return ExperimentConfig(
        model=ModelConfig(units=4, spline_orders=[0, 1, 2]),
        training=TrainingConfig(batch_size=64, max_epochs=2),
        data=DataConfig(csv=str(csv), data_dir=str(tmp_path / "klines"), target_column="BTCUSDT",
                        seq_len=6, median_window=24),
        benchmark=BenchmarkConfig(models=["tkan", "gru", "lstm", "naive"], horizons=[1, 3], seeds=[0, 1],
                                  workers=1, output_dir=str(out_dir)),
    )
