from pathlib import Path

import pandas as pd
import pytest
from streamlit.testing.v1 import AppTest

from benchmark import RunReport, RunResult

APP = str(Path(__file__).resolve().parent.parent / "app.py")


@pytest.fixture
def report_dir(tmp_path, monkeypatch):
    rows = [
        RunResult(model, horizon, seed, r2=0.1 * seed + 0.01 * horizon, rmse=0.2, epochs=5, best_epoch=3,
                  step_r2=[0.2] * horizon)
        for model in ("tkan", "naive") for horizon in (1, 3) for seed in (0, 1)
    ]
    RunReport(["tkan", "naive"], rows).write(tmp_path)
    pd.DataFrame({"epoch": [1, 2, 3], "train_loss": [0.5, 0.4, 0.35], "val_loss": [0.6, 0.5, 0.55],
                  "lr": [1e-3, 1e-3, 5e-4]}).to_csv(tmp_path / "history_tkan_h1_s0.csv", index=False)
    monkeypatch.setenv("TKAN_RESULTS_DIR", str(tmp_path))
    return tmp_path


def run_app():
    return AppTest.from_file(APP, default_timeout=30).run()


def test_summary_page(report_dir):
    at = run_app()
    assert not at.exception
    assert not at.error
    assert [m.value for m in at.metric][:2] == ["8", "8"]


@pytest.mark.parametrize("page", ["🪜 Per-step R²", "📉 Loss curves"])
def test_other_pages(report_dir, page):
    at = run_app()
    at.sidebar.selectbox[0].set_value(page).run()
    assert not at.exception
    assert not at.error


def test_incomplete_banner(report_dir):
    (report_dir / "INCOMPLETE").write_text("tkan_h1_s1: boom\n")
    at = run_app()
    assert any("incomplete" in w.value for w in at.warning)


def test_missing_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("TKAN_RESULTS_DIR", str(tmp_path / "nowhere"))
    at = run_app()
    assert not at.exception
    assert "not found" in at.error[0].value
