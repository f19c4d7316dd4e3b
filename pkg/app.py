import streamlit as st
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from pathlib import Path
from typing import Dict, Optional
import os

# Report files are written by benchmark.py; this viewer only reads them
MODEL_LABELS = {"tkan": "TKAN", "gru": "GRU", "lstm": "LSTM", "naive": "Last Value"}
RESULTS_ENV = "TKAN_RESULTS_DIR"
REFERENCE_CSV = Path(__file__).resolve().parent / "reference_r2.csv"

# Page configuration
st.set_page_config(
    page_title="TKAN Benchmark Report",
    page_icon="📈",
    layout="wide",
    initial_sidebar_state="expanded"
)


@st.cache_data(ttl=30)
def read_csv(path: str, mtime: float) -> Optional[pd.DataFrame]:
    """Read a report CSV; mtime is part of the cache key so rewritten files are reloaded"""
    try:
        return pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError):
        return None


def load_report_file(out_dir: Path, name: str) -> Optional[pd.DataFrame]:
    path = out_dir / name
    if not path.exists():
        return None
    return read_csv(str(path), path.stat().st_mtime)


def list_histories(out_dir: Path) -> Dict[str, Path]:
    """Run name -> history CSV, e.g. 'tkan_h1_s0'"""
    return {p.stem[len("history_"):]: p for p in sorted(out_dir.glob("history_*.csv"))}


def display_stats(per_seed: pd.DataFrame):
    """Run count cards"""
    ok = int((per_seed["status"] == "ok").sum())
    failed = len(per_seed) - ok
    cols = st.columns(4)
    cols[0].metric("Runs", len(per_seed))
    cols[1].metric("Succeeded", ok)
    cols[2].metric("Failed", failed)
    cols[3].metric("Models", per_seed["model"].nunique())


def aggregate_view(agg: pd.DataFrame, reference: Optional[pd.DataFrame]):
    """Mean / std tables in the horizons-by-models layout, plus R² against horizon"""
    models = [c[:-len("_mean")] for c in agg.columns if c.endswith("_mean")]
    mean = agg.set_index("horizon")[[f"{m}_mean" for m in models]]
    mean.columns = [MODEL_LABELS.get(m, m) for m in models]
    std = agg.set_index("horizon")[[f"{m}_std" for m in models]]
    std.columns = [MODEL_LABELS.get(m, m) for m in models]

    col1, col2 = st.columns(2)
    with col1:
        st.subheader("Average R² over seeds")
        st.dataframe(mean.style.format("{:.5f}"), use_container_width=True)
    with col2:
        st.subheader("Standard deviation of R²")
        st.dataframe(std.style.format("{:.5f}"), use_container_width=True)

    long = mean.reset_index().melt(id_vars="horizon", var_name="model", value_name="r2")
    fig = px.line(long, x="horizon", y="r2", color="model", markers=True, title="R² by horizon")
    if reference is not None and st.checkbox("Show published reference values", value=False):
        for model in models:
            ref = reference[reference["model"] == model].sort_values("horizon")
            if len(ref):
                fig.add_trace(go.Scatter(
                    x=ref["horizon"], y=ref["mean"], mode="lines", line={"dash": "dot"},
                    name=f"{MODEL_LABELS.get(model, model)} (reference)",
                ))
    st.plotly_chart(fig, use_container_width=True)


def steps_view(steps: pd.DataFrame):
    """R² of every forecast step, averaged over seeds"""
    horizons = sorted(steps["horizon"].unique())
    if not horizons:
        st.info("No per-step results yet.")
        return
    horizon = st.selectbox("Horizon", horizons, index=len(horizons) - 1)
    subset = steps[steps["horizon"] == horizon].groupby(["model", "step"], as_index=False)["r2"].mean()
    subset["model"] = subset["model"].map(lambda m: MODEL_LABELS.get(m, m))
    fig = px.bar(subset, x="step", y="r2", color="model", barmode="group", title=f"Per-step R² at horizon {horizon}")
    st.plotly_chart(fig, use_container_width=True)


def loss_curve_view(out_dir: Path):
    """Train/validation loss and learning rate of one run"""
    histories = list_histories(out_dir)
    if not histories:
        st.info("No loss histories in this directory.")
        return
    run = st.selectbox("Run", list(histories))
    history = load_report_file(out_dir, histories[run].name)
    if history is None or history.empty:
        st.warning(f"History for {run} is empty or unreadable.")
        return

    fig = go.Figure()
    fig.add_trace(go.Scatter(x=history["epoch"], y=history["train_loss"], mode="lines+markers", name="train"))
    fig.add_trace(go.Scatter(x=history["epoch"], y=history["val_loss"], mode="lines+markers", name="validation"))
    best = history.loc[history["val_loss"].idxmin()]
    fig.add_vline(x=best["epoch"], line_dash="dash", annotation_text=f"best epoch {int(best['epoch'])}")
    fig.update_layout(title=f"Loss curves: {run}", xaxis_title="epoch", yaxis_title="MSE")
    st.plotly_chart(fig, use_container_width=True)

    lr_fig = px.line(history, x="epoch", y="lr", log_y=True, title="Learning rate")
    st.plotly_chart(lr_fig, use_container_width=True)


def main():
    st.title("📈 TKAN Benchmark Report")

    default_dir = os.environ.get(RESULTS_ENV, "results")
    out_dir = Path(st.sidebar.text_input("Results directory", value=default_dir))
    page = st.sidebar.selectbox("Navigation", ["📊 Summary", "🪜 Per-step R²", "📉 Loss curves"])

    if not out_dir.is_dir():
        st.error(f"Results directory not found: {out_dir}")
        return

    per_seed = load_report_file(out_dir, "report.csv")
    if per_seed is None:
        st.warning("No report.csv yet. Run `python cli.py benchmark` first.")
        loss_curve_view(out_dir)
        return

    if (out_dir / "INCOMPLETE").exists():
        st.warning("⚠️ This benchmark is incomplete: some runs failed.")

    if page == "📊 Summary":
        display_stats(per_seed)
        agg = load_report_file(out_dir, "report_agg.csv")
        if agg is not None:
            reference = read_csv(str(REFERENCE_CSV), REFERENCE_CSV.stat().st_mtime) if REFERENCE_CSV.exists() else None
            aggregate_view(agg, reference)
        st.subheader("Per-seed runs")
        st.dataframe(per_seed, use_container_width=True, hide_index=True)
    elif page == "🪜 Per-step R²":
        steps = load_report_file(out_dir, "report_steps.csv")
        if steps is None:
            st.info("No report_steps.csv in this directory.")
        else:
            steps_view(steps)
    else:
        loss_curve_view(out_dir)


if __name__ == "__main__":
    main()
