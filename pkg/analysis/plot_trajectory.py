import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

from analysis.utils_plot import colors, component_color, savefig
from utils.logger import setup_logger

logger = setup_logger("plot_trajectory", log_file="plot_trajectory.log")

SIGNALS = {
    "x": ("State trajectories", "x(t)"),
    "z": ("Output trajectories", "z(t)"),
    "u": ("Controller compensation", "u(t)"),
}


def signal_columns(df: pd.DataFrame, prefix: str):
    return [c for c in df.columns if c[0] == prefix and c[1:].isdigit()]


def plot_signal(df: pd.DataFrame, prefix: str, save_path, window=None):
    cols = signal_columns(df, prefix)
    if not cols:
        logger.warning(f"No '{prefix}' columns in trajectory, skipping figure")
        return None
    title, ylabel = SIGNALS[prefix]
    plt.figure(figsize=(12, 5))
    for i, col in enumerate(cols):
        plt.plot(df["t"], df[col], label=f"{prefix}_{col[1:]}", color=component_color(i), linewidth=1.0)
    if window is not None:
        plt.axvspan(window[0], window[1], color=colors["window"], alpha=0.2, label="disturbance active")
    plt.title(title)
    plt.xlabel("t")
    plt.ylabel(ylabel)
    plt.legend()
    savefig(save_path)
    logger.info(f"Saved {title.lower()} to {save_path}")
    return save_path


def plot_trajectory(csv_path, out_dir, window=None):
    df = pd.read_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(csv_path).stem
    saved = []
    for prefix in SIGNALS:
        path = plot_signal(df, prefix, out_dir / f"{stem}_{prefix}.png", window)
        if path is not None:
            saved.append(path)
    return saved


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Plot state, output and control signals of a trajectory CSV")
    parser.add_argument("csv")
    parser.add_argument("--out", default="results/figures")
    parser.add_argument("--window", default=None, help="disturbance window as a:b")
    args = parser.parse_args()
    win = tuple(float(v) for v in args.window.split(":")) if args.window else None
    plot_trajectory(args.csv, args.out, win)
