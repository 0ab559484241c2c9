"""
绘制数据表中的观测量随时间的变化

用法:
    python scripts/plot_table.py output/scenario_run.csv --observables Sz xi2 [--reference output/scenario_oracle.csv]

需要额外安装 matplotlib。
"""

import argparse
import logging

import matplotlib.pyplot as plt
import pandas as pd

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


def plot(table: str, observables, reference: str = None, output: str = None):
    frame = pd.read_csv(table)
    ref = pd.read_csv(reference) if reference else None
    fig, axes = plt.subplots(len(observables), 1, figsize=(6, 2.5 * len(observables)), sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], observables):
        mean, stderr = frame[f"{name}_mean"], frame[f"{name}_stderr"].fillna(0.0)
        ax.plot(frame["time"], mean, label="DDTWA")
        ax.fill_between(frame["time"], mean - stderr, mean + stderr, alpha=0.3)
        if ref is not None and f"{name}_mean" in ref:
            ax.plot(ref["time"], ref[f"{name}_mean"], "k--", label="reference")
        ax.set_ylabel(name)
        ax.legend()
    axes[-1, 0].set_xlabel("time")
    fig.tight_layout()
    if output:
        fig.savefig(output, dpi=150)
        logger.info(f"图像已保存: {output}")
    else:
        plt.show()


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="绘制观测量数据表")
    parser.add_argument("table")
    parser.add_argument("--observables", nargs="+", default=["Sz"])
    parser.add_argument("--reference")
    parser.add_argument("--output")
    args = parser.parse_args()
    plot(args.table, args.observables, args.reference, args.output)
