#!/usr/bin/env python3
"""Render the demo subcommand's columnar output with matplotlib.

    python3 -m ebdnn.cli demo --config cfg.json --out demo_out/
    python3 scripts/plot_demo.py demo_out/demo.csv bands.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main(csv_path: str, png_path: str) -> None:
    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5), sharey=True)

    axes[0].fill_between(data["x"], data["pw_lo_infl"], data["pw_hi_infl"],
                         color="tab:green", alpha=0.3, label="inflated band")
    axes[0].fill_between(data["x"], data["pw_lo"], data["pw_hi"],
                         color="tab:blue", alpha=0.4, label="pointwise band")
    axes[0].set_title("pointwise credible band")

    axes[1].fill_between(data["x"], data["env_lo_infl"], data["env_hi_infl"],
                         color="tab:green", alpha=0.3, label="inflated envelope")
    axes[1].fill_between(data["x"], data["env_lo"], data["env_hi"],
                         color="tab:blue", alpha=0.4, label="envelope of retained draws")
    axes[1].set_title("sup-norm draw envelope")

    for ax in axes:
        ax.plot(data["x"], data["f0"], "k-", lw=1.2, label="truth")
        ax.plot(data["x"], data["post_mean"], "r--", lw=1.0, label="posterior mean")
        ax.set_xlabel("x")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    print(f"wrote {png_path}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit("usage: plot_demo.py <demo.csv> <output.png>")
    main(sys.argv[1], sys.argv[2])
