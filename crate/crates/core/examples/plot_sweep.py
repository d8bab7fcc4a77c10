"""Plot a `skyways sweep` output directory: term contributions per
response and, if the sweep has a level grid, response means with their 95%
intervals against the first gridded factor.

usage: python plot_sweep.py SWEEP_DIR
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

out = Path(sys.argv[1])
reg = pd.read_csv(out / "regression.csv")
contrib = reg[(reg.quantity == "contribution_pct") & (reg.term != "intercept")]
table = contrib.pivot(index="term", columns="response", values="value")
ax = table.plot.barh(figsize=(8, 6))
ax.set_xlabel("contribution [%]")
plt.tight_layout()
plt.savefig(out / "contributions.png", dpi=120)

design = pd.read_csv(out / "design.csv")
summary = pd.read_csv(out / "summary.csv")
grid = design[design.set == "grid"]
if not grid.empty:
    factors = [c for c in design.columns[2:] if not c.startswith("coded:")]
    x = factors[-1]
    merged = summary[summary.set == "grid"].merge(grid, on=["set", "point"])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, response in zip(axes, ["cr", "as"]):
        rows = merged[merged.response == response]
        for key, g in rows.groupby(factors[:-1]) if len(factors) > 1 else [("all", rows)]:
            g = g.sort_values(x)
            ax.errorbar(g[x], g["mean"], yerr=[g["mean"] - g["ci_low"], g["ci_high"] - g["mean"]], label=str(key), capsize=3)
        ax.set_xlabel(x)
        ax.set_ylabel(response)
    axes[0].legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out / "grid.png", dpi=120)
