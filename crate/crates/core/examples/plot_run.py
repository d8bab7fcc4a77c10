"""Plot the per-second series of a `skyways run` output directory.

usage: python plot_run.py OUT_DIR
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

out = Path(sys.argv[1])
series = pd.read_csv(out / "series.csv")
fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
top.plot(series["t"], series["nc"])
top.set_ylabel("drones aloft")
bottom.plot(series["t"], series["ic"].cumsum(), label="injected")
bottom.plot(series["t"], series["ac"].cumsum(), label="arrived")
bottom.set_xlabel("t [s]")
bottom.set_ylabel("cumulative")
bottom.legend()
fig.tight_layout()
fig.savefig(out / "series.png", dpi=120)
