"""The same attack with detection and quarantine enabled.

Vehicle 4's monitor trips shortly after the attack starts.  The vehicle is
sent to the secure point (the origin) and the other three re-solve the
problem among themselves.  Figures land in ``demos/out/secure``.
"""
# %%
from pathlib import Path

import numpy as np

from securedoc.cli import RunReport, write_plots
from securedoc.rov import preset_case
from securedoc.sim import run

cfg = preset_case(3)
tr = run(cfg)
rep = RunReport.from_trace(cfg, tr)
print(rep.to_text())

# %% [markdown]
# Detection time and isolation: only node 4 is flagged.
td = tr.t_detect
print("detection times:", td)
print(f"delay after onset: {td[3] - 30.0:.3f} s")

# %% [markdown]
# After quarantine the healthy optimum is the mean of the first three poses.
healthy = rep.targets[:3]
print("healthy optimum:", np.round(healthy[0], 4))
print("final errors:", np.round(rep.errors, 4))

# residual of node 4 against its threshold around the alarm
k = tr.at(td[3])
for i in range(k - 2, k + 2):
    print(f"t = {tr.t[i]:.3f}  ||e_r|| = {np.linalg.norm(tr['e_r'][i, 3]):.4f}"
          f"  threshold = {tr['thr_r'][i, 3, 0]:.4f}")

# %%
out = Path(__file__).resolve().parent / "out" / "secure"
out.mkdir(parents=True, exist_ok=True)
for p in write_plots(tr, out):
    print("wrote", p)
