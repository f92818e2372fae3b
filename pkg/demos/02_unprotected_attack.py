"""A sensor attack on vehicle 4 with the countermeasure switched off.

From 30 s on the position reported by vehicle 4 carries a growing
oscillation.  Without quarantine the bad data spreads through the
consensus terms and the whole fleet is dragged away until the state blows
up.  Figures land in ``demos/out/unprotected``.
"""
# %%
from pathlib import Path

import numpy as np

from securedoc.cli import write_plots
from securedoc.rov import preset_case
from securedoc.sim import run

cfg = preset_case(2)
print("security enabled:", bool(cfg.security and cfg.security.enabled))
tr = run(cfg)
print("status:", tr.status, "-", tr.message)

# %% [markdown]
# The monitors still see the attack (their alarms are recorded) but nothing
# acts on them.  Track how far the healthy vehicles drift after 30 s.
k30 = tr.at(30.0)
y = tr.positions()
drift = np.abs(y[:, :3] - y[k30, :3]).max(axis=(1, 2))
for t in (32.0, 35.0, 38.0, tr.t_end):
    print(f"t = {t:6.2f} s   max drift of nodes 1-3: {drift[tr.at(t)]:.3g}")
print("alarm times:", tr.t_detect)
print("funnel violations per node:", tr.violations)

# %%
out = Path(__file__).resolve().parent / "out" / "unprotected"
out.mkdir(parents=True, exist_ok=True)
for p in write_plots(tr, out):
    print("wrote", p)
