"""A small decaying bias that the monitors cannot see, and need not.

The bias ``0.05 exp(-0.3 (t - 30))`` is square integrable.  It stays under
every threshold, so no alarm fires, yet its effect on the rendezvous dies
out by itself.  Figures land in ``demos/out/decaying``.
"""
# %%
from pathlib import Path

import numpy as np

from securedoc.cli import write_plots
from securedoc.cyber import consensus_optimum
from securedoc.rov import preset_l2
from securedoc.sim import run

cfg = preset_l2()
tr = run(cfg)
target = consensus_optimum([nd.objective for nd in cfg.nodes])
print("status:", tr.status, "  alarms:", tr.t_detect)

# %% [markdown]
# Smallest threshold margin seen by node 4 after the onset, and the error
# relative to the attack-free optimum.
after = tr.t >= 30.0
margin = tr["thr_r"][after, 3, 0] - np.linalg.norm(tr["e_r"][after, 3], axis=1)
print(f"smallest r-margin of node 4: {margin.min():.4f}")
err = np.abs(tr.positions()[after] - target).max(axis=(1, 2))
for t in (30.0, 35.0, 45.0, tr.t_end):
    print(f"t = {t:5.1f} s   max error = {err[np.argmin(np.abs(tr.t[after] - t))]:.4f}")

# %%
out = Path(__file__).resolve().parent / "out" / "decaying"
out.mkdir(parents=True, exist_ok=True)
for p in write_plots(tr, out):
    print("wrote", p)
