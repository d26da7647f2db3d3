"""Trade-offs across the load weight ``w`` and the equalization setting ``s``.

Sweeps the default scenario over a small grid and prints the table with
loads normalized to the ``w = 0`` run.
"""

import os

from wfmpc.scenario import load_scenario
from wfmpc.simulation import sweep

here = os.path.dirname(os.path.abspath(__file__))
cfg = load_scenario(os.path.join(here, "..", "scenarios", "default_8wt.yaml"))
grid = [(0.0, 1.0), (1e2, 1.0), (1e3, 1.0), (1e4, 1.0), (1e3, 0.75), (1e3, 0.5)]
rows, _ = sweep(cfg, grid)

print("      w     s   RMS(MW)   dF/dF0   eF/eF0")
for r in rows:
    print(f"  {r['w']:6g}  {r['s']:4g}  {r['rms_error'] / 1e6:7.3f}  "
          f"{r['dF_norm']:7.3f}  {r['eF_norm']:7.3f}")
