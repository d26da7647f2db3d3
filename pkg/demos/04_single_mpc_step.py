"""One receding-horizon decision.

Sets up a 4-turbine column at steady state, asks for 5% more farm power,
and solves one horizon problem with and without the equalization term.
The spread of the predicted forces shows what the equalization weight buys.
"""

import numpy as np

from wfmpc.mpc import MpcController, MpcWeights
from wfmpc.turbine import TurbineParams
from wfmpc.wind_field import FarmLayout, steady_speeds

layout = FarmLayout.grid(rows=4, columns=1, spacing=5.0)
params = TurbineParams()
hra = params.half_rho_area
U_inf = 9.0

ct = np.full(4, 1.0)
U = steady_speeds(layout, ct, U_inf)
F, P = hra * ct * U ** 2, hra * ct * U ** 3
p_ref = 1.05 * P.sum()

for s in (1.0, 0.5):
    ctrl = MpcController(MpcWeights(q=1.0, r=1e10, w=1e3, s=s), horizon=10, half_rho_area=hra)
    sol = ctrl.step(F, P, ct, U, p_ref)
    res = sol.qp.residuals
    print(f"s = {s}: status {sol.qp.status.value}, {sol.qp.iterations} iterations, "
          f"max KKT residual {res.max():.1e}")
    print("  first ct' command   " + "  ".join(f"{c:5.3f}" for c in sol.ct[:, 0]))
    print("  force spread at end " + f"{np.ptp(sol.F[:, -1]) / 1e3:.1f} kN")
    print("  predicted farm power at end "
          f"{sol.P[:, -1].sum() / 1e6:.3f} MW (reference {p_ref / 1e6:.3f} MW)")
