"""Wakes in a column of turbines.

Builds an 8-turbine column, shows the steady wind speed at each rotor, then
lowers the thrust coefficient of the front turbine and follows the speed-up
as it travels down the column with the advection delay.
"""

import numpy as np

from wfmpc.wind_field import FarmLayout, init_field, max_lag_steps, steady_speeds, step_field

layout = FarmLayout.grid(rows=8, columns=1, spacing=5.0)
U_inf, dt = 9.0, 1.0
ct = np.full(8, 1.5)

U = steady_speeds(layout, ct, U_inf)
print("steady rotor speeds at ct' = 1.5 (m/s):")
print("  " + "  ".join(f"{u:5.2f}" for u in U))

state = init_field(layout, ct, U_inf, max_lag_steps(layout, U_inf, dt) + 1)
ct_new = ct.copy()
ct_new[0] = 0.5
print("\nfront turbine drops to ct' = 0.5 at t = 0; rotor speeds every 60 s:")
for k in range(1, 601):
    state = step_field(state, ct_new, U_inf, layout, dt)
    if k % 60 == 0:
        print(f"  t={k:4d}s  " + "  ".join(f"{u:5.2f}" for u in state.U))

print("\nfinal field vs closed-form steady state, max diff "
      f"{np.max(np.abs(state.U - steady_speeds(layout, ct_new, U_inf))):.1e} m/s")
