"""Turbine response to a power command.

A single turbine at 9 m/s receives a power step from 50% to 70% of what it
could deliver. The speed and pitch loops move the rotor to the new
operating point; the printout tracks power, thrust and the effective ct'.
"""

import numpy as np

from wfmpc.turbine import TurbineParams, equilibrium_state, power, step_servo

params = TurbineParams()
u = 9.0
p_avail = power(params.ct_max, u, params)
state = equilibrium_state(0.5 * p_avail, u, params)
target = 0.7 * p_avail

print(f"available power {p_avail / 1e6:.2f} MW, step 50% -> 70%")
print("   t(s)   P(MW)   F(kN)   ct'    pitch(deg)  omega(rad/s)")
for k in range(61):
    if k % 5 == 0:
        print(f"  {k * 0.5:5.1f}  {state.P[0] / 1e6:6.3f}  {state.F[0] / 1e3:6.1f}  "
              f"{state.ct[0]:5.3f}  {state.beta[0]:9.3f}  {state.omega[0]:9.3f}")
    state = step_servo(state, np.array([target]), u, 0.5, params)
print(f"settled at {state.P[0] / target:.4f} of the command")
