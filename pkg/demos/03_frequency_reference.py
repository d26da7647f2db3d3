"""Grid-frequency support.

Turns a synthetic frequency excursion into a farm power reference with
droop and inertial terms and prints the trace at a few instants.
"""

from wfmpc.freq_control import DerivativeFilter, FreqCtrlParams, power_reference, \
    synthetic_excursion

dt = 1.0
trace = synthetic_excursion(300.0, dt, depth=0.1, seed=0)
params = FreqCtrlParams()
filt = DerivativeFilter(dt, params.filter_time)
p_command = 100.0

print(f"command {p_command:.0f} MW, droop {params.k_droop} MW/Hz, "
      f"inertia {params.k_inertia} MW s/Hz")
print("   t(s)   f(Hz)    df/dt(Hz/s)  P_ref(MW)")
for k in range(trace.samples.size):
    f = trace.at(k)
    dfdt = filt.update(f)
    p_ref = power_reference(p_command, [f], params, dt, dfdt=dfdt)
    if k % 20 == 0:
        print(f"  {k:5d}  {f:7.3f}  {dfdt:+10.4f}  {p_ref:9.2f}")
