"""Closed-loop scenario runs, penalty-factor sweeps and CSV outputs.

Per control step the loop samples the freestream, advances the wake field
with the last realized thrust coefficients, reads the turbine feedback,
forms the farm power reference from the dispatch command and frequency,
solves one horizon problem, and lets every turbine act on its dispatched
power for one interval.
"""

import json
import math
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .freq_control import (DerivativeFilter, constant_frequency, load_frequency_csv,
                           power_reference, synthetic_excursion)
from .mpc import MpcController
from .qp import QpSolver, Status
from .scenario import dump_scenario, to_dict
from .turbine import equilibrium_state, measure, power, step_turbines
from .wind_field import (init_field, load_freestream_csv, max_lag_steps, steady_speeds,
                         step_field, synth_freestream)

log = logging.getLogger(__name__)


@dataclass
class ResultsBundle:
    t: np.ndarray
    P: np.ndarray
    F: np.ndarray
    ct: np.ndarray
    U: np.ndarray
    u_inf: np.ndarray
    frequency: np.ndarray
    p_command: np.ndarray
    p_ref: np.ndarray
    p_total: np.ndarray
    p_star: np.ndarray
    report: metrics.FatigueReport  # None when fewer than two steps were recorded
    diagnostics: list
    config: dict
    aborted: bool = False
    solver_failures: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.t.size


def greedy_power(layout, tparams, wind_speed, ct_max):
    """Steady farm power with every turbine at ``ct_max``."""
    n = layout.n_turbines
    U = steady_speeds(layout, np.full(n, ct_max), wind_speed)
    return float(np.sum(power(ct_max, U, tparams)))


def uniform_setting(layout, tparams, wind_speed, p_target, ct_min, ct_max):
    """Common thrust coefficient whose steady farm power equals ``p_target``."""
    n = layout.n_turbines

    def farm(c):
        U = steady_speeds(layout, np.full(n, c), wind_speed)
        return float(np.sum(power(c, U, tparams)))

    lo, hi = ct_min, ct_max
    if farm(hi) <= p_target:
        return hi
    if farm(lo) >= p_target:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if farm(mid) < p_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _freestream(cfg):
    w = cfg.wind
    if w.path:
        trace = load_freestream_csv(w.path)
        if not np.isclose(trace.dt, cfg.dt):
            raise ValueError(f"freestream file sample interval {trace.dt} != dt {cfg.dt}")
        return trace
    return synth_freestream(w.mean, w.sigma, w.seed, cfg.duration, cfg.dt,
                            correlation_time=w.correlation_time)


def _frequency(cfg):
    f = cfg.frequency
    if f.source == "csv":
        return load_frequency_csv(f.path, f.f_nominal)
    if f.source == "constant":
        return constant_frequency(f.value, cfg.duration, cfg.dt, f.f_nominal)
    return synthetic_excursion(cfg.duration, cfg.dt, f.f_nominal, depth=f.depth, seed=f.seed)


def run(cfg):
    """Simulate ``cfg`` in closed loop and return a :class:`ResultsBundle`."""
    layout = cfg.layout.build()
    c = cfg.constraints
    tp = cfg.turbine.build(cfg.layout.rotor_diameter, c.ct_max, cfg.mpc.tau)
    n, steps, dt = layout.n_turbines, cfg.n_steps, cfg.dt
    wind = _freestream(cfg)
    freq = _frequency(cfg)
    fparams = cfg.frequency.params()

    mean_wind = float(np.mean(wind.samples)) if cfg.wind.path else cfg.wind.mean
    available = greedy_power(layout, tp, mean_wind, c.ct_max)
    scale = available / 1e6 if cfg.dispatch.units == "fraction" else 1.0

    def p_command_mw(k):
        return cfg.dispatch.value_at(k * dt) * scale

    u0 = wind.at(0)
    c0 = uniform_setting(layout, tp, u0, p_command_mw(0) * 1e6, c.ct_min, c.ct_max)
    depth = max_lag_steps(layout, float(np.min(wind.samples)), dt) + 1
    fstate = init_field(layout, np.full(n, c0), u0, depth)
    tstate = equilibrium_state(power(c0, fstate.U, tp), fstate.U, tp)

    ctrl = MpcController(cfg.mpc.weights(), horizon=cfg.mpc.horizon, dt=dt, tau=cfg.mpc.tau,
                         half_rho_area=tp.half_rho_area, constraints=c.spec(),
                         mu=cfg.mpc.mu, tol=cfg.mpc.tol, max_iter=cfg.mpc.max_iter,
                         solver=QpSolver())
    ctrl.reset(np.full(n, c0))
    dfilt = DerivativeFilter(dt, fparams.filter_time)

    rec = {k: np.zeros((steps, n)) for k in ("P", "F", "ct", "U", "p_star")}
    u_inf = np.zeros(steps)
    fr = np.zeros(steps)
    pcmd = np.zeros(steps)
    pref = np.zeros(steps)
    diagnostics = []
    failures = 0
    aborted = False
    done = steps
    for k in range(steps):
        uk = wind.at(k)
        fstate = step_field(fstate, tstate.ct, uk, layout, dt)
        F, P, C = measure(tstate, fstate.U, tp)
        fk = freq.at(k)
        dfdt = dfilt.update(fk)
        pcmd[k] = p_command_mw(k) * 1e6
        pref[k] = power_reference(pcmd[k] / 1e6, [fk], fparams, dt, dfdt=dfdt) * 1e6

        sol = ctrl.step(F, P, C, fstate.U, pref[k])
        qs = sol.qp
        r = qs.residuals
        diagnostics.append({
            "step": k, "status": qs.status.value, "iterations": qs.iterations,
            "stationarity": r.stationarity, "primal": r.primal, "dual": r.dual,
            "complementarity": r.complementarity, "objective": sol.objective,
            "polished": qs.polished,
        })
        if qs.status is not Status.SOLVED:
            failures += 1
            log.warning("step %d: solver status %s", k, qs.status.value)

        rec["P"][k], rec["F"][k], rec["ct"][k], rec["U"][k] = P, F, C, fstate.U
        rec["p_star"][k] = sol.p_star
        u_inf[k], fr[k] = uk, fk

        if failures > cfg.step_failure_budget:
            aborted = True
            done = k + 1
            log.error("aborting after %d solver failures", failures)
            break
        tstate = step_turbines(tstate, sol.p_star, fstate.U, dt, tp,
                               fidelity=cfg.turbine.fidelity)

    sl = slice(0, done)
    p_total = rec["P"][sl].sum(axis=1)
    # too short for the dynamic-load criterion when aborted on the first step
    report = metrics.fatigue_report(rec["F"][sl], p_total, pref[sl]) if done >= 2 else None
    return ResultsBundle(
        t=np.arange(done) * dt, P=rec["P"][sl], F=rec["F"][sl], ct=rec["ct"][sl],
        U=rec["U"][sl], u_inf=u_inf[sl], frequency=fr[sl], p_command=pcmd[sl],
        p_ref=pref[sl], p_total=p_total, p_star=rec["p_star"][sl], report=report,
        diagnostics=diagnostics, config=to_dict(cfg), aborted=aborted,
        solver_failures=failures,
        extras={"available_power": available, "initial_ct": c0,
                "wake_clamp_events": fstate.clamp_events,
                "servo_fidelity": cfg.turbine.fidelity},
    )


def sweep(cfg, grid, normalize=True):
    """Run one simulation per ``(w, s)`` cell and tabulate the outcome.

    All cells share the wind and frequency seeds of ``cfg``. With
    ``normalize`` the grid must contain a ``w = 0`` cell, whose loads
    become the reference for ``dF_norm`` and ``eF_norm``.
    """
    grid = [(float(w), float(s)) for w, s in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    base_cell = next((cell for cell in grid if cell[0] == 0.0), None)
    if normalize and base_cell is None:
        raise ValueError("normalization needs a w = 0 cell in the grid")
    results = {}
    for cell in sorted(set(grid)):
        w, s = cell
        results[cell] = run(cfg.replace(mpc__w=w, mpc__s=s, mpc__mode="proposed"))
    rows = []
    base = results[base_cell].report if normalize else None
    for cell in grid:
        rep = results[cell].report
        row = {"w": cell[0], "s": cell[1], "rms_error": math.nan, "dF": math.nan,
               "eF": math.nan, "aborted": results[cell].aborted}
        if rep is not None:
            row.update(rms_error=rep.rms_error, dF=rep.dF, eF=rep.eF)
        if normalize:
            row["dF_norm"] = row["eF_norm"] = math.nan
            if rep is not None and base is not None:
                nrep = metrics.normalize(rep, base)
                row["dF_norm"], row["eF_norm"] = nrep.dF_norm, nrep.eF_norm
        rows.append(row)
    return rows, results


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, columns):
    data = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_outputs(bundle, directory):
    """Write CSV series, ``metrics.json``, ``solver.csv`` and ``config.yaml``."""
    os.makedirs(directory, exist_ok=True)
    n = bundle.P.shape[1]
    t = bundle.t
    idx = range(1, n + 1)
    files = {
        "power.csv": (["t", "P_ref", "P_total"] + [f"P_{i}" for i in idx],
                      [t, bundle.p_ref, bundle.p_total, bundle.P]),
        "loads.csv": (["t"] + [f"F_{i}" for i in idx], [t, bundle.F]),
        "ct.csv": (["t"] + [f"ct_{i}" for i in idx], [t, bundle.ct]),
        "wind.csv": (["t", "U_inf"] + [f"U_{i}" for i in idx], [t, bundle.u_inf, bundle.U]),
        "dispatch.csv": (["t", "f_measure", "P_command", "P_ref"]
                         + [f"P_star_{i}" for i in idx],
                         [t, bundle.frequency, bundle.p_command, bundle.p_ref, bundle.p_star]),
    }
    written = []
    for name, (header, cols) in files.items():
        path = os.path.join(directory, name)
        _write_csv(path, header, cols)
        written.append(path)

    path = os.path.join(directory, "solver.csv")
    keys = ["step", "status", "iterations", "stationarity", "primal", "dual",
            "complementarity", "objective", "polished"]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for d in bundle.diagnostics:
            fh.write(",".join(_fmt(d[k]) if isinstance(d[k], float) else str(d[k])
                              for k in keys) + "\n")
    written.append(path)

    summary = bundle.report.as_dict() if bundle.report is not None else {}
    summary.update(aborted=bundle.aborted, solver_failures=bundle.solver_failures,
                   steps=int(bundle.n_steps), n_turbines=int(n),
                   max_kkt_residual=max((max(d["stationarity"], d["primal"], d["dual"],
                                             d["complementarity"])
                                         for d in bundle.diagnostics), default=0.0),
                   **{k: v for k, v in bundle.extras.items()})
    path = os.path.join(directory, "metrics.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
    written.append(path)

    from .scenario import from_dict
    path = os.path.join(directory, "config.yaml")
    dump_scenario(from_dict(bundle.config), path)
    written.append(path)
    return written


def read_series(directory, name):
    """Load one output CSV as ``(header, array)``."""
    path = os.path.join(directory, name)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_sweep_table(rows, path):
    keys = list(rows[0])
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(str(row[k]) for k in keys) + "\n")
