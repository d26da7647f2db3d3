"""Turbine aerodynamics and the per-turbine active-power servo.

Thrust and power follow the disc-based actuator relations::

    F = 0.5 rho A ct' U**2
    P = 0.5 rho A ct' U**3

The servo is a single-mass drivetrain: a speed PI with aerodynamic torque
feed-forward sets the generator torque through a first-order converter lag,
and a rate-limited pitch loop (feed-forward inversion of the thrust
coefficient surface plus a PI on the power error) realizes the commanded
thrust coefficient. All state arrays are vectorized over turbines.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .exceptions import InternalConsistencyError, InvalidParameterError

CT_MAX = 2.0
LAMBDA_OPT = 8.0
C_BETA = 0.08


def ct_surface(lam, beta, ct_max=CT_MAX, lambda_opt=LAMBDA_OPT, c_beta=C_BETA):
    """Analytic thrust-coefficient surface over tip-speed ratio and pitch (deg).

    ``ct_max * (lam/lambda_opt) * exp(1 - lam/lambda_opt) * exp(-c_beta*beta)``,
    clipped to ``[0, ct_max]``; the unique maximum sits at ``(lambda_opt, 0)``.
    """
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(lam < 0) or np.any(beta < 0):
        raise InvalidParameterError("tip-speed ratio and pitch must be non-negative")
    y = lam / lambda_opt
    c = np.clip(ct_max * y * np.exp(1.0 - y) * np.exp(-c_beta * beta), 0.0, ct_max)
    return float(c) if c.ndim == 0 else c


class AnalyticSurface:
    def __init__(self, ct_max=CT_MAX, lambda_opt=LAMBDA_OPT, c_beta=C_BETA):
        self.ct_max = ct_max
        self.lambda_opt = lambda_opt
        self.c_beta = c_beta

    def __call__(self, lam, beta):
        return ct_surface(lam, beta, self.ct_max, self.lambda_opt, self.c_beta)

    def pitch_for(self, lam, ct):
        """Smallest pitch giving ``ct`` at ``lam`` (0 where ``ct`` is out of reach)."""
        c0 = np.asarray(self(lam, 0.0))
        ct = np.asarray(ct, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.log(c0 / np.maximum(ct, 1e-12)) / self.c_beta
        return np.where(ct < c0, beta, 0.0)


class TableSurface:
    """Bilinear lookup over a ``(lambda, beta)`` grid.

    The pitch inversion assumes the coefficient is non-increasing in pitch.
    """

    def __init__(self, lambdas, betas, values):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.betas = np.asarray(betas, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.lambdas.size, self.betas.size):
            raise InvalidParameterError("table shape does not match its axes")
        self.ct_max = float(self.values.max())
        self._interp = RegularGridInterpolator((self.lambdas, self.betas), self.values,
                                               bounds_error=False, fill_value=None)

    def __call__(self, lam, beta):
        lam = np.clip(lam, self.lambdas[0], self.lambdas[-1])
        beta = np.clip(beta, self.betas[0], self.betas[-1])
        pts = np.stack(np.broadcast_arrays(lam, beta), axis=-1)
        out = np.clip(self._interp(pts), 0.0, None)
        return float(out) if out.ndim == 0 else out

    def pitch_for(self, lam, ct):
        lam, ct = np.broadcast_arrays(np.asarray(lam, float), np.asarray(ct, float))
        lo = np.full(lam.shape, self.betas[0])
        hi = np.full(lam.shape, self.betas[-1])
        reachable = ct < self(lam, lo)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            above = self(lam, mid) > ct
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.where(reachable, 0.5 * (lo + hi), self.betas[0])


def load_ct_table(path):
    """CSV grid: header row of pitch values (deg), first column tip-speed ratios."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    betas = np.array([float(v) for v in header[1:]])
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TableSurface(body[:, 0], betas, body[:, 1:])


@dataclass
class TurbineParams:
    """Physical and servo constants for one turbine type.

    The defaults describe a 126 m rotor with a 5 MW-class drivetrain.
    ``rated_power`` defaults high enough never to bind inside the thrust
    coefficient envelope, because power here scales with ``ct'`` directly.
    """

    rho: float = 1.2
    rotor_radius: float = 63.0
    area: float = None
    inertia: float = 4.0e7
    gear_ratio: float = 97.0
    torque_kp: float = 6.6e5
    torque_ki: float = 4.1e5
    converter_tau: float = 0.1
    pitch_kp: float = 0.2
    pitch_ki: float = 0.5
    pitch_rate: float = 8.0
    rated_power: float = 60.0e6
    omega_min: float = 0.3
    omega_max: float = 2.0
    ct_min: float = 0.0
    ct_max: float = CT_MAX
    filter_tau: float = 5.0
    substep: float = 0.05
    surface: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.area is None:
            self.area = math.pi * self.rotor_radius ** 2
        for name in ("rho", "rotor_radius", "area", "inertia", "gear_ratio", "torque_kp",
                     "torque_ki", "converter_tau", "pitch_rate", "rated_power",
                     "omega_min", "omega_max", "ct_max", "substep"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.pitch_kp < 0 or self.pitch_ki < 0 or self.filter_tau < 0:
            raise InvalidParameterError("pitch gains and filter time must be non-negative")
        if abs(self.area - math.pi * self.rotor_radius ** 2) > 1e-9 * self.area:
            raise InvalidParameterError("area must equal pi * rotor_radius**2")
        if self.omega_min >= self.omega_max:
            raise InvalidParameterError("omega_min must be below omega_max")
        if self.surface is None:
            self.surface = AnalyticSurface(ct_max=self.ct_max)

    @property
    def half_rho_area(self):
        return 0.5 * self.rho * self.area


def thrust(ct_prime, u, params):
    ct, u = _check_ct_u(ct_prime, u)
    return params.half_rho_area * ct * u ** 2


def power(ct_prime, u, params):
    ct, u = _check_ct_u(ct_prime, u)
    return params.half_rho_area * ct * u ** 2 * u


def required_ct(p_target, u, params):
    """Thrust coefficient that yields ``p_target`` at wind speed ``u``.

    Returns ``(ct, saturated)``; ``saturated`` flags clamping to
    ``[ct_min, ct_max]``.
    """
    p = np.asarray(p_target, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(p < 0) or np.any(u <= 0):
        raise InvalidParameterError("power target must be >= 0 and wind speed > 0")
    raw = p / (params.half_rho_area * u ** 3)
    ct = np.clip(raw, params.ct_min, params.ct_max)
    sat = (raw > params.ct_max) | (raw < params.ct_min)
    if ct.ndim == 0:
        return float(ct), bool(sat)
    return ct, sat


def _check_ct_u(ct, u):
    ct = np.asarray(ct, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(ct < 0) or np.any(u <= 0):
        raise InvalidParameterError("ct_prime must be >= 0 and wind speed > 0")
    if ct.ndim == 0 and u.ndim == 0:
        return float(ct), float(u)
    return ct, u


@dataclass
class TurbineState:
    """Servo and output state; every field is an array over turbines.

    ``ct_filtered`` is the low-pass filtered thrust-coefficient command held
    by the dispatch intake; the other fields belong to the servo.
    """

    omega: np.ndarray
    beta: np.ndarray
    ct: np.ndarray
    F: np.ndarray
    P: np.ndarray
    torque_gen: np.ndarray
    speed_int: np.ndarray
    pitch_int: np.ndarray
    ct_filtered: np.ndarray
    saturated: np.ndarray

    def copy(self):
        return TurbineState(**{k: np.array(v, copy=True) for k, v in vars(self).items()})

    @property
    def n(self):
        return self.ct.size


def omega_reference(u, params):
    surf = params.surface
    lam_opt = getattr(surf, "lambda_opt", LAMBDA_OPT)
    return np.clip(lam_opt * np.asarray(u, float) / params.rotor_radius,
                   params.omega_min, params.omega_max)


def equilibrium_state(p_target, u, params):
    """Servo fixed point delivering ``p_target`` at constant wind ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p = np.broadcast_to(np.asarray(p_target, dtype=float), u.shape).astype(float)
    p = np.minimum(p, params.rated_power)
    c_req, sat = required_ct(p, u, params)
    c_req, sat = np.atleast_1d(c_req), np.atleast_1d(sat)
    omega = omega_reference(u, params)
    lam = omega * params.rotor_radius / u
    beta = np.atleast_1d(params.surface.pitch_for(lam, c_req)).astype(float)
    ct = np.atleast_1d(params.surface(lam, beta)).astype(float)
    F = params.half_rho_area * ct * u ** 2
    P = F * u
    torque_gen = P / omega / params.gear_ratio
    zeros = np.zeros_like(u)
    return TurbineState(omega=omega, beta=beta, ct=ct, F=F, P=P, torque_gen=torque_gen,
                        speed_int=zeros.copy(), pitch_int=zeros.copy(),
                        ct_filtered=ct.copy(), saturated=sat.astype(bool))


def step_servo(state, p_command, u, dt, params):
    """Advance the servo loop by ``dt`` seconds toward ``p_command`` (W).

    Integrates with fixed sub-steps of at most ``params.substep``.
    """
    u = np.broadcast_to(np.asarray(u, dtype=float), state.ct.shape)
    p_cmd = np.broadcast_to(np.asarray(p_command, dtype=float), state.ct.shape)
    if np.any(u <= 0) or dt <= 0:
        raise InvalidParameterError("wind speed and dt must be positive")
    p_cmd = np.minimum(np.maximum(p_cmd, 0.0), params.rated_power)
    surf = params.surface
    kappa_p = params.half_rho_area * u ** 3
    c_req, sat = required_ct(p_cmd, u, params)
    c_req, sat = np.atleast_1d(c_req), np.atleast_1d(sat)
    omega_ref = omega_reference(u, params)
    p_floor = 1e-3 * params.rated_power

    n_sub = max(1, int(math.ceil(dt / params.substep - 1e-9)))
    h = dt / n_sub
    conv = math.exp(-h / params.converter_tau)
    s = state.copy()
    for _ in range(n_sub):
        lam = s.omega * params.rotor_radius / u
        p_aero = kappa_p * surf(lam, s.beta)

        # speed loop -> generator torque through the converter lag
        err_w = s.omega - omega_ref
        s.speed_int = s.speed_int + params.torque_ki * err_w * h
        t_ref = p_aero / s.omega / params.gear_ratio + params.torque_kp * err_w + s.speed_int
        s.torque_gen = t_ref + (s.torque_gen - t_ref) * conv

        # pitch loop: feed-forward inversion plus PI on the power error,
        # expressed in degrees through the local pitch sensitivity
        err_p = (p_aero - p_cmd) / np.maximum(C_BETA * p_aero, p_floor)
        beta_ff = surf.pitch_for(lam, c_req)
        beta_cmd = beta_ff + params.pitch_kp * err_p + s.pitch_int
        max_move = params.pitch_rate * h
        # conditional integration: freeze while clamped at 0 or rate limited
        free = (((beta_cmd > 0.0) | (err_p > 0.0))
                & (np.abs(np.clip(beta_cmd, 0.0, 90.0) - s.beta) < max_move))
        s.pitch_int = np.where(free, s.pitch_int + params.pitch_ki * err_p * h, s.pitch_int)
        beta_cmd = np.clip(beta_ff + params.pitch_kp * err_p + s.pitch_int, 0.0, 90.0)
        s.beta = s.beta + np.clip(beta_cmd - s.beta, -max_move, max_move)

        # single-mass drivetrain
        t_aero = p_aero / s.omega
        s.omega = s.omega + h / params.inertia * (t_aero - params.gear_ratio * s.torque_gen)
        s.omega = np.clip(s.omega, params.omega_min, params.omega_max)

    lam = s.omega * params.rotor_radius / u
    s.ct = np.atleast_1d(np.asarray(surf(lam, s.beta), dtype=float))
    s.F = params.half_rho_area * s.ct * u ** 2
    s.P = s.F * u
    s.saturated = sat.astype(bool)
    _check_state(s, params)
    return s


def step_turbines(state, p_dispatch, u, dt, params, fidelity="full"):
    """Apply dispatched power commands for one control interval.

    The command is converted to a thrust coefficient, low-pass filtered
    with ``params.filter_tau``, and then either realized directly
    (``"ideal"``) or tracked by the servo (``"full"``).
    """
    u = np.asarray(u, dtype=float)
    c_cmd, sat = required_ct(np.maximum(np.asarray(p_dispatch, float), 0.0), u, params)
    c_cmd = np.atleast_1d(c_cmd)
    a = math.exp(-dt / params.filter_tau) if params.filter_tau > 0 else 0.0
    ct_hat = a * state.ct_filtered + (1.0 - a) * c_cmd
    if fidelity == "ideal":
        s = state.copy()
        s.ct = ct_hat.copy()
        s.F = params.half_rho_area * s.ct * u ** 2
        s.P = s.F * u
        s.saturated = np.atleast_1d(sat).astype(bool)
    elif fidelity == "full":
        s = step_servo(state, params.half_rho_area * ct_hat * u ** 3, u, dt, params)
    else:
        raise InvalidParameterError(f"unknown servo fidelity {fidelity!r}")
    s.ct_filtered = ct_hat
    return s


def measure(state, u, params):
    """Feedback ``(F, P, ct)`` of the current thrust setting at wind ``u``."""
    F = params.half_rho_area * state.ct * np.asarray(u, float) ** 2
    return F, F * u, state.ct.copy()


def _check_state(s, params):
    ok = (np.all(np.isfinite(s.omega)) and np.all(s.beta >= 0)
          and np.all(s.omega >= params.omega_min - 1e-12)
          and np.all(s.omega <= params.omega_max + 1e-12)
          and np.all(s.ct >= 0) and np.all(s.ct <= params.surface.ct_max + 1e-12)
          and np.all(s.F >= 0) and np.all(s.P >= 0))
    if not ok:
        raise InternalConsistencyError("turbine state left its admissible range")


__all__ = [
    "AnalyticSurface", "TableSurface", "TurbineParams", "TurbineState", "ct_surface",
    "equilibrium_state", "load_ct_table", "measure", "power", "required_ct",
    "step_servo", "step_turbines", "thrust",
]
