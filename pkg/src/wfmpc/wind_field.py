"""Freestream synthesis and delayed actuator-disk wake propagation.

The flow surrogate gives every turbine a rotor-effective wind speed::

    U_i = U_inf * (1 - sqrt(sum_j delta_ij**2))

where ``delta_ij`` is the top-hat (Jensen) deficit cast by upstream turbine
``j``, evaluated from that turbine's induction ``lag_ij`` steps ago. The lag
is the streamwise distance divided by the current freestream speed. The
combined deficit is smoothed with a first-order lag before it is applied,
so an unwaked turbine always sees the freestream exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError


@dataclass
class FarmLayout:
    """Turbine positions and wake-model constants.

    ``direction`` is in degrees; 0 means the flow travels along +x.
    """

    positions: np.ndarray
    rotor_diameter: float = 126.0
    direction: float = 0.0
    k_wake: float = 0.05
    smoothing_time: float = 5.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise InvalidParameterError("positions must be a list of (x, y) pairs")
        if self.rotor_diameter <= 0:
            raise InvalidParameterError("rotor diameter must be positive")
        if self.k_wake <= 0:
            raise InvalidParameterError("k_wake must be positive")
        if self.smoothing_time < 0:
            raise InvalidParameterError("smoothing time must be non-negative")
        if len(np.unique(self.positions, axis=0)) != len(self.positions):
            raise InvalidParameterError("turbine positions must be distinct")

    @classmethod
    def grid(cls, rows, columns, spacing=5.0, lateral_spacing=None, **kwargs):
        """Regular farm: ``rows`` turbines along the flow, ``columns`` across it.

        Spacings are in rotor diameters. Turbine index runs along the flow
        first, so each consecutive block of ``rows`` turbines is one column.
        """
        d = kwargs.get("rotor_diameter", 126.0)
        lateral_spacing = spacing if lateral_spacing is None else lateral_spacing
        pos = [(r * spacing * d, c * lateral_spacing * d)
               for c in range(columns) for r in range(rows)]
        return cls(positions=np.array(pos), **kwargs)

    @property
    def n_turbines(self):
        return len(self.positions)

    def _axes(self):
        th = math.radians(self.direction)
        return np.array([math.cos(th), math.sin(th)]), np.array([-math.sin(th), math.cos(th)])

    def streamwise(self):
        along, _ = self._axes()
        return self.positions @ along

    def order(self):
        """Turbine indices sorted from most upstream to most downstream."""
        return np.argsort(self.streamwise(), kind="stable")

    def pair_geometry(self):
        """Streamwise distance matrix and waked mask.

        ``dist[i, j]`` is how far turbine ``i`` sits downstream of ``j``;
        ``waked[i, j]`` is True when ``j`` is strictly upstream of ``i`` and
        laterally within one rotor diameter.
        """
        along, across = self._axes()
        rel = self.positions[:, None, :] - self.positions[None, :, :]
        dist = rel @ along
        lateral = np.abs(rel @ across)
        waked = (dist > 0) & (lateral < self.rotor_diameter)
        return dist, waked


@dataclass
class FreestreamTrace:
    dt: float
    samples: np.ndarray
    mean: float
    sigma: float
    seed: int = None
    correlation_time: float = 30.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if np.any(self.samples <= 0):
            raise InvalidParameterError("freestream samples must be positive")

    @property
    def duration(self):
        return self.samples.size * self.dt

    def at(self, k):
        return float(self.samples[min(k, self.samples.size - 1)])


def synth_freestream(mean, sigma, seed, duration, dt, correlation_time=30.0):
    """Freestream speed with AR(1)-coloured multiplicative turbulence.

    The relative perturbation is a stationary Gauss-Markov process with unit
    variance scaled by ``sigma`` and autocorrelation ``exp(-lag/correlation_time)``.
    Samples are floored at 5 % of the mean to keep them positive.
    """
    if mean <= 0 or dt <= 0 or duration <= 0:
        raise InvalidParameterError("mean, duration and dt must be positive")
    if sigma < 0 or correlation_time <= 0:
        raise InvalidParameterError("sigma must be >= 0 and correlation time > 0")
    n = int(round(duration / dt))
    if sigma == 0:
        samples = np.full(n, float(mean))
    else:
        rng = np.random.default_rng(seed)
        phi = math.exp(-dt / correlation_time)
        innov = rng.standard_normal(n) * math.sqrt(1.0 - phi * phi)
        e = np.empty(n)
        e[0] = rng.standard_normal()
        for k in range(1, n):
            e[k] = phi * e[k - 1] + innov[k]
        samples = np.maximum(mean * (1.0 + sigma * e), 0.05 * mean)
    return FreestreamTrace(dt=dt, samples=samples, mean=float(mean), sigma=float(sigma),
                           seed=seed, correlation_time=correlation_time)


def load_freestream_csv(path):
    """Read a ``time_s, speed_mps`` CSV (header row optional) into a trace.

    The sample interval is taken from the first two time stamps.
    """
    data = np.genfromtxt(path, delimiter=",", dtype=float)
    if data.ndim == 2 and np.isnan(data[0]).any():
        data = data[1:]
    data = np.atleast_2d(data)
    if data.shape[1] != 2 or len(data) < 2:
        raise InvalidParameterError(f"{path}: expected two columns and at least two rows")
    t, u = data[:, 0], data[:, 1]
    dt = float(t[1] - t[0])
    if dt <= 0:
        raise InvalidParameterError(f"{path}: time stamps must increase")
    return FreestreamTrace(dt=dt, samples=u, mean=float(u.mean()),
                           sigma=float(u.std() / u.mean()), seed=None)


def induction_factor(ct_prime):
    """Axial induction from the disc-based thrust coefficient, ``a = ct/(4 + ct)``."""
    ct = np.asarray(ct_prime, dtype=float)
    if np.any(ct < 0):
        raise InvalidParameterError("ct_prime must be non-negative")
    a = ct / (4.0 + ct)
    return float(a) if a.ndim == 0 else a


def wake_deficit(a, x, D, k_wake):
    """Top-hat deficit ``2a (D / (D + 2 k x))**2`` at distance ``x`` downstream."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a < 0) or np.any(a >= 1):
        raise InvalidParameterError("induction factor must lie in [0, 1)")
    if np.any(x < 0) or D <= 0 or k_wake <= 0:
        raise InvalidParameterError("x must be >= 0 and D, k_wake > 0")
    d = 2.0 * a * (D / (D + 2.0 * k_wake * x)) ** 2
    return float(d) if d.ndim == 0 else d


def steady_speeds(layout, ct_vec, freestream):
    """Closed-form steady rotor speeds for constant thrust settings."""
    dist, waked = layout.pair_geometry()
    a = induction_factor(np.asarray(ct_vec, dtype=float))
    deficits = np.where(waked, wake_deficit(
        np.broadcast_to(a, dist.shape), np.where(waked, dist, 0.0),
        layout.rotor_diameter, layout.k_wake), 0.0)
    combined = np.sqrt(np.sum(deficits ** 2, axis=1))
    return freestream * (1.0 - np.minimum(combined, 1.0 - 1e-9))


@dataclass
class FlowFieldState:
    """Rotor-effective speeds plus the induction history feeding the delay lines.

    ``deficit`` is the smoothed combined deficit per turbine.
    ``history[0]`` holds the most recently pushed induction factors; row ``L``
    holds the values pushed ``L`` steps ago.
    """

    U: np.ndarray
    deficit: np.ndarray
    history: np.ndarray
    step: int = 0
    clamp_events: int = 0
    _dist: np.ndarray = field(default=None, repr=False)
    _waked: np.ndarray = field(default=None, repr=False)

    def copy(self):
        return FlowFieldState(self.U.copy(), self.deficit.copy(), self.history.copy(), self.step,
                              self.clamp_events, self._dist, self._waked)


def init_field(layout, ct_vec, freestream, max_lag):
    """Flow state at steady state for constant ``ct_vec`` and ``freestream``.

    ``max_lag`` bounds the delay-line depth in steps; choose it from the
    slowest freestream sample the run will see.
    """
    ct_vec = _check_ct(ct_vec, layout)
    dist, waked = layout.pair_geometry()
    a = induction_factor(ct_vec)
    history = np.tile(a, (int(max_lag) + 1, 1))
    U = steady_speeds(layout, ct_vec, freestream)
    return FlowFieldState(U=U, deficit=1.0 - U / freestream, history=history,
                          _dist=dist, _waked=waked)


def max_lag_steps(layout, min_speed, dt):
    dist, waked = layout.pair_geometry()
    longest = float(np.max(np.where(waked, dist, 0.0), initial=0.0))
    return int(math.ceil(longest / (min_speed * dt))) if longest > 0 else 0


def lag_steps(distance, advection_speed, dt):
    """Delay in whole steps: ``ceil(distance / (speed * dt))``."""
    return np.ceil(np.asarray(distance) / (advection_speed * dt) - 1e-12).astype(int)


def step_field(state, ct_vec, freestream, layout, dt):
    """Advance the flow one step and return the new state.

    Deficits are read from the delay lines before the current thrust
    settings are pushed, so a change in ``ct_vec`` reaches a turbine
    ``lag`` steps later.
    """
    ct_vec = _check_ct(ct_vec, layout)
    if freestream <= 0 or dt <= 0:
        raise InvalidParameterError("freestream and dt must be positive")
    new = state.copy()
    if new._dist is None:
        new._dist, new._waked = layout.pair_geometry()
    dist, waked = new._dist, new._waked
    n = layout.n_turbines
    depth = new.history.shape[0]

    lags = np.minimum(lag_steps(np.where(waked, dist, 0.0), freestream, dt), depth)
    # history row 0 is the last push, i.e. one step ago
    rows = np.clip(lags - 1, 0, depth - 1)
    cols = np.broadcast_to(np.arange(n), (n, n))
    a_delayed = new.history[rows, cols]
    x = np.where(waked, dist, 0.0)
    deficits = np.where(waked, wake_deficit(a_delayed, x, layout.rotor_diameter,
                                            layout.k_wake), 0.0)
    combined = np.sqrt(np.sum(deficits ** 2, axis=1))
    if np.any(combined >= 1.0):
        new.clamp_events += int(np.sum(combined >= 1.0))
        combined = np.minimum(combined, 1.0 - 1e-9)

    if layout.smoothing_time > 0:
        gain = 1.0 - math.exp(-dt / layout.smoothing_time)
        new.deficit = new.deficit + gain * (combined - new.deficit)
    else:
        new.deficit = combined
    new.U = freestream * (1.0 - new.deficit)

    new.history = np.roll(new.history, 1, axis=0)
    new.history[0] = induction_factor(ct_vec)
    new.step += 1
    return new


def _check_ct(ct_vec, layout):
    ct_vec = np.asarray(ct_vec, dtype=float).ravel()
    if ct_vec.size != layout.n_turbines:
        raise InvalidParameterError(
            f"expected {layout.n_turbines} thrust coefficients, got {ct_vec.size}")
    if np.any(ct_vec < 0):
        raise InvalidParameterError("thrust coefficients must be non-negative")
    return ct_vec
