"""Farm power reference from a dispatch command plus frequency support.

``P_ref = P_command + K_D * df + K_I * d(df)/dt`` with ``df = f0 - f_measure``,
so under-frequency and falling frequency both raise the reference. Powers are
in MW inside this module.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError


@dataclass
class FreqCtrlParams:
    k_droop: float = 50.0       # MW/Hz
    k_inertia: float = 10.0     # MW*s/Hz
    filter_time: float = 1.0    # s, derivative low-pass
    f_nominal: float = 50.0

    def __post_init__(self):
        if self.k_droop < 0 or self.k_inertia < 0:
            raise InvalidParameterError("droop and inertia gains must be non-negative")
        if self.filter_time < 0:
            raise InvalidParameterError("filter time must be non-negative")


@dataclass
class FrequencyTrace:
    dt: float
    samples: np.ndarray
    f_nominal: float = 50.0
    source: str = "constant"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.dt <= 0:
            raise InvalidParameterError("dt must be positive")
        if np.any(np.abs(self.samples - self.f_nominal) > 2.0):
            raise InvalidParameterError("frequency samples further than 2 Hz from nominal")

    def at(self, k):
        return float(self.samples[min(k, self.samples.size - 1)])

    def window(self, k, length):
        lo = max(0, k - length + 1)
        return self.samples[lo:k + 1]


def constant_frequency(f, duration, dt, f_nominal=50.0):
    n = int(round(duration / dt))
    return FrequencyTrace(dt, np.full(n, float(f)), f_nominal, source="constant")


def synthetic_excursion(duration, dt, f_nominal=50.0, depth=0.1, onset=None, seed=0,
                        noise=0.003):
    """PMU-like trace: an under-frequency event, partial recovery, then an over-frequency swing.

    The dip reaches ``f_nominal - depth`` about 8 s after ``onset``, recovers
    to half depth, and later a smaller over-frequency excursion of
    ``+depth/2`` follows. Low-amplitude measurement noise is added.
    """
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    onset = 0.2 * duration if onset is None else onset
    f = np.zeros(n)
    tt = t - onset
    on = tt >= 0
    dip = np.where(on, -depth * (1.0 - np.exp(-tt / 3.0)) * np.exp(-np.maximum(tt, 0) / 40.0)
                   - 0.5 * depth * (1.0 - np.exp(-np.maximum(tt, 0) / 60.0)), 0.0)
    t2 = t - (onset + 0.45 * duration)
    swing = np.where(t2 >= 0, 0.75 * depth * (1.0 - np.exp(-t2 / 15.0)), 0.0)
    f = f_nominal + dip + swing
    rng = np.random.default_rng(seed)
    f = f + noise * rng.standard_normal(n)
    return FrequencyTrace(dt, f, f_nominal, source="synthetic")


def load_frequency_csv(path, f_nominal=50.0):
    """Read a ``time_s, freq_hz`` CSV (header row optional)."""
    data = np.genfromtxt(path, delimiter=",", dtype=float)
    if data.ndim == 2 and np.isnan(data[0]).any():
        data = data[1:]
    data = np.atleast_2d(data)
    if data.shape[1] != 2 or len(data) < 2:
        raise InvalidParameterError(f"{path}: expected two columns and at least two rows")
    return FrequencyTrace(float(data[1, 0] - data[0, 0]), data[:, 1], f_nominal,
                          source=str(path))


class DerivativeFilter:
    """Backward difference followed by a first-order low-pass.

    Owned by the scenario loop; call :meth:`update` once per sample.
    """

    def __init__(self, dt, filter_time):
        if dt <= 0:
            raise InvalidParameterError("dt must be positive")
        self.dt = dt
        self.gain = 1.0 - math.exp(-dt / filter_time) if filter_time > 0 else 1.0
        self._last = None
        self.value = 0.0
        self._primed = False

    def update(self, f):
        if self._last is None:
            self._last = f
            return self.value
        d = (f - self._last) / self.dt
        self._last = f
        if not self._primed:
            self.value = d
            self._primed = True
        else:
            self.value += self.gain * (d - self.value)
        return self.value


def derivative_estimate(samples, dt, filter_time):
    """Filtered slope (Hz/s) at the end of ``samples``.

    The filter starts from the first backward difference, so a pure ramp
    returns its slope exactly.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise InvalidParameterError("need at least two samples")
    filt = DerivativeFilter(dt, filter_time)
    for f in samples:
        filt.update(f)
    return filt.value


def power_reference(p_command, f_window, params, dt, dfdt=None):
    """Farm power reference in MW.

    ``f_window`` is the recent frequency history ending at the current
    sample. ``dfdt`` overrides the derivative estimate, letting a stateful
    :class:`DerivativeFilter` feed the computation.
    """
    f_window = np.atleast_1d(np.asarray(f_window, dtype=float))
    if f_window.size == 0:
        raise InvalidParameterError("empty frequency window")
    delta_f = params.f_nominal - f_window[-1]
    if dfdt is None:
        dfdt = derivative_estimate(f_window, dt, params.filter_time) if f_window.size > 1 else 0.0
    p_ref = p_command + params.k_droop * delta_f - params.k_inertia * dfdt
    return max(p_ref, 0.0)
