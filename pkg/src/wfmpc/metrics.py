"""Farm-level load and tracking criteria.

``dF_i`` is the RMS step-to-step change of turbine ``i``'s axial force and
``eF_i`` the RMS deviation of its force from the cross-farm mean; both divide
by the number of samples ``T``. Farm values are sums over turbines.
"""

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DegenerateBaselineError, InvalidParameterError


@dataclass(frozen=True)
class FatigueReport:
    dF_i: np.ndarray
    dF: float
    eF_i: np.ndarray
    eF: float
    rms_error: float
    samples: int
    dF_norm: float = None
    eF_norm: float = None

    def as_dict(self):
        out = {
            "dF": self.dF,
            "eF": self.eF,
            "rms_error": self.rms_error,
            "samples": self.samples,
            "dF_i": [float(v) for v in self.dF_i],
            "eF_i": [float(v) for v in self.eF_i],
        }
        if self.dF_norm is not None:
            out["dF_norm"] = self.dF_norm
            out["eF_norm"] = self.eF_norm
        return out


def _series(F):
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.ndim != 2:
        raise InvalidParameterError("force series must be T x N")
    return F


def _farm_total(values):
    # left-to-right accumulation, independent of numpy's pairwise summation
    return float(sum(values.tolist()))


def dynamic_fatigue(F):
    """Per-turbine and farm dynamic fatigue of a ``T x N`` force series."""
    F = _series(F)
    T = F.shape[0]
    if T < 2:
        raise InvalidParameterError("need at least two samples")
    dF_i = np.sqrt(np.sum(np.diff(F, axis=0) ** 2, axis=0) / T)
    return dF_i, _farm_total(dF_i)


def equalization(F):
    """Per-turbine and farm load-equalization index of a ``T x N`` force series."""
    F = _series(F)
    T, N = F.shape
    if T < 1 or N < 1:
        raise InvalidParameterError("need at least one sample and one turbine")
    # turbines summed in index order so the result is reproducible bit for bit
    total = np.zeros(T)
    for j in range(N):
        total = total + F[:, j]
    dev = F - (total / N)[:, None]
    eF_i = np.sqrt(np.sum(dev ** 2, axis=0) / T)
    return eF_i, _farm_total(eF_i)


def rms_error(p_total, p_ref):
    p_total = np.asarray(p_total, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    if p_total.shape != p_ref.shape:
        raise InvalidParameterError("series lengths differ")
    return float(np.sqrt(np.mean((p_total - p_ref) ** 2)))


def fatigue_report(F, p_total, p_ref):
    dF_i, dF = dynamic_fatigue(F)
    eF_i, eF = equalization(F)
    return FatigueReport(dF_i=dF_i, dF=dF, eF_i=eF_i, eF=eF,
                         rms_error=rms_error(p_total, p_ref), samples=_series(F).shape[0])


def normalize(report, baseline):
    """Attach ``dF/dF_base`` and ``eF/eF_base``; zero baselines are rejected."""
    if report.dF_i.shape != baseline.dF_i.shape:
        raise InvalidParameterError("report and baseline describe different farms")
    if baseline.dF == 0 or baseline.eF == 0:
        raise DegenerateBaselineError("baseline dF or eF is zero")
    return replace(report, dF_norm=report.dF / baseline.dF, eF_norm=report.eF / baseline.eF)
