"""Scenario description, YAML ingestion and validation.

A scenario file is a YAML mapping with the sections ``layout``, ``wind``,
``turbine``, ``frequency``, ``mpc``, ``constraints`` and ``dispatch`` plus a
few top-level keys (``name``, ``dt``, ``duration``, ``step_failure_budget``,
``output_dir``). Every omitted value takes its default; :func:`to_dict`
returns the fully resolved description.
"""

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

from .exceptions import ScenarioError
from .freq_control import FreqCtrlParams
from .mpc import ConstraintSpec, MpcWeights
from .turbine import TurbineParams, load_ct_table
from .wind_field import FarmLayout

MODES = ("proposed", "baseline", "tracking-only")
FIDELITIES = ("full", "ideal")
FREQ_SOURCES = ("synthetic", "constant", "csv")


@dataclass
class LayoutConfig:
    """Either explicit ``positions`` (m) or a ``rows`` x ``columns`` grid.

    ``rows`` counts turbines along the flow; spacings are in rotor diameters.
    """

    positions: list = None
    rows: int = 8
    columns: int = 1
    spacing: float = 5.0
    lateral_spacing: float = 5.0
    rotor_diameter: float = 126.0
    direction: float = 0.0
    k_wake: float = 0.05
    smoothing_time: float = 5.0

    def build(self):
        common = dict(rotor_diameter=self.rotor_diameter, direction=self.direction,
                      k_wake=self.k_wake, smoothing_time=self.smoothing_time)
        if self.positions is not None:
            return FarmLayout(positions=self.positions, **common)
        return FarmLayout.grid(self.rows, self.columns, self.spacing,
                               self.lateral_spacing, **common)


@dataclass
class WindConfig:
    mean: float = 9.0
    sigma: float = 0.1
    seed: int = 0
    correlation_time: float = 30.0
    path: str = None


@dataclass
class TurbineConfig:
    rho: float = 1.2
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
    substep: float = 0.05
    ct_table: str = None
    fidelity: str = "full"

    def build(self, rotor_diameter, ct_max, filter_tau):
        surface = load_ct_table(self.ct_table) if self.ct_table else None
        kwargs = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                  if f.name not in ("ct_table", "fidelity")}
        return TurbineParams(rotor_radius=rotor_diameter / 2.0, ct_max=ct_max,
                             filter_tau=filter_tau, surface=surface, **kwargs)


@dataclass
class FrequencyConfig:
    """Frequency support gains and the measured-frequency source.

    ``source`` is ``synthetic`` (an excursion of ``depth`` Hz), ``constant``
    (held at ``value``) or ``csv`` (``path`` with ``time_s, freq_hz``).
    """

    k_droop: float = 50.0
    k_inertia: float = 10.0
    filter_time: float = 1.0
    f_nominal: float = 50.0
    source: str = "synthetic"
    value: float = 50.0
    path: str = None
    depth: float = 0.1
    seed: int = 0

    def params(self):
        return FreqCtrlParams(self.k_droop, self.k_inertia, self.filter_time, self.f_nominal)


@dataclass
class MpcConfig:
    horizon: int = 10
    tau: float = 5.0
    q: float = 1.0
    r: float = 1e12
    w: float = 1e3
    s: float = 0.75
    s2_scale: float = 1e-2
    drop_r: bool = False
    mu: list = field(default_factory=lambda: [0.5, 0.5, 0.5])
    mode: str = "proposed"
    tol: float = 1e-6
    max_iter: int = 4000

    def weights(self):
        """Weights after applying the controller mode."""
        w, s, drop_r = self.w, self.s, self.drop_r
        if self.mode == "baseline":
            s, drop_r = 1.0, True
        elif self.mode == "tracking-only":
            w = 0.0
        return MpcWeights(q=self.q, r=self.r, w=w, s=s, s2_scale=self.s2_scale,
                          drop_r=drop_r)


@dataclass
class ConstraintConfig:
    ct_min: float = 0.1
    ct_max: float = 2.0
    d_ct: float = 0.2

    def spec(self):
        return ConstraintSpec(self.ct_min, self.ct_max, self.d_ct)


@dataclass
class DispatchConfig:
    """Piecewise-constant ``P_command`` as ``[[t_start_s, value], ...]``.

    With ``units: fraction`` values multiply the steady greedy farm power at
    the mean wind speed; with ``units: MW`` they are absolute.
    """

    units: str = "fraction"
    schedule: list = field(default_factory=lambda: [[0.0, 0.8]])

    def value_at(self, t):
        v = self.schedule[0][1]
        for t0, val in self.schedule:
            if t >= t0:
                v = val
        return v


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    description: str = ""
    dt: float = 1.0
    duration: float = 300.0
    step_failure_budget: int = 10
    output_dir: str = None
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    wind: WindConfig = field(default_factory=WindConfig)
    turbine: TurbineConfig = field(default_factory=TurbineConfig)
    frequency: FrequencyConfig = field(default_factory=FrequencyConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    dispatch: DispatchConfig = field(default_factory=DispatchConfig)

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    def replace(self, **sections):
        """Copy with top-level fields or nested fields replaced.

        Nested values use ``section__field`` keys, e.g. ``mpc__w=100``.
        """
        cfg = from_dict(to_dict(self))
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                setattr(getattr(cfg, sec), name, value)
            else:
                setattr(cfg, key, value)
        validate(cfg)
        return cfg


_SECTIONS = {
    "layout": LayoutConfig, "wind": WindConfig, "turbine": TurbineConfig,
    "frequency": FrequencyConfig, "mpc": MpcConfig, "constraints": ConstraintConfig,
    "dispatch": DispatchConfig,
}


def _coerce(value, default, where):
    """Match the type of the default where it is a plain scalar."""
    if value is None or default is None:
        return value
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if isinstance(default, float):
            if isinstance(value, str):
                return float(value)
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ScenarioError(where, f"expected {type(default).__name__}, got {value!r}") from None
    return value


def _build_section(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(where, "expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ScenarioError(f"{where}.{sorted(unknown)[0]}", "unknown field")
    obj = cls()
    for key, value in data.items():
        setattr(obj, key, _coerce(value, getattr(obj, key), f"{where}.{key}"))
    return obj


def from_dict(data):
    """Build and validate a :class:`ScenarioConfig` from a plain mapping."""
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    top = {f.name for f in dataclasses.fields(ScenarioConfig)} - set(_SECTIONS)
    unknown = set(data) - top - set(_SECTIONS)
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    if "layout" not in data:
        raise ScenarioError("layout", "required section missing")
    if "wind" not in data or not isinstance(data["wind"], dict) or "mean" not in data["wind"]:
        if not (isinstance(data.get("wind"), dict) and data["wind"].get("path")):
            raise ScenarioError("wind.mean", "required field missing")
    cfg = ScenarioConfig()
    for key in top:
        if key in data:
            setattr(cfg, key, _coerce(data[key], getattr(cfg, key), key))
    for key, cls in _SECTIONS.items():
        setattr(cfg, key, _build_section(cls, data.get(key), key))
    validate(cfg)
    return cfg


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def validate(cfg):
    m = cfg.mpc
    if not isinstance(m.horizon, int) or m.horizon < 1:
        raise ScenarioError("mpc.horizon", "horizon must be an integer >= 1")
    if not cfg.dt > 0:
        raise ScenarioError("dt", "must be positive")
    if not cfg.duration > 0:
        raise ScenarioError("duration", "must be positive")
    ratio = cfg.duration / cfg.dt
    if not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9):
        raise ScenarioError("duration", "must be a multiple of dt")
    c = cfg.constraints
    if not c.ct_min < c.ct_max:
        raise ScenarioError("constraints.ct_min", "must be below ct_max")
    if not c.d_ct > 0:
        raise ScenarioError("constraints.d_ct", "must be positive")
    if m.mode not in MODES:
        raise ScenarioError("mpc.mode", f"must be one of {MODES}")
    if not 0.0 <= m.s <= 1.0:
        raise ScenarioError("mpc.s", "must lie in [0, 1]")
    for name in ("q", "r", "w", "s2_scale", "tau"):
        if getattr(m, name) < 0:
            raise ScenarioError(f"mpc.{name}", "must be non-negative")
    if not isinstance(m.mu, list) or len(m.mu) != 3 or any(not 0 <= v <= 1 for v in m.mu):
        raise ScenarioError("mpc.mu", "must be three values in [0, 1]")
    if cfg.turbine.fidelity not in FIDELITIES:
        raise ScenarioError("turbine.fidelity", f"must be one of {FIDELITIES}")
    f = cfg.frequency
    if f.source not in FREQ_SOURCES:
        raise ScenarioError("frequency.source", f"must be one of {FREQ_SOURCES}")
    if f.source == "csv" and not f.path:
        raise ScenarioError("frequency.path", "required when source is csv")
    if f.k_droop < 0 or f.k_inertia < 0:
        raise ScenarioError("frequency.k_droop", "gains must be non-negative")
    w = cfg.wind
    if w.path is None and not w.mean > 0:
        raise ScenarioError("wind.mean", "must be positive")
    if w.sigma < 0:
        raise ScenarioError("wind.sigma", "must be non-negative")
    d = cfg.dispatch
    if d.units not in ("fraction", "MW"):
        raise ScenarioError("dispatch.units", "must be 'fraction' or 'MW'")
    if not d.schedule or any(len(e) != 2 for e in d.schedule):
        raise ScenarioError("dispatch.schedule", "must be a non-empty list of [t, value] pairs")
    if cfg.step_failure_budget < 0:
        raise ScenarioError("step_failure_budget", "must be non-negative")
    lay = cfg.layout
    if lay.positions is None and (lay.rows < 1 or lay.columns < 1):
        raise ScenarioError("layout.rows", "grid needs at least one row and column")
    try:
        lay.build()
    except ValueError as exc:
        raise ScenarioError("layout", str(exc)) from None
    return cfg


def load_scenario(path):
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError("<file>", f"not valid YAML: {exc}") from None
    return from_dict(data or {})


def dump_scenario(cfg, path=None):
    """Serialize the resolved scenario to YAML; write it when ``path`` is given."""
    text = yaml.safe_dump(to_dict(cfg), sort_keys=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
