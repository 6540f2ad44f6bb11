"""Run configuration: YAML with unit-suffixed keys, strict key checking."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from . import fading, linkmodel
from .errors import InvalidConfig
from .linkmodel import RfConfig


class ConfigError(InvalidConfig):
    pass


@dataclass
class RfSection:
    transmit_power_dbm: float = 27.0
    frequency_mhz: float = 915.0
    path_loss_exponent: float = 2.4
    switching_loss: float = 0.49
    samples_per_symbol: int = 20
    noise_power_dbm: float = -110.0
    # [re, im]
    structural_mode: list = field(default_factory=lambda: [0.6047, 0.5042])
    # [re, im], or "A" / "-A/|A|" relative to the structural mode
    reflection_g0: object = "A"
    reflection_g1: object = "-A/|A|"
    bd_antenna_gain_dbi: float = 2.1
    pol_mismatch_forward: float = 0.8
    pol_mismatch_back: float = 0.8
    modulation: str = "OOK"
    # null means a semi-passive BD (no circuit power)
    circuit_power_dbm: float | None = None


@dataclass
class QosSection:
    snr_threshold_db: float = 5.0
    outage_cap: float = 0.05


@dataclass
class FadingSection:
    kappa_forward: float = 4.0
    kappa_back: float = 4.0


@dataclass
class SweepSection:
    m_values: list = field(default_factory=lambda: list(range(2, 13)))
    s_values: list = field(default_factory=lambda: [1, 2])
    d_min_m: float = 0.0
    d_max_m: float = 120.0
    d_step_m: float = 1.0


@dataclass
class PlannerSection:
    grid_step_r_m: float = 0.05
    grid_step_d_m: float = 0.1
    r_upper_m: float | None = None
    threshold_method: str = "closed"


@dataclass
class SimSection:
    trials_per_point: int = 20000
    seed: int = 0
    cell_size_m: float = 0.5
    extent_m: float | None = None
    confidence_z: float = 3.0
    mc_overlay: bool = False


@dataclass
class CircuitSection:
    transmit_power_dbm: float = 35.0
    circuit_power_dbm: list = field(default_factory=lambda: [-40.0, -35.0, -30.0, -25.0, -20.0])
    m_values: list = field(default_factory=lambda: [3, 4, 5, 6])
    s_values: list = field(default_factory=lambda: [1])


@dataclass
class SchemesSection:
    area_m_values: list = field(default_factory=lambda: [4, 6, 8])
    two_tier_m_values: list = field(default_factory=lambda: [6, 12, 24])
    n_realizations: int = 50
    n_radii: int = 20
    cell_size_m: float = 1.0


_SECTIONS = {
    "rf": RfSection,
    "qos": QosSection,
    "fading": FadingSection,
    "sweep": SweepSection,
    "planner": PlannerSection,
    "sim": SimSection,
    "circuit": CircuitSection,
    "schemes": SchemesSection,
}


@dataclass
class RunConfig:
    scenario: str = "baseline"
    output_dir: str = "out"
    rf: RfSection = field(default_factory=RfSection)
    qos: QosSection = field(default_factory=QosSection)
    fading: FadingSection = field(default_factory=FadingSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    sim: SimSection = field(default_factory=SimSection)
    circuit: CircuitSection = field(default_factory=CircuitSection)
    schemes: SchemesSection = field(default_factory=SchemesSection)

    def rf_config(self, transmit_power_dbm: float | None = None,
                  circuit_power_dbm: float | None = None) -> RfConfig:
        rf = self.rf
        a = _complex(rf.structural_mode, "rf.structural_mode")
        p_dbm = rf.transmit_power_dbm if transmit_power_dbm is None else transmit_power_dbm
        xi_dbm = rf.circuit_power_dbm if circuit_power_dbm is None else circuit_power_dbm
        try:
            return RfConfig(
                transmit_power_watts=linkmodel.dbm_to_watts(p_dbm),
                wavelength_m=linkmodel.SPEED_OF_LIGHT / (rf.frequency_mhz * 1e6),
                path_loss_exponent=float(rf.path_loss_exponent),
                switching_loss=float(rf.switching_loss),
                samples_per_symbol=int(rf.samples_per_symbol),
                noise_power_watts=linkmodel.dbm_to_watts(rf.noise_power_dbm),
                structural_mode=a,
                reflection_coeffs=(_reflection(rf.reflection_g0, a, "rf.reflection_g0"),
                                   _reflection(rf.reflection_g1, a, "rf.reflection_g1")),
                bd_antenna_gain_linear=linkmodel.db_to_linear(rf.bd_antenna_gain_dbi),
                pol_mismatch_forward=float(rf.pol_mismatch_forward),
                pol_mismatch_back=float(rf.pol_mismatch_back),
                modulation=linkmodel.Modulation(rf.modulation),
                circuit_power_watts=0.0 if xi_dbm is None else linkmodel.dbm_to_watts(xi_dbm),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"rf: {exc}") from exc

    def qos_spec(self) -> fading.QosSpec:
        try:
            return fading.QosSpec.from_db(self.qos.snr_threshold_db, self.qos.outage_cap)
        except ValueError as exc:
            raise ConfigError(f"qos: {exc}") from exc

    def fading_spec(self) -> fading.FadingSpec:
        try:
            return fading.FadingSpec(float(self.fading.kappa_forward), float(self.fading.kappa_back))
        except ValueError as exc:
            raise ConfigError(f"fading: {exc}") from exc

    def conversions(self) -> dict:
        """dB-domain inputs and the linear values they were converted to."""
        cfg = self.rf_config()
        out = {
            "rf.transmit_power_dbm": [self.rf.transmit_power_dbm, cfg.transmit_power_watts, "W"],
            "rf.frequency_mhz": [self.rf.frequency_mhz, cfg.wavelength_m, "m (wavelength)"],
            "rf.noise_power_dbm": [self.rf.noise_power_dbm, cfg.noise_power_watts, "W"],
            "rf.bd_antenna_gain_dbi": [self.rf.bd_antenna_gain_dbi, cfg.bd_antenna_gain_linear, "linear"],
            "qos.snr_threshold_db": [self.qos.snr_threshold_db, self.qos_spec().gamma_th, "linear"],
        }
        if self.rf.circuit_power_dbm is not None:
            out["rf.circuit_power_dbm"] = [self.rf.circuit_power_dbm, cfg.circuit_power_watts, "W"]
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _complex(v, where: str) -> complex:
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
        raise ConfigError(f"{where}: expected [re, im]")
    return complex(float(v[0]), float(v[1]))


def _reflection(v, a: complex, where: str) -> complex:
    if v == "A":
        return a
    if v == "-A/|A|":
        return -a / abs(a)
    return _complex(v, where)


def _mark(node) -> str:
    return f"line {node.start_mark.line + 1}"


def _check_keys(root, source: str):
    if root is None:
        return
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}: {_mark(root)}: top level must be a mapping")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    seen = set()
    for knode, vnode in root.value:
        key = knode.value
        if key not in top:
            raise ConfigError(f"{source}: {_mark(knode)}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"{source}: {_mark(knode)}: duplicate key '{key}'")
        seen.add(key)
        if key in _SECTIONS:
            if not isinstance(vnode, yaml.MappingNode):
                raise ConfigError(f"{source}: {_mark(vnode)}: section '{key}' must be a mapping")
            allowed = {f.name for f in dataclasses.fields(_SECTIONS[key])}
            inner = set()
            for k2, _ in vnode.value:
                if k2.value not in allowed:
                    raise ConfigError(f"{source}: {_mark(k2)}: unknown key '{key}.{k2.value}'")
                if k2.value in inner:
                    raise ConfigError(f"{source}: {_mark(k2)}: duplicate key '{key}.{k2.value}'")
                inner.add(k2.value)


def _typecheck(section: str, obj):
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        where = f"{section}.{f.name}"
        if v is None or default is None:
            continue
        if isinstance(default, bool):
            ok = isinstance(v, bool)
        elif isinstance(default, int):
            ok = isinstance(v, int) and not isinstance(v, bool)
        elif isinstance(default, float):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
        elif isinstance(default, list):
            ok = isinstance(v, list)
        else:
            ok = True
        if not ok:
            raise ConfigError(f"{where}: bad value {v!r}")


def parse(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
        _check_keys(root, source)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            sec = _SECTIONS[key](**(value or {}))
            _typecheck(key, sec)
            kwargs[key] = sec
        else:
            kwargs[key] = str(value)
    cfg = RunConfig(**kwargs)
    # validate eagerly so errors surface at parse time
    cfg.rf_config()
    cfg.qos_spec()
    cfg.fading_spec()
    if cfg.planner.threshold_method not in ("closed", "empirical"):
        raise ConfigError(f"{source}: planner.threshold_method must be 'closed' or 'empirical'")
    return cfg


def load(path: str | Path | None = None) -> RunConfig:
    if path is None:
        text = resources.files("pbcover").joinpath("data/baseline.yaml").read_text()
        return parse(text, "baseline.yaml")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse(text, str(p))
