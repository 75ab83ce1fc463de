"""Scenario configuration, seeded topology generation and experiment presets.

Random draws come from numpy's PCG64 bit generator (``numpy.random.PCG64``,
the PCG XSL RR 128/64 algorithm), seeded with the 64-bit scenario seed. For
each secondary network, in id order, the generator yields the transmitter x,
then y (uniform over the region), then one uniform angle per receiver.

Preset defaults that the experiments leave open (documented, not measured):

* base: 8 worst-case PU receivers on the 500 m boundary; PU power set so they
  sit exactly at their 20 dB threshold; SU range 100 m, 1 receiver at range.
* exp1/exp2: PU at 60 dBm, 10 dB PU threshold, 60 deg sectors with -20 dB
  sidelobes for SU transceivers and PU receivers.
* fig2: PU power swept, PU range swept over 250/500/1000 m.
* fig3/fig4: PU at 30 dBm.
* illus_fig1*: eight receivers fanned evenly over a 140 deg arc.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .consumption import SpectrumSpace
from .geometry import Point, grid_for_mode
from .propagation import (Antenna, OMNI, PropagationEnv, Receiver, Transmitter, db_to_ratio, dbm_to_w,
                          path_gain)
from .sam import SAM_KINDS, Network, SpectrumAccessRequest

PU_ID = -1
PLACEMENTS = ("worst_case_boundary", "at_distance", "ring")


class ConfigError(ValueError):
    pass


@dataclass
class AntennaConfig:
    pattern: str = "omni"
    beamwidth_deg: float = 60.0
    sidelobe_db: float = -20.0

    def build(self, boresight: float = 0.0) -> Antenna:
        if self.pattern == "omni":
            return OMNI
        if self.pattern == "sector":
            return Antenna.sector(boresight, self.beamwidth_deg, self.sidelobe_db)
        raise ConfigError(f"unknown antenna pattern {self.pattern!r}")


@dataclass
class PUConfig:
    active: bool = True
    position_m: list | None = None  # None: region center
    power_dbm: float | None = None  # None: worst-case receivers exactly at min_sinr_db
    range_m: float = 500.0
    n_receivers: int = 8
    placement: str = "worst_case_boundary"
    placement_distance_m: float | None = None  # at_distance / ring; defaults to range_m
    fan_deg: float = 360.0  # ring: arc the receivers are spread over
    # positions unknown: None assumes the worst-case boundary ring; an integer k
    # assumes the actual receivers plus k boundary receivers
    boundary_receivers: int | None = None
    min_sinr_db: float = 20.0
    antenna: AntennaConfig = field(default_factory=AntennaConfig)
    positions_known: bool = False


@dataclass
class SUConfig:
    count: int = 100
    range_m: float = 100.0
    n_receivers: int = 1
    min_sinr_db: float = 3.0
    antenna: AntennaConfig = field(default_factory=AntennaConfig)
    max_power_dbm: float = 30.0
    min_power_dbm: float = -80.0


@dataclass
class FixedNetworkConfig:
    tx_m: list
    power_dbm: float
    receivers_m: list
    min_sinr_db: float = 3.0
    range_m: float | None = None


@dataclass
class ScenarioConfig:
    name: str = "custom"
    width_m: float = 4300.0
    height_m: float = 3700.0
    hex_side_m: float = 100.0
    grid_mode: str = "paper26"
    ple: float = 3.5
    assumed_ple: float | None = None
    noise_dbm: float = -106.0
    p_max_dbm: float = 30.0
    p_min_dbm: float = -192.0
    channels: int = 1
    pu: PUConfig = field(default_factory=PUConfig)
    su: SUConfig = field(default_factory=SUConfig)
    fixed_networks: list = field(default_factory=list)
    sams: list = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _from_dict(cls, data)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid scenario JSON: {exc}") from exc

    def validate(self) -> None:
        if self.su.count < 0:
            raise ConfigError("su.count must be >= 0")
        if self.su.range_m <= 0 or self.pu.range_m <= 0:
            raise ConfigError("ranges must be positive")
        if self.pu.placement not in PLACEMENTS:
            raise ConfigError(f"unknown PU receiver placement {self.pu.placement!r}")
        if self.pu.n_receivers < 1 or self.su.n_receivers < 1:
            raise ConfigError("networks need at least one receiver")
        if self.pu.boundary_receivers is not None and self.pu.boundary_receivers < 0:
            raise ConfigError("pu.boundary_receivers must be >= 0")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        for s in self.sams:
            if s not in SAM_KINDS:
                raise ConfigError(f"unknown SAM {s!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


_NESTED = {"pu": PUConfig, "su": SUConfig, "antenna": AntennaConfig}


def _from_dict(cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {cls.__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if k in _NESTED:
            kwargs[k] = _from_dict(_NESTED[k], v)
        elif k == "fixed_networks":
            kwargs[k] = [_from_dict(FixedNetworkConfig, x) for x in v]
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    space: SpectrumSpace
    pu_network: Network | None  # active incumbent with its actual receivers
    pu_protected: Network | None  # the incumbent as knowledge-based mechanisms see it
    su_requests: tuple
    fixed_networks: tuple = ()
    assumed_env: PropagationEnv | None = None

    @property
    def channels(self) -> int:
        return self.space.bands

    @property
    def seed(self) -> int:
        return self.config.seed


def _ring(center: Point, radius: float, n: int, arc_deg: float = 360.0, start: float = 0.0) -> list[Point]:
    if arc_deg >= 360.0:
        angles = [start + 2 * math.pi * k / n for k in range(n)]
    else:
        span = math.radians(arc_deg)
        angles = [start + (span * k / (n - 1) if n > 1 else 0.0) for k in range(n)]
    return [Point(center.x + radius * math.cos(a), center.y + radius * math.sin(a)) for a in angles]


def _centroid(points: Sequence[Point]) -> Point:
    return Point(sum(p.x for p in points) / len(points), sum(p.y for p in points) / len(points))


def _bearing_or_zero(src: Point, dst: Point) -> float:
    dx, dy = dst.x - src.x, dst.y - src.y
    return math.atan2(dy, dx) % (2 * math.pi) if (dx or dy) else 0.0


def build_network(net_id: int, tx_pos: Point, power: float, rx_positions: Sequence[Point], beta: float,
                  rng_range: float, antenna: AntennaConfig, tx_antenna: AntennaConfig | None = None,
                  role: str = "secondary") -> Network:
    """Network with transmitter aimed at its receivers' centroid and receivers aimed back."""
    tx_ant_cfg = antenna if tx_antenna is None else tx_antenna
    c = _centroid(rx_positions)
    tx = Transmitter(tx_pos, power, tx_ant_cfg.build(_bearing_or_zero(tx_pos, c)))
    rxs = tuple(Receiver(p, beta, antenna.build(_bearing_or_zero(p, tx_pos)), net_id) for p in rx_positions)
    return Network(net_id, tx, rxs, rng_range, role)


def _env(cfg: ScenarioConfig, ple: float | None = None) -> PropagationEnv:
    return PropagationEnv.from_dbm(cfg.ple if ple is None else ple, cfg.noise_dbm, cfg.p_max_dbm, cfg.p_min_dbm)


def pu_power(cfg: ScenarioConfig, env: PropagationEnv) -> float:
    pu = cfg.pu
    if pu.power_dbm is not None:
        return dbm_to_w(pu.power_dbm)
    return db_to_ratio(pu.min_sinr_db) * env.noise_floor / path_gain(pu.range_m, env.ple)


def _pu_receivers(cfg: ScenarioConfig, center: Point) -> list[Point]:
    pu = cfg.pu
    if pu.placement == "worst_case_boundary":
        return _ring(center, pu.range_m, pu.n_receivers)
    dist = pu.placement_distance_m if pu.placement_distance_m is not None else pu.range_m
    if pu.placement == "at_distance":
        return _ring(center, dist, pu.n_receivers)
    return _ring(center, dist, pu.n_receivers, pu.fan_deg)


def generate(cfg: ScenarioConfig) -> Scenario:
    """Materialize a scenario; a pure function of ``cfg`` (seed included)."""
    cfg.validate()
    env = _env(cfg)
    grid = grid_for_mode(cfg.grid_mode, cfg.width_m, cfg.height_m, cfg.hex_side_m)
    space = SpectrumSpace(grid, env, bands=cfg.channels)
    center = Point(cfg.width_m / 2, cfg.height_m / 2)

    pu_net = pu_prot = None
    if cfg.pu.active:
        pu = cfg.pu
        pos = Point(*pu.position_m) if pu.position_m is not None else center
        beta = db_to_ratio(pu.min_sinr_db)
        p = pu_power(cfg, env)
        actual = _pu_receivers(cfg, pos)
        pu_net = build_network(PU_ID, pos, p, actual, beta, pu.range_m, pu.antenna, AntennaConfig(), "primary")
        if pu.positions_known:
            pu_prot = pu_net
        else:
            k = pu.boundary_receivers
            if k is not None:
                # prefixes of one fixed ring, so each k's set contains the previous one
                assumed = actual + _ring(pos, pu.range_m, max(8, k))[:k]
            else:
                assumed = _ring(pos, pu.range_m, pu.n_receivers)
            pu_prot = build_network(PU_ID, pos, p, assumed, beta, pu.range_m, pu.antenna, AntennaConfig(),
                                    "primary")

    fixed = []
    for k, fn in enumerate(cfg.fixed_networks):
        tx = Point(*fn.tx_m)
        rx = [Point(*r) for r in fn.receivers_m]
        rng_range = fn.range_m or max(math.dist(tx, r) for r in rx)
        fixed.append(build_network(-2 - k, tx, dbm_to_w(fn.power_dbm), rx, db_to_ratio(fn.min_sinr_db),
                                   rng_range, AntennaConfig()))

    su = cfg.su
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    beta = db_to_ratio(su.min_sinr_db)
    p_hi, p_lo = dbm_to_w(su.max_power_dbm), dbm_to_w(su.min_power_dbm)
    if p_hi > env.p_max * (1 + 1e-12):
        raise ConfigError("su.max_power_dbm exceeds p_max_dbm")
    requests = []
    for i in range(su.count):
        x = float(rng.uniform(0.0, cfg.width_m))
        y = float(rng.uniform(0.0, cfg.height_m))
        angles = rng.uniform(0.0, 2 * math.pi, su.n_receivers)
        tx = Point(x, y)
        rx = [Point(x + su.range_m * math.cos(a), y + su.range_m * math.sin(a)) for a in angles]
        net = build_network(i, tx, p_hi, rx, beta, su.range_m, su.antenna)
        requests.append(SpectrumAccessRequest(net, p_hi, p_lo))

    assumed_env = _env(cfg, cfg.assumed_ple) if cfg.assumed_ple is not None else env
    return Scenario(cfg, space, pu_net, pu_prot, tuple(requests), tuple(fixed), assumed_env)


# --- presets --------------------------------------------------------------------

SECTOR60 = {"pattern": "sector", "beamwidth_deg": 60.0, "sidelobe_db": -20.0}
PRESETS = ("base", "exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "fig2", "fig3", "fig4",
           "illus_fig1a", "illus_fig1b", "illus_fig1c", "illus_fig1d")

# default x-axis of each preset, used by the CLI when no --sweep is given
DEFAULT_SWEEPS = {
    "base": {"su.count": list(range(10, 101, 10))},
    "exp1": {"su.count": list(range(10, 101, 10))},
    "exp2": {"su.count": list(range(10, 101, 10))},
    "exp3": {"su.count": list(range(10, 101, 10))},
    "exp4": {"su.count": list(range(10, 101, 10))},
    "exp5": {"su.count": list(range(10, 101, 10))},
    "exp6": {"su.range_m": [40, 100, 200, 400]},
    "fig2": {"pu.range_m": [250, 500, 1000], "pu.power_dbm": list(range(0, 61, 5))},
    "fig3": {"pu.boundary_receivers": list(range(0, 9))},
    "fig4": {"assumed_ple": [2.5, 2.75, 3.0, 3.25, 3.5]},
}


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    cfg = ScenarioConfig(name=name, sams=["underlay", "overlay", "stov", "stppov"])
    if name == "base":
        return cfg
    if name in ("exp1", "exp2", "exp3", "exp4"):
        cfg.su.antenna = AntennaConfig(**SECTOR60)
        cfg.pu.antenna = AntennaConfig(**SECTOR60)
        cfg.pu.min_sinr_db = 10.0
        cfg.pu.power_dbm = 60.0
        if name != "exp1":
            cfg.sams = list(SAM_KINDS)
        if name in ("exp3", "exp4"):
            cfg.pu.placement = "at_distance"
            cfg.pu.placement_distance_m = 250.0
            cfg.pu.positions_known = True
        if name == "exp4":
            cfg.su.range_m = 40.0
        return cfg
    if name in ("exp5", "exp6"):
        cfg.pu.active = False
        cfg.su.range_m = 40.0
        cfg.su.min_sinr_db = 3.0
        cfg.su.antenna = AntennaConfig(**SECTOR60)
        cfg.sams = list(SAM_KINDS)
        return cfg
    cfg.su.count = 0
    cfg.sams = []
    if name == "fig2":
        cfg.pu.power_dbm = 30.0
        return cfg
    if name == "fig3":
        cfg.pu.power_dbm = 30.0
        cfg.pu.n_receivers = 1
        cfg.pu.placement = "at_distance"
        cfg.pu.placement_distance_m = 250.0
        cfg.pu.boundary_receivers = 0
        return cfg
    if name == "fig4":
        cfg.pu.power_dbm = 30.0
        cfg.assumed_ple = 3.5
        return cfg
    # illustration topologies: one network, transmitter at the region center
    cfg.pu.power_dbm = 15.0 if name == "illus_fig1c" else 21.0
    cfg.pu.min_sinr_db = 3.0
    cfg.pu.placement = "ring"
    cfg.pu.fan_deg = 140.0
    cfg.pu.range_m = 1000.0 if name == "illus_fig1b" else 500.0
    cfg.pu.placement_distance_m = cfg.pu.range_m
    cfg.pu.positions_known = True
    if name == "illus_fig1d":
        cfg.fixed_networks = [
            FixedNetworkConfig([600.0, 600.0], 21.0, [[850.0, 600.0], [600.0, 850.0], [350.0, 600.0], [600.0, 350.0]]),
            FixedNetworkConfig([3700.0, 600.0], 21.0, [[3950.0, 600.0], [3700.0, 850.0], [3450.0, 600.0], [3700.0, 350.0]]),
        ]
    return cfg


# --- sweeps ---------------------------------------------------------------------

_ALIASES = {"su.range": "su.range_m", "pu.range": "pu.range_m", "pu.power": "pu.power_dbm"}


def canonical_variable(variable: str) -> str:
    return _ALIASES.get(variable, variable)


def with_value(cfg: ScenarioConfig, variable: str, value) -> ScenarioConfig:
    """Copy of ``cfg`` with the dotted field ``variable`` set to ``value``."""
    variable = canonical_variable(variable)
    out = copy.deepcopy(cfg)
    parts = variable.split(".")
    obj = out
    for p in parts[:-1]:
        if not dataclasses.is_dataclass(obj) or not hasattr(obj, p):
            raise ConfigError(f"variable {variable!r} does not apply to preset {cfg.name!r}")
        obj = getattr(obj, p)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(obj) or leaf not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"variable {variable!r} does not apply to preset {cfg.name!r}")
    if parts[0] == "pu" and not out.pu.active:
        raise ConfigError(f"variable {variable!r} does not apply: the incumbent is inactive in {cfg.name!r}")
    current = getattr(obj, leaf)
    if isinstance(current, bool):
        value = bool(value)
    elif isinstance(current, int) and not isinstance(current, bool):
        if float(value) != int(float(value)):
            raise ConfigError(f"{variable} takes integers, got {value!r}")
        value = int(float(value))
    elif value is not None:
        value = float(value)
    setattr(obj, leaf, value)
    return out


def sweep(cfg: ScenarioConfig | str, variable: str, values: Sequence, seeds: Sequence[int]) -> list:
    """Scenarios for every (value, seed), values outermost; each with a label dict."""
    if isinstance(cfg, str):
        cfg = preset(cfg)
    out = []
    for v in values:
        point = with_value(cfg, variable, v)
        for s in seeds:
            c = copy.deepcopy(point)
            c.seed = int(s)
            out.append((generate(c), {"variable": canonical_variable(variable), "value": v, "seed": int(s)}))
    return out
