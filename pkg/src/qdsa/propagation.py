"""Distance-dependent path loss, sector antennas, received power and SINR.

Every scalar function here is a thin wrapper over the array kernels
(:func:`coupling`) so the per-link and the vectorized code paths produce
bit-identical floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import Point

# Distances below this are clamped; anything under 1 m lands in the min{1, .} cap anyway.
MIN_DISTANCE = 0.5
# Relative slack when comparing an SINR against its threshold.
SINR_RTOL = 1e-9

TWO_PI = 2 * math.pi


def _scalar_or_array(a):
    return float(a) if np.ndim(a) == 0 else a


def dbm_to_w(dbm):
    return _scalar_or_array(10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0))


def w_to_dbm(w):
    return _scalar_or_array(10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0)


def db_to_ratio(db):
    return _scalar_or_array(10.0 ** (np.asarray(db, dtype=float) / 10.0))


def ratio_to_db(r):
    return _scalar_or_array(10.0 * np.log10(np.asarray(r, dtype=float)))


@dataclass(frozen=True)
class PropagationEnv:
    ple: float  # path-loss exponent
    noise_floor: float  # W
    p_max: float  # W
    p_min: float  # W

    def __post_init__(self):
        if not self.ple > 2:
            raise ValueError(f"path-loss exponent must exceed 2, got {self.ple}")
        if not self.p_max > self.p_min > 0:
            raise ValueError("need p_max > p_min > 0")
        if not self.noise_floor > 0:
            raise ValueError("noise floor must be positive")

    @property
    def span(self) -> float:
        return self.p_max - self.p_min

    @classmethod
    def from_dbm(cls, ple: float = 3.5, noise_dbm: float = -106.0,
                 p_max_dbm: float = 30.0, p_min_dbm: float = -192.0) -> "PropagationEnv":
        return cls(ple, dbm_to_w(noise_dbm), dbm_to_w(p_max_dbm), dbm_to_w(p_min_dbm))


@dataclass(frozen=True)
class Antenna:
    pattern: str = "omni"
    boresight: float = 0.0
    beamwidth: float = TWO_PI
    sidelobe_gain: float = 1.0

    def __post_init__(self):
        if self.pattern not in ("omni", "sector"):
            raise ValueError(f"unknown antenna pattern {self.pattern!r}")
        if self.pattern == "sector":
            if not 0 < self.beamwidth < TWO_PI:
                raise ValueError("sector beamwidth must lie in (0, 2*pi)")
            if not 0 < self.sidelobe_gain <= 1:
                raise ValueError("sidelobe gain must lie in (0, 1]")

    @classmethod
    def sector(cls, boresight: float = 0.0, beamwidth_deg: float = 60.0,
               sidelobe_db: float = -20.0) -> "Antenna":
        return cls("sector", boresight % TWO_PI, math.radians(beamwidth_deg), db_to_ratio(sidelobe_db))

    def pointed(self, boresight: float) -> "Antenna":
        return self if self.pattern == "omni" else replace(self, boresight=boresight % TWO_PI)


OMNI = Antenna()


@dataclass(frozen=True)
class Transmitter:
    position: Point
    power: float  # W
    antenna: Antenna = OMNI

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("transmit power must be non-negative")

    def with_power(self, power: float) -> "Transmitter":
        return replace(self, power=power)


@dataclass(frozen=True)
class Receiver:
    position: Point
    beta: float  # minimum SINR, linear
    antenna: Antenna = OMNI
    owner: int = 0

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError(f"receiver threshold must exceed unity, got {self.beta}")


def path_gain(d, ple: float):
    """``min{1, d**-ple}``; scalar in, float out; array in, array out."""
    d = np.maximum(np.asarray(d, dtype=float), MIN_DISTANCE)
    g = np.minimum(1.0, np.power(d, -ple))
    return float(g) if g.ndim == 0 else g


def _gain_towards(antenna: Antenna, dx, dy, d):
    if antenna.pattern == "omni":
        return np.ones_like(d)
    ang = np.arctan2(dy, dx)
    off = np.abs(np.mod(ang - antenna.boresight + math.pi, TWO_PI) - math.pi)
    g = np.where(off <= antenna.beamwidth / 2 + 1e-12, 1.0, antenna.sidelobe_gain)
    # coincident points have no bearing; treat them as main lobe
    return np.where(d == 0, 1.0, g)


def antenna_gain(antenna: Antenna, target_bearing):
    b = np.asarray(target_bearing, dtype=float)
    g = _gain_towards(antenna, np.cos(b), np.sin(b), np.ones_like(b))
    return float(g) if g.ndim == 0 else g


def coupling(src: Point | np.ndarray, src_antenna: Antenna, dst, dst_antenna: Antenna | None,
             ple: float) -> np.ndarray:
    """Power ratio from ``src`` to each point of ``dst`` (shape (..., 2)).

    ``(tx gain * path gain) * rx gain``, the fixed association used everywhere.
    """
    dst = np.asarray(dst, dtype=float)
    dx = dst[..., 0] - src[0]
    dy = dst[..., 1] - src[1]
    d = np.hypot(dx, dy)
    g = _gain_towards(src_antenna, dx, dy, d) * path_gain(d, ple)
    if dst_antenna is not None and dst_antenna.pattern != "omni":
        g = g * _gain_towards(dst_antenna, -dx, -dy, d)
    return g


def received_power(tx: Transmitter, at: Point, rx_antenna: Antenna | None, env: PropagationEnv) -> float:
    return float(tx.power * coupling(tx.position, tx.antenna, np.asarray(at, float), rx_antenna, env.ple))


def received_power_field(tx: Transmitter, points: np.ndarray, env: PropagationEnv) -> np.ndarray:
    """Received power at many points with no receive-antenna gain."""
    return tx.power * coupling(tx.position, tx.antenna, points, None, env.ple)


def interference_at(rx: Receiver, interferers: Iterable[Transmitter], env: PropagationEnv) -> float:
    total = 0.0
    for t in interferers:
        total += received_power(t, rx.position, rx.antenna, env)
    return total


def link_sinr(rx: Receiver, own_tx: Transmitter, interferers: Sequence[Transmitter],
              env: PropagationEnv) -> float:
    s = received_power(own_tx, rx.position, rx.antenna, env)
    return s / (env.noise_floor + interference_at(rx, interferers, env))


def meets_threshold(sinr: float, beta: float) -> bool:
    return sinr >= beta * (1.0 - SINR_RTOL)
