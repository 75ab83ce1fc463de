"""Spectrum consumption over the space x band x time grid.

Quantities are in linear watts per unit-region; aggregates are sums over
unit-regions ("W.unit-region"). Sums run in ascending unit-region index order
(``np.cumsum``) so results do not depend on how the work is split up.

A receiver's interference budget is mapped out to a point by *dividing* by the
receiver-to-point coupling: the further a would-be interferer sits, the more
power it may radiate before eating the receiver's margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import HexGrid, Point, UnitRegion
from .propagation import (PropagationEnv, Receiver, Transmitter, coupling, interference_at,
                          received_power, received_power_field)


class InfeasibleLinkError(ValueError):
    """A receiver cannot reach its SINR threshold even without interference."""


@dataclass(frozen=True)
class SpectrumSpace:
    grid: HexGrid
    env: PropagationEnv
    bands: int = 1
    quanta: int = 1

    def __post_init__(self):
        if self.bands < 1 or self.quanta < 1:
            raise ValueError("bands and quanta must be >= 1")

    @property
    def cells(self) -> int:
        return self.grid.count

    @property
    def total(self) -> float:
        return self.env.span * self.grid.count * self.bands * self.quanta

    @property
    def points(self) -> np.ndarray:
        return self.grid.points


def ordered_sum(values: np.ndarray) -> float | np.ndarray:
    """Sequential ascending-index sum along the last axis."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] == 0:
        return 0.0 if values.ndim == 1 else np.zeros(values.shape[:-1])
    out = np.cumsum(values, axis=-1)[..., -1]
    return float(out) if np.ndim(out) == 0 else out


# --- per-point quantities -------------------------------------------------------

def transmitter_occupancy(tx: Transmitter, unit: UnitRegion | Point, env: PropagationEnv) -> float:
    at = unit.center if isinstance(unit, UnitRegion) else unit
    return received_power(tx, at, None, env)


def interference_margin(rx: Receiver, own_tx: Transmitter, env: PropagationEnv,
                        strict: bool = False) -> float:
    """Interference the receiver can still absorb, floored at zero.

    With ``strict`` a non-positive raw margin raises :class:`InfeasibleLinkError`.
    """
    raw = received_power(own_tx, rx.position, rx.antenna, env) / rx.beta - env.noise_floor
    if raw <= 0:
        if strict:
            raise InfeasibleLinkError(f"link to receiver at {tuple(rx.position)} cannot reach its threshold")
        return 0.0
    return raw


def _rx_coupling(rx: Receiver, points, env: PropagationEnv):
    # power ratio from an omni interferer at `points` into the receiver
    return coupling(rx.position, rx.antenna, points, None, env.ple)


def interference_bound_at(rx: Receiver, margin: float, at: Point, env: PropagationEnv) -> float:
    """Largest transmit power at ``at`` that keeps the receiver within ``margin``."""
    return float(min(env.p_max, margin / _rx_coupling(rx, np.asarray(at, float), env)))


def interference_opportunity(rx: Receiver, margin: float, at: Point, aggregate_interference: float,
                             env: PropagationEnv) -> float:
    remaining = margin - aggregate_interference
    if remaining <= 0:
        return 0.0
    return float(min(env.p_max, remaining / _rx_coupling(rx, np.asarray(at, float), env)))


def spectrum_occupancy(at: Point, all_tx: Iterable[Transmitter], env: PropagationEnv) -> float:
    total = 0.0
    for t in all_tx:
        total += received_power(t, at, None, env)
    return total + env.noise_floor


def receiver_liability_at(omega: float, opportunity: float, env: PropagationEnv, clamp: bool = True):
    phi = env.p_max - (omega + opportunity)
    if clamp:
        phi = np.clip(phi, 0.0, env.span)
    return float(phi) if np.ndim(phi) == 0 else phi


# --- fields over the grid -------------------------------------------------------

def occupancy_field(transmitters: Sequence[Transmitter], space: SpectrumSpace) -> np.ndarray:
    """Spectrum occupancy (omega) at every sample point."""
    total = np.zeros(space.cells)
    for t in transmitters:
        total = total + received_power_field(t, space.points, space.env)
    return total + space.env.noise_floor


def opportunity_values(rx: Receiver, margin: float, aggregate_interference: float,
                       space: SpectrumSpace) -> np.ndarray:
    """Interference opportunity imposed by one receiver at every sample point."""
    remaining = margin - aggregate_interference
    if remaining <= 0:
        return np.zeros(space.cells)
    return np.minimum(space.env.p_max, remaining / _rx_coupling(rx, space.points, space.env))


def _liability_field(omega: np.ndarray, opportunity: np.ndarray, env: PropagationEnv) -> np.ndarray:
    return np.clip(env.p_max - (omega + opportunity), 0.0, env.span)


def spectrum_utilized(tx: Transmitter, space: SpectrumSpace) -> float:
    return ordered_sum(received_power_field(tx, space.points, space.env)) * space.quanta


def spectrum_forbidden(rx: Receiver, own_tx: Transmitter, space: SpectrumSpace,
                       context: Sequence[Transmitter] = ()) -> float:
    """Summed liability of one receiver; ``context`` are the cochannel interferers."""
    env = space.env
    omega = occupancy_field([own_tx, *context], space)
    margin = interference_margin(rx, own_tx, env)
    opp = opportunity_values(rx, margin, interference_at(rx, context, env), space)
    return ordered_sum(_liability_field(omega, opp, env)) * space.quanta


@dataclass(frozen=True)
class NetworkConsumption:
    utilized: float
    forbidden: float  # joint receiver liability, overlaps counted once
    per_receiver: tuple[float, ...]
    feasible: bool

    @property
    def total(self) -> float:
        return self.utilized + self.forbidden


def network_consumption_detail(network, space: SpectrumSpace,
                               context: Sequence[Transmitter] = ()) -> NetworkConsumption:
    """Transmitter utilization plus the receivers' liability.

    Where several receivers of the same network forbid the same unit-region the
    liability is taken once (pointwise max over receivers); summing them would
    count one watt of spectrum several times and can exceed the total space.
    """
    env = space.env
    tx = network.transmitter
    if not network.receivers:
        raise ValueError("network has no receivers")
    omega = occupancy_field([tx, *context], space)
    joint = np.zeros(space.cells)
    per_rx = []
    feasible = True
    for rx in network.receivers:
        raw = received_power(tx, rx.position, rx.antenna, env) / rx.beta - env.noise_floor
        feasible &= raw > 0
        opp = opportunity_values(rx, max(raw, 0.0), interference_at(rx, context, env), space)
        phi = _liability_field(omega, opp, env)
        per_rx.append(ordered_sum(phi) * space.quanta)
        joint = np.maximum(joint, phi)
    return NetworkConsumption(spectrum_utilized(tx, space), ordered_sum(joint) * space.quanta,
                              tuple(per_rx), bool(feasible))


def network_spectrum_consumption(network, space: SpectrumSpace,
                                 context: Sequence[Transmitter] = ()) -> float:
    return network_consumption_detail(network, space, context).total


def minimal_nsc(network, space: SpectrumSpace) -> float:
    """Consumption of ``network`` alone in the band (no cochannel interference)."""
    detail = network_consumption_detail(network, space)
    if not detail.feasible:
        raise InfeasibleLinkError(f"network {getattr(network, 'id', '?')} cannot meet its thresholds")
    return detail.total


def minimal_nsc_curve(network, space: SpectrumSpace, powers: Sequence[float]) -> np.ndarray:
    """``minimal_nsc`` at each candidate transmit power; ``inf`` where infeasible."""
    env = space.env
    tx = network.transmitter
    p = np.asarray(powers, dtype=float)[:, None]
    unit = coupling(tx.position, tx.antenna, space.points, None, env.ple)
    occ = p * unit
    omega = (np.zeros_like(occ) + occ) + env.noise_floor
    joint = np.zeros_like(occ)
    feasible = np.ones(p.shape[0], dtype=bool)
    for rx in network.receivers:
        link = coupling(tx.position, tx.antenna, np.asarray(rx.position, float), rx.antenna, env.ple)
        raw = (p[:, 0] * link) / rx.beta - env.noise_floor
        feasible &= raw > 0
        opp = np.minimum(env.p_max, np.maximum(raw, 0.0)[:, None] / _rx_coupling(rx, space.points, env))
        joint = np.maximum(joint, _liability_field(omega, opp, env))
    total = ordered_sum(occ) * space.quanta + ordered_sum(joint) * space.quanta
    return np.where(feasible, total, np.inf)


# --- available spectrum ---------------------------------------------------------

@dataclass(frozen=True)
class OpportunityField:
    values: np.ndarray = field(repr=False)  # (bands, cells), W
    available: float

    @property
    def cell_values(self) -> np.ndarray:
        return self.values[0]


def _band_opportunity(space: SpectrumSpace, transmitters: Sequence[Transmitter],
                      links: Sequence[tuple[Receiver, Transmitter]]) -> np.ndarray:
    env = space.env
    omega = occupancy_field(transmitters, space)
    gamma = np.full(space.cells, np.inf)
    for rx, own in links:
        others = [t for t in transmitters if t is not own]
        margin = interference_margin(rx, own, env)
        gamma = np.minimum(gamma, opportunity_values(rx, margin, interference_at(rx, others, env), space))
    gamma = np.minimum(gamma, env.p_max - omega)
    return np.clip(gamma, 0.0, env.span)


def opportunity_field(space: SpectrumSpace, networks: Sequence = (),
                      extra_transmitters: Sequence[tuple[Transmitter, int]] = ()) -> OpportunityField:
    """Spectrum opportunity per unit-region and the summed available spectrum.

    ``networks`` are the active networks (transmitter plus protected receivers,
    band taken from ``network.channel``); ``extra_transmitters`` are
    ``(transmitter, band)`` pairs with no receivers to protect.
    """
    values = np.empty((space.bands, space.cells))
    for band in range(space.bands):
        in_band = [n for n in networks if getattr(n, "channel", 0) == band]
        txs = [n.transmitter for n in in_band] + [t for t, b in extra_transmitters if b == band]
        links = [(rx, n.transmitter) for n in in_band for rx in n.receivers]
        values[band] = _band_opportunity(space, txs, links)
    available = float(sum(ordered_sum(values[b]) for b in range(space.bands))) * space.quanta
    return OpportunityField(values, available)


@dataclass
class ConsumptionReport:
    total: float
    available: float
    utilized: dict
    forbidden: dict
    nsc: dict
    grid_cells: int
    units: str = "W_unitregion"

    def pct(self, value: float) -> float:
        return 100.0 * value / self.total

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "grid_cells": self.grid_cells,
            "total_space": self.total,
            "available": self.available,
            "available_pct": self.pct(self.available),
            "utilized": {str(k): v for k, v in self.utilized.items()},
            "utilized_pct": {str(k): self.pct(v) for k, v in self.utilized.items()},
            "forbidden": {str(k): list(v) for k, v in self.forbidden.items()},
            "forbidden_pct": {str(k): [self.pct(x) for x in v] for k, v in self.forbidden.items()},
            "nsc": {str(k): v for k, v in self.nsc.items()},
            "nsc_pct": {str(k): self.pct(v) for k, v in self.nsc.items()},
        }


def consumption_report(space: SpectrumSpace, networks: Sequence) -> ConsumptionReport:
    """Quantify every network against the others sharing its band."""
    utilized, forbidden, nsc = {}, {}, {}
    for n in networks:
        band = getattr(n, "channel", 0)
        context = [m.transmitter for m in networks if m is not n and getattr(m, "channel", 0) == band]
        detail = network_consumption_detail(n, space, context)
        utilized[n.id] = detail.utilized
        forbidden[n.id] = detail.per_receiver
        nsc[n.id] = detail.total
    avail = opportunity_field(space, networks).available
    return ConsumptionReport(space.total, avail, utilized, forbidden, nsc, space.cells)
