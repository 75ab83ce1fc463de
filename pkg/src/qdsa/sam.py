"""Spectrum access mechanisms: who transmits, and at what power.

Five mechanisms are provided: ``underlay``, ``overlay``, ``stov`` (throughput
oriented overlay), ``stppov`` (throughput and primary-protection oriented
overlay, with a guard margin) and ``nsc_cx``, the greedy scheduler that admits
requests in ascending order of their stand-alone network spectrum consumption
and vetoes any request that would push some receiver below its threshold.

Schedulers take a scenario object exposing ``space``, ``pu_network`` (the
active incumbent with its actual receivers, or ``None``), ``pu_protected``
(the incumbent as the knowledge-based mechanisms see it), ``su_requests`` and
``channels``. See :mod:`qdsa.scenario`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .consumption import SpectrumSpace, minimal_nsc_curve
from .geometry import distance
from .propagation import (SINR_RTOL, PropagationEnv, Receiver, Transmitter, _gain_towards, coupling,
                          db_to_ratio, path_gain, received_power)

SAM_KINDS = ("underlay", "overlay", "stov", "stppov", "nsc_cx")

SCHEDULED = "scheduled"
DENIED_SENSING = "denied_sensing"
DENIED_HARMFUL = "denied_harmful"
DENIED_INFEASIBLE = "denied_infeasible"


@dataclass(frozen=True)
class Network:
    id: int
    transmitter: Transmitter
    receivers: tuple[Receiver, ...]
    range: float
    role: str = "secondary"
    channel: int = 0

    def __post_init__(self):
        if not self.receivers:
            raise ValueError(f"network {self.id} has no receivers")
        if self.range <= 0:
            raise ValueError("network range must be positive")
        for rx in self.receivers:
            if distance(rx.position, self.transmitter.position) > 1.05 * self.range:
                raise ValueError(f"receiver of network {self.id} lies beyond 1.05 x range")

    def with_power(self, power: float) -> "Network":
        return replace(self, transmitter=self.transmitter.with_power(power))

    def on_channel(self, channel: int) -> "Network":
        return self if channel == self.channel else replace(self, channel=channel)


@dataclass(frozen=True)
class SpectrumAccessRequest:
    network: Network
    max_power: float
    min_power: float

    def __post_init__(self):
        if not 0 < self.min_power <= self.max_power:
            raise ValueError("need 0 < min_power <= max_power")

    @property
    def id(self) -> int:
        return self.network.id


@dataclass(frozen=True)
class ScheduleDecision:
    request_id: int
    status: str
    assigned_power: float = 0.0
    order: int = -1
    channel: int = 0

    @property
    def scheduled(self) -> bool:
        return self.status == SCHEDULED


@dataclass(frozen=True)
class SamConfig:
    kind: str = "nsc_cx"
    underlay_margin_db: float = 30.0
    sensing_threshold_dbm: float = -80.0
    guard_margin_db: float = 10.0
    fixed_high_power_dbm: float = 21.0
    power_step_db: float = 1.0
    target_sinr_margin_db: float = 10.0
    fairness_max_steps: int = 60

    def __post_init__(self):
        if self.kind not in SAM_KINDS:
            raise ValueError(f"unknown SAM {self.kind!r}; expected one of {SAM_KINDS}")
        if self.power_step_db <= 0:
            raise ValueError("power step must be positive")

    @property
    def sensing_threshold(self) -> float:
        return db_to_ratio(self.sensing_threshold_dbm - 30.0)

    @property
    def fixed_high_power(self) -> float:
        return db_to_ratio(self.fixed_high_power_dbm - 30.0)


# --- link bookkeeping -----------------------------------------------------------

class LinkTable:
    """Coupling between a fixed set of transmitters and receivers.

    ``gains[i, j]`` is the power ratio from transmitter ``i`` into receiver
    ``j`` with both antenna patterns applied, computed with the same float
    operations as :func:`qdsa.propagation.received_power`.
    """

    def __init__(self, transmitters: Sequence[Transmitter], receivers: Sequence[Receiver],
                 env: PropagationEnv):
        self.env = env
        self.receivers = list(receivers)
        self.betas = np.array([r.beta for r in receivers], dtype=float)
        tpos = np.array([t.position for t in transmitters], dtype=float).reshape(-1, 2)
        rpos = np.array([r.position for r in receivers], dtype=float).reshape(-1, 2)
        dx = rpos[None, :, 0] - tpos[:, None, 0]
        dy = rpos[None, :, 1] - tpos[:, None, 1]
        d = np.hypot(dx, dy)
        g = np.empty_like(d)
        for i, t in enumerate(transmitters):
            g[i] = _gain_towards(t.antenna, dx[i], dy[i], d[i])
        g = g * path_gain(d, env.ple)
        for j, r in enumerate(receivers):
            if r.antenna.pattern != "omni":
                g[:, j] = g[:, j] * _gain_towards(r.antenna, -dx[:, j], -dy[:, j], d[:, j])
        self.gains = g

    def sinr(self, tx_order: Sequence[int], powers: Sequence[float], rx_idx: Sequence[int],
             own: Sequence[int]) -> np.ndarray:
        """SINR of receivers ``rx_idx`` (own transmitter ``own[k]``) with the
        transmitters ``tx_order`` active at ``powers``; interference is summed in
        ``tx_order`` order."""
        tx_order = np.asarray(tx_order, dtype=int)
        rx_idx = np.asarray(rx_idx, dtype=int)
        if rx_idx.size == 0:
            return np.empty(0)
        p = np.asarray(powers, dtype=float)
        rx_power = p[:, None] * self.gains[np.ix_(tx_order, rx_idx)]
        own = np.asarray(own, dtype=int)
        is_own = tx_order[:, None] == own[None, :]
        signal = np.where(is_own, rx_power, 0.0).sum(axis=0)
        interference = np.cumsum(np.where(is_own, 0.0, rx_power), axis=0)[-1]
        return signal / (self.env.noise_floor + interference)

    def harmed(self, tx_order, powers, rx_idx, own) -> np.ndarray:
        s = self.sinr(tx_order, powers, rx_idx, own)
        return s < self.betas[np.asarray(rx_idx, dtype=int)] * (1.0 - SINR_RTOL)


@dataclass(frozen=True)
class AdmissionResult:
    ok: bool
    violated: Receiver | None = None


def admission_check(candidate: tuple[Network, float], committed: Sequence[tuple[Network, float]],
                    protected: Sequence[Network], env: PropagationEnv) -> AdmissionResult:
    """Would every receiver still meet its threshold with ``candidate`` on air?

    Checks the candidate's own receivers, every committed network's receivers
    and the receivers of each ``protected`` network under the aggregate
    interference of all of them. Protected networks transmit at the power held
    by their transmitter. The first violated receiver is reported in the order
    candidate, committed, protected.
    """
    ordered = ([(n, n.transmitter.power) for n in protected] + list(committed) + [candidate])
    txs = [n.transmitter for n, _ in ordered]
    check = [candidate] + list(committed) + [(n, n.transmitter.power) for n in protected]
    tx_index = {id(n): k for k, (n, _) in enumerate(ordered)}
    rxs, own = [], []
    for n, _ in check:
        for rx in n.receivers:
            rxs.append(rx)
            own.append(tx_index[id(n)])
    table = LinkTable(txs, rxs, env)
    harmed = table.harmed(range(len(ordered)), [p for _, p in ordered], range(len(rxs)), own)
    if harmed.any():
        return AdmissionResult(False, rxs[int(np.argmax(harmed))])
    return AdmissionResult(True)


class _Book:
    """Scenario-wide link table plus the running set of committed networks."""

    def __init__(self, scenario, protected_kind: str = "protected"):
        self.scenario = scenario
        self.env = scenario.space.env
        pu = scenario.pu_network
        prot = scenario.pu_protected if protected_kind == "protected" else pu
        self.requests = list(scenario.su_requests)
        txs = ([pu.transmitter] if pu is not None else []) + [r.network.transmitter for r in self.requests]
        self.pu_tx = 0 if pu is not None else None
        offset = 1 if pu is not None else 0
        self.tx_of = {r.id: k + offset for k, r in enumerate(self.requests)}
        rxs, own = [], []
        self.pu_rx = []
        self.pu_rx_actual = []
        if pu is not None:
            for rx in prot.receivers:
                self.pu_rx.append(len(rxs)); rxs.append(rx); own.append(0)
            for rx in pu.receivers:
                self.pu_rx_actual.append(len(rxs)); rxs.append(rx); own.append(0)
        self.rx_of = {}
        for r in self.requests:
            idx = []
            for rx in r.network.receivers:
                idx.append(len(rxs)); rxs.append(rx); own.append(self.tx_of[r.id])
            self.rx_of[r.id] = idx
        self.own = np.array(own, dtype=int)
        self.table = LinkTable(txs, rxs, self.env)
        self.pu_power = pu.transmitter.power if pu is not None else 0.0

    def received_from_pu(self, req: SpectrumAccessRequest) -> float:
        """PU power sensed (omni) at the request's transmitter."""
        pu = self.scenario.pu_network
        if pu is None:
            return 0.0
        return received_power(pu.transmitter, req.network.transmitter.position, None, self.env)

    def sinr(self, active: Sequence[tuple[int, float]], rx_idx: Sequence[int],
             with_pu: bool = True) -> np.ndarray:
        order = ([self.pu_tx] if with_pu and self.pu_tx is not None else []) + [self.tx_of[i] for i, _ in active]
        powers = ([self.pu_power] if with_pu and self.pu_tx is not None else []) + [p for _, p in active]
        return self.table.sinr(order, powers, rx_idx, self.own[np.asarray(rx_idx, dtype=int)])

    def harmed(self, active, rx_idx, with_pu: bool = True) -> np.ndarray:
        rx_idx = np.asarray(rx_idx, dtype=int)
        s = self.sinr(active, rx_idx, with_pu)
        return s < self.table.betas[rx_idx] * (1.0 - SINR_RTOL)

    def link_gain(self, req_id: int, rx: int) -> float:
        return float(self.table.gains[self.tx_of[req_id], rx])

    def interference_at(self, active, rx: int, with_pu: bool = True) -> float:
        """Aggregate interference at receiver ``rx`` from ``active`` (+ PU)."""
        order = ([self.pu_tx] if with_pu and self.pu_tx is not None else []) + [self.tx_of[i] for i, _ in active]
        powers = ([self.pu_power] if with_pu and self.pu_tx is not None else []) + [p for _, p in active]
        contrib = [p * self.table.gains[t, rx] for t, p in zip(order, powers) if t != self.own[rx]]
        total = 0.0
        for c in contrib:
            total += c
        return total

    def margin(self, rx: int, own_power: float) -> float:
        """Interference margin of receiver ``rx`` with its transmitter at ``own_power``."""
        g = self.table.gains[self.own[rx], rx]
        return own_power * g / self.table.betas[rx] - self.env.noise_floor


def _clip_power(req: SpectrumAccessRequest, p: float) -> float:
    return min(max(p, req.min_power), req.max_power)


# --- the mechanisms -------------------------------------------------------------

def schedule_underlay(requests: Sequence[SpectrumAccessRequest], scenario,
                      config: SamConfig | None = None) -> list[ScheduleDecision]:
    """Every request goes on air at a fixed power just above the noise floor."""
    config = config or SamConfig("underlay")
    p = scenario.space.env.noise_floor * db_to_ratio(config.underlay_margin_db)
    return [ScheduleDecision(r.id, SCHEDULED, _clip_power(r, p), k)
            for k, r in enumerate(sorted(requests, key=lambda r: r.id))]


def _sensing_blocked(book: _Book, req: SpectrumAccessRequest, config: SamConfig) -> bool:
    return book.scenario.pu_network is not None and book.received_from_pu(req) >= config.sensing_threshold


def schedule_overlay(requests: Sequence[SpectrumAccessRequest], scenario,
                     config: SamConfig | None = None) -> list[ScheduleDecision]:
    """Transmit at a fixed high power unless the incumbent is sensed."""
    config = config or SamConfig("overlay")
    book = _Book(scenario)
    out, order = [], 0
    for r in sorted(requests, key=lambda r: r.id):
        if _sensing_blocked(book, r, config):
            out.append(ScheduleDecision(r.id, DENIED_SENSING))
            continue
        out.append(ScheduleDecision(r.id, SCHEDULED, _clip_power(r, config.fixed_high_power), order))
        order += 1
    return out


def _target_power(book: _Book, req: SpectrumAccessRequest, active, target: float) -> float:
    """Smallest power giving every own receiver ``target`` SINR against ``active`` (+ PU)."""
    need = 0.0
    for rx in book.rx_of[req.id]:
        i = book.interference_at(active, rx)
        need = max(need, target * (book.env.noise_floor + i) / book.link_gain(req.id, rx))
    return need


def _own_ok(book: _Book, req: SpectrumAccessRequest, power: float, active) -> bool:
    return not book.harmed(list(active) + [(req.id, power)], book.rx_of[req.id]).any()


def fairness_power_scaling(decisions: Sequence[ScheduleDecision], scenario, config: SamConfig | None = None,
                           caps: dict | None = None,
                           constraint: Callable[[dict], bool] | None = None) -> list[ScheduleDecision]:
    """Raise every scheduled power by the same factor, one step at a time.

    Stops as soon as some network sits at its cap or the next step would break
    ``constraint`` (a predicate over ``{request_id: power}``), and after at most
    ``config.fairness_max_steps`` steps.
    """
    config = config or SamConfig()
    by_id = {r.id: r for r in scenario.su_requests}
    caps = dict(caps or {})
    powers = {d.request_id: d.assigned_power for d in decisions if d.scheduled}
    if not powers:
        return list(decisions)
    for rid in powers:
        caps[rid] = min(caps.get(rid, by_id[rid].max_power), by_id[rid].max_power)
    step = db_to_ratio(config.power_step_db)
    for _ in range(config.fairness_max_steps):
        headroom = min(caps[rid] / p for rid, p in powers.items())
        factor = min(step, headroom)
        if factor <= 1.0:
            break
        trial = {rid: min(p * factor, caps[rid]) for rid, p in powers.items()}
        if constraint is not None and not constraint(trial):
            break
        powers = trial
    return [replace(d, assigned_power=powers[d.request_id]) if d.scheduled else d for d in decisions]


def schedule_stov(requests: Sequence[SpectrumAccessRequest], scenario,
                  config: SamConfig | None = None) -> list[ScheduleDecision]:
    """Overlay sensing gate, then a dynamic power aimed at ``beta`` plus a margin."""
    config = config or SamConfig("stov")
    book = _Book(scenario)
    out, active = [], []
    for r in sorted(requests, key=lambda r: r.id):
        if _sensing_blocked(book, r, config):
            out.append(ScheduleDecision(r.id, DENIED_SENSING))
            continue
        target = max(book.table.betas[i] for i in book.rx_of[r.id]) * db_to_ratio(config.target_sinr_margin_db)
        p = _clip_power(r, _target_power(book, r, active, target))
        if not _own_ok(book, r, p, active):
            out.append(ScheduleDecision(r.id, DENIED_INFEASIBLE))
            continue
        out.append(ScheduleDecision(r.id, SCHEDULED, p, len(active)))
        active.append((r.id, p))
    return fairness_power_scaling(out, scenario, config)


def _guard_cap(book: _Book, req: SpectrumAccessRequest, protected: Sequence[tuple[int, float]],
               guard: float) -> float:
    """Largest power keeping each protected receiver's pairwise intake within
    its margin reduced by the guard factor. ``protected`` is ``(rx, own power)``."""
    cap = req.max_power
    t = book.tx_of[req.id]
    for rx, own_power in protected:
        margin = book.margin(rx, own_power)
        if margin <= 0:
            return 0.0
        cap = min(cap, margin / guard / book.table.gains[t, rx])
    return cap


WORST_CASE_RING = 8


class _BoundaryRings:
    """Worst-case receivers of each request: ``WORST_CASE_RING`` omni points on
    its range circle, served on the main lobe of its transmitter."""

    def __init__(self, book: _Book):
        env = book.env
        reqs = book.requests
        ang = 2 * np.pi * np.arange(WORST_CASE_RING) / WORST_CASE_RING
        self.index = {r.id: k for k, r in enumerate(reqs)}
        centers = np.array([r.network.transmitter.position for r in reqs], dtype=float).reshape(-1, 2)
        ranges = np.array([r.network.range for r in reqs], dtype=float)
        pts = centers[:, None, :] + ranges[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], -1)[None]
        # coupling[i, j]: strongest path from request i's transmitter into request j's ring
        self.coupling = np.array([
            coupling(r.network.transmitter.position, r.network.transmitter.antenna, pts, None,
                     env.ple).max(axis=1) for r in reqs]).reshape(len(reqs), len(reqs))
        self.own_gain = path_gain(ranges, env.ple)
        self.beta = np.array([min(rx.beta for rx in r.network.receivers) for r in reqs])
        self.noise = env.noise_floor

    def cap(self, req: SpectrumAccessRequest, prior: Sequence[tuple[int, float]], guard: float) -> float:
        cap = req.max_power
        i = self.index[req.id]
        for rid, p in prior:
            j = self.index[rid]
            margin = p * self.own_gain[j] / self.beta[j] - self.noise
            if margin <= 0:
                return 0.0
            cap = min(cap, margin / guard / self.coupling[i, j])
        return cap


def schedule_stppov(requests: Sequence[SpectrumAccessRequest], scenario,
                    config: SamConfig | None = None) -> list[ScheduleDecision]:
    """Like STOV, but each power is capped a guard margin below what the
    protected receivers could absorb from it alone, and no sensing gate.

    With the incumbent active the protected receivers are its receivers at the
    positions the mechanism knows. With the incumbent absent every network has
    equal rights: already scheduled networks are protected at their worst-case
    (range boundary) receiver positions.
    """
    config = config or SamConfig("stppov")
    book = _Book(scenario)
    guard = db_to_ratio(config.guard_margin_db)
    by_id = {r.id: r for r in requests}
    rings = None if scenario.pu_network is not None else _BoundaryRings(book)

    def cap_for(req, prior):
        if rings is None:
            return _guard_cap(book, req, [(rx, book.pu_power) for rx in book.pu_rx], guard)
        return rings.cap(req, prior, guard)

    out, active, caps = [], [], {}
    for r in sorted(requests, key=lambda r: r.id):
        cap = cap_for(r, active)
        target = max(book.table.betas[i] for i in book.rx_of[r.id]) * db_to_ratio(config.target_sinr_margin_db)
        p = min(_clip_power(r, _target_power(book, r, active, target)), cap)
        if p < r.min_power or not _own_ok(book, r, p, active):
            guarded = cap < r.max_power and _own_ok(book, r, r.max_power, active)
            out.append(ScheduleDecision(r.id, DENIED_HARMFUL if guarded else DENIED_INFEASIBLE))
            continue
        out.append(ScheduleDecision(r.id, SCHEDULED, p, len(active)))
        active.append((r.id, p))
        caps[r.id] = cap

    if rings is None:
        return fairness_power_scaling(out, scenario, config, caps)

    order = [rid for rid, _ in active]

    def constraint(powers: dict) -> bool:
        for k, rid in enumerate(order):
            prior = [(q, powers[q]) for q in order[:k]]
            if powers[rid] > cap_for(by_id[rid], prior) * (1 + 1e-12):
                return False
        return True

    return fairness_power_scaling(out, scenario, config, constraint=constraint)


def power_candidates(req: SpectrumAccessRequest, step_db: float) -> np.ndarray:
    """Powers from ``min_power`` up in ``step_db`` steps, always ending at ``max_power``."""
    n = int(math.floor(10.0 * math.log10(req.max_power / req.min_power) / step_db + 1e-9))
    p = req.min_power * db_to_ratio(np.arange(n + 1) * step_db)
    p = np.minimum(np.atleast_1d(p), req.max_power)
    if p[-1] >= req.max_power * (1 - 1e-9):
        p[-1] = req.max_power
    else:
        p = np.append(p, req.max_power)
    return p


def nominate_power_nsc(request: SpectrumAccessRequest, space: SpectrumSpace,
                       step_db: float = 1.0) -> tuple[float, float]:
    """Power minimizing the request's stand-alone consumption, and that cost.

    Ties go to the lower power. Raises ``InfeasibleLinkError`` if no candidate
    power lets every receiver reach its threshold.
    """
    from .consumption import InfeasibleLinkError

    powers = power_candidates(request, step_db)
    costs = minimal_nsc_curve(request.network, space, powers)
    if not np.isfinite(costs).any():
        raise InfeasibleLinkError(f"request {request.id} is infeasible at every power")
    k = int(np.argmin(costs))
    return float(powers[k]), float(costs[k])


@dataclass
class NscCxTrace:
    """Costs and powers the scheduler worked with, for inspection and tests."""
    nominated: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    order: list = field(default_factory=list)


def schedule_nsc_cx(requests: Sequence[SpectrumAccessRequest], scenario, config: SamConfig | None = None,
                    trace: NscCxTrace | None = None) -> list[ScheduleDecision]:
    """Greedy admission in ascending order of minimal network spectrum consumption."""
    from .consumption import InfeasibleLinkError

    config = config or SamConfig("nsc_cx")
    trace = trace if trace is not None else NscCxTrace()
    book = _Book(scenario)
    status = {}
    for r in requests:
        try:
            p, c = nominate_power_nsc(r, scenario.space, config.power_step_db)
        except InfeasibleLinkError:
            status[r.id] = ScheduleDecision(r.id, DENIED_INFEASIBLE)
            continue
        trace.nominated[r.id] = p
        trace.cost[r.id] = c
    queue = sorted(trace.cost, key=lambda rid: (trace.cost[rid], rid))
    trace.order = list(queue)
    seq = 0
    for channel in range(max(1, getattr(scenario, "channels", 1))):
        active: list[tuple[int, float]] = []
        residual = []
        for rid in queue:
            cand = active + [(rid, trace.nominated[rid])]
            rx_idx = [i for q, _ in cand for i in book.rx_of[q]] + book.pu_rx
            if book.harmed(cand, rx_idx).any():
                residual.append(rid)
                continue
            active.append((rid, trace.nominated[rid]))
            status[rid] = ScheduleDecision(rid, SCHEDULED, trace.nominated[rid], seq, channel)
            seq += 1
        queue = residual
        if not queue:
            break
    for rid in queue:
        status[rid] = ScheduleDecision(rid, DENIED_HARMFUL)
    return [status[r.id] for r in sorted(requests, key=lambda r: r.id)]


SCHEDULERS = {
    "underlay": schedule_underlay,
    "overlay": schedule_overlay,
    "stov": schedule_stov,
    "stppov": schedule_stppov,
    "nsc_cx": schedule_nsc_cx,
}


def run_sam(kind: str | SamConfig, scenario) -> list[ScheduleDecision]:
    config = kind if isinstance(kind, SamConfig) else SamConfig(kind)
    return SCHEDULERS[config.kind](scenario.su_requests, scenario, config)


def exhaustive_max_admissible(requests: Sequence[SpectrumAccessRequest], powers: dict, scenario) -> int:
    """Largest subset of ``requests`` (at ``powers``) with no harmed receiver.

    Brute force over all subsets, single channel; only meant for tiny instances.
    """
    book = _Book(scenario)
    ids = [r.id for r in requests if r.id in powers]
    for k in range(len(ids), 0, -1):
        for subset in combinations(ids, k):
            active = [(i, powers[i]) for i in subset]
            rx_idx = [j for i in subset for j in book.rx_of[i]] + book.pu_rx
            if not book.harmed(active, rx_idx).any():
                return k
    return 0
