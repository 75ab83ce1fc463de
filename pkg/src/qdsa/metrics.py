"""Comparison metrics for a schedule, and availability / lost-availability."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

from .consumption import SpectrumSpace, opportunity_field
from .sam import ScheduleDecision, _Book


@dataclass(frozen=True)
class MetricsReport:
    sam: str
    seed: int
    scheduled_count: int
    unscheduled_count: int
    harmful_rx_count: int
    available_pct: float
    exploited_pct: float
    available_before: float  # W.unit-region, incumbent (and fixed networks) only
    available_after: float
    total: float


def _background(scenario) -> list:
    """Networks on air regardless of the schedule, one copy per band for the incumbent."""
    nets = list(scenario.fixed_networks)
    if scenario.pu_network is not None:
        nets += [scenario.pu_network.on_channel(b) for b in range(scenario.space.bands)]
    return nets


def available_space(scenario, space: SpectrumSpace | None = None, networks: Sequence | None = None) -> float:
    space = space or scenario.space
    return opportunity_field(space, _background(scenario) if networks is None else networks).available


def availability_only(scenario) -> float:
    """Available spectrum (% of total) with only the incumbent and fixed networks on air."""
    return 100.0 * available_space(scenario) / scenario.space.total


def assumed_view(scenario):
    """The scenario as a mechanism without ground truth sees it: incumbent
    receivers at their assumed positions, propagation with the assumed exponent."""
    env = scenario.assumed_env or scenario.space.env
    space = dataclasses.replace(scenario.space, env=env)
    pu = scenario.pu_protected if scenario.pu_network is not None else None
    return dataclasses.replace(scenario, space=space, pu_network=pu, pu_protected=pu)


def lost_available(truth, assumed) -> float:
    """Available spectrum lost by planning against ``assumed`` instead of ``truth``."""
    if (truth.space.grid.count != assumed.space.grid.count
            or truth.space.grid.mode != assumed.space.grid.mode
            or truth.space.bands != assumed.space.bands):
        raise ValueError("scenarios are quantified over different grids")
    return available_space(truth) - available_space(assumed)


def harmed_receivers(decisions: Sequence[ScheduleDecision], scenario) -> int:
    """Receivers (actual incumbent + scheduled secondaries) below threshold
    under the final aggregate interference, counted once each."""
    book = _Book(scenario)
    harmed = set()
    for band in range(scenario.space.bands):
        active = [(d.request_id, d.assigned_power)
                  for d in sorted(decisions, key=lambda d: d.order) if d.scheduled and d.channel == band]
        rx_idx = list(book.pu_rx_actual) + [i for rid, _ in active for i in book.rx_of[rid]]
        if not rx_idx:
            continue
        flags = book.harmed(active, rx_idx)
        harmed.update(i for i, f in zip(rx_idx, flags) if f)
    return len(harmed)


def evaluate(decisions: Sequence[ScheduleDecision], scenario, sam: str = "") -> MetricsReport:
    ids = sorted(r.id for r in scenario.su_requests)
    if sorted(d.request_id for d in decisions) != ids:
        raise ValueError("decisions do not match the scenario's requests")
    by_id = {r.id: r for r in scenario.su_requests}
    scheduled = [d for d in decisions if d.scheduled]
    background = _background(scenario)
    after_nets = background + [by_id[d.request_id].network.with_power(d.assigned_power).on_channel(d.channel)
                               for d in sorted(scheduled, key=lambda d: d.order)]
    before = opportunity_field(scenario.space, background).available
    after = opportunity_field(scenario.space, after_nets).available
    total = scenario.space.total
    exploited = 0.0 if before <= 0 else min(100.0, max(0.0, 100.0 * (before - after) / before))
    return MetricsReport(
        sam=sam,
        seed=scenario.seed,
        scheduled_count=len(scheduled),
        unscheduled_count=len(decisions) - len(scheduled),
        harmful_rx_count=harmed_receivers(decisions, scenario),
        available_pct=100.0 * after / total,
        exploited_pct=exploited,
        available_before=before,
        available_after=after,
        total=total,
    )
