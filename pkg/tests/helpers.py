"""Hand-built scenarios for scheduler tests."""

import math

from qdsa.consumption import SpectrumSpace
from qdsa.geometry import Point, paper26_grid
from qdsa.propagation import PropagationEnv, Receiver, Transmitter, dbm_to_w
from qdsa.sam import Network, SpectrumAccessRequest
from qdsa.scenario import Scenario, ScenarioConfig

ENV = PropagationEnv.from_dbm()
SPACE = SpectrumSpace(paper26_grid(), ENV)


def link(net_id, tx, rx_offsets, power_dbm=0.0, beta_db=3.0, max_dbm=30.0, min_dbm=-80.0):
    tx = Point(*tx)
    rxs = tuple(Receiver(Point(tx.x + dx, tx.y + dy), 10 ** (beta_db / 10), owner=net_id) for dx, dy in rx_offsets)
    rng = max(math.hypot(dx, dy) for dx, dy in rx_offsets)
    net = Network(net_id, Transmitter(tx, dbm_to_w(power_dbm)), rxs, max(rng, 1.0))
    return SpectrumAccessRequest(net, dbm_to_w(max_dbm), dbm_to_w(min_dbm))


def pu(tx=(2150.0, 1850.0), power_dbm=30.0, radius=500.0, n=8, beta_db=20.0):
    c = Point(*tx)
    rxs = tuple(Receiver(Point(c.x + radius * math.cos(2 * math.pi * k / n),
                               c.y + radius * math.sin(2 * math.pi * k / n)), 10 ** (beta_db / 10), owner=-1)
                for k in range(n))
    return Network(-1, Transmitter(c, dbm_to_w(power_dbm)), rxs, radius, role="primary")


def scenario(requests, pu_net=None, protected=None, space=SPACE):
    return Scenario(ScenarioConfig(), space, pu_net, protected or pu_net, tuple(requests))
