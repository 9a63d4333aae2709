"""Market-square ad hoc network: seller grid plus injected pedestrians.

A 10x10 grid of fixed seller nodes spaced so only lateral neighbors are
in radio range. Pedestrians enter on the square's boundary, flood a
route request to find their target seller, receive the seller's
position over the discovered route, then walk straight to it. Routing
is on-demand: a request floods hop by hop with duplicate suppression;
the reply unicasts back along the reverse path, installing next-hop
entries. Store-and-forward timing: each routed hop consumes one fine
step, so a reply over an h-hop route lands 2h fine steps after the
query left. Positions here are planar (no torus inside the market).

Pedestrian randomness (entry point, target seller) comes from the
entity streams carried in from the coarse level: two draws per injected
pedestrian, nothing else in the scene is random.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

QUERYING = "QUERYING"
WALKING = "WALKING"
ARRIVED = "ARRIVED"

_RETRY_CAP_FINE_STEPS = 16


@dataclass(frozen=True)
class MarketParams:
    grid_side: int = 10
    spacing: float = 25.0
    radio_range: float = 30.0
    walking_speed: float = 1.4  # distance units per fine step
    hop_limit: int = 32

    def __post_init__(self):
        if self.grid_side < 1:
            raise ValueError("grid_side must be >= 1")
        if self.spacing <= 0 or self.radio_range <= 0:
            raise ValueError("spacing and radio_range must be positive")
        if self.walking_speed <= 0:
            raise ValueError("walking_speed must be positive")
        if self.hop_limit < 1:
            raise ValueError("hop_limit must be >= 1")


class RouteEntry(NamedTuple):
    next_hop: int
    hops: int
    seq: int


class RouteOutcome(NamedTuple):
    hops: Optional[int]  # None when unreachable
    path: tuple  # node ids src..dst, empty when unreachable
    request_transmissions: int


class MarketScene:
    """Seller grid, live pedestrian nodes, and per-node route tables."""

    def __init__(self, params: MarketParams = MarketParams()):
        self.params = params
        g = params.grid_side
        self.num_sellers = g * g
        # seller s sits at (col * spacing, row * spacing)
        self.node_pos = {s: (float(s % g) * params.spacing,
                             float(s // g) * params.spacing)
                         for s in range(self.num_sellers)}
        self.route_tables = {}  # node id -> {dst: RouteEntry}
        self.seq_counter = 0

    @property
    def extent(self) -> float:
        return (self.params.grid_side - 1) * self.params.spacing

    def seller_position(self, seller: int):
        if not 0 <= seller < self.num_sellers:
            raise ValueError(f"no seller {seller}")
        return self.node_pos[seller]

    def set_node(self, node_id: int, pos) -> None:
        self.node_pos[node_id] = (float(pos[0]), float(pos[1]))

    def drop_node(self, node_id: int) -> None:
        self.node_pos.pop(node_id, None)
        self.route_tables.pop(node_id, None)

    def neighbors(self, node_id: int):
        """Nodes within radio range, ascending id (deterministic flood)."""
        x, y = self.node_pos[node_id]
        r2 = self.params.radio_range ** 2
        out = []
        for other in sorted(self.node_pos):
            if other == node_id:
                continue
            ox, oy = self.node_pos[other]
            if (ox - x) ** 2 + (oy - y) ** 2 <= r2:
                out.append(other)
        return out

    def route_entry(self, node_id: int, dst: int) -> Optional[RouteEntry]:
        return self.route_tables.get(node_id, {}).get(dst)


def route_discover(scene: MarketScene, src: int, dst: int) -> RouteOutcome:
    """Flood a route request from src; install routes if dst is reached.

    Breadth-first over radio adjacency with duplicate suppression and
    the scene hop limit. Every reached node except dst rebroadcasts the
    request exactly once (that is the request transmission count). When
    dst is reached, the reply unicasts back over the discovered parents,
    installing forward and reverse next-hop entries at every node on the
    path.
    """
    if src == dst:
        raise ValueError("route_discover requires src != dst")
    if src not in scene.node_pos or dst not in scene.node_pos:
        raise ValueError("src and dst must be nodes in the scene")
    parent = {src: None}
    depth = {src: 0}
    frontier = deque([src])
    while frontier:
        node = frontier.popleft()
        if depth[node] >= scene.params.hop_limit:
            continue
        for nb in scene.neighbors(node):
            if nb not in parent:
                parent[nb] = node
                depth[nb] = depth[node] + 1
                frontier.append(nb)
    transmissions = len(parent) - (1 if dst in parent else 0)
    if dst not in parent:
        return RouteOutcome(None, (), transmissions)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()  # src .. dst
    hops = len(path) - 1
    scene.seq_counter += 1
    seq = scene.seq_counter
    for i, node in enumerate(path):
        table = scene.route_tables.setdefault(node, {})
        if i + 1 < len(path):
            table[dst] = RouteEntry(path[i + 1], hops - i, seq)
        if i > 0:
            table[src] = RouteEntry(path[i - 1], i, seq)
    return RouteOutcome(hops, tuple(path), transmissions)


class PedestrianNode:
    """One market visitor carried down from the coarse level."""

    __slots__ = ("entity_id", "node_id", "x", "y", "entry_x", "entry_y",
                 "target_seller", "known_target", "state",
                 "reply_due", "route_hops", "retries", "retry_wait")

    def __init__(self, entity_id: int, node_id: int, x: float, y: float,
                 target_seller: int):
        self.entity_id = entity_id
        self.node_id = node_id
        self.x = x
        self.y = y
        self.entry_x = x
        self.entry_y = y
        self.target_seller = target_seller
        self.known_target = None
        self.state = QUERYING
        self.reply_due = None  # fine step when the position reply arrives
        self.route_hops = None
        self.retries = 0
        self.retry_wait = 0


def perimeter_point(extent: float, u: float):
    """Map u in [0,1) onto the boundary of the [0, extent]^2 square."""
    total = 4.0 * extent
    d = (u % 1.0) * total
    if d < extent:
        return (d, 0.0)
    if d < 2.0 * extent:
        return (extent, d - extent)
    if d < 3.0 * extent:
        return (extent - (d - 2.0 * extent), extent)
    return (0.0, extent - (d - 3.0 * extent))


def pedestrian_step(ped: PedestrianNode, walking_speed: float) -> None:
    """One fine step of movement; only WALKING pedestrians move."""
    if ped.state != WALKING:
        return
    tx, ty = ped.known_target
    dx = tx - ped.x
    dy = ty - ped.y
    dist = math.hypot(dx, dy)
    if dist <= walking_speed:
        ped.x, ped.y = tx, ty
        ped.state = ARRIVED
        return
    f = walking_speed / dist
    ped.x += dx * f
    ped.y += dy * f


class MarketRun:
    """A market session: injection, querying, walking, result records.

    Entity records arrive at construction but pedestrians are injected
    lazily on the first fine step: their two draws (entry point, target
    seller) happen only if the simulation actually advances, so a
    session ended before any advancement returns every record bit-exact.
    """

    def __init__(self, scene: MarketScene, records, n_customers: int,
                 master_seed: int):
        from .rng import entity_stream
        if n_customers > len(records):
            raise ValueError("n_customers exceeds transferred entity count")
        self.scene = scene
        self.records = list(records)
        self.n_customers = n_customers
        self.master_seed = master_seed
        self._entity_stream = entity_stream
        self.peds = []  # PedestrianNode, one per entering customer
        self.draws = {}  # entity_id -> Stream (live, carried cursor)
        self.injected = False
        self.fine_clock = 0
        self.messages = 0
        self.route_discoveries = 0
        self.failed_discoveries = 0

    def _inject(self) -> None:
        extent = self.scene.extent
        for i in range(self.n_customers):
            rec = self.records[i]
            stream = self._entity_stream(self.master_seed, rec.entity_id,
                                         cursor=rec.cursor)
            x, y = perimeter_point(extent, stream.uniform())
            target = stream.randrange(self.scene.num_sellers)
            node_id = self.scene.num_sellers + i
            ped = PedestrianNode(rec.entity_id, node_id, x, y, target)
            self.scene.set_node(node_id, (x, y))
            self.peds.append(ped)
            self.draws[rec.entity_id] = stream
        self.injected = True

    def _start_query(self, ped: PedestrianNode) -> None:
        outcome = route_discover(self.scene, ped.node_id, ped.target_seller)
        self.route_discoveries += 1
        self.messages += outcome.request_transmissions
        if outcome.hops is None:
            self.failed_discoveries += 1
            ped.retries += 1
            ped.retry_wait = min(2 ** (ped.retries - 1), _RETRY_CAP_FINE_STEPS)
            return
        # request travels hops fine steps, the reply unicasts back
        self.messages += outcome.hops
        ped.route_hops = outcome.hops
        ped.reply_due = self.fine_clock + 2 * outcome.hops

    def fine_step(self) -> None:
        if not self.injected:
            self._inject()
        for ped in self.peds:
            if ped.state == QUERYING:
                if ped.reply_due is not None:
                    if self.fine_clock >= ped.reply_due:
                        # the position reply lands this fine step; walking
                        # begins on the next one
                        ped.known_target = self.scene.seller_position(
                            ped.target_seller)
                        ped.state = WALKING
                elif ped.retry_wait > 0:
                    ped.retry_wait -= 1
                else:
                    self._start_query(ped)
            elif ped.state == WALKING:
                pedestrian_step(ped, self.scene.params.walking_speed)
                self.scene.set_node(ped.node_id, (ped.x, ped.y))
        self.fine_clock += 1

    def advance(self, substeps: int) -> None:
        for _ in range(substeps):
            self.fine_step()

    def status(self) -> dict:
        """Pedestrian state counts and traffic counters, draw-free."""
        if self.injected:
            querying = sum(p.state == QUERYING for p in self.peds)
            walking = sum(p.state == WALKING for p in self.peds)
            arrived = sum(p.state == ARRIVED for p in self.peds)
        else:
            querying, walking, arrived = self.n_customers, 0, 0
        return {
            "querying": querying,
            "walking": walking,
            "arrived": arrived,
            "msgs": self.messages,
            "routes": self.route_discoveries,
            "fine_steps": self.fine_clock,
        }

    def all_arrived(self) -> bool:
        return self.injected and all(p.state == ARRIVED for p in self.peds)

    def result_records(self) -> list:
        """Entity records going back up, with market displacement applied.

        A pedestrian's coarse-level position moves by exactly its market
        displacement (entry to final position); entities that never
        entered the market return untouched.
        """
        out = []
        by_entity = {p.entity_id: p for p in self.peds}
        for rec in self.records:
            ped = by_entity.get(rec.entity_id)
            if ped is None:
                out.append(rec)
                continue
            stream = self.draws[ped.entity_id]
            out.append(rec._replace(
                x=rec.x + (ped.x - ped.entry_x),
                y=rec.y + (ped.y - ped.entry_y),
                cursor=stream.cursor,
            ))
        return out

    def total_draws(self) -> int:
        return sum(self.draws[rec.entity_id].cursor - rec.cursor
                   for rec in self.records if rec.entity_id in self.draws)


def run_market(scene: MarketScene, n_customers: int,
               substeps_per_coarse: int, coarse_steps: int,
               master_seed: int = 0, records=None) -> tuple:
    """Scripted market session: returns (status bodies, final records, run).

    Synthesizes minimal entity records (ids 0..n-1, fresh streams) when
    none are given; advances substeps_per_coarse fine steps per coarse
    step and collects one STATUS body after each.
    """
    from .territory import EntityRecord
    if records is None:
        records = [EntityRecord(i, "mobile", 0.0, 0.0, None, 0.0, (), 0)
                   for i in range(n_customers)]
    run = MarketRun(scene, records, n_customers, master_seed)
    bodies = []
    for _ in range(coarse_steps):
        run.advance(substeps_per_coarse)
        bodies.append(run.status())
    return bodies, run.result_records(), run
