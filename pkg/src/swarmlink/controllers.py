"""Role behaviours: the virtual-force control laws and the chain rules.

Every controller is a function of the robot's own state, the messages it
heard last step and the mission constants. It returns a desired velocity,
the messages to broadcast, and the updated state; it never sees another
robot's state directly.

Vectors are plain ``(x, y)`` tuples; per-robot work is tiny and tuples are
far cheaper than small numpy arrays at this scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .kinematics import VelocityCommand
from .model import ROOT_ID, ControlParams, Pose2D, RobotState, Role, Target
from .protocol import (
    BROADCAST,
    NO_CHAIN,
    Direction,
    Envelope,
    Message,
    RequestKind,
    RequestResponseMessage,
    StatusMessage,
    StrandInfoMessage,
    detect_failures,
    relay_strand,
)

Vec = tuple[float, float]
ZERO: Vec = (0.0, 0.0)

# bridge search: cruise speed, and how close counts as "at" the waypoint
SEARCH_SPEED = 0.3
WAYPOINT_RADIUS = 0.5
# a worker short of links waits this long for bridging robots before retracting
STARVE_HOLD_STEPS = 100
# orphaned chain ends wait this long (plus a per-link stagger) before taking over a dead worker's job
PROMOTE_DELAY_STEPS = 60
PROMOTE_STAGGER_STEPS = 20
REJECT_MEMORY_STEPS = 30
# a worker with a long enough chain asks for more robots after this long without progress
STALL_STEPS = 100
# a fresh relay first drives into line between its parent and child
SLOT_TOLERANCE = 0.05
SLOT_TIMEOUT_STEPS = 100


def _add(a: Vec, b: Vec) -> Vec:
    return (a[0] + b[0], a[1] + b[1])


def _scale(a: Vec, s: float) -> Vec:
    return (a[0] * s, a[1] * s)


def _offset(frm: Vec, to: Vec) -> tuple[float, Vec]:
    dx, dy = to[0] - frm[0], to[1] - frm[1]
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return 0.0, ZERO
    return d, (dx / d, dy / d)


def _toward(frm: Vec, to: Vec, speed: float) -> Vec:
    d, u = _offset(frm, to)
    return _scale(u, min(speed, d / 0.1)) if d > 0.0 else ZERO


# --- control laws -----------------------------------------------------------


def spring_velocity(d_ij: float, direction: Vec, k: float, d_s: float, fallback: Vec = (1.0, 0.0)) -> Vec:
    """Spring law ``k (d_ij - d_s)`` along ``direction`` (unit, toward the neighbour).

    Coincident robots have no direction; ``fallback`` (the collision
    separation axis) is used and the result is a push of magnitude ``k d_s``
    away along it.
    """
    if d_ij <= 0.0:
        return _scale(fallback, -k * d_s)
    return _scale(direction, k * (d_ij - d_s))


def lennard_jones_velocity(d_ij: float, direction: Vec, epsilon: float, delta: float) -> Vec:
    """Clustering velocity toward a neighbour at distance ``d_ij``.

    Magnitude ``(eps/d) [(delta/d)^4 - (delta/d)^2]`` is positive (repulsive)
    inside ``delta`` and negative (attractive) outside.
    """
    if d_ij <= 0.0:
        return ZERO
    r = delta / d_ij
    r2 = r * r
    magnitude = (epsilon / d_ij) * (r2 * r2 - r2)
    return _scale(direction, -magnitude)


def obstacle_avoidance(
    position: Vec,
    obstacles: Iterable[tuple[float, float, float]],
    gain: float,
    influence: float = 1.0,
    max_speed: float = 1.0,
) -> Vec:
    """Repulsive-potential velocity from circular obstacles ``(x, y, radius)``.

    Each obstacle whose surface is closer than ``influence`` pushes with
    ``gain (1/d - 1/influence) / d^2`` directly away from its centre.
    """
    vx = vy = 0.0
    for ox, oy, radius in obstacles:
        dx, dy = position[0] - ox, position[1] - oy
        centre = math.hypot(dx, dy)
        d = centre - radius
        if d >= influence:
            continue
        ux, uy = (dx / centre, dy / centre) if centre > 1e-12 else (1.0, 0.0)
        if d <= 1e-6:
            magnitude = max_speed
        else:
            magnitude = min(max_speed, gain * (1.0 / d - 1.0 / influence) / (d * d))
        vx += ux * magnitude
        vy += uy * magnitude
    s = math.hypot(vx, vy)
    if s > max_speed:
        vx, vy = vx * max_speed / s, vy * max_speed / s
    return (vx, vy)


# --- mission knowledge and inputs ------------------------------------------


@dataclass(frozen=True)
class MissionContext:
    """What every robot knows before the run: constants, targets, chain ids."""

    params: ControlParams
    targets: dict[int, Target]
    chains_of_target: dict[int, tuple[int, ...]]
    target_of_chain: dict[int, int]
    root_position: Vec = ZERO
    obstacles: tuple[tuple[float, float, float], ...] = ()

    @classmethod
    def build(
        cls,
        params: ControlParams,
        targets: Sequence[Target],
        root_position: Vec = ZERO,
        obstacles: Sequence[tuple[float, float, float]] = (),
    ) -> MissionContext:
        chains_of_target: dict[int, tuple[int, ...]] = {}
        target_of_chain: dict[int, int] = {}
        next_chain = 0
        for t in sorted(targets, key=lambda t: t.id):
            ids = tuple(range(next_chain, next_chain + t.required_links))
            next_chain += t.required_links
            chains_of_target[t.id] = ids
            for c in ids:
                target_of_chain[c] = t.id
        return cls(
            params=params,
            targets={t.id: t for t in targets},
            chains_of_target=chains_of_target,
            target_of_chain=target_of_chain,
            root_position=root_position,
            obstacles=tuple(obstacles),
        )


@dataclass
class NeighborView:
    """Everything heard last step from robots in range, keyed by sender."""

    positions: dict[int, Vec] = field(default_factory=dict)
    status: dict[int, StatusMessage] = field(default_factory=dict)
    parent_strands: dict[int, dict[int, StrandInfoMessage]] = field(default_factory=dict)
    child_strands: dict[int, dict[int, StrandInfoMessage]] = field(default_factory=dict)
    requests: list[RequestResponseMessage] = field(default_factory=list)

    def add(self, sender: int, position: Vec, msg: Message, self_id: int) -> None:
        self.positions[sender] = position
        if isinstance(msg, StatusMessage):
            self.status[sender] = msg
        elif isinstance(msg, StrandInfoMessage):
            book = self.parent_strands if msg.direction is Direction.PARENT else self.child_strands
            book.setdefault(sender, {})[msg.chain_id] = msg
        elif msg.addressee == self_id or msg.addressee == BROADCAST:
            self.requests.append(msg)

    @classmethod
    def from_envelopes(cls, self_id: int, envelopes: Iterable[Envelope]) -> NeighborView:
        view = cls()
        for env in envelopes:
            if env.sender_id != self_id:
                view.add(env.sender_id, env.sender_position.xy, env.payload, self_id)
        return view


class Decision(NamedTuple):
    command: VelocityCommand
    outbox: list[Message]
    state: RobotState


def decide(state: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Decision:
    if state.role is Role.ROOT:
        return root_control(state, view, ctx, now)
    if state.role is Role.FREE:
        return free_control(state, view, ctx, now)
    if state.role is Role.NETWORKER:
        return networker_control(state, view, ctx, now)
    return worker_control(state, view, ctx, now)


# --- shared helpers -----------------------------------------------------------


def _status(s: RobotState) -> StatusMessage:
    return StatusMessage(s.role, s.previous_role, s.parent_need, s.target_chain)


def _set_role(s: RobotState, role: Role) -> None:
    if role is not s.role:
        s.previous_role = s.role
        s.role = role


def _watch(s: RobotState, rid: int, now: int) -> None:
    # an id never heard from is timed from the moment watching starts
    s.last_heard[rid] = max(s.last_heard.get(rid, now), now)


def _absorb(s: RobotState, view: NeighborView, now: int) -> None:
    """Refresh liveness and last known positions of parents and children."""
    for rid in (*s.parents.values(), *s.child_ids):
        st = view.status.get(rid)
        if st is not None:
            s.last_heard[rid] = now
            s.last_role[rid] = st.current_role
            s.last_pos[rid] = view.positions[rid]
    # forget stale rejections
    if s.rejected:
        s.rejected = {r: t for r, t in s.rejected.items() if now - t < REJECT_MEMORY_STEPS}


def _position_of(s: RobotState, rid: int, view: NeighborView) -> Vec | None:
    pos = view.positions.get(rid)
    return pos if pos is not None else s.last_pos.get(rid)


def _emit_strand(
    s: RobotState, out: list[Message], direction: Direction, chain: int, ids: Sequence[int], now: int, refresh: int
) -> None:
    """Broadcast a strand when its content changed or the refresh period elapsed."""
    key = (int(direction), chain)
    payload = tuple(ids)
    last = s.sent_strands.get(key)
    if last is None or last[1] != payload or now - last[0] >= refresh:
        out.append(StrandInfoMessage(direction, chain, payload))
        s.sent_strands[key] = (now, payload)


def _nearest_free(s: RobotState, view: NeighborView) -> int | None:
    here = s.pose.xy
    best = None
    best_key = None
    for rid, st in view.status.items():
        if st.current_role is not Role.FREE or rid in s.rejected:
            continue
        d, _ = _offset(here, view.positions[rid])
        key = (d, rid)
        if best_key is None or key < best_key:
            best, best_key = rid, key
    return best


def _chain_member(st: StatusMessage, chain: int, ctx: MissionContext) -> bool:
    if st.current_role is Role.NETWORKER:
        return st.target_chain == chain
    if st.current_role is Role.WORKER and st.target_chain is not None:
        return ctx.target_of_chain.get(st.target_chain) == ctx.target_of_chain.get(chain)
    return False


def _lost(s: RobotState, rid: int, chain: int, view: NeighborView, ctx: MissionContext, now: int) -> bool:
    """Silent past the timeout, or heard but no longer part of this chain."""
    if rid == ROOT_ID:
        return False
    if detect_failures(s.last_heard, (rid,), now, ctx.params.failure_timeout_steps):
        return True
    st = view.status.get(rid)
    return st is not None and not _chain_member(st, chain, ctx)


def _start_search(
    s: RobotState, side: str, chain: int, failed: int, candidates: Sequence[int], now: int, promote: bool = False
) -> None:
    here = s.pose.xy
    s.searches[_child_key(chain) if side == "child" else chain] = {
        "side": side,
        "chain": chain,
        "failed": failed,
        "candidates": list(candidates),
        "waypoint": s.last_pos.get(failed, here),
        "reached": False,
        "since": now,
        "promote": promote,
    }
    s.last_heard.pop(failed, None)


def _search_motion(s: RobotState, search: dict, ctx: MissionContext) -> Vec:
    """Head for the failed robot's last position, then on along the strand.

    Past the break the rest of a parent strand lies toward the root and the
    rest of a child strand toward the chain's target.
    """
    here = s.pose.xy
    if not search["reached"]:
        d, _ = _offset(here, search["waypoint"])
        if d > WAYPOINT_RADIUS:
            return _toward(here, search["waypoint"], SEARCH_SPEED)
        search["reached"] = True
    if search.get("hover"):
        return ZERO
    if search["side"] == "parent":
        goal = ctx.root_position
    else:
        goal = ctx.targets[ctx.target_of_chain[search["chain"]]].position.xy
    if _offset(here, goal)[0] <= WAYPOINT_RADIUS:
        return ZERO
    return _toward(here, goal, SEARCH_SPEED)


def _visible_candidate(s: RobotState, search: dict, view: NeighborView) -> int | None:
    # prefer the strand member nearest the break (last in the list)
    for rid in reversed(search["candidates"]):
        if rid in view.status and rid not in s.rejected:
            return rid
    return None


def _send(out: list[Message], kind: RequestKind, s: RobotState, to: int, chain: int, target: int | None) -> None:
    out.append(RequestResponseMessage(kind, s.id, to, chain, NO_CHAIN if target is None else target))


def _spring_to(s: RobotState, pos: Vec, p: ControlParams) -> tuple[float, Vec]:
    d, u = _offset(s.pose.xy, pos)
    return d, spring_velocity(d, u, p.spring_gain, p.safe_distance)


# --- free -----------------------------------------------------------------------


def free_control(s: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Decision:
    p = ctx.params
    s = s.copy()
    out: list[Message] = []
    joins = sorted(
        (r for r in view.requests if r.kind is RequestKind.JOIN_REQUEST and r.addressee == s.id),
        key=lambda r: r.sender,
    )
    if joins:
        chosen = joins[0]
        for r in joins[1:]:
            _send(out, RequestKind.JOIN_REJECT, s, r.sender, r.chain_id, r.target_id)
        _send(out, RequestKind.JOIN_ACCEPT, s, chosen.sender, chosen.chain_id, chosen.target_id)
        if chosen.chain_id == NO_CHAIN:
            _become_worker(s, chosen.target_id, chosen.sender, ctx, now)
        else:
            _become_networker(s, chosen.chain_id, chosen.sender, ctx, now)
            s.memo["slot_since"] = now
        out.insert(0, _status(s))
        cmd = _toward(s.pose.xy, view.positions.get(chosen.sender, s.pose.xy), p.max_speed)
        return Decision(VelocityCommand(*cmd), out, s)

    here = s.pose.xy
    vx = vy = 0.0
    for rid, st in view.status.items():
        if st.current_role is Role.FREE or st.current_role is Role.ROOT:
            d, u = _offset(here, view.positions[rid])
            v = lennard_jones_velocity(d, u, p.lj_epsilon, p.lj_delta)
            vx += v[0]
            vy += v[1]
    if ctx.obstacles:
        o = obstacle_avoidance(here, ctx.obstacles, p.obstacle_gain, p.obstacle_influence, p.max_speed)
        vx += o[0]
        vy += o[1]
    out.insert(0, _status(s))
    return Decision(VelocityCommand(vx, vy), out, s)


def _reset_chain_state(s: RobotState) -> None:
    s.parents.clear()
    s.child_ids.clear()
    s.parent_strands.clear()
    s.child_strands.clear()
    s.last_heard.clear()
    s.last_pos.clear()
    s.last_role.clear()
    s.pending.clear()
    s.searches.clear()
    s.sent_strands.clear()
    s.dismantling = False
    s.parked = False
    s.starved_since = None
    s.memo.clear()


def _become_networker(s: RobotState, chain: int, child: int, ctx: MissionContext, now: int) -> None:
    _reset_chain_state(s)
    _set_role(s, Role.NETWORKER)
    s.target_chain = chain
    s.target_id = ctx.target_of_chain.get(chain)
    # growth only happens at the root end, so a recruit always slots in under the root
    s.parents[chain] = ROOT_ID
    s.child_ids.append(child)
    s.parent_need = True
    _watch(s, ROOT_ID, now)
    _watch(s, child, now)


def _become_worker(s: RobotState, target: int, parent: int, ctx: MissionContext, now: int) -> None:
    _reset_chain_state(s)
    _set_role(s, Role.WORKER)
    s.target_id = target
    chains = ctx.chains_of_target[target]
    s.target_chain = chains[0]
    s.parents[chains[0]] = parent
    s.parent_need = True
    _watch(s, parent, now)


def revert_to_free(s: RobotState) -> None:
    _reset_chain_state(s)
    _set_role(s, Role.FREE)
    s.target_chain = None
    s.target_id = None
    s.parent_need = False


def assign_worker(s: RobotState, target: int, ctx: MissionContext, now: int = 0) -> None:
    """Configuration-time assignment of a free robot to a target."""
    _become_worker(s, target, ROOT_ID, ctx, now)


# --- root ---------------------------------------------------------------------------


def root_control(s: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Decision:
    """The static reference: seeds parent strands and arbitrates dismantling."""
    s = s.copy()
    p = ctx.params
    out: list[Message] = [_status(s), StrandInfoMessage(Direction.PARENT, NO_CHAIN, (s.id,))]
    memo = s.memo
    memo.setdefault("starving", 0)
    memo.setdefault("dismantle", None)
    memo.setdefault("parked", [])
    memo.setdefault("events", [])

    for r in view.requests:
        if r.kind is RequestKind.JOIN_REQUEST and r.addressee == s.id:
            # the root can parent any number of chains
            _send(out, RequestKind.JOIN_ACCEPT, s, r.sender, r.chain_id, r.target_id)
        elif r.kind is RequestKind.DISMANTLE_COMPLETE and r.target_id == memo["dismantle"]:
            done = memo["dismantle"]
            memo["dismantle"] = None
            memo["parked"].append(done)
            memo["events"].append(("dismantle_complete", now, done))
            for t in sorted(_needy_targets(view, ctx)):
                if t != done:
                    _send(out, RequestKind.EXPAND, s, BROADCAST, NO_CHAIN, t)

    free = sum(1 for st in view.status.values() if st.current_role is Role.FREE)
    needy = _needy_targets(view, ctx)
    sizes: dict[int, int] = {}
    for sender, chains in view.child_strands.items():
        for chain, msg in chains.items():
            t = ctx.target_of_chain.get(chain)
            if t is not None:
                sizes[t] = sizes.get(t, 0) + len(msg.ids)
    memo["free_count"] = free
    memo["chain_sizes"] = sizes

    if needy and free == 0:
        memo["starving"] += 1
    else:
        memo["starving"] = 0

    if memo["dismantle"] is not None:
        _send(out, RequestKind.DISMANTLE, s, BROADCAST, NO_CHAIN, memo["dismantle"])
    elif memo["starving"] >= p.dismantle_persistence_steps:
        unfinished = sorted(t for t in needy if t not in memo["parked"])
        if len(unfinished) >= 2:
            victim = min(unfinished, key=lambda t: (sizes.get(t, 0), t))
            memo["dismantle"] = victim
            memo["events"].append(("dismantle", now, victim))
            _send(out, RequestKind.DISMANTLE, s, BROADCAST, NO_CHAIN, victim)
        elif memo["starving"] == p.dismantle_persistence_steps:
            memo["events"].append(("exhausted", now, unfinished[0] if unfinished else None))
    elif memo["parked"] and not needy and free >= 2:
        t = memo["parked"].pop(0)
        memo["events"].append(("expand", now, t))
        _send(out, RequestKind.EXPAND, s, BROADCAST, NO_CHAIN, t)
    return Decision(VelocityCommand(0.0, 0.0), out, s)


def _needy_targets(view: NeighborView, ctx: MissionContext) -> set[int]:
    needy = set()
    for st in view.status.values():
        if st.parent_need and st.target_chain is not None and st.current_role in (Role.NETWORKER, Role.WORKER):
            t = ctx.target_of_chain.get(st.target_chain)
            if t is not None:
                needy.add(t)
    return needy


# --- requests common to chain members --------------------------------------------


def _handle_chain_requests(s: RobotState, view: NeighborView, ctx: MissionContext, now: int, out: list[Message]) -> None:
    """Join replies, bridge requests and dismantle/expand orders."""
    for r in view.requests:
        if r.kind is RequestKind.DISMANTLE:
            if r.target_id == s.target_id and not s.parked:
                s.dismantling = True
                s.searches.clear()
                s.pending.clear()
            continue
        if r.kind is RequestKind.EXPAND:
            if r.target_id == s.target_id:
                s.starved_since = None
                if s.parked:
                    s.parked = False
                    chain = ctx.chains_of_target[s.target_id][0]
                    s.parents = {chain: ROOT_ID}
                    s.parent_need = True
                    _watch(s, ROOT_ID, now)
            continue
        if r.addressee != s.id:
            continue
        pending = s.pending.get(r.chain_id)
        if r.kind is RequestKind.JOIN_ACCEPT:
            if pending is not None and pending[0] == r.sender:
                _link(s, r.chain_id, r.sender, pending[2], now)
                del s.pending[r.chain_id]
        elif r.kind is RequestKind.JOIN_REJECT:
            if pending is not None and pending[0] == r.sender:
                del s.pending[r.chain_id]
                s.rejected[r.sender] = now
        elif r.kind is RequestKind.JOIN_REQUEST:
            side = _bridge_side(s, r.sender, r.chain_id, ctx)
            if side is None or s.dismantling:
                _send(out, RequestKind.JOIN_REJECT, s, r.sender, r.chain_id, r.target_id)
            else:
                _link(s, r.chain_id, r.sender, side, now)
                _send(out, RequestKind.JOIN_ACCEPT, s, r.sender, r.chain_id, r.target_id)


def _bridge_side(s: RobotState, other: int, chain: int, ctx: MissionContext) -> str | None:
    """Where ``other`` would attach to us in ``chain``: 'parent', 'child' or None."""
    search = s.searches.get(chain)
    if search is not None and other in search["candidates"]:
        return "parent" if search["side"] == "parent" else "child"
    if s.role is Role.WORKER:
        if ctx.target_of_chain.get(chain) == s.target_id and chain not in s.parents and not s.parked:
            return "parent"
        return None
    if s.target_chain != chain:
        return None
    if chain not in s.parents and other in s.parent_strands.get(chain, ()):
        return "parent"
    if not s.child_ids and (other in s.child_strands.get(chain, ()) or (search and search.get("promote"))):
        return "child"
    return None


def _link(s: RobotState, chain: int, other: int, side: str, now: int) -> None:
    if side in ("parent", "recruit"):
        s.parents[chain] = other
        if side == "recruit":
            # the chain grew, so searches along it are making progress
            for search in s.searches.values():
                if search["chain"] == chain:
                    search["since"] = now
        search = s.searches.get(chain)
        if search is not None and search["side"] == "parent":
            del s.searches[chain]
    else:
        s.child_ids[:] = [other]
        s.searches.pop(_child_key(chain), None)
    _watch(s, other, now)
    s.starved_since = None


def _expire_pending(s: RobotState, now: int, timeout: int) -> None:
    for chain, (to, since, _kind) in list(s.pending.items()):
        if now - since > timeout:
            del s.pending[chain]
            s.rejected[to] = now


def _request(s: RobotState, out: list[Message], to: int, chain: int, kind: str, now: int) -> None:
    s.pending[chain] = (to, now, kind)
    _send(out, RequestKind.JOIN_REQUEST, s, to, chain, s.target_id)


# --- worker ----------------------------------------------------------------------------


def worker_control(s: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Decision:
    p = ctx.params
    s = s.copy()
    out: list[Message] = []
    _absorb(s, view, now)
    _handle_chain_requests(s, view, ctx, now, out)
    _expire_pending(s, now, p.join_timeout_steps)
    target = ctx.targets[s.target_id]
    chains = ctx.chains_of_target[s.target_id]
    here = s.pose.xy
    root_pos = _position_of(s, ROOT_ID, view)

    if s.parked:
        s.parent_need = False
        out.insert(0, _status(s))
        return Decision(VelocityCommand(0.0, 0.0), out, s)

    if s.dismantling:
        s.parent_need = False
        home = root_pos if root_pos is not None else ctx.root_position
        if ROOT_ID in view.positions and _offset(here, view.positions[ROOT_ID])[0] <= p.safe_distance:
            _send(out, RequestKind.DISMANTLE_COMPLETE, s, BROADCAST, NO_CHAIN, s.target_id)
            s.dismantling = False
            s.parked = True
            s.parents.clear()
            s.searches.clear()
            out.insert(0, _status(s))
            return Decision(VelocityCommand(0.0, 0.0), out, s)
        parent = next(iter(s.parents.values()), ROOT_ID)
        goal = _position_of(s, parent, view) or home
        cmd = _toward(here, goal, SEARCH_SPEED)
        out.insert(0, _status(s))
        return Decision(VelocityCommand(*cmd), out, s)

    _absorb_parent_strands(s, view)

    # failure detection on parents
    for chain, parent in list(s.parents.items()):
        if _lost(s, parent, chain, view, ctx, now):
            strand = s.parent_strands.get(chain, [])
            beyond = strand[: strand.index(parent)] if parent in strand else [ROOT_ID]
            if ROOT_ID not in beyond:
                beyond.insert(0, ROOT_ID)
            del s.parents[chain]
            s.pending.pop(chain, None)
            _start_search(s, "parent", chain, parent, beyond, now)

    d_target = _offset(here, target.position.xy)[0]
    reached = d_target <= p.move_threshold
    s.parent_need = not reached and _taut(s, view, p) and _chain_short(s, ctx, target, d_target, now)

    for chain, search in list(s.searches.items()):
        if now - search["since"] > p.bridge_patience_steps:
            # give up on the strand and head back to the root to restart this link
            search.update(candidates=[ROOT_ID], waypoint=ctx.root_position, reached=False, since=now)
        if chain not in s.pending:
            cand = _visible_candidate(s, search, view)
            if cand is not None:
                _request(s, out, cand, chain, "parent", now)

    for chain in chains:
        if chain in s.parents:
            _emit_strand(s, out, Direction.CHILD, chain, (s.id,), now, p.strand_refresh_steps)

    if s.searches and not s.parents:
        # with a chain still intact the worker holds its ground; the far side comes to it
        search = s.searches[min(s.searches)]
        cmd = _search_motion(s, search, ctx)
        out.insert(0, _status(s))
        return Decision(VelocityCommand(*cmd), out, s)

    cmd = _worker_forces(s, view, ctx, target, now, out)
    out.insert(0, _status(s))
    return Decision(VelocityCommand(*cmd), out, s)


def _taut(s: RobotState, view: NeighborView, p: ControlParams) -> bool:
    """True when some parent link is stretched to the safe distance."""
    here = s.pose.xy
    for parent in s.parents.values():
        pos = _position_of(s, parent, view)
        if pos is not None and _offset(here, pos)[0] >= p.safe_distance - p.growth_tolerance:
            return True
    return False


def _absorb_parent_strands(s: RobotState, view: NeighborView) -> None:
    for chain, parent in s.parents.items():
        msgs = view.parent_strands.get(parent)
        if not msgs:
            continue
        incoming = msgs.get(chain) or (msgs.get(NO_CHAIN) if parent == ROOT_ID else None)
        if incoming is not None:
            relayed = relay_strand(incoming, s.id)
            if relayed is not None:
                s.parent_strands[chain] = list(relayed.ids)


def _chain_short(s: RobotState, ctx: MissionContext, target: Target, d_target: float, now: int) -> bool:
    """Whether the shortest current chain, pulled straight, falls short of the target.

    A chain that is long enough but bent gets more robots only after the
    worker has made no progress for a while and still sits closer to the
    root than the target does. Out at full radius it slides instead, see
    :func:`_slide`.
    """
    p = ctx.params
    # a strand lists root .. self, so it holds one more id than there are links
    hops = [len(s.parent_strands.get(c, [])) - 1 for c in s.parents]
    if not hops or min(hops) <= 0:
        return True
    reach = min(hops) * p.safe_distance
    span = _offset(ctx.root_position, target.position.xy)[0] - p.move_threshold
    best = s.memo.get("best_target_distance")
    if best is None or d_target < best - 0.05:
        s.memo["best_target_distance"] = d_target
        s.memo["progress_step"] = now
    stalled = now - s.memo.get("progress_step", now) > STALL_STEPS
    s.memo["stalled"] = stalled
    inside = _offset(ctx.root_position, s.pose.xy)[0] < span
    return reach < span or (stalled and inside)


def _worker_forces(
    s: RobotState, view: NeighborView, ctx: MissionContext, target: Target, now: int, out: list[Message]
) -> Vec:
    p = ctx.params
    here = s.pose.xy
    chains = ctx.chains_of_target[s.target_id]
    if not s.parents:
        # nothing to hang on to: restart from the root
        s.parents[chains[0]] = ROOT_ID
        _watch(s, ROOT_ID, now)

    springs = ZERO
    worst = None
    worst_d = -1.0
    all_safe = True
    all_near = True
    dists: dict[int, float] = {}
    for chain, parent in s.parents.items():
        pos = _position_of(s, parent, view)
        if pos is None:
            continue
        d, u = _offset(here, pos)
        dists[chain] = d
        springs = _add(springs, spring_velocity(d, u, p.spring_gain, p.safe_distance))
        # strict comparison: among equally stretched links the first chain wins
        if d >= p.critical_distance and d > worst_d:
            worst, worst_d = (d, u), d
        if not d < p.safe_distance:
            all_safe = False
        if d > p.safe_distance + p.growth_tolerance:
            all_near = False

    # extend at the root end: replace the root as parent by a free robot
    for chain, parent in list(s.parents.items()):
        if parent == ROOT_ID and s.parent_need and chain not in s.pending:
            if dists.get(chain, 0.0) >= p.safe_distance - p.growth_tolerance:
                free = _nearest_free(s, view)
                if free is not None:
                    _request(s, out, free, chain, "recruit", now)

    short = len(s.parents) < len(chains)
    if short and all_near and not s.pending:
        free = _nearest_free(s, view)
        missing = next(c for c in chains if c not in s.parents)
        if free is not None:
            _request(s, out, free, missing, "recruit", now)
            s.starved_since = None
        elif s.starved_since is None:
            s.starved_since = now

    if worst is not None:
        d, u = worst
        return spring_velocity(d, u, p.spring_gain, p.safe_distance)

    cmd = springs
    if short:
        # hold (springs only) while short of links; retract if no recruit appears
        if s.starved_since is not None and now - s.starved_since > STARVE_HOLD_STEPS:
            cmd = _add(cmd, _scale(_offset(here, ctx.root_position)[1], p.target_gain))
        return cmd
    tx, ty = target.position.xy
    pull = (p.target_gain * (tx - here[0]), p.target_gain * (ty - here[1]))
    if all_safe:
        s.memo["sliding"] = False
        cmd = _add(cmd, pull)
        if ctx.obstacles:
            cmd = _add(cmd, obstacle_avoidance(here, ctx.obstacles, p.obstacle_gain, p.obstacle_influence, p.max_speed))
    elif s.memo.get("stalled") or s.memo.get("sliding"):
        # once stalled, keep sliding until the gate reopens
        s.memo["sliding"] = True
        cmd = _add(cmd, _slide(p, here, target.position.xy))
    return cmd


def _slide(p: ControlParams, here: Vec, goal: Vec) -> Vec:
    """Bounded pull toward ``goal`` for a worker parked by a taut fan of chains.

    A fully stretched fan that ends beside its target has nothing to gain
    from turning, so the gated law leaves it parked. The pull is capped so
    a link stretched against it settles halfway to ``d_c``.
    """
    cap = p.spring_gain * (p.critical_distance - p.safe_distance) / 2.0
    d, u = _offset(here, goal)
    return _scale(u, min(cap, p.spring_gain * d))


# --- networker ------------------------------------------------------------------------------


def networker_control(s: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Decision:
    p = ctx.params
    s = s.copy()
    out: list[Message] = []
    _absorb(s, view, now)
    _handle_chain_requests(s, view, ctx, now, out)
    _expire_pending(s, now, p.join_timeout_steps)
    chain = s.target_chain
    here = s.pose.xy

    if s.dismantling:
        out.append(RequestResponseMessage(RequestKind.DISMANTLE, s.id, BROADCAST, NO_CHAIN, s.target_id))
        root_pos = view.positions.get(ROOT_ID)
        if root_pos is not None and _offset(here, root_pos)[0] <= p.safe_distance:
            revert_to_free(s)
            out.insert(0, _status(s))
            return Decision(VelocityCommand(0.0, 0.0), out, s)
        parent = s.parents.get(chain, ROOT_ID)
        pst = view.status.get(parent)
        if parent != ROOT_ID and pst is not None and pst.current_role is Role.NETWORKER:
            goal = view.positions[parent]
        else:
            goal = root_pos if root_pos is not None else ctx.root_position
        out.insert(0, _status(s))
        return Decision(VelocityCommand(*_toward(here, goal, SEARCH_SPEED)), out, s)

    # failure detection
    parent = s.parents.get(chain)
    if parent is not None and _lost(s, parent, chain, view, ctx, now):
        strand = s.parent_strands.get(chain, [])
        beyond = strand[: strand.index(parent)] if parent in strand else []
        if ROOT_ID not in beyond:
            beyond.insert(0, ROOT_ID)
        del s.parents[chain]
        s.pending.pop(chain, None)
        _start_search(s, "parent", chain, parent, beyond, now)
    if s.child_ids and _lost(s, s.child_ids[0], chain, view, ctx, now):
        child = s.child_ids.pop()
        strand = s.child_strands.get(chain, [])
        beyond = strand[: strand.index(child)] if child in strand else []
        was_worker = s.last_role.get(child) is Role.WORKER
        key = _child_key(chain)
        _start_search(s, "child", chain, child, beyond, now, promote=was_worker and not beyond)
        if s.searches[key]["promote"]:
            s.searches[key]["hover"] = True

    child = s.child_ids[0] if s.child_ids else None
    if child is not None and child in view.status:
        # relay the need only across a taut link, so a slack chain is not overfilled
        d_child = _offset(here, view.positions[child])[0]
        s.parent_need = view.status[child].parent_need and d_child >= p.safe_distance - p.growth_tolerance

    # strand upkeep
    if parent is not None and chain in s.parents:
        msgs = view.parent_strands.get(s.parents[chain])
        if msgs:
            incoming = msgs.get(chain) or (msgs.get(NO_CHAIN) if s.parents[chain] == ROOT_ID else None)
            if incoming is not None:
                relayed = relay_strand(incoming, s.id)
                if relayed is not None:
                    s.parent_strands[chain] = list(relayed.ids)
    if child is not None:
        msgs = view.child_strands.get(child)
        if msgs and chain in msgs:
            relayed = relay_strand(msgs[chain], s.id)
            if relayed is not None:
                s.child_strands[chain] = list(relayed.ids)
    if chain in s.parents and s.parent_strands.get(chain):
        _emit_strand(s, out, Direction.PARENT, chain, s.parent_strands[chain], now, p.strand_refresh_steps)
    if child is not None and s.child_strands.get(chain):
        _emit_strand(s, out, Direction.CHILD, chain, s.child_strands[chain], now, p.strand_refresh_steps)

    # searches: give up, promote, or ask a visible strand member to bridge
    for key, search in list(s.searches.items()):
        age = now - search["since"]
        if age > p.bridge_patience_steps:
            revert_to_free(s)
            out.insert(0, _status(s))
            return Decision(VelocityCommand(0.0, 0.0), out, s)
        if search["promote"]:
            worker = _visible_worker(s, view, ctx)
            if worker is not None:
                if chain not in s.pending:
                    _request(s, out, worker, chain, "child", now)
                continue
            link = ctx.chains_of_target[s.target_id].index(chain)
            if age >= PROMOTE_DELAY_STEPS + PROMOTE_STAGGER_STEPS * link and chain in s.parents:
                _promote(s, chain, now)
                out.insert(0, _status(s))
                return Decision(VelocityCommand(0.0, 0.0), out, s)
            continue
        if chain not in s.pending:
            cand = _visible_candidate(s, search, view)
            if cand is not None:
                _request(s, out, cand, chain, search["side"], now)

    tip = s.searches.get(_child_key(chain))
    if tip is not None and not tip["promote"] and chain in s.parents:
        # a chain broken on the far side regrows from the root end until its tip sees the rest
        pos = _position_of(s, s.parents[chain], view)
        s.parent_need = pos is not None and _offset(here, pos)[0] >= p.safe_distance - p.growth_tolerance
        if s.parents[chain] == ROOT_ID and s.parent_need and chain not in s.pending:
            free = _nearest_free(s, view)
            if free is not None:
                _request(s, out, free, chain, "recruit", now)

    if s.searches:
        # the parent side has priority: it leads back toward the root
        search = s.searches.get(chain) or s.searches[_child_key(chain)]
        cmd = _search_motion(s, search, ctx)
        if search["side"] == "child" and chain in s.parents:
            pos = _position_of(s, s.parents[chain], view)
            if pos is not None:
                d, u = _offset(here, pos)
                if d >= p.critical_distance:
                    cmd = spring_velocity(d, u, p.spring_gain, p.safe_distance)
        out.insert(0, _status(s))
        return Decision(VelocityCommand(*cmd), out, s)

    if not s.child_ids:
        revert_to_free(s)
        out.insert(0, _status(s))
        return Decision(VelocityCommand(0.0, 0.0), out, s)

    slot = _slot_motion(s, view, ctx, now)
    if slot is not None:
        out.insert(0, _status(s))
        return Decision(VelocityCommand(*slot), out, s)

    cmd = _networker_forces(s, view, ctx, now, out)
    out.insert(0, _status(s))
    return Decision(VelocityCommand(*cmd), out, s)


def _slot_motion(s: RobotState, view: NeighborView, ctx: MissionContext, now: int) -> Vec | None:
    """Drive a fresh relay to the midpoint of its parent and child.

    Inserting on the parent-child axis pushes the chain outward along it;
    left to the springs alone, a relay settles off-axis and the chain folds.
    """
    since = s.memo.get("slot_since")
    if since is None:
        return None
    ppos = _position_of(s, s.parents[s.target_chain], view)
    cpos = _position_of(s, s.child_ids[0], view)
    if ppos is None or cpos is None or now - since > SLOT_TIMEOUT_STEPS:
        del s.memo["slot_since"]
        return None
    goal = ((ppos[0] + cpos[0]) / 2.0, (ppos[1] + cpos[1]) / 2.0)
    if _offset(s.pose.xy, goal)[0] <= SLOT_TOLERANCE:
        del s.memo["slot_since"]
        return None
    return _toward(s.pose.xy, goal, ctx.params.max_speed)


def _child_key(chain: int) -> int:
    # searches are keyed by chain; the child-side search gets a disjoint key
    return -1 - chain


def _visible_worker(s: RobotState, view: NeighborView, ctx: MissionContext) -> int | None:
    for rid in sorted(view.status):
        st = view.status[rid]
        if st.current_role is Role.WORKER and st.target_chain is not None:
            if ctx.target_of_chain.get(st.target_chain) == s.target_id:
                return rid
    return None


def _promote(s: RobotState, chain: int, now: int) -> None:
    """Take over the job of a dead worker at the end of our chain."""
    parent = s.parents[chain]
    strand = s.parent_strands.get(chain, [])
    target = s.target_id
    _reset_chain_state(s)
    _set_role(s, Role.WORKER)
    s.target_id = target
    s.parents[chain] = parent
    s.parent_strands[chain] = strand
    s.parent_need = True
    s.memo["promoted"] = now
    _watch(s, parent, now)


def _crowding(s: RobotState, view: NeighborView, p: ControlParams, linked: tuple[int, ...]) -> Vec:
    """Soft push away from unlinked backbone robots closer than ``lj_delta``.

    Keeps sibling chains of one target from jamming on a shared ray.
    """
    here = s.pose.xy
    total = ZERO
    for rid, pos in view.positions.items():
        if rid in linked:
            continue
        st = view.status.get(rid)
        if st is None or st.current_role not in (Role.NETWORKER, Role.WORKER):
            continue
        d, u = _offset(here, pos)
        if d < p.lj_delta:
            total = _add(total, spring_velocity(d, u, p.spring_gain, p.lj_delta))
    return total


def _networker_forces(s: RobotState, view: NeighborView, ctx: MissionContext, now: int, out: list[Message]) -> Vec:
    p = ctx.params
    here = s.pose.xy
    chain = s.target_chain
    parent = s.parents[chain]
    child = s.child_ids[0]
    ppos = _position_of(s, parent, view)
    cpos = _position_of(s, child, view)

    d_p = d_c = math.inf
    cmd = ZERO
    if ppos is not None:
        d_p, u_p = _offset(here, ppos)
        if d_p >= p.critical_distance:
            return spring_velocity(d_p, u_p, p.spring_gain, p.safe_distance)
        cmd = _add(cmd, spring_velocity(d_p, u_p, p.spring_gain, p.safe_distance))
    if cpos is not None:
        d_c, u_c = _offset(here, cpos)
        cmd = _add(cmd, spring_velocity(d_c, u_c, p.spring_gain, p.safe_distance))
    if ppos is not None and cpos is not None:
        # smoothing toward the parent-child midpoint; zero on a straight, even chain
        mid = ((ppos[0] + cpos[0]) / 2.0, (ppos[1] + cpos[1]) / 2.0)
        cmd = _add(cmd, (p.spring_gain * (mid[0] - here[0]), p.spring_gain * (mid[1] - here[1])))
    cmd = _add(cmd, _crowding(s, view, p, (parent, child)))
    if ctx.obstacles and (d_p < p.safe_distance or d_c < p.safe_distance):
        cmd = _add(cmd, obstacle_avoidance(here, ctx.obstacles, p.obstacle_gain, p.obstacle_influence, p.max_speed))

    # the robot hanging off the root extends the chain while the worker still needs it
    if parent == ROOT_ID and s.parent_need and chain not in s.pending and d_p >= p.safe_distance - p.growth_tolerance:
        free = _nearest_free(s, view)
        if free is not None:
            _request(s, out, free, chain, "recruit", now)
    return cmd
