"""Kinematic simulation of an unprotected left turn through cross traffic.

The ego vehicle follows a fixed polyline (50 m straight approach, quarter
arc of radius 12 m, straight westbound exit) and controls only longitudinal
acceleration. Cross traffic runs on two horizontal lanes with Poisson
arrivals and a simple gap-keeping rule; it never yields to the ego. The
eastbound lane crosses the ego's turn arc, the westbound lane passes clear
of the exit and only adds sensor clutter.

Motion within a step is integrated with linearly varying speed (so the
per-step displacement is the trapezoid (v + v')/2 * dt) and collisions are
checked at sub-step samples, because at dt = 1 s a crossing vehicle could
otherwise hop over the ego between consecutive states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, STREAM_ENV, child_seed

OBS_DIM = 26

# fixed road geometry (metres). The cross street is a divided road: its
# eastbound carriageway passes just north of the ego's approach stop line
# and is crossed almost perpendicularly at the start of the turn arc; the
# westbound carriageway lies north of the arc's sweep and never conflicts,
# so it only adds sensor clutter and the ego's exit lane sits in between.
LANE_OFFSET = 1.75            # lane centre offset from road axis
TURN_RADIUS = 12.0
APPROACH_LEN = 50.0
ARC_LEN = 0.5 * math.pi * TURN_RADIUS
ARC_CENTER = (LANE_OFFSET - TURN_RADIUS, LANE_OFFSET - TURN_RADIUS)
EGO_START = (LANE_OFFSET, ARC_CENTER[1] - APPROACH_LEN)
EAST_LANE_Y = -3.0            # eastbound cross lane, crossed early in the arc
WEST_LANE_Y = 3.0 * LANE_OFFSET  # westbound cross lane, clear of the turn
LANE_HALF_LENGTH = 150.0
LANE_LENGTH = 2.0 * LANE_HALF_LENGTH

# cross-traffic behaviour
TRAFFIC_DECEL = 3.0           # m/s^2, gap-keeping decel/accel bound
HEADWAY_MIN = 10.0            # m, bumper gap that triggers braking
WARMUP_SECONDS = 20.0
COLLISION_SUBSTEPS = 10

# observation slot indices
SLOT_FRONT, SLOT_REAR, SLOT_LF, SLOT_LR, SLOT_RF, SLOT_RR = range(6)
EMPTY_SLOT = (1.0, 0.0, 0.0, 0.0)


class EpisodeFinishedError(RuntimeError):
    """step() called after the episode already ended."""


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass
class Vehicle:
    id: int
    role: str                 # "ego" | "cross"
    lane: str | None          # "east" | "west" | None for ego
    path_progress: float
    speed: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    heading: float = 0.0


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    collided: bool
    completed: bool
    truncated: bool
    ego_speed: float


def step_reward(v_new: float, collided: bool, v_max: float) -> float:
    """Efficiency term plus collision penalty: v'/v_max - 1{collision}."""
    return v_new / v_max - (1.0 if collided else 0.0)


# ---------------------------------------------------------------------------
# Oriented-rectangle overlap (separating axis test)
# ---------------------------------------------------------------------------


def sat_margin(ax, ay, ah, bx, by, bh, la, wa, lb, wb) -> float:
    """Signed overlap margin of two oriented rectangles.

    Positive: penetration depth along the tightest face normal (exact for
    convex polygons). Negative: a separating gap was found along one of the
    four face normals.
    """
    dx = bx - ax
    dy = by - ay
    ca, sa = math.cos(ah), math.sin(ah)
    cb, sb = math.cos(bh), math.sin(bh)
    axes = ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb))
    hla, hwa, hlb, hwb = la / 2.0, wa / 2.0, lb / 2.0, wb / 2.0
    margin = math.inf
    for ux, uy in axes:
        ra = hla * abs(ux * ca + uy * sa) + hwa * abs(-ux * sa + uy * ca)
        rb = hlb * abs(ux * cb + uy * sb) + hwb * abs(-ux * sb + uy * cb)
        m = (ra + rb) - abs(ux * dx + uy * dy)
        if m < margin:
            margin = m
    return margin


def rectangles_overlap(ax, ay, ah, bx, by, bh, la, wa, lb, wb) -> bool:
    return sat_margin(ax, ay, ah, bx, by, bh, la, wa, lb, wb) >= 0.0


def check_collision(a: Vehicle, b: Vehicle, length: float = 5.0, width: float = 2.0) -> bool:
    """True iff the two vehicles' oriented footprints overlap."""
    return rectangles_overlap(
        a.position[0], a.position[1], a.heading,
        b.position[0], b.position[1], b.heading,
        length, width, length, width,
    )


# ---------------------------------------------------------------------------
# Ego path
# ---------------------------------------------------------------------------


def ego_pose(progress: float, route_length: float) -> tuple[float, float, float]:
    """(x, y, heading) at arc length ``progress`` along the left-turn route."""
    s = min(max(progress, 0.0), route_length)
    if s < APPROACH_LEN:
        return EGO_START[0], EGO_START[1] + s, 0.5 * math.pi
    s -= APPROACH_LEN
    if s < ARC_LEN:
        theta = s / TURN_RADIUS
        x = ARC_CENTER[0] + TURN_RADIUS * math.cos(theta)
        y = ARC_CENTER[1] + TURN_RADIUS * math.sin(theta)
        return x, y, wrap_angle(0.5 * math.pi + theta)
    s -= ARC_LEN
    return ARC_CENTER[0] - s, LANE_OFFSET, math.pi


_LANES = {
    "east": {"origin": (-LANE_HALF_LENGTH, EAST_LANE_Y), "dir": (1.0, 0.0), "heading": 0.0},
    "west": {"origin": (LANE_HALF_LENGTH, WEST_LANE_Y), "dir": (-1.0, 0.0), "heading": math.pi},
}
_LANE_ORDER = ("east", "west")


def _cross_pose(lane: str, progress: float) -> tuple[float, float, float]:
    spec = _LANES[lane]
    ox, oy = spec["origin"]
    dx, dy = spec["dir"]
    return ox + dx * progress, oy + dy * progress, spec["heading"]


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


class LeftTurnEnv:
    """Seeded, deterministic intersection episode generator.

    Single instance is single-threaded; run independently seeded instances
    for parallel evaluation.
    """

    def __init__(self, config: EnvConfig | None = None, base_seed: int | None = None):
        self.config = config if config is not None else EnvConfig()
        self.config.validate()
        self._base_seed = self.config.seed if base_seed is None else base_seed
        self._auto_episode = 0
        self._finished = True
        self.trace_rows: list[tuple] = []
        self.ego: Vehicle | None = None
        self.vehicles: list[Vehicle] = []
        self._next_id = 0
        self.step_count = 0
        self._rng: np.random.Generator | None = None

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is None:
            seed = child_seed(self._base_seed, STREAM_ENV, self._auto_episode)
            self._auto_episode += 1
        self._rng = np.random.default_rng(int(seed))
        self._next_id = 0
        self.step_count = 0
        self._finished = False
        self.trace_rows = []
        self.ego = Vehicle(id=self._take_id(), role="ego", lane=None,
                           path_progress=0.0, speed=self.config.v_max / 2.0)
        self._refresh_pose(self.ego)
        self.vehicles = []
        self._warmup()
        return self.observe()

    def _take_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def _refresh_pose(self, veh: Vehicle) -> None:
        if veh.role == "ego":
            x, y, h = ego_pose(veh.path_progress, self.config.route_length)
        else:
            x, y, h = _cross_pose(veh.lane, veh.path_progress)
        veh.position = np.array([x, y])
        veh.heading = h

    def _warmup(self) -> None:
        cfg = self.config
        steps = max(0, int(round(WARMUP_SECONDS / cfg.dt)))
        for _ in range(steps):
            accels = self._traffic_decisions()
            for veh, acc in zip(self.vehicles, accels):
                v_new = min(max(veh.speed + acc * cfg.dt, 0.0), cfg.cross_speed)
                veh.path_progress += 0.5 * (veh.speed + v_new) * cfg.dt
                veh.speed = v_new
                self._refresh_pose(veh)
            self._despawn()
            self._spawn_traffic()

    # -- traffic -----------------------------------------------------------

    def _traffic_decisions(self) -> list[float]:
        """Per-vehicle acceleration from the gap-keeping cruise rule,
        decided simultaneously from the current state."""
        cfg = self.config
        accels = []
        by_lane: dict[str, list[Vehicle]] = {name: [] for name in _LANE_ORDER}
        for veh in self.vehicles:
            by_lane[veh.lane].append(veh)
        leader_gap: dict[int, float] = {}
        for lane_vehicles in by_lane.values():
            ordered = sorted(lane_vehicles, key=lambda v: v.path_progress)
            for me, lead in zip(ordered[:-1], ordered[1:]):
                leader_gap[me.id] = lead.path_progress - me.path_progress - cfg.vehicle_length
        for veh in self.vehicles:
            gap = leader_gap.get(veh.id, math.inf)
            if gap < HEADWAY_MIN:
                accels.append(-TRAFFIC_DECEL)
            elif veh.speed < cfg.cross_speed:
                accels.append(TRAFFIC_DECEL)
            else:
                accels.append(0.0)
        return accels

    def _despawn(self) -> None:
        self.vehicles = [v for v in self.vehicles if v.path_progress <= LANE_LENGTH]

    def _spawn_traffic(self) -> None:
        """Bernoulli arrivals per lane per step, blocked while the lane
        origin is within 2 vehicle lengths of the nearest vehicle.

        The arrival instant is uniform within the step, so by the step
        boundary the new vehicle has already advanced a random fraction of
        one step's travel; headways stay continuous instead of snapping to
        a cross_speed * dt lattice."""
        cfg = self.config
        p = min(1.0, cfg.arrival_p * cfg.dt)
        for lane in _LANE_ORDER:
            draw = self._rng.random()
            offset_frac = self._rng.random()
            if draw >= p:
                continue
            nearest = min((v.path_progress for v in self.vehicles if v.lane == lane),
                          default=math.inf)
            gap = 2.0 * cfg.vehicle_length
            if nearest <= gap:
                continue
            progress = min(offset_frac * cfg.cross_speed * cfg.dt,
                           max(0.0, nearest - gap))
            veh = Vehicle(id=self._take_id(), role="cross", lane=lane,
                          path_progress=progress, speed=cfg.cross_speed)
            self._refresh_pose(veh)
            self.vehicles.append(veh)

    # -- stepping ----------------------------------------------------------

    def step(self, action: float) -> StepOutcome:
        if self._finished:
            raise EpisodeFinishedError("episode already ended; call reset()")
        cfg = self.config
        a = float(action)
        if not math.isfinite(a):
            raise ValueError("action must be finite")
        a = min(max(a, -1.0), 1.0)

        v_old = self.ego.speed
        v_new = min(max(v_old + a * cfg.beta * cfg.dt, 0.0), cfg.v_max)
        ego_acc = (v_new - v_old) / cfg.dt
        ego_p0 = self.ego.path_progress

        accels = self._traffic_decisions()
        cross_p0 = np.array([v.path_progress for v in self.vehicles])
        cross_v0 = np.array([v.speed for v in self.vehicles])
        cross_vn = np.minimum(np.maximum(cross_v0 + np.asarray(accels) * cfg.dt, 0.0),
                              cfg.cross_speed)
        cross_acc = (cross_vn - cross_v0) / cfg.dt

        collided, completed, stop_tau = self._scan_motion(
            ego_p0, v_old, ego_acc, cross_p0, cross_v0, cross_acc)

        tau = stop_tau if (collided or completed) else cfg.dt
        self.ego.path_progress = min(ego_p0 + v_old * tau + 0.5 * ego_acc * tau * tau,
                                     cfg.route_length)
        self.ego.speed = v_new
        self._refresh_pose(self.ego)
        progressed = cross_p0 + cross_v0 * tau + 0.5 * cross_acc * tau * tau
        for veh, pr, vn in zip(self.vehicles, progressed, cross_vn):
            veh.path_progress = float(pr)
            veh.speed = float(vn)
            self._refresh_pose(veh)

        self.step_count += 1
        truncated = (not collided and not completed and self.step_count >= cfg.T_max)
        self._finished = collided or completed or truncated

        if not self._finished:
            self._despawn()
            self._spawn_traffic()

        reward = step_reward(v_new, collided, cfg.v_max)
        obs = self.observe()
        self.trace_rows.append((self.step_count, float(self.ego.position[0]),
                                float(self.ego.position[1]), v_new, a, reward,
                                collided))
        return StepOutcome(obs, reward, collided, completed, truncated, v_new)

    def _scan_motion(self, ego_p0, ego_v0, ego_acc, cross_p0, cross_v0, cross_acc):
        """Sample the step at sub-intervals; return (collided, completed,
        event_time). Collision takes precedence over completion within the
        same sample."""
        cfg = self.config
        if len(self.vehicles) == 0:
            reach = ego_p0 + ego_v0 * cfg.dt + 0.5 * ego_acc * cfg.dt * cfg.dt
            if reach >= cfg.route_length:
                tau = _time_to_progress(cfg.route_length - ego_p0, ego_v0, ego_acc, cfg.dt)
                return False, True, tau
            return False, False, cfg.dt
        lane_dir = np.array([_LANES[v.lane]["dir"][0] for v in self.vehicles])
        lane_ox = np.array([_LANES[v.lane]["origin"][0] for v in self.vehicles])
        lane_y = np.array([_LANES[v.lane]["origin"][1] for v in self.vehicles])
        headings = [_LANES[v.lane]["heading"] for v in self.vehicles]
        cull = math.hypot(cfg.vehicle_length, cfg.vehicle_width) + 1e-9
        L, W = cfg.vehicle_length, cfg.vehicle_width
        for k in range(1, COLLISION_SUBSTEPS + 1):
            tau = cfg.dt * k / COLLISION_SUBSTEPS
            ep = ego_p0 + ego_v0 * tau + 0.5 * ego_acc * tau * tau
            ex, ey, eh = ego_pose(ep, cfg.route_length)
            pr = cross_p0 + cross_v0 * tau + 0.5 * cross_acc * tau * tau
            xs = lane_ox + lane_dir * pr
            d2 = (xs - ex) ** 2 + (lane_y - ey) ** 2
            for idx in np.nonzero(d2 <= cull * cull)[0]:
                if rectangles_overlap(ex, ey, eh, xs[idx], lane_y[idx], headings[idx],
                                      L, W, L, W):
                    return True, False, tau
            if ep >= cfg.route_length:
                return False, True, tau
        return False, False, cfg.dt

    # -- observation -------------------------------------------------------

    def observe(self) -> np.ndarray:
        """26-vector: ego speed and heading plus six nearest-per-sector
        neighbor slots, all normalized to [-1, 1]."""
        cfg = self.config
        ego = self.ego
        slots: list[tuple | None] = [None] * 6
        best: list[tuple[float, int] | None] = [None] * 6
        ex, ey = ego.position
        for veh in self.vehicles:
            dx = veh.position[0] - ex
            dy = veh.position[1] - ey
            dist = math.hypot(dx, dy)
            if dist > cfg.sense_radius:
                continue
            bearing = wrap_angle(math.atan2(dy, dx) - ego.heading)
            slot = _sector_slot(bearing)
            key = (dist, veh.id)
            if best[slot] is None or key < best[slot]:
                best[slot] = key
                slots[slot] = (dist / cfg.sense_radius, bearing / math.pi,
                               veh.speed / cfg.v_max, veh.heading / math.pi)
        obs = np.empty(OBS_DIM)
        obs[0] = ego.speed / cfg.v_max
        obs[1] = ego.heading / math.pi
        for i in range(6):
            obs[2 + 4 * i: 6 + 4 * i] = slots[i] if slots[i] is not None else EMPTY_SLOT
        return np.clip(obs, -1.0, 1.0)

    # -- trace -------------------------------------------------------------

    def write_trace_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,ego_x,ego_y,ego_speed,action,reward,collided\n")
            for row in self.trace_rows:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in row) + "\n")


def _sector_slot(bearing: float) -> int:
    """Map relative bearing to one of the six neighbor slots."""
    b = bearing
    sixth = math.pi / 6.0
    if abs(b) <= sixth:
        return SLOT_FRONT
    if abs(b) > 5.0 * sixth:
        return SLOT_REAR
    if b > 0.0:
        return SLOT_LF if b <= 0.5 * math.pi else SLOT_LR
    return SLOT_RF if b >= -0.5 * math.pi else SLOT_RR


def _time_to_progress(dist: float, v0: float, acc: float, dt: float) -> float:
    """Earliest tau in (0, dt] with v0*tau + acc*tau^2/2 >= dist (bisection;
    the motion profile is monotone nondecreasing for our speed clamps)."""
    if dist <= 0.0:
        return 0.0
    lo, hi = 0.0, dt
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if v0 * mid + 0.5 * acc * mid * mid >= dist:
            hi = mid
        else:
            lo = mid
    return hi
