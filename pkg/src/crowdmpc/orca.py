"""Optimal reciprocal collision avoidance for the simulated pedestrians.

Each agent picks the velocity closest to its preferred one inside the
intersection of half-planes derived from every neighbour's velocity
obstacle (truncated cone over ``time_horizon``), with both agents assuming
half of the avoidance effort. The intersection is solved by incremental
linear programming over the speed disc; when it is empty, a fallback
returns the velocity of least maximum penetration.

A half-plane is stored as (point, unit normal) and admits the velocities v
with (v - point) . normal >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-10

# Agents build their velocity obstacles for (1 + SAFETY_MARGIN) times the
# combined radius. Riding a constraint boundary exactly would let rounding
# and the least-penetration fallback (dense pinches make the LP infeasible)
# dip below the physical radius sum; the buffer absorbs both.
SAFETY_MARGIN = 0.1


@dataclass
class OrcaAgent:
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    pref_velocity: np.ndarray
    max_speed: float
    time_horizon: float

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.pref_velocity = np.asarray(self.pref_velocity, dtype=float)
        if not (self.radius > 0.0 and self.max_speed > 0.0 and self.time_horizon > 0.0):
            raise ValueError("radius, max_speed, and time_horizon must be positive")


@dataclass(frozen=True)
class HalfPlane:
    """Constraint (v - point) . normal >= 0 with a unit normal."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        norm = float(np.hypot(self.normal[0], self.normal[1]))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"normal must be unit length, |n| = {norm}")

    def violation(self, v) -> float:
        """Penetration depth of v (positive when the constraint is violated)."""
        return float((self.point[0] - v[0]) * self.normal[0] + (self.point[1] - v[1]) * self.normal[1])


def _det(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _perp(n) -> np.ndarray:
    # line direction whose left side is the feasible side of normal n
    return np.array([n[1], -n[0]])


def _normalized(v) -> np.ndarray:
    n = float(np.hypot(v[0], v[1]))
    return v / n


def orca_halfplane(agent: OrcaAgent, other: OrcaAgent, tau: float) -> HalfPlane:
    """Half-plane the agent's new velocity must satisfy w.r.t. one neighbour.

    ``tau`` is the simulation step; it bounds the escape time when the discs
    already overlap. Exactly colinear (head-on) geometry is broken towards
    the counter-clockwise side so runs are reproducible.
    """
    rel_pos = other.position - agent.position
    rel_vel = agent.velocity - other.velocity
    dist_sq = float(rel_pos @ rel_pos)
    r = (1.0 + SAFETY_MARGIN) * (agent.radius + other.radius)
    r_sq = r * r

    if dist_sq > r_sq:
        inv_th = 1.0 / agent.time_horizon
        # w points from the truncation-disc centre to the relative velocity
        w = rel_vel - inv_th * rel_pos
        w_len_sq = float(w @ w)
        dot1 = float(w @ rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # project on the truncation disc
            w_len = np.sqrt(w_len_sq)
            unit_w = w / w_len
            u = (r * inv_th - w_len) * unit_w
            normal = unit_w
        else:
            # project on the nearer leg of the cone; ties go counter-clockwise
            leg = np.sqrt(dist_sq - r_sq)
            if _det(rel_pos, w) >= 0.0:
                direction = np.array(
                    [rel_pos[0] * leg - rel_pos[1] * r, rel_pos[0] * r + rel_pos[1] * leg]
                ) / dist_sq
            else:
                direction = -np.array(
                    [rel_pos[0] * leg + rel_pos[1] * r, -rel_pos[0] * r + rel_pos[1] * leg]
                ) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
            normal = np.array([-direction[1], direction[0]])
    else:
        # discs already overlap: push apart within one simulation step
        inv_dt = 1.0 / tau
        w = rel_vel - inv_dt * rel_pos
        w_len = float(np.hypot(w[0], w[1]))
        if w_len > EPS:
            unit_w = w / w_len
        elif dist_sq > EPS:
            unit_w = _normalized(np.array([-rel_pos[1], rel_pos[0]]))
        else:
            unit_w = np.array([1.0, 0.0])
        u = (r * inv_dt - w_len) * unit_w
        normal = unit_w

    # reciprocity: this agent takes half of the correction u
    return HalfPlane(point=agent.velocity + 0.5 * u, normal=normal)


def _solve_on_line(planes, i, radius, opt, direction_opt):
    """Best point on the boundary line of plane i inside the disc and planes < i.

    Returns None when that segment is empty.
    """
    p = planes[i].point
    d = _perp(planes[i].normal)
    pd = float(p @ d)
    disc = pd * pd + radius * radius - float(p @ p)
    if disc < 0.0:
        return None
    sq = np.sqrt(disc)
    t_left = -pd - sq
    t_right = -pd + sq
    for j in range(i):
        nj = planes[j].normal
        a = float(d @ nj)
        b = float((p - planes[j].point) @ nj)
        if abs(a) <= EPS:
            if b < 0.0:
                return None
            continue
        t = -b / a
        if a > 0.0:
            t_left = max(t_left, t)
        else:
            t_right = min(t_right, t)
        if t_left > t_right:
            return None
    if direction_opt:
        t = t_right if float(opt @ d) > 0.0 else t_left
    else:
        t = min(max(float(d @ (opt - p)), t_left), t_right)
    return p + t * d


def _solve_incremental(planes, opt, radius, direction_opt=False):
    """Incremental LP over the plane intersection and the speed disc.

    Returns (index, result): index == len(planes) when fully feasible,
    otherwise the index of the first plane that could not be satisfied,
    with ``result`` feasible for all earlier planes.
    """
    if direction_opt:
        result = opt * radius
    elif float(opt @ opt) > radius * radius:
        result = _normalized(opt) * radius
    else:
        result = np.array(opt, dtype=float)
    for i, plane in enumerate(planes):
        if float((result - plane.point) @ plane.normal) < 0.0:
            new = _solve_on_line(planes, i, radius, opt, direction_opt)
            if new is None:
                return i, result
            result = new
    return len(planes), result


def _least_penetration(planes, begin, result, radius):
    """Progressively minimise the worst violation over planes[begin:].

    For each newly violated plane the candidate moves along that plane's
    normal as far as the already-equalised boundaries (projected onto the
    plane) allow, which yields the classic equal-penetration geometry.
    """
    distance = 0.0
    for i in range(begin, len(planes)):
        if planes[i].violation(result) > distance:
            d_i = _perp(planes[i].normal)
            p_i = planes[i].point
            projected: list[HalfPlane] = []
            for j in range(i):
                d_j = _perp(planes[j].normal)
                denom = _det(d_i, d_j)
                if abs(denom) <= EPS:
                    if float(d_i @ d_j) > 0.0:
                        continue  # same direction: plane j is redundant here
                    point = 0.5 * (p_i + planes[j].point)
                else:
                    t = float((p_i - planes[j].point) @ planes[j].normal) / denom
                    point = p_i + t * d_i
                direction = _normalized(d_j - d_i)
                projected.append(HalfPlane(point, np.array([-direction[1], direction[0]])))
            index, new = _solve_incremental(projected, planes[i].normal, radius, direction_opt=True)
            if index == len(projected):
                result = new
            distance = planes[i].violation(result)
    return result


def lp2d(half_planes, pref, max_speed: float):
    """Closest point to ``pref`` in the plane intersection and speed disc.

    Returns None when the intersection is empty.
    """
    index, result = _solve_incremental(list(half_planes), np.asarray(pref, dtype=float), max_speed)
    return result if index == len(half_planes) else None


def lp3d(half_planes, max_speed: float, pref=None) -> np.ndarray:
    """Velocity of least maximum constraint violation inside the speed disc."""
    planes = list(half_planes)
    pref = np.zeros(2) if pref is None else np.asarray(pref, dtype=float)
    index, result = _solve_incremental(planes, pref, max_speed)
    if index == len(planes):
        return result
    return _least_penetration(planes, index, result, max_speed)


def orca_velocity(agent: OrcaAgent, neighbors, tau: float) -> np.ndarray:
    """New velocity for one agent given a snapshot of its neighbours."""
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    planes = [orca_halfplane(agent, other, tau) for other in neighbors]
    index, result = _solve_incremental(planes, agent.pref_velocity, agent.max_speed)
    if index < len(planes):
        result = _least_penetration(planes, index, result, agent.max_speed)
    return result


def orca_step(agents, tau: float, neighbor_dist: float = 10.0, extra_neighbors=()) -> np.ndarray:
    """Synchronous update: all new velocities from one common snapshot.

    ``extra_neighbors`` are passive agents (e.g. a visible robot) that every
    agent avoids but whose velocities are not recomputed here. Returns an
    (len(agents), 2) array of velocities.
    """

    def near(agent, other):
        d = other.position - agent.position
        return float(np.hypot(d[0], d[1])) < neighbor_dist

    new_velocities = np.empty((len(agents), 2))
    for i, agent in enumerate(agents):
        neighbors = [other for j, other in enumerate(agents) if j != i and near(agent, other)]
        neighbors.extend(other for other in extra_neighbors if near(agent, other))
        new_velocities[i] = orca_velocity(agent, neighbors, tau)
    return new_velocities
