"""Rigid-body scene settling: spawn objects above the work surface, drop
them inside an invisible enclosure, and read back natural resting poses.

The solver is a fixed-timestep semi-implicit Euler integrator with
sequential impulses. Narrow phase is deliberately simple: bounding spheres
against the static planes and against each other, plus mesh vertices
against the table plane so flat faces can actually rest flat. Inertia is
the solid-sphere tensor of the bounding radius. Everything is evaluated in
a fixed order, so a run is a pure function of (scene, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    SimilarityTransform,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    random_quaternions,
)
from .meshes import TriMesh
from .splats import SplatCloud, transform_cloud

FIXED_DT = 1.0 / 120.0
RESTITUTION = 0.1
FRICTION = 0.6
PENETRATION_SLOP = 5e-4
CORRECTION_FRACTION = 0.3
RESTITUTION_VELOCITY_THRESHOLD = 0.2  # below this approach speed contacts are inelastic
                                      # (must exceed one step of gravity, ~0.082 at 1/120 s)
VELOCITY_ITERATIONS = 10
MAX_TABLE_CONTACTS = 8
ANGULAR_DAMPING = 0.2  # 1/s, bleeds rolling energy so scenes actually settle

# sleeping: quiet bodies are frozen so faceted meshes cannot jitter forever;
# the angular threshold must stay below tipping rates or boxes freeze on edges
SLEEP_LINEAR_THRESHOLD = 0.015  # units/s
SLEEP_ANGULAR_THRESHOLD = 0.25  # rad/s
SLEEP_STEPS = 12


class PlacementError(RuntimeError):
    """Raised when objects cannot be placed in the workspace without overlap."""


@dataclass(frozen=True)
class RigidBody:
    """One simulated object; ``position`` is the world location of the mesh
    vertex centroid, ``local_vertices`` are mesh vertices relative to it."""

    mesh: TriMesh
    local_vertices: np.ndarray
    center_offset: np.ndarray      # mesh-frame centroid subtracted from vertices
    collision_radius: float
    position: np.ndarray
    orientation: np.ndarray        # unit quaternion (w,x,y,z)
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = 1.0
    asset_index: int = 0
    instance_id: int = 1
    quiet_steps: int = 0  # consecutive steps below the sleep thresholds

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "local_vertices", np.asarray(self.local_vertices, dtype=float))
        object.__setattr__(self, "center_offset", np.asarray(self.center_offset, dtype=float))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))
        object.__setattr__(self, "linear_velocity", np.asarray(self.linear_velocity, dtype=float))
        object.__setattr__(self, "angular_velocity", np.asarray(self.angular_velocity, dtype=float))

    @staticmethod
    def from_mesh(mesh: TriMesh, position, orientation=None, *, mass: float = 1.0,
                  asset_index: int = 0, instance_id: int = 1) -> "RigidBody":
        centroid = mesh.centroid()
        local = mesh.vertices - centroid
        radius = float(np.linalg.norm(local, axis=1).max())
        return RigidBody(
            mesh=mesh,
            local_vertices=local,
            center_offset=centroid,
            collision_radius=radius,
            position=np.asarray(position, dtype=float),
            orientation=IDENTITY_QUAT.copy() if orientation is None else orientation,
            mass=mass,
            asset_index=asset_index,
            instance_id=instance_id,
        )

    def world_vertices(self) -> np.ndarray:
        return self.local_vertices @ quat_to_matrix(self.orientation).T + self.position

    def world_transform(self) -> SimilarityTransform:
        """Rigid map from the original asset frame to world coordinates."""
        offset = quat_to_matrix(self.orientation) @ self.center_offset
        return SimilarityTransform(
            scale=1.0,
            rotation=self.orientation,
            translation=self.position - offset,
        )

    def posed_mesh(self) -> TriMesh:
        t = self.world_transform()
        return replace(self.mesh, vertices=t.apply(self.mesh.vertices))

    def inertia(self) -> float:
        # solid sphere about any axis
        return 0.4 * self.mass * self.collision_radius**2

    def kinetic_energy(self) -> float:
        lin = 0.5 * self.mass * float(self.linear_velocity @ self.linear_velocity)
        ang = 0.5 * self.inertia() * float(self.angular_velocity @ self.angular_velocity)
        return lin + ang


@dataclass(frozen=True)
class StaticCollider:
    """Infinite plane collider: points with (p - point) . normal >= 0 are outside."""

    point: np.ndarray
    normal: np.ndarray
    visible_in_shadow_pass: bool = False
    is_table: bool = False

    def __post_init__(self) -> None:
        normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(normal)
        if abs(n - 1.0) > 1e-9:
            normal = normal / n
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class WorldState:
    bodies: tuple[RigidBody, ...]
    colliders: tuple[StaticCollider, ...]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    time: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "colliders", tuple(self.colliders))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))

    def total_kinetic_energy(self) -> float:
        return sum(b.kinetic_energy() for b in self.bodies)


def build_enclosure(workspace_min, workspace_max) -> list[StaticCollider]:
    """Table plane at the workspace floor plus four invisible inward walls."""
    lo = np.asarray(workspace_min, dtype=float)
    hi = np.asarray(workspace_max, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("workspace bounds are degenerate (need min < max componentwise)")
    table = StaticCollider(
        point=np.array([0.0, 0.0, lo[2]]),
        normal=np.array([0.0, 0.0, 1.0]),
        visible_in_shadow_pass=True,
        is_table=True,
    )
    walls = [
        StaticCollider(point=np.array([lo[0], 0.0, 0.0]), normal=np.array([1.0, 0.0, 0.0])),
        StaticCollider(point=np.array([hi[0], 0.0, 0.0]), normal=np.array([-1.0, 0.0, 0.0])),
        StaticCollider(point=np.array([0.0, lo[1], 0.0]), normal=np.array([0.0, 1.0, 0.0])),
        StaticCollider(point=np.array([0.0, hi[1], 0.0]), normal=np.array([0.0, -1.0, 0.0])),
    ]
    return [table] + walls


@dataclass(frozen=True)
class SpawnAsset:
    """Physical description of one spawnable asset."""

    mesh: TriMesh
    splat: SplatCloud
    class_id: int = 0


def spawn_objects(
    assets: list[SpawnAsset],
    count_range: tuple[int, int],
    workspace_min,
    workspace_max,
    rng_seed: int,
    clearance: float = 0.02,
    max_attempts: int = 1000,
) -> WorldState:
    """Seeded random placement above the table with non-overlapping spheres.

    Instances get uniform horizontal positions, uniform random orientations,
    and stratified drop heights (one height band per instance) so initial
    bounding spheres cannot overlap. Zero initial velocity.
    """
    if not assets:
        raise ValueError("need at least one asset to spawn")
    lo = np.asarray(workspace_min, dtype=float)
    hi = np.asarray(workspace_max, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence((rng_seed, 0x5A)))
    count = int(rng.integers(count_range[0], count_range[1] + 1))
    choices = rng.integers(0, len(assets), size=count)
    orientations = random_quaternions(rng, count)

    radii = [RigidBody.from_mesh(a.mesh, np.zeros(3)).collision_radius for a in assets]
    r_max = max(radii[int(c)] for c in choices) if count else 0.0

    bodies: list[RigidBody] = []
    placed: list[tuple[np.ndarray, float]] = []
    for i in range(count):
        asset = assets[int(choices[i])]
        r = radii[int(choices[i])]
        if lo[0] + r >= hi[0] - r or lo[1] + r >= hi[1] - r:
            raise PlacementError(f"workspace too small for object radius {r:.3g}")
        band_lo = lo[2] + clearance + r + i * (2.0 * r_max + clearance)
        band_hi = band_lo + clearance
        pos = None
        for _ in range(max_attempts):
            candidate = np.array(
                [
                    rng.uniform(lo[0] + r, hi[0] - r),
                    rng.uniform(lo[1] + r, hi[1] - r),
                    rng.uniform(band_lo, band_hi),
                ]
            )
            ok = all(np.linalg.norm(candidate - p) >= r + pr for p, pr in placed)
            if ok:
                pos = candidate
                break
        if pos is None:
            raise PlacementError(f"could not place object {i + 1}/{count} after {max_attempts} attempts")
        placed.append((pos, r))
        bodies.append(
            RigidBody.from_mesh(
                asset.mesh,
                pos,
                orientations[i],
                asset_index=int(choices[i]),
                instance_id=i + 1,
            )
        )
    colliders = build_enclosure(lo, hi)
    return WorldState(bodies=tuple(bodies), colliders=tuple(colliders))


@dataclass
class _BodyState:
    # mutable scratch mirror of RigidBody used inside one step
    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray
    omega: np.ndarray
    mass: float
    inv_mass: float
    inv_inertia: float
    radius: float
    local_vertices: np.ndarray


@dataclass(frozen=True)
class _Contact:
    body_a: int            # index into bodies
    body_b: int            # -1 for static geometry
    point: np.ndarray      # world contact point
    normal: np.ndarray     # from b (or static) toward a
    penetration: float


def _find_contacts(states: list[_BodyState], colliders: tuple[StaticCollider, ...]) -> list[_Contact]:
    contacts: list[_Contact] = []
    for bi, st in enumerate(states):
        for collider in colliders:
            n = collider.normal
            if collider.is_table:
                world = st.local_vertices @ quat_to_matrix(st.quat).T + st.pos
                dist = (world - collider.point) @ n
                pen = -dist
                deep = np.nonzero(pen > -PENETRATION_SLOP)[0]
                if deep.size == 0:
                    continue
                if deep.size > MAX_TABLE_CONTACTS:
                    order = np.lexsort((deep, -pen[deep]))
                    deep = deep[order[:MAX_TABLE_CONTACTS]]
                for vi in deep:
                    contacts.append(
                        _Contact(bi, -1, world[vi], n, float(pen[vi]))
                    )
            else:
                dist = float((st.pos - collider.point) @ n) - st.radius
                if dist < PENETRATION_SLOP:
                    contacts.append(
                        _Contact(bi, -1, st.pos - st.radius * n, n, -dist)
                    )
    for ai in range(len(states)):
        for bj in range(ai + 1, len(states)):
            a, b = states[ai], states[bj]
            delta = a.pos - b.pos
            dist = float(np.linalg.norm(delta))
            pen = a.radius + b.radius - dist
            if pen > -PENETRATION_SLOP:
                n = delta / dist if dist > 1e-12 else np.array([0.0, 0.0, 1.0])
                point = b.pos + n * (b.radius - 0.5 * pen)
                contacts.append(_Contact(ai, bj, point, n, float(pen)))
    return contacts


class _SolverBody:
    """Scalar mirror of one body's velocities; the contact loop runs millions
    of tiny 3-vector ops, where plain floats beat numpy by an order of
    magnitude."""

    __slots__ = ("vx", "vy", "vz", "wx", "wy", "wz", "px", "py", "pz", "inv_mass", "inv_inertia")

    def __init__(self, st: _BodyState) -> None:
        self.vx, self.vy, self.vz = (float(v) for v in st.vel)
        self.wx, self.wy, self.wz = (float(v) for v in st.omega)
        self.px, self.py, self.pz = (float(v) for v in st.pos)
        self.inv_mass = st.inv_mass
        self.inv_inertia = st.inv_inertia

    def point_velocity(self, x: float, y: float, z: float) -> tuple[float, float, float]:
        rx, ry, rz = x - self.px, y - self.py, z - self.pz
        return (
            self.vx + self.wy * rz - self.wz * ry,
            self.vy + self.wz * rx - self.wx * rz,
            self.vz + self.wx * ry - self.wy * rx,
        )

    def apply_impulse(self, jx: float, jy: float, jz: float, x: float, y: float, z: float) -> None:
        self.vx += jx * self.inv_mass
        self.vy += jy * self.inv_mass
        self.vz += jz * self.inv_mass
        rx, ry, rz = x - self.px, y - self.py, z - self.pz
        self.wx += self.inv_inertia * (ry * jz - rz * jy)
        self.wy += self.inv_inertia * (rz * jx - rx * jz)
        self.wz += self.inv_inertia * (rx * jy - ry * jx)

    def angular_term(self, nx: float, ny: float, nz: float, x: float, y: float, z: float) -> float:
        rx, ry, rz = x - self.px, y - self.py, z - self.pz
        cx = ry * nz - rz * ny
        cy = rz * nx - rx * nz
        cz = rx * ny - ry * nx
        return self.inv_inertia * (cx * cx + cy * cy + cz * cz)


def _solve_contacts(states: list[_BodyState], contacts: list[_Contact]) -> None:
    if not contacts:
        return
    solver = [_SolverBody(st) for st in states]
    prepared = []
    for c in contacts:
        a = solver[c.body_a]
        b = solver[c.body_b] if c.body_b >= 0 else None
        x, y, z = (float(v) for v in c.point)
        nx, ny, nz = (float(v) for v in c.normal)
        vax, vay, vaz = a.point_velocity(x, y, z)
        if b is not None:
            vbx, vby, vbz = b.point_velocity(x, y, z)
            vax, vay, vaz = vax - vbx, vay - vby, vaz - vbz
        vn0 = vax * nx + vay * ny + vaz * nz
        # restitution targets come from pre-solve approach speeds; recomputing
        # them inside the iteration loop would fight the solver's own impulses
        bias = -RESTITUTION * vn0 if vn0 < -RESTITUTION_VELOCITY_THRESHOLD else 0.0
        k = a.inv_mass + a.angular_term(nx, ny, nz, x, y, z)
        if b is not None:
            k += b.inv_mass + b.angular_term(nx, ny, nz, x, y, z)
        prepared.append((a, b, x, y, z, nx, ny, nz, bias, k))

    normal_accum = [0.0] * len(contacts)
    for _ in range(VELOCITY_ITERATIONS):
        for ci, (a, b, x, y, z, nx, ny, nz, bias, k) in enumerate(prepared):
            vax, vay, vaz = a.point_velocity(x, y, z)
            if b is not None:
                vbx, vby, vbz = b.point_velocity(x, y, z)
                vax, vay, vaz = vax - vbx, vay - vby, vaz - vbz
            vn = vax * nx + vay * ny + vaz * nz
            j = -(vn - bias) / k
            # accumulated clamping keeps the total normal impulse repulsive
            new_accum = normal_accum[ci] + j
            if new_accum < 0.0:
                new_accum = 0.0
            j = new_accum - normal_accum[ci]
            normal_accum[ci] = new_accum
            if j != 0.0:
                a.apply_impulse(j * nx, j * ny, j * nz, x, y, z)
                if b is not None:
                    b.apply_impulse(-j * nx, -j * ny, -j * nz, x, y, z)

            # Coulomb friction against the tangential point velocity
            vax, vay, vaz = a.point_velocity(x, y, z)
            if b is not None:
                vbx, vby, vbz = b.point_velocity(x, y, z)
                vax, vay, vaz = vax - vbx, vay - vby, vaz - vbz
            vn = vax * nx + vay * ny + vaz * nz
            tx, ty, tz = vax - vn * nx, vay - vn * ny, vaz - vn * nz
            speed = (tx * tx + ty * ty + tz * tz) ** 0.5
            if speed > 1e-9 and normal_accum[ci] > 0.0:
                tx, ty, tz = tx / speed, ty / speed, tz / speed
                kt = a.inv_mass + a.angular_term(tx, ty, tz, x, y, z)
                if b is not None:
                    kt += b.inv_mass + b.angular_term(tx, ty, tz, x, y, z)
                jt = -speed / kt
                limit = -FRICTION * normal_accum[ci]
                if jt < limit:
                    jt = limit
                a.apply_impulse(jt * tx, jt * ty, jt * tz, x, y, z)
                if b is not None:
                    b.apply_impulse(-jt * tx, -jt * ty, -jt * tz, x, y, z)

    for st, sb in zip(states, solver):
        st.vel = np.array([sb.vx, sb.vy, sb.vz])
        st.omega = np.array([sb.wx, sb.wy, sb.wz])


def _positional_correction(states: list[_BodyState], colliders: tuple[StaticCollider, ...]) -> None:
    for st in states:
        for collider in colliders:
            n = collider.normal
            if collider.is_table:
                world = st.local_vertices @ quat_to_matrix(st.quat).T + st.pos
                pen = float(-((world - collider.point) @ n).min())
            else:
                pen = st.radius - float((st.pos - collider.point) @ n)
            if pen > PENETRATION_SLOP:
                st.pos = st.pos + CORRECTION_FRACTION * (pen - PENETRATION_SLOP) * n
    for ai in range(len(states)):
        for bj in range(ai + 1, len(states)):
            a, b = states[ai], states[bj]
            delta = a.pos - b.pos
            dist = float(np.linalg.norm(delta))
            pen = a.radius + b.radius - dist
            if pen > PENETRATION_SLOP and dist > 1e-12:
                n = delta / dist
                shift = 0.5 * CORRECTION_FRACTION * (pen - PENETRATION_SLOP)
                a.pos = a.pos + shift * n
                b.pos = b.pos - shift * n


def _integrate_orientation(quat: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    w = np.array([0.0, omega[0], omega[1], omega[2]])
    dq = 0.5 * quat_multiply(w, quat)
    return quat_normalize(quat + dq * dt)


def step(world: WorldState, dt: float = FIXED_DT) -> WorldState:
    """Advance the world by one fixed timestep (semi-implicit Euler)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    states = [
        _BodyState(
            pos=b.position.copy(),
            quat=b.orientation.copy(),
            vel=b.linear_velocity.copy(),
            omega=b.angular_velocity.copy(),
            mass=b.mass,
            inv_mass=1.0 / b.mass,
            inv_inertia=1.0 / b.inertia(),
            radius=b.collision_radius,
            local_vertices=b.local_vertices,
        )
        for b in world.bodies
    ]
    for st in states:
        st.vel = st.vel + world.gravity * dt
        st.omega = st.omega * max(0.0, 1.0 - ANGULAR_DAMPING * dt)

    contacts = _find_contacts(states, world.colliders)
    _solve_contacts(states, contacts)

    for st in states:
        st.pos = st.pos + st.vel * dt
        if float(st.omega @ st.omega) > 0.0:
            st.quat = _integrate_orientation(st.quat, st.omega, dt)

    _positional_correction(states, world.colliders)

    new_bodies = []
    for body, st in zip(world.bodies, states):
        quiet = (
            float(st.vel @ st.vel) < SLEEP_LINEAR_THRESHOLD**2
            and float(st.omega @ st.omega) < SLEEP_ANGULAR_THRESHOLD**2
        )
        quiet_steps = body.quiet_steps + 1 if quiet else 0
        vel, omega = st.vel, st.omega
        if quiet_steps >= SLEEP_STEPS:
            vel = np.zeros(3)
            omega = np.zeros(3)
            quiet_steps = SLEEP_STEPS
        new_bodies.append(
            replace(
                body,
                position=st.pos,
                orientation=st.quat,
                linear_velocity=vel,
                angular_velocity=omega,
                quiet_steps=quiet_steps,
            )
        )
    new_bodies = tuple(new_bodies)
    return WorldState(
        bodies=new_bodies,
        colliders=world.colliders,
        gravity=world.gravity,
        time=world.time + dt,
    )


@dataclass(frozen=True)
class SettleResult:
    state: WorldState
    converged: bool
    steps: int


def settle(
    world: WorldState,
    max_steps: int = 2400,
    ke_threshold: float = 1e-5,
    dt: float = FIXED_DT,
    quiet_steps: int = 30,
) -> SettleResult:
    """Step until total kinetic energy stays below threshold for 30
    consecutive steps; returns the final state either way."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    quiet = 0
    state = world
    for i in range(max_steps):
        state = step(state, dt)
        if state.total_kinetic_energy() < ke_threshold:
            quiet += 1
            if quiet >= quiet_steps:
                return SettleResult(state=state, converged=True, steps=i + 1)
        else:
            quiet = 0
    return SettleResult(state=state, converged=False, steps=max_steps)


def sync_splat_to_mesh(asset_splat: SplatCloud, rest_pose: SimilarityTransform) -> SplatCloud:
    """Carry a mesh-aligned splat to the settled mesh pose (rigid, scale 1)."""
    return transform_cloud(asset_splat, rest_pose)
