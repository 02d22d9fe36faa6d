"""Structured Q2/Q1 meshes of the channel and the beam-in-channel density.

Velocity nodes live on the (2nx+1) x (2ny+1) lattice of half-element
spacing, pressure nodes on the (nx+1) x (ny+1) lattice of element corners.
Both are numbered row by row (x fastest).  Local element numbering follows
the same lattice order: velocity node ``3*b + a`` sits at natural
coordinates ``(a - 1, b - 1)``, pressure node ``2*b + a`` at
``(2a - 1, 2b - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PRESET_NAME = "modified-beam-in-channel"

# Grid-alignment tolerance, in units of the element side.
_ALIGN_TOL = 1e-8


class MeshError(ValueError):
    """Invalid mesh or geometry input."""


def _whole_count(length: float, h: float, name: str) -> int:
    n = length / h
    k = int(round(n))
    if k < 1 or abs(n - k) > _ALIGN_TOL * max(1.0, n):
        raise MeshError(
            f"{name}={length!r} is not an integer multiple of h={h!r} ({name}/h = {n:.6g})"
        )
    return k


@dataclass(frozen=True)
class MeshSpec:
    """Channel of width ``channel_width`` (the characteristic length) and
    length ``2 * channel_width``, tiled by square elements of side ``h``."""

    channel_width: float = 1.0
    h: float = 0.01

    def __post_init__(self):
        if not self.channel_width > 0:
            raise MeshError(f"channel_width must be positive, got {self.channel_width!r}")
        if not self.h > 0:
            raise MeshError(f"h must be positive, got {self.h!r}")
        _whole_count(self.channel_width, self.h, "channel_width")
        _whole_count(self.channel_length, self.h, "channel_length")

    @property
    def channel_length(self) -> float:
        return 2.0 * self.channel_width

    @property
    def nx(self) -> int:
        return _whole_count(self.channel_length, self.h, "channel_length")

    @property
    def ny(self) -> int:
        return _whole_count(self.channel_width, self.h, "channel_width")


@dataclass(frozen=True, eq=False)
class Mesh:
    spec: MeshSpec
    nx: int
    ny: int
    velocity_nodes: np.ndarray
    pressure_nodes: np.ndarray
    velocity_connectivity: np.ndarray
    pressure_connectivity: np.ndarray
    inlet: np.ndarray
    outlet: np.ndarray
    walls: np.ndarray
    outlet_pressure: np.ndarray

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_velocity_nodes(self) -> int:
        return len(self.velocity_nodes)

    @property
    def n_pressure_nodes(self) -> int:
        return len(self.pressure_nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_velocity_nodes + self.n_pressure_nodes

    @property
    def element_count_x(self) -> int:
        return self.nx

    @property
    def element_count_y(self) -> int:
        return self.ny

    def element_coords(self, e=None) -> np.ndarray:
        """Coordinates of the 9 velocity nodes of element ``e`` (or all)."""
        conn = self.velocity_connectivity if e is None else self.velocity_connectivity[e]
        return self.velocity_nodes[conn]

    def element_centroids(self) -> np.ndarray:
        # local node 4 is the element centre
        return self.velocity_nodes[self.velocity_connectivity[:, 4]]

    def boundary_velocity_nodes(self) -> np.ndarray:
        x, y = self.velocity_nodes.T
        tol = 1e-9 * self.h
        on = (
            (x < tol)
            | (x > self.spec.channel_length - tol)
            | (y < tol)
            | (y > self.spec.channel_width - tol)
        )
        return np.flatnonzero(on)


def build_mesh(spec: MeshSpec) -> Mesh:
    """Structured mesh of ``spec.nx x spec.ny`` square elements.

    Boundary tags: left edge is the inlet, top and bottom edges are walls.
    Inlet corners belong to the inlet; outlet corners belong to the walls so
    that no-slip holds there (the outlet carries no velocity constraint).
    """
    nx, ny = spec.nx, spec.ny
    h = spec.h
    mx, my = 2 * nx + 1, 2 * ny + 1

    # exact multiples of h/2 and h
    vi, vj = np.meshgrid(np.arange(mx), np.arange(my), indexing="xy")
    velocity_nodes = np.column_stack([vi.ravel() * (h / 2), vj.ravel() * (h / 2)])
    pi_, pj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    pressure_nodes = np.column_stack([pi_.ravel() * h, pj.ravel() * h])

    ei, ej = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ei, ej = ei.ravel(), ej.ravel()
    a = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
    b = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    vconn = (2 * ej[:, None] + b) * mx + (2 * ei[:, None] + a)
    pa = np.array([0, 1, 0, 1])
    pb = np.array([0, 0, 1, 1])
    pconn = (ej[:, None] + pb) * (nx + 1) + (ei[:, None] + pa)

    col = np.arange(my) * mx
    inlet = col
    outlet = col[1:-1] + (mx - 1)
    walls = np.concatenate([np.arange(1, mx), (my - 1) * mx + np.arange(1, mx)])
    outlet_pressure = np.arange(ny + 1) * (nx + 1) + nx

    return Mesh(
        spec=spec,
        nx=nx,
        ny=ny,
        velocity_nodes=velocity_nodes,
        pressure_nodes=pressure_nodes,
        velocity_connectivity=vconn,
        pressure_connectivity=pconn,
        inlet=inlet,
        outlet=outlet,
        walls=np.sort(walls),
        outlet_pressure=outlet_pressure,
    )


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, lower-left corner ``(x0, y0)``."""

    x0: float
    y0: float
    width: float
    height: float
    name: str = ""

    @property
    def x1(self) -> float:
        return self.x0 + self.width

    @property
    def y1(self) -> float:
        return self.y0 + self.height

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[..., 0], pts[..., 1]
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)

    def inside(self, other: "Rect", tol: float = 1e-12) -> bool:
        return (
            self.x0 >= other.x0 - tol
            and self.y0 >= other.y0 - tol
            and self.x1 <= other.x1 + tol
            and self.y1 <= other.y1 + tol
        )

    def scaled(self, factor: float) -> "Rect":
        return Rect(
            self.x0 * factor, self.y0 * factor, self.width * factor, self.height * factor, self.name
        )


@dataclass(frozen=True)
class GeometrySpec:
    """Solid rectangles placed in a channel of width ``channel_width``."""

    channel_width: float = 1.0
    solids: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.channel_width > 0:
            raise MeshError(f"channel_width must be positive, got {self.channel_width!r}")
        channel = Rect(0.0, 0.0, 2.0 * self.channel_width, self.channel_width)
        tol = 1e-12 * self.channel_width
        for r in self.solids:
            if r.width <= 0 or r.height <= 0:
                raise MeshError(f"rectangle {r.name or r} has non-positive size")
            if not r.inside(channel, tol):
                raise MeshError(f"rectangle {r.name or r} extends outside the channel")

    def solid(self, name: str) -> Rect:
        for r in self.solids:
            if r.name == name:
                return r
        raise KeyError(name)


def benchmark_geometry(
    L_c: float = 1.0,
    box_x0: float | None = None,
    beam_x0: float | None = None,
) -> GeometrySpec:
    """The modified beam-in-channel initial design.

    A 1.4 x 0.8 design box on the bottom wall, horizontally centred by
    default, holding a 0.05 x 0.5 beam standing on the bottom wall at the
    centre of the box.  Offsets are for the unit channel and scale with
    ``L_c`` like every other dimension.
    """
    if box_x0 is None:
        box_x0 = (2.0 - 1.4) / 2
    if beam_x0 is None:
        beam_x0 = box_x0 + (1.4 - 0.05) / 2
    base = GeometrySpec(
        1.0,
        (
            Rect(box_x0, 0.0, 1.4, 0.8, "design_box"),
            Rect(beam_x0, 0.0, 0.05, 0.5, "beam"),
        ),
    )
    beam, box = base.solid("beam"), base.solid("design_box")
    if not beam.inside(box, 1e-12):
        raise MeshError("beam must lie inside the design box")
    return scale_geometry(base, L_c)


def scale_geometry(base: GeometrySpec, L_c: float) -> GeometrySpec:
    """Rescale ``base`` so its channel width becomes ``L_c``."""
    if not L_c > 0:
        raise MeshError(f"L_c must be positive, got {L_c!r}")
    factor = L_c / base.channel_width
    return GeometrySpec(L_c, tuple(r.scaled(factor) for r in base.solids))


def _aligned(value: float, h: float) -> bool:
    n = value / h
    return abs(n - round(n)) <= _ALIGN_TOL * max(1.0, abs(n))


def rasterize_density(mesh: Mesh, geom: GeometrySpec) -> np.ndarray:
    """Per-element fluid density: 0 where the element centroid is inside a
    solid rectangle, 1 elsewhere.

    Rectangle edges must lie on grid lines.  A rectangle contained in another
    one cannot change the result, so only the outermost ones are checked.
    """
    h = mesh.h
    if abs(geom.channel_width - mesh.spec.channel_width) > 1e-12 * mesh.spec.channel_width:
        raise MeshError(
            f"geometry channel width {geom.channel_width!r} does not match mesh "
            f"channel width {mesh.spec.channel_width!r}"
        )
    for i, r in enumerate(geom.solids):
        covered = any(j != i and r.inside(o) for j, o in enumerate(geom.solids))
        if covered:
            continue
        for label, v in (("x0", r.x0), ("y0", r.y0), ("x1", r.x1), ("y1", r.y1)):
            if not _aligned(v, h):
                raise MeshError(
                    f"rectangle {r.name or i} edge {label}={v!r} is not on the h={h!r} grid"
                )
    centroids = mesh.element_centroids()
    rho = np.ones(mesh.n_elements)
    for r in geom.solids:
        rho[r.contains_points(centroids)] = 0.0
    return rho


def check_density(rho: np.ndarray, mesh: Mesh) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.n_elements,):
        raise MeshError(f"density has shape {rho.shape}, expected ({mesh.n_elements},)")
    if np.any(~np.isfinite(rho)) or rho.min() < 0.0 or rho.max() > 1.0:
        raise MeshError("density values must lie in [0, 1]")
    return rho
