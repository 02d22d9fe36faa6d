"""Undamped Newton-Raphson with a sparse direct solve per step, and the
body-fitted reference solve on the fluid subdomain."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .fem import (
    OUTLET_PRESSURE_MODES,
    Assembler,
    BrinkmanParams,
    FlowParams,
    StateField,
    apply_dirichlet,
    dirichlet_conditions,
)
from .mesh import Mesh, check_density

log = logging.getLogger(__name__)

INITIAL_GUESSES = ("stokes", "zero")


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonConvergenceError(SolverError):
    pass


class SingularSystemError(SolverError):
    pass


class DisconnectedFluidError(SolverError):
    pass


@dataclass(frozen=True)
class SolveSettings:
    newton_tol: float = 1e-10
    max_iters: int = 50
    initial_guess: str = "stokes"
    outlet_pressure: str = "strong"   # or "natural" (traction-free outflow)

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be > 0, got {self.newton_tol!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ValueError(
                f"initial_guess must be one of {INITIAL_GUESSES}, got {self.initial_guess!r}"
            )
        if self.outlet_pressure not in OUTLET_PRESSURE_MODES:
            raise ValueError(f"outlet_pressure must be one of {OUTLET_PRESSURE_MODES}, "
                             f"got {self.outlet_pressure!r}")


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    reference_norm: float = 0.0

    @property
    def final_norm(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def _symmetric_scaling(matrix):
    """Diagonal scaling that brings both the Brinkman-dominated velocity
    block and the pressure Schur complement to unit size.

    Velocity rows get ``1/sqrt|J_ii|``; pressure rows (zero diagonal) get
    ``1/sqrt(sum_j B_ji^2 / |J_jj|)``, the inverse square root of the Schur
    complement diagonal.  Without it, partial pivoting loses the O(1/alpha)
    solid-region information once alpha_max is above about 1e17.
    """
    A = matrix.tocsr()
    d = np.abs(A.diagonal())
    vel = d > 0
    s = np.ones(A.shape[0])
    s[vel] = 1.0 / np.sqrt(d[vel])
    if (~vel).any():
        B = A[vel][:, ~vel]
        schur = np.asarray(B.multiply(B).T @ (1.0 / d[vel])).ravel()
        sp_ = np.ones_like(schur)
        pos = schur > 0
        sp_[pos] = 1.0 / np.sqrt(schur[pos])
        s[~vel] = sp_
    return s


def _factor_solve(matrix, rhs, iteration, report):
    s = _symmetric_scaling(matrix)
    S = sp.diags(s)
    scaled = (S @ matrix @ S).tocsc()
    try:
        lu = spla.splu(scaled, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystemError(
            f"singular linear system at Newton iteration {iteration}: {exc}", report
        ) from exc
    x = s * lu.solve(s * rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            f"non-finite Newton update at iteration {iteration}", report
        )
    return x


def _newton(asm: Assembler, bc, settings: SolveSettings):
    report = SolveReport()
    u = bc.impose(np.zeros(asm.mesh.n_dofs))
    free = bc.free

    R0 = asm.residual(u)
    ref = float(np.linalg.norm(R0[free]))
    report.reference_norm = ref

    if settings.initial_guess == "stokes" and asm.flow.rho_f != 0.0:
        Rl, Jl = asm.system(u, convection=False)
        cs = apply_dirichlet(Rl, Jl, bc)
        u[free] -= _factor_solve(cs.matrix, cs.residual[free], 0, report)

    tol = settings.newton_tol * ref
    for k in range(settings.max_iters + 1):
        R, J = asm.system(u)
        cs = apply_dirichlet(R, J, bc)
        norm = float(np.linalg.norm(cs.residual))
        report.residual_history.append(norm)
        log.debug("newton iteration %d: |R| = %.3e (target %.3e)", k, norm, tol)
        if not np.isfinite(norm):
            raise NonConvergenceError(f"residual became non-finite at iteration {k}", report)
        if norm <= tol:
            report.converged = True
            break
        if k == settings.max_iters:
            break
        u[free] -= _factor_solve(cs.matrix, cs.residual[free], k + 1, report)
        report.iterations = k + 1

    if not report.converged:
        raise NonConvergenceError(
            f"Newton did not converge in {settings.max_iters} iterations "
            f"(|R| = {report.final_norm:.3e}, target {tol:.3e})",
            report,
        )
    return u, report


def solve_flow(mesh: Mesh, density, flow: FlowParams, brinkman: BrinkmanParams,
               settings: SolveSettings = SolveSettings()):
    """Brinkman-penalized solve over the whole channel."""
    asm = Assembler(mesh, density, flow, brinkman)
    bc = dirichlet_conditions(mesh, flow, outlet_pressure=settings.outlet_pressure)
    u, report = _newton(asm, bc, settings)
    return StateField.from_vector(u, mesh), report


def fluid_connected(mesh: Mesh, fluid: np.ndarray) -> bool:
    """True when fluid elements connect the inlet column to the outlet column
    through shared edges."""
    nx, ny = mesh.nx, mesh.ny
    grid = fluid.reshape(ny, nx)
    idx = np.arange(nx * ny).reshape(ny, nx)
    pairs = []
    h_ok = grid[:, :-1] & grid[:, 1:]
    pairs.append((idx[:, :-1][h_ok], idx[:, 1:][h_ok]))
    v_ok = grid[:-1, :] & grid[1:, :]
    pairs.append((idx[:-1, :][v_ok], idx[1:, :][v_ok]))
    r = np.concatenate([p[0] for p in pairs])
    c = np.concatenate([p[1] for p in pairs])
    g = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(nx * ny, nx * ny))
    _, labels = connected_components(g, directed=False)
    inlet = set(labels[idx[:, 0][grid[:, 0]]].tolist())
    outlet = set(labels[idx[:, -1][grid[:, -1]]].tolist())
    return bool(inlet & outlet)


def body_fitted_masks(mesh: Mesh, density):
    """Node classification for a discrete density.

    Returns ``(fluid_elements, fluid_only_v, solid_v, fluid_only_p, solid_only_p)``
    where ``solid_v`` marks velocity nodes touching at least one solid element.
    """
    rho = check_density(density, mesh)
    if not np.all((rho == 0.0) | (rho == 1.0)):
        raise ValueError("body-fitted masks need a discrete {0, 1} density")
    fluid = rho == 1.0
    nv, npr = mesh.n_velocity_nodes, mesh.n_pressure_nodes
    touch_f = np.zeros(nv, dtype=bool)
    touch_f[mesh.velocity_connectivity[fluid].ravel()] = True
    touch_s = np.zeros(nv, dtype=bool)
    touch_s[mesh.velocity_connectivity[~fluid].ravel()] = True
    ptouch_f = np.zeros(npr, dtype=bool)
    ptouch_f[mesh.pressure_connectivity[fluid].ravel()] = True
    ptouch_s = np.zeros(npr, dtype=bool)
    ptouch_s[mesh.pressure_connectivity[~fluid].ravel()] = True
    return fluid, touch_f & ~touch_s, touch_s, ptouch_f & ~ptouch_s, ptouch_s & ~ptouch_f


def solve_body_fitted(mesh: Mesh, density, flow: FlowParams,
                      settings: SolveSettings = SolveSettings()):
    """Reference solve on the fluid elements only.

    Solid elements are dropped from the assembly; velocity nodes on the
    fluid/solid interface get no-slip.  Unknowns that only solid elements
    touch are held at zero in the returned field.
    """
    fluid, _, solid_v, _, solid_only_p = body_fitted_masks(mesh, density)
    if not fluid.any() or not fluid_connected(mesh, fluid):
        raise DisconnectedFluidError("fluid region does not connect the inlet to the outlet")
    asm = Assembler(mesh, density, flow, BrinkmanParams(), active=fluid)
    bc = dirichlet_conditions(
        mesh, flow,
        zero_velocity_nodes=np.flatnonzero(solid_v),
        fixed_pressure_nodes=np.flatnonzero(solid_only_p),
        outlet_pressure=settings.outlet_pressure,
    )
    u, report = _newton(asm, bc, settings)
    return StateField.from_vector(u, mesh), report


VELOCITY_COLUMNS = ("node", "x", "y", "v1", "v2")
PRESSURE_COLUMNS = ("node", "x", "y", "p")


def _write_columns(path, header, ids, columns):
    with open(path, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for i, *vals in zip(ids, *columns):
            fh.write(f"{i} " + " ".join(f"{v:.17g}" for v in vals) + "\n")


def write_state(state: StateField, mesh: Mesh, velocity_path, pressure_path) -> None:
    """Columnar text export: ``node x y v1 v2`` and ``node x y p``, one
    whitespace-separated row per node, 17 significant digits."""
    state.check(mesh)
    vx, vy = mesh.velocity_nodes.T
    px, py = mesh.pressure_nodes.T
    _write_columns(velocity_path, VELOCITY_COLUMNS, range(mesh.n_velocity_nodes),
                   (vx, vy, state.v1, state.v2))
    _write_columns(pressure_path, PRESSURE_COLUMNS, range(mesh.n_pressure_nodes),
                   (px, py, state.p))


def read_state(mesh: Mesh, velocity_path, pressure_path) -> StateField:
    vel = np.loadtxt(velocity_path, skiprows=1, ndmin=2)
    pre = np.loadtxt(pressure_path, skiprows=1, ndmin=2)
    if vel.shape != (mesh.n_velocity_nodes, 5) or pre.shape != (mesh.n_pressure_nodes, 4):
        raise ValueError(f"state files do not match the mesh ({mesh.n_velocity_nodes} "
                         f"velocity, {mesh.n_pressure_nodes} pressure nodes)")
    return StateField(vel[:, 3].copy(), vel[:, 4].copy(), pre[:, 3].copy())
