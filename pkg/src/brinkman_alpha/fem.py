"""Q2/Q1 mixed elements for the Brinkman-penalized steady Navier-Stokes
equations.

Element unknowns are ordered ``[v1 (9), v2 (9), p (4)]`` and global unknowns
``[v1 (all velocity nodes), v2 (all velocity nodes), p (all pressure nodes)]``.
The element operator is

    [2 K11 + K22 + C(v) + A,  K12,                    -Q1]
    [K21,                     K11 + 2 K22 + C(v) + A, -Q2]
    [-Q1^T,                   -Q2^T,                   0 ]

with ``K_ij[a, b] = mu * int dpsi_a/dx_i dpsi_b/dx_j``,
``C[a, b] = rho_f * int psi_a (u . grad psi_b)``,
``Q_i[a, k] = int dpsi_a/dx_i phi_k`` and ``A = alpha(rho) * int psi psi^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, check_density

QUADRATURE_POINTS = 3
OUTLET_PRESSURE_MODES = ("strong", "natural")


class FemError(ValueError):
    """Invalid input to the finite element routines."""


class DegenerateElementError(FemError):
    pass


@dataclass(frozen=True)
class FlowParams:
    rho_f: float = 1.0
    mu: float = 1.0
    v_c: float = 1.0

    def __post_init__(self):
        if not self.rho_f >= 0:
            raise FemError(f"rho_f must be >= 0, got {self.rho_f!r}")
        if not self.mu > 0:
            raise FemError(f"mu must be > 0, got {self.mu!r}")
        if not self.v_c > 0:
            raise FemError(f"v_c must be > 0, got {self.v_c!r}")


@dataclass(frozen=True)
class BrinkmanParams:
    alpha_max: float = 0.0
    alpha_min: float = 0.0
    p_alpha: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.alpha_max) and self.alpha_max >= self.alpha_min >= 0):
            raise FemError(
                f"need alpha_max >= alpha_min >= 0, got alpha_max={self.alpha_max!r}, "
                f"alpha_min={self.alpha_min!r}"
            )
        if not self.p_alpha > 0:
            raise FemError(f"p_alpha must be > 0, got {self.p_alpha!r}")


def alpha_of_rho(rho, params: BrinkmanParams):
    """Convex inverse-permeability interpolation; ``alpha_max`` at rho=0,
    ``alpha_min`` at rho=1.

    Evaluated as ``alpha_min + (alpha_max - alpha_min) p (1 - rho) / (rho + p)``,
    which equals ``alpha_max + rho (alpha_min - alpha_max) (1 + p) / (rho + p)``
    but returns both limits exactly; the latter leaves a rounding residue of
    order ``eps * alpha_max`` in pure fluid elements.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 1.0):
        raise FemError("rho must lie in [0, 1]")
    a_max, a_min, p = params.alpha_max, params.alpha_min, params.p_alpha
    out = a_min + (a_max - a_min) * p * (1.0 - r) / (r + p)
    return float(out) if np.ndim(out) == 0 else out


# -- shape functions -------------------------------------------------------

def _lagrange3(t):
    """Quadratic Lagrange basis on nodes -1, 0, 1 and its derivative."""
    t = np.asarray(t, dtype=float)
    val = np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)], axis=-1)
    der = np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)
    return val, der


def _lagrange2(t):
    t = np.asarray(t, dtype=float)
    val = np.stack([0.5 * (1.0 - t), 0.5 * (1.0 + t)], axis=-1)
    der = np.stack([-0.5 * np.ones_like(t), 0.5 * np.ones_like(t)], axis=-1)
    return val, der


def q2_shape(xi, eta):
    """Biquadratic basis at natural coordinates ``(xi, eta)``.

    Returns ``(psi, dpsi)`` with shapes ``(..., 9)`` and ``(..., 9, 2)``;
    ``dpsi[..., k, 0]`` is the xi-derivative.
    """
    lx, dx = _lagrange3(xi)
    ly, dy = _lagrange3(eta)
    psi = (ly[..., :, None] * lx[..., None, :]).reshape(*lx.shape[:-1], 9)
    dxi = (ly[..., :, None] * dx[..., None, :]).reshape(psi.shape)
    deta = (dy[..., :, None] * lx[..., None, :]).reshape(psi.shape)
    return psi, np.stack([dxi, deta], axis=-1)


def q1_shape(xi, eta):
    """Bilinear basis, same conventions as :func:`q2_shape` with 4 nodes."""
    lx, dx = _lagrange2(xi)
    ly, dy = _lagrange2(eta)
    phi = (ly[..., :, None] * lx[..., None, :]).reshape(*lx.shape[:-1], 4)
    dxi = (ly[..., :, None] * dx[..., None, :]).reshape(phi.shape)
    deta = (dy[..., :, None] * lx[..., None, :]).reshape(phi.shape)
    return phi, np.stack([dxi, deta], axis=-1)


Q2_NODES = np.array([[a - 1.0, b - 1.0] for b in range(3) for a in range(3)])
Q1_NODES = np.array([[2.0 * a - 1.0, 2.0 * b - 1.0] for b in range(2) for a in range(2)])


@lru_cache(maxsize=None)
def gauss_rule(n: int = QUADRATURE_POINTS):
    """Tensor-product Gauss-Legendre rule on [-1, 1]^2: points (n*n, 2), weights."""
    t, w = np.polynomial.legendre.leggauss(n)
    xi, eta = np.meshgrid(t, t, indexing="xy")
    W = np.outer(w, w)
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    pts.setflags(write=False)
    W = W.ravel()
    W.setflags(write=False)
    return pts, W


def jacobian(element_coords, xi, eta):
    """Jacobian of the isoparametric map of one Q2 element.

    ``J = [[dpsi/dxi . x, dpsi/dxi . y], [dpsi/deta . x, dpsi/deta . y]]``.
    Returns ``(J, detJ, Jinv)``.
    """
    X = np.asarray(element_coords, dtype=float)
    _, dpsi = q2_shape(xi, eta)
    J = np.einsum("...kn,kd->...nd", dpsi, X)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise DegenerateElementError(f"non-positive Jacobian determinant {np.min(det)!r}")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    return J, det, inv


def _geometry(coords, nq=QUADRATURE_POINTS):
    """Per element and quadrature point: global shape derivatives and
    weighted determinants.  ``coords`` has shape (ne, 9, 2)."""
    pts, w = gauss_rule(nq)
    psi, dpsi = q2_shape(pts[:, 0], pts[:, 1])  # (nq, 9), (nq, 9, 2)
    phi, _ = q1_shape(pts[:, 0], pts[:, 1])
    J = np.einsum("qkn,ekd->eqnd", dpsi, coords)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise DegenerateElementError(f"non-positive Jacobian determinant {np.min(det)!r}")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    # d/dx_i = sum_n Jinv[i, n] d/dnat_n
    dpsi_dx = np.einsum("eqin,qkn->eqki", inv, dpsi)
    wdet = det * w
    return psi, phi, dpsi_dx, wdet


def _static_blocks(psi, phi, dpsi_dx, wdet):
    """Geometry-only element integrals: K_ij (ne,2,2,9,9), Q (ne,2,9,4), M (ne,9,9)."""
    K = np.einsum("eq,eqai,eqbj->eijab", wdet, dpsi_dx, dpsi_dx)
    Q = np.einsum("eq,eqai,qk->eiak", wdet, dpsi_dx, phi)
    M = np.einsum("eq,qa,qb->eab", wdet, psi, psi)
    return K, Q, M


def _linear_element_operator(K, Q, M, mu, alpha):
    """Velocity-independent 22x22 element operator for all elements."""
    ne = K.shape[0]
    out = np.zeros((ne, 22, 22))
    A = alpha[:, None, None] * M
    K = mu * K
    out[:, :9, :9] = 2 * K[:, 0, 0] + K[:, 1, 1] + A
    out[:, :9, 9:18] = K[:, 0, 1]
    out[:, 9:18, :9] = K[:, 1, 0]
    out[:, 9:18, 9:18] = K[:, 0, 0] + 2 * K[:, 1, 1] + A
    out[:, :9, 18:] = -Q[:, 0]
    out[:, 9:18, 18:] = -Q[:, 1]
    out[:, 18:, :9] = -Q[:, 0].transpose(0, 2, 1)
    out[:, 18:, 9:18] = -Q[:, 1].transpose(0, 2, 1)
    return out


def _convection(psi, dpsi_dx, wdet, rho_f, v1, v2, with_jacobian=True):
    """Convection matrix C(v) (ne,9,9) and, optionally, the 18x18 Newton
    block d(C(v) v)/dv for each element."""
    u = np.stack([v1 @ psi.T, v2 @ psi.T], axis=-1)  # (ne, nq, 2)
    adv = np.einsum("eqi,eqbi->eqb", u, dpsi_dx)
    rw = rho_f * wdet
    C = np.einsum("eq,qa,eqb->eab", rw, psi, adv)
    if not with_jacobian:
        return C, None
    v = np.stack([v1, v2], axis=1)  # (ne, 2, 9)
    grad = np.einsum("eic,eqcj->eqij", v, dpsi_dx)  # du_i/dx_j
    N = np.einsum("eq,qa,qc,eqij->eijac", rw, psi, psi, grad)
    ne = v1.shape[0]
    D = np.empty((ne, 18, 18))
    D[:, :9, :9] = C + N[:, 0, 0]
    D[:, :9, 9:] = N[:, 0, 1]
    D[:, 9:, :9] = N[:, 1, 0]
    D[:, 9:, 9:] = C + N[:, 1, 1]
    return C, D


@dataclass(frozen=True)
class ElementMatrices:
    K11: np.ndarray
    K12: np.ndarray
    K21: np.ndarray
    K22: np.ndarray
    C: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    A: np.ndarray

    def operator(self) -> np.ndarray:
        """The 22x22 element operator (convection frozen at the given velocity)."""
        out = np.zeros((22, 22))
        out[:9, :9] = 2 * self.K11 + self.K22 + self.C + self.A
        out[:9, 9:18] = self.K12
        out[9:18, :9] = self.K21
        out[9:18, 9:18] = self.K11 + 2 * self.K22 + self.C + self.A
        out[:9, 18:] = -self.Q1
        out[9:18, 18:] = -self.Q2
        out[18:, :9] = -self.Q1.T
        out[18:, 9:18] = -self.Q2.T
        return out


def element_matrices(
    element_coords,
    params: FlowParams,
    brinkman: BrinkmanParams,
    rho_e: float,
    v_local=None,
    nq: int = QUADRATURE_POINTS,
) -> ElementMatrices:
    """Coefficient matrices of one element.  ``v_local`` holds the 18 local
    velocity values ``[v1 (9), v2 (9)]``; omitted means fluid at rest."""
    coords = np.asarray(element_coords, dtype=float).reshape(1, 9, 2)
    psi, phi, dpsi_dx, wdet = _geometry(coords, nq)
    K, Q, M = _static_blocks(psi, phi, dpsi_dx, wdet)
    v = np.zeros(18) if v_local is None else np.asarray(v_local, dtype=float)
    C, _ = _convection(psi, dpsi_dx, wdet, params.rho_f, v[None, :9], v[None, 9:], False)
    mu = params.mu
    return ElementMatrices(
        K11=mu * K[0, 0, 0],
        K12=mu * K[0, 0, 1],
        K21=mu * K[0, 1, 0],
        K22=mu * K[0, 1, 1],
        C=C[0],
        Q1=Q[0, 0],
        Q2=Q[0, 1],
        A=alpha_of_rho(rho_e, brinkman) * M[0],
    )


# -- state -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateField:
    v1: np.ndarray
    v2: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh) -> "StateField":
        nv, npr = mesh.n_velocity_nodes, mesh.n_pressure_nodes
        return cls(np.zeros(nv), np.zeros(nv), np.zeros(npr))

    @classmethod
    def from_vector(cls, u, mesh: Mesh) -> "StateField":
        nv = mesh.n_velocity_nodes
        u = np.asarray(u, dtype=float)
        if u.shape != (mesh.n_dofs,):
            raise FemError(f"state vector has shape {u.shape}, expected ({mesh.n_dofs},)")
        return cls(u[:nv].copy(), u[nv : 2 * nv].copy(), u[2 * nv :].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.v1, self.v2, self.p])

    def speed(self) -> np.ndarray:
        return np.hypot(self.v1, self.v2)

    def check(self, mesh: Mesh) -> None:
        nv, npr = mesh.n_velocity_nodes, mesh.n_pressure_nodes
        if self.v1.shape != (nv,) or self.v2.shape != (nv,) or self.p.shape != (npr,):
            raise FemError(
                f"state dimensions ({self.v1.shape}, {self.v2.shape}, {self.p.shape}) "
                f"do not match mesh ({nv} velocity, {npr} pressure nodes)"
            )


# -- global assembly -------------------------------------------------------

class Assembler:
    """Global residual and Newton Jacobian for a fixed mesh, density and
    parameter set.

    Geometry-only integrals and the sparsity pattern are computed once.
    Element contributions are scattered with ``np.bincount`` in element
    order, so assembled values do not depend on anything but the inputs.
    ``active`` masks elements out of the assembly entirely (used for the
    body-fitted reference).
    """

    def __init__(self, mesh: Mesh, density, flow: FlowParams, brinkman: BrinkmanParams,
                 active=None):
        self.mesh = mesh
        self.density = check_density(density, mesh)
        self.flow = flow
        self.brinkman = brinkman
        if active is None:
            active = np.ones(mesh.n_elements, dtype=bool)
        self.active = np.asarray(active, dtype=bool)
        elems = np.flatnonzero(self.active)
        self.elements = elems

        nv = mesh.n_velocity_nodes
        vc = mesh.velocity_connectivity[elems]
        pc = mesh.pressure_connectivity[elems]
        self.vconn = vc
        self.dofs = np.hstack([vc, vc + nv, pc + 2 * nv])  # (ne, 22)

        psi, phi, dpsi_dx, wdet = _geometry(mesh.velocity_nodes[vc])
        self._psi, self._dpsi_dx, self._wdet = psi, dpsi_dx, wdet
        K, Q, M = _static_blocks(psi, phi, dpsi_dx, wdet)
        alpha = np.asarray(alpha_of_rho(self.density[elems], brinkman), dtype=float).reshape(-1)
        lin = _linear_element_operator(K, Q, M, flow.mu, alpha)

        n = mesh.n_dofs
        rows = np.repeat(self.dofs, 22, axis=1).ravel()
        cols = np.tile(self.dofs, (1, 22)).ravel()
        key = rows.astype(np.int64) * n + cols
        uniq, pos = np.unique(key, return_inverse=True)
        self._pos = pos.reshape(-1, 22, 22).astype(np.int64)
        self._nnz = len(uniq)
        r, c = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self._indptr = np.cumsum(indptr)
        self._indices = c
        lin_data = np.bincount(self._pos.ravel(), weights=lin.ravel(), minlength=self._nnz)
        self.linear = self._csr(lin_data)
        self._lin_data = lin_data
        self._vel_pos = self._pos[:, :18, :18].ravel()

    def _csr(self, data) -> sp.csr_matrix:
        n = self.mesh.n_dofs
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))

    def _local_velocity(self, u):
        nv = self.mesh.n_velocity_nodes
        return u[self.vconn], u[nv:2 * nv][self.vconn]

    def residual(self, u, convection: bool = True) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        R = self.linear @ u
        if convection and self.flow.rho_f != 0.0:
            v1, v2 = self._local_velocity(u)
            C, _ = _convection(self._psi, self._dpsi_dx, self._wdet, self.flow.rho_f, v1, v2, False)
            r = np.concatenate([np.einsum("eab,eb->ea", C, v1),
                                np.einsum("eab,eb->ea", C, v2)], axis=1)
            R = R + np.bincount(self.dofs[:, :18].ravel(), weights=r.ravel(),
                                minlength=self.mesh.n_dofs)
        return R

    def system(self, u, convection: bool = True):
        """Residual and Newton Jacobian (CSR) at global state vector ``u``."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.mesh.n_dofs,):
            raise FemError(f"state vector has shape {u.shape}, expected ({self.mesh.n_dofs},)")
        if not convection or self.flow.rho_f == 0.0:
            return self.linear @ u, self._csr(self._lin_data.copy())
        v1, v2 = self._local_velocity(u)
        C, D = _convection(self._psi, self._dpsi_dx, self._wdet, self.flow.rho_f, v1, v2, True)
        r = np.concatenate([np.einsum("eab,eb->ea", C, v1),
                            np.einsum("eab,eb->ea", C, v2)], axis=1)
        R = self.linear @ u + np.bincount(self.dofs[:, :18].ravel(), weights=r.ravel(),
                                          minlength=self.mesh.n_dofs)
        data = self._lin_data + np.bincount(self._vel_pos, weights=D.ravel(), minlength=self._nnz)
        return R, self._csr(data)

    def touched_dofs(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_dofs, dtype=bool)
        mask[self.dofs.ravel()] = True
        return mask


def assemble_system(mesh: Mesh, density, flow: FlowParams, brinkman: BrinkmanParams,
                    state: StateField):
    """Global nonlinear residual R(u) and its Jacobian dR/du at ``state``."""
    state.check(mesh)
    asm = Assembler(mesh, density, flow, brinkman)
    return asm.system(state.to_vector())


# -- Dirichlet conditions --------------------------------------------------

def inlet_profile(y, flow: FlowParams, L_c: float):
    """Fully developed parabolic inlet velocity, peak ``v_c`` at mid-channel."""
    y = np.asarray(y, dtype=float)
    return flow.v_c * 4.0 * y * (L_c - y) / L_c**2


@dataclass(frozen=True, eq=False)
class DirichletConditions:
    dofs: np.ndarray
    values: np.ndarray
    n_dofs: int

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dofs] = False
        return np.flatnonzero(mask)

    def impose(self, u) -> np.ndarray:
        u = np.array(u, dtype=float, copy=True)
        u[self.dofs] = self.values
        return u


def dirichlet_conditions(mesh: Mesh, flow: FlowParams, zero_velocity_nodes=None,
                         fixed_pressure_nodes=None,
                         outlet_pressure: str = "strong") -> DirichletConditions:
    """Inlet parabola, no-slip walls and zero outlet pressure, plus optional
    extra zero-velocity nodes and zero-pressure nodes.

    ``outlet_pressure="natural"`` leaves the outlet pressure free; the
    traction-free outflow condition of the weak form then sets the level and
    every continuity equation is kept, so mass is conserved globally.
    """
    if outlet_pressure not in OUTLET_PRESSURE_MODES:
        raise FemError(f"outlet_pressure must be one of {OUTLET_PRESSURE_MODES}, "
                       f"got {outlet_pressure!r}")
    nv = mesh.n_velocity_nodes
    tagged = np.concatenate([mesh.inlet, mesh.walls, mesh.outlet])
    boundary = mesh.boundary_velocity_nodes()
    missing = np.setdiff1d(boundary, tagged)
    if missing.size:
        raise FemError(f"untagged boundary velocity nodes: {missing[:10].tolist()}")

    vals = {}
    y_in = mesh.velocity_nodes[mesh.inlet, 1]
    for node, vx in zip(mesh.inlet, inlet_profile(y_in, flow, mesh.spec.channel_width)):
        vals[int(node)] = vx
        vals[int(node) + nv] = 0.0
    zero_v = [mesh.walls]
    if zero_velocity_nodes is not None:
        zero_v.append(np.asarray(zero_velocity_nodes, dtype=np.int64))
    for node in np.concatenate(zero_v):
        node = int(node)
        if node not in vals:
            vals[node] = 0.0
            vals[node + nv] = 0.0
    zero_p = [mesh.outlet_pressure if outlet_pressure == "strong" else np.zeros(0, np.int64)]
    if fixed_pressure_nodes is not None:
        zero_p.append(np.asarray(fixed_pressure_nodes, dtype=np.int64))
    for node in np.concatenate(zero_p):
        vals[int(node) + 2 * nv] = 0.0
    dofs = np.array(sorted(vals), dtype=np.int64)
    values = np.array([vals[d] for d in dofs], dtype=float)
    return DirichletConditions(dofs, values, mesh.n_dofs)


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    residual: np.ndarray        # full length; zero on Dirichlet rows
    matrix: sp.csc_matrix       # free x free block of the Jacobian
    free: np.ndarray


def apply_dirichlet(residual, jacobian, bc: DirichletConditions) -> ConstrainedSystem:
    """Eliminate Dirichlet rows and columns.

    The state is assumed to already carry the prescribed values, so Newton
    increments on Dirichlet unknowns vanish and the coupling columns drop
    out of the update equation.
    """
    R = np.array(residual, dtype=float, copy=True)
    R[bc.dofs] = 0.0
    free = bc.free
    Jf = sp.csr_matrix(jacobian)[free][:, free].tocsc()
    return ConstrainedSystem(R, Jf, free)
