"""Finite-difference solver for the diffusion light-propagation model.

Solves  Div(sigma grad phi) = mu_a * phi  on a 2D rectangle with Dirichlet
fluence values on the boundary ring, where sigma = 1/(3(mu_a + mu_s')) and
mu_s' = (1 - Theta1/3) mu_s is the reduced scattering coefficient.

Discretization: 5-point finite differences with harmonic averaging of sigma
at cell faces, which keeps the system symmetric positive definite and
preserves the discrete maximum principle.  The module also provides the
spherical quadrature checks used to validate the angular moment identities
behind the diffusion limit (the second moment of <theta, v> over the unit
sphere equals 4*pi/3 for any unit v).
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg, spsolve

from .errors import GeometryMismatch, SolverFailure, ValidationError
from .fields import GridGeometry, Phantom, ScalarField
from .rng import XorShift64Star


def reduced_scattering(mu_s: np.ndarray, theta1: float = 0.0) -> np.ndarray:
    """mu_s' = (1 - theta1/3) * mu_s for phase-function anisotropy theta1."""
    factor = 1.0 - float(theta1) / 3.0
    if factor <= 0:
        raise ValidationError(f"theta1 = {theta1} makes the reduced scattering nonpositive")
    return factor * np.asarray(mu_s)


def diffusion_coefficient(mu_a: np.ndarray, mu_s: np.ndarray, theta1: float = 0.0) -> np.ndarray:
    """sigma = 1 / (3 (mu_a + mu_s'))."""
    total = np.asarray(mu_a) + reduced_scattering(mu_s, theta1)
    if np.any(total <= 0):
        raise ValidationError("mu_a + mu_s' must be positive everywhere for diffusion")
    return 1.0 / (3.0 * total)


@dataclass(frozen=True)
class DiffusionProblem:
    """2D Dirichlet problem for the diffusion equation.

    ``boundary`` is a full-grid field whose boundary ring supplies the
    Dirichlet fluence values (interior entries are ignored).
    """

    geometry: GridGeometry
    mu_a: ScalarField
    sigma: ScalarField
    boundary: ScalarField

    def __post_init__(self):
        if self.geometry.ndim != 2:
            raise ValidationError("diffusion solves are 2D only")
        if min(self.geometry.dims) < 4:
            raise ValidationError("diffusion grid must be at least 4x4")
        for name in ("mu_a", "sigma", "boundary"):
            if getattr(self, name).geometry != self.geometry:
                raise GeometryMismatch(f"{name} geometry differs from problem geometry")
        if np.any(self.mu_a.values < 0):
            raise ValidationError("mu_a must be nonnegative")
        if np.any(self.sigma.values <= 0):
            raise ValidationError("sigma must be strictly positive")
        ring = boundary_ring_values(self.boundary.values)
        if np.any(ring < 0):
            raise ValidationError("boundary fluence must be nonnegative")
        if not np.any(ring > 0):
            raise ValidationError("boundary fluence must be positive somewhere")

    @classmethod
    def from_phantom(cls, phantom: Phantom, boundary: ScalarField,
                     theta1: float = 0.0) -> "DiffusionProblem":
        sigma = diffusion_coefficient(phantom.mu_a.values, phantom.mu_s.values, theta1)
        return cls(phantom.geometry, phantom.mu_a,
                   ScalarField(phantom.geometry, sigma), boundary)


def boundary_ring_values(values: np.ndarray) -> np.ndarray:
    nx, ny = values.shape
    return np.concatenate([values[0, :], values[-1, :],
                           values[1:-1, 0], values[1:-1, -1]])


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def _assemble(problem: DiffusionProblem):
    """SPD system A u = b over interior nodes, Dirichlet data moved to b."""
    nx, ny = problem.geometry.dims
    hx, hy = problem.geometry.spacing
    sig = problem.sigma.values
    mu = problem.mu_a.values
    bc = problem.boundary.values
    nix, niy = nx - 2, ny - 2
    n = nix * niy

    def iid(i, j):  # interior node (i, j) -> unknown index, i/j are grid indices
        return (i - 1) * niy + (j - 1)

    ii, jj = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    diag = mu[ii, jj].astype(np.float64).copy()

    # face coefficient, neighbor offset, inverse spacing^2
    for di, dj, inv_h2 in ((1, 0, 1.0 / hx ** 2), (-1, 0, 1.0 / hx ** 2),
                           (0, 1, 1.0 / hy ** 2), (0, -1, 1.0 / hy ** 2)):
        ni = ii + di
        nj = jj + dj
        sface = _harmonic(sig[ii, jj], sig[ni, nj]) * inv_h2
        diag += sface
        interior = (ni >= 1) & (ni <= nx - 2) & (nj >= 1) & (nj <= ny - 2)
        rows.append(iid(ii[interior], jj[interior]))
        cols.append(iid(ni[interior], nj[interior]))
        vals.append(-sface[interior])
        edge = ~interior
        np.add.at(b, iid(ii[edge], jj[edge]), sface[edge] * bc[ni[edge], nj[edge]])

    rows.append(iid(ii, jj))
    cols.append(iid(ii, jj))
    vals.append(diag)
    A = coo_matrix((np.concatenate(vals),
                    (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n, n)).tocsr()
    return A, b, (ii, jj)


def solve_diffusion(problem: DiffusionProblem, solver: str = "direct",
                    rtol: float = 1e-12, maxiter: int | None = None) -> ScalarField:
    """Solve the Dirichlet diffusion problem; returns the full-grid fluence.

    ``solver`` is "direct" (sparse LU) or "cg" (Jacobi-preconditioned
    conjugate gradients on the SPD system).  Raises :class:`SolverFailure`
    if the relative residual ends above 1e-10.
    """
    A, b, (ii, jj) = _assemble(problem)
    if solver == "direct":
        u = spsolve(A, b)
    elif solver == "cg":
        dinv = 1.0 / A.diagonal()
        from scipy.sparse.linalg import LinearOperator
        M = LinearOperator(A.shape, matvec=lambda x: dinv * x)
        u, _info = cg(A, b, rtol=rtol, atol=0.0, M=M,
                      maxiter=maxiter if maxiter is not None else 20 * A.shape[0])
    else:
        raise ValidationError(f"unknown solver {solver!r}")
    bnorm = np.linalg.norm(b)
    residual = float(np.linalg.norm(A @ u - b) / bnorm) if bnorm > 0 else 0.0
    if not np.all(np.isfinite(u)) or residual > 1e-10:
        raise SolverFailure(
            f"linear solve ended with relative residual {residual:.3e} > 1e-10",
            residual=residual)
    phi = problem.boundary.values.copy()
    phi[ii, jj] = u
    return ScalarField(problem.geometry, phi)


def diffusion_residual(problem: DiffusionProblem, phi: ScalarField) -> float:
    """Relative residual of the interior difference equations for ``phi``."""
    if phi.geometry != problem.geometry:
        raise GeometryMismatch("phi geometry differs from problem geometry")
    A, b, (ii, jj) = _assemble(problem)
    u = phi.values[ii, jj]
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return float(np.linalg.norm(A @ u - b))
    return float(np.linalg.norm(A @ u - b) / bnorm)


def boundary_flux_sum(problem: DiffusionProblem, phi: ScalarField) -> float:
    """Total discrete flux sigma * dphi/dn through the Dirichlet ring.

    Summing the interior equations telescopes interior face fluxes away, so
    with mu_a = 0 this is zero up to the solver residual (discrete
    conservation).
    """
    nx, ny = problem.geometry.dims
    hx, hy = problem.geometry.spacing
    sig = problem.sigma.values
    v = phi.values
    total = 0.0
    # faces between ring nodes and first interior nodes; flux out of the domain
    for (ring, inner, h_n, h_t) in (
        ((0, slice(1, ny - 1)), (1, slice(1, ny - 1)), hx, hy),
        ((-1, slice(1, ny - 1)), (-2, slice(1, ny - 1)), hx, hy),
        ((slice(1, nx - 1), 0), (slice(1, nx - 1), 1), hy, hx),
        ((slice(1, nx - 1), -1), (slice(1, nx - 1), -2), hy, hx),
    ):
        sface = _harmonic(sig[ring], sig[inner])
        total += float(np.sum(sface * (v[ring] - v[inner]) / h_n * h_t))
    return total


# --- spherical quadrature checks ---------------------------------------------

def sphere_quadrature(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Product quadrature on the unit sphere: Gauss-Legendre in the polar
    cosine times a uniform azimuthal grid.  Returns (points (n,3), weights)."""
    order = int(order)
    if order < 2:
        raise ValidationError("quadrature order must be >= 2")
    t, wt = np.polynomial.legendre.leggauss(order)
    m = 2 * order
    phi = 2.0 * np.pi * (np.arange(m) + 0.5) / m
    wphi = 2.0 * np.pi / m
    st = np.sqrt(1.0 - t ** 2)
    pts = np.stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.outer(t, np.ones(m)).ravel(),
    ], axis=1)
    w = np.outer(wt, np.full(m, wphi)).ravel()
    return pts, w


def _unit_directions(extra: int, seed: int) -> np.ndarray:
    dirs = [np.eye(3)[k] for k in range(3)]
    rng = XorShift64Star(seed)
    for _ in range(extra):
        t = rng.uniform(-1.0, 1.0)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        s = np.sqrt(1.0 - t * t)
        dirs.append(np.array([s * np.cos(ph), s * np.sin(ph), t]))
    return np.asarray(dirs)


def sphere_moment_check(order: int, directions=None, n_random: int = 5,
                        seed: int = 0) -> float:
    """Max deviation of the numeric second moment from 4*pi/3.

    Evaluates integral of <theta, v>^2 over the unit sphere for the axis
    directions plus ``n_random`` seeded random unit vectors (or an explicit
    list) and returns the largest absolute deviation from 4*pi/3.
    """
    pts, w = sphere_quadrature(order)
    dirs = np.asarray(directions) if directions is not None else _unit_directions(n_random, seed)
    target = 4.0 * np.pi / 3.0
    vals = ((pts @ dirs.T) ** 2 * w[:, None]).sum(axis=0)
    return float(np.max(np.abs(vals - target)))


def sphere_first_moment_max(order: int, directions=None, n_random: int = 5,
                            seed: int = 0) -> float:
    """Max |integral of <theta, v> over the sphere|; linear terms vanish."""
    pts, w = sphere_quadrature(order)
    dirs = np.asarray(directions) if directions is not None else _unit_directions(n_random, seed)
    vals = ((pts @ dirs.T) * w[:, None]).sum(axis=0)
    return float(np.max(np.abs(vals)))


def sphere_vector_moment_max(order: int, directions=None, n_random: int = 5,
                             seed: int = 0) -> float:
    """Max norm deviation of integral of <theta, v> theta from (4*pi/3) v."""
    pts, w = sphere_quadrature(order)
    dirs = np.asarray(directions) if directions is not None else _unit_directions(n_random, seed)
    target = 4.0 * np.pi / 3.0
    worst = 0.0
    for v in dirs:
        vec = (pts * ((pts @ v) * w)[:, None]).sum(axis=0)
        worst = max(worst, float(np.linalg.norm(vec - target * v)))
    return worst
