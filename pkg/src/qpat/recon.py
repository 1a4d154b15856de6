"""Reconstruction of mu_t and gamma*mu_a from internal pressure data.

For two opposite beams the pressures are

    P_1 = profile_1 * gamma * mu_a * exp(-depth from entry side)
    P_2 = profile_2 * gamma * mu_a * exp(-depth from opposite side)

so on the support  Omega = {P_1 * P_2 > 0}  the transport coefficient follows
from the log-quotient derivative along the beam,

    mu_t = 1/2 * <direction, grad log(P_2 / P_1)>,

and the absorbed-energy product from the geometric mean,

    gamma*mu_a = sqrt(P_1 P_2 / (profile_1 profile_2)) * exp(1/2 * full line
                 integral of mu_t),

where mu_t is extended by zero outside Omega.  If the transmitted fluence
behind the object was measured, the exponential factor cancels and

    gamma*mu_a = sqrt(P_1 P_2 / (profile_1 * transmission_2))

needs no mu_t and no extension assumption.

The module also implements the quotient reconstruction for diffusion-model
data: per-node least squares for grad log(sigma * phi_N^2) from N-1 pressure
quotients, path integration from an anchor value, and the two recoverable
parameter combinations gamma*mu_a/sqrt(sigma) and lap(v)/v.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import (AnchorOutsideSupport, DegenerateIlluminations, DisconnectedMask,
                     EmptySupport, GeometryMismatch, TransmissionRequired,
                     ValidationError)
from .fields import GridGeometry, Profile1D, ScalarField
from .single_scatter import (IlluminationDataSet, line_integral, profile_array,
                             require_opposite_pair)

DEFAULT_EPS_REL = 1e-12
DEFAULT_COND_CAP = 1e6


def _shifted(a: np.ndarray, axis: int, offset: int, fill=0.0) -> np.ndarray:
    """result[i] = a[i + offset] along axis, with ``fill`` past the edges."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    if abs(offset) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if offset >= 0:
        dst[axis] = slice(0, n - offset)
        src[axis] = slice(offset, n)
    else:
        dst[axis] = slice(-offset, n)
        src[axis] = slice(0, n + offset)
    out[tuple(dst)] = a[tuple(src)]
    return out


@dataclass(frozen=True)
class SupportMask:
    """Nodes where both pressures are positive: the domain of the quotient
    formulas.  ``epsilon`` is the absolute threshold that built the mask."""

    geometry: GridGeometry
    mask: np.ndarray
    epsilon: float

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.geometry.shape:
            raise GeometryMismatch("mask shape does not match geometry")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def n_true(self) -> int:
        return int(self.mask.sum())


def support_mask(p1: ScalarField, p2: ScalarField, epsilon: float | None = None,
                 eps_rel: float = DEFAULT_EPS_REL) -> SupportMask:
    """Threshold the pressure product.

    With ``epsilon=None`` the threshold defaults to ``eps_rel`` times the max
    node value of p1*p2 (a relative floor standing in for strict positivity).
    """
    if p1.geometry != p2.geometry:
        raise GeometryMismatch("pressure fields live on different grids")
    prod = p1.values * p2.values
    if epsilon is None:
        peak = float(prod.max())
        if peak <= 0.0:
            raise EmptySupport("pressure product vanishes everywhere")
        epsilon = eps_rel * peak
    epsilon = float(epsilon)
    if epsilon <= 0:
        raise ValidationError("support threshold must be positive")
    return SupportMask(p1.geometry, prod > epsilon, epsilon)


def stencil_report(mask: SupportMask, axis: int) -> dict:
    """Counts of support nodes by derivative stencil along ``axis``:
    full central stencil, one-sided at the support boundary, or no valid
    stencil at all (isolated along the ray)."""
    m = mask.mask
    mp = _shifted(m, axis, +1, fill=False)
    mm = _shifted(m, axis, -1, fill=False)
    return {
        "n_support": int(m.sum()),
        "n_central": int((m & mp & mm).sum()),
        "n_one_sided": int((m & (mp ^ mm)).sum()),
        "n_undefined": int((m & ~mp & ~mm).sum()),
    }


def _masked_directional_derivative(f: np.ndarray, m: np.ndarray, axis: int,
                                   h: float) -> np.ndarray:
    """d f / d axis on the mask: central where both neighbors are in the mask,
    one-sided where only one is, zero where neither is (reported separately)."""
    fp = _shifted(f, axis, +1)
    fm = _shifted(f, axis, -1)
    mp = _shifted(m, axis, +1, fill=False)
    mm = _shifted(m, axis, -1, fill=False)
    d = np.zeros_like(f)
    central = m & mp & mm
    fwd = m & mp & ~mm
    bwd = m & ~mp & mm
    d[central] = (fp[central] - fm[central]) / (2.0 * h)
    d[fwd] = (fp[fwd] - f[fwd]) / h
    d[bwd] = (f[bwd] - fm[bwd]) / h
    return d


def recover_mu_t(data: IlluminationDataSet, epsilon: float | None = None,
                 smooth_sigma: float = 0.0) -> tuple[ScalarField, SupportMask]:
    """Transport coefficient from an opposite beam pair.

    mu_t = 1/2 * <direction, grad log(P_2/P_1)> on the support, zero outside.
    ``smooth_sigma`` > 0 applies a Gaussian pre-filter (in cells) to both
    pressures before the quotient; use :func:`stencil_report` on the returned
    mask for the one-sided / undefined node counts.
    """
    axis, sign = require_opposite_pair(data.beams)
    p1 = data.pressures[0].values
    p2 = data.pressures[1].values
    if smooth_sigma > 0:
        p1 = gaussian_filter(p1, smooth_sigma)
        p2 = gaussian_filter(p2, smooth_sigma)
    mask = support_mask(ScalarField(data.geometry, p1), ScalarField(data.geometry, p2),
                        epsilon=epsilon)
    m = mask.mask
    if not m.any():
        raise EmptySupport(f"no nodes above support threshold {mask.epsilon:.3e}")
    logq = np.log(np.where(m, p2, 1.0)) - np.log(np.where(m, p1, 1.0))
    d = _masked_directional_derivative(logq, m, axis, data.geometry.spacing[axis])
    return ScalarField(data.geometry, 0.5 * sign * d), mask


def _profile_values(entry) -> np.ndarray:
    return entry.samples if isinstance(entry, Profile1D) else entry.values


def recover_gamma_mu_a(data: IlluminationDataSet, mu_t: ScalarField,
                       mask: SupportMask | None = None) -> ScalarField:
    """Grueneisen-absorption product via the geometric mean of the pressures.

    Needs the (zero-extended) mu_t field to undo the full-line attenuation;
    exact wherever the actual transport coefficient vanishes outside the
    support.  The result is zero exactly where P_1 * P_2 = 0.
    """
    axis, _sign = require_opposite_pair(data.beams)
    if mu_t.geometry != data.geometry:
        raise GeometryMismatch("mu_t geometry differs from data geometry")
    if mask is not None and mask.geometry != data.geometry:
        raise GeometryMismatch("mask geometry differs from data geometry")
    b1 = profile_array(data.beams[0], data.geometry)
    b2 = profile_array(data.beams[1], data.geometry)
    prod = data.pressures[0].values * data.pressures[1].values
    denom = np.expand_dims(b1 * b2, axis=axis)
    full_depth = np.expand_dims(line_integral(mu_t, axis), axis=axis)
    return ScalarField(data.geometry, np.sqrt(prod / denom) * np.exp(0.5 * full_depth))


def recover_gamma_mu_a_with_transmission(data: IlluminationDataSet,
                                         variant: str = "t2") -> ScalarField:
    """gamma*mu_a from pressures plus the measured transmission fluences.

    variant "t2" divides by profile_1 * transmission_2, variant "t1" by
    transmission_1 * profile_2; both agree to roundoff because the full line
    integral is direction independent.  No mu_t field or zero-extension
    assumption is needed.
    """
    axis, _sign = require_opposite_pair(data.beams)
    if data.transmissions is None:
        raise TransmissionRequired("dataset carries no transmission fluences")
    if variant not in ("t1", "t2"):
        raise ValidationError(f"variant must be 't1' or 't2', got {variant!r}")
    b1 = profile_array(data.beams[0], data.geometry)
    b2 = profile_array(data.beams[1], data.geometry)
    t1 = _profile_values(data.transmissions[0])
    t2 = _profile_values(data.transmissions[1])
    for name, t in (("transmission_1", t1), ("transmission_2", t2)):
        if t.shape != b1.shape:
            raise GeometryMismatch(f"{name} shape {t.shape} does not match the entry plane")
        if np.any(t <= 0):
            raise ValidationError(f"{name} must be strictly positive")
    denom = b1 * t2 if variant == "t2" else t1 * b2
    prod = data.pressures[0].values * data.pressures[1].values
    return ScalarField(data.geometry, np.sqrt(prod / np.expand_dims(denom, axis=axis)))


@dataclass(frozen=True)
class ReconstructionResult:
    """Recovered mu_t and gamma*mu_a with their support mask and diagnostics.

    ``gamma_mu_a`` is the transmission-based field when transmissions are
    available, otherwise the direct variant; ``gamma_mu_a_direct`` always
    holds the direct (line-integral) variant.
    """

    mu_t: ScalarField
    gamma_mu_a: ScalarField
    mask: SupportMask
    diagnostics: dict
    gamma_mu_a_direct: ScalarField


def recover_sectional(data: IlluminationDataSet, epsilon: float | None = None,
                      smooth_sigma: float = 0.0) -> ReconstructionResult:
    """In-plane reconstruction for sectional (2D, +/-x beam) datasets.

    Runs the same numerics as the volumetric operations restricted to the
    illumination plane and packages mask statistics, the gamma variant used,
    and (when both variants exist) their max relative disagreement on the
    support.
    """
    if data.geometry.ndim != 2:
        raise ValidationError("sectional reconstruction expects 2D data")
    axis, _sign = require_opposite_pair(data.beams)
    if axis != 0:
        raise ValidationError("sectional beams must travel along +/-x (axis 0)")
    mu_t, mask = recover_mu_t(data, epsilon=epsilon, smooth_sigma=smooth_sigma)
    gm_direct = recover_gamma_mu_a(data, mu_t, mask)
    diagnostics = dict(stencil_report(mask, axis))
    diagnostics["epsilon"] = mask.epsilon
    diagnostics["smooth_sigma"] = smooth_sigma
    if data.transmissions is not None:
        gm = recover_gamma_mu_a_with_transmission(data)
        m = mask.mask
        denom = np.where(m, np.abs(gm.values), 1.0)
        diagnostics["gamma_variant"] = "transmission"
        diagnostics["gamma_variant_disagreement"] = float(
            np.max(np.where(m, np.abs(gm.values - gm_direct.values), 0.0) / denom))
    else:
        gm = gm_direct
        diagnostics["gamma_variant"] = "direct"
    return ReconstructionResult(mu_t=mu_t, gamma_mu_a=gm, mask=mask,
                                diagnostics=diagnostics, gamma_mu_a_direct=gm_direct)


# --- path integration ---------------------------------------------------------

def _check_grad_pair(grad) -> tuple[np.ndarray, np.ndarray, GridGeometry]:
    if len(grad) != 2:
        raise ValidationError("gradient field must have one component per axis (2D)")
    gx, gy = grad
    if gx.geometry != gy.geometry:
        raise GeometryMismatch("gradient components live on different grids")
    if gx.geometry.ndim != 2:
        raise ValidationError("path integration is 2D only")
    return gx.values, gy.values, gx.geometry


def _rebased_cumtrapz(g: np.ndarray, axis: int, h: float, anchor_idx: int) -> np.ndarray:
    from scipy.integrate import cumulative_trapezoid
    c = cumulative_trapezoid(g, dx=h, axis=axis, initial=0.0)
    ref = np.take(c, anchor_idx, axis=axis)
    return c - np.expand_dims(ref, axis=axis)


def staircase_integrals(grad, anchor: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Integrals of the gradient along the two axis-ordered staircase paths.

    Path A runs x-then-y from the anchor node, path B y-then-x; for a
    consistent (curl-free) gradient they differ by O(h^2).
    """
    gx, gy, geom = _check_grad_pair(grad)
    ia, ja = (int(a) for a in anchor)
    if not (0 <= ia < geom.dims[0] and 0 <= ja < geom.dims[1]):
        raise ValidationError(f"anchor {anchor} outside grid {geom.dims}")
    hx, hy = geom.spacing
    cx = _rebased_cumtrapz(gx, 0, hx, ia)  # integral of gx from row ia, per column
    cy = _rebased_cumtrapz(gy, 1, hy, ja)  # integral of gy from column ja, per row
    a = cx[:, ja][:, None] + cy
    b = cy[ia, :][None, :] + cx
    return a, b


def _bfs_integrate(gx, gy, geom, anchor, anchor_value, mask):
    hx, hy = geom.spacing
    out = np.full(geom.shape, float(anchor_value))
    seen = np.zeros(geom.shape, dtype=bool)
    ia, ja = anchor
    if not mask[ia, ja]:
        raise DisconnectedMask("anchor node is outside the mask")
    seen[ia, ja] = True
    comp = ((gx, hx), (gy, hy))
    queue = deque([(ia, ja)])
    while queue:
        i, j = queue.popleft()
        for axis, (di, dj) in enumerate(((1, 0), (0, 1))):
            g, h = comp[axis]
            for step in (1, -1):
                ni, nj = i + step * di, j + step * dj
                if 0 <= ni < geom.dims[0] and 0 <= nj < geom.dims[1] \
                        and mask[ni, nj] and not seen[ni, nj]:
                    out[ni, nj] = out[i, j] + step * h * (g[i, j] + g[ni, nj]) / 2.0
                    seen[ni, nj] = True
                    queue.append((ni, nj))
    if np.any(mask & ~seen):
        raise DisconnectedMask(
            f"{int((mask & ~seen).sum())} mask nodes unreachable from the anchor")
    return out


def gradient_path_integrate(grad, anchor: tuple[int, int], anchor_value: float,
                            mask: np.ndarray | None = None) -> ScalarField:
    """Potential whose discrete gradient matches ``grad``, anchored at a node.

    On the full grid (mask=None) the result averages the two axis-ordered
    staircase paths, which symmetrizes the O(h^2) path error.  With a mask,
    integration follows a breadth-first spanning tree inside the mask
    (raises :class:`DisconnectedMask` if parts of it cannot be reached);
    nodes outside the mask are set to the anchor value.
    """
    gx, gy, geom = _check_grad_pair(grad)
    ia, ja = (int(a) for a in anchor)
    if not (0 <= ia < geom.dims[0] and 0 <= ja < geom.dims[1]):
        raise ValidationError(f"anchor {anchor} outside grid {geom.dims}")
    if mask is None:
        a, b = staircase_integrals(grad, (ia, ja))
        return ScalarField(geom, anchor_value + 0.5 * (a + b))
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != geom.shape:
        raise GeometryMismatch("mask shape does not match gradient grid")
    out = _bfs_integrate(gx, gy, geom, (ia, ja), anchor_value, mask)
    return ScalarField(geom, out)


# --- diffusion-model quotient reconstruction -----------------------------------

@dataclass(frozen=True)
class DiffusionQuotientResult:
    """Output of :func:`recover_diffusion_quotient`.

    v      sqrt(sigma) * phi_N
    comb1  gamma * mu_a / sqrt(sigma)
    comb2  lap(v) / v  =  mu_a / sigma + lap(sqrt(sigma)) / sqrt(sigma)
    """

    v: ScalarField
    comb1: ScalarField
    comb2: ScalarField
    well_conditioned: np.ndarray
    diagnostics: dict


def quotient_log_gradient(pressures, cond_cap: float = DEFAULT_COND_CAP,
                          pn_floor_rel: float = 1e-12):
    """Per-node least-squares estimate of grad log(sigma * phi_N^2).

    Each quotient u_i = P_i / P_N contributes the row
    <grad u_i, g> = -lap u_i; nodes where the stacked gradient rows are
    rank-deficient or worse conditioned than ``cond_cap`` are flagged.
    Returns (gx, gy, well_mask, diagnostics).
    """
    pressures = list(pressures)
    if len(pressures) < 3:
        raise DegenerateIlluminations(
            f"need at least 3 illuminations in 2D (N-1 >= 2 gradients), got {len(pressures)}")
    geom = pressures[0].geometry
    if geom.ndim != 2:
        raise ValidationError("quotient reconstruction is 2D only")
    for p in pressures[1:]:
        if p.geometry != geom:
            raise GeometryMismatch("pressure fields live on different grids")
    pn = pressures[-1].values
    pn_max = float(pn.max())
    if pn_max <= 0:
        raise EmptySupport("reference pressure P_N vanishes everywhere")
    valid = pn > pn_floor_rel * pn_max
    hx, hy = geom.spacing
    nx, ny = geom.dims

    grads = []
    laps = []
    safe_pn = np.where(valid, pn, 1.0)
    for p in pressures[:-1]:
        u = np.where(valid, p.values / safe_pn, 0.0)
        gx = np.gradient(u, hx, axis=0)
        gy = np.gradient(u, hy, axis=1)
        lap = np.zeros_like(u)
        lap[1:-1, 1:-1] = ((u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / hx ** 2
                           + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy ** 2)
        grads.append((gx, gy))
        laps.append(lap)

    neighbors_valid = valid.copy()
    for axis in (0, 1):
        for off in (1, -1):
            neighbors_valid &= _shifted(valid, axis, off, fill=False)
    usable = np.zeros((nx, ny), dtype=bool)
    usable[1:-1, 1:-1] = neighbors_valid[1:-1, 1:-1]

    n_rows = len(grads)
    A = np.stack([np.stack([g[0][usable], g[1][usable]], axis=-1) for g in grads], axis=1)
    rhs = np.stack([-lap[usable] for lap in laps], axis=1)  # (M, n_rows)

    u_svd, s, vt = np.linalg.svd(A, full_matrices=False)  # s: (M, 2)
    s_peak = float(s[:, 0].max()) if s.size else 0.0
    s_floor = 1e-12 * max(s_peak, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(s[:, 1] > 0, s[:, 0] / np.maximum(s[:, 1], np.finfo(float).tiny),
                        np.inf)
    well_local = (s[:, 1] >= s_floor) & (cond <= cond_cap)

    # pseudo-inverse solve restricted to well-conditioned nodes
    coeff = np.einsum("mri,mr->mi", u_svd, rhs)  # U^T b, (M, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(well_local[:, None], coeff / s, 0.0)
    sol = np.einsum("mij,mi->mj", vt, coeff)  # V * (U^T b / s)

    gx_full = np.zeros((nx, ny))
    gy_full = np.zeros((nx, ny))
    well = np.zeros((nx, ny), dtype=bool)
    idx = np.where(usable)
    gx_full[idx] = np.where(well_local, sol[:, 0], 0.0)
    gy_full[idx] = np.where(well_local, sol[:, 1], 0.0)
    well[idx] = well_local
    if not well.any():
        raise DegenerateIlluminations(
            "quotient gradients fail the span/conditioning test at every node")
    n_interior = (nx - 2) * (ny - 2)
    diagnostics = {
        "n_illuminations": len(pressures),
        "n_usable": int(usable.sum()),
        "n_well_conditioned": int(well.sum()),
        "frac_well_interior": float(well.sum() / n_interior),
        "cond_cap": float(cond_cap),
    }
    return gx_full, gy_full, well, diagnostics


def _fill_invalid(arr: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill flagged nodes by repeated averaging of already-valid neighbors."""
    arr = arr.copy()
    valid = valid.copy()
    while not valid.all():
        acc = np.zeros_like(arr)
        cnt = np.zeros(arr.shape)
        for axis in (0, 1):
            for off in (1, -1):
                acc += _shifted(np.where(valid, arr, 0.0), axis, off)
                cnt += _shifted(valid.astype(float), axis, off)
        newly = (~valid) & (cnt > 0)
        arr[newly] = (acc[newly] / cnt[newly])
        valid |= newly
    return arr


def _lap5_edge_replicated(v: np.ndarray, hx: float, hy: float) -> np.ndarray:
    lap = np.zeros_like(v)
    lap[1:-1, 1:-1] = ((v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hx ** 2
                       + (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hy ** 2)
    lap[0, :] = lap[1, :]
    lap[-1, :] = lap[-2, :]
    lap[:, 0] = lap[:, 1]
    lap[:, -1] = lap[:, -2]
    return lap


def recover_diffusion_quotient(pressures, anchor: tuple[int, int],
                               sigma_phi_ref: float,
                               cond_cap: float = DEFAULT_COND_CAP,
                               pn_floor_rel: float = 1e-12) -> DiffusionQuotientResult:
    """Quotient reconstruction for N >= 3 diffusion-model pressure fields.

    ``sigma_phi_ref`` is the known value of sigma * phi_N^2 at the ``anchor``
    node (the one-point initial condition for the path integration).  Flagged
    (ill-conditioned) gradient nodes are filled from their neighbors before
    integration; counts appear in the diagnostics.
    """
    gx, gy, well, diagnostics = quotient_log_gradient(
        pressures, cond_cap=cond_cap, pn_floor_rel=pn_floor_rel)
    geom = pressures[-1].geometry
    pn = pressures[-1].values
    ia, ja = (int(a) for a in anchor)
    if not (0 <= ia < geom.dims[0] and 0 <= ja < geom.dims[1]):
        raise ValidationError(f"anchor {anchor} outside grid {geom.dims}")
    if pn[ia, ja] <= pn_floor_rel * float(pn.max()):
        raise AnchorOutsideSupport(f"reference pressure vanishes at anchor {anchor}")
    if not np.isfinite(sigma_phi_ref) or sigma_phi_ref <= 0:
        raise ValidationError("sigma_phi_ref must be a positive finite value")

    gx = _fill_invalid(gx, well)
    gy = _fill_invalid(gy, well)
    log_s = gradient_path_integrate(
        (ScalarField(geom, gx), ScalarField(geom, gy)), (ia, ja),
        float(np.log(sigma_phi_ref)))
    v = np.exp(0.5 * log_s.values)
    hx, hy = geom.spacing
    comb1 = pn / v
    comb2 = _lap5_edge_replicated(v, hx, hy) / v
    diagnostics = dict(diagnostics)
    diagnostics["n_filled"] = int((~well).sum())
    diagnostics["anchor"] = [ia, ja]
    diagnostics["sigma_phi_ref"] = float(sigma_phi_ref)
    return DiffusionQuotientResult(
        v=ScalarField(geom, v),
        comb1=ScalarField(geom, comb1),
        comb2=ScalarField(geom, comb2),
        well_conditioned=well,
        diagnostics=diagnostics,
    )
