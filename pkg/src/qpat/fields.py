"""Regular-grid scalar fields, phantom generators, and error metrics.

Grids are node-centered: ``origin`` is the physical coordinate of index
(0, ..., 0) and node ``i`` along axis ``k`` sits at ``origin[k] + i*spacing[k]``.
Axis 0 is called x throughout, axis 1 is y, axis 2 (3D only) is z.  Field
values are 64-bit floats stored row-major (C order, last axis fastest).

All field types are immutable after construction; every public operation is a
pure function of its inputs.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import EmptyMask, GeometryMismatch, ValidationError
from .rng import XorShift64Star


@dataclass(frozen=True)
class GridGeometry:
    """Node-centered regular grid with 2 or 3 axes.

    dims     number of nodes per axis (each >= 2)
    spacing  physical cell size per axis (> 0)
    origin   physical coordinate of node (0, ..., 0)
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 2 <= len(dims) <= 3:
            raise ValidationError(f"grid must have 2 or 3 axes, got {len(dims)}")
        if any(d < 2 for d in dims):
            raise ValidationError(f"all dims must be >= 2, got {dims}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != len(dims):
            raise ValidationError("spacing must match dims in length")
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValidationError(f"spacing must be positive and finite, got {spacing}")
        origin = tuple(float(o) for o in self.origin) if self.origin else (0.0,) * len(dims)
        if len(origin) != len(dims):
            raise ValidationError("origin must match dims in length")
        if any(not np.isfinite(o) for o in origin):
            raise ValidationError(f"origin must be finite, got {origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def extent(self) -> tuple[float, ...]:
        """Physical length per axis, (dims[k]-1) * spacing[k]."""
        return tuple((d - 1) * s for d, s in zip(self.dims, self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays of full grid shape (indexing='ij')."""
        return tuple(np.meshgrid(*(self.axis_coords(k) for k in range(self.ndim)),
                                 indexing="ij"))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True, order="C")
    arr.setflags(write=False)
    return arr


class ScalarField:
    """Immutable scalar samples on a :class:`GridGeometry`.

    Accepts values of grid shape or flat row-major order; rejects non-finite
    entries so that every field in the pipeline stays NaN/Inf free.
    """

    __slots__ = ("geometry", "values")

    def __init__(self, geometry: GridGeometry, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != geometry.shape:
            if arr.size != geometry.n_nodes:
                raise ValidationError(
                    f"values length {arr.size} does not match grid {geometry.dims}")
            arr = arr.reshape(geometry.shape)
        if not np.all(np.isfinite(arr)):
            raise ValidationError("field values must be finite (no NaN/Inf)")
        object.__setattr__(self, "geometry", geometry)
        object.__setattr__(self, "values", _freeze(arr))

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @classmethod
    def full(cls, geometry: GridGeometry, value: float) -> "ScalarField":
        return cls(geometry, np.full(geometry.shape, float(value)))

    @classmethod
    def from_function(cls, geometry: GridGeometry, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` on the grid (fn must broadcast over arrays)."""
        return cls(geometry, fn(*geometry.meshgrid()))

    def with_values(self, values) -> "ScalarField":
        """New field on the same geometry."""
        return ScalarField(self.geometry, values)

    def __repr__(self):
        return f"ScalarField(dims={self.geometry.dims}, range=[{self.values.min():.4g}, {self.values.max():.4g}])"


@dataclass(frozen=True)
class Profile1D:
    """Samples along a single grid axis (a beam profile or transmission trace)."""

    samples: np.ndarray
    spacing: float
    origin: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValidationError("profile must be a 1D array with at least 2 samples")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("profile samples must be finite")
        if not np.isfinite(self.spacing) or self.spacing <= 0:
            raise ValidationError("profile spacing must be positive and finite")
        object.__setattr__(self, "samples", _freeze(arr))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", float(self.origin))

    @classmethod
    def from_axis(cls, geometry: GridGeometry, axis: int, samples) -> "Profile1D":
        return cls(samples, geometry.spacing[axis], geometry.origin[axis])

    @property
    def n(self) -> int:
        return self.samples.size

    def coords(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)


@dataclass(frozen=True)
class Phantom:
    """Ground-truth material triple (gamma, mu_a, mu_s) on one grid.

    gamma is the Grueneisen parameter (dimensionless, > 0), mu_a the
    absorption and mu_s the scattering coefficient (1/length, >= 0).
    """

    geometry: GridGeometry
    gamma: ScalarField
    mu_a: ScalarField
    mu_s: ScalarField

    def __post_init__(self):
        for name in ("gamma", "mu_a", "mu_s"):
            f = getattr(self, name)
            if f.geometry != self.geometry:
                raise GeometryMismatch(f"{name} geometry differs from phantom geometry")
        if np.any(self.gamma.values <= 0):
            raise ValidationError("gamma must be strictly positive everywhere")
        if np.any(self.mu_a.values < 0):
            raise ValidationError("mu_a must be nonnegative everywhere")
        if np.any(self.mu_s.values < 0):
            raise ValidationError("mu_s must be nonnegative everywhere")

    @property
    def mu_t(self) -> ScalarField:
        """Transport coefficient mu_a + mu_s."""
        return ScalarField(self.geometry, self.mu_a.values + self.mu_s.values)

    @property
    def gamma_mu_a(self) -> ScalarField:
        return ScalarField(self.geometry, self.gamma.values * self.mu_a.values)


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for :func:`make_phantom`: generator kind, geometry, seed, params."""

    kind: str
    geometry: GridGeometry
    seed: int = 0
    params: dict = dc_field(default_factory=dict)


PHANTOM_KINDS = ("uniform", "slab", "gaussian-blobs", "checker")

_PARAM_NAMES = {
    "uniform": {"gamma", "mu_a", "mu_s"},
    "slab": {"axis", "lo", "hi", "gamma_in", "gamma_out",
             "mu_a_in", "mu_a_out", "mu_s_in", "mu_s_out"},
    "gaussian-blobs": {"n_blobs", "gamma_bg", "gamma_amp", "mu_a_bg", "mu_a_amp",
                       "mu_s_bg", "mu_s_amp", "width_range", "center_margin"},
    "checker": {"tiles", "gamma", "mu_a", "mu_s"},
}


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Build a deterministic phantom from a spec.

    Generators draw any randomness from a seeded xorshift64* stream and
    evaluate analytic profiles on the grid, so the same spec on a refined
    grid samples the same continuum phantom.
    """
    if spec.kind not in PHANTOM_KINDS:
        raise ValidationError(f"unknown phantom kind {spec.kind!r}; choose from {PHANTOM_KINDS}")
    unknown = set(spec.params) - _PARAM_NAMES[spec.kind]
    if unknown:
        raise ValidationError(f"unknown parameters for kind {spec.kind!r}: {sorted(unknown)}")
    builder = {
        "uniform": _uniform_phantom,
        "slab": _slab_phantom,
        "gaussian-blobs": _blob_phantom,
        "checker": _checker_phantom,
    }[spec.kind]
    return builder(spec.geometry, spec.seed, **spec.params)


def _check_coeff(name: str, value: float, strict: bool = False) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        kind = "positive" if strict else "nonnegative"
        raise ValidationError(f"{name} must be {kind}, got {value}")
    return value


def _uniform_phantom(geom, seed, gamma=1.0, mu_a=0.0, mu_s=0.0):
    gamma = _check_coeff("gamma", gamma, strict=True)
    mu_a = _check_coeff("mu_a", mu_a)
    mu_s = _check_coeff("mu_s", mu_s)
    return Phantom(geom, ScalarField.full(geom, gamma),
                   ScalarField.full(geom, mu_a), ScalarField.full(geom, mu_s))


def _slab_phantom(geom, seed, axis=0, lo=0.25, hi=0.75,
                  gamma_in=1.0, gamma_out=1.0,
                  mu_a_in=0.5, mu_a_out=0.0,
                  mu_s_in=0.0, mu_s_out=0.0):
    """Band of constant coefficients between fractions lo..hi of the axis extent."""
    axis = int(axis)
    if not 0 <= axis < geom.ndim:
        raise ValidationError(f"slab axis {axis} out of range for {geom.ndim}D grid")
    if not 0.0 <= lo < hi <= 1.0:
        raise ValidationError(f"slab band must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]")
    vals = {}
    for name, v_in, v_out in (("gamma", gamma_in, gamma_out),
                              ("mu_a", mu_a_in, mu_a_out),
                              ("mu_s", mu_s_in, mu_s_out)):
        strict = name == "gamma"
        v_in = _check_coeff(name + "_in", v_in, strict)
        v_out = _check_coeff(name + "_out", v_out, strict)
        vals[name] = (v_in, v_out)
    coord = geom.axis_coords(axis)
    x0, x1 = coord[0], coord[-1]
    inside1d = (coord >= x0 + lo * (x1 - x0)) & (coord <= x0 + hi * (x1 - x0))
    shape = [1] * geom.ndim
    shape[axis] = geom.dims[axis]
    inside = np.broadcast_to(inside1d.reshape(shape), geom.shape)

    def band(v_in, v_out):
        return ScalarField(geom, np.where(inside, v_in, v_out))

    return Phantom(geom, band(*vals["gamma"]), band(*vals["mu_a"]), band(*vals["mu_s"]))


def _blob_phantom(geom, seed, n_blobs=3,
                  gamma_bg=1.0, gamma_amp=0.5,
                  mu_a_bg=0.05, mu_a_amp=0.3,
                  mu_s_bg=0.05, mu_s_amp=0.5,
                  width_range=(0.08, 0.18), center_margin=0.2):
    """Smooth positive fields: background plus isotropic Gaussian bumps.

    Blob centers/widths/amplitudes are drawn in physical units from the grid
    extent, so refining the grid resamples the same smooth phantom.
    """
    n_blobs = int(n_blobs)
    if n_blobs < 0:
        raise ValidationError("n_blobs must be >= 0")
    wlo, whi = (float(w) for w in width_range)
    if not 0 < wlo <= whi:
        raise ValidationError(f"width_range must be 0 < lo <= hi, got {width_range}")
    margin = float(center_margin)
    if not 0.0 <= margin < 0.5:
        raise ValidationError("center_margin must be in [0, 0.5)")
    for name, bg, amp, strict in (("gamma", gamma_bg, gamma_amp, True),
                                  ("mu_a", mu_a_bg, mu_a_amp, False),
                                  ("mu_s", mu_s_bg, mu_s_amp, False)):
        _check_coeff(name + "_bg", bg, strict)
        _check_coeff(name + "_amp", amp)

    rng = XorShift64Star(seed)
    mesh = geom.meshgrid()
    ext = geom.extent
    scale = min(ext)

    def bumps(bg, amp):
        f = np.full(geom.shape, float(bg))
        for _ in range(n_blobs):
            center = [geom.origin[k] + rng.uniform(margin, 1.0 - margin) * ext[k]
                      for k in range(geom.ndim)]
            width = rng.uniform(wlo, whi) * scale
            a = rng.uniform(0.4, 1.0) * amp
            r2 = sum((mesh[k] - center[k]) ** 2 for k in range(geom.ndim))
            f = f + a * np.exp(-r2 / (2.0 * width ** 2))
        return ScalarField(geom, f)

    return Phantom(geom, bumps(gamma_bg, gamma_amp),
                   bumps(mu_a_bg, mu_a_amp), bumps(mu_s_bg, mu_s_amp))


def _checker_phantom(geom, seed, tiles=4,
                     gamma=(1.0, 1.5), mu_a=(0.1, 0.4), mu_s=(0.2, 0.1)):
    """Checkerboard alternating between two coefficient sets."""
    tiles = int(tiles)
    if tiles < 1:
        raise ValidationError("tiles must be >= 1")
    pairs = {}
    for name, pair, strict in (("gamma", gamma, True), ("mu_a", mu_a, False),
                               ("mu_s", mu_s, False)):
        a, b = (float(v) for v in pair)
        pairs[name] = (_check_coeff(name, a, strict), _check_coeff(name, b, strict))
    parity = np.zeros(geom.shape, dtype=np.int64)
    for k in range(geom.ndim):
        frac = np.arange(geom.dims[k]) / geom.dims[k]
        tile = np.minimum((frac * tiles).astype(np.int64), tiles - 1)
        shape = [1] * geom.ndim
        shape[k] = geom.dims[k]
        parity = parity + tile.reshape(shape)
    even = parity % 2 == 0

    def pick(pair):
        return ScalarField(geom, np.where(even, pair[0], pair[1]))

    return Phantom(geom, pick(pairs["gamma"]), pick(pairs["mu_a"]), pick(pairs["mu_s"]))


# --- metrics ----------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    """Relative L2 and max-abs errors over the full grid and a mask."""

    rel_l2: float
    max_abs: float
    rel_l2_masked: float
    max_abs_masked: float
    n_total: int
    n_masked: int

    def as_dict(self) -> dict:
        return {
            "rel_l2": self.rel_l2,
            "max_abs": self.max_abs,
            "rel_l2_masked": self.rel_l2_masked,
            "max_abs_masked": self.max_abs_masked,
            "n_total": self.n_total,
            "n_masked": self.n_masked,
        }


def _rel_l2(diff: np.ndarray, ref: np.ndarray) -> float:
    denom = float(np.linalg.norm(ref.ravel()))
    num = float(np.linalg.norm(diff.ravel()))
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / denom


def field_metrics(recon: ScalarField, truth: ScalarField,
                  mask: np.ndarray | None = None) -> MetricsReport:
    """Error report for a reconstruction against the ground truth.

    ``mask`` selects the nodes for the masked variants (default: all nodes);
    it must be nonempty.  Metrics on the mask equal metrics of the fields
    restricted to the masked nodes.
    """
    if recon.geometry != truth.geometry:
        raise GeometryMismatch("recon and truth fields live on different grids")
    if mask is None:
        mask = np.ones(recon.geometry.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != recon.geometry.shape:
        raise GeometryMismatch("mask shape does not match field grid")
    if not mask.any():
        raise EmptyMask("metrics mask selects no nodes")
    diff = recon.values - truth.values
    return MetricsReport(
        rel_l2=_rel_l2(diff, truth.values),
        max_abs=float(np.max(np.abs(diff))),
        rel_l2_masked=_rel_l2(diff[mask], truth.values[mask]),
        max_abs_masked=float(np.max(np.abs(diff[mask]))),
        n_total=recon.geometry.n_nodes,
        n_masked=int(mask.sum()),
    )


def interior_margin_mask(geometry: GridGeometry, margin_cells: int) -> np.ndarray:
    """Boolean mask excluding a band of ``margin_cells`` nodes at every face."""
    if margin_cells < 0:
        raise ValidationError("margin must be >= 0")
    mask = np.zeros(geometry.shape, dtype=bool)
    sl = tuple(slice(margin_cells, d - margin_cells) for d in geometry.dims)
    if all(s.start < s.stop for s in sl):
        mask[sl] = True
    return mask


def physical_box_mask(geometry: GridGeometry, fraction: float) -> np.ndarray:
    """Mask of nodes at least ``fraction`` of each extent away from every face."""
    if not 0.0 <= fraction < 0.5:
        raise ValidationError("fraction must be in [0, 0.5)")
    mask = np.ones(geometry.shape, dtype=bool)
    for k in range(geometry.ndim):
        c = geometry.axis_coords(k)
        lo = c[0] + fraction * (c[-1] - c[0])
        hi = c[-1] - fraction * (c[-1] - c[0])
        sel = (c >= lo) & (c <= hi)
        shape = [1] * geometry.ndim
        shape[k] = geometry.dims[k]
        mask &= sel.reshape(shape)
    return mask
