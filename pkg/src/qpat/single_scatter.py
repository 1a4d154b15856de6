"""Closed-form single-scattering light transport.

A collimated beam travels along an axis-aligned unit direction; photons are
attenuated by the transport coefficient mu_t = mu_a + mu_s and scattered
photons are treated as lost.  The fluence is then pure Beer-Lambert decay of
the entry profile:

    fluence(x) = profile(x_perp) * exp(-integral of mu_t along the ray up to x)

Ray integrals use the composite trapezoid rule on grid nodes (the medium is
taken to vanish outside the grid, so the ray integral starts at the entry
face).  Exponentials are always taken of the cumulative integral per node,
never chained per cell, which keeps the two-sided product identity

    fluence_+(x) * fluence_-(x) = profile_+ * profile_- * exp(-full line integral)

exact at node level.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (BeamPairMismatch, GeometryMismatch, UnsupportedDirection,
                     ValidationError)
from .fields import GridGeometry, Phantom, Profile1D, ScalarField


def _axis_sign(direction) -> tuple[int, int]:
    d = np.asarray(direction, dtype=np.float64)
    if d.ndim != 1 or d.size not in (2, 3) or not np.all(np.isfinite(d)):
        raise UnsupportedDirection(f"direction must be a finite 2- or 3-vector, got {direction!r}")
    nonzero = np.nonzero(d)[0]
    if nonzero.size != 1 or abs(d[nonzero[0]]) != 1.0:
        raise UnsupportedDirection(
            f"direction must be +/- a coordinate axis unit vector, got {tuple(d)}")
    axis = int(nonzero[0])
    return axis, int(np.sign(d[axis]))


@dataclass(frozen=True)
class Beam:
    """One illumination: axis-aligned unit direction plus entry-plane fluence.

    ``direction`` is the direction of photon travel (the laser sits at
    -infinity * direction).  ``profile`` holds the initial fluence on the
    entry plane: a :class:`Profile1D` for 2D grids, a 2D :class:`ScalarField`
    for 3D grids.  Profiles must be strictly positive.
    """

    direction: tuple[float, ...]
    profile: "Profile1D | ScalarField"

    def __post_init__(self):
        axis, sign = _axis_sign(self.direction)
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if isinstance(self.profile, Profile1D):
            samples = self.profile.samples
        elif isinstance(self.profile, ScalarField):
            samples = self.profile.values
        else:
            raise ValidationError("beam profile must be a Profile1D or ScalarField")
        if np.any(samples <= 0):
            raise ValidationError("beam profile must be strictly positive")

    @property
    def axis(self) -> int:
        return _axis_sign(self.direction)[0]

    @property
    def sign(self) -> int:
        return _axis_sign(self.direction)[1]

    @property
    def ndim(self) -> int:
        return len(self.direction)

    def flipped(self, profile=None) -> "Beam":
        """Beam travelling in the exact opposite direction."""
        d = tuple(-v for v in self.direction)
        return Beam(d, self.profile if profile is None else profile)


def transverse_geometry(geometry: GridGeometry, axis: int):
    """Geometry of the entry plane: the grid with ``axis`` removed.

    Returns a (spacing, origin) pair plus dims tuple for 2D grids (a single
    transverse axis) or a full :class:`GridGeometry` for 3D grids.
    """
    keep = [k for k in range(geometry.ndim) if k != axis]
    if len(keep) == 1:
        k = keep[0]
        return (geometry.dims[k],), (geometry.spacing[k],), (geometry.origin[k],)
    return (tuple(geometry.dims[k] for k in keep),
            tuple(geometry.spacing[k] for k in keep),
            tuple(geometry.origin[k] for k in keep))


def profile_array(beam: Beam, geometry: GridGeometry) -> np.ndarray:
    """Validate the beam profile against a grid and return it as an array
    shaped like the grid with the beam axis removed."""
    if beam.ndim != geometry.ndim:
        raise GeometryMismatch(
            f"beam direction has {beam.ndim} components for a {geometry.ndim}D grid")
    axis = beam.axis
    dims, spacing, origin = transverse_geometry(geometry, axis)
    if isinstance(beam.profile, Profile1D):
        if geometry.ndim != 2:
            raise GeometryMismatch("Profile1D beam profiles require a 2D grid")
        p = beam.profile
        if p.n != dims[0] or p.spacing != spacing[0] or p.origin != origin[0]:
            raise GeometryMismatch(
                f"profile axis ({p.n} @ {p.spacing}) does not match the entry plane "
                f"({dims[0]} @ {spacing[0]})")
        return p.samples
    pg = beam.profile.geometry
    if geometry.ndim != 3:
        raise GeometryMismatch("ScalarField beam profiles require a 3D grid")
    if pg.dims != dims or pg.spacing != spacing or pg.origin != origin:
        raise GeometryMismatch("profile geometry does not match the entry plane")
    return beam.profile.values


def _expand(transverse: np.ndarray, axis: int) -> np.ndarray:
    return np.expand_dims(transverse, axis=axis)


def _cumulative(values: np.ndarray, axis: int, sign: int, h: float) -> np.ndarray:
    """Trapezoid integral from the entry face up to each node along the ray."""
    if sign > 0:
        return cumulative_trapezoid(values, dx=h, axis=axis, initial=0.0)
    rev = np.flip(values, axis=axis)
    c = cumulative_trapezoid(rev, dx=h, axis=axis, initial=0.0)
    return np.flip(c, axis=axis)


def attenuation_integral(mu_t: ScalarField, beam: Beam) -> ScalarField:
    """Cumulative optical depth along the beam at every node.

    Node j on a ray holds the trapezoid integral of mu_t over all samples
    between the entry face and j (inclusive); the exterior contributes zero.
    """
    if np.any(mu_t.values < 0):
        raise ValidationError("mu_t must be nonnegative")
    profile_array(beam, mu_t.geometry)  # validates direction/profile vs grid
    axis, sign = beam.axis, beam.sign
    c = _cumulative(mu_t.values, axis, sign, mu_t.geometry.spacing[axis])
    return ScalarField(mu_t.geometry, c)


def line_integral(mu_t: ScalarField, axis: int) -> np.ndarray:
    """Full-line trapezoid integral of mu_t along ``axis`` (transverse-shaped).

    Direction independent: both opposite beams see the same total depth.
    """
    h = mu_t.geometry.spacing[axis]
    return np.trapezoid(mu_t.values, dx=h, axis=axis)


def fluence(mu_t: ScalarField, beam: Beam) -> ScalarField:
    """Beer-Lambert fluence of a single beam through the medium."""
    prof = profile_array(beam, mu_t.geometry)
    depth = attenuation_integral(mu_t, beam).values
    return ScalarField(mu_t.geometry, _expand(prof, beam.axis) * np.exp(-depth))


def transmission(mu_t: ScalarField, beam: Beam):
    """Fluence profile behind the object: entry profile times full-line decay.

    Returns a :class:`Profile1D` on 2D grids, a transverse 2D
    :class:`ScalarField` on 3D grids.
    """
    prof = profile_array(beam, mu_t.geometry)
    axis = beam.axis
    out = prof * np.exp(-line_integral(mu_t, axis))
    geom = mu_t.geometry
    dims, spacing, origin = transverse_geometry(geom, axis)
    if geom.ndim == 2:
        return Profile1D(out, spacing[0], origin[0])
    return ScalarField(GridGeometry(dims, spacing, origin), out)


@dataclass(frozen=True)
class IlluminationDataSet:
    """N beams with their internal pressure fields and optional transmissions."""

    beams: tuple[Beam, ...]
    pressures: tuple[ScalarField, ...]
    transmissions: tuple | None = None

    def __post_init__(self):
        beams = tuple(self.beams)
        pressures = tuple(self.pressures)
        object.__setattr__(self, "beams", beams)
        object.__setattr__(self, "pressures", pressures)
        if len(beams) < 1 or len(beams) != len(pressures):
            raise ValidationError(
                f"need equally many beams and pressures (>= 1), got {len(beams)}/{len(pressures)}")
        geom = pressures[0].geometry
        for p in pressures[1:]:
            if p.geometry != geom:
                raise GeometryMismatch("all pressure fields must share one geometry")
        for p in pressures:
            if np.any(p.values < 0):
                raise ValidationError("pressure fields must be nonnegative")
        for b in beams:
            profile_array(b, geom)
        if self.transmissions is not None:
            trans = tuple(self.transmissions)
            object.__setattr__(self, "transmissions", trans)
            if len(trans) != len(beams):
                raise ValidationError("transmissions must match beams in length")

    @property
    def n(self) -> int:
        return len(self.beams)

    @property
    def geometry(self) -> GridGeometry:
        return self.pressures[0].geometry


def require_opposite_pair(beams) -> tuple[int, int]:
    """Check that two beams travel in exactly opposite axis directions.

    Returns (axis, sign of the first beam).
    """
    if len(beams) != 2:
        raise BeamPairMismatch(f"expected exactly 2 beams, got {len(beams)}")
    b1, b2 = beams
    if b1.ndim != b2.ndim or b1.axis != b2.axis or b1.sign != -b2.sign:
        raise BeamPairMismatch(
            f"beams must be exact opposites, got {b1.direction} and {b2.direction}")
    return b1.axis, b1.sign


def synthesize_pressures(phantom: Phantom, beams) -> IlluminationDataSet:
    """Initial pressures gamma*mu_a*fluence for an opposite beam pair.

    The returned dataset has N = 2 and carries the transmission profiles
    measured behind the object for both beams.  Pressures vanish exactly
    where mu_a does.
    """
    require_opposite_pair(beams)
    mu_t = phantom.mu_t
    absorbed = phantom.gamma.values * phantom.mu_a.values
    pressures = []
    trans = []
    for beam in beams:
        phi = fluence(mu_t, beam)
        p = np.where(phantom.mu_a.values == 0.0, 0.0, absorbed * phi.values)
        pressures.append(ScalarField(phantom.geometry, p))
        trans.append(transmission(mu_t, beam))
    return IlluminationDataSet(tuple(beams), tuple(pressures), tuple(trans))


def fluences_for_pair(phantom: Phantom, beams) -> tuple[ScalarField, ScalarField]:
    """Both beam fluences (useful for inspection and file output)."""
    require_opposite_pair(beams)
    mu_t = phantom.mu_t
    return fluence(mu_t, beams[0]), fluence(mu_t, beams[1])


def directional_residual(phi: ScalarField, mu_t: ScalarField, beam: Beam) -> ScalarField:
    """Discrete transport residual <direction, grad phi> + mu_t * phi.

    Central differences along the beam axis in the interior, one-sided at the
    two end faces; for the exact Beer-Lambert fluence the interior residual
    is O(h^2).
    """
    if phi.geometry != mu_t.geometry:
        raise GeometryMismatch("fluence and mu_t must share a geometry")
    axis, sign = beam.axis, beam.sign
    h = phi.geometry.spacing[axis]
    d = np.gradient(phi.values, h, axis=axis)
    return ScalarField(phi.geometry, sign * d + mu_t.values * phi.values)


def extract_plane(data: IlluminationDataSet, plane_axis: int, index: int) -> IlluminationDataSet:
    """Restrict a 3D dataset to one grid plane, yielding a 2D dataset.

    The beams must not travel along ``plane_axis``; their 2D profiles are
    sliced to 1D profiles on the remaining transverse axis.
    """
    geom = data.geometry
    if geom.ndim != 3:
        raise ValidationError("extract_plane needs a 3D dataset")
    if not 0 <= plane_axis < 3:
        raise ValidationError(f"plane_axis {plane_axis} out of range")
    if not 0 <= index < geom.dims[plane_axis]:
        raise ValidationError(f"plane index {index} out of range")
    keep = [k for k in range(3) if k != plane_axis]
    geom2d = GridGeometry(tuple(geom.dims[k] for k in keep),
                          tuple(geom.spacing[k] for k in keep),
                          tuple(geom.origin[k] for k in keep))
    sl = [slice(None)] * 3
    sl[plane_axis] = index

    beams2d = []
    for beam in data.beams:
        if beam.axis == plane_axis:
            raise ValidationError("cannot slice along the beam axis")
        # profile lives on the two transverse axes; drop the plane axis from it
        t_axes = [k for k in range(3) if k != beam.axis]
        p_slice = [slice(None)] * 2
        p_slice[t_axes.index(plane_axis)] = index
        samples = beam.profile.values[tuple(p_slice)]
        keep2d_axis = [k for k in t_axes if k != plane_axis][0]
        prof = Profile1D(samples, geom.spacing[keep2d_axis], geom.origin[keep2d_axis])
        d2 = tuple(beam.direction[k] for k in keep)
        beams2d.append(Beam(d2, prof))

    pressures2d = tuple(ScalarField(geom2d, p.values[tuple(sl)]) for p in data.pressures)
    trans2d = None
    if data.transmissions is not None:
        trans2d = []
        for beam, t in zip(data.beams, data.transmissions):
            t_axes = [k for k in range(3) if k != beam.axis]
            p_slice = [slice(None)] * 2
            p_slice[t_axes.index(plane_axis)] = index
            keep2d_axis = [k for k in t_axes if k != plane_axis][0]
            trans2d.append(Profile1D(t.values[tuple(p_slice)],
                                     geom.spacing[keep2d_axis], geom.origin[keep2d_axis]))
        trans2d = tuple(trans2d)
    return IlluminationDataSet(tuple(beams2d), pressures2d, trans2d)
