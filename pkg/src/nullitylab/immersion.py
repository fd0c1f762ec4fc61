"""Immersions of the flat unit m-disk into R^d.

Every immersion is an :class:`ImmersionSpec`.  The built-in analytic
families supply exact jacobians and hessians; :class:`SampledGrid` and the
:func:`central_difference` wrapper supply finite-difference jets instead.

All array-valued internals are batched: points are ``(N, m)`` arrays,
values ``(N, d)``, jacobians ``(N, d, m)`` and hessians ``(N, d, m, m)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

from .errors import ConstructionError, DomainError, MarginError, ValidationError

DISK_SLACK = 1e-12

SAMPLED_GRID_FORMAT = "nullitylab.sampled-grid"
SAMPLED_GRID_VERSION = 1


@dataclass(frozen=True)
class DomainGrid:
    """Axis-aligned grid over ``[-1, 1]^m`` with a circular membership mask.

    Nodes are ordered row-major (the last coordinate varies fastest).
    ``resolution`` must be odd so the disk center is a node.
    """

    m: int
    resolution: int

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError(f"domain dimension must be >= 1, got {self.m}")
        if self.resolution < 3 or self.resolution % 2 == 0:
            raise ValidationError(
                f"resolution must be odd and >= 3, got {self.resolution}")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.resolution - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.m

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.resolution)

    @cached_property
    def nodes(self) -> np.ndarray:
        """All cube nodes, shape ``(resolution**m, m)``."""
        mesh = np.meshgrid(*([self.axis] * self.m), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @cached_property
    def mask(self) -> np.ndarray:
        """Membership flags of the cube nodes in the closed unit disk."""
        return np.linalg.norm(self.nodes, axis=1) <= 1.0 + DISK_SLACK

    @cached_property
    def points(self) -> np.ndarray:
        """Masked-in nodes, in row-major order."""
        return self.nodes[self.mask]

    @cached_property
    def flat_index(self) -> np.ndarray:
        """Cube index of every masked-in node."""
        return np.flatnonzero(self.mask)

    @cached_property
    def center_index(self) -> int:
        """Position of the center node within :attr:`points`."""
        return int(np.argmin(np.linalg.norm(self.points, axis=1)))

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """For each masked node, positions (in :attr:`points`) of its
        ``3**m - 1`` grid neighbors; ``-1`` marks a neighbor off the mask."""
        res = self.resolution
        cube_to_point = np.full(res ** self.m, -1, dtype=np.int64)
        cube_to_point[self.flat_index] = np.arange(len(self.flat_index))
        multi = np.stack(np.unravel_index(self.flat_index, self.shape), axis=1)
        offsets = [o for o in product((-1, 0, 1), repeat=self.m) if any(o)]
        table = np.full((len(multi), len(offsets)), -1, dtype=np.int64)
        for j, off in enumerate(offsets):
            nb = multi + np.asarray(off)
            inside = np.all((nb >= 0) & (nb < res), axis=1)
            flat = np.ravel_multi_index(tuple(np.clip(nb, 0, res - 1).T), self.shape)
            table[:, j] = np.where(inside, cube_to_point[flat], -1)
        return table

    @cached_property
    def boundary_flags(self) -> np.ndarray:
        """Masked nodes having at least one neighbor off the mask."""
        return np.any(self.neighbor_table < 0, axis=1)


def _as_points(x, m: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != m:
        raise ValidationError(f"expected points of dimension {m}, got shape {np.shape(x)}")
    return arr


def _check_in_disk(X: np.ndarray) -> None:
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1.0 + DISK_SLACK):
        raise DomainError(f"point outside the unit disk (|x| = {norms.max():.6g})")


@dataclass(frozen=True)
class JetAtPoint:
    """Value, first and second derivatives of an immersion at one point."""

    point: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray


class ImmersionSpec:
    """Base class of all immersions ``D^m -> R^d``.

    Subclasses implement ``_values`` and, for analytic families,
    ``_derivatives``.  Neither performs domain checks; the public
    :func:`evaluate` and :func:`jet` do.
    """

    kind: str = "abstract"
    m: int
    d: int
    derivative_mode = "analytic"
    #: True when jets are finite differences and need an interior margin.
    uses_stencil = False
    #: Stencil step; ``None`` for analytic derivatives.
    stencil_step: float | None = None

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "m": self.m, "d": self.d,
                "derivative_mode": self.derivative_mode, "params": self.params()}

    def _values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _derivatives(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def analysis_mask(self, X: np.ndarray) -> np.ndarray:
        """Points that analyses should consider (all, unless singular)."""
        return np.ones(len(X), dtype=bool)

    def jet_radius(self) -> float:
        """Largest ``|x|`` at which :func:`jet` is defined."""
        if self.uses_stencil:
            return 1.0 - 2.0 * self.stencil_step
        return 1.0

    def _check_validity(self):
        if not self.d > self.m >= 1:
            raise ConstructionError(f"need d > m >= 1, got m={self.m}, d={self.d}")


def evaluate(spec: ImmersionSpec, x) -> np.ndarray:
    """Image ``phi(x)`` of one point (shape ``(d,)``) or of many (``(N, d)``)."""
    X = _as_points(x, spec.m)
    _check_in_disk(X)
    out = spec._values(X)
    return out[0] if np.ndim(x) == 1 else out


def jets(spec: ImmersionSpec, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ``(values, jacobians, hessians)``; checks disk and margin."""
    X = _as_points(X, spec.m)
    _check_in_disk(X)
    if spec.uses_stencil:
        limit = spec.jet_radius() + DISK_SLACK
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > limit):
            raise MarginError(
                f"finite-difference jet needs |x| <= {spec.jet_radius():.6g}, "
                f"got {norms.max():.6g}")
    values = spec._values(X)
    J, H = spec._derivatives(X)
    return values, J, H


def jet(spec: ImmersionSpec, x) -> JetAtPoint:
    x = np.asarray(x, dtype=float)
    values, J, H = jets(spec, x[None, :] if x.ndim == 1 else x)
    return JetAtPoint(point=x.copy(), value=values[0], jacobian=J[0], hessian=H[0])


# -- finite differences ------------------------------------------------------

def _fd_derivatives(value_fn, X: np.ndarray, h: float, order: int):
    N, m = X.shape
    f0 = value_fn(X)
    d = f0.shape[1]
    eye = np.eye(m)
    J = np.empty((N, d, m))
    H = np.empty((N, d, m, m))
    if order == 2:
        shifts = {}
        for a in range(m):
            shifts[a, 1] = value_fn(X + h * eye[a])
            shifts[a, -1] = value_fn(X - h * eye[a])
            J[:, :, a] = (shifts[a, 1] - shifts[a, -1]) / (2 * h)
            H[:, :, a, a] = (shifts[a, 1] - 2 * f0 + shifts[a, -1]) / h ** 2
        for a in range(m):
            for b in range(a + 1, m):
                pp = value_fn(X + h * (eye[a] + eye[b]))
                pm = value_fn(X + h * (eye[a] - eye[b]))
                mp = value_fn(X + h * (-eye[a] + eye[b]))
                mm = value_fn(X - h * (eye[a] + eye[b]))
                H[:, :, a, b] = H[:, :, b, a] = (pp - pm - mp + mm) / (4 * h ** 2)
    elif order == 4:
        c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * h)
        c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h ** 2)
        steps = (-2, -1, 0, 1, 2)
        for a in range(m):
            vals = [f0 if k == 0 else value_fn(X + k * h * eye[a]) for k in steps]
            J[:, :, a] = sum(c * v for c, v in zip(c1, vals))
            H[:, :, a, a] = sum(c * v for c, v in zip(c2, vals))
        for a in range(m):
            for b in range(a + 1, m):
                acc = 0.0
                for i, ka in enumerate(steps):
                    if c1[i] == 0:
                        continue
                    for j, kb in enumerate(steps):
                        if c1[j] == 0:
                            continue
                        acc = acc + c1[i] * c1[j] * value_fn(X + h * (ka * eye[a] + kb * eye[b]))
                H[:, :, a, b] = H[:, :, b, a] = acc
    else:
        raise ValidationError(f"finite-difference order must be 2 or 4, got {order}")
    return J, H


class CentralDifference(ImmersionSpec):
    """Wrap an analytic family so that its jets come from central differences."""

    uses_stencil = True

    def __init__(self, base: ImmersionSpec, h: float, order: int = 2):
        if h <= 0:
            raise ConstructionError("finite-difference step must be positive")
        if order not in (2, 4):
            raise ConstructionError("finite-difference order must be 2 or 4")
        self.base = base
        self.kind = base.kind
        self.m, self.d = base.m, base.d
        self.stencil_step = float(h)
        self.order = order
        self.derivative_mode = f"central_difference({h:g}, order={order})"

    def params(self):
        return self.base.params()

    def analysis_mask(self, X):
        return self.base.analysis_mask(X)

    def _values(self, X):
        return self.base._values(X)

    def _derivatives(self, X):
        return _fd_derivatives(self.base._values, X, self.stencil_step, self.order)


def central_difference(spec: ImmersionSpec, h: float, order: int = 2) -> CentralDifference:
    return CentralDifference(spec, h, order)


# -- built-in families ---------------------------------------------------------

class Plane(ImmersionSpec):
    """The flat inclusion ``x -> (x, 0, ..., 0)``."""

    kind = "plane"

    def __init__(self, m: int = 2, d: int = 3):
        self.m, self.d = int(m), int(d)
        self._check_validity()

    def params(self):
        return {"m": self.m, "d": self.d}

    def _values(self, X):
        out = np.zeros((len(X), self.d))
        out[:, :self.m] = X
        return out

    def _derivatives(self, X):
        N = len(X)
        J = np.zeros((N, self.d, self.m))
        J[:, :self.m, :] = np.eye(self.m)
        return J, np.zeros((N, self.d, self.m, self.m))


class ScaledPlane(Plane):
    """``x -> (c x, 0)``; stretched by ``c``, so not isometric unless c = 1."""

    kind = "scaled-plane"

    def __init__(self, c: float = 2.0, m: int = 2, d: int = 3):
        super().__init__(m, d)
        if not c > 0:
            raise ConstructionError(f"scale must be positive, got {c}")
        self.c = float(c)

    def params(self):
        return {"c": self.c, "m": self.m, "d": self.d}

    def _values(self, X):
        return self.c * super()._values(X)

    def _derivatives(self, X):
        J, H = super()._derivatives(X)
        return self.c * J, H


class Cylinder(ImmersionSpec):
    """Disk rolled around a circular cylinder of the given radius.

    The domain direction ``(cos a, sin a)`` is the ruling (axis) and maps to
    the ambient ``e1`` axis; the perpendicular domain direction wraps around
    the circle in the ``(e2, e3)`` plane.
    """

    kind = "cylinder"
    m, d = 2, 3

    def __init__(self, radius: float = 0.5, axis_angle: float = 0.0):
        if not radius > 0:
            raise ConstructionError(f"cylinder radius must be positive, got {radius}")
        self.radius = float(radius)
        self.axis_angle = float(axis_angle)
        self.axis = np.array([math.cos(axis_angle), math.sin(axis_angle)])
        self.around = np.array([-math.sin(axis_angle), math.cos(axis_angle)])

    def params(self):
        return {"radius": self.radius, "axis_angle": self.axis_angle}

    def _values(self, X):
        t = X @ self.axis
        phase = (X @ self.around) / self.radius
        rho = self.radius
        return np.stack([t, rho * np.sin(phase), rho * (1.0 - np.cos(phase))], axis=1)

    def _derivatives(self, X):
        phase = (X @ self.around) / self.radius
        c, s = np.cos(phase), np.sin(phase)
        N = len(X)
        e_axis = np.zeros((N, 3))
        e_axis[:, 0] = 1.0
        tangent = np.stack([np.zeros(N), c, s], axis=1)
        J = (e_axis[:, :, None] * self.axis[None, None, :]
             + tangent[:, :, None] * self.around[None, None, :])
        bend = np.stack([np.zeros(N), -s, c], axis=1) / self.radius
        H = bend[:, :, None, None] * np.outer(self.around, self.around)[None, None]
        return J, H


class Cone(ImmersionSpec):
    """Disk wrapped onto a circular cone with apex image at the origin.

    The apex sits at the domain point ``(-apex_offset, 0)``; ``opening`` is
    the half-angle of the cone.  Rays from the apex are the rulings.  When
    the apex lies inside the disk the map is single valued only if
    ``1 / sin(opening)`` is an integer (the disk wraps around that many
    times); points within :attr:`APEX_EXCLUSION` of the apex are excluded
    from analysis.
    """

    kind = "cone"
    m, d = 2, 3
    APEX_EXCLUSION = 0.05

    def __init__(self, apex_offset: float = 0.5, opening: float = math.pi / 6):
        if not 0 < opening < math.pi / 2:
            raise ConstructionError(f"cone half-angle must lie in (0, pi/2), got {opening}")
        if apex_offset < 0:
            raise ConstructionError("apex_offset must be non-negative")
        wraps = 1.0 / math.sin(opening)
        if apex_offset <= 1.0 and abs(wraps - round(wraps)) > 1e-9:
            raise ConstructionError(
                "apex inside the disk requires 1/sin(opening) to be an integer "
                f"(got {wraps:.6g}); otherwise the map is discontinuous")
        self.apex_offset = float(apex_offset)
        self.opening = float(opening)
        self.apex = np.array([-self.apex_offset, 0.0])
        self.wraps = round(wraps) if apex_offset <= 1.0 else wraps

    def params(self):
        return {"apex_offset": self.apex_offset, "opening": self.opening}

    def analysis_mask(self, X):
        return np.linalg.norm(X - self.apex, axis=1) >= self.APEX_EXCLUSION

    def _polar(self, X):
        u = X - self.apex
        rho = np.linalg.norm(u, axis=1)
        if np.any(rho == 0.0):
            raise DomainError("the cone apex is a singular point")
        psi = np.arctan2(u[:, 1], u[:, 0])
        return u, rho, psi

    def _values(self, X):
        _, rho, psi = self._polar(X)
        s, c, n = math.sin(self.opening), math.cos(self.opening), self.wraps
        return np.stack([rho * s * np.cos(n * psi), rho * s * np.sin(n * psi),
                         rho * c], axis=1)

    def _derivatives(self, X):
        u, rho, psi = self._polar(X)
        s, c, n = math.sin(self.opening), math.cos(self.opening), self.wraps
        N = len(X)
        cs, sn = np.cos(n * psi), np.sin(n * psi)
        zero = np.zeros(N)
        # F(rho, psi) and its partials
        F_r = np.stack([s * cs, s * sn, c * np.ones(N)], axis=1)
        F_p = np.stack([-rho * s * n * sn, rho * s * n * cs, zero], axis=1)
        F_rp = np.stack([-s * n * sn, s * n * cs, zero], axis=1)
        F_pp = np.stack([-rho * s * n * n * cs, -rho * s * n * n * sn, zero], axis=1)
        u1, u2 = u[:, 0], u[:, 1]
        r2 = rho ** 2
        rho_d = u / rho[:, None]
        psi_d = np.stack([-u2, u1], axis=1) / r2[:, None]
        rho_dd = (np.eye(2)[None] - rho_d[:, :, None] * rho_d[:, None, :]) / rho[:, None, None]
        psi_dd = np.empty((N, 2, 2))
        psi_dd[:, 0, 0] = 2 * u1 * u2 / r2 ** 2
        psi_dd[:, 1, 1] = -2 * u1 * u2 / r2 ** 2
        psi_dd[:, 0, 1] = psi_dd[:, 1, 0] = (u2 ** 2 - u1 ** 2) / r2 ** 2
        J = F_r[:, :, None] * rho_d[:, None, :] + F_p[:, :, None] * psi_d[:, None, :]
        cross = rho_d[:, :, None] * psi_d[:, None, :]
        cross = cross + np.swapaxes(cross, 1, 2)
        H = (F_rp[:, :, None, None] * cross[:, None]
             + F_pp[:, :, None, None] * (psi_d[:, :, None] * psi_d[:, None, :])[:, None]
             + F_r[:, :, None, None] * rho_dd[:, None]
             + F_p[:, :, None, None] * psi_dd[:, None])
        return J, H


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


class BentFlapDisk(ImmersionSpec):
    """Flat inscribed triangle with three bent circular-segment flaps.

    The equilateral triangle has vertices ``(-1, 0)`` and ``(1/2, +-sqrt(3)/2)``
    on the unit circle, so the chord ``x1 = 1/2`` is crossed by the ray along
    ``+x1``.  Beyond each chord the segment is a generalized cylinder: the
    distance ``s`` past the chord is carried along a unit-speed planar
    profile of curvature ``kappa(s) = kappa_max * S(s / ramp_width)`` with the
    smoothstep ``S(u) = u^2 (3 - 2u)`` clamped to 1 for ``u > 1``, while the
    chord coordinate is left unchanged.  ``kappa(0) = 0`` makes the junction
    C^2 (not C^infinity).
    """

    kind = "bent-flap-disk"
    m, d = 2, 3
    CHORD_DISTANCE = 0.5
    NORMAL_ANGLES = (0.0, 2 * math.pi / 3, -2 * math.pi / 3)

    def __init__(self, kappa_max: float = 4.0, ramp_width: float = 0.5):
        if kappa_max < 0 or not math.isfinite(kappa_max):
            raise ConstructionError("kappa_max must be finite and non-negative")
        if not ramp_width > 0:
            raise ConstructionError("ramp_width must be positive")
        self.kappa_max = float(kappa_max)
        self.ramp_width = float(ramp_width)
        self.normals = np.array([[math.cos(a), math.sin(a)] for a in self.NORMAL_ANGLES])
        self.chord_dirs = np.stack([-self.normals[:, 1], self.normals[:, 0]], axis=1)

    def params(self):
        return {"kappa_max": self.kappa_max, "ramp_width": self.ramp_width}

    # profile -----------------------------------------------------------------
    def curvature(self, s):
        u = np.clip(np.asarray(s, dtype=float) / self.ramp_width, 0.0, 1.0)
        return self.kappa_max * u * u * (3.0 - 2.0 * u)

    def turning(self, s):
        """Tangent angle of the profile, the integral of the curvature."""
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        w, k = self.ramp_width, self.kappa_max
        u = np.minimum(s / w, 1.0)
        inside = k * w * (u ** 3 - 0.5 * u ** 4)
        return inside + k * np.maximum(s - w, 0.0)

    def profile(self, s):
        """Planar profile ``(sigma, zeta)``: in-plane and out-of-plane offsets."""
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        if self.kappa_max == 0.0:
            return s.copy(), np.zeros_like(s)
        w, k = self.ramp_width, self.kappa_max
        s1 = np.minimum(s, w)
        t = 0.5 * (_GL_NODES[None, :] + 1.0) * s1[:, None]
        theta = self.turning(t)
        weights = 0.5 * s1[:, None] * _GL_WEIGHTS[None, :]
        sigma = np.sum(weights * np.cos(theta), axis=1)
        zeta = np.sum(weights * np.sin(theta), axis=1)
        beyond = s > w
        if np.any(beyond):
            th_w = self.turning(w)
            th = self.turning(s[beyond])
            sigma[beyond] += (np.sin(th) - math.sin(th_w)) / k
            zeta[beyond] += (math.cos(th_w) - np.cos(th)) / k
        return sigma, zeta

    # regions -------------------------------------------------------------------
    def chord_offsets(self, X):
        """Signed distance past each chord, shape ``(N, 3)``."""
        return X @ self.normals.T - self.CHORD_DISTANCE

    def region(self, X):
        """0 for the flat triangle (closed), ``k + 1`` for flap ``k``."""
        off = self.chord_offsets(X)
        k = np.argmax(off, axis=1)
        return np.where(off[np.arange(len(X)), k] > 0.0, k + 1, 0)

    def _local(self, X):
        off = self.chord_offsets(X)
        k = np.argmax(off, axis=1)
        s = off[np.arange(len(X)), k]
        flap = s > 0.0
        return k, np.where(flap, s, 0.0), flap

    def _values(self, X):
        out = np.zeros((len(X), 3))
        out[:, :2] = X
        k, s, flap = self._local(X)
        if np.any(flap):
            n, t_dir = self.normals[k[flap]], self.chord_dirs[k[flap]]
            t = np.sum(X[flap] * t_dir, axis=1)
            sigma, zeta = self.profile(s[flap])
            out[flap, :2] = (self.CHORD_DISTANCE + sigma)[:, None] * n + t[:, None] * t_dir
            out[flap, 2] = zeta
        return out

    def _derivatives(self, X):
        N = len(X)
        J = np.zeros((N, 3, 2))
        J[:, :2, :] = np.eye(2)
        H = np.zeros((N, 3, 2, 2))
        k, s, flap = self._local(X)
        if np.any(flap):
            n, t_dir = self.normals[k[flap]], self.chord_dirs[k[flap]]
            theta = self.turning(s[flap])
            kappa = self.curvature(s[flap])
            c, sn = np.cos(theta), np.sin(theta)
            across = np.concatenate([c[:, None] * n, sn[:, None]], axis=1)
            along = np.concatenate([t_dir, np.zeros((len(n), 1))], axis=1)
            J[flap] = across[:, :, None] * n[:, None, :] + along[:, :, None] * t_dir[:, None, :]
            bend = kappa[:, None] * np.concatenate([-sn[:, None] * n, c[:, None]], axis=1)
            H[flap] = bend[:, :, None, None] * (n[:, :, None] * n[:, None, :])[:, None]
        return J, H


class ConfinementTorus(ImmersionSpec):
    """Product of ``m`` circles of radius ``R_s / sqrt(2m)`` in R^(2m), padded with zeros.

    Each coordinate ``x_i`` is wound around its own circle at unit speed, so
    the map is an isometry whose image sits on the sphere of radius
    ``R_s / sqrt(2)``.
    """

    kind = "confinement-torus"

    def __init__(self, m: int = 2, R_s: float = 0.5, d: int | None = None):
        self.m = int(m)
        self.d = 2 * self.m if d is None else int(d)
        if self.m < 1:
            raise ConstructionError("m must be >= 1")
        if self.d < 2 * self.m:
            raise ConstructionError(f"confinement map needs d >= 2m, got m={self.m}, d={self.d}")
        if not R_s > 0:
            raise ConstructionError(f"R_s must be positive, got {R_s}")
        self.R_s = float(R_s)
        self.circle_radius = self.R_s / math.sqrt(2 * self.m)

    def params(self):
        return {"m": self.m, "R_s": self.R_s, "d": self.d}

    def _values(self, X):
        a = self.circle_radius
        out = np.zeros((len(X), self.d))
        out[:, 0:2 * self.m:2] = a * np.cos(X / a)
        out[:, 1:2 * self.m:2] = a * np.sin(X / a)
        return out

    def _derivatives(self, X):
        a = self.circle_radius
        N, m = X.shape
        c, s = np.cos(X / a), np.sin(X / a)
        J = np.zeros((N, self.d, m))
        H = np.zeros((N, self.d, m, m))
        idx = np.arange(m)
        J[:, 2 * idx, idx] = -s
        J[:, 2 * idx + 1, idx] = c
        H[:, 2 * idx, idx, idx] = -c / a
        H[:, 2 * idx + 1, idx, idx] = -s / a
        return J, H


class SphereChart(ImmersionSpec):
    """Longitude/latitude chart of the unit sphere; a non-isometric control.

    ``(x, y) -> (cos y cos x, cos y sin x, sin y)``; the equator is ``y = 0``.
    """

    kind = "sphere-chart"
    m, d = 2, 3

    def params(self):
        return {}

    def _values(self, X):
        x, y = X[:, 0], X[:, 1]
        return np.stack([np.cos(y) * np.cos(x), np.cos(y) * np.sin(x), np.sin(y)], axis=1)

    def _derivatives(self, X):
        x, y = X[:, 0], X[:, 1]
        cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
        N = len(X)
        zero = np.zeros(N)
        J = np.zeros((N, 3, 2))
        J[:, :, 0] = np.stack([-cy * sx, cy * cx, zero], axis=1)
        J[:, :, 1] = np.stack([-sy * cx, -sy * sx, cy], axis=1)
        H = np.zeros((N, 3, 2, 2))
        H[:, :, 0, 0] = np.stack([-cy * cx, -cy * sx, zero], axis=1)
        H[:, :, 1, 1] = np.stack([-cy * cx, -cy * sx, -sy], axis=1)
        H[:, :, 0, 1] = H[:, :, 1, 0] = np.stack([sy * sx, -sy * cx, zero], axis=1)
        return J, H


# -- sampled grids ---------------------------------------------------------------

class SampledGrid(ImmersionSpec):
    """Immersion known only at the nodes of a cube grid over ``[-1, 1]^m``.

    Values between nodes are multilinear interpolants; jets are central
    differences with step ``h`` (default: the grid spacing).
    """

    kind = "sampled-grid"
    uses_stencil = True

    def __init__(self, grid: DomainGrid, values, order: int = 2, h: float | None = None,
                 source: dict | None = None):
        values = np.asarray(values, dtype=float)
        expected = grid.shape
        if values.ndim != grid.m + 1 or values.shape[:-1] != expected:
            raise ValidationError(
                f"values must have shape {expected} + (d,), got {values.shape}")
        if order not in (2, 4):
            raise ValidationError("order must be 2 or 4")
        self.grid = grid
        self.values = values
        self.m = grid.m
        self.d = values.shape[-1]
        self._check_validity()
        self.order = order
        self.stencil_step = grid.spacing if h is None else float(h)
        self.source = source or {}
        self.derivative_mode = f"central_difference({self.stencil_step:g}, order={order})"

    def params(self):
        return {"resolution": self.grid.resolution, "order": self.order, **self.source}

    def _values(self, X):
        g = self.grid
        pos = (X + 1.0) / g.spacing
        snapped = np.round(pos)
        pos = np.where(np.abs(pos - snapped) < 1e-9, snapped, pos)
        base = np.clip(np.floor(pos).astype(np.int64), 0, g.resolution - 2)
        frac = pos - base
        out = np.zeros((len(X), self.d))
        for corner in product((0, 1), repeat=self.m):
            corner = np.asarray(corner)
            weight = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
            idx = tuple((base + corner).T)
            out += weight[:, None] * self.values[idx]
        return out

    def _derivatives(self, X):
        return _fd_derivatives(self._values, X, self.stencil_step, self.order)


def sample(spec: ImmersionSpec, resolution: int, order: int = 2) -> SampledGrid:
    """Sample an analytic family on every cube node of a grid."""
    grid = DomainGrid(spec.m, resolution)
    values = spec._values(grid.nodes).reshape(grid.shape + (spec.d,))
    return SampledGrid(grid, values, order=order,
                       source={"sampled_from": spec.kind, **spec.params()})


def save_sampled_grid(grid_spec: SampledGrid, path) -> None:
    """Write a sampled grid as JSON (``.json``) or NumPy archive (``.npz``)."""
    path = Path(path)
    header = {"format": SAMPLED_GRID_FORMAT, "schema_version": SAMPLED_GRID_VERSION,
              "m": grid_spec.m, "d": grid_spec.d, "resolution": grid_spec.grid.resolution}
    flat = grid_spec.values.reshape(-1, grid_spec.d)
    if path.suffix == ".npz":
        np.savez(path, header=json.dumps(header, sort_keys=True), values=flat)
    else:
        payload = dict(header, values=flat.tolist())
        path.write_text(json.dumps(payload, sort_keys=True))


def load_sampled_grid(path, order: int = 2) -> SampledGrid:
    path = Path(path)
    try:
        if path.suffix == ".npz":
            with np.load(path) as data:
                header = json.loads(str(data["header"]))
                flat = np.asarray(data["values"], dtype=float)
        else:
            header = json.loads(path.read_text())
            flat = np.asarray(header.pop("values"), dtype=float)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot read sampled grid {path}: {exc}") from exc
    if header.get("format") != SAMPLED_GRID_FORMAT:
        raise ValidationError(f"{path} is not a {SAMPLED_GRID_FORMAT} file")
    if header.get("schema_version") != SAMPLED_GRID_VERSION:
        raise ValidationError(f"unsupported schema_version {header.get('schema_version')}")
    m, d, res = int(header["m"]), int(header["d"]), int(header["resolution"])
    grid = DomainGrid(m, res)
    if flat.shape != (res ** m, d):
        raise ValidationError(f"values have shape {flat.shape}, expected {(res ** m, d)}")
    return SampledGrid(grid, flat.reshape(grid.shape + (d,)), order=order)


FAMILIES = {
    "plane": Plane,
    "scaled-plane": ScaledPlane,
    "cylinder": Cylinder,
    "cone": Cone,
    "bent-flap-disk": BentFlapDisk,
    "confinement-torus": ConfinementTorus,
    "sphere-chart": SphereChart,
}

#: Families that are isometric by construction.
ISOMETRIC_FAMILIES = ("plane", "cylinder", "cone", "bent-flap-disk", "confinement-torus")


def make_family(kind: str, **params) -> ImmersionSpec:
    """Construct a built-in family by name (hyphens or underscores)."""
    key = kind.strip().lower().replace("_", "-")
    try:
        cls = FAMILIES[key]
    except KeyError:
        raise ConstructionError(
            f"unknown family {kind!r}; choose from {', '.join(FAMILIES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConstructionError(f"bad parameters for {key}: {exc}") from exc
