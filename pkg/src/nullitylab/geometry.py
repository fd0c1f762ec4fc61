"""Strain, normal frames, second fundamental form and the flat Gauss/Codazzi checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateImmersionError, MarginError, UnsupportedError, ValidationError
from .immersion import DISK_SLACK, ImmersionSpec, _as_points, jets

ISOMETRY_WARN = 1e-6
ISOMETRY_REJECT = 1e-3
FLATNESS_TOL_ANALYTIC = 1e-8
CODAZZI_STEP = 0.02

_RANK_TOL = 1e-10
_TIE_TOL = 1e-12


class IsometryWarning(UserWarning):
    """The immersion is strained where an isometric identity is being used."""


def flatness_tolerance(spec: ImmersionSpec) -> float:
    """Default flatness tolerance: ``1e-8`` analytic, ``50 h^2`` for stencils."""
    if spec.uses_stencil:
        return 50.0 * spec.stencil_step ** 2
    return FLATNESS_TOL_ANALYTIC


@dataclass(frozen=True)
class StrainTensor:
    entries: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.entries).max())


@dataclass(frozen=True)
class NormalFrame:
    """Orthonormal normal vectors (rows of ``vectors``, shape ``(d - m, d)``)
    together with the orthonormalized tangent basis used to build them."""

    vectors: np.ndarray
    tangent: np.ndarray

    def rotated(self, Q) -> "NormalFrame":
        Q = np.asarray(Q, dtype=float)
        return NormalFrame(vectors=Q @ self.vectors, tangent=self.tangent)


@dataclass(frozen=True)
class SecondForm:
    """Components ``K[a, i, j]`` of the normal-valued second fundamental form.

    ``tangential`` holds the tangent part of the hessian in the
    orthonormalized tangent basis; it vanishes for isometric immersions.
    """

    components: np.ndarray
    frame: NormalFrame | None = None
    tangential: np.ndarray | None = None

    @property
    def codimension(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def rotated(self, Q) -> "SecondForm":
        """Components after replacing the frame ``n_a`` by ``sum_b Q[a, b] n_b``."""
        Q = np.asarray(Q, dtype=float)
        comps = np.einsum("ab,bij->aij", Q, self.components)
        frame = self.frame.rotated(Q) if self.frame is not None else None
        return SecondForm(_symmetrize(comps), frame, self.tangential)

    def reparametrized(self, R) -> "SecondForm":
        """Components in the domain basis given by the columns of orthogonal ``R``."""
        R = np.asarray(R, dtype=float)
        comps = np.einsum("ki,akl,lj->aij", R, self.components, R)
        return SecondForm(_symmetrize(comps), self.frame, self.tangential)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


# -- batched primitives ----------------------------------------------------------

def strain_from_jacobians(J: np.ndarray) -> np.ndarray:
    g = np.einsum("nka,nkb->nab", J, J)
    return _symmetrize(g) - np.eye(J.shape[2])[None]


def _orthonormal_tangents(J: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the jacobian columns, twice; rows out."""
    N, d, m = J.shape
    Q = np.zeros((N, m, d))
    for a in range(m):
        v = J[:, :, a].copy()
        scale = np.linalg.norm(v, axis=1)
        for _ in range(2):
            for b in range(a):
                v -= np.sum(v * Q[:, b], axis=1)[:, None] * Q[:, b]
        norm = np.linalg.norm(v, axis=1)
        bad = norm <= _RANK_TOL * np.maximum(scale, 1.0)
        if np.any(bad):
            raise DegenerateImmersionError(
                f"jacobian rank deficient at {int(bad.sum())} point(s); "
                "the immersion degenerates")
        Q[:, a] = v / norm[:, None]
    return Q


def normal_frames_from_jacobians(J: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal completion of the tangent spaces.

    Returns ``(normals, tangents)`` with shapes ``(N, d - m, d)`` and
    ``(N, m, d)``.  Each normal is the residual of the canonical basis
    vector with the largest residual norm (lowest index on ties).
    """
    N, d, m = J.shape
    T = _orthonormal_tangents(J)
    basis = [T[:, a] for a in range(m)]
    normals = np.zeros((N, d - m, d))
    rows = np.arange(N)
    for a in range(d - m):
        B = np.stack(basis, axis=1)
        R = np.eye(d)[None] - np.einsum("nbi,nbj->nij", B, B)
        norms = np.linalg.norm(R, axis=1)
        top = norms.max(axis=1, keepdims=True)
        pick = np.argmax(norms >= top - _TIE_TOL, axis=1)
        v = R[rows, :, pick]
        for b in basis:
            v = v - np.sum(v * b, axis=1)[:, None] * b
        v /= np.linalg.norm(v, axis=1)[:, None]
        normals[:, a] = v
        basis.append(v)
    return normals, T


def second_forms_from_jets(J: np.ndarray, H: np.ndarray):
    """Batched ``(K, normals, tangents, tangential)`` from jacobians/hessians."""
    normals, T = normal_frames_from_jacobians(J)
    K = _symmetrize(np.einsum("nidb,nai->nadb", H, normals))
    tangential = np.einsum("nidb,nai->nadb", H, T)
    return K, normals, T, tangential


@dataclass(frozen=True)
class FormField:
    """Second fundamental forms at many points, with isometry diagnostics."""

    points: np.ndarray
    components: np.ndarray
    normals: np.ndarray
    strain_max: np.ndarray
    tangential_max: np.ndarray


def second_form_field(spec: ImmersionSpec, X) -> FormField:
    X = _as_points(X, spec.m)
    _, J, H = jets(spec, X)
    K, normals, _, tangential = second_forms_from_jets(J, H)
    n = len(X)
    strain = kernels.strain_maxabs(J)
    tang = np.abs(tangential).reshape(n, -1).max(axis=1) if n else np.zeros(0)
    return FormField(X, K, normals, strain, tang)


# -- per-point operations -----------------------------------------------------------

def strain(spec: ImmersionSpec, x) -> StrainTensor:
    """``u_ij = d_i r . d_j r - delta_ij``; symmetric by construction."""
    _, J, _ = jets(spec, np.asarray(x, dtype=float)[None, :])
    return StrainTensor(strain_from_jacobians(J)[0])


def induced_metric(spec: ImmersionSpec, x) -> np.ndarray:
    _, J, _ = jets(spec, np.asarray(x, dtype=float)[None, :])
    return _symmetrize(J[0].T @ J[0])


def normal_frame(spec: ImmersionSpec, x) -> NormalFrame:
    _, J, _ = jets(spec, np.asarray(x, dtype=float)[None, :])
    normals, T = normal_frames_from_jacobians(J)
    return NormalFrame(normals[0], T[0])


def second_form(spec: ImmersionSpec, x, frame: NormalFrame | None = None) -> SecondForm:
    """``K[a, i, j] = (d_i d_j r) . n_a`` at ``x``.

    Warns with :class:`IsometryWarning` when the strain exceeds
    :data:`ISOMETRY_WARN`, since the split of the hessian into normal and
    tangential parts then no longer follows the isometric Gauss formula.
    """
    _, J, H = jets(spec, np.asarray(x, dtype=float)[None, :])
    u = np.abs(strain_from_jacobians(J)).max()
    if u > ISOMETRY_WARN:
        warnings.warn(f"strain {u:.3g} exceeds {ISOMETRY_WARN:g}; second form "
                      "is not that of an isometric immersion", IsometryWarning,
                      stacklevel=2)
    normals, T = normal_frames_from_jacobians(J)
    if frame is None:
        frame = NormalFrame(normals[0], T[0])
    K = _symmetrize(np.einsum("idb,ai->adb", H[0], frame.vectors))
    tangential = np.einsum("idb,ai->adb", H[0], T[0])
    return SecondForm(K, frame, tangential)


def _components(sff) -> np.ndarray:
    comps = sff.components if isinstance(sff, SecondForm) else np.asarray(sff, dtype=float)
    if comps.ndim != 3 or comps.shape[1] != comps.shape[2]:
        raise ValidationError(f"form components must be (k, m, m), got {comps.shape}")
    return comps


def shape_operator(sff, xi) -> np.ndarray:
    """Symmetric matrix ``A_xi[i, j] = sum_a xi_a K[a, i, j]``."""
    comps = _components(sff)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (comps.shape[0],):
        raise ValidationError(f"xi must have {comps.shape[0]} frame coefficients")
    norm = np.linalg.norm(xi)
    if norm == 0.0:
        raise ValidationError("xi must be non-zero")
    if abs(norm - 1.0) > 1e-12:
        warnings.warn(f"normal coefficients have norm {norm:.6g}; normalizing",
                      UserWarning, stacklevel=2)
        xi = xi / norm
    return _symmetrize(np.einsum("a,aij->ij", xi, comps))


def gauss_residual(sff) -> float:
    """Max over basis 4-tuples of ``|<a(X,W), a(Y,Z)> - <a(X,Z), a(Y,W)>|``."""
    comps = _components(sff)
    return float(kernels.flatness_residuals(comps[None])[0])


def principal_curvatures(sff, metric=None) -> np.ndarray:
    """Sorted eigenvalues of the scalar second form (codimension one only).

    With ``metric`` given, the eigenvalues are taken relative to that
    induced metric, which is needed for non-isometric charts.
    """
    comps = _components(sff)
    if comps.shape[0] != 1:
        raise UnsupportedError(
            f"principal curvatures need codimension 1, got {comps.shape[0]}")
    C = comps[0]
    if metric is not None:
        L = np.linalg.cholesky(np.asarray(metric, dtype=float))
        Linv = np.linalg.inv(L)
        C = _symmetrize(Linv @ C @ Linv.T)
    return np.sort(np.linalg.eigvalsh(C))


def gaussian_curvature(sff, metric=None) -> float:
    return float(np.prod(principal_curvatures(sff, metric)))


# -- Codazzi --------------------------------------------------------------------------

class CodazziResidual(NamedTuple):
    value: float
    step: float


def _normal_parts(spec: ImmersionSpec, Y: np.ndarray):
    """Full R^d-valued normal part of the hessian and the normal projector."""
    J, H = spec._derivatives(Y)
    T = _orthonormal_tangents(J)
    P = np.eye(spec.d)[None] - np.einsum("nai,naj->nij", T, T)
    return np.einsum("nij,njab->niab", P, H), P


def codazzi_field(spec: ImmersionSpec, X, h: float | None = None) -> np.ndarray:
    """Codazzi residual at many points; NaN where no stencil fits.

    The normal part ``N_jk`` of the hessian is differenced along each axis
    (central where possible, second-order one-sided near the edge) and the
    normal projection of ``d_i N_jk - d_j N_ik`` is reported.
    """
    X = _as_points(X, spec.m)
    if h is None:
        h = spec.stencil_step if spec.uses_stencil else CODAZZI_STEP
    limit = spec.jet_radius() + DISK_SLACK
    N, m, d = len(X), spec.m, spec.d
    base, P = _normal_parts(spec, X) if N else (np.zeros((0, d, m, m)), np.zeros((0, d, d)))
    deriv = np.full((N, m, d, m, m), np.nan)
    ok = np.linalg.norm(X, axis=1) <= limit
    eye = np.eye(m)

    def shifted(a, k, sel):
        out = np.full((N, d, m, m), np.nan)
        Y = X[sel] + k * h * eye[a]
        if np.any(sel):
            out[sel] = _normal_parts(spec, Y)[0]
        return out

    for a in range(m):
        fits = {k: ok & (np.linalg.norm(X + k * h * eye[a], axis=1) <= limit)
                for k in (-2, -1, 1, 2)}
        central = fits[1] & fits[-1]
        forward = ~central & fits[1] & fits[2]
        backward = ~central & ~forward & fits[-1] & fits[-2]
        f = {k: shifted(a, k, fits[k] & (central | forward | backward)) for k in (-2, -1, 1, 2)}
        d_a = np.full((N, d, m, m), np.nan)
        d_a[central] = (f[1][central] - f[-1][central]) / (2 * h)
        d_a[forward] = (-3 * base[forward] + 4 * f[1][forward] - f[2][forward]) / (2 * h)
        d_a[backward] = (3 * base[backward] - 4 * f[-1][backward] + f[-2][backward]) / (2 * h)
        deriv[:, a] = d_a
    # deriv[n, i, :, j, k] = d_i N_jk
    diff = deriv - np.transpose(deriv, (0, 3, 2, 1, 4))
    proj = np.einsum("nij,najbk->naibk", P, diff)
    out = np.abs(proj).reshape(N, -1).max(axis=1) if N else np.zeros(0)
    valid = np.all(np.isfinite(proj.reshape(N, -1)), axis=1) if N else np.zeros(0, bool)
    return np.where(valid, out, np.nan)


def codazzi_residual(spec: ImmersionSpec, x, h: float | None = None) -> CodazziResidual:
    if h is None:
        h = spec.stencil_step if spec.uses_stencil else CODAZZI_STEP
    value = codazzi_field(spec, np.asarray(x, dtype=float)[None, :], h)[0]
    if not np.isfinite(value):
        raise MarginError(f"no Codazzi stencil of step {h:g} fits at {np.asarray(x).tolist()}")
    return CodazziResidual(float(value), float(h))


# -- certificates -------------------------------------------------------------------------

def isometry_status(max_strain: float) -> str:
    if max_strain <= ISOMETRY_WARN:
        return "PASS"
    if max_strain <= ISOMETRY_REJECT:
        return "WARN"
    return "FAIL"
