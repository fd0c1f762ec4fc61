"""Flat bilinear forms, the constructive Cartan lemma and relative-nullity strata."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CertificationError, PreconditionError, ValidationError
from .geometry import ISOMETRY_WARN, second_form_field
from .immersion import DomainGrid, ImmersionSpec

RANK_TOL = 1e-6
FLAT_TOL = 1e-8


@dataclass(frozen=True)
class FlatForm:
    """Symmetric bilinear map ``V x V -> U`` given by ``k x m x m`` components.

    ``U`` carries the Euclidean inner product.  Symmetry is validated on
    construction; flatness is checked by :func:`is_flat`.
    """

    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.ndim != 3 or comps.shape[1] != comps.shape[2]:
            raise ValidationError(f"components must be (k, m, m), got {comps.shape}")
        asym = np.abs(comps - np.swapaxes(comps, 1, 2)).max(initial=0.0)
        scale = max(np.abs(comps).max(initial=0.0), 1.0)
        if asym > 1e-12 * scale:
            raise ValidationError(f"form is not symmetric (asymmetry {asym:.3g})")
        object.__setattr__(self, "components", comps)

    @property
    def dimV(self) -> int:
        return self.components.shape[1]

    @property
    def dimU(self) -> int:
        return self.components.shape[0]

    def __call__(self, X, Y) -> np.ndarray:
        return np.einsum("aij,i,j->a", self.components, np.asarray(X, float), np.asarray(Y, float))

    def applied(self, v) -> np.ndarray:
        """The ``k x m`` matrix of the linear map ``q -> beta(q, v)``."""
        return np.einsum("aij,j->ai", self.components, np.asarray(v, float))

    def stacked(self) -> np.ndarray:
        """Slices stacked into a ``(k m) x m`` matrix; its null space is the kernel."""
        return self.components.reshape(-1, self.dimV)

    def kernel_residual(self, p) -> float:
        """``max_Y |beta(Y, p)|`` over the standard basis ``Y``."""
        return float(np.linalg.norm(self.applied(p), axis=0).max(initial=0.0))


@dataclass(frozen=True)
class KernelSubspace:
    """Orthonormal basis (rows) of the kernel, with the rank decision audit."""

    basis: np.ndarray
    singular_values: np.ndarray
    threshold: float

    @property
    def nu(self) -> int:
        return len(self.basis)

    @property
    def gap(self) -> tuple[float, float]:
        """(largest singular value counted as zero, smallest counted as non-zero)."""
        s = self.singular_values
        below = s[s <= self.threshold]
        above = s[s > self.threshold]
        return (float(below.max()) if below.size else 0.0,
                float(above.min()) if above.size else float("inf"))

    def projection_residual(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if self.nu == 0:
            return float(np.linalg.norm(v))
        return float(np.linalg.norm(v - self.basis.T @ (self.basis @ v)))


def flatness_residual(form: FlatForm) -> float:
    return float(kernels.flatness_residuals(form.components[None])[0])


def is_flat(form: FlatForm, tol: float = FLAT_TOL) -> tuple[bool, float]:
    res = flatness_residual(form)
    return res <= tol, res


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def kernel_basis(form: FlatForm, tol: float = RANK_TOL) -> KernelSubspace:
    """Right-singular directions of the stacked form below ``tol * max(s_max, 1)``."""
    m = form.dimV
    _, s, vh = np.linalg.svd(form.stacked())
    threshold = tol * max(float(s[0]) if s.size else 0.0, 1.0)
    null = s <= threshold
    nu = int(null.sum())
    if nu == m:
        basis = np.eye(m)
    else:
        basis = np.array([_canonical_sign(v) for v in vh[m - nu:]]).reshape(nu, m)
    return KernelSubspace(basis, s, threshold)


@dataclass(frozen=True)
class CartanResult:
    vector: np.ndarray
    residual: float
    chain: np.ndarray
    dependency: np.ndarray


def cartan_null_vector(form: FlatForm, tol: float = 1e-9, check_flat: bool = True) -> CartanResult:
    """Construct ``p`` with ``beta(p, .) = 0`` following Cartan's argument.

    Vectors ``p_1, ..., p_{m+1}`` with ``beta(p_i, p_j) = 0`` (``i != j``)
    are built one at a time: with ``v = sum p_i`` a non-zero ``q`` solving
    the ``k`` equations ``beta(q, v) = 0`` is chosen, and the identity
    ``<beta(q,q), beta(p_i,p_i)> = |beta(q,p_i)|^2`` certifies that ``q`` is
    ``beta``-orthogonal to every earlier ``p_i``.  A linear dependency
    ``sum r_i p_i = 0`` then gives ``beta(p_n, p_n) = 0`` for ``r_n != 0``.
    """
    m, k = form.dimV, form.dimU
    if m <= k:
        raise PreconditionError(f"need dim V > dim U, got {m} <= {k}")
    scale = max(np.abs(form.components).max(initial=0.0), 1.0)
    if check_flat:
        ok, res = is_flat(form, FLAT_TOL * scale ** 2)
        if not ok:
            raise CertificationError(f"form is not flat (residual {res:.3g})")
    cert_tol = max(tol, FLAT_TOL) * scale ** 2
    chain = [np.eye(m)[0]]
    for _ in range(m):
        v = np.sum(chain, axis=0)
        _, _, vh = np.linalg.svd(form.applied(v))
        q = vh[-1]
        bqq = form(q, q)
        for p in chain:
            term = float(bqq @ form(p, p))
            cross = float(np.sum(form(q, p) ** 2))
            if term < -cert_tol:
                raise CertificationError(
                    f"<beta(q,q), beta(p,p)> = {term:.3g} < 0; form is not flat")
            if abs(term - cross) > cert_tol or cross > cert_tol:
                raise CertificationError(
                    f"identity <beta(q,q),beta(p,p)> = |beta(q,p)|^2 fails "
                    f"({term:.3g} vs {cross:.3g}); form is not flat")
        chain.append(q)
    P = np.array(chain)
    _, _, vh = np.linalg.svd(P.T)
    r = vh[-1]
    n = int(np.argmax(np.abs(r) >= np.abs(r).max() - 1e-12))
    p = P[n] / np.linalg.norm(P[n])
    p = _canonical_sign(p)
    return CartanResult(p, form.kernel_residual(p), P, r)


# -- fields on grids ---------------------------------------------------------------

@dataclass(frozen=True)
class NullityPoint:
    nu: int
    kernel: KernelSubspace
    strain: float
    trusted: bool


def nullity_index(spec: ImmersionSpec, x, tol: float = RANK_TOL) -> NullityPoint:
    """Relative nullity at ``x``: dimension and basis of the kernel of the second form."""
    f = second_form_field(spec, np.asarray(x, dtype=float)[None, :])
    kernel = kernel_basis(FlatForm(f.components[0]), tol)
    u = float(f.strain_max[0])
    return NullityPoint(kernel.nu, kernel, u, u <= ISOMETRY_WARN)


def nullity_values(spec: ImmersionSpec, X, tol: float = RANK_TOL):
    """Batched ``(nu, smallest retained singular value, strain)`` at points ``X``."""
    f = second_form_field(spec, X)
    n, k, m, _ = f.components.shape
    if n == 0:
        return np.zeros(0, int), np.zeros(0), np.zeros(0)
    s = np.linalg.svd(f.components.reshape(n, k * m, m), compute_uv=False)
    thr = tol * np.maximum(s[:, 0], 1.0)
    nu = np.sum(s <= thr[:, None], axis=1)
    return nu.astype(int), s, f.strain_max


@dataclass
class NullityField:
    """Relative nullity on a grid, with strata labels.

    ``nu`` is ``-1`` at nodes excluded from analysis.  ``labels[i] = j``
    means node ``i`` lies in ``B_j`` (``nu == index_sequence[j]``); nodes of
    ``A_j`` are those with ``labels >= j``.  ``open_flags`` marks the
    discrete interior ``O_j``: nodes whose every grid neighbor is in the same
    ``B_j``.
    """

    grid: DomainGrid
    points: np.ndarray
    nu: np.ndarray
    labels: np.ndarray
    open_flags: np.ndarray
    index_sequence: list
    singular_values: np.ndarray
    strain: np.ndarray
    tol: float
    meta: dict = field(default_factory=dict)

    def stratum_counts(self) -> dict:
        return {int(v): int(np.sum(self.nu == v)) for v in self.index_sequence}

    def open_coverage(self) -> float:
        analysed = self.nu >= 0
        return float(self.open_flags[analysed].mean()) if analysed.any() else 0.0

    def in_A(self, j: int) -> np.ndarray:
        return self.labels >= j

    def in_B(self, j: int) -> np.ndarray:
        return self.labels == j

    def trusted(self) -> np.ndarray:
        return self.strain <= ISOMETRY_WARN

    def summary(self) -> dict:
        return {
            "index_sequence": [int(v) for v in self.index_sequence],
            "stratum_counts": {str(k): v for k, v in self.stratum_counts().items()},
            "open_coverage": self.open_coverage(),
            "nodes": int(len(self.points)),
            "excluded_nodes": int(np.sum(self.nu < 0)),
            "untrusted_nodes": int(np.sum((self.nu >= 0) & ~self.trusted())),
            "rank_tol": self.tol,
            "resolution": self.grid.resolution,
            "m": self.grid.m,
        }


def stratify(spec: ImmersionSpec, grid: DomainGrid, tol: float = RANK_TOL) -> NullityField:
    """nu at every analysable node, realized index sequence, strata and O-flags."""
    pts = grid.points
    usable = spec.analysis_mask(pts)
    if spec.uses_stencil:
        usable &= np.linalg.norm(pts, axis=1) <= spec.jet_radius() + 1e-12
    nu = np.full(len(pts), -1, dtype=int)
    strain = np.full(len(pts), np.nan)
    sv = np.full((len(pts), spec.m), np.nan)
    if usable.any():
        nu_u, s_u, strain_u = nullity_values(spec, pts[usable], tol)
        nu[usable], strain[usable], sv[usable] = nu_u, strain_u, s_u[:, :spec.m]
    sequence = sorted(int(v) for v in np.unique(nu[nu >= 0]))
    lookup = {v: j for j, v in enumerate(sequence)}
    labels = np.array([lookup.get(int(v), -1) for v in nu], dtype=int)
    table = grid.neighbor_table
    nb_labels = np.where(table >= 0, labels[np.clip(table, 0, None)], -2)
    open_flags = (labels >= 0) & np.all(nb_labels == labels[:, None], axis=1)
    return NullityField(grid, pts, nu, labels, open_flags, sequence, sv, strain, tol,
                        meta={"family": spec.kind, "params": spec.params()})
