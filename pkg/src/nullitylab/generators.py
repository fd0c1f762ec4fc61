"""Generator tracing and the epsilon-chaining construction to the disk boundary.

A generator is a straight domain segment along a relative-nullity direction
whose image is a straight segment of the same length.  When a generator
stops inside the disk (the nullity drops), the chain jumps at most
``epsilon`` into a lower stratum and continues from there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ResolutionError
from .geometry import second_form_field
from .immersion import ImmersionSpec, evaluate, jets
from .nullity import RANK_TOL, NullityField, nullity_index

DEFAULT_STEP = 0.01
STRAIGHT_TOL = 1e-8
C1_DEFAULT = 2.0
DISK_RADIUS = 1.0

BOUNDARY, NULLITY_DROP, STRAIGHTNESS_LOSS = "boundary", "nullity-drop", "straightness-loss"


@dataclass(frozen=True)
class StraightnessResult:
    """Both halves of the straight-generator test.

    ``deviation`` is the largest distance between sampled images and the
    uniformly parametrized image chord; ``length_defect`` is ``|d - r|``.
    The deviation is judged against ``line_tol = sqrt(3 d tol / 8)``, the
    sagitta of an arc whose length exceeds its chord by ``tol``, so the two
    certificates are on matched scales.
    """

    collinear: bool
    isometric_length: bool
    deviation: float
    length_defect: float
    d: float
    r: float
    line_tol: float
    tol: float

    @property
    def certified(self) -> bool:
        return self.collinear and self.isometric_length

    @property
    def consistent(self) -> bool:
        return self.collinear == self.isometric_length


def straightness_check(spec: ImmersionSpec, p, q, n_samples: int = 33,
                       tol: float = STRAIGHT_TOL) -> StraightnessResult:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = float(np.linalg.norm(q - p))
    if d == 0.0:
        raise PreconditionError("straightness check needs distinct endpoints")
    t = np.linspace(0.0, 1.0, max(int(n_samples), 2))[:, None]
    images = evaluate(spec, p + t * (q - p))
    chord = (1.0 - t) * images[0] + t * images[-1]
    deviation = float(np.linalg.norm(images - chord, axis=1).max())
    r = float(np.linalg.norm(images[-1] - images[0]))
    line_tol = math.sqrt(3.0 * d * tol / 8.0)
    return StraightnessResult(deviation <= line_tol, abs(d - r) <= tol, deviation,
                              abs(d - r), d, r, line_tol, tol)


@dataclass
class GeneratorSegment:
    start: np.ndarray
    end: np.ndarray
    direction: np.ndarray
    length: float
    image_length: float
    straightness_residual: float
    length_defect: float
    reason: str
    nu_start: int
    nu_end: int
    kernel_residual_max: float
    samples: np.ndarray
    images: np.ndarray
    check: StraightnessResult | None = None

    def to_dict(self) -> dict:
        return {
            "start": self.start.tolist(), "end": self.end.tolist(),
            "direction": self.direction.tolist(), "length": self.length,
            "image_length": self.image_length,
            "straightness_residual": self.straightness_residual,
            "length_defect": self.length_defect, "reason": self.reason,
            "nu_start": self.nu_start, "nu_end": self.nu_end,
            "kernel_residual_max": self.kernel_residual_max,
            "certified": bool(self.check.certified) if self.check else True,
        }


def _boundary_hit(x: np.ndarray, u: np.ndarray) -> float:
    """Parameter where ``x + t u`` (``|u| = 1``) leaves the unit disk."""
    b = float(x @ u)
    c = float(x @ x) - DISK_RADIUS ** 2
    return max(0.0, -b + math.sqrt(max(b * b - c, 0.0)))


def _kernel_residuals(spec: ImmersionSpec, Y: np.ndarray, u: np.ndarray, tol: float):
    """``(residual, threshold)`` of ``u`` against the nullity at points ``Y``."""
    f = second_form_field(spec, Y)
    applied = np.einsum("naij,j->nai", f.components, u)
    res = np.linalg.norm(applied, axis=1).max(axis=1)
    n, k, m, _ = f.components.shape
    smax = np.linalg.svd(f.components.reshape(n, k * m, m), compute_uv=False)[:, 0]
    return res, tol * np.maximum(smax, 1.0)


def trace_generator(spec: ImmersionSpec, x, direction, step: float = DEFAULT_STEP,
                    tol: float = RANK_TOL, max_length: float = 2 * DISK_RADIUS,
                    straight_tol: float = STRAIGHT_TOL) -> GeneratorSegment:
    """March ``x + t u`` while ``u`` stays in the nullity and the image stays straight.

    Each step re-checks that the point is in the disk, that ``u`` is in the
    kernel of the second form (same relative threshold as the rank
    decisions) and that the image deviates from the tangent line at ``x`` by
    at most ``10 step^2``.  The segment ends at the last certified ``t``, or
    exactly on the boundary circle; ``reason`` records why it stopped, with
    boundary taking precedence over nullity-drop over straightness-loss.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    if step <= 0:
        raise PreconditionError("step must be positive")
    res0, thr0 = _kernel_residuals(spec, x[None], u, tol)
    if res0[0] > thr0[0]:
        raise PreconditionError(
            f"direction is not in the relative nullity at the start "
            f"(residual {res0[0]:.3g} > {thr0[0]:.3g})")
    phi_x = evaluate(spec, x)
    _, J, _ = jets(spec, x[None])
    image_dir = J[0] @ u
    line_tol = 10.0 * step ** 2
    jet_radius = spec.jet_radius()

    def certify(t: float):
        y = x + t * u
        kernel_ok, res = True, 0.0
        analysable = bool(spec.analysis_mask(y[None])[0])
        if not analysable:
            kernel_ok = False
        elif np.linalg.norm(y) <= jet_radius + 1e-12:
            r, thr = _kernel_residuals(spec, y[None], u, tol)
            res = float(r[0])
            kernel_ok = r[0] <= thr[0]
        img = evaluate(spec, y)
        straight = np.linalg.norm(img - phi_x - t * image_dir) <= line_tol
        return kernel_ok, bool(straight), res, img

    t_end = 0.0
    samples, images = [x.copy()], [phi_x]
    kernel_max = float(res0[0])
    t_exit = min(_boundary_hit(x, u), max_length)
    reason = BOUNDARY
    k = 1
    while True:
        t = k * step
        if t >= t_exit:
            kernel_ok, straight, res, img = certify(t_exit)
            if kernel_ok and straight:
                t_end = t_exit
                samples.append(x + t_exit * u)
                images.append(img)
                kernel_max = max(kernel_max, res)
                reason = BOUNDARY
            else:
                reason = NULLITY_DROP if not kernel_ok else STRAIGHTNESS_LOSS
            break
        kernel_ok, straight, res, img = certify(t)
        if not (kernel_ok and straight):
            reason = NULLITY_DROP if not kernel_ok else STRAIGHTNESS_LOSS
            break
        t_end = t
        samples.append(x + t * u)
        images.append(img)
        kernel_max = max(kernel_max, res)
        k += 1

    end = x + t_end * u
    nu_start = nullity_index(spec, x, tol).nu
    nu_end = nullity_index(spec, end, tol).nu if np.linalg.norm(end) <= jet_radius + 1e-12 else nu_start
    image_length = float(np.linalg.norm(evaluate(spec, end) - phi_x))
    check = straightness_check(spec, x, end, tol=straight_tol) if t_end > 0 else None
    return GeneratorSegment(
        start=x.copy(), end=end, direction=u, length=float(t_end),
        image_length=image_length,
        straightness_residual=check.deviation if check else 0.0,
        length_defect=abs(t_end - image_length), reason=reason,
        nu_start=nu_start, nu_end=nu_end, kernel_residual_max=kernel_max,
        samples=np.array(samples), images=np.array(images), check=check)


def find_lower_nullity_neighbor(spec: ImmersionSpec, z_star, epsilon: float,
                                field: NullityField) -> np.ndarray:
    """Nearest open-stratum node within ``epsilon`` of ``z_star`` of lower nullity.

    Ties in distance go to the lowest stratum, then to the
    lexicographically smallest coordinates.
    """
    z = np.asarray(z_star, dtype=float)
    nu_z = nullity_index(spec, z, field.tol).nu
    if not field.index_sequence or nu_z <= min(field.index_sequence):
        raise ResolutionError(
            f"no stratum of nullity below {nu_z} exists on this grid; nothing to jump to")
    dist = np.linalg.norm(field.points - z, axis=1)
    ok = field.open_flags & (field.nu >= 0) & (field.nu < nu_z) & (dist < epsilon)
    if not ok.any():
        raise ResolutionError(
            f"no open lower-nullity node within epsilon={epsilon:g} of {z.tolist()}; "
            f"use a finer grid (spacing {field.grid.spacing:g}) or a larger epsilon")
    idx = np.flatnonzero(ok)
    keys = [field.points[idx, j] for j in reversed(range(field.points.shape[1]))]
    order = np.lexsort(keys + [field.labels[idx], np.round(dist[idx], 12)])
    return field.points[idx[order[0]]].copy()


def chain_defect_bound(K: float, R: float, epsilon: float, C1: float = C1_DEFAULT) -> float:
    """``C1 (2 + K R) epsilon``: bound on the length defect picked up by one jump."""
    if K < 0 or R <= 0 or epsilon < 0:
        raise PreconditionError("need K >= 0, R > 0 and epsilon >= 0")
    if C1 <= 1:
        raise PreconditionError(f"C1 must exceed 1, got {C1}")
    return C1 * (2.0 + K * R) * epsilon


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("nan")
    return float(math.acos(np.clip(a @ b / (na * nb), -1.0, 1.0)))


def pick_direction(basis: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Signed kernel basis vector most aligned with ``reference``.

    Ties (within 1e-12) go to the lexicographically largest candidate.
    """
    cands = np.concatenate([basis, -basis]) if len(basis) else np.zeros((0, len(reference)))
    if not len(cands):
        raise PreconditionError("relative nullity is zero; no generator direction exists")
    scores = np.round(cands @ reference, 12)
    best = scores == scores.max()
    pool = cands[best]
    order = np.lexsort([-pool[:, j] for j in reversed(range(pool.shape[1]))])
    return pool[order[0]]


@dataclass
class ChainPath:
    segments: list
    jumps: list
    epsilon: float
    curvature_bound: float
    disk_radius: float
    C1: float
    defect_bound: float
    measured_defect: float
    start: np.ndarray
    end: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def reached_boundary(self) -> bool:
        return bool(self.segments) and self.segments[-1].reason == BOUNDARY

    def image_distance(self, spec: ImmersionSpec) -> float:
        return float(np.linalg.norm(evaluate(spec, self.end) - evaluate(spec, self.start)))

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "jumps": [dict(j) for j in self.jumps],
            "epsilon": self.epsilon, "curvature_bound": self.curvature_bound,
            "disk_radius": self.disk_radius, "C1": self.C1,
            "defect_bound": self.defect_bound, "measured_defect": self.measured_defect,
            "start": self.start.tolist(), "end": self.end.tolist(),
            "reached_boundary": self.reached_boundary, **self.meta,
        }

    def polyline_rows(self):
        """Rows ``(segment, x_1..x_m, y_1..y_d)`` through all traced samples."""
        for j, seg in enumerate(self.segments):
            for xs, ys in zip(seg.samples, seg.images):
                yield [j, *xs.tolist(), *ys.tolist()]


def _curvature_max(spec: ImmersionSpec, points: np.ndarray) -> float:
    pts = points[spec.analysis_mask(points)]
    pts = pts[np.linalg.norm(pts, axis=1) <= spec.jet_radius() + 1e-12]
    if not len(pts):
        return 0.0
    return float(np.abs(second_form_field(spec, pts).components).max())


def chain_to_boundary(spec: ImmersionSpec, x, epsilon: float, field: NullityField,
                      C1: float = C1_DEFAULT, step: float | None = None,
                      tol: float | None = None, straight_tol: float = STRAIGHT_TOL) -> ChainPath:
    """Follow generators from ``x``, jumping down strata, until the boundary is hit."""
    if spec.d >= 2 * spec.m:
        raise PreconditionError("chaining needs d < 2m so that the nullity is positive")
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    tol = field.tol if tol is None else tol
    step = field.grid.spacing / 2 if step is None else step
    x = np.asarray(x, dtype=float)
    near = int(np.argmin(np.linalg.norm(field.points - x, axis=1)))
    if (np.linalg.norm(field.points[near] - x) > field.grid.spacing / 2
            or not field.open_flags[near]):
        raise PreconditionError("chain start must lie in a discrete open stratum O_j")

    segments, jumps, visited = [], [], [x[None]]
    p, reference = x, np.eye(spec.m)[0]
    for _ in range(spec.m + 1):
        kernel = nullity_index(spec, p, tol).kernel
        u = pick_direction(kernel.basis, reference)
        seg = trace_generator(spec, p, u, step=step, tol=tol, straight_tol=straight_tol)
        if segments:
            prev = segments[-1]
            jumps[-1]["theta"] = _angle(prev.direction, seg.direction)
            img_prev = prev.images[-1] - prev.images[0]
            img_next = seg.images[-1] - seg.images[0]
            jumps[-1]["theta_image"] = _angle(img_prev, img_next)
        segments.append(seg)
        visited.append(seg.samples)
        if seg.reason == BOUNDARY:
            break
        w = find_lower_nullity_neighbor(spec, seg.end, epsilon, field)
        nu_w = nullity_index(spec, w, tol).nu
        if nu_w >= seg.nu_end:
            raise ResolutionError("jump did not lower the nullity")
        jumps.append({"from": seg.end.tolist(), "to": w.tolist(),
                      "distance": float(np.linalg.norm(w - seg.end)),
                      "image_distance": float(np.linalg.norm(evaluate(spec, w) - evaluate(spec, seg.end))),
                      "nu_from": int(seg.nu_end), "nu_to": int(nu_w)})
        visited.append(w[None])
        p, reference = w, seg.direction
    else:
        raise ResolutionError("chain did not reach the boundary within m segments")

    end = segments[-1].end
    K = _curvature_max(spec, np.concatenate(visited))
    measured = abs(float(np.linalg.norm(end - x))
                   - float(np.linalg.norm(evaluate(spec, end) - evaluate(spec, x))))
    return ChainPath(segments, jumps, float(epsilon), K, DISK_RADIUS, float(C1),
                     chain_defect_bound(K, DISK_RADIUS, epsilon, C1), measured,
                     x.copy(), end.copy(),
                     meta={"family": spec.kind, "params": spec.params(), "step": step})


@dataclass(frozen=True)
class TransitivityResult:
    holds: bool
    defect: float
    bound: float
    inner_domain: float
    inner_image: float


def transitivity_check(spec: ImmersionSpec, x, z, y, tol: float = STRAIGHT_TOL) -> TransitivityResult:
    """If ``x-z`` and ``z-y`` are straight generators, so is ``x-y``.

    Uses the preserved inner product ``<phi(x)-phi(z), phi(y)-phi(z)> =
    <x-z, y-z>`` and the law of cosines.  The verdict tolerance composes the
    two leg tolerances: ``tol (1 + 2 (d_xz + d_zy) / (r_xy + d_xy))``.
    """
    x, z, y = (np.asarray(v, dtype=float) for v in (x, z, y))
    legs = [straightness_check(spec, x, z, tol=tol), straightness_check(spec, z, y, tol=tol)]
    if not all(leg.certified for leg in legs):
        raise PreconditionError("both legs must be certified straight generators")
    fx, fz, fy = evaluate(spec, np.stack([x, z, y]))
    inner_img = float((fx - fz) @ (fy - fz))
    inner_dom = float((x - z) @ (y - z))
    r_xy = math.sqrt(max(legs[0].r ** 2 + legs[1].r ** 2 - 2 * inner_img, 0.0))
    d_xy = float(np.linalg.norm(x - y))
    defect = abs(r_xy - d_xy)
    bound = tol * (1.0 + 2.0 * (legs[0].d + legs[1].d) / max(r_xy + d_xy, 1e-300))
    return TransitivityResult(defect <= bound, defect, bound, inner_dom, inner_img)


__all__ = [
    "StraightnessResult", "straightness_check", "GeneratorSegment", "trace_generator",
    "find_lower_nullity_neighbor", "chain_defect_bound", "ChainPath", "chain_to_boundary",
    "TransitivityResult", "transitivity_check", "pick_direction",
]
