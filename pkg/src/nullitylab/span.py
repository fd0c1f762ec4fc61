"""Domain and image distances, the span of an immersion and the confinement verdict."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NullityLabError, PreconditionError
from .generators import C1_DEFAULT, chain_to_boundary
from .geometry import ISOMETRY_REJECT, isometry_status
from .immersion import DomainGrid, ImmersionSpec, _check_in_disk, evaluate, jets
from .nullity import RANK_TOL, stratify

REPORT_SCHEMA = "nullitylab.confinement-report"
REPORT_VERSION = 1
SAMPLERS = ("boundary-center", "dense")
WITNESS_FACTOR = 10.0


def domain_distance(x, y) -> float:
    x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    _check_in_disk(np.stack([x, y]))
    return float(np.linalg.norm(x - y))


def image_distance(spec: ImmersionSpec, x, y) -> float:
    fx, fy = evaluate(spec, np.stack([np.atleast_1d(np.asarray(v, float)) for v in (x, y)]))
    return float(np.linalg.norm(fx - fy))


@dataclass(frozen=True)
class SpanEstimate:
    value: float
    pair: tuple
    sampler: str
    resolution: int
    n_points: int
    n_pairs: int

    def to_dict(self) -> dict:
        return {"value": self.value, "pair": [list(p) for p in self.pair],
                "sampler": self.sampler, "resolution": self.resolution,
                "n_points": self.n_points, "n_pairs": self.n_pairs}


def _sample_points(spec: ImmersionSpec, grid: DomainGrid):
    pts = grid.points
    keep = spec.analysis_mask(pts)
    return pts, keep


def span(spec: ImmersionSpec, grid: DomainGrid | None = None, sampler: str = "boundary-center",
         resolution: int = 101) -> SpanEstimate:
    """Largest image distance over sampled node pairs.

    ``boundary-center`` compares all pairs of boundary nodes and the center
    against every node; ``dense`` compares all node pairs (quadratic cost).
    """
    if sampler not in SAMPLERS:
        raise PreconditionError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    grid = DomainGrid(spec.m, resolution) if grid is None else grid
    pts, keep = _sample_points(spec, grid)
    images = np.zeros((len(pts), spec.d))
    images[keep] = evaluate(spec, pts[keep])
    idx = np.flatnonzero(keep)
    if sampler == "dense":
        val, i, j = kernels.pair_max_distance(images[idx], images[idx], True)
        pair = (idx[i], idx[j]) if i >= 0 else (idx[0], idx[0])
        n_pairs = len(idx) * (len(idx) - 1) // 2
    else:
        bnd = idx[grid.boundary_flags[idx]]
        val, i, j = kernels.pair_max_distance(images[bnd], images[bnd], True)
        pair = (bnd[i], bnd[j]) if i >= 0 else (bnd[0], bnd[0])
        c = grid.center_index
        cval, _, cj = kernels.pair_max_distance(images[[c]], images[idx], False)
        if cval > val:
            val, pair = cval, (c, idx[cj])
        n_pairs = len(bnd) * (len(bnd) - 1) // 2 + len(idx)
    return SpanEstimate(float(val), tuple(tuple(pts[k].tolist()) for k in pair), sampler,
                        grid.resolution, int(len(idx)), int(n_pairs))


def enclosing_radius(spec: ImmersionSpec, grid: DomainGrid) -> float:
    """Radius of the smallest origin-centered ball holding the sampled image."""
    pts, keep = _sample_points(spec, grid)
    return float(np.linalg.norm(evaluate(spec, pts[keep]), axis=1).max())


@dataclass
class ConfinementReport:
    m: int
    d: int
    family: str
    params: dict
    isometry_max_strain: float
    isometry_status: str
    span_estimate: SpanEstimate
    enclosing_radius: float
    low_codimension: bool
    witness: dict | None
    verdict: str | None
    passed: bool
    epsilon: float
    resolution: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA, "schema_version": REPORT_VERSION,
            "family": self.family, "params": self.params, "m": self.m, "d": self.d,
            "isometry_max_strain": self.isometry_max_strain,
            "isometry_status": self.isometry_status,
            "span_estimate": self.span_estimate.to_dict(),
            "enclosing_radius": self.enclosing_radius,
            "low_codimension": self.low_codimension,
            "witness": self.witness, "verdict": self.verdict, "passed": self.passed,
            "epsilon": self.epsilon, "resolution": self.resolution, "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"family            {self.family} (m={self.m}, d={self.d})",
            f"max strain        {self.isometry_max_strain:.3e} [{self.isometry_status}]",
            f"span estimate     {self.span_estimate.value:.9f} ({self.span_estimate.sampler})",
            f"enclosing radius  {self.enclosing_radius:.9f}",
            f"d < 2m            {'yes' if self.low_codimension else 'no'}",
        ]
        if self.witness:
            w = self.witness
            lines.append(f"witness q         {w['q']} |r(center,q) - 1| = {w['defect']:.3e} "
                         f"(bound {w['defect_bound']:.3e})")
        lines.append(f"verdict           {self.verdict or 'none'}")
        lines.extend(f"note              {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def confinement_report(spec: ImmersionSpec, grid: DomainGrid, epsilon: float = 0.05,
                       sampler: str = "boundary-center", tol: float = RANK_TOL,
                       C1: float = C1_DEFAULT, chain_field=None) -> ConfinementReport:
    """Span, enclosing ball and, when ``d < 2m``, the chain witness from the center."""
    pts, keep = _sample_points(spec, grid)
    usable = pts[keep]
    if spec.uses_stencil:
        usable = usable[np.linalg.norm(usable, axis=1) <= spec.jet_radius() + 1e-12]
    _, J, _ = jets(spec, usable)
    strain = float(kernels.strain_maxabs(J).max())
    status = isometry_status(strain)
    est = span(spec, grid, sampler)
    radius = enclosing_radius(spec, grid)
    applicable = spec.d < 2 * spec.m
    notes, witness, verdict, passed = [], None, None, False
    if strain > ISOMETRY_REJECT:
        status = "NOT ISOMETRIC"
        notes.append(f"strain {strain:.3e} exceeds {ISOMETRY_REJECT:g}; no verdict issued")
    elif applicable:
        fld = chain_field if chain_field is not None else stratify(spec, grid, tol)
        try:
            chain = chain_to_boundary(spec, np.zeros(spec.m), epsilon, fld, C1=C1, tol=tol)
        except NullityLabError as exc:
            notes.append(f"chain failed: {exc}")
            verdict = "WITNESS FAILED"
        else:
            r = chain.image_distance(spec)
            defect = abs(r - 1.0)
            on_boundary = abs(float(np.linalg.norm(chain.end)) - 1.0) <= 1e-9
            witness = {"q": chain.end.tolist(), "r_center_q": r, "defect": defect,
                       "defect_bound": chain.defect_bound, "curvature_bound": chain.curvature_bound,
                       "segments": len(chain.segments), "jumps": len(chain.jumps),
                       "on_boundary": on_boundary}
            passed = (on_boundary and defect <= WITNESS_FACTOR * epsilon
                      and est.value >= 1.0 - WITNESS_FACTOR * epsilon)
            verdict = ("NOT CONFINABLE: span >= 1 since d < 2m" if passed
                       else "WITNESS FAILED")
    else:
        passed = True
        verdict = f"CONFINABLE: image inside the ball of radius {radius:.6g} since d >= 2m"
    return ConfinementReport(spec.m, spec.d, spec.kind, spec.params(), strain, status, est,
                             radius, applicable, witness, verdict, passed, float(epsilon),
                             grid.resolution, notes)


__all__ = ["domain_distance", "image_distance", "SpanEstimate", "span", "enclosing_radius",
           "ConfinementReport", "confinement_report", "SAMPLERS"]
