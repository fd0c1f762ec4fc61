"""Command-line front end: ``nullitylab {analyze,stratify,trace,span,cartan}``.

Exit codes: 0 success, 2 input error, 3 certificate or verdict failure,
4 resolution error.
"""

from __future__ import annotations

import argparse
import ast
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import (CertificationError, NullityLabError, ResolutionError, ValidationError)
from .generators import STRAIGHT_TOL, chain_to_boundary, trace_generator
from .geometry import ISOMETRY_REJECT, codazzi_field, second_form_field
from .immersion import (FAMILIES, DomainGrid, ConfinementTorus, load_sampled_grid,
                        make_family)
from .io import write_csv, write_field_csv, write_json
from .nullity import RANK_TOL, FlatForm, cartan_null_vector, kernel_basis, stratify
from .span import SAMPLERS, confinement_report

EXIT_OK, EXIT_INPUT, EXIT_VERDICT, EXIT_RESOLUTION = 0, 2, 3, 4
CERT_SCHEMA = "nullitylab.isometry-certificate"
SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    command: str
    family: str | None = None
    params: dict = field(default_factory=dict)
    grid_file: str | None = None
    resolution: int = 101
    tol_isometry: float = 1e-6
    tol_rank: float = RANK_TOL
    tol_straight: float = STRAIGHT_TOL
    epsilons: tuple = (0.05,)
    out_dir: Path = Path(".")
    fmt: str = "both"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.resolution < 21 or self.resolution % 2 == 0:
            raise ValidationError(f"resolution must be odd and >= 21, got {self.resolution}")
        for name in ("tol_isometry", "tol_rank", "tol_straight"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name.replace('_', '-')} must be positive")
        eps = list(self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValidationError("epsilon values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("epsilon schedule must be strictly decreasing")
        if (self.family is None) == (self.grid_file is None) and self.command != "cartan":
            raise ValidationError("give exactly one of --family or --grid")

    @property
    def writes_json(self) -> bool:
        return self.fmt in ("json", "both")

    @property
    def writes_csv(self) -> bool:
        return self.fmt in ("csv", "both")

    def describe(self) -> dict:
        return {"command": self.command, "family": self.family, "params": self.params,
                "grid_file": self.grid_file, "resolution": self.resolution,
                "tol_isometry": self.tol_isometry, "tol_rank": self.tol_rank,
                "tol_straight": self.tol_straight, "epsilon": list(self.epsilons),
                "seed": self.seed}


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"--param expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(val.strip())
    return out


def _parse_vector(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ValidationError(f"cannot parse vector {text!r}") from exc


def _load_spec(cfg: RunConfig):
    if cfg.grid_file is not None:
        if not Path(cfg.grid_file).exists():
            raise ValidationError(f"grid file {cfg.grid_file} does not exist")
        return load_sampled_grid(cfg.grid_file)
    return make_family(cfg.family, **cfg.params)


def _certificate_status(strain: float, tol: float) -> str:
    if strain <= tol:
        return "PASS"
    if strain <= ISOMETRY_REJECT:
        return "WARN"
    return "FAIL"


def _usable_points(spec, grid: DomainGrid) -> np.ndarray:
    pts = grid.points
    keep = spec.analysis_mask(pts)
    if spec.uses_stencil:
        keep &= np.linalg.norm(pts, axis=1) <= spec.jet_radius() + 1e-12
    return pts[keep]


def _header(cfg: RunConfig, spec, kind: str) -> dict:
    return {"schema": kind, "schema_version": SCHEMA_VERSION, "config": cfg.describe(),
            "family": spec.kind, "params": spec.params(), "m": spec.m, "d": spec.d,
            "version": __version__}


def cmd_analyze(cfg: RunConfig) -> int:
    spec = _load_spec(cfg)
    grid = DomainGrid(spec.m, cfg.resolution)
    pts = _usable_points(spec, grid)
    f = second_form_field(spec, pts)
    gauss = kernels.flatness_residuals(f.components)
    codazzi = codazzi_field(spec, pts)
    strain = float(f.strain_max.max())
    status = _certificate_status(strain, cfg.tol_isometry)
    finite = codazzi[np.isfinite(codazzi)]
    cert = _header(cfg, spec, CERT_SCHEMA)
    cert.update({
        "status": status, "max_strain": strain, "tol_isometry": cfg.tol_isometry,
        "reject_threshold": ISOMETRY_REJECT, "points": int(len(pts)),
        "max_gauss_residual": float(gauss.max()),
        "max_codazzi_residual": float(finite.max()) if finite.size else None,
        "codazzi_points": int(finite.size),
    })
    sff = _header(cfg, spec, "nullitylab.second-form-summary")
    sff.update({"max_abs_component": float(np.abs(f.components).max()),
                "max_tangential_part": float(f.tangential_max.max()),
                "codimension": spec.d - spec.m, "points": int(len(pts))})
    out = cfg.out_dir
    if cfg.writes_json:
        write_json(out / "certificate.json", cert)
        write_json(out / "sff_summary.json", sff)
    if cfg.writes_csv:
        write_field_csv(out / "strain.csv", pts, {"value": f.strain_max})
        write_field_csv(out / "gauss.csv", pts, {"value": gauss})
        write_field_csv(out / "codazzi.csv", pts, {"value": codazzi})
    print(f"analyze {spec.kind}: certificate {status} (max strain {strain:.3e})")
    if status == "FAIL":
        print(f"  strain {strain:.3e} exceeds {ISOMETRY_REJECT:g}; not an isometric immersion",
              file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def cmd_stratify(cfg: RunConfig) -> int:
    spec = _load_spec(cfg)
    fld = stratify(spec, DomainGrid(spec.m, cfg.resolution), cfg.tol_rank)
    out = cfg.out_dir
    if cfg.writes_json:
        summary = _header(cfg, spec, "nullitylab.strata")
        summary.update(fld.summary())
        write_json(out / "strata.json", summary)
    if cfg.writes_csv:
        write_field_csv(out / "nullity.csv", fld.points,
                        {"nu": fld.nu, "stratum": fld.labels, "open": fld.open_flags})
    print(f"stratify {spec.kind}: index sequence {fld.index_sequence}, "
          f"counts {fld.stratum_counts()}, open coverage {fld.open_coverage():.4f}")
    return EXIT_OK


def _refinement_slopes(eps, defects) -> list:
    out = []
    for (e0, d0), (e1, d1) in zip(zip(eps, defects), zip(eps[1:], defects[1:])):
        if d0 > 0 and d1 > 0:
            out.append(math.log(d0 / d1) / math.log(e0 / e1))
        else:
            out.append(None)
    return out


def cmd_trace(cfg: RunConfig) -> int:
    spec = _load_spec(cfg)
    point = _parse_vector(cfg.extra.get("point"))
    point = np.zeros(spec.m) if point is None else point
    direction = _parse_vector(cfg.extra.get("direction"))
    grid = DomainGrid(spec.m, cfg.resolution)
    out = cfg.out_dir
    m, d = spec.m, spec.d
    poly_header = ["run", "segment"] + [f"x_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(d)]
    if direction is not None:
        seg = trace_generator(spec, point, direction, step=grid.spacing / 2, tol=cfg.tol_rank,
                              straight_tol=cfg.tol_straight)
        report = _header(cfg, spec, "nullitylab.generator")
        report["segment"] = seg.to_dict()
        rows = [[0, 0, *x.tolist(), *y.tolist()] for x, y in zip(seg.samples, seg.images)]
        summary = f"trace {spec.kind}: segment length {seg.length:.6f}, stop: {seg.reason}"
    else:
        fld = stratify(spec, grid, cfg.tol_rank)
        chains = [chain_to_boundary(spec, point, e, fld, tol=cfg.tol_rank, straight_tol=cfg.tol_straight)
                  for e in cfg.epsilons]
        report = _header(cfg, spec, "nullitylab.chain")
        report["runs"] = [c.to_dict() for c in chains]
        report["refinement_slopes"] = _refinement_slopes(
            list(cfg.epsilons), [c.measured_defect for c in chains])
        rows = [[k, *row] for k, c in enumerate(chains) for row in c.polyline_rows()]
        c = chains[0]
        summary = (f"trace {spec.kind}: {len(c.segments)}-segment chain to {c.end.round(6).tolist()}, "
                   f"defect {c.measured_defect:.3e} <= bound {c.defect_bound:.3e}")
    if cfg.writes_json:
        write_json(out / "chain.json", report)
    if cfg.writes_csv:
        write_csv(out / "polyline.csv", poly_header, rows)
    print(summary)
    return EXIT_OK


def cmd_span(cfg: RunConfig) -> int:
    spec = _load_spec(cfg)
    grid = DomainGrid(spec.m, cfg.resolution)
    reports = [confinement_report(spec, grid, e, sampler=cfg.extra.get("sampler", "boundary-center"),
                                  tol=cfg.tol_rank) for e in cfg.epsilons]
    out = cfg.out_dir
    payload = _header(cfg, spec, "nullitylab.confinement")
    payload["reports"] = [r.to_dict() for r in reports]
    if cfg.writes_json:
        write_json(out / "confinement.json", payload)
        (out / "confinement.txt").write_text("".join(r.to_text() for r in reports))
    if cfg.writes_csv:
        write_csv(out / "span.csv",
                  ["epsilon", "span_estimate", "enclosing_radius", "max_strain", "passed"],
                  [[r.epsilon, r.span_estimate.value, r.enclosing_radius,
                    r.isometry_max_strain, r.passed] for r in reports])
    r = reports[0]
    print(f"span {spec.kind}: span {r.span_estimate.value:.6f}, enclosing radius "
          f"{r.enclosing_radius:.6f}, verdict: {r.verdict or r.isometry_status}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERDICT


def _sweep_families(rng: np.random.Generator):
    """Random members of the isometric families used by the Cartan sweep."""
    return [
        lambda: make_family("plane"),
        lambda: make_family("cylinder", radius=float(rng.uniform(0.2, 2.0)),
                            axis_angle=float(rng.uniform(0.0, math.pi))),
        lambda: make_family("cone", apex_offset=float(rng.uniform(1.2, 3.0)),
                            opening=float(rng.uniform(0.2, 1.2))),
        lambda: make_family("bent-flap-disk", kappa_max=float(rng.uniform(0.5, 8.0))),
        lambda: ConfinementTorus(m=2, R_s=float(rng.uniform(0.05, 1.0))),
    ]


def _random_disk_point(rng: np.random.Generator, m: int, radius: float = 0.98) -> np.ndarray:
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v) * radius * rng.uniform() ** (1.0 / m)


def cartan_sweep(n: int, seed: int, tol_rank: float = RANK_TOL, inject_asymmetric: bool = False) -> dict:
    rng = np.random.default_rng(seed)
    makers = _sweep_families(rng)
    max_residual, min_margin, max_component = 0.0, None, 0.0
    violations, cartan_runs, skipped = 0, 0, 0
    per_family: dict = {}
    for i in range(n):
        spec = makers[i % len(makers)]()
        x = _random_disk_point(rng, spec.m)
        while not spec.analysis_mask(x[None])[0]:
            x = _random_disk_point(rng, spec.m)
        form = FlatForm(second_form_field(spec, x[None]).components[0])
        nu = kernel_basis(form, tol_rank).nu
        max_component = max(max_component, float(np.abs(form.components).max()))
        margin = nu - (2 * spec.m - spec.d)
        min_margin = margin if min_margin is None else min(min_margin, margin)
        violations += int(margin < 0)
        stats = per_family.setdefault(spec.kind, {"samples": 0, "cartan_runs": 0, "skipped": 0})
        stats["samples"] += 1
        if form.dimV > form.dimU:
            res = cartan_null_vector(form).residual
            max_residual = max(max_residual, res)
            cartan_runs += 1
            stats["cartan_runs"] += 1
        else:
            skipped += 1
            stats["skipped"] += 1
    summary = {"schema": "nullitylab.cartan-sweep", "schema_version": SCHEMA_VERSION,
               "samples": n, "seed": seed, "cartan_runs": cartan_runs,
               "skipped_dimV_le_dimU": skipped, "max_residual": max_residual,
               "min_nullity_margin": min_margin, "violations": violations,
               "max_abs_component": max_component,
               "per_family": per_family}
    if skipped:
        summary["note"] = "forms with dim V <= dim U skipped by the null-vector construction"
    if inject_asymmetric:
        comps = np.zeros((1, 2, 2))
        comps[0, 0, 1] = 1.0
        try:
            FlatForm(comps)
        except ValidationError as exc:
            summary["asymmetric_injection"] = {"rejected": True, "error": str(exc)}
        else:
            summary["asymmetric_injection"] = {"rejected": False}
            violations += 1
            summary["violations"] = violations
    return summary


def cmd_cartan(cfg: RunConfig) -> int:
    n = int(cfg.extra.get("samples", 1000))
    if n < 1:
        raise ValidationError("--samples must be positive")
    summary = cartan_sweep(n, cfg.seed, cfg.tol_rank, bool(cfg.extra.get("inject_asymmetric")))
    summary["config"] = cfg.describe()
    if cfg.writes_json:
        write_json(cfg.out_dir / "cartan_sweep.json", summary)
    if cfg.writes_csv:
        write_csv(cfg.out_dir / "cartan_sweep.csv", ["family", "samples", "cartan_runs", "skipped"],
                  [[k, v["samples"], v["cartan_runs"], v["skipped"]]
                   for k, v in sorted(summary["per_family"].items())])
    print(f"cartan sweep: {n} forms, {summary['violations']} violations, "
          f"max residual {summary['max_residual']:.3e}, "
          f"min nu - (2m - d) = {summary['min_nullity_margin']}")
    return EXIT_VERDICT if summary["violations"] else EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "stratify": cmd_stratify, "trace": cmd_trace,
            "span": cmd_span, "cartan": cmd_cartan}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("input")
    src.add_argument("--family", choices=sorted(FAMILIES), help="built-in immersion family")
    src.add_argument("--param", action="append", metavar="KEY=VALUE",
                     help="family parameter (repeatable)")
    src.add_argument("--grid", metavar="FILE", help="sampled-grid JSON or NPZ file")
    common.add_argument("--resolution", type=int, default=101, help="nodes per axis (odd, >= 21)")
    common.add_argument("--tol-isometry", type=float, default=1e-6,
                        help="max strain for a PASS certificate")
    common.add_argument("--tol-rank", type=float, default=RANK_TOL,
                        help="relative singular value threshold for the nullity")
    common.add_argument("--tol-straight", type=float, default=STRAIGHT_TOL,
                        help="length-defect tolerance for straight generators")
    common.add_argument("--epsilon", type=float, nargs="+", default=[0.05],
                        help="jump radius schedule (strictly decreasing)")
    common.add_argument("--seed", type=int, default=0, help="RNG seed for property sweeps")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")

    parser = argparse.ArgumentParser(prog="nullitylab",
                                     description="Isometric immersions of flat disks: "
                                                 "certificates, nullity strata, generators, span.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="strain, second form and residual fields")
    sub.add_parser("stratify", parents=[common], help="relative nullity strata")
    p = sub.add_parser("trace", parents=[common], help="generator chain to the boundary")
    p.add_argument("--point", help="start point, comma separated (default: center)")
    p.add_argument("--direction", help="trace one generator along this direction instead")
    p = sub.add_parser("span", parents=[common], help="span and confinement report")
    p.add_argument("--sampler", choices=SAMPLERS, default="boundary-center")
    p = sub.add_parser("cartan", parents=[common], help="null-vector sweep over flat forms")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--inject-asymmetric", action="store_true",
                   help="also feed one asymmetric form to check it is rejected")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    extra = {k: getattr(args, k) for k in ("point", "direction", "sampler", "samples",
                                            "inject_asymmetric") if getattr(args, k, None) is not None}
    return RunConfig(command=args.command, family=args.family, params=_parse_params(args.param),
                     grid_file=args.grid, resolution=args.resolution,
                     tol_isometry=args.tol_isometry, tol_rank=args.tol_rank,
                     tol_straight=args.tol_straight, epsilons=tuple(args.epsilon),
                     out_dir=args.out_dir, fmt=args.format, seed=args.seed, extra=extra)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[cfg.command](cfg)
    except ResolutionError as exc:
        print(f"resolution error: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except CertificationError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (NullityLabError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
