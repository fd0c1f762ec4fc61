"""Compare the compiled and NumPy kernels on grid-sized inputs.

    python benchmarks/bench_kernels.py --resolution 101 --repeat 3
"""

import argparse
import json
import timeit

import numpy as np

from nullitylab import kernels
from nullitylab.geometry import second_form_field
from nullitylab.immersion import BentFlapDisk, ConfinementTorus, DomainGrid, evaluate, jets


def workloads(resolution):
    grid = DomainGrid(2, resolution)
    pts = grid.points
    images = evaluate(ConfinementTorus(m=2, R_s=0.3), pts)
    forms = second_form_field(BentFlapDisk(), pts).components
    _, J, _ = jets(BentFlapDisk(), pts)
    return {
        "pair_max_distance": (lambda b: kernels.pair_max_distance(images, images, True, backend=b),
                              f"{len(images)} points, all pairs"),
        "flatness_residuals": (lambda b: kernels.flatness_residuals(forms, backend=b),
                               f"{len(forms)} forms"),
        "strain_maxabs": (lambda b: kernels.strain_maxabs(J, backend=b), f"{len(J)} jacobians"),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=101)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print machine-readable results")
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    rows = []
    for name, (fn, size) in workloads(args.resolution).items():
        times = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends}
        if len(backends) == 2:
            a, c = fn("python"), fn("cython")
            agree = bool(np.allclose(np.asarray(a[0] if isinstance(a, tuple) else a),
                                     np.asarray(c[0] if isinstance(c, tuple) else c), rtol=1e-12))
        else:
            agree = None
        rows.append({"kernel": name, "size": size, "seconds": times, "agree": agree,
                     "speedup": times["python"] / times["cython"] if "cython" in times else None})

    if args.json:
        print(json.dumps({"threads": kernels.num_threads(), "rows": rows}, indent=2))
        return
    print(f"threads: {kernels.num_threads()}  backends: {', '.join(backends)}")
    print(f"{'kernel':<20} {'size':<28} {'python s':>10} {'cython s':>10} {'speedup':>8}  agree")
    for r in rows:
        cy = r["seconds"].get("cython")
        print(f"{r['kernel']:<20} {r['size']:<28} {r['seconds']['python']:>10.4f} "
              f"{cy if cy is not None else float('nan'):>10.4f} "
              f"{r['speedup'] if r['speedup'] else float('nan'):>8.1f}  {r['agree']}")


if __name__ == "__main__":
    main()
