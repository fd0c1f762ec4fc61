"""NumPy fallback for the compiled kernels in ``_ckernels.pyx``."""

import numpy as np

_CHUNK_BYTES = 32 * 2 ** 20


def pair_max_distance(A, B, symmetric=False, num_threads=1):
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise ValueError("point sets differ in dimension")
    na, nb = len(A), len(B)
    rows = max(1, _CHUNK_BYTES // (8 * max(nb, 1) * max(A.shape[1], 1)))
    best, bi, bj = -1.0, -1, -1
    cols = np.arange(nb)
    for start in range(0, na, rows):
        block = A[start:start + rows]
        sq = np.zeros((len(block), nb))
        for k in range(A.shape[1]):
            diff = block[:, k, None] - B[None, :, k]
            sq += diff * diff
        if symmetric:
            idx = np.arange(start, start + len(block))
            sq[cols[None, :] <= idx[:, None]] = -1.0
        flat = int(np.argmax(sq))
        i, j = divmod(flat, nb)
        if sq[i, j] > best:
            best, bi, bj = float(sq[i, j]), start + i, j
    if bi < 0:
        return 0.0, -1, -1
    return float(np.sqrt(best)), bi, bj


def flatness_residuals(forms, num_threads=1):
    forms = np.asarray(forms, dtype=float)
    first = np.einsum("naxw,nayz->nxyzw", forms, forms)
    second = np.einsum("naxz,nayw->nxyzw", forms, forms)
    n = len(forms)
    return np.abs(first - second).reshape(n, -1).max(axis=1) if n else np.zeros(0)


def strain_maxabs(jac, num_threads=1):
    jac = np.asarray(jac, dtype=float)
    g = np.einsum("nka,nkb->nab", jac, jac) - np.eye(jac.shape[2])[None]
    n = len(jac)
    return np.abs(g).reshape(n, -1).max(axis=1) if n else np.zeros(0)
