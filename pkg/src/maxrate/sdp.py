"""Vector relaxation of the maximum-rate problem.

R_SDP = max sum_{i != j} Gamma_ij x_i . x_j over unit vectors x_j, solved by
cyclic block-coordinate ascent x_i <- g_i/|g_i| with g_i = sum_{j != i}
Gamma_ij x_j.  Each update increases the objective by 2(|g_i| - g_i.x_i) >= 0
(Cauchy-Schwarz), so the recorded objective history is exactly nondecreasing.
R_SDP certifies the sandwich R_SDP / 2 pi <= R* <= R_SDP up to an additive
term of order N Gamma0.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import numba

from . import kernels, spectral
from .errors import UnsupportedKernel
from .seeding import derive_seed, make_rng


@dataclass
class SdpResult:
    value: float
    vectors: np.ndarray
    iterations: int
    restarts_used: int
    converged: bool
    sandwich: tuple
    objective_history: np.ndarray = field(repr=False, default=None)
    n_isolated: int = 0


@numba.njit(cache=True)
def _ascent(g0, x, tol, max_sweeps, obj0):
    n, k = x.shape
    history = np.empty(max_sweeps + 1)
    history[0] = obj0
    obj = obj0
    sweeps = 0
    isolated = 0
    converged = False
    for s in range(max_sweeps):
        gain = 0.0
        isolated = 0
        for i in range(n):
            g = np.dot(g0[i], x)
            ng = 0.0
            for c in range(k):
                ng += g[c] * g[c]
            ng = math.sqrt(ng)
            if ng == 0.0:
                isolated += 1
                continue
            dot_old = 0.0
            for c in range(k):
                dot_old += g[c] * x[i, c]
            inc = 2.0 * (ng - dot_old)
            if inc > 0.0:
                gain += inc
            inv = 1.0 / ng
            for c in range(k):
                x[i, c] = g[c] * inv
        obj += gain
        sweeps = s + 1
        history[sweeps] = obj
        if gain <= tol * abs(obj):
            converged = True
            break
    return history[: sweeps + 1], sweeps, isolated, converged


def _objective(g0, x):
    return float(np.sum((g0 @ x) * x))


def _normalize_rows(x):
    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0.0] = 1.0
    x /= norms[:, None]
    return x


def relaxation_rank(n):
    """Burer-Monteiro rank ceil(sqrt(2N)) + 1 (above the Barvinok-Pataki bound)."""
    return min(n, int(math.ceil(math.sqrt(2.0 * n))) + 1)


def solve_sdp(matrix, tol=1e-9, max_iter=10000, restarts=2, seed=0):
    """Best block-coordinate ascent solution over ``restarts`` starts.

    Restart 0 replicates the principal eigenvector direction with small noise
    (the physically bright mode); the rest start uniformly at random.  The
    objective excludes the diagonal.  Complex-Hermitian input is rejected:
    the relaxation is over real vectors.
    """
    if isinstance(matrix, kernels.DissipativeMatrix):
        if matrix.kind != "real-symmetric":
            raise UnsupportedKernel("the SDP relaxation accepts real-symmetric matrices only")
        g = matrix.entries
    else:
        g = np.asarray(matrix)
        if np.iscomplexobj(g):
            raise UnsupportedKernel("the SDP relaxation accepts real-symmetric matrices only")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n = g.shape[0]
    k = relaxation_rank(n)
    g0 = np.ascontiguousarray(g, dtype=np.float64).copy()
    np.fill_diagonal(g0, 0.0)

    warm = None
    if n >= 2:
        try:
            warm = spectral.principal_eigenpair(
                kernels.DissipativeMatrix(g, "real-symmetric", 1.0), tol=1e-8).vector
        except Exception:
            warm = None

    best = None
    for r in range(restarts):
        rng = make_rng(derive_seed(seed, r))
        x = np.zeros((n, k))
        if r == 0 and warm is not None:
            x[:, 0] = np.where(np.real(warm) >= 0.0, 1.0, -1.0)
            x += 1e-3 * rng.standard_normal((n, k))
        else:
            x = rng.standard_normal((n, k))
        _normalize_rows(x)
        history, sweeps, isolated, converged = _ascent(g0, x, tol, max_iter, _objective(g0, x))
        value = _objective(g0, x)  # fresh evaluation of the final iterate
        if best is None or value > best.value:
            best = SdpResult(value, x, sweeps, restarts, converged,
                             (value / (2.0 * math.pi), value), history, isolated)
    return best
