"""Principal eigenpair of the dissipative matrix and rate bounds.

The maximum emission rate R* obeys
    max(N Gamma0, Gamma_max ||psi_max||_1^2 / 4)  <=  R*  <=  N Gamma_max,
with psi_max the L2-normalized principal eigenvector.  The Gelfand trace
estimate (Tr Gamma^m)^(1/m) sandwiches Gamma_max between itself and
N^(1/m) Gamma_max and serves as a numerical diagnostic.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh

from . import kernels, operators
from .errors import EigensolverFailure, UnsupportedKernel

DENSE_EIG_MAX = 1400     # full eigh below this, restarted Lanczos above
_PSD_EPS = 1e-8


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float
    degenerate: bool = False


@dataclass
class SpectralResult:
    gamma_max: float
    psi_max: np.ndarray
    l1_sq: float
    lower_bound: float
    upper_bound: float
    iterations: int
    residual: float
    degenerate: bool = False


@dataclass
class GelfandEstimate:
    m: int
    value: float


def _fix_phase(psi):
    j = int(np.argmax(np.abs(psi)))
    pivot = psi[j]
    if np.iscomplexobj(psi):
        return psi * (np.conj(pivot) / abs(pivot))
    return -psi if pivot < 0 else psi


def _residual(matvec, lam, psi):
    return float(np.linalg.norm(matvec(psi) - lam * psi))


def principal_eigenpair(matrix, tol=1e-10, max_iter=20000):
    """(Gamma_max, psi_max) with ||G psi - Gamma_max psi|| <= tol * Gamma_max.

    Accepts a DissipativeMatrix, a plain ndarray, or any operator from
    maxrate.operators.  Dense inputs below DENSE_EIG_MAX go through a full
    symmetric eigendecomposition; larger ones (and matrix-free operators) use
    implicitly restarted Lanczos with a power-iteration fallback.  The phase
    is fixed so the largest-magnitude entry of psi is real positive.  A
    ``degenerate`` flag is set when the top gap is below tol * Gamma_max; the
    returned vector is then one representative of the top eigenspace.
    """
    if isinstance(matrix, np.ndarray):
        matrix = kernels.DissipativeMatrix(
            matrix, "complex-hermitian" if np.iscomplexobj(matrix) else "real-symmetric",
            gamma0=1.0)
    if tol <= 0:
        raise ValueError("tol must be positive")

    dense = matrix.entries if isinstance(matrix, kernels.DissipativeMatrix) else None
    n = matrix.n
    if n == 1:
        val = float(np.real(dense[0, 0])) if dense is not None else float(matrix.matvec(np.ones(1))[0])
        return EigenPair(val, np.ones(1), 0, 0.0)

    if dense is not None and n <= DENSE_EIG_MAX:
        w, v = scipy.linalg.eigh(dense)
        lam, psi = float(w[-1]), v[:, -1]
        gap = lam - float(w[-2])
        psi = _fix_phase(psi)
        res = _residual(lambda x: dense @ x, lam, psi)
        return EigenPair(lam, psi, 1, res / max(abs(lam), 1e-300),
                         degenerate=gap < tol * abs(lam))

    linop, op = operators.to_linear_operator(matrix)
    counter = {"mv": 0}
    mv = linop.matvec

    def counting(v):
        counter["mv"] += 1
        return mv(v)

    clinop = LinearOperator((n, n), matvec=counting, dtype=linop.dtype)
    v0 = np.random.default_rng(0x5EED).standard_normal(n)
    k = min(4, n - 1)
    ncv = min(n, max(32, 4 * k + 8))
    best = None
    arpack_tol = tol * 0.1
    for attempt in range(3):
        try:
            vals, vecs = eigsh(clinop, k=k, which="LA", tol=arpack_tol,
                               maxiter=max_iter, ncv=ncv, v0=v0)
        except ArpackNoConvergence as exc:
            vals, vecs = exc.eigenvalues, exc.eigenvectors
            if vals is None or len(vals) == 0:
                vals, vecs = _power_iteration(counting, n, tol, max_iter)
        except ArpackError:
            vals, vecs = _power_iteration(counting, n, tol, max_iter)
        order = np.argsort(vals)
        lam = float(vals[order[-1]])
        psi = vecs[:, order[-1]]
        psi = psi / np.linalg.norm(psi)
        res = _residual(mv, lam, psi) / max(abs(lam), 1e-300)
        gap = lam - float(vals[order[-2]]) if len(vals) > 1 else np.inf
        if best is None or res < best[2]:
            best = (lam, psi, res, gap)
        if res <= tol:
            break
        v0 = np.real(psi) if not np.iscomplexobj(v0) else psi
        arpack_tol *= 0.01
    lam, psi, res, gap = best
    if res > tol:
        raise EigensolverFailure(
            f"eigensolver residual {res:.3e} above tol {tol:.1e} after {counter['mv']} matvecs",
            best_residual=res)
    psi = _fix_phase(psi)
    return EigenPair(lam, psi, counter["mv"], res, degenerate=gap < tol * abs(lam))


def _power_iteration(matvec, n, tol, max_iter):
    rng = np.random.default_rng(0xF01)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w /= nw
        if np.linalg.norm(w - v) < 0.1 * tol:
            v = w
            break
        v = w
    return np.array([lam]), v[:, None]


def l1_norm_squared(psi):
    """(sum_j |psi_j|)^2 for an L2-normalized vector."""
    psi = np.asarray(psi)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("psi must be L2-normalized to 1e-10")
    return float(np.sum(np.abs(psi)) ** 2)


def rate_bounds(gamma_max, l1_sq, n, gamma0):
    """max(N Gamma0, Gamma_max l1^2/4) <= R* <= N Gamma_max."""
    if gamma_max <= 0 or gamma0 <= 0 or n < 1:
        raise ValueError("inputs must be positive")
    lower = max(n * gamma0, gamma_max * l1_sq / 4.0)
    upper = n * gamma_max
    return lower, upper


def spectral_result(matrix_or_op, gamma0=None, tol=1e-10, max_iter=20000):
    """Principal eigenpair plus L1 norm and the rate bounds, in one record."""
    op = matrix_or_op
    if isinstance(op, np.ndarray):
        op = kernels.DissipativeMatrix(
            op, "complex-hermitian" if np.iscomplexobj(op) else "real-symmetric",
            gamma0 if gamma0 is not None else 1.0)
    g0 = gamma0 if gamma0 is not None else op.gamma0
    pair = principal_eigenpair(op, tol=tol, max_iter=max_iter)
    l1 = l1_norm_squared(pair.vector)
    lower, upper = rate_bounds(pair.value, l1, op.n, g0)
    return SpectralResult(pair.value, pair.vector, l1, lower, upper,
                          pair.iterations, pair.residual, pair.degenerate)


def psd_project(entries, gamma0=1.0):
    """Clamp tiny negative roundoff eigenvalues to zero.

    Eigenvalues below -1e-8 * N * gamma0 are treated as genuine PSD
    violations and raise ValueError.
    """
    w, v = scipy.linalg.eigh(entries)
    floor = -_PSD_EPS * entries.shape[0] * gamma0
    if w[0] < floor:
        raise ValueError(f"matrix has eigenvalue {w[0]:.3e} below the PSD roundoff floor {floor:.3e}")
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T, w


def gelfand_estimate(matrix, m, n_probes=32, seed=0):
    """(Tr Gamma^m)^(1/m) after PSD projection; sandwiches Gamma_max.

    Even m only (kernel matrices carry tiny negative roundoff eigenvalues).
    Dense matrices up to 2048 atoms use the full spectrum; larger inputs and
    operators fall back to a Hutchinson trace estimate with ``n_probes``
    Rademacher probes (no projection; for even m the roundoff contribution is
    positive and negligible).
    """
    if m < 2 or m % 2 != 0:
        raise ValueError("m must be an even integer >= 2")
    dense = matrix.entries if isinstance(matrix, kernels.DissipativeMatrix) else None
    if dense is None and isinstance(matrix, np.ndarray):
        dense = matrix
        matrix = kernels.DissipativeMatrix(dense, "real-symmetric", 1.0)
    if dense is not None and matrix.n <= 2048:
        _, w = psd_project(dense, matrix.gamma0)
        top = float(w[-1])
        if top <= 0:
            return GelfandEstimate(m, 0.0)
        s = float(np.sum((w / top) ** m))
        return GelfandEstimate(m, top * s ** (1.0 / m))
    linop, op = operators.to_linear_operator(matrix)
    rng = np.random.default_rng(seed)
    n = op.n
    acc = 0.0
    for _ in range(n_probes):
        z = rng.integers(0, 2, size=n) * 2.0 - 1.0
        v = z
        for _ in range(m):
            v = linop.matvec(v)
        acc += float(np.real(np.vdot(z, v)))
    tr = acc / n_probes
    return GelfandEstimate(m, max(tr, 0.0) ** (1.0 / m))


def product_state_rate(config, kernel, direction):
    """Instantaneous decay rate of the phased product state driven along ``direction``.

    R = N Gamma0 / 2 + (1/4) sum_{i != j} Gamma_ij cos(k0 n.(r_i - r_j)),
    evaluated through two quadratic forms so it works matrix-free as well.
    """
    if not isinstance(kernel, kernels.FREE_SPACE_KERNELS):
        raise UnsupportedKernel("product_state_rate expects a scalar or tensor kernel")
    op = operators.make_operator(config, kernel)
    pos = config.positions if hasattr(config, "positions") else np.asarray(config)
    return product_state_rate_from_operator(op, pos, kernel.k0, kernel.gamma0, direction)


def product_state_rate_from_operator(op, positions, k0, gamma0, direction):
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    phase = k0 * (positions @ direction)
    c, s = np.cos(phase), np.sin(phase)
    quad = float(np.real(c @ op.matvec(c) + s @ op.matvec(s)))
    n = positions.shape[0]
    # quad = sum_{i!=j} Gamma_ij cos(phi_i - phi_j) + N Gamma0
    return n * gamma0 / 4.0 + quad / 4.0
