"""Matrix representations of the dissipative operator for large ensembles.

Dense storage is used up to ``kernels.DENSE_LIMIT`` atoms; beyond that the
operator is exposed matrix-free, with entries recomputed blockwise during
matrix-vector products.  For the scalar kernel an exact low-rank spherical-wave
factorization Gamma = 4 pi Gamma0 B B^T is also available (B built from
spherical Bessel functions times real spherical harmonics), which is both
faster and lighter than dense storage once the column count drops below N.
"""

import math

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator

from . import kernels
from .errors import UnsupportedKernel

_BLOCK = 512


class DenseOperator:
    def __init__(self, matrix):
        self.matrix = matrix
        self.n = matrix.n
        self.gamma0 = matrix.gamma0
        self.dtype = matrix.entries.dtype
        self.description = "dense"

    def matvec(self, v):
        return self.matrix.entries @ v


class ScalarMatrixFreeOperator:
    """sinc-kernel matvec with entries recomputed in row blocks."""

    def __init__(self, positions, gamma0=1.0, k0=kernels.TWO_PI, block=_BLOCK):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.n = self.positions.shape[0]
        self.gamma0 = gamma0
        self.k0 = k0
        self.block = block
        self.dtype = np.float64
        self.description = "scalar-matrix-free"
        self._sq = np.sum(self.positions**2, axis=1)

    def _block_entries(self, i0, i1):
        pos = self.positions
        d2 = (self._sq[i0:i1, None] + self._sq[None, :]
              - 2.0 * (pos[i0:i1] @ pos.T))
        np.maximum(d2, 0.0, out=d2)
        r = np.sqrt(d2, out=d2)
        g = np.sinc(r * (self.k0 / math.pi))
        g *= self.gamma0
        g[np.arange(i1 - i0), np.arange(i0, i1)] = self.gamma0
        return g

    def matvec(self, v):
        v = np.asarray(v)
        out = np.empty(self.n, dtype=np.result_type(v.dtype, np.float64))
        for i0 in range(0, self.n, self.block):
            i1 = min(i0 + self.block, self.n)
            out[i0:i1] = self._block_entries(i0, i1) @ v
        return out


class TensorMatrixFreeOperator:
    def __init__(self, positions, polarization, gamma0=1.0, k0=kernels.TWO_PI, block=_BLOCK):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.n = self.positions.shape[0]
        self.polarization = np.asarray(polarization, dtype=np.float64)
        self.gamma0 = gamma0
        self.k0 = k0
        self.block = block
        self.dtype = np.float64
        self.description = "tensor-matrix-free"

    def _block_entries(self, i0, i1):
        pos = self.positions
        d = pos[i0:i1, None, :] - pos[None, :, :]
        r = np.linalg.norm(d, axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            proj = np.where(r > 0.0, (d @ self.polarization) / np.where(r > 0.0, r, 1.0), 0.0)
        g = kernels.tensor_pair_values(self.k0 * r, proj**2, self.gamma0)
        g[np.arange(i1 - i0), np.arange(i0, i1)] = self.gamma0
        return g

    def matvec(self, v):
        v = np.asarray(v)
        out = np.empty(self.n, dtype=np.result_type(v.dtype, np.float64))
        for i0 in range(0, self.n, self.block):
            i1 = min(i0 + self.block, self.n)
            out[i0:i1] = self._block_entries(i0, i1) @ v
        return out


# ------------------------------------------------- scalar spherical-wave factor

def _normalized_legendre_columns(ct, st, phi, J, B, lmax, dtype):
    """Fill B columns j_l(k0 r) * Ytilde_lm using stable normalized recurrences.

    Real spherical harmonics Ytilde_lm = Ptilde_lm(cos theta) * {1, sqrt2 cos(m phi),
    sqrt2 sin(m phi)} with the addition theorem sum_m Ytilde_lm(u) Ytilde_lm(u')
    = (2l+1)/(4 pi) P_l(u.u').  Only two running l-rows are kept per m.
    """
    n = ct.shape[0]
    sq2 = math.sqrt(2.0)
    col = 0
    pmm = np.full(n, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = pmm * (st * math.sqrt((2.0 * m + 1.0) / (2.0 * m)))
        if m == 0:
            trigs = (None,)
        else:
            trigs = (sq2 * np.cos(m * phi), sq2 * np.sin(m * phi))
        p_prev = None
        p = pmm
        for l in range(m, lmax + 1):
            if l == m + 1:
                p_prev, p = p, math.sqrt(2.0 * m + 3.0) * (ct * pmm)
            elif l > m + 1:
                a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = math.sqrt(((2.0 * l + 1.0) * ((l - 1.0) ** 2 - m * m))
                              / ((2.0 * l - 3.0) * (l * l - m * m)))
                p_prev, p = p, a * (ct * p) - b * p_prev
            base = J[l] * p
            for t in trigs:
                B[:, col] = base if t is None else base * t
                col += 1
    return col


def factor_column_count(k0_rmax):
    lmax = _factor_lmax(k0_rmax)
    return (lmax + 1) ** 2


def _factor_lmax(x):
    # spherical Bessel tail: j_l(x) decays superexponentially once l > x
    return int(math.ceil(x + 8.0 * x ** (1.0 / 3.0) + 15.0))


class ScalarFactorOperator:
    """Exact factorization Gamma = 4 pi Gamma0 B B^T for the sinc kernel.

    Columns with negligible magnitude (planar or collinear geometries kill
    whole m-sectors) are dropped, so K adapts to the geometry.
    """

    def __init__(self, positions, gamma0=1.0, k0=kernels.TWO_PI, dtype=np.float64,
                 drop_tol=1e-14):
        pos = np.ascontiguousarray(positions, dtype=np.float64)
        self.positions = pos
        self.n = pos.shape[0]
        self.gamma0 = gamma0
        self.k0 = k0
        self.dtype = np.float64
        self.description = "scalar-factorized"
        r = np.linalg.norm(pos, axis=1)
        lmax = _factor_lmax(k0 * max(float(r.max()), 1e-12))
        with np.errstate(invalid="ignore", divide="ignore"):
            ct = np.where(r > 0.0, pos[:, 2] / np.where(r > 0.0, r, 1.0), 1.0)
        st = np.sqrt(np.clip(1.0 - ct**2, 0.0, None))
        phi = np.arctan2(pos[:, 1], pos[:, 0])
        kr = k0 * r
        J = np.empty((lmax + 1, self.n))
        for l in range(lmax + 1):
            J[l] = special.spherical_jn(l, kr)
        B = np.empty((self.n, (lmax + 1) ** 2), dtype=dtype, order="F")
        _normalized_legendre_columns(ct, st, phi, J, B, lmax, dtype)
        del J
        keep = np.max(np.abs(B), axis=0) > drop_tol
        if keep.all():
            self.B = B
        else:
            self.B = np.asfortranarray(B[:, keep])
            del B
        self.k_columns = self.B.shape[1]

    def matvec(self, v):
        w = self.B.T @ np.asarray(v, dtype=self.B.dtype)
        out = self.B @ w
        return (4.0 * math.pi * self.gamma0) * out.astype(np.float64)


def to_linear_operator(op):
    if isinstance(op, kernels.DissipativeMatrix):
        op = DenseOperator(op)
    return LinearOperator((op.n, op.n), matvec=op.matvec, dtype=op.dtype), op


def make_operator(config, kernel, mode="auto"):
    """Pick a representation for (config, kernel).

    ``auto`` keeps matrices dense up to kernels.DENSE_LIMIT atoms; above that
    the scalar kernel uses the exact factorization when its column count is
    below N (blockwise matrix-free otherwise) and the tensor kernel goes
    matrix-free.  ``mode`` forces "dense", "matrix-free" or "factorized".
    """
    pos = config.positions if hasattr(config, "positions") else np.asarray(config, dtype=np.float64)
    n = pos.shape[0]
    if mode == "dense" or (mode == "auto" and n <= kernels.DENSE_LIMIT):
        return DenseOperator(kernels.build_matrix(pos, kernel))
    if isinstance(kernel, kernels.ScalarKernel):
        if mode == "matrix-free":
            return ScalarMatrixFreeOperator(pos, kernel.gamma0, kernel.k0)
        rmax = float(np.linalg.norm(pos, axis=1).max())
        if mode == "factorized" or factor_column_count(kernel.k0 * rmax) < n:
            return ScalarFactorOperator(pos, kernel.gamma0, kernel.k0)
        return ScalarMatrixFreeOperator(pos, kernel.gamma0, kernel.k0)
    if isinstance(kernel, kernels.TensorKernel):
        return TensorMatrixFreeOperator(pos, kernel.polarization, kernel.gamma0, kernel.k0)
    raise UnsupportedKernel(
        f"matrix-free mode is only available for scalar/tensor kernels, not {kernel!r}")
