"""Dissipative interaction matrices for several electromagnetic environments.

Entries are collective decay rates between atom pairs.  The scalar kernel is
Gamma0 * sin(k0 r)/(k0 r); the tensor kernel contracts the imaginary part of
the free-space Green's tensor with the atomic polarization; cavity and
waveguide kernels are low-rank cosine Gram forms; the directional kernel
integrates the dipole emission pattern over a spherical detection cap.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureFailure, UnsupportedKernel

TWO_PI = 2.0 * math.pi
DENSE_LIMIT = 8192          # above this, use the operators module instead of dense storage
_UNIT_TOL = 1e-12
_TENSOR_SERIES_X = 0.1      # below k0*r = 0.1 the closed expression loses digits to cancellation


def _check_unit(vec, name):
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector (|v|-1 within {_UNIT_TOL})")
    return v


@dataclass(frozen=True)
class DipolePattern:
    """Angular emission pattern D(u), normalized to integrate to 1 over the sphere."""

    kind: str = "isotropic"          # "isotropic" or "linear"
    axis: np.ndarray | None = None   # dipole orientation for kind="linear"

    def __post_init__(self):
        if self.kind not in ("isotropic", "linear"):
            raise ValueError(f"unknown dipole pattern {self.kind!r}")
        if self.kind == "linear":
            object.__setattr__(self, "axis", _check_unit(self.axis, "pattern axis"))

    def values(self, u):
        """D(u) for unit directions u of shape (..., 3)."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "isotropic":
            return np.full(u.shape[:-1], 1.0 / (4.0 * math.pi))
        proj = u @ self.axis
        return 3.0 / (8.0 * math.pi) * (1.0 - proj**2)


@dataclass(frozen=True)
class ScalarKernel:
    gamma0: float = 1.0
    k0: float = TWO_PI


@dataclass(frozen=True)
class TensorKernel:
    polarization: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    gamma0: float = 1.0
    k0: float = TWO_PI

    def __post_init__(self):
        object.__setattr__(self, "polarization", _check_unit(self.polarization, "polarization"))


@dataclass(frozen=True)
class CavityKernel:
    k_c: float
    gamma_1d: float = 1.0


@dataclass(frozen=True)
class WaveguideKernel:
    k_c: float
    gamma_1d: float = 1.0


@dataclass(frozen=True)
class DirectionalKernel:
    """Detection through a cap of half-angle ``half_angle`` about ``axis``."""

    pattern: DipolePattern
    axis: np.ndarray
    half_angle: float
    quadrature_order: int = 16
    gamma0: float = 1.0
    k0: float = TWO_PI

    def __post_init__(self):
        object.__setattr__(self, "axis", _check_unit(self.axis, "axis"))
        if not (0.0 < self.half_angle <= math.pi):
            raise ValueError("half_angle must lie in (0, pi]")
        if self.quadrature_order < 8:
            raise ValueError("quadrature_order must be >= 8")


FREE_SPACE_KERNELS = (ScalarKernel, TensorKernel)


def kernel_tag(kernel):
    if isinstance(kernel, ScalarKernel):
        return "scalar"
    if isinstance(kernel, TensorKernel):
        return "tensor"
    if isinstance(kernel, CavityKernel):
        return "cavity"
    if isinstance(kernel, WaveguideKernel):
        return "waveguide"
    if isinstance(kernel, DirectionalKernel):
        return "directional"
    raise UnsupportedKernel(f"unknown kernel {kernel!r}")


def kernel_gamma0(kernel):
    """Rate scale of the diagonal-free normalization used in CSV output."""
    if isinstance(kernel, (CavityKernel, WaveguideKernel)):
        return kernel.gamma_1d
    return kernel.gamma0


@dataclass
class DissipativeMatrix:
    """Hermitian N x N collective-decay matrix."""

    entries: np.ndarray
    kind: str           # "real-symmetric" or "complex-hermitian"
    gamma0: float
    k0: float = TWO_PI

    @property
    def n(self):
        return self.entries.shape[0]

    def hermiticity_error(self):
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def matvec(self, v):
        return self.entries @ v


# ---------------------------------------------------------------- scalar

def scalar_entries(positions, gamma0=1.0, k0=TWO_PI):
    """Gamma0 * sinc(k0 |r_i - r_j|); diagonal exactly Gamma0."""
    pos = np.asarray(positions, dtype=np.float64)
    sq = np.sum(pos**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pos @ pos.T)
    np.maximum(d2, 0.0, out=d2)
    r = np.sqrt(d2, out=d2)
    g = np.sinc(r * (k0 / math.pi))
    g *= gamma0
    np.fill_diagonal(g, gamma0)
    return g


def scalar_entry(r, gamma0=1.0, k0=TWO_PI):
    return gamma0 * np.sinc(np.asarray(r) * (k0 / math.pi))


# ---------------------------------------------------------------- tensor

def tensor_pair_values(x, q, gamma0=1.0):
    """Tensor entry in units of gamma0 from x = k0*r and q = (w.rhat)^2.

    Uses the closed expression (3/2x^3)[x cos x + (x^2-1) sin x
    + ((3-x^2) sin x - 3x cos x) q] and a 6th-order series below
    x = 0.1 where the closed form cancels catastrophically.
    """
    x = np.asarray(x, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    small = x < _TENSOR_SERIES_X
    xs = np.where(small, 0.0, x)
    xs = np.where(xs == 0.0, 1.0, xs)  # avoid 0/0 in the masked-out branch
    c, s = np.cos(xs), np.sin(xs)
    closed = 1.5 / xs**3 * ((xs * c + (xs**2 - 1.0) * s) + ((3.0 - xs**2) * s - 3.0 * xs * c) * q)
    x2 = np.where(small, x, 0.0) ** 2
    series = (1.0 - x2 / 5.0 + 3.0 * x2**2 / 280.0 - x2**3 / 3780.0
              + q * (x2 / 10.0 - x2**2 / 140.0 + x2**3 / 5040.0))
    return gamma0 * np.where(small, series, closed)


def tensor_entries(positions, polarization, gamma0=1.0, k0=TWO_PI):
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[0]
    d = pos[:, None, :] - pos[None, :, :]
    r = np.linalg.norm(d, axis=2)
    x = k0 * r
    with np.errstate(invalid="ignore", divide="ignore"):
        proj = np.where(r > 0.0, (d @ polarization) / np.where(r > 0.0, r, 1.0), 0.0)
    g = tensor_pair_values(x, proj**2, gamma0)
    g[np.arange(n), np.arange(n)] = gamma0
    return g


# ---------------------------------------------------------------- cavity / waveguide

def cavity_entries(z, k_c, gamma_1d):
    c = np.cos(k_c * np.asarray(z, dtype=np.float64))
    return gamma_1d * np.outer(c, c)


def waveguide_entries(z, k_c, gamma_1d):
    z = np.asarray(z, dtype=np.float64)
    return gamma_1d * np.cos(k_c * (z[:, None] - z[None, :]))


# ---------------------------------------------------------------- directional

def cap_frame(axis):
    a = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return a, e1, e2


def cap_quadrature(axis, half_angle, n_polar, n_azimuth):
    """Product Gauss-Legendre nodes/weights on the spherical cap.

    Polar rule in c = cos(theta) over [cos(half_angle), 1]; azimuthal rule
    over [0, 2 pi].  Returns (U, w) with U of shape (K, 3) and sum(w) equal
    to the cap solid angle.
    """
    a, e1, e2 = cap_frame(axis)
    cmin = math.cos(half_angle)
    cn, cw = leggauss(n_polar)
    c = cmin + (cn + 1.0) * (1.0 - cmin) / 2.0
    cw = cw * (1.0 - cmin) / 2.0
    pn, pw = leggauss(n_azimuth)
    phi = (pn + 1.0) * math.pi
    pw = pw * math.pi
    cc, pp = np.meshgrid(c, phi, indexing="ij")
    ss = np.sqrt(np.clip(1.0 - cc**2, 0.0, None))
    U = (cc[..., None] * a
         + ss[..., None] * (np.cos(pp)[..., None] * e1 + np.sin(pp)[..., None] * e2))
    w = np.outer(cw, pw)
    return U.reshape(-1, 3), w.reshape(-1)


def _cap_orders(kernel, positions):
    """Quadrature orders from the phase variation across the cap.

    The polar phase range is k0*(axial span * (1-cos theta_d) + transverse
    span * sin theta_d); the azimuthal one is k0 * transverse span * sin
    theta_d.  Orders grow linearly with those ranges.
    """
    a, e1, e2 = cap_frame(kernel.axis)
    pos = np.asarray(positions, dtype=np.float64)
    span = lambda e: float(np.ptp(pos @ e)) if len(pos) else 0.0
    sa, s1, s2 = span(a), span(e1), span(e2)
    sp = max(s1, s2)
    td = kernel.half_angle
    v_pol = kernel.k0 * (sa * (1.0 - math.cos(td)) + sp * math.sin(td))
    v_az = kernel.k0 * sp * math.sin(td)
    n_pol = max(kernel.quadrature_order, int(math.ceil(0.75 * v_pol)) + 12)
    n_az = max(kernel.quadrature_order, int(math.ceil(1.2 * v_az)) + 12)
    return n_pol, n_az


def directional_factor(positions, kernel, n_polar=None, n_azimuth=None):
    """A with Gamma = A @ A^H (Hermitian PSD by construction)."""
    pos = np.asarray(positions, dtype=np.float64)
    if n_polar is None or n_azimuth is None:
        auto_pol, auto_az = _cap_orders(kernel, pos)
        n_polar = n_polar or auto_pol
        n_azimuth = n_azimuth or auto_az
    U, w = cap_quadrature(kernel.axis, kernel.half_angle, n_polar, n_azimuth)
    amp = np.sqrt(kernel.gamma0 * w * kernel.pattern.values(U))
    A = np.exp(1j * kernel.k0 * (pos @ U.T))
    A *= amp[None, :]
    return A


def directional_entries(positions, kernel, check=True, rel_tol=1e-8, max_escalations=3):
    """Directional matrix by cap quadrature with a self-consistency check.

    ``check=True`` rebuilds at 1.5x the order and requires entries to agree to
    ``rel_tol`` (relative to gamma0 * cap solid angle); escalates the order a
    few times before raising QuadratureFailure.
    """
    pos = np.asarray(positions, dtype=np.float64)
    n_pol, n_az = _cap_orders(kernel, pos)
    scale = kernel.gamma0 * TWO_PI * (1.0 - math.cos(kernel.half_angle))
    A = directional_factor(pos, kernel, n_pol, n_az)
    g = A @ A.conj().T
    if not check:
        return g
    for _ in range(max_escalations + 1):
        n_pol2, n_az2 = int(math.ceil(1.5 * n_pol)), int(math.ceil(1.5 * n_az))
        A2 = directional_factor(pos, kernel, n_pol2, n_az2)
        g2 = A2 @ A2.conj().T
        err = float(np.max(np.abs(g - g2))) / scale
        if err <= rel_tol:
            return g2
        n_pol, n_az, g = n_pol2, n_az2, g2
    raise QuadratureFailure(
        f"cap quadrature did not converge (last error {err:.2e} at orders {n_pol}x{n_az})")


def directional_entry(r_i, r_j, kernel, rel_tol=1e-8, max_escalations=6):
    """Single cap-integral entry Gamma0 int_cap D(u) exp(i k0 u.(r_i - r_j)) du.

    Raises QuadratureFailure when two successive orders disagree beyond
    ``rel_tol`` after escalation.
    """
    pos = np.asarray([r_i, r_j], dtype=np.float64)
    n_pol, n_az = _cap_orders(kernel, pos)
    scale = kernel.gamma0 * TWO_PI * (1.0 - math.cos(kernel.half_angle))

    def value(np_, na_):
        U, w = cap_quadrature(kernel.axis, kernel.half_angle, np_, na_)
        d = kernel.pattern.values(U)
        ph = np.exp(1j * kernel.k0 * (U @ (pos[0] - pos[1])))
        return kernel.gamma0 * np.sum(w * d * ph)

    prev = value(n_pol, n_az)
    for _ in range(max_escalations):
        n_pol = int(math.ceil(1.5 * n_pol))
        n_az = int(math.ceil(1.5 * n_az))
        cur = value(n_pol, n_az)
        if abs(cur - prev) <= rel_tol * scale:
            return cur
        prev = cur
    raise QuadratureFailure(f"pair cap quadrature did not converge at orders {n_pol}x{n_az}")


# ---------------------------------------------------------------- build

def build_matrix(config, kernel):
    """Dense dissipative matrix for any kernel variant.

    Directional kernels with half_angle = pi reduce exactly to the free-space
    kernel (scalar for the isotropic pattern, tensor for a linear dipole); the
    closed form is used there since the full-sphere cap integral is that
    kernel's defining identity.
    """
    pos = config.positions if hasattr(config, "positions") else np.asarray(config, dtype=np.float64)
    n = pos.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(
            f"N={n} exceeds the dense storage limit {DENSE_LIMIT}; use maxrate.operators")
    if isinstance(kernel, ScalarKernel):
        return DissipativeMatrix(scalar_entries(pos, kernel.gamma0, kernel.k0),
                                 "real-symmetric", kernel.gamma0, kernel.k0)
    if isinstance(kernel, TensorKernel):
        return DissipativeMatrix(tensor_entries(pos, kernel.polarization, kernel.gamma0, kernel.k0),
                                 "real-symmetric", kernel.gamma0, kernel.k0)
    if isinstance(kernel, CavityKernel):
        return DissipativeMatrix(cavity_entries(pos[:, 2], kernel.k_c, kernel.gamma_1d),
                                 "real-symmetric", kernel.gamma_1d, kernel.k_c)
    if isinstance(kernel, WaveguideKernel):
        return DissipativeMatrix(waveguide_entries(pos[:, 2], kernel.k_c, kernel.gamma_1d),
                                 "real-symmetric", kernel.gamma_1d, kernel.k_c)
    if isinstance(kernel, DirectionalKernel):
        if kernel.half_angle >= math.pi - 1e-12:
            g = _full_sphere_entries(pos, kernel)
        else:
            g = directional_entries(pos, kernel)
        return DissipativeMatrix(g, "complex-hermitian", kernel.gamma0, kernel.k0)
    raise UnsupportedKernel(f"unknown kernel {kernel!r}")


def _full_sphere_entries(pos, kernel):
    if kernel.pattern.kind == "isotropic":
        g = scalar_entries(pos, kernel.gamma0, kernel.k0)
    else:
        g = tensor_entries(pos, kernel.pattern.axis, kernel.gamma0, kernel.k0)
    return g.astype(np.complex128)


# ---------------------------------------------------------------- binary export

_MAGIC = b"GMAT"
_KIND_CODES = {"real-symmetric": 0, "complex-hermitian": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def save_matrix(matrix, path):
    """Binary dump: magic, N, kind, gamma0, k0, then the row-major lower
    triangle as little-endian float64 (complex entries interleaved re/im)."""
    n = matrix.n
    idx = np.tril_indices(n)
    tri = matrix.entries[idx]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqdd", n, _KIND_CODES[matrix.kind], matrix.gamma0, matrix.k0))
        if matrix.kind == "complex-hermitian":
            buf = np.empty(2 * tri.size)
            buf[0::2] = tri.real
            buf[1::2] = tri.imag
        else:
            buf = np.asarray(tri, dtype=np.float64)
        fh.write(buf.astype("<f8").tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a maxrate matrix file")
        n, kind_code, gamma0, k0 = struct.unpack("<qqdd", fh.read(32))
        kind = _KIND_NAMES[int(kind_code)]
        m = n * (n + 1) // 2
        count = 2 * m if kind == "complex-hermitian" else m
        buf = np.frombuffer(fh.read(8 * count), dtype="<f8")
    if kind == "complex-hermitian":
        tri = buf[0::2] + 1j * buf[1::2]
        entries = np.zeros((n, n), dtype=np.complex128)
    else:
        tri = buf
        entries = np.zeros((n, n))
    idx = np.tril_indices(n)
    entries[idx] = tri
    upper = np.triu_indices(n, k=1)
    entries[upper] = entries.conj().T[upper]
    return DissipativeMatrix(entries, kind, gamma0, k0)
