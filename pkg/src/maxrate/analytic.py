"""Closed-form spectra, mode functions, emission patterns and solid angles.

These are the continuum-limit results used as independent oracles against the
sampled-matrix numerics: Bessel-mode eigenvalues of the sinc integral operator
for 1D/2D/3D uniform clouds, diffraction-style emission patterns for clouds
and arrays, geometric solid-angle estimates, and the exact cavity/waveguide
spectra.
"""

import functools
import math
import warnings

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.integrate import quad

TWO_PI = 2.0 * math.pi


# ------------------------------------------------------------- special functions

def bessel_j(nu, x):
    """Bessel J_nu (real order)."""
    return special.jv(nu, x)


def spherical_j(l, x):
    """Spherical Bessel j_l with the l = -1 extension cos(x)/x."""
    if l >= 0:
        return special.spherical_jn(l, x)
    if l == -1:
        x = np.asarray(x, dtype=np.float64)
        return np.where(x != 0.0, np.cos(x) / np.where(x != 0.0, x, 1.0), np.inf)
    raise ValueError("l must be >= -1")


def sine_integral(x):
    return special.sici(x)[0]


def spherical_harmonic(l, m, theta, phi):
    """Complex Y_lm(theta, phi) with physics convention (theta polar)."""
    if hasattr(special, "sph_harm_y"):
        return special.sph_harm_y(l, m, theta, phi)
    return special.sph_harm(m, l, phi, theta)


# ------------------------------------------------------------- validity windows

def mode_window(dimension, k0L):
    """Largest admissible mode index for the Bessel ansatz."""
    if dimension == 1:
        return int(math.floor(math.sqrt(k0L)))
    if dimension == 2:
        return int(math.floor(k0L))
    return None  # 3D modes are exact for every l


def _check_mode(dimension, n, k0L):
    from .errors import ModeOutOfRange

    if n < 0:
        raise ModeOutOfRange("mode index must be nonnegative")
    win = mode_window(dimension, k0L)
    if win is not None and n > win:
        raise ModeOutOfRange(
            f"mode n={n} outside the validity window (max {win} for D={dimension}, k0L={k0L:g})")
    if n * n > k0L / 10.0:
        warnings.warn(
            f"mode n={n} beyond the asymptotic regime n^2 <= k0L/10 (k0L={k0L:g}); "
            "closed forms degrade toward n^2 ~ k0L", stacklevel=3)


# ------------------------------------------------------------- cloud eigenvalues

def cloud_mode_eigenvalue(dimension, n, k0L, density, gamma0=1.0, k0=TWO_PI):
    """Decay rate of the Bessel mode ``n`` of a uniform D-dimensional cloud.

    1D: (2 rho/k0) Si(2 k0L) Gamma0 (mode independent);
    2D: the closed Bessel-product expression (see gamma_m_2d);
    3D: 2 pi rho L^3 [j_l^2 - j_{l-1} j_{l+1}](k0L) Gamma0 (exact for all l).
    """
    if dimension == 1:
        _check_mode(1, n, k0L)
        return 2.0 * density / k0 * sine_integral(2.0 * k0L) * gamma0
    if dimension == 2:
        _check_mode(2, n, k0L)
        return gamma_m_2d(n, k0L, density, gamma0, k0)
    if dimension == 3:
        if n * n > k0L:
            warnings.warn(f"3D closed form used beyond n^2 <= k0L (n={n}, k0L={k0L:g})",
                          stacklevel=2)
        L = k0L / k0
        bracket = (spherical_j(n, k0L) ** 2
                   - spherical_j(n - 1, k0L) * spherical_j(n + 1, k0L))
        return 2.0 * math.pi * density * L**3 * bracket * gamma0
    raise ValueError("dimension must be 1, 2 or 3")


def gamma_m_2d(m, ell, density, gamma0=1.0, k0=TWO_PI):
    """Closed-form eigenvalue of the sinc operator on a uniform disk.

    ell = k0 L.  Derivative of J^2 taken analytically via the recurrence
    J'_nu = (J_{nu-1} - J_{nu+1})/2, not by finite differences.
    """
    nu = (m - 1) / 2.0
    a = special.jv(nu, ell / 2.0)
    b = special.jv((m + 1) / 2.0, ell / 2.0)
    jm1 = special.jv(m - 1, ell)
    jm = special.jv(m, ell)
    dJ_dx = 0.5 * (special.jv(nu - 1.0, ell / 2.0) - special.jv(nu + 1.0, ell / 2.0))
    d_ell_J2 = a * dJ_dx  # d/d ell [J_nu(ell/2)^2] = 2 J * J' * (1/2)
    term1 = (math.pi * ell**2 / 4.0) * jm1 * (a * a - b * b)
    term2 = (math.pi * ell / 2.0) * jm * (a * a + ell * d_ell_J2)
    return (2.0 * math.pi / k0**2) * density * (term1 - term2) * gamma0


def gamma_m_2d_quadrature(m, ell, density, gamma0=1.0, k0=TWO_PI, n_nodes=4096):
    """Independent evaluation of the 2D eigenvalue by quadrature.

    Integrates Re int_0^1 x f_m(x ell, ell)/sqrt(1-x^2) dx with the
    substitution x = sin t, which absorbs both the inverse-sqrt endpoint and
    the integrable pole of f_m at x = 1.
    """
    t, w = leggauss(n_nodes)
    t = (t + 1.0) * (math.pi / 4.0)
    w = w * (math.pi / 4.0)
    x = np.sin(t)
    jm1_ell = special.jv(m - 1, ell)
    jm_ell = special.jv(m, ell)
    f = (ell * jm1_ell * special.jv(m, x * ell)
         - x * ell * special.jv(m - 1, x * ell) * jm_ell) / (x * x - 1.0)
    val = float(np.sum(w * x * f))
    return (2.0 * math.pi / k0**2) * density * val * gamma0


def gamma_2d_asymptotic(k0L, density, gamma0=1.0, k0=TWO_PI):
    """Large-system 2D limit (lambda0^2 rho / 2 pi) sqrt(k0L/pi)."""
    lam0_sq = (TWO_PI / k0) ** 2
    return lam0_sq * density / (2.0 * math.pi) * math.sqrt(k0L / math.pi) * gamma0


# ------------------------------------------------------------- mode functions

def mode_normalization(dimension, n, k0L, density, k0=TWO_PI):
    """Asymptotic normalization constants (k0L >> n^2)."""
    L = k0L / k0
    if dimension == 1:
        return math.sqrt((2.0 * n + 1.0) / math.pi * k0 / density)
    if dimension == 2:
        return math.sqrt(k0 / (2.0 * L * density))
    return math.sqrt(k0**2 / (density * L))


def cloud_mode_function(dimension, n, k0L, density, points, m=None, k0=TWO_PI):
    """Evaluate the Bessel-mode ansatz at 3-space points (lambda_0 units).

    1D: N j_n(k0 z); 2D: N J_n(k0 rho) e^{i n phi}; 3D: N j_n(k0 r) Y_nm.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    norm = mode_normalization(dimension, n, k0L, density, k0)
    if dimension == 1:
        return norm * special.spherical_jn(n, k0 * pts[:, 2])
    if dimension == 2:
        rho = np.hypot(pts[:, 0], pts[:, 1])
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        return norm * special.jv(n, k0 * rho) * np.exp(1j * n * phi)
    if m is None:
        raise ValueError("3D modes need the azimuthal index m")
    r = np.linalg.norm(pts, axis=1)
    theta = np.arccos(np.clip(np.where(r > 0, pts[:, 2] / np.where(r > 0, r, 1.0), 1.0), -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    return norm * special.spherical_jn(n, k0 * r) * spherical_harmonic(n, m, theta, phi)


# ------------------------------------------------------------- emission patterns

def _radial_nodes(L, k0L, oversample=1.3):
    n = int(oversample * k0L) + 64
    t, w = leggauss(n)
    r = (t + 1.0) * (L / 2.0)
    return r, w * (L / 2.0)


def cloud_emission_pattern(dimension, n, k0L, theta, m=None, density=None, k0=TWO_PI):
    """Exact diffraction function mu_n(u) of a cloud mode, by quadrature.

    mu_n(u) = |(1/sqrt(N)) int dr rho_D(r) e^{-i k0 u.r} psi_n(r)|^2.
    The result is azimuth-independent for 1D/2D (and for 3D the azimuth enters
    only through Y_nm, evaluated at phi = 0).
    """
    theta = np.asarray(theta, dtype=np.float64)
    L = k0L / k0
    if density is None:
        density = 1.0  # mu_n is density-independent; any positive value works
    norm = mode_normalization(dimension, n, k0L, density, k0)
    if dimension == 2:
        n_atoms = density * math.pi * L**2
        q = k0 * np.abs(np.sin(theta))
        r, w = _radial_nodes(L, k0L)
        integ = np.array([
            np.sum(w * r * special.jv(n, qi * r) * special.jv(n, k0 * r)) for qi in np.atleast_1d(q)
        ])
        amp = density * norm * 2.0 * math.pi * integ / math.sqrt(n_atoms)
        out = amp**2
        return out.reshape(np.shape(theta))
    if dimension == 1:
        n_atoms = density * L
        r, w = leggauss(int(1.3 * k0L) + 64)
        r = r * (L / 2.0)
        w = w * (L / 2.0)
        ct = np.cos(np.atleast_1d(theta))
        amp = np.array([
            abs(np.sum(w * np.exp(-1j * k0 * ci * r) * special.spherical_jn(n, k0 * r)))
            for ci in ct
        ])
        out = (density * norm * amp) ** 2 / n_atoms
        return out.reshape(np.shape(theta))
    if m is None:
        raise ValueError("3D patterns need the azimuthal index m")
    n_atoms = density * 4.0 * math.pi * L**3 / 3.0
    r, w = _radial_nodes(L, k0L)
    radial = np.sum(w * r**2 * special.spherical_jn(n, k0 * r) ** 2)
    y = spherical_harmonic(n, m, np.atleast_1d(theta), np.zeros_like(np.atleast_1d(theta)))
    amp2 = (density * norm * 4.0 * math.pi * radial) ** 2 * np.abs(y) ** 2 / n_atoms
    return amp2.reshape(np.shape(theta))


def cloud_emission_pattern_approx(k0L, theta):
    """Small-angle 2D profile (2/pi k0L) sinc^2(k0L (theta-pi/2)^2 / 2)."""
    tt = np.asarray(theta, dtype=np.float64) - math.pi / 2.0
    arg = k0L * tt**2 / 2.0
    return 2.0 / (math.pi * k0L) * np.sinc(arg / math.pi) ** 2


def cloud_emission_pattern_1d_closed(n, k0L, theta):
    """(2n+1) P_n(cos theta)^2 / (k0L), the large-k0L limit of the 1D pattern."""
    pn = np.polynomial.legendre.Legendre.basis(n)(np.cos(theta))
    return (2.0 * n + 1.0) * pn**2 / k0L


def cloud_emission_pattern_3d_closed(n, m, k0L, theta, phi=0.0):
    y = spherical_harmonic(n, m, np.asarray(theta, dtype=np.float64), np.asarray(phi))
    return 3.0 * np.abs(y) ** 2 / (2.0 * k0L**2)


def _dirichlet_sq(x, n):
    """(sin(n x / 2) / sin(x / 2))^2 with its n^2 limits at x = 2 pi j."""
    x = np.asarray(x, dtype=np.float64)
    num = np.sin(n * x / 2.0)
    den = np.sin(x / 2.0)
    small = np.abs(den) < 1e-9
    safe = np.where(small, 1.0, den)
    out = (num / safe) ** 2
    return np.where(small, float(n) ** 2, out)


def array_emission_pattern(dimension, n_1d, spacing, theta, phi=0.0, k0=TWO_PI):
    """Spin-wave emission pattern of a square lattice (sine-ratio products).

    The spin wave carries k0 along z for 1D arrays and along x for 2D/3D, the
    configurations used in the directional-detection analysis.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64),
                                     np.asarray(phi, dtype=np.float64))
    u = np.stack([np.cos(phi) * np.sin(theta),
                  np.sin(phi) * np.sin(theta),
                  np.cos(theta)], axis=-1)
    khat = np.array([0.0, 0.0, 1.0]) if dimension == 1 else np.array([1.0, 0.0, 0.0])
    axes = [2] if dimension == 1 else list(range(dimension))
    mu = np.ones(theta.shape)
    for a in axes:
        x = k0 * spacing * (khat[a] - u[..., a])
        mu = mu * _dirichlet_sq(x, n_1d) / n_1d**2
    return mu


# ------------------------------------------------------------- solid angles

def solid_angle_estimate(dimension, k0L):
    """Emission solid angle of the brightest array mode (steradians)."""
    if dimension == 1:
        return 16.0 * math.pi / k0L
    if dimension == 2:
        return 2.0 * (4.0 * math.pi / k0L) ** 1.5
    if dimension == 3:
        return (4.0 * math.pi / k0L) ** 2
    raise ValueError("dimension must be 1, 2 or 3")


def optical_depth_estimate(dimension, k0L, n_atoms):
    """Geometric optical depth OD ~ N dOmega / 4 pi."""
    return n_atoms * solid_angle_estimate(dimension, k0L) / (4.0 * math.pi)


def cloud_collimation_angle(k0L):
    """First-zero separation 2 sqrt(2 pi / k0L) of the 2D small-angle profile."""
    return 2.0 * math.sqrt(2.0 * math.pi / k0L)


# ------------------------------------------------------------- cavity / waveguide

def cavity_waveguide_spectrum(z_positions, k_c, gamma_1d, environment):
    """Full eigenvalue list (descending) of the cavity or waveguide matrix.

    Cavity: single nonzero eigenvalue Gamma_1D sum_j cos^2(k_c z_j).
    Waveguide: Gamma_pm = Gamma_1D/2 [N +- sqrt(N + sum_{i!=j} cos 2 k_c (z_i - z_j))].
    """
    z = np.asarray(z_positions, dtype=np.float64)
    n = z.size
    out = np.zeros(n)
    if environment == "cavity":
        out[0] = gamma_1d * float(np.sum(np.cos(k_c * z) ** 2))
    elif environment == "waveguide":
        cs = float(np.sum(np.cos(2.0 * k_c * z)))
        sn = float(np.sum(np.sin(2.0 * k_c * z)))
        disc = math.sqrt(cs * cs + sn * sn)  # equals sqrt(N + sum_{i!=j} cos 2k_c(z_i-z_j))
        out[0] = gamma_1d / 2.0 * (n + disc)
        if n > 1:
            out[1] = gamma_1d / 2.0 * (n - disc)
    else:
        raise ValueError("environment must be 'cavity' or 'waveguide'")
    return out


# ------------------------------------------------------------- product-state model

@functools.lru_cache(maxsize=1)
def emission_overlap_constants():
    """C1 = int_{-pi}^{pi} sin^2 x / x^2 dx, C2 = int_{-sqrt(pi)}^{sqrt(pi)} sin^2(x^2)/x^4 dx."""
    c1 = quad(lambda x: np.sinc(x / math.pi) ** 2, -math.pi, math.pi)[0]
    c2 = quad(lambda x: np.sinc(x * x / math.pi) ** 2, -math.sqrt(math.pi), math.sqrt(math.pi))[0]
    return c1, c2


def product_state_rate_model_2d(n_atoms, k0L, gamma0=1.0):
    """Disorder-averaged product-state rate for a 2D square cloud of side L.

    (C1 C2 / 4 pi) N^2 Gamma0 / (k0L)^{3/2} + N Gamma0 / 2.
    """
    c1, c2 = emission_overlap_constants()
    return c1 * c2 / (4.0 * math.pi) * n_atoms**2 * gamma0 / k0L**1.5 + n_atoms * gamma0 / 2.0
