"""Ordered and disordered atomic geometries in 1D, 2D and 3D.

All positions are expressed in units of the transition wavelength lambda_0 and
embedded in 3-space with a fixed convention: 1D ensembles live on the z axis,
2D ensembles in the xy plane.  Box-like shapes use the side L = N_1D * d; ball,
disk and line radii/lengths are chosen so that the density matches
rho_1D = N/L, rho_2D = N/(pi L^2), rho_3D = 3N/(4 pi L^3).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InsufficientAtoms
from .seeding import derive_seed, make_rng

SHAPES = ("lattice", "uniform-box", "uniform-ball", "uniform-disk", "uniform-line", "gaussian")
_PER_AXIS_SHAPES = ("lattice", "uniform-box", "gaussian")


@dataclass(frozen=True)
class EnsembleSpec:
    """Geometry of one atomic ensemble.

    ``n_1d`` is the linear atom count for lattice/box/gaussian shapes
    (N = n_1d ** dimension); ``n_total`` is the total count for
    ball/disk/line shapes.  ``spacing`` is the average interatomic
    separation d/lambda_0.
    """

    dimension: int
    shape: str
    spacing: float
    n_1d: int | None = None
    n_total: int | None = None
    wavelength: float = 1.0

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not (self.spacing > 0):
            raise ValueError("spacing must be positive")
        if not (self.wavelength > 0):
            raise ValueError("wavelength must be positive")
        if self.shape in _PER_AXIS_SHAPES:
            if self.n_1d is None or self.n_1d < 1:
                raise ValueError(f"shape {self.shape!r} needs n_1d >= 1")
        else:
            if self.n_total is None or self.n_total < 1:
                raise ValueError(f"shape {self.shape!r} needs n_total >= 1")
            if self.shape == "uniform-ball" and self.dimension != 3:
                raise ValueError("uniform-ball is a 3D shape")
            if self.shape == "uniform-disk" and self.dimension != 2:
                raise ValueError("uniform-disk is a 2D shape")
            if self.shape == "uniform-line" and self.dimension != 1:
                raise ValueError("uniform-line is a 1D shape")

    @property
    def n_atoms(self):
        if self.shape in _PER_AXIS_SHAPES:
            return self.n_1d ** self.dimension
        return self.n_total

    @property
    def density(self):
        """Nominal atom density 1/d^D (per lambda_0^D)."""
        return self.spacing ** (-self.dimension)

    @property
    def length(self):
        """Characteristic linear size L (lambda_0 units).

        Box/lattice/gaussian: L = n_1d * d (side, resp. gaussian sigma).
        Ball/disk: radius such that the uniform density equals 1/d^D.
        Line: total length N * d.
        """
        d = self.spacing
        if self.shape in _PER_AXIS_SHAPES:
            return self.n_1d * d
        n = self.n_total
        if self.shape == "uniform-ball":
            return d * (3.0 * n / (4.0 * math.pi)) ** (1.0 / 3.0)
        if self.shape == "uniform-disk":
            return d * math.sqrt(n / math.pi)
        return n * d  # uniform-line


@dataclass(frozen=True)
class AtomConfiguration:
    """N sampled positions (units of lambda_0) plus provenance."""

    positions: np.ndarray
    spec: EnsembleSpec
    seed: int

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must be an (N, 3) array")
        if pos.shape[0] != self.spec.n_atoms:
            raise ValueError("position count does not match spec")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_atoms(self):
        return self.positions.shape[0]


def _lattice_positions(spec):
    n, d, dim = spec.n_1d, spec.spacing, spec.dimension
    idx = np.arange(n) * d
    if dim == 1:
        pos = np.zeros((n, 3))
        pos[:, 2] = idx
        return pos
    axes = np.meshgrid(*([idx] * dim), indexing="ij")
    pos = np.zeros((n ** dim, 3))
    for a in range(dim):
        pos[:, a] = axes[a].ravel()
    return pos


def sample_configuration(spec, seed):
    """Draw one configuration; deterministic for fixed (spec, seed).

    Lattices are deterministic regardless of seed.  Disordered shapes draw
    i.i.d. positions from the stated density.  Coincident atoms are allowed
    (measure zero); kernels handle r -> 0.
    """
    if spec.shape == "lattice":
        pos = _lattice_positions(spec)
        return AtomConfiguration(pos, spec, seed)

    rng = make_rng(seed)
    n = spec.n_atoms
    dim = spec.dimension
    L = spec.length
    pos = np.zeros((n, 3))
    if spec.shape == "uniform-box":
        box = rng.uniform(-L / 2.0, L / 2.0, size=(n, dim))
        _embed(pos, box, dim)
    elif spec.shape == "gaussian":
        cloud = L * rng.standard_normal((n, dim))
        _embed(pos, cloud, dim)
    elif spec.shape == "uniform-line":
        z = rng.uniform(-L / 2.0, L / 2.0, size=n)
        pos[:, 2] = z
    elif spec.shape == "uniform-disk":
        r = L * np.sqrt(rng.random(n))
        phi = 2.0 * math.pi * rng.random(n)
        pos[:, 0] = r * np.cos(phi)
        pos[:, 1] = r * np.sin(phi)
    elif spec.shape == "uniform-ball":
        r = L * rng.random(n) ** (1.0 / 3.0)
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        pos = r[:, None] * v
    return AtomConfiguration(pos, spec, seed)


def _embed(pos, coords, dim):
    # 1D on z axis, 2D in xy plane, 3D as-is
    if dim == 1:
        pos[:, 2] = coords[:, 0]
    else:
        pos[:, :dim] = coords


def min_pair_distance(config):
    """min over i<j of |r_i - r_j|; requires N >= 2."""
    pos = config.positions if isinstance(config, AtomConfiguration) else np.asarray(config)
    if pos.shape[0] < 2:
        raise InsufficientAtoms("min_pair_distance needs at least two atoms")
    if pos.shape[0] <= 4096:
        return float(pdist(pos).min())
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(pos).query(pos, k=2)
    return float(dist[:, 1].min())


def close_pair_probability(spec, d_c, trials, seed=0):
    """Monte Carlo estimate of P(d_min < d_c) with binomial standard error."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if d_c < 0:
        raise ValueError("d_c must be nonnegative")
    hits = 0
    for t in range(trials):
        config = sample_configuration(spec, derive_seed(seed, t))
        if d_c > 0 and min_pair_distance(config) < d_c:
            hits += 1
    p = hits / trials
    stderr = math.sqrt(p * (1.0 - p) / trials)
    return p, stderr


def close_pair_probability_1d(n, d_c, length):
    """Closed-form P(d_min < d_c) for n uniform points on a segment of given length."""
    if not 0 <= (n - 1) * d_c <= length:
        raise ValueError("requires 0 <= (n-1) d_c <= L")
    return 1.0 - (1.0 - (n - 1) * d_c / length) ** n


def close_pair_probability_small_dc(dimension, n, d_c, length):
    """Rare-event limit alpha_D * n^2 * (d_c/L)^D, alpha_D = half the unit-ball volume."""
    alpha = 0.5 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0 + 1.0)
    return alpha * n * n * (d_c / length) ** dimension


def save_positions(config, path):
    """Columnar text dump: index, x, y, z per row (lambda_0 units)."""
    n = config.n_atoms
    with open(path, "w", newline="\n") as fh:
        fh.write("# index x y z\n")
        for i in range(n):
            x, y, z = config.positions[i]
            fh.write(f"{i} {x!r} {y!r} {z!r}\n")


def load_positions(path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    return np.ascontiguousarray(data[:, 1:4])
