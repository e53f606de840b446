"""Per-state emission families and the L1 machinery used on them.

Three families share a duck-typed interface (``density``, ``sample``,
``discrete`` flag):

* ``DiscreteEmission``      pmf on {0, ..., S-1} (counting measure); the last
  index may act as a folded tail symbol for truncated infinite supports.
* ``GaussianMixtureEmission``  finite location-scale mixture of normals
  (Lebesgue measure on the line).
* ``TranslatedEmission``    a shared continuous density shifted by a
  state-specific offset.

L1 distances are exact sums for discrete pairs and importance-sampled for
continuous ones, with the equal mixture of the two densities as proposal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .util import Estimate, as_generator, readonly

PMF_TOL = 1e-12
DEFAULT_MC_SAMPLES = 200_000

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class DiscreteEmission:
    """Probability mass function on {0, ..., support_size - 1}."""

    pmf: np.ndarray

    discrete = True

    def __post_init__(self):
        object.__setattr__(self, "pmf", readonly(self.pmf))
        p = self.pmf
        if p.ndim != 1 or p.size == 0:
            raise ValueError("pmf must be a nonempty vector")
        if np.any(p < 0.0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(float(p.sum()) - 1.0) > PMF_TOL:
            raise ValueError(f"pmf must sum to 1 within {PMF_TOL}")

    @property
    def support_size(self) -> int:
        return int(self.pmf.size)

    def density(self, y):
        """Mass at integer symbol(s) y; 0 beyond the truncated support."""
        arr = np.asarray(y)
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.floor(arr)):
                raise DataError("discrete emission evaluated at a non-integer observation")
            arr = arr.astype(np.int64)
        elif arr.dtype.kind not in "iu":
            raise DataError("discrete emission expects integer observations")
        if np.any(arr < 0):
            raise DataError("discrete symbols must be nonnegative")
        out = np.zeros(arr.shape, dtype=np.float64)
        inside = arr < self.pmf.size
        out[inside] = self.pmf[arr[inside]]
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        return rng.choice(self.pmf.size, size=size, p=self.pmf)


@dataclass(frozen=True)
class GaussianMixtureEmission:
    """Finite mixture sum_r w_r N(z_r, sigma_r^2)."""

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray

    discrete = False

    def __post_init__(self):
        object.__setattr__(self, "weights", readonly(self.weights))
        object.__setattr__(self, "locations", readonly(self.locations))
        object.__setattr__(self, "scales", readonly(self.scales))
        w, z, s = self.weights, self.locations, self.scales
        if not (w.ndim == z.ndim == s.ndim == 1) or not (w.size == z.size == s.size > 0):
            raise ValueError("weights, locations and scales must be equal-length vectors")
        if np.any(w < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > PMF_TOL:
            raise ValueError(f"mixture weights must sum to 1 within {PMF_TOL}")
        if np.any(s <= 0.0):
            raise ValueError("mixture scales must be positive")

    @property
    def n_atoms(self) -> int:
        return int(self.weights.size)

    def density(self, y):
        arr = np.asarray(y, dtype=np.float64)
        z = (arr[..., None] - self.locations) / self.scales
        comp = np.exp(-0.5 * z * z) / (_SQRT_2PI * self.scales)
        out = comp @ self.weights
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        n = 1 if size is None else int(np.prod(size))
        comp = rng.choice(self.n_atoms, size=n, p=self.weights)
        draws = rng.normal(self.locations[comp], self.scales[comp])
        if size is None:
            return float(draws[0])
        return draws.reshape(size)


@dataclass(frozen=True)
class TranslatedEmission:
    """A shared base density evaluated at y - shift."""

    base: GaussianMixtureEmission
    shift: float

    discrete = False

    def __post_init__(self):
        if not isinstance(self.base, GaussianMixtureEmission):
            raise ValueError("translated emission needs a Gaussian-mixture base")
        object.__setattr__(self, "shift", float(self.shift))

    def density(self, y):
        return self.base.density(np.asarray(y, dtype=np.float64) - self.shift)

    def sample(self, rng, size=None):
        draws = self.base.sample(rng, size=size)
        return draws + self.shift


EmissionModel = DiscreteEmission | GaussianMixtureEmission | TranslatedEmission


def pad_pmfs(*emissions: DiscreteEmission) -> np.ndarray:
    """Stack discrete pmfs into one (n, S) array, zero-padding to a common S."""
    size = max(e.support_size for e in emissions)
    out = np.zeros((len(emissions), size))
    for i, e in enumerate(emissions):
        out[i, : e.support_size] = e.pmf
    return out


def l1_distance(f: EmissionModel, g: EmissionModel, n_samples: int | None = None,
                seed=None) -> Estimate:
    """L1 distance between two densities of the same domain.

    Discrete pairs are summed exactly (stderr 0). Continuous pairs are
    estimated by importance sampling from the equal mixture (f + g) / 2,
    drawing half the budget from each side.
    """
    if f.discrete != g.discrete:
        raise DataError("cannot compare a discrete emission with a continuous one")
    if f.discrete:
        pmfs = pad_pmfs(f, g)
        return Estimate(float(np.abs(pmfs[0] - pmfs[1]).sum()), 0.0)
    n = DEFAULT_MC_SAMPLES if n_samples is None else int(n_samples)
    if n <= 0:
        raise ValueError("n_samples must be positive for Monte Carlo mode")
    rng = as_generator(seed)
    half = n // 2
    ys = np.concatenate([np.atleast_1d(f.sample(rng, size=half)),
                         np.atleast_1d(g.sample(rng, size=n - half))])
    df = f.density(ys)
    dg = g.density(ys)
    mix = 0.5 * (df + dg)
    h = np.abs(df - dg) / mix
    est = 0.5 * h[:half].mean() + 0.5 * h[half:].mean()
    var = 0.25 * (h[:half].var() / half + h[half:].var() / (n - half))
    return Estimate(float(est), float(np.sqrt(var)))


def max_emission_l1(f_vec, g_vec, n_samples: int | None = None, seed=None) -> Estimate:
    """Max over states of the componentwise L1 distance between emission vectors."""
    if len(f_vec) != len(g_vec):
        raise ValueError("emission vectors must have equal length")
    rng = as_generator(seed)
    best = Estimate(-1.0, 0.0)
    for f, g in zip(f_vec, g_vec):
        cand = l1_distance(f, g, n_samples=n_samples, seed=rng)
        if cand.value > best.value:
            best = cand
    return best
