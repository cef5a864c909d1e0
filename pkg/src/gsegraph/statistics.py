"""Unfolding and the short/long-range fluctuation measures of a level sequence.

Reference curves for Poisson and the three Gaussian ensembles use the Wigner
surmises for P(s) and the exact two-level cluster functions for Sigma^2 and
Delta_3. Levels of the symplectic ensemble are counted once per doublet.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

DEFAULT_BIN_WIDTH = 0.1
DEFAULT_S_MAX = 4.0
DEFAULT_DISCARD = 50
MIN_LEVELS = 500
ENSEMBLES = ("poisson", "goe", "gue", "gse")

# P_beta(s) = a s^beta exp(-b s^2)
_SURMISE = {
    1: (math.pi / 2, math.pi / 4),
    2: (32 / math.pi**2, 4 / math.pi),
    4: (2**18 / (3**6 * math.pi**3), 64 / (9 * math.pi)),
}
_BETA = {"goe": 1, "gue": 2, "gse": 4}


class FewLevelsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class UnfoldedSpectrum:
    values: np.ndarray
    source_digest: str = ""

    def __len__(self):
        return len(self.values)

    @property
    def mean_spacing(self) -> float:
        return float(np.mean(np.diff(self.values)))


def unfold(eigenwavenumbers, total_length: float, folded: bool = False,
           discard: int = DEFAULT_DISCARD, source_digest: str = "") -> UnfoldedSpectrum:
    """x = k L / pi, or k L / (2 pi) when each Kramers doublet is kept once."""
    k = np.asarray(eigenwavenumbers, dtype=float)
    if k.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(k) < 0):
        raise ValueError("spectrum must be sorted")
    if discard >= k.size:
        raise ValueError(f"cannot discard {discard} of {k.size} levels")
    density = total_length / (2 * math.pi if folded else math.pi)
    return UnfoldedSpectrum(k[discard:] * density, source_digest)


def unfold_record(record, discard: int = DEFAULT_DISCARD) -> UnfoldedSpectrum:
    """Unfold a SpectrumRecord, honouring its fold flag."""
    return unfold(record.eigenwavenumbers, record.total_length, record.folded, discard,
                  record.topology_digest)


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, UnfoldedSpectrum) else x, dtype=float)


# -- reference curves --------------------------------------------------------


def surmise_pdf(ensemble: str, s):
    s = np.asarray(s, dtype=float)
    if ensemble == "poisson":
        return np.exp(-s)
    a, b = _SURMISE[_BETA[ensemble]]
    beta = _BETA[ensemble]
    return a * s**beta * np.exp(-b * s**2)


def surmise_cdf(ensemble: str, s):
    """Integrated surmise; for beta ensembles a regularised incomplete gamma."""
    s = np.clip(np.asarray(s, dtype=float), 0, None)
    if ensemble == "poisson":
        return -np.expm1(-s)
    beta = _BETA[ensemble]
    return special.gammainc((beta + 1) / 2, _SURMISE[beta][1] * s**2)


def _sine(r):
    return np.sinc(r)


def cluster_function(ensemble: str, r):
    """Two-level cluster function Y_2(r) at unit mean spacing."""
    r = np.abs(np.asarray(r, dtype=float))
    if ensemble == "poisson":
        return np.zeros_like(r)
    if ensemble == "gue":
        return _sine(r) ** 2
    if ensemble == "goe":
        s = _sine(r)
        ds = _dsine(r)
        tail = 0.5 - special.sici(math.pi * r)[0] / math.pi
        return s**2 + ds * tail
    if ensemble == "gse":
        s = _sine(2 * r)
        ds = _dsine(2 * r)
        head = special.sici(2 * math.pi * r)[0] / math.pi
        return s**2 - ds * head
    raise ValueError(f"unknown ensemble {ensemble!r}")


def _dsine(r):
    """d/dr sin(pi r)/(pi r)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    nz = r > 1e-8
    x = math.pi * r[nz]
    out[nz] = (x * np.cos(x) - np.sin(x)) / (x * r[nz])
    return out


_REF_STEP = 2e-3


def _cumulative(y, r):
    return np.concatenate([[0.0], np.cumsum((y[1:] + y[:-1]) / 2 * np.diff(r))])


def _reference_tables(ensemble: str, L_max: float):
    """Sigma^2 and Delta_3 on a fine grid r in [0, L_max]."""
    n = max(2, int(math.ceil(L_max / _REF_STEP)))
    r = np.linspace(0, L_max, n + 1)
    if ensemble == "poisson":
        return r, r.copy(), r / 15
    y = cluster_function(ensemble, r)
    sig = r - 2 * (r * _cumulative(y, r) - _cumulative(r * y, r))
    # Delta_3(L) = 2/L^4 [L^3 S0 - 2 L^2 S1 + S3], S_m = int_0^L r^m Sigma^2(r) dr
    S0, S1, S3 = (_cumulative(r**m * sig, r) for m in (0, 1, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        d3 = np.where(r > 0, 2 * (r**3 * S0 - 2 * r**2 * S1 + S3) / np.where(r > 0, r, 1) ** 4, 0.0)
    return r, sig, d3


def reference_number_variance(ensemble: str, L):
    """Sigma^2(L) = L - 2 int_0^L (L - r) Y_2(r) dr."""
    L = np.atleast_1d(np.asarray(L, dtype=float))
    r, sig, _ = _reference_tables(ensemble, max(L.max(), _REF_STEP))
    return np.interp(L, r, sig)


def reference_rigidity(ensemble: str, L):
    """Delta_3(L) = 2/L^4 int_0^L (L^3 - 2 L^2 r + r^3) Sigma^2(r) dr."""
    L = np.atleast_1d(np.asarray(L, dtype=float))
    r, _, d3 = _reference_tables(ensemble, max(L.max(), _REF_STEP))
    return np.interp(L, r, d3)


# -- measured statistics -----------------------------------------------------


@dataclass
class SpacingDistribution:
    edges: np.ndarray
    density: np.ndarray
    integrated: np.ndarray
    spacings: np.ndarray
    few_levels: bool

    @property
    def centers(self):
        return (self.edges[1:] + self.edges[:-1]) / 2


def spacings(unfolded) -> np.ndarray:
    return np.diff(_values(unfolded))


def spacing_distribution(unfolded, bin_width: float = DEFAULT_BIN_WIDTH,
                         s_max: float = DEFAULT_S_MAX) -> SpacingDistribution:
    """Histogram P(s) of nearest-neighbour spacings and the empirical I(s).

    The histogram is normalised by the total count, so spacings beyond
    ``s_max`` lower its integral below one. I(s) is given at the bin edges.
    """
    x = _values(unfolded)
    few = x.size < MIN_LEVELS
    if few:
        warnings.warn(f"only {x.size} levels; P(s) needs at least {MIN_LEVELS}",
                      FewLevelsWarning, stacklevel=2)
    s = np.diff(x)
    if s.size == 0:
        raise ValueError("need at least two levels")
    nbins = int(round(s_max / bin_width))
    edges = np.linspace(0, nbins * bin_width, nbins + 1)
    counts, _ = np.histogram(s, bins=edges)
    density = counts / (s.size * bin_width)
    integrated = np.searchsorted(np.sort(s), edges, side="right") / s.size
    return SpacingDistribution(edges, density, integrated, s, few)


def ks_to_surmise(unfolded, ensemble: str) -> float:
    s = spacings(unfolded)
    return float(stats.kstest(s, lambda t: surmise_cdf(ensemble, t)).statistic)


def _check_grid(x: np.ndarray, L: np.ndarray):
    if L.size == 0 or np.any(L <= 0):
        raise ValueError("L grid must be positive and nonempty")
    span = x[-1] - x[0]
    if L.max() >= span:
        raise ValueError(f"window length {L.max()} exceeds the span {span:.3g}")


def _window_starts(x, L, n_windows, rng):
    return x[0] + rng.uniform(0, 1, n_windows) * (x[-1] - x[0] - L)


def number_variance(unfolded, L_grid, n_windows: int = 1000, seed: int = 0) -> np.ndarray:
    """Sigma^2(L) from windows [a, a + L) at uniform random positions.

    Counts are centred on their window mean, which is L for an unfolded
    sequence up to sampling noise.
    """
    x = _values(unfolded)
    L_grid = np.atleast_1d(np.asarray(L_grid, dtype=float))
    _check_grid(x, L_grid)
    rng = np.random.default_rng(seed)
    out = np.empty(L_grid.size)
    for n, L in enumerate(L_grid):
        a = _window_starts(x, L, n_windows, rng)
        counts = np.searchsorted(x, a + L, side="left") - np.searchsorted(x, a, side="left")
        out[n] = np.var(counts)
    return out


def _window_rigidity(t: np.ndarray, L: float) -> float:
    """min over A, B of (1/L) int_0^L (n(t) - A t - B)^2 dt for levels t in [0, L)."""
    j = np.arange(1, t.size + 1)
    I0 = np.sum(L - t)
    I1 = np.sum(L**2 - t**2) / 2
    I2 = np.sum((2 * j - 1) * (L - t))
    M = np.array([[L, L**2 / 2], [L**2 / 2, L**3 / 3]])
    rhs = np.array([I0, I1])
    return float((I2 - rhs @ np.linalg.solve(M, rhs)) / L)


def rigidity(unfolded, L_grid, n_windows: int = 1000, seed: int = 0) -> np.ndarray:
    """Delta_3(L), exact least-squares fit of the staircase on random windows."""
    x = _values(unfolded)
    L_grid = np.atleast_1d(np.asarray(L_grid, dtype=float))
    _check_grid(x, L_grid)
    rng = np.random.default_rng(seed)
    out = np.empty(L_grid.size)
    for n, L in enumerate(L_grid):
        a = _window_starts(x, L, n_windows, rng)
        lo = np.searchsorted(x, a, side="left")
        hi = np.searchsorted(x, a + L, side="left")
        out[n] = np.mean([_window_rigidity(x[i:k] - s, L) for i, k, s in zip(lo, hi, a)])
    return out


# -- report ------------------------------------------------------------------


@dataclass
class StatisticsReport:
    spacing: SpacingDistribution
    L_grid: np.ndarray
    number_variance: np.ndarray
    rigidity: np.ndarray
    references: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        sp = self.spacing
        return {
            "meta": self.meta,
            "spacing": {
                "edges": sp.edges.tolist(),
                "P": sp.density.tolist(),
                "I": sp.integrated.tolist(),
                "n_spacings": int(sp.spacings.size),
                "few_levels": sp.few_levels,
            },
            "L": self.L_grid.tolist(),
            "number_variance": self.number_variance.tolist(),
            "rigidity": self.rigidity.tolist(),
            "references": {k: {m: np.asarray(v).tolist() for m, v in d.items()}
                           for k, d in self.references.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, prefix) -> list:
        """One CSV per measure: <prefix>_spacing.csv and <prefix>_long_range.csv."""
        sp = self.spacing
        paths = [f"{prefix}_spacing.csv", f"{prefix}_long_range.csv"]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "P", "I"] + [f"P_{e}" for e in ENSEMBLES])
            for n, s in enumerate(sp.centers):
                w.writerow([repr(float(s)), repr(float(sp.density[n])), repr(float(sp.integrated[n + 1]))]
                           + [repr(float(surmise_pdf(e, s))) for e in ENSEMBLES])
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "sigma2", "delta3"] + [f"{m}_{e}" for m in ("sigma2", "delta3") for e in ENSEMBLES])
            for n, L in enumerate(self.L_grid):
                refs = [self.references["number_variance"][e][n] for e in ENSEMBLES]
                refs += [self.references["rigidity"][e][n] for e in ENSEMBLES]
                w.writerow([repr(float(v)) for v in (L, self.number_variance[n], self.rigidity[n], *refs)])
        return paths


def analyze(unfolded, L_grid=None, n_windows: int = 1000, seed: int = 0,
            bin_width: float = DEFAULT_BIN_WIDTH, meta: dict | None = None) -> StatisticsReport:
    L_grid = np.linspace(0.5, 20, 40) if L_grid is None else np.asarray(L_grid, dtype=float)
    sp = spacing_distribution(unfolded, bin_width)
    refs = {
        "number_variance": {e: reference_number_variance(e, L_grid) for e in ENSEMBLES},
        "rigidity": {e: reference_rigidity(e, L_grid) for e in ENSEMBLES},
        "ks_to_surmise": {e: ks_to_surmise(unfolded, e) for e in ENSEMBLES},
    }
    meta = dict(meta or {})
    meta.update({"n_levels": int(_values(unfolded).size), "n_windows": n_windows, "seed": seed,
                 "bin_width": bin_width})
    return StatisticsReport(sp, L_grid, number_variance(unfolded, L_grid, n_windows, seed),
                            rigidity(unfolded, L_grid, n_windows, seed), refs, meta)
