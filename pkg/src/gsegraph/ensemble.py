"""Graph and RMT ensembles of S matrices, histograms and distribution comparisons."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .graph import (
    DEFAULT_SHIFTER_BOND,
    GraphTopology,
    apply_phase_shifter,
    default_gse_graph,
    four_coupling_variant,
    mirrored_shifter,
)
from .rmt import ResolventSweep, RmtModel, realization_rng, sample_coupling_w, sample_hamiltonian
from .scattering import ScatteringModel

DEFAULT_BAND = (100.0, 200.0)
DEFAULT_NK = 2000
DEFAULT_REALIZATIONS = 30
KS_THRESHOLD = 0.1


@dataclass
class GraphEnsembleConfig:
    band: tuple = DEFAULT_BAND
    n_k: int = DEFAULT_NK
    realizations: int = DEFAULT_REALIZATIONS
    eps: float = 0.0175
    shifter_bond: tuple = DEFAULT_SHIFTER_BOND
    variant: str = "two"
    seed: int = 0

    def __post_init__(self):
        self.band = tuple(float(b) for b in self.band)
        self.shifter_bond = tuple(int(b) for b in self.shifter_bond)
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ValueError(f"bad k band {self.band}")
        if self.n_k < 1 or self.realizations < 1:
            raise ValueError("grids must be nonempty")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.variant not in ("two", "four"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def k_grid(self) -> np.ndarray:
        return np.linspace(*self.band, self.n_k)

    @property
    def increments(self) -> np.ndarray:
        """Length increments covering one 2 pi phase turn at the band centre."""
        kc = sum(self.band) / 2
        return np.arange(self.realizations) * (2 * math.pi / kc) / self.realizations

    def topology(self, base: GraphTopology | None = None) -> GraphTopology:
        g = default_gse_graph() if base is None else base
        return four_coupling_variant(g) if self.variant == "four" else g

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SampleSet:
    """S matrices over the physical ports for (realization, k or E) points."""

    source: str
    realization: np.ndarray
    x: np.ndarray
    S: np.ndarray
    ports: tuple
    absorption: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.x)

    def entry(self, a: str, b: str) -> np.ndarray:
        return self.S[:, self.ports.index(a), self.ports.index(b)]

    def write_csv(self, fh):
        """Long format, one row per (sample, port pair); floats as %.17g."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "realization", "k", "eps", "port_a", "port_b", "re", "im"])
        eps = f"{self.absorption:.17g}"
        P = len(self.ports)
        for n in range(len(self.x)):
            k = f"{self.x[n]:.17g}"
            r = str(int(self.realization[n]))
            for a in range(P):
                for b in range(P):
                    z = self.S[n, a, b]
                    w.writerow([self.source, r, k, eps, self.ports[a], self.ports[b],
                                f"{z.real:.17g}", f"{z.imag:.17g}"])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _graph_realization(args):
    topology, bond, increment, ks, eps = args
    g = apply_phase_shifter(topology, mirrored_shifter(*bond, increment))
    return ScatteringModel(g).s_matrices(ks, eps)


def _pool_map(fn, tasks, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_graph_ensemble(config: GraphEnsembleConfig, topology: GraphTopology | None = None,
                       workers: int = 1) -> SampleSet:
    """Realizations from mirrored length increments on the shifter bond pair."""
    g = config.topology(topology)
    ks = config.k_grid
    tasks = [(g, config.shifter_bond, float(d), ks, config.eps) for d in config.increments]
    blocks = _pool_map(_graph_realization, tasks, workers)
    R = config.realizations
    return SampleSet(
        "graph",
        np.repeat(np.arange(R), len(ks)),
        np.tile(ks, R),
        np.concatenate(blocks),
        g.ports,
        config.eps,
        {"topology_digest": g.digest, **config.to_dict()},
    )


def _rmt_realization(args):
    model, index = args
    rng = realization_rng(model.seed, index)
    H = sample_hamiltonian(model, rng)
    W = sample_coupling_w(model, rng)
    return ResolventSweep(H, W, model.physical_ports).s_matrices(model.energy_grid())


def run_rmt_ensemble(model: RmtModel, workers: int = 1) -> SampleSet:
    E = model.energy_grid()
    blocks = _pool_map(_rmt_realization, [(model, i) for i in range(model.ensemble_size)], workers)
    R = model.ensemble_size
    return SampleSet("rmt", np.repeat(np.arange(R), len(E)), np.tile(E, R), np.concatenate(blocks),
                     model.port_names, model.tau_abs, {"model": model.to_dict()})


def mean_reflection_power(samples: SampleSet, port: str = "1") -> float:
    return float(np.mean(np.abs(samples.entry(port, port)) ** 2))


def match_absorption(target: float, topology: GraphTopology | None = None, port: str = "1",
                     band=DEFAULT_BAND, n_k: int = 500, realizations: int = 10,
                     bracket=(1e-3, 3.0)) -> float:
    """Graph eps whose mean |S_aa|^2 equals ``target`` (e.g. from an RMT ensemble).

    Reflection power falls monotonically with absorption, so a bracketing
    root search on a small fixed ensemble is enough.
    """
    g = default_gse_graph() if topology is None else topology

    def f(eps):
        cfg = GraphEnsembleConfig(band=band, n_k=n_k, realizations=realizations, eps=eps)
        return mean_reflection_power(run_graph_ensemble(cfg, g), port) - target

    lo, hi = bracket
    if f(lo) * f(hi) > 0:
        raise ValueError(f"target {target} not reachable for eps in {bracket}")
    return float(optimize.brentq(f, lo, hi, xtol=1e-4))


# -- distributions -------------------------------------------------------------


@dataclass
class HistogramDensity:
    edges: np.ndarray
    density: np.ndarray
    count: int
    statistic: str = ""
    underflow: int = 0
    overflow: int = 0

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "edges": self.edges.tolist(),
                "density": self.density.tolist(), "count": self.count,
                "underflow": self.underflow, "overflow": self.overflow}


def histogram(values, edges=None, bins: int = 50, range_=(-1.0, 1.0), statistic: str = "") -> HistogramDensity:
    """Density over the in-range values; out-of-range counts go to metadata."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("histogram of empty input")
    edges = np.linspace(*range_, bins + 1) if edges is None else np.asarray(edges, dtype=float)
    under = int(np.sum(v < edges[0]))
    over = int(np.sum(v > edges[-1]))
    counts, _ = np.histogram(v, bins=edges)
    inside = counts.sum()
    density = counts / (inside * np.diff(edges)) if inside else np.zeros(len(edges) - 1)
    return HistogramDensity(edges, density, int(v.size), statistic, under, over)


def ks_distance(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    return float(stats.ks_2samp(a, b).statistic)


def variance_ratio(samples: SampleSet, num=("1", "2bar"), den=("1", "2")) -> float:
    """var(Re S_num) / var(Re S_den)."""
    return float(np.var(samples.entry(*num).real) / np.var(samples.entry(*den).real))


STANDARD_STATISTICS = (
    ("1", "2", "re"), ("1", "2", "im"),
    ("1", "2bar", "re"), ("1", "2bar", "im"),
    ("1", "1", "abs"), ("1", "2", "abs"), ("1", "2bar", "abs"),
)


def _component(samples: SampleSet, a, b, part):
    z = samples.entry(a, b)
    # the diagonal mean phase is convention dependent; compare |S_aa| across models
    return {"re": z.real, "im": z.imag, "abs": np.abs(z)}[part]


def stat_name(a, b, part) -> str:
    return f"{part}_S{a}_{b}"


def compare_report(first: SampleSet, second: SampleSet, statistics=STANDARD_STATISTICS,
                   expect: dict | None = None, threshold: float = KS_THRESHOLD,
                   bins: int = 50) -> dict:
    """KS distances, variances and histograms of matching entries of two ensembles.

    ``expect`` maps statistic names to "match" (KS below threshold) or
    "deviate" (KS above); unlisted statistics default to "match".
    """
    if tuple(first.ports) != tuple(second.ports):
        raise ValueError(f"port mismatch: {first.ports} vs {second.ports}")
    expect = dict(expect or {})
    unknown = set(expect) - {stat_name(*s) for s in statistics}
    if unknown:
        raise ValueError(f"unknown statistics in expectations: {sorted(unknown)}")
    rows = {}
    ok = True
    for a, b, part in statistics:
        name = stat_name(a, b, part)
        x, y = _component(first, a, b, part), _component(second, a, b, part)
        d = ks_distance(x, y)
        rng = (0.0, 1.0) if part == "abs" else (-1.0, 1.0)
        want = expect.get(name, "match")
        passed = d < threshold if want == "match" else d > threshold
        ok &= passed
        rows[name] = {
            "ks": d,
            "expect": want,
            "pass": bool(passed),
            "var": [float(np.var(x)), float(np.var(y))],
            "hist": [histogram(x, bins=bins, range_=rng, statistic=name).to_dict(),
                     histogram(y, bins=bins, range_=rng, statistic=name).to_dict()],
        }
    return {
        "sources": [first.source, second.source],
        "n_samples": [len(first), len(second)],
        "threshold": threshold,
        "variance_ratio_re_S12bar_over_S12": [variance_ratio(first), variance_ratio(second)],
        "statistics": rows,
        "status": "pass" if ok else "fail",
    }


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_samples_csv(fh) -> SampleSet:
    """Inverse of ``SampleSet.write_csv`` for a single-source file."""
    rows = csv.DictReader(fh)
    ports, keys, values = [], {}, {}
    source = absorption = None
    for row in rows:
        source = row["source"] if source is None else source
        absorption = float(row["eps"])
        for p in (row["port_a"], row["port_b"]):
            if p not in ports:
                ports.append(p)
        key = (int(row["realization"]), float(row["k"]))
        n = keys.setdefault(key, len(keys))
        values[(n, row["port_a"], row["port_b"])] = complex(float(row["re"]), float(row["im"]))
    if source is None:
        raise ValueError("empty sample file")
    S = np.zeros((len(keys), len(ports), len(ports)), dtype=complex)
    for (n, a, b), z in values.items():
        S[n, ports.index(a), ports.index(b)] = z
    order = list(keys)
    return SampleSet(source, np.array([r for r, _ in order]), np.array([k for _, k in order]), S,
                     tuple(ports), absorption)
