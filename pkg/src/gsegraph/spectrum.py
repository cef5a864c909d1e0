"""Closed-graph eigenwavenumbers from the vertex secular matrix.

Roots are located with an exact counting function rather than sign changes of
det H(k): for a symplectic graph every level is a Kramers doublet, so det H
touches zero without changing sign. Between poles H(k) is non-decreasing in k
(each bond contributes a positive semidefinite derivative), so an eigenvalue
crosses zero upward exactly at an eigenwavenumber, and at a pole of bond b
exactly one eigenvalue jumps from +inf to -inf. Hence

    N(k) = sum_b floor(theta_b(k) / pi) - #{negative eigenvalues of H(k)}

grows by one at every eigenwavenumber (counted with multiplicity) and is
continuous across poles. Bisection on N brackets each root.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import GraphTopology

POLE_GUARD = 1e-12
ROOT_TOL = 1e-10
PAIR_TOL = 1e-8


class PoleGuardError(ValueError):
    """k lies on a bond resonance, sin(k L_b) ~ 0; shift k."""


class ScanResolutionError(ValueError):
    def __init__(self, step, required):
        super().__init__(f"scan step {step:.3g} too coarse; need step <= {required:.6g}")
        self.required = required


class KramersPairingError(ValueError):
    def __init__(self, indices):
        super().__init__(f"unpaired roots at indices {list(indices)[:20]}")
        self.indices = list(indices)


def bond_phases(topology: GraphTopology, k):
    """Optical phase theta_b = k L_b (+ Phi_b under the symmetric convention)."""
    k = np.asarray(k, dtype=float)
    theta = k[..., None] * topology.lengths
    if topology.phase_convention == "symmetric":
        theta = theta + topology.static_phases
    return theta


def _secular_stack(topology: GraphTopology, ks: np.ndarray) -> np.ndarray:
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    n = topology.n_vertices
    i, j = topology.bond_ends
    theta = bond_phases(topology, ks)
    s = np.sin(theta)
    cot = np.cos(theta) / s
    gauge = topology.potentials * topology.lengths
    H = np.zeros((len(ks), n, n), dtype=complex)
    fwd = np.exp(-1j * gauge) / s
    bwd = np.exp(1j * gauge) / s
    if topology.phase_convention == "one_sided":
        fwd = fwd * np.exp(-1j * topology.static_phases)
    H[:, i, j] = fwd
    H[:, j, i] = bwd
    diag = np.zeros((len(ks), n))
    for ends in (i, j):
        np.add.at(diag, (slice(None), ends), -cot)
    H[:, np.arange(n), np.arange(n)] = diag
    return H


def secular_matrix(topology: GraphTopology, k: float, pole_guard: float = POLE_GUARD) -> np.ndarray:
    """Vertex secular matrix H(k) of the closed graph (leads are ignored)."""
    s = np.sin(bond_phases(topology, k))
    if np.min(np.abs(s)) <= pole_guard:
        b = int(np.argmin(np.abs(s)))
        raise PoleGuardError(f"near bond resonance on bond {topology.bonds[b]} at k={k}, shift k")
    return _secular_stack(topology, np.array([k]))[0]


def secular_function(topology: GraphTopology, k) -> np.ndarray | float:
    """det H(k) * prod_b sin(theta_b): real, finite, zero at eigenwavenumbers."""
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    s = np.sin(bond_phases(topology, ks))
    # exact poles would give inf*0; nudge by far less than any root tolerance
    near = np.min(np.abs(s), axis=1) < 1e-15
    ks = np.where(near, ks + 1e-13, ks)
    s = np.sin(bond_phases(topology, ks))
    if topology.phase_convention == "symmetric":
        det = np.prod(np.linalg.eigvalsh(_secular_stack(topology, ks)), axis=1)
    else:
        det = np.linalg.det(_secular_stack(topology, ks)).real
    out = det * np.prod(s, axis=1)
    return out if np.ndim(k) else float(out[0])


def _negative_count_split(topology: GraphTopology, k: float, near: float) -> int:
    """Negative-eigenvalue count of H(k) with near-pole bonds split off exactly.

    Each bond adds tan(t/2) P+ - cot(t/2) P- on its two vertices (P+- rank-one
    projectors). For a bond close to a pole one of the two weights diverges;
    by Sylvester's law of inertia it contributes its sign, and the rest is the
    regular part compressed onto the orthogonal complement.
    """
    n = topology.n_vertices
    i, j = topology.bond_ends
    theta = bond_phases(topology, np.array([k]))[0]
    e = np.exp(-1j * topology.potentials * topology.lengths)
    half = 0.5 * theta
    H = np.zeros((n, n), dtype=complex)
    big, n_big_neg = [], 0
    for b in range(topology.n_bonds):
        vp = np.zeros(n, dtype=complex)
        vm = np.zeros(n, dtype=complex)
        vp[i[b]], vp[j[b]] = 1, np.conj(e[b])
        vm[i[b]], vm[j[b]] = 1, -np.conj(e[b])
        vp /= np.sqrt(2)
        vm /= np.sqrt(2)
        wp, wm = np.tan(half[b]), -1.0 / np.tan(half[b])
        if abs(np.sin(theta[b])) < near:
            if abs(wp) > abs(wm):
                big.append(vp)
                n_big_neg += wp < 0
                H += wm * np.outer(vm, vm.conj())
            else:
                big.append(vm)
                n_big_neg += wm < 0
                H += wp * np.outer(vp, vp.conj())
        else:
            H += wp * np.outer(vp, vp.conj()) + wm * np.outer(vm, vm.conj())
    B = np.array(big).T
    if np.linalg.matrix_rank(B, tol=1e-8) < B.shape[1]:
        # split directions overlap (a whole cycle near a pole); plain path
        return int((np.linalg.eigvalsh(_secular_stack(topology, np.array([k]))[0]) < 0).sum())
    Q, _ = np.linalg.qr(B, mode="complete")
    rest = Q[:, len(big):]
    lam = np.linalg.eigvalsh(rest.conj().T @ H @ rest) if rest.shape[1] else np.array([])
    return int((lam < 0).sum() + n_big_neg)


def counting_function(topology: GraphTopology, k, near: float = 1e-5) -> np.ndarray:
    """Integer staircase, up to a constant equal to the number of roots below k."""
    if topology.phase_convention != "symmetric":
        raise ValueError("root counting needs the Hermitian (symmetric) phase convention")
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    s = np.sin(bond_phases(topology, ks))
    exact = np.min(np.abs(s), axis=1) < 1e-300
    ks = np.where(exact, np.nextafter(ks, np.inf), ks)
    theta = bond_phases(topology, ks)
    poles = np.floor(theta / np.pi).sum(axis=1)
    close = np.min(np.abs(np.sin(theta)), axis=1) < near
    neg = np.empty(len(ks), dtype=np.int64)
    if (~close).any():
        neg[~close] = (np.linalg.eigvalsh(_secular_stack(topology, ks[~close])) < 0).sum(axis=1)
    for n in np.flatnonzero(close):
        neg[n] = _negative_count_split(topology, ks[n], near)
    return (poles - neg).astype(np.int64)


def bisect_staircase(count, a, b, n_a, n_b, tol):
    """All jump locations of an integer staircase on (a, b], refined by bisection.

    ``count`` maps an array of points to the staircase values. A jump of size m
    that stays unresolved down to ``tol`` is reported m times.
    """
    roots = []
    stack = [(a, b, n_a, n_b)]
    while stack:
        lo, hi, n_lo, n_hi = stack.pop()
        m = n_hi - n_lo
        if m <= 0:
            continue
        if hi - lo <= tol:
            roots.extend([0.5 * (lo + hi)] * m)
            continue
        mid = 0.5 * (lo + hi)
        n_mid = int(count(np.array([mid]))[0])
        n_mid = min(max(n_mid, n_lo), n_hi)
        stack.append((mid, hi, n_mid, n_hi))
        stack.append((lo, mid, n_lo, n_mid))
    return sorted(roots)


def max_scan_step(topology: GraphTopology) -> float:
    return math.pi / (8 * topology.total_length)


@dataclass(frozen=True)
class SpectrumRecord:
    eigenwavenumbers: np.ndarray
    folded: bool
    topology_digest: str
    total_length: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenwavenumbers)

    @property
    def fold_policy(self) -> str:
        return "kramers-folded" if self.folded else "raw"


def _scan_chunk(args):
    topology, grid, tol = args
    counts = counting_function(topology, grid)
    roots = []
    count = lambda x: counting_function(topology, x)
    for n in np.flatnonzero(np.diff(counts) > 0):
        roots += bisect_staircase(count, grid[n], grid[n + 1], counts[n], counts[n + 1], tol)
    return roots


def find_eigenwavenumbers(
    topology: GraphTopology,
    k_min: float,
    k_max: float,
    step: float | None = None,
    tol: float = ROOT_TOL,
    workers: int = 1,
) -> SpectrumRecord:
    """All eigenwavenumbers of the closed graph in (k_min, k_max], with multiplicity."""
    if not k_min > 0:
        raise ValueError("k_min must be positive")
    if k_max <= k_min:
        raise ValueError("empty wavenumber range")
    topology = topology.closed()
    required = max_scan_step(topology)
    step = required if step is None else step
    if step > required:
        raise ScanResolutionError(step, required)
    n = max(1, int(math.ceil((k_max - k_min) / step)))
    grid = k_min + (k_max - k_min) * np.arange(n + 1) / n

    chunks = max(1, workers) * 4 if workers > 1 else 1
    edges = np.linspace(0, n, chunks + 1).astype(int)
    tasks = [(topology, grid[edges[c]: edges[c + 1] + 1], tol) for c in range(chunks)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_scan_chunk, tasks))
    else:
        parts = [_scan_chunk(t) for t in tasks]
    roots = np.array(sorted(r for part in parts for r in part))
    meta = {"k_min": k_min, "k_max": k_max, "step": step, "tol": tol}
    return SpectrumRecord(roots, False, topology.digest, topology.total_length, meta)


def first_eigenwavenumbers(topology: GraphTopology, count: int, k_min: float = 1e-3, **kw) -> SpectrumRecord:
    """The lowest ``count`` roots above ``k_min``; the range is sized from Weyl's law."""
    L = topology.total_length
    k_max = k_min + (count + 10) * math.pi / L
    rec = find_eigenwavenumbers(topology, k_min, k_max, **kw)
    while len(rec) < count:
        k_max *= 1.1
        rec = find_eigenwavenumbers(topology, k_min, k_max, **kw)
    return SpectrumRecord(rec.eigenwavenumbers[:count], False, rec.topology_digest, L, rec.meta)


def partner_gaps(k: np.ndarray) -> np.ndarray:
    """Distance from each root to its nearest neighbour."""
    k = np.asarray(k)
    gaps = np.full(len(k), np.inf)
    d = np.diff(k)
    if len(k) > 1:
        gaps[:-1] = d
        gaps[1:] = np.minimum(gaps[1:], d)
    return gaps


def pair_roots(k: np.ndarray, tol: float = PAIR_TOL):
    """Greedy pairing of consecutive roots; returns (means, unpaired indices)."""
    k = np.asarray(k)
    means, unpaired = [], []
    n = 0
    while n < len(k):
        if n + 1 < len(k) and k[n + 1] - k[n] <= tol:
            means.append(0.5 * (k[n] + k[n + 1]))
            n += 2
        else:
            unpaired.append(n)
            n += 1
    return np.array(means), unpaired


def kramers_fold(record: SpectrumRecord, tol: float = PAIR_TOL) -> SpectrumRecord:
    """Replace every Kramers doublet by its mean; fails on any unpaired root."""
    if record.folded:
        return record
    means, unpaired = pair_roots(record.eigenwavenumbers, tol)
    if unpaired:
        raise KramersPairingError(unpaired)
    meta = dict(record.meta, pair_tol=tol)
    return SpectrumRecord(means, True, record.topology_digest, record.total_length, meta)


def spectrum_csv(record: SpectrumRecord, seed=None) -> str:
    buf = io.StringIO()
    meta = dict(record.meta)
    buf.write(f"# topology_digest={record.topology_digest}\n")
    buf.write(f"# seed={seed}\n")
    buf.write(f"# fold_policy={record.fold_policy}\n")
    buf.write(f"# total_length={record.total_length!r}\n")
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "k", "doublet_partner_gap"])
    for n, (k, g) in enumerate(zip(record.eigenwavenumbers, partner_gaps(record.eigenwavenumbers))):
        w.writerow([n, repr(float(k)), repr(float(g))])
    return buf.getvalue()


def read_spectrum_csv(text: str) -> SpectrumRecord:
    """Inverse of ``spectrum_csv`` (meta values come back as strings)."""
    header, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        elif line and not line.startswith("index"):
            rows.append(float(line.split(",")[1]))
    total = header.pop("total_length", None)
    if total is None:
        raise ValueError("spectrum file lacks a total_length header")
    return SpectrumRecord(
        np.array(rows),
        header.pop("fold_policy", "raw") == "kramers-folded",
        header.pop("topology_digest", ""),
        float(total),
        header,
    )
