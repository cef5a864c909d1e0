"""Directed-bond scattering: S_B = D U, the open-graph S matrix and zeta_B.

Directed bond ``2b`` runs along the declared direction of bond ``b``, ``2b+1``
against it. Amplitudes live at the arriving end of a directed bond, so one
round of propagation is ``b -> D U b`` and a lead injection at vertex v feeds
the bonds leaving v.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import GraphTopology
from .spectrum import ROOT_TOL, SpectrumRecord, bisect_staircase, max_scan_step

EPS_FLOOR = 1e-12


class OnResonanceError(ValueError):
    """1 - S_B is singular at this k (closed-graph resonance with eps = 0); perturb k."""


@dataclass(frozen=True)
class DirectedBonds:
    start: np.ndarray
    end: np.ndarray
    bond: np.ndarray
    sign: np.ndarray


def directed_bonds(topology: GraphTopology) -> DirectedBonds:
    i, j = topology.bond_ends
    n = topology.n_bonds
    start = np.empty(2 * n, dtype=int)
    end = np.empty(2 * n, dtype=int)
    start[0::2], end[0::2] = i, j
    start[1::2], end[1::2] = j, i
    bond = np.repeat(np.arange(n), 2)
    sign = np.tile([1.0, -1.0], n)
    return DirectedBonds(start, end, bond, sign)


def vertex_transition(topology: GraphTopology) -> np.ndarray:
    """U[e, d]: amplitude for arriving bond d to leave through bond e.

    Nonzero only when d ends where e starts; equals 2/v - 1 for backscattering
    onto the same bond and 2/v otherwise, v counting bonds and leads.
    """
    db = directed_bonds(topology)
    val = topology.valence
    U = np.zeros((len(db.start), len(db.start)))
    for e in range(len(db.start)):
        v = db.start[e]
        arriving = np.flatnonzero(db.end == v)
        U[e, arriving] = 2.0 / val[v] - (db.bond[arriving] == db.bond[e])
    return U


def propagator_diagonal(topology: GraphTopology, k, eps: float = 0.0) -> np.ndarray:
    """Diagonal of D for each k: exp(i(k + i eps)L + i(+-A)L + i Phi)."""
    db = directed_bonds(topology)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    L = topology.lengths[db.bond]
    phase = db.sign * topology.potentials[db.bond] * L
    phi = topology.static_phases[db.bond]
    if topology.phase_convention == "one_sided":
        phi = np.where(db.sign > 0, phi, 0.0)
    arg = (k[:, None] + 1j * eps) * L + phase + phi
    return np.exp(1j * arg)


def build_bond_operator(topology: GraphTopology, k: float, eps: float = 0.0) -> np.ndarray:
    """S_B(k) = D(k + i eps) U on the 2B-dimensional directed-bond space."""
    D = propagator_diagonal(topology, k, eps)[0]
    return D[:, None] * vertex_transition(topology)


def lead_couplings(topology: GraphTopology):
    """Injection, collection and direct-reflection blocks for the ports."""
    db = directed_bonds(topology)
    val = topology.valence
    P = len(topology.leads)
    tau_in = np.zeros((len(db.start), P))
    tau_out = np.zeros((len(db.start), P))
    direct = np.zeros((P, P))
    pos = topology.lead_positions
    for p in range(P):
        v = pos[p]
        tau_in[db.start == v, p] = 2.0 / val[v]
        tau_out[db.end == v, p] = 2.0 / val[v]
        for q in range(P):
            if pos[q] == v:
                direct[q, p] = 2.0 / val[v] - (p == q)
    return tau_in, tau_out, direct


@dataclass(frozen=True)
class ScatteringSample:
    k: float
    eps: float
    S: np.ndarray
    ports: tuple

    def entry(self, a: str, b: str) -> complex:
        return complex(self.S[self.ports.index(a), self.ports.index(b)])


class ScatteringModel:
    """Precomputed k-independent pieces for repeated S-matrix evaluation."""

    def __init__(self, topology: GraphTopology):
        if not topology.leads:
            raise ValueError("scattering needs at least one lead")
        self.topology = topology
        self.U = vertex_transition(topology)
        self.tau_in, self.tau_out, self.direct = lead_couplings(topology)

    def s_matrices(self, ks, eps: float = 0.0, chunk: int = 256) -> np.ndarray:
        ks = np.atleast_1d(np.asarray(ks, dtype=float))
        n = self.U.shape[0]
        out = np.empty((len(ks), len(self.topology.leads), len(self.topology.leads)), dtype=complex)
        eye = np.eye(n)
        for start in range(0, len(ks), chunk):
            sl = slice(start, start + chunk)
            D = propagator_diagonal(self.topology, ks[sl], eps)
            M = eye - D[:, :, None] * self.U
            rhs = D[:, :, None] * self.tau_in
            X = np.linalg.solve(M, rhs)
            out[sl] = self.direct + np.einsum("dp,kdq->kpq", self.tau_out, X)
        return out


def s_matrix(topology: GraphTopology, k: float, eps: float = 0.0, check: bool = True) -> ScatteringSample:
    """S matrix over the ports, ordered as ``topology.leads``."""
    model = ScatteringModel(topology)
    if check:
        D = propagator_diagonal(topology, k, eps)[0]
        M = np.eye(len(D)) - D[:, None] * model.U
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] < 1e-12 * sv[0]:
            raise OnResonanceError(f"1 - S_B singular at k={k}, eps={eps}; perturb k")
    S = model.s_matrices([k], eps)[0]
    return ScatteringSample(float(k), float(eps), S, topology.ports)


def secular_zeta(topology: GraphTopology, k) -> np.ndarray | complex:
    """zeta_B(k) = det(1 - S_B(k)) of the closed graph (leads are dropped)."""
    closed = topology.closed()
    U = vertex_transition(closed)
    D = propagator_diagonal(closed, k)
    z = np.linalg.det(np.eye(U.shape[0]) - D[:, :, None] * U)
    return z if np.ndim(k) else complex(z[0])


class _ClosedBondSpace:
    def __init__(self, topology: GraphTopology):
        self.topology = topology.closed()
        self.U = vertex_transition(self.topology)

    def staircase(self, ks) -> np.ndarray:
        ks = np.atleast_1d(np.asarray(ks, dtype=float))
        D = propagator_diagonal(self.topology, ks)
        phi = np.angle(np.linalg.eigvals(D[:, :, None] * self.U))
        nonpos = (phi <= 0).sum(axis=1)
        return (2 * self.topology.total_length * ks - phi.sum(axis=1)) / (2 * np.pi) - nonpos


def zeta_staircase(topology: GraphTopology, k) -> np.ndarray:
    """Continuous-in-k count of unit eigenvalues of S_B, up to a constant.

    The eigenphases of the unitary S_B(k) all increase with k and their sum
    grows as 2*L_total*k. With phases taken in (-pi, pi], the number of phases
    passing through 0 between two wavenumbers is the change of
    (2 L k - sum(phases)) / 2pi - #{phases in (-pi, 0]}.
    """
    return _ClosedBondSpace(topology).staircase(k)


def find_zeta_roots(
    topology: GraphTopology, k_min: float, k_max: float, step: float | None = None, tol: float = ROOT_TOL
) -> SpectrumRecord:
    """Real zeros of zeta_B in (k_min, k_max], with multiplicity."""
    space = _ClosedBondSpace(topology)
    closed = space.topology
    step = max_scan_step(closed) * 4 if step is None else step
    n = max(1, int(math.ceil((k_max - k_min) / step)))
    grid = k_min + (k_max - k_min) * np.arange(n + 1) / n
    c0 = space.staircase(grid[:1])[0]

    def count(x):
        return np.rint(space.staircase(x) - c0).astype(np.int64)

    counts = count(grid)
    roots = []
    for m in np.flatnonzero(np.diff(counts) > 0):
        roots += bisect_staircase(count, grid[m], grid[m + 1], counts[m], counts[m + 1], tol)
    meta = {"k_min": k_min, "k_max": k_max, "step": step, "tol": tol, "method": "zeta_B"}
    return SpectrumRecord(np.array(sorted(roots)), False, closed.digest, closed.total_length, meta)


def cross_check_roots(vertex_roots, zeta_roots) -> float:
    """Largest pointwise difference between two equally long root lists."""
    a, b = np.asarray(vertex_roots), np.asarray(zeta_roots)
    if len(a) != len(b):
        return math.inf
    return float(np.max(np.abs(a - b))) if len(a) else 0.0


# -- phase sweep ----------------------------------------------------------------


def pi_phase_bond(topology: GraphTopology) -> int:
    for n, b in enumerate(topology.bonds):
        if b.is_cross_sector and math.isclose(b.static_phase, math.pi):
            return n
    raise ValueError("topology has no coupling bond carrying the pi phase")


def _sweep_column(args):
    topology, bond, increment, ks, eps, a, b = args
    bonds = list(topology.bonds)
    old = bonds[bond]
    bonds[bond] = type(old)(old.a, old.b, old.length + increment, old.potential, old.static_phase)
    model = ScatteringModel(topology.with_bonds(bonds))
    S = model.s_matrices(ks, eps)
    return np.abs(S[:, a, b])


def phase_sweep(
    topology: GraphTopology,
    increments,
    ks,
    port_a: str = "1",
    port_b: str = "1bar",
    bond: int | None = None,
    eps: float = 0.0,
    workers: int = 1,
) -> np.ndarray:
    """|S_ab(k)| with one coupling bond lengthened by each increment.

    Rows follow ``increments``, columns follow ``ks``. The extra phase
    k*dl on top of the stored pi phase moves the spin-flip zeros.
    """
    increments = np.asarray(increments, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if increments.size == 0 or ks.size == 0:
        raise ValueError("sweep grids must be nonempty")
    bond = pi_phase_bond(topology) if bond is None else bond
    eps = max(eps, EPS_FLOOR)
    a, b = topology.ports.index(port_a), topology.ports.index(port_b)
    tasks = [(topology, bond, float(dl), ks, eps, a, b) for dl in increments]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_column, tasks))
    else:
        rows = [_sweep_column(t) for t in tasks]
    return np.array(rows)


def sweep_minima(row: np.ndarray) -> np.ndarray:
    """Indices of strict interior local minima of a 1-D profile."""
    row = np.asarray(row)
    return np.flatnonzero((row[1:-1] < row[:-2]) & (row[1:-1] < row[2:])) + 1


def write_phase_sweep(path_csv, path_json, amplitudes, increments, ks, meta=None):
    np.savetxt(path_csv, amplitudes, delimiter=",", fmt="%.17g")
    side = {
        "rows": "length_increment_m",
        "columns": "k_rad_per_m",
        "length_increment_m": [float(x) for x in increments],
        "k_rad_per_m": [float(x) for x in ks],
        "eps_floor": EPS_FLOOR,
    }
    side.update(meta or {})
    with open(path_json, "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
