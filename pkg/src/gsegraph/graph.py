"""Graph topologies, the doubled symplectic graph and its configuration format.

Vertices carry an ``index`` and a ``sector`` ("up" or "down"); the down sector
holds the barred copies of the unitary subgraph. Bonds keep a declared
direction ``a -> b``: traversing along it accumulates ``+A*L`` of magnetic
phase, the opposite way ``-A*L``. The static phase of a bond is, by default,
picked up identically in both directions.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

UP = "up"
DOWN = "down"
SECTORS = (UP, DOWN)
PHASE_CONVENTIONS = ("symmetric", "one_sided")

DEFAULT_LENGTH_SEED = 20240229
DEFAULT_LENGTH_RANGE = (0.2, 1.0)
DEFAULT_POTENTIAL = math.pi / 2

# unitary subgraph of the default network; the first four bonds are the ones
# named explicitly for the physical network, the rest close it up
DEFAULT_SUBGRAPH_BONDS = (
    (1, 6), (2, 6), (4, 6), (7, 8),
    (1, 5), (3, 5), (3, 7), (4, 9), (8, 9), (5, 9),
)
DEFAULT_MAGNETIC_BONDS = ((1, 6), (2, 6), (4, 6))
DEFAULT_COUPLING = ((2, 3), (3, 2))
DEFAULT_LEAD_VERTICES = (1, 2)
DEFAULT_SHIFTER_BOND = (5, 9)


class GraphConfigError(ValueError):
    """Invalid topology or configuration document."""


@dataclass(frozen=True, order=True)
class VertexId:
    sector_rank: int = field(init=False, repr=False)
    index: int
    sector: str = UP

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise GraphConfigError(f"unknown sector {self.sector!r} for vertex {self.index}")
        if int(self.index) != self.index or self.index < 1:
            raise GraphConfigError(f"vertex index must be an integer >= 1, got {self.index!r}")
        object.__setattr__(self, "sector_rank", SECTORS.index(self.sector))

    @property
    def mirror(self) -> "VertexId":
        return VertexId(self.index, DOWN if self.sector == UP else UP)

    def __str__(self):
        return f"{self.index}" if self.sector == UP else f"{self.index}bar"

    def to_dict(self):
        return {"index": self.index, "sector": self.sector}


def up(i: int) -> VertexId:
    return VertexId(i, UP)


def down(i: int) -> VertexId:
    return VertexId(i, DOWN)


@dataclass(frozen=True)
class Bond:
    a: VertexId
    b: VertexId
    length: float
    potential: float = 0.0
    static_phase: float = 0.0

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))

    @property
    def is_cross_sector(self) -> bool:
        return self.a.sector != self.b.sector

    def connects(self, u: VertexId, v: VertexId) -> bool:
        return self.key == frozenset((u, v))

    def __str__(self):
        return f"({self.a},{self.b})"


@dataclass(frozen=True)
class GraphTopology:
    """Immutable metric graph with leads.

    Vertex order is (sector, index), so up vertex ``i`` and its mirror share
    the same position within their sector block.
    """

    vertices: tuple
    bonds: tuple
    leads: tuple = ()
    phase_convention: str = "symmetric"

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(sorted(set(self.vertices))))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        object.__setattr__(self, "leads", tuple((v, str(p)) for v, p in self.leads))
        self._validate()

    def _validate(self):
        if self.phase_convention not in PHASE_CONVENTIONS:
            raise GraphConfigError(f"unknown phase convention {self.phase_convention!r}")
        if not self.vertices:
            raise GraphConfigError("graph has no vertices")
        known = set(self.vertices)
        seen = set()
        for bond in self.bonds:
            for v in (bond.a, bond.b):
                if v not in known:
                    raise GraphConfigError(f"bond {bond} references missing vertex {v}")
            if bond.a == bond.b:
                raise GraphConfigError(f"bond {bond}: self-loop not supported")
            if not (bond.length > 0 and math.isfinite(bond.length)):
                raise GraphConfigError(f"bond {bond}: length must be positive, got {bond.length}")
            if not 0.0 <= bond.static_phase < 2 * math.pi:
                raise GraphConfigError(f"bond {bond}: static phase must lie in [0, 2pi)")
            if bond.key in seen:
                raise GraphConfigError(f"bond {bond}: duplicate bond between the same vertices")
            seen.add(bond.key)
        ports = set()
        for v, port in self.leads:
            if v not in known:
                raise GraphConfigError(f"lead {port!r} attached to missing vertex {v}")
            if port in ports:
                raise GraphConfigError(f"duplicate port name {port!r}")
            ports.add(port)
        if not self.bonds:
            raise GraphConfigError("graph has no bonds")
        if not self._is_connected():
            raise GraphConfigError("graph is disconnected")

    def _is_connected(self) -> bool:
        adj = {v: [] for v in self.vertices}
        for bond in self.bonds:
            adj[bond.a].append(bond.b)
            adj[bond.b].append(bond.a)
        start = self.vertices[0]
        reached = {start}
        queue = deque([start])
        while queue:
            for w in adj[queue.popleft()]:
                if w not in reached:
                    reached.add(w)
                    queue.append(w)
        return len(reached) == len(self.vertices)

    # -- derived arrays ---------------------------------------------------

    @cached_property
    def position(self) -> dict:
        return {v: n for n, v in enumerate(self.vertices)}

    @cached_property
    def bond_ends(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.position
        i = np.array([pos[b.a] for b in self.bonds], dtype=int)
        j = np.array([pos[b.b] for b in self.bonds], dtype=int)
        return i, j

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([b.length for b in self.bonds], dtype=float)

    @cached_property
    def potentials(self) -> np.ndarray:
        return np.array([b.potential for b in self.bonds], dtype=float)

    @cached_property
    def static_phases(self) -> np.ndarray:
        return np.array([b.static_phase for b in self.bonds], dtype=float)

    @cached_property
    def connectivity(self) -> np.ndarray:
        n = len(self.vertices)
        C = np.zeros((n, n), dtype=bool)
        i, j = self.bond_ends
        C[i, j] = True
        C[j, i] = True
        return C

    @cached_property
    def lead_positions(self) -> np.ndarray:
        return np.array([self.position[v] for v, _ in self.leads], dtype=int)

    @cached_property
    def valence(self) -> np.ndarray:
        """Bonds plus leads attached to each vertex."""
        v = self.connectivity.sum(axis=1).astype(int)
        np.add.at(v, self.lead_positions, 1)
        return v

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def ports(self) -> tuple:
        return tuple(p for _, p in self.leads)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def find_bond(self, u: VertexId, v: VertexId) -> int:
        key = frozenset((u, v))
        for n, bond in enumerate(self.bonds):
            if bond.key == key:
                return n
        raise GraphConfigError(f"no bond between {u} and {v}")

    def with_bonds(self, bonds: Iterable[Bond]) -> "GraphTopology":
        return replace(self, bonds=tuple(bonds))

    def closed(self) -> "GraphTopology":
        """Same graph with every lead removed."""
        return replace(self, leads=())

    def to_dict(self) -> dict:
        return {
            "vertices": [v.to_dict() for v in self.vertices],
            "bonds": [
                {
                    "from": b.a.to_dict(),
                    "to": b.b.to_dict(),
                    "length_m": b.length,
                    "potential_rad_per_m": b.potential,
                    "static_phase_rad": b.static_phase,
                }
                for b in self.bonds
            ],
            "leads": [{"vertex": v.to_dict(), "port": p} for v, p in self.leads],
            "phase_convention": self.phase_convention,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @cached_property
    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# -- doubling -----------------------------------------------------------------


@dataclass(frozen=True)
class CouplingPair:
    """Cross-sector bond from up vertex ``source`` to down vertex ``target``."""

    source: VertexId
    target: VertexId
    length: float

    @property
    def mirror_key(self) -> tuple:
        return (self.target.mirror, self.source.mirror)


@dataclass(frozen=True)
class GseDoublingSpec:
    subgraph: GraphTopology
    coupling_pairs: tuple
    pi_phase_bonds: tuple = (0,)
    gse_condition: bool = True


def build_gse_graph(spec: GseDoublingSpec) -> GraphTopology:
    """Mirror an up-sector subgraph into the down sector and couple the two.

    Mirrored bonds keep the length and static phase and negate the magnetic
    potential. With ``gse_condition`` set, the coupling bonds listed in
    ``pi_phase_bonds`` carry a static phase of pi, one per mirrored pair.
    """
    sub = spec.subgraph
    if any(v.sector != UP for v in sub.vertices):
        raise GraphConfigError("doubling subgraph must live entirely in the up sector")
    pairs = tuple(spec.coupling_pairs)
    if not pairs:
        raise GraphConfigError("at least one coupling pair is required")
    known = set(sub.vertices)
    by_key = {}
    for p in pairs:
        if p.source.sector != UP or p.target.sector != DOWN:
            raise GraphConfigError(f"coupling pair ({p.source},{p.target}) must run from up to down")
        for v in (p.source, p.target.mirror):
            if v not in known:
                raise GraphConfigError(f"coupling pair references missing vertex {v}")
        if p.source.index == p.target.index:
            raise GraphConfigError(f"coupling ({p.source},{p.target}) would put a diagonal entry into V")
        by_key[(p.source, p.target)] = p
    for p in pairs:
        partner = by_key.get(p.mirror_key)
        if partner is None:
            raise GraphConfigError(
                f"coupling ({p.source},{p.target}) lacks its mirror ({p.mirror_key[0]},{p.mirror_key[1]})"
            )
        if not math.isclose(partner.length, p.length, rel_tol=0, abs_tol=1e-15):
            raise GraphConfigError(
                f"mismatched coupling lengths {p.length} and {partner.length} for "
                f"({p.source},{p.target}) and its mirror"
            )

    if spec.gse_condition:
        pi_set = set(spec.pi_phase_bonds)
        if any(not 0 <= n < len(pairs) for n in pi_set):
            raise GraphConfigError("pi_phase_bonds index out of range")
        for n, p in enumerate(pairs):
            m = pairs.index(by_key[p.mirror_key])
            if (n in pi_set) == (m in pi_set):
                raise GraphConfigError(
                    "exactly one bond of every mirrored coupling pair must carry the pi phase"
                )
    else:
        pi_set = set()

    vertices = list(sub.vertices) + [v.mirror for v in sub.vertices]
    bonds = list(sub.bonds)
    bonds += [
        Bond(b.a.mirror, b.b.mirror, b.length, -b.potential, b.static_phase) for b in sub.bonds
    ]
    bonds += [
        Bond(p.source, p.target, p.length, 0.0, math.pi if n in pi_set else 0.0)
        for n, p in enumerate(pairs)
    ]
    leads = list(sub.leads) + [(v.mirror, f"{port}bar") for v, port in sub.leads]
    return GraphTopology(tuple(vertices), tuple(bonds), tuple(leads), sub.phase_convention)


def four_coupling_variant(topology: GraphTopology, i: int = 7, j: int = 8) -> GraphTopology:
    """Replace bonds (i,j) and (ibar,jbar) by the cross bonds (i,jbar) and (j,ibar).

    The new pair inherits the length of (i,j); the first carries the pi phase.
    """
    n_up = topology.find_bond(up(i), up(j))
    n_dn = topology.find_bond(down(i), down(j))
    length = topology.bonds[n_up].length
    if topology.bonds[n_dn].length != length:
        raise GraphConfigError(f"bonds ({i},{j}) and their mirror differ in length")
    keep = [b for n, b in enumerate(topology.bonds) if n not in (n_up, n_dn)]
    keep += [
        Bond(up(i), down(j), length, 0.0, math.pi),
        Bond(up(j), down(i), length, 0.0, 0.0),
    ]
    return topology.with_bonds(keep)


def without_pi_phase(topology: GraphTopology) -> GraphTopology:
    """Drop every static phase: the coupling block becomes symmetric (orthogonal class)."""
    return topology.with_bonds(replace(b, static_phase=0.0) for b in topology.bonds)


def without_magnetic_field(topology: GraphTopology) -> GraphTopology:
    return topology.with_bonds(replace(b, potential=0.0) for b in topology.bonds)


def check_mirror_symmetry(topology: GraphTopology, atol: float = 0.0) -> list[str]:
    """List violations of the mirrored-bond property (empty when it holds)."""
    problems = []
    same_sector = [b for b in topology.bonds if not b.is_cross_sector]
    index = {}
    for b in same_sector:
        index[b.key] = b
    for b in same_sector:
        if b.a.sector != UP:
            continue
        partner = index.get(frozenset((b.a.mirror, b.b.mirror)))
        if partner is None:
            problems.append(f"{b} has no mirrored bond")
            continue
        sign = 1.0 if partner.a == b.a.mirror else -1.0
        if abs(partner.length - b.length) > atol:
            problems.append(f"{b}: mirrored length differs")
        if abs(sign * partner.potential + b.potential) > atol:
            problems.append(f"{b}: mirrored potential not negated")
    n_up = sum(1 for b in same_sector if b.a.sector == UP)
    if 2 * n_up != len(same_sector):
        problems.append("sector bond counts differ")
    for b in topology.bonds:
        if b.is_cross_sector and b.potential != 0.0:
            problems.append(f"coupling bond {b} carries a magnetic potential")
    return problems


# -- defaults -------------------------------------------------------------------


def default_subgraph_lengths(seed: int = DEFAULT_LENGTH_SEED) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    lo, hi = DEFAULT_LENGTH_RANGE
    lengths = rng.uniform(lo, hi, size=len(DEFAULT_SUBGRAPH_BONDS) + 1)
    return lengths[:-1], float(lengths[-1])


def default_doubling_spec(seed: int = DEFAULT_LENGTH_SEED, gse_condition: bool = True) -> GseDoublingSpec:
    lengths, coupling_length = default_subgraph_lengths(seed)
    magnetic = set(DEFAULT_MAGNETIC_BONDS)
    bonds = tuple(
        Bond(up(i), up(j), float(L), DEFAULT_POTENTIAL if (i, j) in magnetic else 0.0)
        for (i, j), L in zip(DEFAULT_SUBGRAPH_BONDS, lengths)
    )
    vertices = tuple(up(i) for i in range(1, 10))
    leads = tuple((up(i), str(i)) for i in DEFAULT_LEAD_VERTICES)
    sub = GraphTopology(vertices, bonds, leads)
    pairs = tuple(CouplingPair(up(i), down(j), coupling_length) for i, j in DEFAULT_COUPLING)
    return GseDoublingSpec(sub, pairs, pi_phase_bonds=(0,), gse_condition=gse_condition)


def default_gse_graph(seed: int = DEFAULT_LENGTH_SEED) -> GraphTopology:
    """The shipped 18-vertex, 22-bond network with leads at 1, 2, 1bar, 2bar."""
    return build_gse_graph(default_doubling_spec(seed))


def default_config_path() -> Path:
    return Path(str(resources.files("gsegraph") / "data" / "default_gse_graph.json"))


# -- phase shifter and units ------------------------------------------------------


@dataclass(frozen=True)
class PhaseShifterSetting:
    targets: tuple
    increment: float

    def __post_init__(self):
        if not self.increment >= 0:
            raise GraphConfigError(f"length increment must be >= 0, got {self.increment}")


def mirrored_shifter(i: int, j: int, increment: float) -> PhaseShifterSetting:
    return PhaseShifterSetting(((up(i), up(j)), (down(i), down(j))), increment)


def apply_phase_shifter(topology: GraphTopology, setting: PhaseShifterSetting) -> GraphTopology:
    """Lengthen every target bond by the same increment."""
    idx = [topology.find_bond(u, v) for u, v in setting.targets]
    if setting.increment == 0:
        return topology
    bonds = list(topology.bonds)
    for n in idx:
        bonds[n] = replace(bonds[n], length=bonds[n].length + setting.increment)
    return topology.with_bonds(bonds)


def shifter_phase(k, increment):
    """Extra phase ``k * dl`` picked up along a lengthened bond."""
    return np.asarray(k) * increment


def frequency_to_wavenumber(f):
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    k = 2 * np.pi * f / SPEED_OF_LIGHT
    return float(k) if k.ndim == 0 else k


def wavenumber_to_frequency(k):
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("wavenumber must be non-negative")
    f = k * SPEED_OF_LIGHT / (2 * np.pi)
    return float(f) if f.ndim == 0 else f


# -- configuration documents -----------------------------------------------------


def _vertex(obj, where: str) -> VertexId:
    if isinstance(obj, dict):
        if "index" not in obj:
            raise GraphConfigError(f"{where}: vertex object needs an 'index'")
        return VertexId(obj["index"], obj.get("sector", UP))
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return VertexId(obj[0], obj[1])
    if isinstance(obj, int):
        return VertexId(obj, UP)
    raise GraphConfigError(f"{where}: cannot read vertex reference {obj!r}")


def _number(obj, key, where, default=None):
    if key not in obj:
        if default is None:
            raise GraphConfigError(f"{where}: missing key {key!r}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise GraphConfigError(f"{where}: {key!r} must be a number, got {val!r}")
    return float(val)


def parse_graph_config(text: str | dict) -> GraphTopology:
    """Read a graph document (JSON text or an already-decoded dict).

    When a ``doubling`` block is present, ``vertices``/``bonds``/``leads``
    describe the up-sector subgraph and the doubled graph is returned.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphConfigError(f"not valid JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict):
        raise GraphConfigError("top level must be an object")
    for key in ("vertices", "bonds"):
        if not isinstance(doc.get(key), list):
            raise GraphConfigError(f"missing or non-list key {key!r}")
    unknown = set(doc) - {"vertices", "bonds", "leads", "doubling", "phase_convention", "comment"}
    if unknown:
        raise GraphConfigError(f"unknown top-level keys {sorted(unknown)}")

    vertices = []
    for n, v in enumerate(doc["vertices"]):
        vid = _vertex(v, f"vertices[{n}]")
        if vid in vertices:
            raise GraphConfigError(f"vertices[{n}]: duplicate vertex {vid}")
        vertices.append(vid)
    bonds = []
    for n, b in enumerate(doc["bonds"]):
        where = f"bonds[{n}]"
        if not isinstance(b, dict) or "from" not in b or "to" not in b:
            raise GraphConfigError(f"{where}: needs 'from' and 'to'")
        a, z = _vertex(b["from"], where), _vertex(b["to"], where)
        if a == z:
            raise GraphConfigError(f"{where}: bond ({a},{z}): self-loop not supported")
        length = _number(b, "length_m", where)
        if length <= 0:
            raise GraphConfigError(f"{where}: bond ({a},{z}): length must be positive, got {length}")
        bonds.append(
            Bond(
                a,
                z,
                length,
                _number(b, "potential_rad_per_m", where, 0.0),
                _number(b, "static_phase_rad", where, 0.0) % (2 * math.pi),
            )
        )
    leads = []
    for n, lead in enumerate(doc.get("leads", [])):
        if not isinstance(lead, dict) or "vertex" not in lead:
            raise GraphConfigError(f"leads[{n}]: needs 'vertex'")
        leads.append((_vertex(lead["vertex"], f"leads[{n}]"), str(lead.get("port", n + 1))))
    convention = doc.get("phase_convention", "symmetric")

    topo = GraphTopology(tuple(vertices), tuple(bonds), tuple(leads), convention)

    dbl = doc.get("doubling")
    if dbl is None:
        return topo
    if not isinstance(dbl, dict) or not isinstance(dbl.get("coupling_pairs"), list):
        raise GraphConfigError("doubling: needs a 'coupling_pairs' list")
    pairs = []
    for n, p in enumerate(dbl["coupling_pairs"]):
        where = f"doubling.coupling_pairs[{n}]"
        if not isinstance(p, dict):
            raise GraphConfigError(f"{where}: must be an object")
        pairs.append(
            CouplingPair(
                _vertex(p.get("from"), where), _vertex(p.get("to"), where), _number(p, "length_m", where)
            )
        )
    spec = GseDoublingSpec(
        topo,
        tuple(pairs),
        tuple(dbl.get("pi_phase_bonds", [0])),
        bool(dbl.get("gse_condition", True)),
    )
    return build_gse_graph(spec)


def load_graph_config(path: str | Path | None = None) -> GraphTopology:
    path = default_config_path() if path is None else Path(path)
    return parse_graph_config(path.read_text())
