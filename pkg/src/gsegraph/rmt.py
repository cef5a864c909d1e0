"""Heidelberg-approach random-matrix model with symplectic symmetry.

Conventions: the 2N x 2N Hamiltonian is [[H0, V], [-V*, H0*]] with H0 from the
GUE and V complex antisymmetric; Y = [[0, -1], [1, 0]] (x) 1_N. The coupling
matrix W has columns ordered as all up-sector channels followed by their
Kramers partners, W[:, K + c] = Y conj(W[:, c]). Energy units put the
semicircle radius at 2, so the dimensionless coupling of a channel with
W_c^dagger W_c = gamma / pi is gamma itself at the band centre.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

PHYSICAL_DEFAULT_T = 0.9


class RmtConfigError(ValueError):
    pass


def transmission_from_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    T = 4 * g / (1 + g) ** 2
    return float(T) if T.ndim == 0 else T


def gamma_from_transmission(T):
    """Weak-coupling (gamma <= 1) branch of the inverse of T = 4g/(1+g)^2."""
    T = np.asarray(T, dtype=float)
    if np.any((T <= 0) | (T > 1)):
        raise ValueError("transmission must lie in (0, 1]")
    g = (2 - T - 2 * np.sqrt(1 - T)) / T
    return float(g) if g.ndim == 0 else g


def estimate_transmission(s_aa, min_samples: int = 100) -> float:
    """T_a = 1 - |<S_aa>|^2 from a set of reflection samples."""
    s_aa = np.asarray(s_aa)
    if s_aa.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {s_aa.size}")
    return float(1 - abs(s_aa.mean()) ** 2)


def symplectic_unit(N: int) -> np.ndarray:
    return np.kron(np.array([[0.0, -1.0], [1.0, 0.0]]), np.eye(N))


def sample_gue(N: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Hermitian N x N with E|H_ij|^2 = scale^2 (i != j) and Var H_ii = scale^2."""
    if N < 2:
        raise ValueError("N must be at least 2")
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return scale * (A + A.conj().T) / 2


def sample_coupling_v(
    N: int, scale: float, rng: np.random.Generator, index_set=None
) -> np.ndarray:
    """Complex antisymmetric V; with ``index_set`` only those rows/columns are filled.

    ``index_set`` holds 0-based indices.
    """
    V = scale * (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2)
    if index_set is not None:
        idx = np.asarray(index_set, dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= N:
            raise RmtConfigError(f"index set {list(idx)} out of range for N={N}")
        mask = np.zeros((N, N), dtype=bool)
        mask[idx, :] = True
        mask[:, idx] = True
        V = np.where(mask, V, 0)
    V = np.triu(V, 1)
    return V - V.T


def v_nonzero_count(N: int, n_index: int | None) -> int:
    """Expected number of nonzero entries of V (full or sparse)."""
    if n_index is None:
        return N * (N - 1)
    outside = N - n_index
    return 2 * n_index * outside + n_index * (n_index - 1)


def assemble_gse(H0: np.ndarray, V: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    N = H0.shape[0]
    if H0.shape != (N, N) or V.shape != (N, N):
        raise ValueError(f"shape mismatch: H0 {H0.shape}, V {V.shape}")
    if np.max(np.abs(H0 - H0.conj().T), initial=0) > atol:
        raise ValueError("H0 is not Hermitian")
    if np.max(np.abs(V + V.T), initial=0) > atol:
        raise ValueError("V is not antisymmetric")
    return np.block([[H0, V], [-V.conj(), H0.conj()]])


def symplectic_residual(H: np.ndarray) -> float:
    """max |Y H^T Y^T - H|."""
    Y = symplectic_unit(H.shape[0] // 2)
    return float(np.max(np.abs(Y @ H.T @ Y.T - H)))


def kramers_partner(u: np.ndarray) -> np.ndarray:
    N = u.shape[0] // 2
    return np.concatenate([-u[N:].conj(), u[:N].conj()])


def doublet_gaps(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(within-doublet gaps, between-doublet gaps) of the sorted spectrum."""
    lam = np.linalg.eigvalsh(H)
    return lam[1::2] - lam[0::2], lam[2::2] - lam[1:-1:2]


@dataclass
class RmtModel:
    N: int = 200
    M: int = 2
    Lambda: int = 25
    tau_abs: float = 25.0
    gammas: list | None = None
    v_structure: str = "full"
    channel_basis: str = "sector"
    index_set_size: int = 5
    resample_index_set: bool = True
    ensemble_size: int = 300
    energies: list = field(default_factory=lambda: [-0.5, 0.5, 51])
    seed: int = 0

    def __post_init__(self):
        if self.v_structure not in ("full", "sparse"):
            raise RmtConfigError(f"unknown V structure {self.v_structure!r}")
        if self.channel_basis not in ("sector", "gse"):
            raise RmtConfigError(f"unknown channel basis {self.channel_basis!r}")
        if self.Lambda + self.M >= self.N:
            raise RmtConfigError("need Lambda + M < N")
        if self.Lambda > 0 and not 0 <= self.fictitious_transmission <= 1:
            raise RmtConfigError("tau_abs / (2 Lambda) must lie in [0, 1]")
        if self.gammas is None:
            self.gammas = [gamma_from_transmission(PHYSICAL_DEFAULT_T)] * self.M
        if len(self.gammas) != self.M or any(g <= 0 for g in self.gammas):
            raise RmtConfigError("need M positive channel couplings")
        if self.ensemble_size < 1:
            raise RmtConfigError("ensemble_size must be >= 1")

    @property
    def fictitious_transmission(self) -> float:
        return self.tau_abs / (2 * self.Lambda) if self.Lambda else 0.0

    @property
    def channel_gammas(self) -> np.ndarray:
        """Couplings of the K = M + Lambda channels per sector (physical first)."""
        g = list(self.gammas)
        if self.Lambda:
            T_f = self.fictitious_transmission
            g += [gamma_from_transmission(T_f) if T_f > 0 else 0.0] * self.Lambda
        return np.array(g, dtype=float)

    @property
    def n_channels(self) -> int:
        return self.M + self.Lambda

    @property
    def physical_ports(self) -> np.ndarray:
        K = self.n_channels
        return np.concatenate([np.arange(self.M), K + np.arange(self.M)])

    @property
    def port_names(self) -> tuple:
        names = [str(n + 1) for n in range(self.M)]
        return tuple(names + [f"{n}bar" for n in names])

    def energy_grid(self) -> np.ndarray:
        lo, hi, n = self.energies
        return np.linspace(lo, hi, int(n))

    @property
    def matrix_scale(self) -> float:
        """Entry scale putting the bulk semicircle radius at 2.

        Full V: E tr(H^2) / 2N = 1. Sparse V is a low-rank perturbation and
        leaves the bulk to H0 alone.
        """
        if self.v_structure == "sparse":
            return 1 / math.sqrt(self.N)
        return math.sqrt(self.N / (self.N**2 + v_nonzero_count(self.N, None)))

    @classmethod
    def from_dict(cls, d: dict) -> "RmtModel":
        keys = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - keys
        if unknown:
            raise RmtConfigError(f"unknown model keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RmtModel":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


def sample_hamiltonian(model: RmtModel, rng: np.random.Generator) -> np.ndarray:
    v = model.matrix_scale
    H0 = sample_gue(model.N, v, rng)
    idx = None
    if model.v_structure == "sparse":
        if model.resample_index_set:
            idx = np.sort(rng.choice(model.N, size=model.index_set_size, replace=False))
        else:
            idx = np.arange(model.index_set_size)
    V = sample_coupling_v(model.N, v, rng, idx)
    return assemble_gse(H0, V)


def _up_aligned(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Unit vector in span(v1, v2) with the largest up-sector weight."""
    N = v1.shape[0] // 2
    B = np.column_stack([v1, v2])
    P = B[:N].conj().T @ B[:N]
    _, c = np.linalg.eigh(P)
    return B @ c[:, -1]


def sample_coupling_w(model: RmtModel, rng: np.random.Generator) -> np.ndarray:
    """Channel vectors from Kramers pairs of an auxiliary Hamiltonian.

    ``channel_basis == "sector"``: the auxiliary matrix is H0 + H0* with V = 0,
    so each kept vector u lives in the up sector and its partner Y conj(u) in
    the down sector, like an antenna attached to one sector of the network.
    ``"gse"``: the auxiliary matrix is drawn with the model's own V and u is
    rotated within its degenerate pair to maximal up-sector weight.
    Columns are scaled so that W_c^dagger W_d = gamma_c delta_cd 1_2 / pi.
    """
    gam = model.channel_gammas
    K = model.n_channels
    if np.any(gam[: model.M] <= 0):
        raise RmtConfigError("channel couplings must be positive")
    if K >= model.N:
        raise RmtConfigError("insufficient eigenvector pairs")
    N = model.N
    if model.channel_basis == "sector":
        _, vecs = np.linalg.eigh(sample_gue(N, model.matrix_scale, rng))
        pairs = rng.choice(N, size=K, replace=False)
        u = np.vstack([vecs[:, pairs], np.zeros((N, K))])
    else:
        aux = RmtModel(
            N=N,
            M=model.M,
            Lambda=0,
            tau_abs=0.0,
            gammas=list(model.gammas),
            v_structure=model.v_structure,
            index_set_size=model.index_set_size,
            resample_index_set=model.resample_index_set,
        )
        _, vecs = np.linalg.eigh(sample_hamiltonian(aux, rng))
        pairs = rng.choice(N, size=K, replace=False)
        u = np.column_stack([_up_aligned(vecs[:, 2 * p], vecs[:, 2 * p + 1]) for p in pairs])
    partners = np.column_stack([kramers_partner(u[:, c]) for c in range(K)])
    scale = np.sqrt(gam / np.pi)
    return np.hstack([u * scale, partners * scale])


def orthogonality_residual(W: np.ndarray, gammas: np.ndarray) -> float:
    """max over channel pairs of || pi W_c^dagger W_d - gamma_c delta_cd 1_2 ||."""
    K = W.shape[1] // 2
    G = np.pi * W.conj().T @ W
    target = np.diag(np.concatenate([gammas, gammas]))
    return float(np.max(np.abs(G - target)))


def rmt_s_matrix(H: np.ndarray, W: np.ndarray, E: float) -> np.ndarray:
    """Full S(E) = 1 - 2 pi i W^dagger (E - H + i pi W W^dagger)^{-1} W."""
    Ginv = E * np.eye(H.shape[0]) - H + 1j * np.pi * W @ W.conj().T
    X = np.linalg.solve(Ginv, W)
    return np.eye(W.shape[1]) - 2j * np.pi * W.conj().T @ X


class ResolventSweep:
    """S(E) on many energies from one diagonalisation of H - i pi W W^dagger."""

    def __init__(self, H: np.ndarray, W: np.ndarray, ports=None):
        Heff = H - 1j * np.pi * W @ W.conj().T
        lam, R = np.linalg.eig(Heff)
        Wp = W if ports is None else W[:, ports]
        self.left = Wp.conj().T @ R
        self.right = np.linalg.solve(R, Wp)
        self.lam = lam

    def s_matrices(self, energies) -> np.ndarray:
        E = np.atleast_1d(np.asarray(energies, dtype=float))
        n = self.left.shape[0]
        g = 1.0 / (E[:, None] - self.lam[None, :])
        return np.eye(n) - 2j * np.pi * np.einsum("pn,en,nq->epq", self.left, g, self.right)


def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_realization(model: RmtModel, index: int) -> np.ndarray:
    """Physical S-matrix blocks for every energy of one realization, (nE, 2M, 2M)."""
    rng = realization_rng(model.seed, index)
    H = sample_hamiltonian(model, rng)
    W = sample_coupling_w(model, rng)
    return ResolventSweep(H, W, model.physical_ports).s_matrices(model.energy_grid())
