"""Transmissive/reflective BD-RIS matrices with a permuted block-diagonal pattern.

The pair (phi_t, phi_r) is stored densely as two M x M complex arrays. Entries
coupling cells from different groups are exact zeros: they are only ever
assigned, never computed, by :func:`restore`.

Per group, the stacked block ``[phi_t[d, d]; phi_r[d, d]]`` (transmissive
half on top) must have orthonormal columns.
"""

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import REFLECTIVE
from .grouping import Grouping

UNITARY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BdRisPair:
    phi_t: np.ndarray
    phi_r: np.ndarray
    grouping: Grouping

    @property
    def num_cells(self) -> int:
        return self.phi_t.shape[0]

    def matrix_for(self, side: str) -> np.ndarray:
        return self.phi_r if side == REFLECTIVE else self.phi_t


@dataclass
class StructureReport:
    max_off_pattern: float
    unitary_residuals: np.ndarray
    global_residual: float
    tol: float

    @property
    def valid(self) -> bool:
        return self.max_off_pattern == 0.0 and bool(np.all(self.unitary_residuals <= self.tol))

    def messages(self) -> list[str]:
        out = []
        if self.max_off_pattern != 0.0:
            out.append(f"off-pattern entry of magnitude {self.max_off_pattern:.3e}")
        for g, r in enumerate(self.unitary_residuals):
            if r > self.tol:
                out.append(f"group {g + 1}: unitary-sum residual {r:.3e} > {self.tol:.1e}")
        return out


def block_mask(grouping: Grouping, num_cells: int | None = None) -> np.ndarray:
    """Boolean M x M mask, True where two cells share a group."""
    num_cells = grouping.num_cells if num_cells is None else num_cells
    mask = np.zeros((num_cells, num_cells), dtype=bool)
    for s in grouping.subsets:
        idx = np.asarray(s, dtype=np.intp)
        mask[np.ix_(idx, idx)] = True
    return mask


def stack_block(phi_t_g: np.ndarray, phi_r_g: np.ndarray) -> np.ndarray:
    return np.vstack([phi_t_g, phi_r_g])


def split_block(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = phi.shape[1]
    return phi[:n], phi[n:]


def init_diagonal(num_cells: int, grouping: Grouping, rng: np.random.Generator) -> BdRisPair:
    """Diagonal start: every entry has modulus 1/sqrt(2) and a uniform random phase."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(2, num_cells))
    phi_t = np.diag(np.exp(1j * phases[0]) / np.sqrt(2.0))
    phi_r = np.diag(np.exp(1j * phases[1]) / np.sqrt(2.0))
    return BdRisPair(phi_t, phi_r, grouping)


def validate_structure(pair: BdRisPair, tol: float = UNITARY_TOL) -> StructureReport:
    mask = block_mask(pair.grouping, pair.num_cells)
    off = np.concatenate([np.abs(pair.phi_t[~mask]), np.abs(pair.phi_r[~mask])])
    max_off = float(off.max()) if off.size else 0.0
    residuals = []
    for g in range(pair.grouping.num_groups):
        t, r = extract_block(pair, g)
        n = t.shape[0]
        residuals.append(np.linalg.norm(t.conj().T @ t + r.conj().T @ r - np.eye(n)))
    eye = np.eye(pair.num_cells)
    glob = np.linalg.norm(pair.phi_r.conj().T @ pair.phi_r
                          + pair.phi_t.conj().T @ pair.phi_t - eye)
    return StructureReport(max_off, np.asarray(residuals), float(glob), tol)


def extract_block(pair: BdRisPair, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows and columns d_g of phi_t and phi_r."""
    idx = pair.grouping.index_vector(g)
    sel = np.ix_(idx, idx)
    return pair.phi_t[sel].copy(), pair.phi_r[sel].copy()


def extract_blocks(phi_t: np.ndarray, phi_r: np.ndarray,
                   grouping: Grouping) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sub-matrices of full matrices under an arbitrary grouping.

    The grouping need not be the one the matrices were built for; this is how
    blocks are re-indexed after cells change groups.
    """
    out = []
    for g in range(grouping.num_groups):
        sel = np.ix_(grouping.index_vector(g), grouping.index_vector(g))
        out.append((phi_t[sel].copy(), phi_r[sel].copy()))
    return out


def restore(blocks: Sequence[tuple[np.ndarray, np.ndarray]], grouping: Grouping,
            num_cells: int | None = None) -> BdRisPair:
    """Place per-group blocks at rows/columns d_g of zero matrices."""
    if len(blocks) != grouping.num_groups:
        raise ValueError(f"{len(blocks)} blocks for {grouping.num_groups} groups")
    num_cells = grouping.num_cells if num_cells is None else num_cells
    phi_t = np.zeros((num_cells, num_cells), dtype=complex)
    phi_r = np.zeros((num_cells, num_cells), dtype=complex)
    for g, (t, r) in enumerate(blocks):
        n = len(grouping.subsets[g])
        if t.shape != (n, n) or r.shape != (n, n):
            raise ValueError(f"group {g}: blocks must be {n}x{n}, got {t.shape} and {r.shape}")
        sel = np.ix_(grouping.index_vector(g), grouping.index_vector(g))
        phi_t[sel] = t
        phi_r[sel] = r
    return BdRisPair(phi_t, phi_r, grouping)


def effective_channel(pair: BdRisPair, h_k: np.ndarray, bs_ris: np.ndarray,
                      side: str) -> np.ndarray:
    """Cascaded channel (h_k^H Phi_i G)^H as an N-vector."""
    phi = pair.matrix_for(side)
    return (h_k.conj() @ phi @ bs_ris).conj()


def effective_channels(pair: BdRisPair, channels) -> np.ndarray:
    """K x N matrix whose row k is h~_k^H = h_k^H Phi_i G."""
    refl = channels.reflective_mask()
    out = np.empty((channels.num_users, channels.bs_ris.shape[1]), dtype=complex)
    hc = channels.ris_user.conj()
    if refl.any():
        out[refl] = hc[refl] @ pair.phi_r @ channels.bs_ris
    if (~refl).any():
        out[~refl] = hc[~refl] @ pair.phi_t @ channels.bs_ris
    return out


def activated_links(grouping: Grouping) -> int:
    return int(sum(n * (2 * n + 1) for n in grouping.sizes))


def hardware_cost(num_cells: int) -> tuple[int, int]:
    """(impedance components, switches) of the M-cell impedance-switch network."""
    if num_cells < 1:
        raise ValueError("need at least one cell")
    return num_cells * (2 * num_cells + 1), 2 * num_cells * (num_cells - 1)


def write_matrices_csv(pair: BdRisPair, path) -> None:
    """Row-major dump: one CSV row per matrix row, real/imag interleaved.

    The first M rows hold phi_t, the next M rows phi_r.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for mat in (pair.phi_t, pair.phi_r):
            for row in mat:
                inter = np.empty(2 * row.size)
                inter[0::2], inter[1::2] = row.real, row.imag
                w.writerow([repr(float(v)) for v in inter])


def read_matrices_csv(path, grouping: Grouping) -> BdRisPair:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    data = np.asarray(rows)
    cplx = data[:, 0::2] + 1j * data[:, 1::2]
    m = cplx.shape[1]
    return BdRisPair(cplx[:m].copy(), cplx[m:].copy(), grouping)
