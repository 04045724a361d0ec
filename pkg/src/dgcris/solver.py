"""Sum-rate maximization for the hybrid-mode BD-RIS downlink.

Blocks are updated in the order iota -> tau -> W -> {Phi_t, Phi_r}:

* iota, tau: closed-form maximizers of the quadratic-transform surrogate;
* W: regularized MMSE-like closed form with the power multiplier found by
  bisection;
* Phi: per-group Stiefel problems solved by Riemannian CG, with optional
  greedy regrouping of cells between solves (dynamic grouping).

Throughout, ``heff`` is the K x N matrix whose row k is h~_k^H, so
``heff @ W`` holds every h~_k^H w_p.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bdris as bd
from .channel import PHASE_STREAM, ChannelSet, SystemConfig, trial_rng
from .grouping import Grouping, fixed_strategy, singletons, uniform_adjacent
from .manifold import (QuadraticTraceProblem, RcgOptions, orthonormality_residual,
                       retract, solve_rcg)

LN2 = math.log(2.0)
EPS_DIV = 1e-30


# --------------------------------------------------------------------------
# architectures


@dataclass(frozen=True)
class Architecture:
    kind: str  # "sc", "gc", "fc" or "dgc"
    strategy: str = "horizontal"

    @property
    def label(self) -> str:
        if self.kind == "gc":
            return f"cw-gc-{self.strategy}"
        return f"cw-{self.kind}"

    @property
    def dynamic(self) -> bool:
        return self.kind == "dgc"

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        key = text.strip().lower().replace("_", "-")
        if key.startswith("cw-"):
            key = key[3:]
        if key in ("sc", "fc", "dgc"):
            return cls(key)
        if key == "gc":
            return cls("gc", "horizontal")
        if key.startswith("gc-"):
            strategy = key[3:]
            if strategy in ("horizontal", "vertical", "interlaced"):
                return cls("gc", strategy)
        raise ValueError(f"unknown architecture {text!r}")

    def initial_grouping(self, config: SystemConfig) -> Grouping:
        M, G = config.num_cells, config.num_groups
        if self.kind == "sc":
            return singletons(M)
        if self.kind == "fc":
            return uniform_adjacent(M, 1)
        if self.kind == "dgc":
            return uniform_adjacent(M, G)
        if self.strategy == "horizontal" and M % G:
            # balanced row-major runs: the horizontal layout when G does not divide M
            return uniform_adjacent(M, G)
        return fixed_strategy(config.grid_rows, config.grid_cols, G, self.strategy)


def parse_architectures(text: str) -> list[Architecture]:
    return [Architecture.parse(t) for t in text.split(",") if t.strip()]


# --------------------------------------------------------------------------
# rates and fractional-programming blocks


@dataclass(frozen=True, eq=False)
class FpState:
    iota: np.ndarray      # K, real >= 0
    tau: np.ndarray       # K, complex
    precoder: np.ndarray  # N x K

    @property
    def tilde_tau(self) -> np.ndarray:
        return np.sqrt(1.0 + self.iota) * self.tau

    @classmethod
    def initial(cls, precoder: np.ndarray) -> "FpState":
        K = precoder.shape[1]
        return cls(np.zeros(K), np.zeros(K, dtype=complex), precoder)

    def with_(self, **kw) -> "FpState":
        return replace(self, **kw)


def _noise(noise_powers, K) -> np.ndarray:
    sigma2 = np.asarray(noise_powers, dtype=float)
    return np.full(K, float(sigma2)) if sigma2.ndim == 0 else sigma2


def sinr_from_heff(heff: np.ndarray, W: np.ndarray, noise_powers) -> np.ndarray:
    gains = np.abs(heff @ W) ** 2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return signal / (interference + _noise(noise_powers, heff.shape[0]))


def rate_from_heff(heff: np.ndarray, W: np.ndarray, noise_powers) -> float:
    return float(np.sum(np.log2(1.0 + sinr_from_heff(heff, W, noise_powers))))


def sum_rate(channels: ChannelSet, pair: bd.BdRisPair, W: np.ndarray, noise_powers) -> float:
    """Exact sum-rate in bit/s/Hz."""
    return rate_from_heff(bd.effective_channels(pair, channels), W, noise_powers)


def surrogate_from_heff(heff, state: FpState, noise_powers) -> float:
    sigma2 = _noise(noise_powers, heff.shape[0])
    a = heff @ state.precoder
    tau2 = np.abs(state.tau) ** 2
    quad = 2.0 * np.real(state.tilde_tau.conj() * np.diag(a)) \
        - tau2 * np.sum(np.abs(a) ** 2, axis=1) - tau2 * sigma2
    return float(np.sum(np.log2(1.0 + state.iota) + (quad - state.iota) / LN2))


def surrogate_objective(channels, pair, state: FpState, noise_powers) -> float:
    """Quadratic-transform surrogate in bit/s/Hz.

    Non-log terms carry a 1/ln 2 factor so that, at the optimal auxiliaries,
    the value equals the sum-rate and is a lower bound on it elsewhere.
    """
    return surrogate_from_heff(bd.effective_channels(pair, channels), state, noise_powers)


def iota_from_heff(heff, state: FpState) -> np.ndarray:
    a_kk = np.einsum("kn,nk->k", heff, state.precoder)
    c = np.real(state.tau.conj() * a_kk)
    u = 0.5 * (c + np.sqrt(c * c + 4.0))
    u = np.maximum(u, 1.0)
    return u * u - 1.0


def update_iota(channels, pair, state: FpState) -> np.ndarray:
    """Maximizer of the surrogate over iota for fixed tau and W.

    With tau at its FP optimum for iota = SINR this returns the SINR itself.
    """
    return iota_from_heff(bd.effective_channels(pair, channels), state)


def tau_from_heff(heff, state: FpState, noise_powers) -> np.ndarray:
    sigma2 = _noise(noise_powers, heff.shape[0])
    a = heff @ state.precoder
    total = np.sum(np.abs(a) ** 2, axis=1) + sigma2
    return np.sqrt(1.0 + state.iota) * np.diag(a) / total


def update_tau(channels, pair, state: FpState, noise_powers) -> np.ndarray:
    return tau_from_heff(bd.effective_channels(pair, channels), state, noise_powers)


class PowerBisectionError(RuntimeError):
    pass


def precoder_from_heff(heff, state: FpState, power: float,
                       rel_tol: float = 1e-8, max_iters: int = 200) -> np.ndarray:
    tau2 = np.abs(state.tau) ** 2
    A = heff.conj().T @ (tau2[:, None] * heff)
    B = heff.conj().T * state.tilde_tau[None, :]
    if not np.any(B):
        return np.zeros_like(B)
    lam, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    C = U.conj().T @ B
    lam_floor = max(lam.max(), 0.0) * A.shape[0] * np.finfo(float).eps
    null = lam <= lam_floor
    C[null] = 0.0  # range(B) lies in range(A); these rows are rounding noise
    lam = np.where(null, 0.0, lam)
    c2 = np.sum(np.abs(C) ** 2, axis=1)

    def norm2(mu):
        d = lam + mu
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(np.where(c2 > 0, c2 / (d * d), 0.0)))

    def build(mu):
        d = lam + mu
        scale = np.where(c2 > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
        return U @ (scale[:, None] * C)

    if norm2(0.0) <= power:
        return build(0.0)
    lo, hi = 0.0, math.sqrt(c2.sum() / power)
    while norm2(hi) >= power:
        hi *= 2.0
    for _ in range(max_iters):
        n_hi = norm2(hi)
        if power - n_hi <= rel_tol * power:
            return build(hi)
        mid = 0.5 * (lo + hi)
        if norm2(mid) > power:
            lo = mid
        else:
            hi = mid
    raise PowerBisectionError(
        f"power multiplier bisection did not reach tolerance: mu in [{lo}, {hi}], "
        f"|W|^2 = {norm2(hi)}, P = {power}")


def update_precoder(channels, pair, state: FpState, power: float) -> np.ndarray:
    """W maximizing the surrogate subject to ||W||_F^2 <= P."""
    return precoder_from_heff(bd.effective_channels(pair, channels), state, power)


def zero_forcing(heff: np.ndarray, power: float) -> np.ndarray:
    """Pseudo-inverse precoder scaled to full power."""
    W = np.linalg.pinv(heff)
    nrm = np.linalg.norm(W)
    if nrm == 0 or not np.isfinite(nrm):
        return np.zeros((heff.shape[1], heff.shape[0]), dtype=complex)
    return W * math.sqrt(power) / nrm


# --------------------------------------------------------------------------
# objective decomposition for the Phi block


@dataclass(frozen=True, eq=False)
class DecompositionMatrices:
    x_t: np.ndarray
    x_r: np.ndarray
    y: np.ndarray
    z_t: np.ndarray
    z_r: np.ndarray
    g: np.ndarray  # M x K, column k is G w_k

    @property
    def num_cells(self) -> int:
        return self.y.shape[0]

    def exact_objective(self, phi_t: np.ndarray, phi_r: np.ndarray) -> float:
        """Phi-dependent part of the negated surrogate (in nats), no approximation."""
        val = 0.0
        for phi, z, x in ((phi_t, self.z_t, self.x_t), (phi_r, self.z_r, self.x_r)):
            val += np.trace(phi @ self.y @ phi.conj().T @ z).real \
                - 2.0 * np.trace(phi @ x).real
        return float(val)

    def block_problem(self, idx: np.ndarray) -> QuadraticTraceProblem:
        sel = np.ix_(idx, idx)
        return QuadraticTraceProblem.from_halves(
            self.x_t[sel], self.x_r[sel], self.y[sel], self.z_t[sel], self.z_r[sel])


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def compute_decomposition(channels: ChannelSet, state: FpState) -> DecompositionMatrices:
    g = channels.bs_ris @ state.precoder
    y = _hermitize(g @ g.conj().T)
    refl = channels.reflective_mask()
    tau2 = np.abs(state.tau) ** 2
    ttc = state.tilde_tau.conj()
    h = channels.ris_user
    M = channels.num_cells
    parts = {}
    for name, sel in (("t", ~refl), ("r", refl)):
        if sel.any():
            hs = h[sel]
            z = _hermitize(hs.T @ (tau2[sel, None] * hs.conj()))
            x = g[:, sel] @ (ttc[sel, None] * hs.conj())
        else:
            z = np.zeros((M, M), dtype=complex)
            x = np.zeros((M, M), dtype=complex)
        parts[name] = (x, z)
    return DecompositionMatrices(x_t=parts["t"][0], x_r=parts["r"][0], y=y,
                                 z_t=parts["t"][1], z_r=parts["r"][1], g=g)


def _block_value(pt, pr, ys, zt, zr, xt, xr) -> float:
    # sum over t/r of Tr(P Y P^H Z) - 2 Re Tr(P X)
    val = 0.0
    for p, z, x in ((pt, zt, xt), (pr, zr, xr)):
        q = p @ ys @ p.conj().T
        val += np.sum(q * z.T).real - 2.0 * np.sum(p * x.T).real
    return float(val)


def group_objective(blocks: tuple[np.ndarray, np.ndarray], dec: DecompositionMatrices,
                    grouping: Grouping, g: int) -> float:
    """f_g: within-group part of the Phi objective."""
    idx = grouping.index_vector(g)
    sel = np.ix_(idx, idx)
    return _block_value(blocks[0], blocks[1], dec.y[sel], dec.z_t[sel], dec.z_r[sel],
                        dec.x_t[sel], dec.x_r[sel])


def set_objective(phi_t: np.ndarray, phi_r: np.ndarray, dec: DecompositionMatrices,
                  idx) -> float:
    """f over an arbitrary cell set, reading sub-matrices of full Phi matrices."""
    idx = np.asarray(idx, dtype=np.intp)
    sel = np.ix_(idx, idx)
    return _block_value(phi_t[sel], phi_r[sel], dec.y[sel], dec.z_t[sel], dec.z_r[sel],
                        dec.x_t[sel], dec.x_r[sel])


def group_objectives(phi_t, phi_r, dec, grouping: Grouping) -> np.ndarray:
    return np.array([set_objective(phi_t, phi_r, dec, s) for s in grouping.subsets])


def grouping_objective(pair: bd.BdRisPair, dec: DecompositionMatrices,
                       grouping: Grouping | None = None) -> float:
    """Sum of f_g with blocks read from the pair's full matrices."""
    grouping = pair.grouping if grouping is None else grouping
    return float(np.sum(group_objectives(pair.phi_t, pair.phi_r, dec, grouping)))


def approximation_gap(pair: bd.BdRisPair, dec: DecompositionMatrices,
                      grouping: Grouping | None = None) -> float:
    """Relative size of the cross-group terms dropped by the per-group split."""
    exact = dec.exact_objective(pair.phi_t, pair.phi_r)
    approx = grouping_objective(pair, dec, grouping)
    return abs(exact - approx) / max(abs(exact), EPS_DIV)


# --------------------------------------------------------------------------
# dynamic grouping and block optimization


def grouping_pass(pair: bd.BdRisPair, dec: DecompositionMatrices,
                  grouping: Grouping | None = None) -> Grouping:
    """One greedy sweep over cells m = 0..M-1 with the Phi matrices held fixed.

    A cell in a singleton group stays put. Otherwise it moves to the group
    that minimizes the total objective; ties keep the current group, then
    prefer the lowest group index. Moves are accepted only on a strict
    decrease of the computed total, so the output never scores worse.
    """
    grouping = pair.grouping if grouping is None else grouping
    G = grouping.num_groups
    if G == 1:
        return grouping
    subsets = [list(s) for s in grouping.subsets]
    where = {m: g for g, s in enumerate(subsets) for m in s}
    phi_t, phi_r = pair.phi_t, pair.phi_r
    values = np.array([set_objective(phi_t, phi_r, dec, sorted(s)) for s in subsets])
    total = float(np.sum(values))
    for m in range(dec.num_cells):
        tag = where[m]
        if len(subsets[tag]) <= 1:
            continue
        shrunk = sorted(c for c in subsets[tag] if c != m)
        f_shrunk = set_objective(phi_t, phi_r, dec, shrunk)
        best_g, best_total, best_grown = tag, total, None
        for g in range(G):
            if g == tag:
                continue
            grown = sorted(subsets[g] + [m])
            cand = values.copy()
            cand[tag] = f_shrunk
            cand[g] = set_objective(phi_t, phi_r, dec, grown)
            cand_total = float(np.sum(cand))
            if cand_total < best_total:
                best_g, best_total, best_grown = g, cand_total, cand
        if best_g != tag:
            subsets[tag].remove(m)
            subsets[best_g].append(m)
            where[m] = best_g
            values, total = best_grown, best_total
    return Grouping(subsets)


# "dropped": each group sees only its own sub-matrices (the per-group split
# of the objective). "exact": groups are solved in turn, each with the linear
# term corrected for the current blocks of all other groups.
COUPLINGS = ("dropped", "exact")


def _canonical_block(n: int) -> np.ndarray:
    return np.vstack([np.eye(n), np.eye(n)]).astype(complex) / math.sqrt(2.0)


def optimize_blocks(dec: DecompositionMatrices, grouping: Grouping,
                    warm_start_blocks, opts: RcgOptions = RcgOptions(),
                    reset: bool = False, coupling: str = "dropped"):
    """Solve the per-group Stiefel problems.

    ``warm_start_blocks`` holds one (Phi_t, Phi_r) pair per group, typically
    the current matrices re-indexed under ``grouping``. Blocks that are no
    longer orthonormal (the group changed) are pulled back onto the manifold
    by polar retraction. With ``reset`` every solve starts from [I; I]/sqrt(2).
    ``coupling`` selects the per-group problem, see :data:`COUPLINGS`.

    Returns ``(blocks, diagnostics, starts)`` where ``starts`` are the
    feasible stacked starting points actually handed to the solver.
    """
    starts = []
    for g in range(grouping.num_groups):
        n = len(grouping.subsets[g])
        if reset:
            phi0 = _canonical_block(n)
        else:
            phi0 = bd.stack_block(*warm_start_blocks[g])
            if orthonormality_residual(phi0) > 1e-12:
                phi0 = retract(phi0, np.zeros_like(phi0))
        starts.append(phi0)
    if coupling == "exact":
        full = bd.restore([bd.split_block(s) for s in starts], grouping, dec.num_cells)
        phi_t, phi_r = full.phi_t.copy(), full.phi_r.copy()
    blocks, diags = [], []
    for g in range(grouping.num_groups):
        idx = grouping.index_vector(g)
        sel = np.ix_(idx, idx)
        if coupling == "exact":
            rt, rr = phi_t.copy(), phi_r.copy()
            rt[sel] = 0
            rr[sel] = 0
            ct = dec.y[idx, :] @ rt.conj().T @ dec.z_t[:, idx]
            cr = dec.y[idx, :] @ rr.conj().T @ dec.z_r[:, idx]
            problem = QuadraticTraceProblem.from_halves(
                dec.x_t[sel] - ct, dec.x_r[sel] - cr, dec.y[sel], dec.z_t[sel], dec.z_r[sel])
        else:
            problem = dec.block_problem(idx)
        phi, diag = solve_rcg(problem, starts[g], opts)
        if coupling == "exact":
            phi_t[sel], phi_r[sel] = bd.split_block(phi)
        blocks.append(bd.split_block(phi))
        diags.append(diag)
    return blocks, diags, starts


@dataclass
class InnerStep:
    before_pass: float
    after_pass: float
    warm_start: float
    after_blocks: float
    moves: int
    accepted: bool


@dataclass
class Alg1Info:
    iterations: int
    objective_history: list
    steps: list
    rcg_iterations: list
    converged: bool


def _count_moves(a: Grouping, b: Grouping) -> int:
    la, lb = a.labels(), b.labels()
    return int(np.sum(la != lb))


def algorithm1(dec: DecompositionMatrices, grouping0: Grouping, pair0: bd.BdRisPair,
               opts: RcgOptions = RcgOptions(), dynamic: bool = True,
               tol: float = 1e-6, max_iters: int = 50, reset_blocks: bool = False,
               coupling: str = "dropped"):
    """Alternate greedy regrouping and per-group block solves.

    With ``dynamic=False`` this is a single block-optimization call (fixed
    architectures). The loop stops when the objective's relative change
    drops below ``tol``, when a pass leaves the grouping unchanged after the
    blocks were already optimized for it, or after ``max_iters``. An
    iteration that would raise the objective is rejected and ends the loop,
    so the accepted trajectory is non-increasing. The tracked objective is
    the sum of f_g, or the exact Phi objective when ``coupling="exact"``;
    the recorded :class:`InnerStep` values are always sums of f_g.

    Returns ``(grouping, pair, info)``.
    """
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}, got {coupling!r}")

    def score(p, gr):
        if coupling == "exact":
            return dec.exact_objective(p.phi_t, p.phi_r)
        return grouping_objective(p, dec, gr)

    grouping, pair = grouping0, pair0
    current = score(pair, grouping)
    history, steps = [current], []
    rcg_iters = []
    converged = False
    for it in range(max_iters if dynamic else 1):
        before_pass = grouping_objective(pair, dec, grouping)
        new_grouping = grouping_pass(pair, dec, grouping) if dynamic else grouping
        after_pass = grouping_objective(pair, dec, new_grouping)
        moves = _count_moves(grouping, new_grouping)
        if it > 0 and moves == 0:
            converged = True
            break
        warm = bd.extract_blocks(pair.phi_t, pair.phi_r, new_grouping)
        blocks, diags, starts = optimize_blocks(dec, new_grouping, warm, opts, reset_blocks,
                                                coupling)
        warm_value = float(sum(
            group_objective(bd.split_block(s), dec, new_grouping, g)
            for g, s in enumerate(starts)))
        cand = bd.restore(blocks, new_grouping, pair.num_cells)
        value = score(cand, new_grouping)
        accepted = value <= current
        steps.append(InnerStep(before_pass, after_pass, warm_value,
                               grouping_objective(cand, dec, new_grouping), moves, accepted))
        if not accepted:
            converged = True
            break
        change = abs(current - value)
        grouping, pair, current = new_grouping, cand, value
        rcg_iters = [d.iterations for d in diags]
        history.append(value)
        if change <= tol * max(abs(history[-2]), EPS_DIV):
            converged = True
            break
    if not dynamic:
        converged = True
    return grouping, pair, Alg1Info(len(steps), history, steps, rcg_iters, converged)


# --------------------------------------------------------------------------
# full scenario


@dataclass(frozen=True)
class SolverOptions:
    outer_tol: float = 1e-4
    max_outer: int = 100
    inner_tol: float = 1e-6
    max_inner: int = 50
    aux_tol: float = 1e-10
    max_aux_sweeps: int = 1000
    rcg: RcgOptions = RcgOptions()
    reset_blocks: bool = False  # alternative reading of the clear-then-restore step
    coupling: str = "dropped"
    record: bool = False


@dataclass
class FpTraceEntry:
    block: str
    before: float
    after: float


@dataclass(eq=False)
class SolveResult:
    architecture: str
    sum_rate: float
    grouping: Grouping
    bdris: bd.BdRisPair
    precoder: np.ndarray
    state: FpState
    outer_iterations: int
    rcg_iterations: list
    inner_iterations: list
    approximation_gap: float
    activated_links: int
    converged: bool
    rate_history: list
    fp_trace: list = field(default_factory=list)
    inner_trace: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)

    def to_dict(self, include_matrices: bool = False) -> dict:
        out = {
            "architecture": self.architecture,
            "sum_rate": self.sum_rate,
            "grouping": self.grouping.to_list(),
            "outer_iterations": self.outer_iterations,
            "rcg_iterations": list(self.rcg_iterations),
            "inner_iterations": list(self.inner_iterations),
            "approximation_gap": self.approximation_gap,
            "activated_links": self.activated_links,
            "converged": self.converged,
            "rate_history": list(self.rate_history),
        }
        if include_matrices:
            def enc(a):
                return {"real": a.real.tolist(), "imag": a.imag.tolist()}
            out["phi_t"] = enc(self.bdris.phi_t)
            out["phi_r"] = enc(self.bdris.phi_r)
            out["precoder"] = enc(self.precoder)
        return out


def _aux_updates(heff, state, sigma2, opts: SolverOptions, trace):
    for _ in range(opts.max_aux_sweeps):
        before = surrogate_from_heff(heff, state, sigma2) if opts.record else 0.0
        iota = iota_from_heff(heff, state)
        new = state.with_(iota=iota)
        if opts.record:
            mid = surrogate_from_heff(heff, new, sigma2)
            trace.append(FpTraceEntry("iota", before, mid))
        new = new.with_(tau=tau_from_heff(heff, new, sigma2))
        if opts.record:
            trace.append(FpTraceEntry("tau", mid, surrogate_from_heff(heff, new, sigma2)))
        delta = np.max(np.abs(new.iota - state.iota) / (1.0 + state.iota))
        state = new
        if delta <= opts.aux_tol:
            break
    return state


def optimize_precoder(heff: np.ndarray, noise_powers, power: float, W0=None,
                      opts: SolverOptions = SolverOptions()):
    """FP iterations over iota, tau and W with the BD-RIS held fixed.

    Starts from ``W0`` (zero-forcing when omitted) and stops on the same
    relative rate test as :func:`solve_scenario`. Returns ``(state, rates)``.
    """
    W = zero_forcing(heff, power) if W0 is None else W0
    state = FpState.initial(W)
    rates = [rate_from_heff(heff, W, noise_powers)]
    for _ in range(opts.max_outer):
        state = _aux_updates(heff, state, noise_powers, opts, [])
        state = state.with_(precoder=precoder_from_heff(heff, state, power))
        rates.append(rate_from_heff(heff, state.precoder, noise_powers))
        if abs(rates[-1] - rates[-2]) <= opts.outer_tol * max(abs(rates[-2]), EPS_DIV):
            break
    return state, rates


def solve_scenario(config: SystemConfig, channels: ChannelSet, architecture,
                   trial_index: int = 0, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Alternating optimization of W and the BD-RIS for one channel realization.

    The initial RIS phases depend only on ``(config.seed, trial_index)``, so
    every architecture starts from the same diagonal matrices.
    """
    if isinstance(architecture, str):
        architecture = Architecture.parse(architecture)
    P = config.transmit_power_mw
    sigma2 = config.noise_powers()
    grouping = architecture.initial_grouping(config)
    pair = bd.init_diagonal(config.num_cells, grouping,
                            trial_rng(config.seed, trial_index, PHASE_STREAM))
    heff = bd.effective_channels(pair, channels)
    state = FpState.initial(zero_forcing(heff, P))
    rate = rate_from_heff(heff, state.precoder, sigma2)
    history = [rate]
    best = (rate, pair, state, grouping)
    fp_trace, inner_trace, feas = [], [], []
    rcg_iters, inner_iters = [], []
    dec = None
    converged = False
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        state = _aux_updates(heff, state, sigma2, opts, fp_trace)
        before = surrogate_from_heff(heff, state, sigma2) if opts.record else 0.0
        state = state.with_(precoder=precoder_from_heff(heff, state, P))
        if opts.record:
            fp_trace.append(FpTraceEntry("W", before, surrogate_from_heff(heff, state, sigma2)))

        dec = compute_decomposition(channels, state)
        grouping, pair, info = algorithm1(
            dec, grouping, pair, opts.rcg, dynamic=architecture.dynamic,
            tol=opts.inner_tol, max_iters=opts.max_inner, reset_blocks=opts.reset_blocks,
            coupling=opts.coupling)
        rcg_iters = info.rcg_iterations or rcg_iters
        inner_iters.append(info.iterations)
        if opts.record:
            inner_trace.append(info)
            report = bd.validate_structure(pair)
            feas.append((report.max_off_pattern, float(report.unitary_residuals.max()),
                         float(np.linalg.norm(state.precoder) ** 2)))

        heff = bd.effective_channels(pair, channels)
        rate = rate_from_heff(heff, state.precoder, sigma2)
        history.append(rate)
        if rate > best[0]:
            best = (rate, pair, state, grouping)
        if abs(rate - history[-2]) <= opts.outer_tol * max(abs(history[-2]), EPS_DIV):
            converged = True
            break

    rate, pair, state, grouping = best
    gap = approximation_gap(pair, dec, grouping) if dec is not None else 0.0
    return SolveResult(
        architecture=architecture.label, sum_rate=rate, grouping=grouping, bdris=pair,
        precoder=state.precoder, state=state, outer_iterations=outer,
        rcg_iterations=rcg_iters, inner_iterations=inner_iters, approximation_gap=gap,
        activated_links=bd.activated_links(grouping), converged=converged,
        rate_history=history, fp_trace=fp_trace, inner_trace=inner_trace, feasibility=feas)
