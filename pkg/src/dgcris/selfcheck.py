"""Invariant self-test on random instances (the ``validate`` subcommand).

Every check builds its reference value independently of the code under
test: finite differences for gradients, the SVD solution of the Procrustes
problem, scalar loops over users for the objective decomposition, and
enumeration of all partitions for the grouping pass.
"""

import itertools
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import bdris as bd
from .channel import SystemConfig, generate_channels, make_channel_set, trial_rng
from .grouping import Grouping, uniform_adjacent, validate
from .manifold import (QuadraticTraceProblem, RcgOptions, euclidean_gradient, objective,
                       retract, solve_rcg)
from .solver import (FpState, SolverOptions, compute_decomposition, grouping_objective,
                     grouping_pass, iota_from_heff, precoder_from_heff, solve_scenario,
                     surrogate_from_heff, tau_from_heff, zero_forcing)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_problem(rng, n: int) -> QuadraticTraceProblem:
    a = crandn(rng, n, n)
    b = crandn(rng, 2 * n, 2 * n)
    return QuadraticTraceProblem(crandn(rng, n, 2 * n), a @ a.conj().T, b @ b.conj().T)


def random_point(rng, n: int) -> np.ndarray:
    return retract(np.zeros((2 * n, n), dtype=complex), crandn(rng, 2 * n, n))


def check_gradient(rng, instances: int = 100) -> str:
    """Central differences against Re<grad, D>."""
    worst = 0.0
    for i in range(instances):
        n = 1 + i % 4
        prob = random_problem(rng, n)
        phi = random_point(rng, n)
        d = crandn(rng, 2 * n, n)
        t = 1e-5
        fd = (objective(prob, phi + t * d) - objective(prob, phi - t * d)) / (2 * t)
        an = float(np.vdot(euclidean_gradient(prob, phi), d).real)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    if worst >= 1e-5:
        raise AssertionError(f"finite-difference relative error {worst:.2e}")
    return f"{instances} instances, worst relative error {worst:.1e}"


def check_procrustes(rng, instances: int = 30) -> str:
    worst = 0.0
    for i in range(instances):
        n = 1 + i % 4
        x = crandn(rng, n, 2 * n)
        prob = QuadraticTraceProblem(x, np.eye(n, dtype=complex), np.eye(2 * n, dtype=complex))
        _, diag = solve_rcg(prob, random_point(rng, n), RcgOptions(max_iters=2000))
        best = n - 2.0 * np.linalg.svd(x, compute_uv=False).sum()
        worst = max(worst, abs(diag.objective - best))
    if worst > 1e-8:
        raise AssertionError(f"objective off the Procrustes optimum by {worst:.2e}")
    return f"{instances} instances, worst objective error {worst:.1e}"


def small_config(rng, num_cells: int) -> SystemConfig:
    rows = {4: 2, 8: 2, 16: 4}[num_cells]
    return SystemConfig(num_bs_antennas=3, num_users=3, num_reflective=int(rng.integers(0, 4)),
                        num_cells=num_cells, grid_rows=rows, grid_cols=num_cells // rows,
                        num_groups=int(rng.integers(1, num_cells + 1)),
                        seed=int(rng.integers(0, 2 ** 32)))


def check_constraints(rng, instances: int = 12) -> str:
    archs = ("cw-sc", "cw-gc", "cw-dgc", "cw-fc")
    worst = 0.0
    for i in range(instances):
        cfg = small_config(rng, (4, 8)[i % 2])
        if archs[i % 4] == "cw-gc" and cfg.num_cells % cfg.num_groups:
            cfg = replace(cfg, num_groups=2)
        res = solve_scenario(cfg, generate_channels(cfg, i), archs[i % 4], i,
                             SolverOptions(max_outer=15))
        report = bd.validate_structure(res.bdris)
        if report.max_off_pattern != 0.0:
            raise AssertionError(f"{archs[i % 4]}: nonzero entry outside the block pattern")
        if validate(res.grouping, cfg.num_cells, res.grouping.num_groups):
            raise AssertionError(f"{archs[i % 4]}: invalid grouping {res.grouping}")
        power = float(np.linalg.norm(res.precoder) ** 2)
        if power > cfg.transmit_power_mw + 1e-8:
            raise AssertionError(f"power {power} exceeds budget")
        worst = max(worst, float(report.unitary_residuals.max()))
    if worst > 1e-9:
        raise AssertionError(f"unitary-sum residual {worst:.2e}")
    return f"{instances} solves, worst unitary residual {worst:.1e}"


def random_scenario(rng, num_cells: int = 8, num_users: int = 3, num_bs: int = 3,
                    num_groups: int | None = None):
    """Random unit-variance channels and random feasible blocks."""
    refl = int(rng.integers(0, num_users + 1))
    sides = ["reflective"] * refl + ["transmissive"] * (num_users - refl)
    ch = make_channel_set(crandn(rng, num_cells, num_bs), crandn(rng, num_users, num_cells),
                          sides)
    if num_groups is None:
        num_groups = int(rng.integers(1, num_cells + 1))
    grouping = uniform_adjacent(num_cells, num_groups)
    blocks = [bd.split_block(random_point(rng, len(s))) for s in grouping.subsets]
    return ch, bd.restore(blocks, grouping, num_cells)


def check_fp_monotone(rng, instances: int = 30) -> str:
    sigma2, P = 0.5, 4.0
    count = 0
    for _ in range(instances):
        ch, pair = random_scenario(rng)
        heff = bd.effective_channels(pair, ch)
        state = FpState(np.abs(rng.standard_normal(3)), crandn(rng, 3), crandn(rng, 3, 3))
        for step in ("iota", "tau", "W"):
            before = surrogate_from_heff(heff, state, sigma2)
            if step == "iota":
                state = state.with_(iota=iota_from_heff(heff, state))
            elif step == "tau":
                state = state.with_(tau=tau_from_heff(heff, state, sigma2))
            else:
                state = state.with_(precoder=precoder_from_heff(heff, state, P))
            after = surrogate_from_heff(heff, state, sigma2)
            if after < before - 1e-8 * max(1.0, abs(before)):
                raise AssertionError(f"{step} update lowered the surrogate: {before} -> {after}")
            count += 1
    return f"{count} updates, surrogate never decreased"


def phi_terms_by_loops(ch, pair, state) -> float:
    """Phi-dependent part of the negated surrogate summed user by user."""
    total = 0.0
    for k in range(ch.num_users):
        phi = pair.matrix_for(ch.user_side[k])
        hk = ch.ris_user[k]
        for p in range(ch.num_users):
            total += abs(np.conj(state.tau[k]) * (hk.conj() @ phi @ ch.bs_ris @ state.precoder[:, p])) ** 2
        gk = ch.bs_ris @ state.precoder[:, k]
        total -= 2.0 * (np.conj(state.tilde_tau[k]) * (hk.conj() @ phi @ gk)).real
    return float(total)


def check_decomposition(rng, instances: int = 30) -> str:
    worst = 0.0
    for _ in range(instances):
        ch, pair = random_scenario(rng)
        state = FpState(np.abs(rng.standard_normal(3)), crandn(rng, 3), crandn(rng, 3, 3))
        dec = compute_decomposition(ch, state)
        direct = phi_terms_by_loops(ch, pair, state)
        exact = dec.exact_objective(pair.phi_t, pair.phi_r)
        single = uniform_adjacent(pair.num_cells, 1)
        fc = grouping_objective(bd.BdRisPair(pair.phi_t, pair.phi_r, single), dec, single)
        scale = max(1.0, abs(direct))
        worst = max(worst, abs(direct - exact) / scale, abs(exact - fc) / scale)
    if worst > 1e-10:
        raise AssertionError(f"decomposition disagreement {worst:.2e}")
    return f"{instances} instances, worst relative disagreement {worst:.1e}"


def two_part_partitions(num_cells: int):
    cells = list(range(num_cells))
    for r in range(1, num_cells):
        for first in itertools.combinations(cells[1:], r - 1):
            a = (0,) + first
            b = tuple(c for c in cells if c not in a)
            if b:
                yield Grouping([a, b])


def check_grouping_oracle(rng, instances: int = 50) -> str:
    for _ in range(instances):
        ch, pair = random_scenario(rng, num_cells=4, num_groups=2)
        grouping = pair.grouping
        state = FpState(np.abs(rng.standard_normal(3)), crandn(rng, 3), crandn(rng, 3, 3))
        dec = compute_decomposition(ch, state)
        before = grouping_objective(pair, dec, grouping)
        out = grouping_pass(pair, dec, grouping)
        after = grouping_objective(pair, dec, out)
        floor = min(grouping_objective(pair, dec, g) for g in two_part_partitions(4))
        if after > before or after < floor - 1e-12 * max(1.0, abs(floor)):
            raise AssertionError(f"pass objective {after} outside [{floor}, {before}]")
    return f"{instances} instances within [exhaustive minimum, input objective]"


def check_zero_forcing(rng, instances: int = 20) -> str:
    worst = 0.0
    for _ in range(instances):
        heff = crandn(rng, 3, 4)
        W = zero_forcing(heff, 2.0)
        gains = np.abs(heff @ W) ** 2
        worst = max(worst, float((gains.sum() - np.trace(gains)) / 2.0))
    if worst >= 1e-16 * 2.0:
        raise AssertionError(f"residual interference {worst:.2e}")
    return f"{instances} instances, worst interference {worst:.1e}"


CHECKS = (
    ("gradient", check_gradient),
    ("procrustes", check_procrustes),
    ("constraints", check_constraints),
    ("fp-monotone", check_fp_monotone),
    ("decomposition", check_decomposition),
    ("grouping-oracle", check_grouping_oracle),
    ("zero-forcing", check_zero_forcing),
)


def run_checks(seed: int = 0, names=None) -> list[CheckResult]:
    results = []
    for i, (name, fn) in enumerate(CHECKS):
        if names and name not in names:
            continue
        rng = trial_rng(seed, i, 2)
        t0 = time.perf_counter()
        try:
            detail, ok = fn(rng), True
        except AssertionError as exc:
            detail, ok = str(exc), False
        results.append(CheckResult(name, ok, detail, time.perf_counter() - t0))
    return results
