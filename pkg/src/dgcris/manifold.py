"""Riemannian conjugate gradient on the complex Stiefel manifold.

Minimizes ``f(Phi) = Tr(Phi Y Phi^H Z) - 2 Re Tr(Phi X)`` over 2n x n
matrices with ``Phi^H Phi = I_n``.

Geometry uses the real inner product ``<A, B> = Re Tr(A^H B)``. With this
metric the Euclidean gradient is ``2 (Z Phi Y - X^H)``, the tangent
projection is ``xi - Phi herm(Phi^H xi)``, and vector transport is
projection onto the new tangent space.
"""

from dataclasses import dataclass, field

import numpy as np


class NumericalRankError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class QuadraticTraceProblem:
    X: np.ndarray  # n x 2n
    Y: np.ndarray  # n x n, Hermitian PSD
    Z: np.ndarray  # 2n x 2n, Hermitian PSD

    def __post_init__(self):
        n = self.Y.shape[0]
        if self.Y.shape != (n, n) or self.X.shape != (n, 2 * n) or self.Z.shape != (2 * n, 2 * n):
            raise ValueError(
                f"inconsistent shapes X{self.X.shape}, Y{self.Y.shape}, Z{self.Z.shape}")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @classmethod
    def from_halves(cls, x_t, x_r, y, z_t, z_r) -> "QuadraticTraceProblem":
        """Assemble X = [X_t, X_r] and Z = blkdiag(Z_t, Z_r)."""
        n = y.shape[0]
        z = np.zeros((2 * n, 2 * n), dtype=complex)
        z[:n, :n] = z_t
        z[n:, n:] = z_r
        return cls(np.hstack([x_t, x_r]), y, z)


@dataclass(frozen=True)
class RcgOptions:
    grad_tol: float = 1e-6
    max_iters: int = 500
    armijo_coeff: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 50
    # start each line search at the minimizer of a second-order model of f
    # along the retraction curve; falls back to initial_step when not convex.
    # "riemannian" adds the curvature term induced by the constraint,
    # "ambient" uses the quadratic in the embedding space only.
    model_step: str | None = "riemannian"

    def __post_init__(self):
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if not 0 < self.armijo_coeff <= 0.5:
            raise ValueError("armijo_coeff must lie in (0, 0.5]")
        if self.grad_tol <= 0 or self.max_iters < 1 or self.initial_step <= 0:
            raise ValueError("grad_tol, max_iters and initial_step must be positive")


@dataclass
class RcgDiagnostics:
    iterations: int
    grad_norm: float
    initial_objective: float
    objective: float
    converged: bool
    line_search_failed: bool = False
    history: list = field(default_factory=list)


def _check_point(problem: QuadraticTraceProblem, phi: np.ndarray):
    if phi.shape != (2 * problem.n, problem.n):
        raise ValueError(f"point must be {2 * problem.n}x{problem.n}, got {phi.shape}")


def _quad_and_zphi(problem, phi):
    zphi = problem.Z @ phi
    quad = np.sum((phi.conj().T @ zphi) * problem.Y.T)
    lin = np.sum(phi * problem.X.T)
    return quad - 2.0 * lin.real, zphi


def objective(problem: QuadraticTraceProblem, phi: np.ndarray) -> float:
    _check_point(problem, phi)
    val, _ = _quad_and_zphi(problem, phi)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError("quadratic term is not real; Y and Z must be Hermitian")
    return float(val.real)


def euclidean_gradient(problem: QuadraticTraceProblem, phi: np.ndarray) -> np.ndarray:
    _check_point(problem, phi)
    return 2.0 * (problem.Z @ phi @ problem.Y - problem.X.conj().T)


def herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def project_tangent(phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return xi - phi @ herm(phi.conj().T @ xi)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b).real)


def retract(phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Polar retraction: orthonormal factor of ``phi + xi``.

    A numerically rank-deficient ``phi + xi`` is nudged by ``1e-12`` times the
    direction ``[I; I] / sqrt(2)`` (scaled by its norm) before factoring.
    """
    a = phi + xi
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    n = a.shape[1]
    if s[0] == 0 or s[-1] <= n * np.finfo(float).eps * s[0]:
        nudge = np.vstack([np.eye(n), np.eye(n)]) / np.sqrt(2.0)
        a = a + 1e-12 * max(s[0], 1.0) * nudge
        u, s, vh = np.linalg.svd(a, full_matrices=False)
        if s[-1] <= n * np.finfo(float).eps * s[0]:
            raise NumericalRankError("retraction argument is rank deficient")
    return u @ vh


def orthonormality_residual(phi: np.ndarray) -> float:
    return float(np.linalg.norm(phi.conj().T @ phi - np.eye(phi.shape[1])))


def riemannian_gradient(problem: QuadraticTraceProblem, phi: np.ndarray) -> np.ndarray:
    return project_tangent(phi, euclidean_gradient(problem, phi))


def solve_rcg(problem: QuadraticTraceProblem, phi0: np.ndarray,
              opts: RcgOptions = RcgOptions(), record: bool = False):
    """Polak-Ribiere+ conjugate gradient with Armijo backtracking.

    Returns ``(phi, diagnostics)``. Every accepted step strictly satisfies the
    Armijo condition, so the objective never increases. When the line search
    fails the current (best) iterate is returned with
    ``diagnostics.line_search_failed`` set.
    """
    _check_point(problem, phi0)
    n = problem.n
    y, xh = problem.Y, problem.X.conj().T
    restart_every = max(1, 2 * n * n)

    phi = phi0
    f, zphi = _quad_and_zphi(problem, phi)
    f = f.real
    f0 = f
    egrad = 2.0 * (zphi @ y - xh)
    grad = project_tangent(phi, egrad)
    gnorm2 = inner(grad, grad)
    direction = -grad
    history = [f] if record else []
    failed = False
    it = 0
    since_restart = 0

    while it < opts.max_iters and np.sqrt(gnorm2) > opts.grad_tol:
        slope = inner(grad, direction)
        if slope >= 0:
            direction = -grad
            slope = -gnorm2
            since_restart = 0

        step = opts.initial_step
        if opts.model_step:
            zd = problem.Z @ direction
            curv = np.sum((direction.conj().T @ zd) * y.T).real
            if opts.model_step == "riemannian":
                sym = herm(phi.conj().T @ egrad)
                curv -= 0.5 * np.sum((direction.conj().T @ direction) * sym.T).real
            if curv > 0:
                step = -slope / (2.0 * curv)

        accepted = False
        for _ in range(opts.max_backtracks):
            cand = retract(phi, step * direction)
            f_cand, zcand = _quad_and_zphi(problem, cand)
            f_cand = f_cand.real
            if f_cand <= f + opts.armijo_coeff * step * slope:
                accepted = True
                break
            step *= opts.backtrack_ratio
        if not accepted:
            failed = True
            break

        phi, f, zphi = cand, f_cand, zcand
        it += 1
        since_restart += 1
        if record:
            history.append(f)

        egrad = 2.0 * (zphi @ y - xh)
        new_grad = project_tangent(phi, egrad)
        new_gnorm2 = inner(new_grad, new_grad)
        if since_restart >= restart_every:
            beta = 0.0
            since_restart = 0
        else:
            moved_grad = project_tangent(phi, grad)
            beta = max(0.0, inner(new_grad, new_grad - moved_grad) / gnorm2)
        direction = -new_grad + beta * project_tangent(phi, direction)
        grad, gnorm2 = new_grad, new_gnorm2

    gnorm = float(np.sqrt(gnorm2))
    diag = RcgDiagnostics(iterations=it, grad_norm=gnorm, initial_objective=float(f0),
                          objective=float(f), converged=gnorm <= opts.grad_tol,
                          line_search_failed=failed, history=history)
    return phi, diag
