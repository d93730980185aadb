"""Forward time stepping for split systems with an IMEX pair.

Stage i solves

    X = Y_n + k_n * sum_{j<i} A[i,j] f_j + k_n * sum_{j<=i} B[i,j] g_j

where only the B[i,i] g(X) term is implicit; a zero implicit diagonal
entry makes the stage explicit.  All right-hand-side evaluations,
including the explicit half, are pinned to the implicit abscissae times
t_n + k_n d_i, which is what the shared quadrature of the error
estimator assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .problems import SplitOdeProblem
from .tableaus import ImexPair, validate

GRID_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class NewtonError(SolverError):
    """Newton failed to converge within the iteration budget."""

    def __init__(self, interval: int, stage: int, residual: float, iters: int):
        self.interval = interval
        self.stage = stage
        self.residual = residual
        super().__init__(
            f"Newton did not converge on interval {interval}, stage {stage}: "
            f"residual {residual:.3e} after {iters} iterations"
        )


class SingularJacobianError(SolverError):
    def __init__(self, interval: int, stage: int):
        self.interval = interval
        self.stage = stage
        super().__init__(
            f"singular Newton matrix on interval {interval}, stage {stage}"
        )


class NonFiniteStateError(SolverError):
    def __init__(self, interval: int, stage: int, t: float):
        self.interval = interval
        self.stage = stage
        super().__init__(
            f"non-finite state on interval {interval}, stage {stage}, t={t:.6g}"
        )


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 < ... < t_N."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @classmethod
    def uniform(cls, t_end: float, n_intervals: int, t_start: float = 0.0) -> "TimeGrid":
        if n_intervals < 1:
            raise ValueError("need at least one interval")
        return cls(np.linspace(t_start, t_end, n_intervals + 1))

    @classmethod
    def from_step(cls, t_end: float, k: float, t_start: float = 0.0) -> "TimeGrid":
        ratio = (t_end - t_start) / k
        n = round(ratio)
        if n < 1 or abs(ratio - n) > GRID_TOL * max(1.0, abs(ratio)):
            raise ValueError(f"step {k} does not evenly divide [{t_start}, {t_end}]")
        return cls.uniform(t_end, n, t_start)

    def locate(self, t: float) -> int:
        """Index n with t in [t_n, t_n+1]; clamps to the end intervals."""
        n = int(np.searchsorted(self.nodes, t, side="right")) - 1
        return min(max(n, 0), self.n_intervals - 1)


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iters: int = 25


@dataclass
class StageRecord:
    """Per-interval stage data: values, their times, and cached f/g values."""

    values: np.ndarray       # (n_stages, m)
    times: np.ndarray        # (n_stages,) implicit-abscissae times
    f_vals: np.ndarray       # (n_stages, m)
    g_vals: np.ndarray       # (n_stages, m)
    newton_iters: np.ndarray  # (n_stages,) ints, 0 for explicit stages


@dataclass
class ForwardSolution:
    grid: TimeGrid
    nodal: np.ndarray              # (N+1, m)
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def final_state(self) -> np.ndarray:
        return self.nodal[-1]


def _newton_stage(problem, t_i, k_n, bii, known, newton, interval, stage, lu_cache):
    x = known.copy()
    iters = 0
    m = known.size
    eye = np.eye(m)
    while True:
        r = x - k_n * bii * problem.g(x, t_i) - known
        if not np.all(np.isfinite(r)):
            raise NonFiniteStateError(interval, stage, t_i)
        rnorm = float(np.abs(r).max())
        xnorm = float(np.abs(x).max())
        if rnorm <= newton.abs_tol + newton.rel_tol * xnorm:
            return x, iters
        if iters >= newton.max_iters:
            raise NewtonError(interval, stage, rnorm, iters)
        key = (k_n, bii)
        if lu_cache is not None and key in lu_cache:
            fac = lu_cache[key]
        else:
            mat = eye - k_n * bii * problem.jac_g(x)
            fac = lu_factor(mat, check_finite=False)
            if np.any(fac[0].diagonal() == 0.0):
                raise SingularJacobianError(interval, stage)
            if lu_cache is not None:
                lu_cache[key] = fac
        x = x + lu_solve(fac, -r, check_finite=False)
        iters += 1


def step(problem: SplitOdeProblem, pair: ImexPair, t_n: float, k_n: float,
         y_n: np.ndarray, newton: NewtonConfig | None = None,
         interval: int = 0, lu_cache: dict | None = None):
    """One IMEX step from (t_n, y_n); returns (y_next, StageRecord)."""
    newton = newton or NewtonConfig()
    a_ex, w_ex = pair.explicit.coeffs, pair.explicit.weights
    b_im, w_im = pair.implicit.coeffs, pair.implicit.weights
    d = pair.implicit.abscissae
    nu = pair.n_stages
    m = y_n.size

    values = np.empty((nu, m))
    times = t_n + k_n * d
    f_vals = np.empty((nu, m))
    g_vals = np.empty((nu, m))
    iters = np.zeros(nu, dtype=int)

    for i in range(nu):
        known = y_n.copy()
        if i > 0:
            known += k_n * (a_ex[i, :i] @ f_vals[:i])
            known += k_n * (b_im[i, :i] @ g_vals[:i])
        bii = b_im[i, i]
        t_i = times[i]
        if bii == 0.0:
            x = known
        else:
            x, iters[i] = _newton_stage(problem, t_i, k_n, bii, known, newton,
                                        interval, i, lu_cache)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(interval, i, t_i)
        values[i] = x
        f_vals[i] = problem.f(x, t_i)
        g_vals[i] = problem.g(x, t_i)

    y_next = y_n + k_n * (w_ex @ f_vals + w_im @ g_vals)
    if not np.all(np.isfinite(y_next)):
        raise NonFiniteStateError(interval, nu - 1, t_n + k_n)
    record = StageRecord(values=values, times=times, f_vals=f_vals,
                         g_vals=g_vals, newton_iters=iters)
    return y_next, record


def solve_forward(problem: SplitOdeProblem, pair: ImexPair, grid: TimeGrid,
                  newton: NewtonConfig | None = None) -> ForwardSolution:
    """March the IMEX pair over the whole grid."""
    issues = [m for m in validate(pair) if not m.startswith("warning:")]
    if issues:
        raise ValueError("invalid tableau pair: " + "; ".join(issues))
    newton = newton or NewtonConfig()
    nodes = grid.nodes
    nodal = np.empty((grid.n_intervals + 1, problem.dim))
    nodal[0] = problem.y0
    stages: list[StageRecord] = []
    lu_cache: dict | None = {} if problem.linear else None
    for n in range(grid.n_intervals):
        y_next, record = step(problem, pair, nodes[n], nodes[n + 1] - nodes[n],
                              nodal[n], newton, interval=n, lu_cache=lu_cache)
        nodal[n + 1] = y_next
        stages.append(record)
    return ForwardSolution(grid=grid, nodal=nodal, stages=stages)
