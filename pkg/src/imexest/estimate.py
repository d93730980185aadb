"""Adjoint-weighted a posteriori estimate of the QoI error, split into

  e1: discretization error (residual weighted by phi minus its L2
      projection onto local polynomials one degree below the
      reconstruction),
  e2: quadrature error of the explicit half (continuous inner product
      minus the explicit-weight stage quadrature),
  e3: the same for the implicit half.

All continuous inner products use the shared fixed Gauss rule applied
on every adjoint subinterval, so they stay exact when the adjoint grid
is a refinement of the forward grid; the quadrature sums reuse the
recorded stage values, so e2/e3 vanish to roundoff exactly when the
stage quadrature integrates the weighted term exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import AdjointSolution
from .numerics import DEFAULT_INNER_RULE, legendre_shifted
from .problems import SplitOdeProblem
from .reconstruct import PiecewisePolynomial
from .solver import ForwardSolution
from .tableaus import ImexPair


@dataclass
class ErrorBreakdown:
    """Estimate components and their per-interval / per-state densities."""

    e1: float
    e2: float
    e3: float
    per_interval: np.ndarray     # (N, 3)
    term_density: np.ndarray     # (N, 3, m)
    galerkin_scaled: np.ndarray  # (N,) scaled orthogonality residuals
    galerkin_raw: np.ndarray     # (N,) absolute orthogonality residuals
    qoi_kind: str
    true_error: Optional[float] = None
    effectivity: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def estimate_total(self) -> float:
        return self.e1 + self.e2 + self.e3


def effectivity(estimate_total: float, true_error: float) -> Optional[float]:
    """Estimate over truth; None when the true error is exactly zero."""
    if true_error == 0.0:
        return None
    return estimate_total / true_error


@dataclass
class ComponentMask:
    """Named index sets that partition the state vector into blocks."""

    blocks: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        cover = np.zeros(self.dim, dtype=int)
        clean = {}
        for name, sel in self.blocks.items():
            sel = np.asarray(sel)
            mask = np.zeros(self.dim, dtype=bool)
            if sel.dtype == bool:
                if sel.shape != (self.dim,):
                    raise ValueError(f"block {name!r} mask has wrong length")
                mask = sel.copy()
            else:
                mask[sel.astype(int)] = True
            clean[name] = mask
            cover += mask
        if not np.all(cover == 1):
            raise ValueError("blocks must partition the state indices")
        self.blocks = clean


def _subinterval_factor(forward_intervals: int, adjoint: AdjointSolution) -> int:
    n_adj = adjoint.poly.grid.n_intervals
    if n_adj % forward_intervals != 0:
        raise ValueError("adjoint grid is not a refinement of the forward grid")
    return n_adj // forward_intervals


def _stage_eval_data(d: np.ndarray, basis, factor: int):
    """Subinterval index and local basis row for each stage abscissa."""
    sub = np.clip(np.floor(d * factor).astype(int), 0, factor - 1)
    local = d * factor - sub
    rows = basis.eval_matrix(local)  # (nu, r+1)
    return sub, rows


def _assemble(problem: SplitOdeProblem, pair: ImexPair, forward: ForwardSolution,
              recon: PiecewisePolynomial, adjoint: AdjointSolution) -> ErrorBreakdown:
    grid = forward.grid
    q = recon.degree
    d = pair.implicit.abscissae
    w_ex = pair.explicit.weights
    w_im = pair.implicit.weights
    n_int = grid.n_intervals
    m = recon.dim
    factor = _subinterval_factor(n_int, adjoint)

    gp, gw = DEFAULT_INNER_RULE.mapped(0.0, 1.0)
    # Gauss points of every subinterval, in forward-interval coordinates
    taus = ((np.arange(factor)[:, None] + gp[None, :]) / factor).reshape(-1)
    wts = np.tile(gw, factor) / factor
    leg_t = legendre_shifted(q - 1, taus)     # (q, 5*factor)
    leg_d = legendre_shifted(q - 1, d)        # (q, nu)
    r_eval = recon.basis.eval_matrix(taus)    # (5*factor, q+1)
    r_deriv = recon.basis.deriv_matrix(taus)
    a_basis = adjoint.poly.basis
    a_eval = a_basis.eval_matrix(gp)          # (5, r+1) per subinterval
    d_sub, d_rows = _stage_eval_data(d, a_basis, factor)

    density = np.empty((n_int, 3, m))
    galerkin = np.empty(n_int)
    galerkin_abs = np.empty(n_int)

    for n in range(n_int):
        k_n = grid.steps[n]
        t_all = grid.nodes[n] + k_n * taus
        c_rec = recon.coeffs[n]
        c_adj = adjoint.poly.coeffs[n * factor:(n + 1) * factor]
        stage = forward.stages[n]

        y_all = r_eval @ c_rec
        ydot_all = (r_deriv @ c_rec) / k_n
        phi_all = np.einsum("kj,sjm->skm", a_eval, c_adj).reshape(-1, m)
        phi_d = np.einsum("ij,ijm->im", d_rows, c_adj[d_sub])
        # L2 projection of phi onto P^{q-1} via orthonormal Legendre modes
        modes = leg_t @ (wts[:, None] * phi_all)
        pphi_all = leg_t.T @ modes
        pphi_d = leg_d.T @ modes

        f_all = np.stack([problem.f(y_all[j], t_all[j]) for j in range(taus.size)])
        g_all = np.stack([problem.g(y_all[j], t_all[j]) for j in range(taus.size)])

        delta_t = phi_all - pphi_all
        delta_d = phi_d - pphi_d
        density[n, 0] = k_n * (
            wts @ (-ydot_all * delta_t)
            + w_ex @ (stage.f_vals * delta_d)
            + w_im @ (stage.g_vals * delta_d)
        )
        density[n, 1] = k_n * (wts @ (f_all * phi_all) - w_ex @ (stage.f_vals * phi_d))
        density[n, 2] = k_n * (wts @ (g_all * phi_all) - w_im @ (stage.g_vals * phi_d))

        # Orthogonality residual of the reconstruction against pi phi,
        # scaled by the size of its three constituent terms so that it is
        # meaningful even when the forward solution has blown up.
        t1 = k_n * float(np.sum((wts[:, None] * ydot_all) * pphi_all))
        t2 = k_n * float(np.sum((w_ex[:, None] * stage.f_vals) * pphi_d))
        t3 = k_n * float(np.sum((w_im[:, None] * stage.g_vals) * pphi_d))
        galerkin_abs[n] = abs(t1 - t2 - t3)
        galerkin[n] = galerkin_abs[n] / (1.0 + abs(t1) + abs(t2) + abs(t3))

    per_interval = density.sum(axis=2)
    totals = per_interval.sum(axis=0)
    return ErrorBreakdown(
        e1=float(totals[0]), e2=float(totals[1]), e3=float(totals[2]),
        per_interval=per_interval, term_density=density,
        galerkin_scaled=galerkin, galerkin_raw=galerkin_abs,
        qoi_kind=adjoint.qoi.kind,
    )


def error_breakdown(problem: SplitOdeProblem, pair: ImexPair,
                    forward: ForwardSolution, recon: PiecewisePolynomial,
                    adjoint: AdjointSolution) -> ErrorBreakdown:
    """Breakdown for a final-time QoI (y(T), psi)."""
    if adjoint.qoi.kind != "final-time":
        raise ValueError("error_breakdown needs a final-time adjoint; "
                         "use error_breakdown_timedep for integrated QoIs")
    return _assemble(problem, pair, forward, recon, adjoint)


def error_breakdown_timedep(problem: SplitOdeProblem, pair: ImexPair,
                            forward: ForwardSolution, recon: PiecewisePolynomial,
                            adjoint: AdjointSolution) -> ErrorBreakdown:
    """Breakdown for a time-integrated QoI int (y, psi_tilde) dt."""
    if adjoint.qoi.kind != "time-integrated":
        raise ValueError("error_breakdown_timedep needs a time-integrated adjoint")
    return _assemble(problem, pair, forward, recon, adjoint)


def component_split(breakdown: ErrorBreakdown,
                    mask: ComponentMask | dict) -> dict[str, tuple[float, float, float]]:
    """Restrict each estimate term to the blocks of a state partition;
    block sums reproduce the unrestricted totals."""
    m = breakdown.term_density.shape[2]
    if not isinstance(mask, ComponentMask):
        mask = ComponentMask(blocks=dict(mask), dim=m)
    if mask.dim != m:
        raise ValueError("mask dimension does not match state dimension")
    out = {}
    for name, sel in mask.blocks.items():
        sums = breakdown.term_density[:, :, sel].sum(axis=(0, 2))
        out[name] = (float(sums[0]), float(sums[1]), float(sums[2]))
    return out


def galerkin_orthogonality_check(pair: ImexPair, forward: ForwardSolution,
                                 recon: PiecewisePolynomial,
                                 adjoint: AdjointSolution) -> float:
    """Max over intervals of the absolute residual of the discrete
    variational equations tested against the projected adjoint; a
    self-diagnostic that must sit at roundoff level relative to the
    magnitudes of the terms involved."""
    grid = forward.grid
    q = recon.degree
    d = pair.implicit.abscissae
    w_ex = pair.explicit.weights
    w_im = pair.implicit.weights
    factor = _subinterval_factor(grid.n_intervals, adjoint)

    gp, gw = DEFAULT_INNER_RULE.mapped(0.0, 1.0)
    taus = ((np.arange(factor)[:, None] + gp[None, :]) / factor).reshape(-1)
    wts = np.tile(gw, factor) / factor
    leg_t = legendre_shifted(q - 1, taus)
    leg_d = legendre_shifted(q - 1, d)
    r_deriv = recon.basis.deriv_matrix(taus)
    a_basis = adjoint.poly.basis
    a_eval = a_basis.eval_matrix(gp)
    d_sub, d_rows = _stage_eval_data(d, a_basis, factor)

    worst = 0.0
    for n in range(grid.n_intervals):
        k_n = grid.steps[n]
        ydot_all = (r_deriv @ recon.coeffs[n]) / k_n
        c_adj = adjoint.poly.coeffs[n * factor:(n + 1) * factor]
        phi_all = np.einsum("kj,sjm->skm", a_eval, c_adj).reshape(-1, recon.dim)
        modes = leg_t @ (wts[:, None] * phi_all)
        pphi_all = leg_t.T @ modes
        pphi_d = leg_d.T @ modes
        stage = forward.stages[n]
        t1 = k_n * float(np.sum((wts[:, None] * ydot_all) * pphi_all))
        t2 = k_n * float(np.sum((w_ex[:, None] * stage.f_vals) * pphi_d))
        t3 = k_n * float(np.sum((w_im[:, None] * stage.g_vals) * pphi_d))
        worst = max(worst, abs(t1 - t2 - t3))
    return worst


def residual_weighted_estimate(problem: SplitOdeProblem,
                               recon: PiecewisePolynomial,
                               adjoint: AdjointSolution) -> float:
    """Direct evaluation of sum_n <f(Y) + g(Y) - Ydot, phi>: equals
    e1 + e2 + e3 up to the (roundoff-size) orthogonality residual."""
    grid = recon.grid
    factor = _subinterval_factor(grid.n_intervals, adjoint)
    gp, gw = DEFAULT_INNER_RULE.mapped(0.0, 1.0)
    taus = ((np.arange(factor)[:, None] + gp[None, :]) / factor).reshape(-1)
    wts = np.tile(gw, factor) / factor
    r_eval = recon.basis.eval_matrix(taus)
    r_deriv = recon.basis.deriv_matrix(taus)
    a_eval = adjoint.poly.basis.eval_matrix(gp)
    m = recon.dim
    total = 0.0
    for n in range(grid.n_intervals):
        k_n = grid.steps[n]
        t_all = grid.nodes[n] + k_n * taus
        y_all = r_eval @ recon.coeffs[n]
        ydot_all = (r_deriv @ recon.coeffs[n]) / k_n
        c_adj = adjoint.poly.coeffs[n * factor:(n + 1) * factor]
        phi_all = np.einsum("kj,sjm->skm", a_eval, c_adj).reshape(-1, m)
        resid = np.stack([
            problem.rhs(y_all[j], t_all[j]) - ydot_all[j] for j in range(taus.size)
        ])
        total += k_n * float(np.sum((wts[:, None] * resid) * phi_all))
    return total
