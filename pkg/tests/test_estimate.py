"""Tests for the adjoint-weighted error estimate and its decompositions."""

import numpy as np
import pytest

from imexest.adjoint import solve_adjoint
from imexest.estimate import (
    ComponentMask,
    ErrorBreakdown,
    component_split,
    effectivity,
    error_breakdown,
    error_breakdown_timedep,
    galerkin_orthogonality_check,
    residual_weighted_estimate,
)
from imexest.problems import (
    QoiSpec,
    burgers,
    qoi_mean_left_half,
    split_linear_system,
    split_scalar_linear,
)
from imexest.reconstruct import build_cg
from imexest.solver import TimeGrid, solve_forward
from imexest.tableaus import builtin


def pipeline(problem, qoi, scheme="mid122", t_end=1.0, n=40, refine=4):
    pair = builtin(scheme)
    fwd = solve_forward(problem, pair, TimeGrid.uniform(t_end, n))
    recon = build_cg(problem, pair, fwd, q=pair.order - 1)
    adj = solve_adjoint(problem, recon, qoi, refine=refine)
    return pair, fwd, recon, adj


def breakdown_for(problem, qoi, **kw):
    pair, fwd, recon, adj = pipeline(problem, qoi, **kw)
    if qoi.kind == "final-time":
        bd = error_breakdown(problem, pair, fwd, recon, adj)
    else:
        bd = error_breakdown_timedep(problem, pair, fwd, recon, adj)
    return bd, (pair, fwd, recon, adj)


def test_zero_field_gives_zero_estimate():
    zero = np.zeros((2, 2))
    prob = split_linear_system(zero, zero, [1.0, -2.0], name="zero")
    qoi = QoiSpec(kind="final-time", psi=np.array([1.0, 1.0]))
    bd, _ = breakdown_for(prob, qoi, n=8)
    assert bd.e1 == bd.e2 == bd.e3 == 0.0
    np.testing.assert_allclose(bd.per_interval, 0.0)
    np.testing.assert_allclose(bd.galerkin_raw, 0.0, atol=1e-15)


def test_scalar_split_estimate_matches_true_error():
    # scalar ydot = (lam_f + lam_g) y with known exponential: the estimate
    # reproduces the actual QoI error almost exactly
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    qoi = QoiSpec(kind="final-time", psi=np.array([1.0]))
    bd, (_, fwd, _, _) = breakdown_for(prob, qoi, n=40)
    true_err = float(prob.analytic(1.0)[0] - fwd.final_state[0])
    assert abs(bd.estimate_total - true_err) < 1e-3 * abs(true_err)


def test_breakdown_internal_consistency():
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim, scale=1.0 / prob.dim)
    bd, _ = breakdown_for(prob, qoi, scheme="ssp332", t_end=0.5, n=10)
    assert isinstance(bd, ErrorBreakdown)
    assert bd.qoi_kind == "final-time"
    # totals match their per-interval sums and the density sums
    score = np.abs(bd.per_interval).sum()
    np.testing.assert_allclose(
        [bd.e1, bd.e2, bd.e3], bd.per_interval.sum(axis=0), atol=1e-13 * (1 + score)
    )
    np.testing.assert_allclose(
        bd.per_interval, bd.term_density.sum(axis=2), atol=1e-13 * (1 + score)
    )
    assert bd.estimate_total == bd.e1 + bd.e2 + bd.e3
    assert bd.per_interval.shape == (10, 3)
    assert bd.term_density.shape == (10, 3, prob.dim)


def test_kind_mismatch_rejected():
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    qoi = QoiSpec(kind="final-time", psi=np.array([1.0]))
    pair, fwd, recon, adj = pipeline(prob, qoi, n=8)
    with pytest.raises(ValueError, match="time-integrated"):
        error_breakdown_timedep(prob, pair, fwd, recon, adj)
    qoi_t = QoiSpec(kind="time-integrated", psi_tilde=lambda t: np.ones(1))
    pair, fwd, recon, adj = pipeline(prob, qoi_t, n=8)
    with pytest.raises(ValueError, match="final-time"):
        error_breakdown(prob, pair, fwd, recon, adj)


def test_time_integrated_zero_density_gives_zero():
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    qoi = QoiSpec(kind="time-integrated", psi_tilde=lambda t: np.zeros(1))
    bd, _ = breakdown_for(prob, qoi, n=8)
    assert bd.estimate_total == 0.0
    assert bd.qoi_kind == "time-integrated"


def test_time_integrated_constant_density_closed_form():
    # psi_tilde = 1: the QoI error is the integral of (y - Y), computable
    # directly from the exact solution and the reconstruction
    prob = split_scalar_linear(0.0, -1.0, 1.0)
    qoi = QoiSpec(kind="time-integrated", psi_tilde=lambda t: np.ones(1))
    bd, (_, fwd, recon, _) = breakdown_for(prob, qoi, n=80)
    from imexest.numerics import gauss_rule

    rule = gauss_rule(10)
    truth = 0.0
    for n in range(fwd.grid.n_intervals):
        a, b = fwd.grid.nodes[n], fwd.grid.nodes[n + 1]
        pts, wts = rule.mapped(a, b)
        vals = np.array([np.exp(-t) - recon.evaluate(t)[0] for t in pts])
        truth += float(wts @ vals)
    assert abs(bd.estimate_total - truth) < 1e-3 * abs(truth)


def test_narrow_bump_density_approaches_final_time_estimate():
    # a unit-mass box density concentrated at T converges to the
    # final-time estimate as the box narrows
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    psi = np.array([1.0])
    final_bd, _ = breakdown_for(prob, QoiSpec(kind="final-time", psi=psi), n=40)

    def box_density(width):
        def psi_tilde(t):
            return psi / width if t >= 1.0 - width else np.zeros(1)

        return QoiSpec(kind="time-integrated", psi_tilde=psi_tilde)

    gaps = []
    for width in (0.4, 0.2, 0.1):
        bd, _ = breakdown_for(prob, box_density(width), n=40)
        gaps.append(abs(bd.estimate_total - final_bd.estimate_total))
    assert gaps[0] > gaps[1] > gaps[2]


def test_component_split_single_block_identity():
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim)
    bd, _ = breakdown_for(prob, qoi, scheme="ssp332", t_end=0.5, n=10)
    split = component_split(bd, {"all": np.arange(prob.dim)})
    np.testing.assert_allclose(split["all"], [bd.e1, bd.e2, bd.e3], atol=1e-15)


def test_component_split_blocks_sum_to_totals():
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim)
    bd, _ = breakdown_for(prob, qoi, scheme="ssp332", t_end=0.5, n=10)
    half = prob.dim // 2
    mask = ComponentMask(
        blocks={"left": np.arange(half), "right": np.arange(half, prob.dim)},
        dim=prob.dim,
    )
    split = component_split(bd, mask)
    sums = np.array(split["left"]) + np.array(split["right"])
    scale = 1.0 + np.abs([bd.e1, bd.e2, bd.e3]).max()
    np.testing.assert_allclose(
        sums, [bd.e1, bd.e2, bd.e3], atol=1e-12 * scale
    )


def test_component_mask_validation():
    with pytest.raises(ValueError, match="partition"):
        ComponentMask(blocks={"a": np.arange(3), "b": np.arange(2, 5)}, dim=5)
    with pytest.raises(ValueError, match="partition"):
        ComponentMask(blocks={"a": np.arange(3)}, dim=5)
    with pytest.raises(ValueError, match="length"):
        ComponentMask(blocks={"a": np.ones(4, dtype=bool)}, dim=5)
    # boolean masks and index arrays are interchangeable
    mask = ComponentMask(
        blocks={"a": np.array([True, False, True]), "b": np.array([1])}, dim=3
    )
    assert mask.blocks["b"].dtype == bool


def test_component_split_dimension_mismatch():
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    qoi = QoiSpec(kind="final-time", psi=np.array([1.0]))
    bd, _ = breakdown_for(prob, qoi, n=8)
    with pytest.raises(ValueError, match="dimension"):
        component_split(bd, ComponentMask(blocks={"a": np.arange(2)}, dim=2))


def test_effectivity_ratio_and_edge_cases():
    assert effectivity(7.89e-09, 6.92e-09) == pytest.approx(1.1402, abs=1e-3)
    assert effectivity(1.0e-08, 0.0) is None
    assert effectivity(0.0, 3.0e-07) == 0.0


def test_orthogonality_residual_small_on_consistent_run():
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim, scale=1.0 / prob.dim)
    bd, (pair, fwd, recon, adj) = breakdown_for(
        prob, qoi, scheme="ssp343", t_end=0.5, n=10
    )
    res = galerkin_orthogonality_check(pair, fwd, recon, adj)
    assert res < 1e-10 * (1.0 + adj.max_abs())
    assert res == pytest.approx(bd.galerkin_raw.max(), abs=1e-16)


def test_orthogonality_residual_detects_perturbed_reconstruction():
    # the variational equations define the reconstruction, so any rebuild
    # passes the check; warping the polynomial itself must trip it
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim, scale=1.0 / prob.dim)
    pair, fwd, recon, adj = pipeline(prob, qoi, scheme="ssp332", t_end=0.5, n=10)
    clean = galerkin_orthogonality_check(pair, fwd, recon, adj)
    recon.coeffs[5, -1] += 1e-3
    res = galerkin_orthogonality_check(pair, fwd, recon, adj)
    assert res > 1e-8
    assert res > 100.0 * clean


def test_residual_weighted_estimate_matches_breakdown():
    # testing against phi itself instead of its projection only moves the
    # total by the orthogonality defect
    prob = burgers(0.05, 1.0 / 20.0)
    qoi = qoi_mean_left_half(prob.dim, scale=1.0 / prob.dim)
    bd, (pair, fwd, recon, adj) = breakdown_for(
        prob, qoi, scheme="ssp332", t_end=0.5, n=10
    )
    direct = residual_weighted_estimate(prob, recon, adj)
    slack = bd.galerkin_raw.sum() + 1e-12 * (1.0 + abs(direct))
    assert abs(direct - bd.estimate_total) <= slack + 1e-14


def test_adjoint_must_refine_forward_grid():
    prob = split_scalar_linear(-0.4, -0.6, 1.0)
    qoi = QoiSpec(kind="final-time", psi=np.array([1.0]))
    pair, fwd, recon, _ = pipeline(prob, qoi, n=8)
    # adjoint solved on an unrelated (coarser) reconstruction grid
    _, _, recon5, adj5 = pipeline(prob, qoi, n=5)
    with pytest.raises(ValueError, match="refinement"):
        error_breakdown(prob, pair, fwd, recon, adj5)
