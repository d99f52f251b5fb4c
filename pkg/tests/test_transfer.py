import math

import numpy as np
import pytest

from ladderlab.environment import middle_energy
from ladderlab.ladder import LadderError
from ladderlab.stats import linear_fit
from ladderlab.transfer import (
    GridParams,
    TransferContext,
    assemble_kernel,
    axis_rates,
    boundary_vector,
    build_grid,
    chain_expectation,
    leading_triple,
    sigma_moment,
    sigma_moment_profile,
    symmetry_defect,
)

A = 1.0


@pytest.fixture(scope="module")
def grid():
    return build_grid(GridParams(), a=A)


@pytest.fixture(scope="module")
def ctx(grid):
    return TransferContext(grid, A)


@pytest.fixture(scope="module")
def small_grid():
    return build_grid(
        GridParams(nx_core=8, nx_tail=4, nz_core=24, nz_tail=8, nv=24, nzb=48), a=A
    )


def test_build_grid_reports_conservative_radius(grid):
    # the uniform-rate box would be ~32 ln(1e8); the per-axis radii are far sharper
    assert grid.conservative_radius == pytest.approx(32.0 * math.log(1e8), rel=1e-12)
    req = grid.tail_report["required"]
    assert req["x_hi"] < grid.conservative_radius
    assert abs(req["z_lo"]) < grid.conservative_radius


def test_build_grid_rejects_small_radii():
    with pytest.raises(LadderError, match="x_hi"):
        build_grid(GridParams(x_hi=10.0), a=A)
    with pytest.raises(LadderError, match="z_lo"):
        build_grid(GridParams(z_lo=-20.0), a=A)
    with pytest.raises(LadderError, match="at least 8"):
        build_grid(GridParams(nx_core=4, nx_tail=2), a=A)


def test_grid_structure(grid):
    assert grid.size == 8 * grid.nx * grid.nx
    assert np.all(grid.x_weights > 0) and np.all(grid.z_weights > 0)
    # shift nodes symmetric about zero: the swap reflection is representable
    assert np.allclose(grid.v_nodes, -grid.v_nodes[::-1])
    assert np.allclose(grid.v_weights, grid.v_weights[::-1])
    total = grid.x_weights.sum()
    assert total == pytest.approx(grid.params.x_hi - grid.params.x_lo, rel=1e-12)
    hw = grid.shift_halfwidth(np.array([-30.0, 0.0, 10.0]))
    assert hw[0] < 1e-5 and hw[1] == pytest.approx(grid.params.w_core)
    assert hw[2] < grid.params.w_half


def test_axis_rates_values():
    r = axis_rates(1.0, 0.25)
    assert r["x_plus"] == pytest.approx(0.875)
    assert r["z_minus"] == pytest.approx(0.5)
    with pytest.raises(LadderError):
        axis_rates(0.5)


def test_kernel_zero_pattern(ctx, grid):
    sym = ctx.op(0.25).sym
    nxx = grid.nx * grid.nx
    a_rows = slice(0, 2 * nxx)
    b_cols = slice(2 * nxx, 4 * nxx)
    assert np.all(sym[a_rows, b_cols] == 0.0)
    rest = sym.copy()
    rest[a_rows, b_cols] = 1.0
    assert np.all(rest > 0.0)


def test_kernel_matches_scalar_energy_on_grid_nodes(small_grid):
    """Assembled entries equal the scalar-energy sum over the grid's own
    rung nodes: validates the table factorization against the scalar path."""
    from ladderlab.transfer import _rung_nodes

    K = assemble_kernel(small_grid, A, 0.25)
    kv = K.kernel_values()
    nx = small_grid.nx
    z, w, qw = _rung_nodes(small_grid)

    rng = np.random.default_rng(1)

    def sidx(t, s, i, k):
        return ((t * 2 + s) * nx + i) * nx + k

    for _ in range(8):
        t, t2 = int(rng.integers(4)), int(rng.integers(4))
        if (t, t2) == (0, 1):
            t2 = 3
        s, s2 = int(rng.integers(2)), int(rng.integers(2))
        i, j, k, l = (int(v) for v in rng.integers(0, nx, size=4))
        xlo, xhi = small_grid.x_nodes[i], small_grid.x_nodes[k]
        xlo2, xhi2 = small_grid.x_nodes[j], small_grid.x_nodes[l]
        sig, sig2 = 1 - 2 * s, 1 - 2 * s2
        u, u2 = 0.5 * (xlo + xhi), 0.5 * (xlo2 + xhi2)
        gam = w - (u2 - u)
        vals = np.array([
            middle_energy(xlo, xhi, sig, t, zz, g, xlo2, xhi2, sig2, t2, A, 0.25)
            for zz, g in zip(z, gam)
        ])
        total = float(np.sum(qw * np.exp(-vals)))
        got = kv[sidx(t, s, i, k), sidx(t2, s2, j, l)]
        assert got == pytest.approx(total, rel=1e-11), (t, t2, s, s2, i, j, k, l)


def test_reflection_identities(ctx, grid):
    perm = grid.reflect_permutation()
    for eta in (0.0, 0.25):
        sym = ctx.op(eta).sym
        neg = assemble_kernel(grid, A, -eta).sym
        assert np.allclose(sym, neg[np.ix_(perm, perm)].T, rtol=1e-12, atol=1e-300)
        g_sym = ctx.op(eta, "gamma").sym
        g_neg = assemble_kernel(grid, A, -eta, "gamma").sym
        scale = np.max(np.abs(g_sym))
        assert np.max(np.abs(g_sym + g_neg[np.ix_(perm, perm)].T)) < 1e-13 * scale


def test_leading_triple_properties(ctx):
    tri = leading_triple(ctx.op(0.0))
    assert tri.value > 0
    assert np.all(tri.left > 0) and np.all(tri.right > 0)
    assert tri.residual_left < 1e-10 and tri.residual_right < 1e-10
    assert 0 < tri.gap < 1
    sw = ctx.grid.sqrt_w
    assert float((tri.left * sw) @ (tri.right * sw)) == pytest.approx(1.0, rel=1e-12)


def test_rank_one_convergence(ctx):
    # powers of the normalized operator converge to the spectral projector
    tri = leading_triple(ctx.op(0.0))
    sym = ctx.op(0.0).sym
    sw = ctx.grid.sqrt_w
    u_left = tri.left * sw
    u_right = tri.right * sw
    rng = np.random.default_rng(3)
    x = rng.standard_normal(sym.shape[0])
    errs = []
    vec = x.copy()
    for m in range(1, 25):
        vec = vec @ sym / tri.value
        limit = u_left * float(x @ u_right)
        errs.append(np.linalg.norm(vec - limit))
    ratios = [errs[i + 1] / errs[i] for i in range(15, 23)]
    assert max(ratios) < 1.0
    assert np.mean(ratios) == pytest.approx(tri.gap, abs=0.08)


def test_boundary_vector_positive_and_stable(grid):
    for side in ("left", "right"):
        g = boundary_vector(grid, A, side)
        assert np.all(g > 0)
        norm = float(np.linalg.norm(g * grid.sqrt_w))
        assert math.isfinite(norm)
        # refinement in the boundary quadrature only
        import dataclasses

        p2 = dataclasses.replace(grid.params, nzb=2 * grid.params.nzb)
        grid2 = build_grid(p2, a=A)
        g2 = boundary_vector(grid2, A, side)
        assert np.max(np.abs(g2 - g) / np.abs(g)) < 1e-4


def test_boundary_vector_decay_envelope(grid):
    # tail decay of the boundary vector is at least the boundary growth rate
    g = boundary_vector(grid, A, "right").reshape(8, grid.nx, grid.nx)
    env = np.log(np.max(g, axis=(0, 2)))  # max over letters, signs, other field
    xs = grid.x_nodes
    sel = xs > 8.0
    slopes = np.diff(env[sel]) / np.diff(xs[sel])
    assert np.all(slopes < -1.0 / 12.0)


def test_boundary_vector_validation(grid):
    with pytest.raises(LadderError):
        boundary_vector(grid, 0.7, "left")
    with pytest.raises(LadderError):
        boundary_vector(grid, A, "middle")


def test_chain_expectation_unit_is_exact(ctx):
    assert chain_expectation(ctx, 8, 6, 3, tag="one") == 1.0
    assert chain_expectation(ctx, 8, 0, 4, tag="one") == 1.0


def test_chain_expectation_validation(ctx):
    with pytest.raises(LadderError):
        chain_expectation(ctx, 8, 6, 8)
    with pytest.raises(LadderError):
        chain_expectation(ctx, 8, 8, 3)


def test_chain_expectation_two_sided_decay(ctx):
    # with every coupling relaxed, the mean separation decays away from both
    # chain ends; fit the left-edge decay rate
    n = 16
    j = n - 1
    vals = np.array([chain_expectation(ctx, n, j, i) for i in range(1, 8)])
    assert np.all(np.abs(vals[1:]) < np.abs(vals[:-1]) + 1e-12)
    rates = np.log(np.abs(vals[:-1]) / np.abs(vals[1:]))
    assert np.all(rates[:4] > 0.5)


def test_sigma_moment_j_zero_exact(ctx):
    assert sigma_moment(ctx, 12, 0) == 1.0


def test_sigma_moment_profile_decay(ctx):
    prof = sigma_moment_profile(ctx, 30)
    assert prof[0] == 0.0
    assert np.all(np.diff(prof) < 0)  # log moment strictly decreasing
    slope, _, r2 = linear_fit(np.arange(5, 26), prof[5:26])
    assert slope < 0
    assert r2 > 0.99
    # agrees with the one-shot evaluation
    assert sigma_moment(ctx, 30, 7) == pytest.approx(math.exp(prof[7]), rel=1e-10)


def test_symmetry_defect(ctx):
    d = symmetry_defect(ctx)
    assert d["defect"] < 1e-8
    assert d["control_quarter"] > 1e-3  # the quarter coupling breaks the symmetry
    assert d["residual"] < 1e-10


def test_symmetry_defect_asymmetric_grid_control():
    # asymmetric node placement (full window, uneven panels) makes the
    # defect visible as pure quadrature error, which refinement shrinks
    from ladderlab.transfer import _panel_gauss

    defects = []
    for nv in (16, 48):
        p = GridParams(nx_core=8, nx_tail=4, nz_core=24, nz_tail=8, nv=nv, nzb=48)
        g = build_grid(p, a=A)
        n1 = (2 * nv) // 3
        vn, vw = _panel_gauss([(-1.0, 0.25, n1), (0.25, 1.0, nv - n1)])
        object.__setattr__(g, "v_nodes", vn)
        object.__setattr__(g, "v_weights", vw)
        ctx2 = TransferContext(g, A)
        defects.append(symmetry_defect(ctx2)["defect"])
    assert defects[0] > 1e-10  # visibly nonzero on the uneven grid
    assert defects[1] < 0.2 * defects[0]


def test_hilbert_schmidt_norm_finite(ctx, grid):
    for eta in (0.0, 0.25):
        hs = ctx.op(eta).hs_norm()
        assert math.isfinite(hs) and hs > 0
    kg = ctx.op(0.0, "gamma")
    assert math.isfinite(kg.hs_norm())


def test_apply_right_matches_matrix(ctx, grid):
    rng = np.random.default_rng(7)
    f = rng.random(grid.size)
    out = ctx.op(0.0).apply_right(f)
    kv = ctx.op(0.0).kernel_values()
    w = grid.sqrt_w**2
    direct = (f * w) @ kv
    assert np.allclose(out, direct, rtol=1e-10)
