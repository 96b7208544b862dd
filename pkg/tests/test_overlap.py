import threading

import numpy as np
import pytest

from semiglobal import geometry as G
from semiglobal.chebcore import Mapping, make_subdomain
from semiglobal.overlap import (
    GlobalOperator,
    OverlapSpec,
    assemble_multi_interval,
    assemble_one_point,
    assemble_pseudo_multipoint,
    assemble_subdomains,
    assemble_taylor_multipoint,
    assemble_two_point,
    derivative_of_order,
    multi_interval_subdomains,
    sparsity_pattern,
)


def _taylor(subs_fn, terms=5):
    return lambda: assemble_subdomains("taylor_multi", subs_fn(terms), OverlapSpec(taylor_terms=terms))


FIXTURES = {
    "one_point": [
        lambda: assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 4)),
        lambda: assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 10)),
        lambda: assemble_subdomains("one_point", G.one_point_pair(-1.0, 0.3, 4.0, 8, 13)),
        lambda: assemble_subdomains("one_point", G.tanh_pair(10.0, 30)),
        lambda: assemble_subdomains("one_point", G.tanh_pair(10.0, 150)),
        lambda: assemble_subdomains("one_point", G.tanh_pair(3.0, 40, 40, r_c=0.5, outer_b=3.0)),
    ],
    "two_point": [
        lambda: assemble_subdomains("two_point", G.two_point_pair(0.0, 2.0, 4, 4)),
        lambda: assemble_subdomains("two_point", G.two_point_pair(0.0, 2.0, 16)),
        lambda: assemble_subdomains("two_point", G.two_point_pair(0.0, 2.0, 32, 32)),
        lambda: assemble_subdomains("two_point", G.two_point_pair(0.0, 1.0, 20, split=0.3)),
        lambda: assemble_subdomains("two_point", G.two_point_pair(-2.0, 5.0, 12, 30)),
        lambda: assemble_subdomains("two_point", G.two_point_pair(0.0, 1.0, 150)),
    ],
    "pseudo_multi": [
        # the rational map needs ~50 nodes before y is resolved to 1e-8; the
        # 15-node figure geometries are checked for structure only
        lambda: assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(64, 64, shift_index=s))
        for s in (2, 3, 4, 5)
    ] + [
        lambda: assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(40, 80, shift_index=3)),
        lambda: assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(60, 60)),
    ],
    "taylor_multi": [
        _taylor(lambda t: G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=t)),
        _taylor(lambda t: G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 2, max_order=t)),
        _taylor(lambda t: G.symmetric_overlap_pair(0.0, 0.6, 1.0, 40, 4, max_order=t), terms=4),
        _taylor(lambda t: G.appendix_taylor_pair(max_order=t)),
        _taylor(lambda t: G.symmetric_overlap_pair(0.0, 1.0, 2.0, 30, 5, max_order=t), terms=2),
        _taylor(lambda t: G.symmetric_overlap_pair(0.0, 1.0, 3.0, 75, 5, max_order=t), terms=6),
    ],
    "multi_interval": [
        lambda: assemble_multi_interval(0.0, 1.0, 6, 20, 0.02),
        lambda: assemble_multi_interval(0.0, 1.0, 4, 24, 0.05),
        lambda: assemble_multi_interval(-1.0, 2.0, 3, 16, 0.1, OverlapSpec(taylor_terms=3)),
        lambda: assemble_multi_interval(0.0, 1.0, 2, 8, 0.1, OverlapSpec(taylor_terms=2)),
        lambda: assemble_multi_interval(0.0, 10.0, 5, 30, 0.5, OverlapSpec(weight_a=0.3)),
        lambda: assemble_multi_interval(0.0, 1.0, 8, 12, 0.01, OverlapSpec(taylor_terms=4)),
    ],
}

CASES = [(m, i) for m, fs in FIXTURES.items() for i in range(len(fs))]


@pytest.fixture(params=CASES, ids=[f"{m}-{i}" for m, i in CASES])
def operator(request):
    method, i = request.param
    op = FIXTURES[method][i]()
    assert op.method == method
    return op


def test_operator_invariants(operator):
    op = operator
    m = op.size
    assert np.all(np.diff(op.nodes) > 0)
    assert np.max(np.abs(op.d1 @ np.ones(m))) <= 1e-9 * m
    assert np.max(np.abs(op.d1 @ op.nodes - 1.0)) <= 1e-8 * m
    assert len(op.row_provenance) == m
    assert set(op.row_provenance) <= {"domainA", "domainB", "blended"} | {f"domain{k}" for k in range(10)}
    assert "blended" in op.row_provenance


def test_cached_orders_are_powers(operator):
    op = operator
    d3 = derivative_of_order(op, 3)
    np.testing.assert_array_equal(d3, op.d1 @ op.d1 @ op.d1)
    assert derivative_of_order(op, 1) is op.d1
    assert derivative_of_order(op, 3) is d3


def test_second_derivative_of_square(operator):
    op = operator
    y = op.nodes
    scale = max(1.0, np.max(np.abs(y)))
    assert np.max(np.abs(op.derivative(2) @ y**2 - 2.0)) <= 1e-7 * scale**2


def test_one_point_4x4_structure():
    op = assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 4))
    assert op.d1.shape == (7, 7)
    nz = op.structure
    assert not nz[:3, 4:].any() and nz[:3, :4].all()
    assert not nz[4:, :3].any() and nz[4:, 3:].all()
    assert nz[3].all()
    assert op.row_provenance == ("domainA",) * 3 + ("blended",) + ("domainB",) * 3


def test_one_point_interface_row_is_average():
    a, b = G.one_point_pair(0.0, 1.0, 2.0, 6, 9)
    op = assemble_one_point(a, b, OverlapSpec(weight_a=0.3))
    row = np.zeros(op.size)
    row[:6] += 0.3 * a.phys_diff[1][-1]
    row[5:] += 0.7 * b.phys_diff[1][0]
    np.testing.assert_allclose(op.d1[5], row, atol=1e-15)


def test_one_point_tanh_derivative():
    op = assemble_subdomains("one_point", G.tanh_pair(10.0, 150))
    y = op.nodes
    f = np.tanh((y - 1.0) / 0.04)
    df = 1.0 / (0.04 * np.cosh((y - 1.0) / 0.04) ** 2)
    assert np.max(np.abs(op.d1 @ f - df)) <= 1e-6


def test_two_point_matches_worked_example():
    # 4+4 nodes: rows for the shared nodes blend a-rows and b-rows column by column
    a, b = G.two_point_pair(0.0, 2.0, 4, 4)
    op = assemble_two_point(a, b)
    A, B = a.phys_diff[1], b.phys_diff[1]
    assert op.d1.shape == (6, 6)
    expect = np.zeros((6, 6))
    expect[:2, :4] = A[:2]
    expect[2, :4] += A[2] / 2
    expect[2, 2:] += B[0] / 2
    expect[3, :4] += A[3] / 2
    expect[3, 2:] += B[1] / 2
    expect[4:, 2:] = B[2:]
    np.testing.assert_allclose(op.d1, expect, atol=1e-14)
    # shared column entries combine a and b entries, e.g. (a33 + b11) / 2
    assert op.d1[2, 2] == pytest.approx((A[2, 2] + B[0, 0]) / 2, abs=1e-14)


def test_two_point_square():
    op = assemble_subdomains("two_point", G.two_point_pair(0.0, 2.0, 32, 32))
    y = op.nodes
    assert y[0] == 0.0 and y[-1] == pytest.approx(2.0)
    np.testing.assert_allclose(op.d1 @ y**2, 2 * y, atol=1e-9)
    assert np.max(np.abs(op.d1 @ np.full(op.size, 2.5))) <= 1e-10


def test_pseudo_three_point_overlap():
    a, b = G.pseudo_multipoint_pair(15, 15, shift_index=2)
    op = assemble_pseudo_multipoint(a, b)
    assert op.size == 29
    # three nodes of A sit in the overlap; B's nodes interleave with them
    assert np.count_nonzero(a.phys_nodes >= b.left) == 3
    inside = np.flatnonzero((op.nodes >= b.left) & (op.nodes <= a.right))
    assert 11 <= inside.min() and inside.max() <= 20
    # a row owned by one subdomain has zeros in every foreign column
    foreign = np.setdiff1d(np.arange(op.size), op.columns[0])
    own_a = [g for g, t in enumerate(op.row_provenance) if t == "domainA"]
    assert not op.d1[np.ix_(own_a, foreign)].any()


def test_pseudo_appendix_geometry_64():
    op = assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(64, 64))
    y = op.nodes
    assert np.max(np.abs(op.d1 @ np.sin(y) - np.cos(y))) <= 1e-7


@pytest.mark.xfail(strict=True, reason="60+60 gives 1.05e-7; the rational subdomain alone is 1.6e-7")
def test_pseudo_appendix_geometry_60():
    op = assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(60, 60))
    y = op.nodes
    assert np.max(np.abs(op.d1 @ np.sin(y) - np.cos(y))) <= 1e-7


def test_taylor_appendix_geometry():
    subs = G.appendix_taylor_pair(max_order=5)
    op = assemble_taylor_multipoint(*subs, OverlapSpec(taylor_terms=5))
    y = op.nodes
    assert np.max(np.abs(op.d1 @ np.sin(y) - np.cos(y))) <= 1e-8


def test_taylor_single_term_error_is_first_order():
    # with one term the donor row is D at the anchor, so for f = y^2 it predicts 2*y_L
    a, b = G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5)
    spec = OverlapSpec(taylor_terms=1)
    op = assemble_taylor_multipoint(a, b, spec)
    y = op.nodes
    err = op.d1 @ y**2 - 2 * y
    for g, tag in enumerate(op.row_provenance):
        if tag != "blended":
            assert abs(err[g]) <= 1e-10
            continue
        v = y[g]
        donor = b if np.any(np.isclose(a.phys_nodes, v, rtol=0, atol=1e-13)) else a
        y_l = donor.phys_nodes[np.searchsorted(donor.phys_nodes, v, side="right") - 1]
        if abs(v - y_l) < 1e-13:
            continue
        assert err[g] == pytest.approx(-0.5 * 2 * (v - y_l), rel=1e-7, abs=1e-11)


@pytest.mark.parametrize("terms", [1, 2, 3, 4, 5, 6])
def test_taylor_polynomial_consistency(terms):
    subs = G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=terms)
    op = assemble_taylor_multipoint(*subs, OverlapSpec(taylor_terms=terms))
    y = op.nodes
    rng = np.random.default_rng(terms)
    coef = rng.standard_normal(terms + 1)
    p = np.polynomial.Polynomial(coef)
    assert np.max(np.abs(op.d1 @ p(y) - p.deriv()(y))) <= 1e-9 * max(1.0, np.max(np.abs(p.deriv()(y))))


def _spectral_case(method, n_total):
    h = n_total // 2
    if method == "one_point":
        return assemble_subdomains(method, G.one_point_pair(0.0, 1.0, 2.0, h))
    if method == "two_point":
        return assemble_subdomains(method, G.two_point_pair(0.0, 2.0, h))
    terms = int(method[-1])
    subs = G.symmetric_overlap_pair(0.0, 1.0, 2.0, h, 5, max_order=terms)
    return assemble_subdomains("taylor_multi", subs, OverlapSpec(taylor_terms=terms))


@pytest.mark.parametrize("method", ["one_point", "two_point", "taylor4", "taylor6"])
def test_spectral_convergence(method):
    # arctan with a pole 0.1 from the real axis keeps errors above roundoff up to N=256
    errs = []
    for n in (32, 64, 128, 256):
        op = _spectral_case(method, n)
        y = op.nodes
        u = np.arctan((y - 0.7) / 0.1)
        du = 10.0 / (1.0 + ((y - 0.7) / 0.1) ** 2)
        errs.append(np.max(np.abs(op.d1 @ u - du)))
    for e0, e1 in zip(errs, errs[1:]):
        assert e1 <= e0 / 10


@pytest.mark.parametrize("method", ["one_point", "two_point", "taylor6"])
def test_spectral_convergence_sin(method):
    # sin reaches roundoff by N=64, so only the first doubling is informative
    errs = []
    for n in (32, 64):
        op = _spectral_case(method, n)
        y = op.nodes
        errs.append(np.max(np.abs(op.d1 @ np.sin(12 * y) - 12 * np.cos(12 * y))))
    assert errs[1] <= errs[0] / 10


def _blend_sources(op, g, spec):
    """Zero-extended own and donor rows that make up blended row g."""
    rows = {}
    for s, sub in enumerate(op.subdomains):
        hit = np.flatnonzero(op.columns[s] == g)
        if hit.size:
            rows[s] = sub.phys_diff[1][hit[0]]
        elif sub.left < op.nodes[g] < sub.right and op.method in ("taylor_multi", "multi_interval"):
            y = sub.phys_nodes
            anchor = np.searchsorted(y, op.nodes[g], side="right") - 1
            dy = op.nodes[g] - y[anchor]
            rows[s] = sum(dy**k / np.prod(np.arange(1, k + 1)) * sub.derivative(k + 1)[anchor]
                          for k in range(spec.taylor_terms))
    full = {}
    for s, r in rows.items():
        v = np.zeros(op.size)
        v[op.columns[s]] = r
        full[s] = v
    return full


@pytest.mark.parametrize("method,make", [
    ("one_point", lambda: G.one_point_pair(0.0, 1.0, 2.0, 9)),
    ("two_point", lambda: G.two_point_pair(0.0, 2.0, 12)),
    ("pseudo_multi", lambda: G.pseudo_multipoint_pair(15, 15, shift_index=4)),
    ("taylor_multi", lambda: G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=5)),
])
def test_weight_partition(method, make):
    spec = OverlapSpec(weight_a=0.35)
    op = assemble_subdomains(method, make(), spec)
    blended = [g for g, t in enumerate(op.row_provenance) if t == "blended"]
    assert blended
    for g in blended:
        src = _blend_sources(op, g, spec)
        assert sorted(src) == [0, 1]
        for r in src.values():
            assert abs(r.sum()) <= 1e-9 * np.max(np.abs(r))
        np.testing.assert_allclose(op.d1[g], 0.35 * src[0] + 0.65 * src[1], atol=1e-12)


@pytest.mark.parametrize("method,make", [
    ("one_point", lambda: G.one_point_pair(0.0, 1.0, 2.0, 9, 14)),
    ("two_point", lambda: G.two_point_pair(0.0, 2.0, 12)),
    ("pseudo_multi", lambda: G.pseudo_multipoint_pair(15, 15, shift_index=3)),
    ("taylor_multi", lambda: G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=5)),
])
def test_permutation_equivariance(method, make):
    a, b = make()
    op1 = assemble_subdomains(method, [a, b], OverlapSpec(weight_a=0.3))
    op2 = assemble_subdomains(method, [b, a], OverlapSpec(weight_a=0.7))
    np.testing.assert_array_equal(op1.nodes, op2.nodes)
    # 1 - 0.7 differs from 0.3 in the last bit, hence the relative bound
    assert np.max(np.abs(op1.d1 - op2.d1)) <= 1e-14 * np.max(np.abs(op1.d1))
    swap = {"domainA": "domainB", "domainB": "domainA", "blended": "blended"}
    assert op2.row_provenance == tuple(swap[t] for t in op1.row_provenance)


def test_multi_interval_exp():
    op = assemble_multi_interval(0.0, 1.0, 4, 24, 0.05)
    y = op.nodes
    assert np.max(np.abs(op.d1 @ np.exp(y) - np.exp(y))) <= 1e-8
    assert np.max(np.abs(op.d1 @ np.ones(op.size))) <= 1e-9


def test_multi_interval_layout():
    op = assemble_multi_interval(0.0, 1.0, 6, 20, 0.02)
    assert op.size == 120
    assert len(op.subdomains) == 6
    # diagonal blocks: a row only ever reaches its own and adjacent subintervals
    for g in range(op.size):
        hit = {s for s, cols in enumerate(op.columns) if op.d1[g, cols].any()}
        assert max(hit) - min(hit) <= 1


def test_multi_interval_matches_pairwise_chain():
    # every overlap band only involves two neighbours, so each band equals the
    # corresponding two-subdomain Taylor assembly
    spec = OverlapSpec(taylor_terms=4)
    subs = multi_interval_subdomains(0.0, 1.0, 3, 14, 0.05, 4)
    full = assemble_multi_interval(0.0, 1.0, 3, 14, 0.05, spec)
    pair = assemble_taylor_multipoint(subs[0], subs[1], spec)
    cut = int(np.searchsorted(full.nodes, subs[2].left))
    np.testing.assert_array_equal(full.nodes[:cut], pair.nodes[:cut])
    for s in (0, 1):
        np.testing.assert_allclose(full.d1[:cut][:, full.columns[s]], pair.d1[:cut][:, pair.columns[s]],
                                   rtol=0, atol=1e-13 * np.max(np.abs(pair.d1)))


def test_derivative_of_order_d4_overlap_width():
    errs = {}
    for pts in (2, 5):
        subs = G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, pts, max_order=5)
        op = assemble_taylor_multipoint(*subs, OverlapSpec(taylor_terms=5))
        y = op.nodes
        errs[pts] = np.max(np.abs(derivative_of_order(op, 4) @ np.sin(y) - np.sin(y)))
    assert errs[5] <= 1e-4
    assert errs[2] < errs[5]  # recorded: on this geometry the 2-point variant is not worse


def test_order_cache_threads():
    op = assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 20))
    out = []
    ts = [threading.Thread(target=lambda: out.append(op.derivative(5))) for _ in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert all(o is out[0] for o in out)
    ref = op.d1 @ op.d1 @ op.d1 @ op.d1 @ op.d1
    assert np.max(np.abs(out[0] - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_sparsity_examples():
    assert sparsity_pattern(np.zeros((4, 4))) == []
    assert sparsity_pattern(np.eye(3), threshold=0.5) == [(0, 0), (1, 1), (2, 2)]
    op = assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 4))
    pat = sparsity_pattern(op)
    assert pat == sorted(pat)
    assert len(sparsity_pattern(op, structural=True)) == 3 * 4 * 2 + 7


# ---- rejections ----

@pytest.mark.parametrize("method", ["taylor_multi", "pseudo_multi"])
def test_blended_boundary_row_rejected(method):
    a = make_subdomain(Mapping("linear", (0.0, 1.0)), 10, 5)
    b = make_subdomain(Mapping("linear", (0.0, 2.0)), 12, 5)
    with pytest.raises(ValueError, match="boundary"):
        assemble_subdomains(method, [a, b], OverlapSpec())


def test_one_point_mismatch_names_nodes():
    a = make_subdomain(Mapping.linear(0.0, 1.0), 5)
    b = make_subdomain(Mapping.linear(1.1, 2.0), 5)
    with pytest.raises(ValueError, match=r"1\.0.*1\.1"):
        assemble_one_point(a, b)


def test_two_point_needs_two_pairs():
    a, b = G.one_point_pair(0.0, 1.0, 2.0, 6)
    with pytest.raises(ValueError, match="two coincident"):
        assemble_two_point(a, b)


def test_two_point_rejects_non_contiguous():
    a = make_subdomain(Mapping.linear(0.0, 1.0), 5)
    b = make_subdomain(Mapping.linear(0.0, 1.0), 5)
    with pytest.raises(ValueError):
        assemble_two_point(a, b)


def test_pseudo_rejects_pair_counts():
    a = make_subdomain(Mapping.linear(0.0, 1.0), 9)
    b = make_subdomain(Mapping.linear(0.71, 2.0), 9)
    with pytest.raises(ValueError, match="exactly one"):
        assemble_pseudo_multipoint(a, b)
    a, b = G.two_point_pair(0.0, 2.0, 9)
    with pytest.raises(ValueError, match="exactly one"):
        assemble_pseudo_multipoint(a, b)
    a, b = G.one_point_pair(0.0, 1.0, 2.0, 6)
    with pytest.raises(ValueError, match="positive width"):
        assemble_pseudo_multipoint(a, b)


def test_taylor_rejects():
    a, b = G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=3)
    with pytest.raises(ValueError, match="taylor_terms"):
        assemble_taylor_multipoint(a, b, OverlapSpec(taylor_terms=4))
    a, b = G.one_point_pair(0.0, 1.0, 2.0, 6, max_order=5)
    with pytest.raises(ValueError, match="overlap"):
        assemble_taylor_multipoint(a, b)


@pytest.mark.parametrize("args", [(0.0, 1.0, 4, 10, 0.25), (0.0, 1.0, 4, 10, 0.15),
                                  (0.0, 1.0, 1, 10, 0.01), (0.0, 1.0, 3, 3, 0.01),
                                  (0.0, 1.0, 3, 10, 0.0)])
def test_multi_interval_rejects(args):
    with pytest.raises(ValueError):
        assemble_multi_interval(*args)


@pytest.mark.parametrize("kw", [{"weight_a": 0.0}, {"weight_a": 1.0}, {"taylor_terms": 0},
                                {"coincidence_tol": -1.0}])
def test_spec_rejects(kw):
    with pytest.raises(ValueError):
        OverlapSpec(**kw)


def test_spec_weights_sum():
    s = OverlapSpec(weight_a=0.2)
    assert s.weight_a + s.weight_b == 1.0


def test_single_subdomain_is_global():
    (s,) = G.global_domain(0.0, 1.0, 9)
    op = assemble_subdomains("one_point", [s])
    assert op.method == "global"
    assert isinstance(op, GlobalOperator)
    np.testing.assert_array_equal(op.d1, s.phys_diff[1])


def test_taylor_piecewise_constant_null_space():
    # every row reads one subdomain's values per source, so constants on each
    # subdomain separately are annihilated unless a shared node ties them
    op = assemble_multi_interval(0.0, 1.0, 4, 24, 0.05)
    v = np.zeros(op.size)
    for s, cols in enumerate(op.columns):
        v[cols] = float(s + 1) ** 2
    assert np.max(np.abs(op.d1 @ v)) <= 1e-9 * op.size
    s = np.linalg.svd(op.d1, compute_uv=False)
    assert np.count_nonzero(s <= 1e-13 * s[0]) == 4
    # an odd symmetric overlap shares its middle node: constants only
    subs = G.symmetric_overlap_pair(0.0, 1.0, 2.0, 20, 5, max_order=5)
    op = assemble_taylor_multipoint(*subs)
    s = np.linalg.svd(op.d1, compute_uv=False)
    assert np.count_nonzero(s <= 1e-13 * s[0]) == 1
