import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from nullwave.algebra import (
    NULL_FORM_KINDS,
    AlinhacData,
    GCoefficients,
    QuadraticNonlinearity,
    build_B,
    build_extended_system,
    check_null_condition,
    decompose_null_forms,
    eval_F,
    eval_F_red,
    eval_null_form,
    get_preset,
    nonlinearity_from_dict,
    nonlinearity_to_dict,
    verify_alinhac,
)

# ---------------------------------------------------------------------------
# symbolic oracle: F_red reduced modulo the sphere ideal by sympy division

W1, W2, W3 = sp.symbols("w1 w2 w3")
SPHERE = W1**2 + W2**2 + W3**2 - 1


def sympy_reduced_null(F: QuadraticNonlinearity) -> bool:
    N = F.n_total
    X = sp.symbols(f"X0:{N}")
    Y = sp.symbols(f"Y0:{N}")
    om = [sp.Integer(-1), W1, W2, W3]
    du = [[om[a] * Y[k] for a in range(4)] for k in range(N)]
    for j in range(N):
        expr = sp.Integer(0)
        for k, l in zip(*np.nonzero(F.uu[j])):
            expr += sp.nsimplify(F.uu[j, k, l]) * X[k] * X[l]
        for k, l, a in zip(*np.nonzero(F.udu[j])):
            expr += sp.nsimplify(F.udu[j, k, l, a]) * X[k] * du[l][a]
        for k, b, l, c in zip(*np.nonzero(F.dudu[j])):
            expr += sp.nsimplify(F.dudu[j, k, b, l, c]) * du[k][b] * du[l][c]
        expr = sp.expand(expr)
        if expr == 0:
            continue
        # a single generator is its own Groebner basis, so the remainder is canonical
        gens = (W3, W2, W1) + X + Y
        _, rem = sp.reduced(expr, [SPHERE], *gens, order="lex")
        if sp.expand(rem) != 0:
            return False
    return True


def single_form(kind, N=2, k=0, l=1):
    F = QuadraticNonlinearity.zeros(N)
    if kind == "Q0":
        F.add_Q0(0, k, l)
    else:
        F.add_Qab(0, kind[0], kind[1], k, l)
    return F


def random_null_combination(rng, N=3, terms=6):
    F = QuadraticNonlinearity.zeros(N)
    for _ in range(terms):
        j = int(rng.integers(N))
        k, l = (int(x) for x in rng.integers(N, size=2))
        kind = NULL_FORM_KINDS[int(rng.integers(len(NULL_FORM_KINDS)))]
        coef = float(rng.integers(-3, 4))
        if kind == "Q0":
            F.add_Q0(j, k, l, coef)
        else:
            F.add_Qab(j, kind[0], kind[1], k, l, coef)
    return F


def random_full(rng, N=2):
    F = QuadraticNonlinearity.zeros(N)
    F.uu[:] = rng.normal(size=F.uu.shape)
    F.udu[:] = rng.normal(size=F.udu.shape)
    F.dudu[:] = rng.normal(size=F.dudu.shape)
    return F


# ---------------------------------------------------------------------------
# eval_F


def test_eval_F_zero_input():
    F = get_preset("simplestEx").F
    assert np.all(eval_F(F, np.zeros(2), np.zeros((2, 4))) == 0)


def test_eval_F_simplest_example():
    F = get_preset("simplestEx").F
    du = np.zeros((2, 4))
    du[0, 1], du[1, 1], du[0, 2] = 1.0, 2.0, 3.0
    np.testing.assert_array_equal(eval_F(F, np.zeros(2), du), [-1.0, -3.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5))
def test_eval_F_homogeneous(seed, s):
    rng = np.random.default_rng(seed)
    F = random_full(rng, 3)
    u, du = rng.normal(size=3), rng.normal(size=(3, 4))
    np.testing.assert_allclose(eval_F(F, s * u, s * du), s * s * eval_F(F, u, du), rtol=1e-12, atol=1e-12)


def test_eval_F_matches_explicit_sum(rng):
    F = random_full(rng, 2)
    u, du = rng.normal(size=2), rng.normal(size=(2, 4))
    expect = np.zeros(2)
    for j in range(2):
        for k, l in itertools.product(range(2), repeat=2):
            expect[j] += F.uu[j, k, l] * u[k] * u[l]
            for a in range(4):
                expect[j] += F.udu[j, k, l, a] * u[k] * du[l, a]
                for b in range(4):
                    expect[j] += F.dudu[j, k, a, l, b] * du[k, a] * du[l, b]
    np.testing.assert_allclose(eval_F(F, u, du), expect, rtol=1e-12)


def test_eval_F_dimension_mismatch():
    F = get_preset("simplestEx").F
    with pytest.raises(ValueError):
        eval_F(F, np.zeros(3), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        eval_F(F, np.zeros(2), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# eval_F_red


def test_eval_F_red_simplest_example():
    F = get_preset("simplestEx").F
    np.testing.assert_array_equal(eval_F_red(F, [1.0, 0, 0], np.zeros(2), [1.0, 1.0]), [1.0, 0.0])


def test_eval_F_red_dtu_squared(rng):
    F = get_preset("dtu_squared").F
    for _ in range(5):
        om = rng.normal(size=3)
        om /= np.linalg.norm(om)
        y = rng.normal()
        assert eval_F_red(F, om, [0.0], [y])[0] == pytest.approx(y * y, rel=1e-14)


def test_eval_F_red_null_forms_vanish(rng):
    for _ in range(20):
        F = random_null_combination(rng)
        om = rng.normal(size=3)
        om /= np.linalg.norm(om)
        val = eval_F_red(F, om, rng.normal(size=3), rng.normal(size=3))
        assert np.max(np.abs(val)) < 1e-12


def test_eval_F_red_is_substitution(rng):
    F = random_full(rng, 2)
    om = rng.normal(size=3)
    om /= np.linalg.norm(om)
    X, Y = rng.normal(size=2), rng.normal(size=2)
    du = np.outer(Y, np.concatenate([[-1.0], om]))
    assert np.array_equal(eval_F_red(F, om, X, Y), eval_F(F, X, du))


def test_eval_F_red_rejects_non_unit():
    with pytest.raises(ValueError):
        eval_F_red(get_preset("simplestEx").F, [1.0, 1.0, 0.0], np.zeros(2), np.ones(2))


# ---------------------------------------------------------------------------
# null condition


@pytest.mark.parametrize("kind", NULL_FORM_KINDS)
def test_single_null_forms_hold(kind):
    for k, l in [(0, 1), (0, 0), (1, 0)]:
        F = single_form(kind, 2, k, l)
        assert check_null_condition(F).holds
        assert sympy_reduced_null(F)


def test_q0_example_holds():
    assert check_null_condition(single_form("Q0")).holds


def test_random_null_combinations_hold(rng):
    for _ in range(10):
        F = random_null_combination(rng)
        assert check_null_condition(F).holds
        assert sympy_reduced_null(F)


@pytest.mark.parametrize("name", ["simplestEx", "LogEx", "RotEx", "dtu_squared"])
def test_presets_fail_with_valid_witness(name):
    F = get_preset(name).F
    res = check_null_condition(F)
    assert not res.holds
    assert not sympy_reduced_null(F)
    w = res.witness
    assert abs(np.linalg.norm(w["omega"]) - 1.0) < 1e-12
    val = eval_F_red(F, w["omega"], w["X"], w["Y"])
    assert np.max(np.abs(val)) > 0
    np.testing.assert_array_equal(val, w["F_red"])


def test_simplest_witness_direction():
    w = check_null_condition(get_preset("simplestEx").F).witness
    # the witness maximizes |F_red| among simple samples; the hand example is one such sample
    assert np.linalg.norm(w["F_red"]) >= np.linalg.norm(
        eval_F_red(get_preset("simplestEx").F, [1.0, 0, 0], np.zeros(2), [1.0, 1.0]))


def test_null_decision_agrees_with_groebner_on_mixtures(rng):
    # a null combination plus a small non-null perturbation in a random slot
    for trial in range(12):
        F = random_null_combination(rng, N=2, terms=4)
        if trial % 2:
            j, k, l = (int(x) for x in rng.integers(2, size=3))
            a, b = (int(x) for x in rng.integers(4, size=2))
            F.dudu[j, k, a, l, b] += 1.0
        assert check_null_condition(F).holds == sympy_reduced_null(F)


def test_undifferentiated_terms_break_null():
    F = QuadraticNonlinearity.zeros(1)
    F.uu[0, 0, 0] = 1.0
    assert not check_null_condition(F).holds
    F = QuadraticNonlinearity.zeros(2)
    F.udu[0, 0, 1, 2] = 1.0
    assert not check_null_condition(F).holds


# ---------------------------------------------------------------------------
# null forms


def test_null_form_examples():
    assert eval_null_form("Q0", [1, 1, 0, 0], [1, 1, 0, 0]) == 0
    assert eval_null_form((1, 2), [0, 1, 0, 0], [0, 0, 1, 0]) == 1
    assert eval_null_form("Q0", [2, 0, 0, 0], [3, 0, 0, 0]) == 6


def test_null_form_kernel_on_null_gradients(rng):
    for kind in NULL_FORM_KINDS:
        for _ in range(5):
            om = rng.normal(size=3)
            om /= np.linalg.norm(om)
            n = np.concatenate([[-1.0], om])
            assert abs(eval_null_form(kind, rng.normal() * n, rng.normal() * n)) < 1e-14


def test_null_form_bad_indices():
    with pytest.raises(ValueError):
        eval_null_form((2, 1), np.ones(4), np.ones(4))
    with pytest.raises(ValueError):
        eval_null_form((0, 4), np.ones(4), np.ones(4))


def test_decompose_identity_examples():
    dec = decompose_null_forms(single_form("Q0", 1, 0, 0))
    assert dec.r0[0, 0, 0] == pytest.approx(1.0)
    assert np.count_nonzero(dec.r0) == 1 and np.count_nonzero(dec.rab) == 0
    dec = decompose_null_forms(single_form((1, 2), 2, 0, 1))
    assert dec.rab[0, 1, 2, 0, 1] == pytest.approx(1.0)
    assert np.count_nonzero(dec.rab) == 1 and np.count_nonzero(dec.r0) == 0


def test_decompose_absent_for_non_null():
    assert decompose_null_forms(get_preset("simplestEx").F) is None


def test_decompose_round_trip(rng):
    for _ in range(10):
        F = random_null_combination(rng)
        G = decompose_null_forms(F).to_nonlinearity()
        for _ in range(5):
            u, du = rng.normal(size=3), rng.normal(size=(3, 4))
            np.testing.assert_allclose(eval_F(G, u, du), eval_F(F, u, du), atol=1e-10)


# ---------------------------------------------------------------------------
# Alinhac factorization


def test_alinhac_simplest_residuals_vanish():
    p = get_preset("simplestEx")
    rep = verify_alinhac(p.F, p.alinhac, samples=10000)
    assert rep.n_samples == 10000
    assert max(rep.residual_factor, rep.residual_split, rep.residual_kernel) < 1e-12
    assert rep.passed()


def test_alinhac_null_trivial_data():
    F = get_preset("null_demo").F
    zero = lambda n: (lambda om: np.zeros(np.shape(om)[:-1] + n))
    unit = lambda om: np.broadcast_to(np.array([1.0, 0.0, 0.0]), np.shape(om)[:-1] + (3,))
    data = AlinhacData(1, zero((3, 3)), unit, zero((3, 1, 3)), np.zeros((1, 3, 4)))
    rep = verify_alinhac(F, data, samples=512)
    assert max(rep.residual_factor, rep.residual_split, rep.residual_kernel) < 1e-14


def test_alinhac_perturbed_h_detected():
    p = get_preset("simplestEx")
    h = p.alinhac.h.copy()
    h[0, 0, 1] += 0.1  # h1 gains 0.1 w1 Y1
    data = AlinhacData(1, p.alinhac.m, p.alinhac.beta, p.alinhac.g, h)
    rep = verify_alinhac(p.F, data, samples=1024)
    assert rep.residual_split > 1e-3
    assert not rep.passed()
    # direct evaluation at w=(1,0,0), Y=(1,1): F1_red = 1, g11 h1 = 1 * 1.1
    om = np.array([1.0, 0.0, 0.0])
    Y = np.array([1.0, 1.0])
    gvals = np.einsum("jlk,k->jl", data.g(om), Y)
    hvals = data.h_matrix(om) @ Y
    gh = gvals @ hvals
    assert abs(eval_F_red(p.F, om, np.zeros(2), Y)[0] - gh[0]) == pytest.approx(0.1)


def test_alinhac_rejects_undifferentiated():
    F = get_preset("simplestExR").F
    with pytest.raises(ValueError):
        verify_alinhac(F, get_preset("simplestEx").alinhac)


# ---------------------------------------------------------------------------
# extended system

T, X1, X2, X3 = sp.symbols("t x1 x2 x3")
COORDS = (T, X1, X2, X3)


def _box(f):
    return sp.diff(f, T, 2) - sum(sp.diff(f, x, 2) for x in COORDS[1:])


def _grad(f):
    return [sp.diff(f, x) for x in COORDS]


def _apply_dudu(Q, row, comps):
    grads = [_grad(c) for c in comps]
    expr = sp.Integer(0)
    for k, b, l, c in zip(*np.nonzero(Q[row])):
        expr += sp.nsimplify(Q[row, k, b, l, c]) * grads[k][b] * grads[l][c]
    return expr


def _extended_components(u, h):
    N = len(u)
    comps = list(u)
    for a in range(4):
        comps += [sp.diff(uk, COORDS[a]) for uk in u]
    for l in range(h.shape[0]):
        comps.append(sum(sp.nsimplify(h[l, k, a]) * sp.diff(u[k], COORDS[a])
                         for k in range(N) for a in range(4) if h[l, k, a]))
    return comps


def test_extended_size_and_q12_structure():
    p = get_preset("simplestEx")
    ext = build_extended_system(p.F, p.alinhac)
    assert ext.F.n_total == 11 and ext.F.n_v == 10 and ext.n0 == 1
    u1, u2 = (sp.Function(n)(*COORDS) for n in ("u1", "u2"))
    comps = _extended_components([u1, u2], p.alinhac.h)
    w = comps[ext.w_index(0)]
    assert sp.expand(w - (sp.diff(u2, X1) - sp.diff(u1, X2))) == 0
    lhs = _apply_dudu(ext.F.dudu, ext.w_index(0), comps)
    q12 = sp.diff(w, X1) * sp.diff(u1, X2) - sp.diff(w, X2) * sp.diff(u1, X1)
    assert sp.expand(lhs - q12) == 0
    # the same w-row as the block-form preset after identifying w
    R = get_preset("simplestExR").F
    ref = _apply_dudu(R.dudu, 2, [u1, u2, w])
    assert sp.expand(lhs - ref) == 0


def test_extended_zero_nonlinearity():
    F = QuadraticNonlinearity.zeros(2)
    data = AlinhacData(1, None, None, lambda om: np.zeros(np.shape(om)[:-1] + (2, 1, 2)), np.zeros((1, 2, 4)))
    ext = build_extended_system(F, data)
    assert ext.F.n_total == 11
    assert not np.any(ext.F.dudu) and not np.any(ext.F.udu) and not np.any(ext.F.uu)


def test_extended_rejects_bad_input():
    p = get_preset("simplestEx")
    with pytest.raises(ValueError):
        build_extended_system(get_preset("simplestExR").F, p.alinhac)
    bad = AlinhacData(1, p.alinhac.m, p.alinhac.beta, p.alinhac.g, np.zeros((1, 3, 4)))
    with pytest.raises(ValueError):
        build_extended_system(p.F, bad)


def _cubic(rng):
    monos = [m for m in itertools.product(range(4), repeat=4) if sum(m) <= 3]
    return sum(int(rng.integers(-3, 4)) * T**m[0] * X1**m[1] * X2**m[2] * X3**m[3] for m in monos)


def test_extended_manufactured_identity_symbolic(rng):
    p = get_preset("simplestEx")
    ext = build_extended_system(p.F, p.alinhac)
    u = [_cubic(rng), _cubic(rng)]
    r = [sp.expand(_box(u[j]) - _apply_dudu(p.F.dudu, j, u)) for j in range(2)]
    comps = _extended_components(u, p.alinhac.h)
    expect = list(r)
    for a in range(4):
        expect += [sp.diff(rj, COORDS[a]) for rj in r]
    expect.append(sum(sp.nsimplify(p.alinhac.h[0, k, a]) * sp.diff(r[k], COORDS[a])
                      for k in range(2) for a in range(4) if p.alinhac.h[0, k, a]))
    for i, ci in enumerate(comps):
        resid = sp.expand(_box(ci) - _apply_dudu(ext.F.dudu, i, comps) - expect[i])
        assert resid == 0, i


def test_extended_manufactured_identity_numeric(rng):
    """Extended residual equals derivatives of the base residual (5-point differences)."""
    p = get_preset("simplestEx")
    ext = build_extended_system(p.F, p.alinhac)
    u = [_cubic(rng), _cubic(rng)]
    comps = _extended_components(u, p.alinhac.h)
    base = [sp.lambdify(COORDS, _box(u[j]) - _apply_dudu(p.F.dudu, j, u)) for j in range(2)]
    ext_res = [sp.lambdify(COORDS, _box(c) - _apply_dudu(ext.F.dudu, i, comps)) for i, c in enumerate(comps)]
    hstep = 1e-2

    def d(f, x, a):
        e = np.eye(4)[a] * hstep
        return (-f(*(x + 2 * e)) + 8 * f(*(x + e)) - 8 * f(*(x - e)) + f(*(x - 2 * e))) / (12 * hstep)

    for _ in range(5):
        x = rng.uniform(-1, 1, size=4)
        rb = [base[j](*x) for j in range(2)]
        expect = rb + [d(base[j], x, a) for a in range(4) for j in range(2)]
        expect.append(sum(p.alinhac.h[0, k, a] * d(base[k], x, a) for k in range(2) for a in range(4)))
        got = np.array([f(*x) for f in ext_res], dtype=float)
        expect = np.array(expect, dtype=float)
        assert np.max(np.abs(got - expect)) <= 1e-6 * max(1.0, np.max(np.abs(expect)))


# ---------------------------------------------------------------------------
# coupling matrix B


def _unit(rng):
    om = rng.normal(size=3)
    return om / np.linalg.norm(om)


def test_build_B_simplest(rng):
    g = get_preset("simplestEx").g
    for _ in range(5):
        om, z, e = _unit(rng), rng.normal(), rng.normal()
        expect = -0.5 * z * np.array([[om[0], 0.0], [om[1], 0.0]])
        np.testing.assert_allclose(build_B(g, om, [z], [e]), expect, atol=1e-15)


def test_build_B_rotation(rng):
    g = get_preset("RotEx").g
    for _ in range(5):
        om, z, e = _unit(rng), rng.normal(), rng.normal()
        np.testing.assert_allclose(build_B(g, om, [z], [e]), e * np.array([[0.0, 1.0], [-1.0, 0.0]]), atol=1e-15)


def test_build_B_unipotent(rng):
    g = get_preset("LogEx").g
    om, e = _unit(rng), rng.normal()
    np.testing.assert_allclose(build_B(g, om, [0.3], [e]), [[0.0, e], [0.0, 0.0]], atol=1e-15)


def test_build_B_linear(rng):
    g = get_preset("null_demo").g
    n_w = g.n_w
    for name in ["simplestEx", "LogEx", "RotEx", "null_demo"]:
        g = get_preset(name).g
        n_w = g.n_w
        om = _unit(rng)
        xi, eta, xi2, eta2 = (rng.normal(size=n_w) for _ in range(4))
        al = rng.normal()
        lhs = build_B(g, om, al * xi + xi2, al * eta + eta2)
        rhs = al * build_B(g, om, xi, eta) + build_B(g, om, xi2, eta2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)
        assert not np.any(build_B(g, om, np.zeros(n_w), np.zeros(n_w)))


def test_build_B_null_demo_vanishes(rng):
    g = get_preset("null_demo").g
    for _ in range(5):
        assert np.max(np.abs(build_B(g, _unit(rng), rng.normal(size=1), rng.normal(size=1)))) < 1e-14


def test_build_B_rejects_non_unit():
    with pytest.raises(ValueError):
        build_B(get_preset("RotEx").g, [0.0, 0.0, 2.0], [1.0], [1.0])


def test_generic_coefficients_match_hand_formula(rng):
    c = rng.normal(size=(2, 2, 4, 1))
    d = rng.normal(size=(2, 2, 4, 1, 4))
    g = GCoefficients.constant(c, d)
    om = _unit(rng)
    w = np.concatenate([[-1.0], om])
    xi, eta = rng.normal(size=1), rng.normal(size=1)
    expect = np.zeros((2, 2))
    for j, k, a in itertools.product(range(2), range(2), range(4)):
        s = c[j, k, a, 0] * xi[0] + sum(d[j, k, a, 0, b] * w[b] * eta[0] for b in range(4))
        expect[j, k] += -0.5 * w[a] * s
    np.testing.assert_allclose(build_B(g, om, xi, eta), expect, atol=1e-13)


# ---------------------------------------------------------------------------
# serialization


def test_nonlinearity_dict_round_trip(rng):
    F = random_full(rng, 2)
    G, _ = nonlinearity_from_dict(nonlinearity_to_dict(F))
    for name in ("uu", "udu", "dudu"):
        np.testing.assert_array_equal(getattr(F, name), getattr(G, name))


def test_nonlinearity_dict_rejects_bad_index():
    with pytest.raises(ValueError):
        nonlinearity_from_dict({"n_total": 1, "dudu": [{"j": 1, "k": 2, "b": 0, "l": 1, "c": 0, "value": 1}]})
