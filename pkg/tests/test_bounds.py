import numpy as np
import pytest

from lazynet.bounds import (binomial_slack, check_fvalue, check_grad_lower,
                            check_sign_flip_count, check_sign_flip_prob,
                            fvalue_bound, grad_diff_bound, grad_diff_probe,
                            grad_lower_bound, robust_error_estimate,
                            run_lemma_monte_carlo, scaling_fit,
                            sign_flip_prob_bound, sign_flip_sets)
from lazynet.network import NetworkParams, forward_batch, init_network
from lazynet.numerics import make_rng


def unit_x(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


# ---------------------------------------------------------- closed forms --

def test_fvalue_bound_frozen_value():
    # sqrt(2*log(100)) + 2*log(100)/100 + 10, worked out independently
    got = fvalue_bound(0.02, 10**4, 10.0)
    np.testing.assert_allclose(got, 13.126957662490055, rtol=1e-12)
    assert fvalue_bound(0.3, 10**4, 10.0) < fvalue_bound(0.1, 10**4, 10.0)
    with pytest.raises(ValueError):
        fvalue_bound(0.0, 100, 1.0)


def test_grad_lower_bound_frozen_values():
    got = grad_lower_bound(0.1, 10**4, 10**8, 10.0)
    np.testing.assert_allclose(got, 53.2117380529387, rtol=1e-12)
    assert got > 0.25 * np.sqrt(10**4)           # a quarter of sqrt(d)
    # small c0 keeps the bound informative at desk sizes
    np.testing.assert_allclose(grad_lower_bound(0.1, 200, 10**4, 0.5),
                               1.7004171527852177, rtol=1e-12)
    np.testing.assert_allclose(grad_lower_bound(0.3, 400, 4 * 10**4, 0.5),
                               7.447941197164498, rtol=1e-12)
    # a big c0 swamps it at the same sizes
    assert grad_lower_bound(0.1, 200, 10**4, 10.0) < 0.0


def test_check_fvalue_and_c0_resolution():
    rng = make_rng(0)
    p = init_network(rng, 50, 400, c0=10.0)
    rep = check_fvalue(p, unit_x(rng, 50), 0.1)
    assert rep.satisfied and rep.name == "fvalue"
    assert rep.measured < rep.theoretical
    p_bare = init_network(make_rng(1), 50, 400)   # no c0 recorded
    with pytest.raises(ValueError):
        check_fvalue(p_bare, unit_x(rng, 50), 0.1)
    rep2 = check_fvalue(p_bare, unit_x(rng, 50), 0.1, c0=2.0)
    assert rep2.context["c0"] == 2.0


def test_check_grad_lower_vacuous_flag():
    rng = make_rng(2)
    p = init_network(rng, 200, 2000, c0=10.0)
    rep = check_grad_lower(p, unit_x(rng, 200), 0.1)
    assert rep.vacuous and rep.satisfied and rep.theoretical <= 0.0
    informative = check_grad_lower(p, unit_x(rng, 200), 0.1, c0=0.0)
    assert not informative.vacuous
    assert informative.satisfied


# ------------------------------------------------------------- flip sets --

def flip_net(zvals):
    # d=2 and x=e1 make w0[0, s] the preactivation of unit s
    m = len(zvals)
    w0 = np.zeros((2, m), order="F")
    w0[0] = zvals
    w0.flags.writeable = False
    return NetworkParams(a=np.ones(m), w=w0.copy(order="F"), w0=w0)


def test_sign_flip_sets_hand_case():
    p = flip_net([0.05, -3.0])
    x = np.array([1.0, 0.0])
    sets = sign_flip_sets(p, x, 0.1, gamma=0.1)
    assert np.array_equal(sets.indices, [0])
    want = 0.1 * 2 + np.sqrt(2 * np.log(10.0) / 2.0)
    np.testing.assert_allclose(sets.count_bound, want, rtol=1e-12)
    assert len(sign_flip_sets(p, x, 0.0).indices) == 0       # empty at v=0


def test_sign_flip_sets_perturbed_variant():
    p = flip_net([0.05, 0.12, -0.11, -3.0])
    x = np.array([1.0, 0.0])
    sets = sign_flip_sets(p, x, 0.1, gamma=0.1, input_budget=0.3)
    assert np.array_equal(sets.indices, [0])
    # threshold grows to v*(1+R) = 0.13, catching the next two units
    assert np.array_equal(sets.indices_perturbed, [0, 1, 2])
    np.testing.assert_allclose(sets.count_bound_perturbed,
                               sets.count_bound * 1.3, rtol=1e-12)
    with pytest.raises(ValueError):
        sign_flip_sets(p, x, 0.1, input_budget=0.6)


def test_sign_flip_sets_match_brute_force():
    # extremal column moves of norm exactly v certify every member and the
    # interval endpoints rule out every non-member
    for seed in range(25):
        rng = make_rng(400 + seed)
        d = int(rng.integers(2, 8))
        m = int(rng.integers(3, 30))
        p = init_network(rng, d, m)
        x = unit_x(rng, d)
        v = float(rng.uniform(0.005, 0.5))
        got = sign_flip_sets(p, x, v).indices
        achievable = []
        for s in range(m):
            z = float(x @ p.w0[:, s])
            hit = False
            for t in (v, -v):
                z2 = float(x @ (p.w0[:, s] + t * x))
                if (z > 0.0) != (z2 > 0.0):
                    hit = True
            if hit:
                achievable.append(s)
        assert np.array_equal(got, achievable)


def test_check_sign_flip_count():
    rng = make_rng(3)
    p = init_network(rng, 30, 5000, c0=10.0)
    rep = check_sign_flip_count(p, unit_x(rng, 30), 10.0 / np.sqrt(5000), 0.1)
    assert rep.satisfied
    assert rep.measured <= rep.theoretical


def test_sign_flip_prob_bound_frozen_value():
    np.testing.assert_allclose(sign_flip_prob_bound(0.1, 100),
                               0.3134854258770293, rtol=1e-12)
    with pytest.raises(ValueError):
        sign_flip_prob_bound(-0.1, 100)


def test_check_sign_flip_prob():
    rng = make_rng(4)
    p = init_network(rng, 400, 2000)
    rep = check_sign_flip_prob(p, unit_x(rng, 400), 1.0 / 20.0, rng)
    assert rep.satisfied
    assert rep.measured < rep.theoretical


# ------------------------------------------------------- gradient change --

def test_grad_diff_bound_frozen_value():
    np.testing.assert_allclose(grad_diff_bound(100, 20000, 0.5),
                               904.24525419571, rtol=1e-12)
    assert grad_diff_bound(100, 20000, 0.5, c1=2.0) \
        > grad_diff_bound(100, 20000, 0.5, c1=1.0)


def test_grad_diff_probe_zero_cases():
    rng = make_rng(5)
    p = init_network(rng, 10, 30, c0=1.0)
    x = unit_x(rng, 10)
    rep = grad_diff_probe(p, x, 0.0, 50, make_rng(6))
    assert rep.measured <= 1e-12 and rep.satisfied   # gemm roundoff only
    # all units strongly active and a tiny budget: one linear region
    w0 = np.asfortranarray(np.outer(x, np.ones(8)) * 3.0)
    w0.flags.writeable = False
    flat = NetworkParams(a=np.ones(8), w=w0.copy(order="F"), w0=w0, c0=1.0)
    rep2 = grad_diff_probe(flat, x, 1e-3, 50, make_rng(7))
    assert rep2.measured <= 1e-12


def test_grad_diff_probe_moderate_scale():
    rng = make_rng(8)
    p = init_network(rng, 100, 20000, c0=0.5)
    x = unit_x(rng, 100)
    rep = grad_diff_probe(p, x, 0.1, 200, make_rng(9))
    assert rep.satisfied
    assert rep.context["precondition_ok"]
    # observed change is far below sqrt(d); the closed form is loose
    assert rep.context["ratio_sqrt_d"] <= 0.5
    assert rep.measured > 0.0


# ----------------------------------------------------------- error rates --

def test_robust_error_estimate_min_eta():
    rng = make_rng(10)
    p = init_network(rng, 30, 200)
    x = rng.standard_normal((60, 30))
    x /= np.linalg.norm(x, axis=1)[:, None]
    f = forward_batch(p, x)
    keep = np.abs(f) > 1e-6
    x, f = x[keep], f[keep]
    wrong = robust_error_estimate(p, x, -np.sign(f), budget=1e-9)
    assert wrong.measured == 1.0 and wrong.satisfied
    right = robust_error_estimate(p, x, np.sign(f), budget=1e-9)
    assert right.measured == 0.0 and not right.satisfied
    generous = robust_error_estimate(p, x, np.sign(f), budget=10.0)
    assert generous.measured >= 0.9


def test_robust_error_estimate_pgd():
    rng = make_rng(11)
    p = init_network(rng, 20, 100)
    x = rng.standard_normal((40, 20))
    x /= np.linalg.norm(x, axis=1)[:, None]
    f = forward_batch(p, x)
    rep = robust_error_estimate(p, x, -np.sign(f), budget=0.01, attack="pgd",
                                pgd_steps=5)
    assert rep.measured == 1.0
    with pytest.raises(ValueError):
        robust_error_estimate(p, x, np.sign(f), budget=0.1, attack="nope")


# --------------------------------------------------------------- fitting --

def test_scaling_fit_exact_power_law():
    dims = np.array([25.0, 49.0, 100.0, 196.0, 400.0])
    fit = scaling_fit(dims, 3.0 * dims ** -0.5)
    np.testing.assert_allclose(fit.slope, -0.5, atol=1e-12)
    np.testing.assert_allclose(fit.intercept, np.log(3.0), atol=1e-12)
    assert fit.r_squared == 1.0
    with pytest.raises(ValueError):
        scaling_fit(dims[:3], dims[:3])
    with pytest.raises(ValueError):
        scaling_fit(dims, -1.0 * dims)


def test_binomial_slack_frozen_value():
    np.testing.assert_allclose(binomial_slack(0.1, 300),
                               0.15196152422706632, rtol=1e-12)


# ------------------------------------------------------------ monte carlo --

def test_run_lemma_monte_carlo_structure():
    reps = run_lemma_monte_carlo(60, 400, [0.1, 0.3], 40)
    assert [r.name for r in reps] == ["fvalue", "sign_flip_count",
                                      "grad_lower"] * 2
    assert all(r.satisfied for r in reps)
    for r in reps:
        assert r.context["n_seeds"] == 40
        assert 0.0 <= r.measured <= 1.0
        assert r.theoretical == binomial_slack(r.gamma, 40)
    again = run_lemma_monte_carlo(60, 400, [0.1, 0.3], 40)
    assert [r.measured for r in reps] == [r.measured for r in again]


def test_run_lemma_monte_carlo_nonvacuous_gradient():
    reps = run_lemma_monte_carlo(200, 10**4, [0.1], 40, c0_grad=0.5)
    grad = next(r for r in reps if r.name == "grad_lower")
    assert not grad.vacuous
    assert grad.context["bound"] > 1.0
    assert grad.satisfied
