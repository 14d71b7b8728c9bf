"""Nonsingularity certificates and the numerical element probe."""

import numpy as np
import pytest

from ssnbilevel import (PenaltyParams, check_theorem_fullrank_yy,
                        check_theorem_invertibleA, index_sets,
                        probe_nonsingularity)

from conftest import (make_ex_box, make_ex_fractional, root_ex_box,
                      root_ex_fractional)


def test_index_sets_tie_membership():
    pr = make_ex_fractional()
    params = PenaltyParams(alpha=2.0)
    sets = index_sets(pr, root_ex_fractional(pr, 2.0), params)
    # the binding upper bound x <= 5/3 has lam = 0: X^1_1 = 0, a tie
    assert 1 in sets.P[0] and 1 in sets.Q[0]
    # strict entries land in exactly one set
    assert 0 in sets.Q[0] and 0 not in sets.P[0]
    assert 0 in sets.P[1] and 0 not in sets.Q[1]
    named = sets.named()
    assert set(named) == {f"{c}{i}" for c in "PQ" for i in range(1, 6)}


def test_invertibleA_holds_on_one_row_variant():
    """Dropping the inactive x <= 5/3 row removes the forced tie in
    family 1; every remaining hypothesis is satisfied at the root."""
    pr = make_ex_fractional(two_row=False)
    params = PenaltyParams(alpha=2.0)
    res = check_theorem_invertibleA(pr, root_ex_fractional(pr, 2.0), params)
    assert res.holds
    assert res.failed() == []


def test_invertibleA_fails_on_two_row_variant_via_P1():
    """With the binding x <= 5/3 bound carrying a zero multiplier the
    selection argument ties at zero, so P1 is nonempty and the
    sufficient condition cannot certify the point."""
    pr = make_ex_fractional()
    params = PenaltyParams(alpha=2.0)
    res = check_theorem_invertibleA(pr, root_ex_fractional(pr, 2.0), params)
    assert not res.holds
    assert "P1_empty" in res.failed()


def test_invertibleA_fails_on_rectangular_A():
    pr = make_ex_box()  # A is 2 x 1
    params = PenaltyParams(alpha=30.0)
    res = check_theorem_invertibleA(pr, root_ex_box(30.0), params)
    assert not res.holds
    assert "A_square" in res.failed()
    assert "A_invertible" in res.failed()


def test_fullrank_yy_fails_at_box_root():
    """The box-example root has a positive multiplier on the binding
    x <= 2 bound (family 1) and an active z component (family 3), so
    two hypothesis families fail even though the hessian is fine."""
    pr = make_ex_box()
    params = PenaltyParams(alpha=30.0)
    res = check_theorem_fullrank_yy(pr, root_ex_box(30.0), params)
    assert not res.holds
    failed = res.failed()
    assert "P1_empty" in failed
    assert "Q3_empty" in failed
    assert res.checks["hess_yy_full_rank"]


def test_fullrank_yy_flags_singular_hessian():
    from ssnbilevel import BilevelProblem, quadratic_objective
    from conftest import random_iterate

    obj = quadratic_objective(Qxx=[[-2.0]], Qxy=[[1.0]], Qyy=[[0.0]], n=1)
    pr = BilevelProblem(D=[[-1.0]], d=[0.0], A=[[-1.0]], b=[0.0],
                        objective=obj)
    params = PenaltyParams(alpha=1.0)
    u = random_iterate(pr, np.random.default_rng(0))
    res = check_theorem_fullrank_yy(pr, u, params)
    assert not res.holds
    assert "hess_yy_full_rank" in res.failed()


def test_probe_nonsingular_at_both_roots():
    params2 = PenaltyParams(alpha=2.0)
    pr1 = make_ex_fractional()
    probe1 = probe_nonsingularity(pr1, root_ex_fractional(pr1, 2.0), params2)
    assert probe1.nonsingular
    assert probe1.n_ties >= 1  # the binding-bound tie
    assert probe1.n_elements >= 3  # midpoint plus both extremes
    assert np.isfinite(probe1.worst_cond)

    params30 = PenaltyParams(alpha=30.0)
    probe2 = probe_nonsingularity(make_ex_box(), root_ex_box(30.0), params30)
    assert probe2.nonsingular


def test_probe_detects_singular_elements():
    """Forcing both simplex-side multipliers active makes the simplex
    rows of every element dependent; the probe must say so."""
    pr = make_ex_fractional()
    params = PenaltyParams(alpha=2.0)
    u = root_ex_fractional(pr, 2.0)
    u.lam4 = np.array([5.0])
    u.lam5 = np.array([5.0])
    probe = probe_nonsingularity(pr, u, params)
    assert not probe.nonsingular


def test_probe_samples_corners_when_ties_are_many():
    """A fully tied point (u = 0 with zero data offsets) has one tie per
    complementarity row; the probe caps the number of elements."""
    from ssnbilevel import BilevelProblem, quadratic_objective
    from ssnbilevel.problem import IterateU

    obj = quadratic_objective(Qxx=[[-2.0]], Qxy=[[1.0]], Qyy=[[-2.0]], n=1)
    pr = BilevelProblem(D=[[-1.0], [1.0]], d=[0.0, 0.0],
                        A=[[-1.0], [1.0]], b=[0.0, 0.0], objective=obj)
    u = IterateU.zeros(pr.n, pr.l, pr.m)
    probe = probe_nonsingularity(pr, u, PenaltyParams(alpha=1.0),
                                 max_elements=8)
    assert probe.n_ties == pr.m + 4 * pr.l  # every comp row except r+s=e
    assert probe.n_elements <= 8
