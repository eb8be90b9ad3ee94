"""Release acceptance: one test per criterion, each printing its verdict line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; the same checks back the ``adhesim verify <suite>`` command.
"""

import pytest

from adhesim.verify import CRITERIA, run_criterion


def _check(cid):
    result = run_criterion(cid)
    mark = "PASS" if result.passed else "FAIL"
    print(f"[{mark}] criterion {result.cid:2d} ({result.name}): {result.detail}")
    assert result.passed, f"criterion {cid} failed: {result.detail}"


def test_criterion_01_proximal_randomized_identities():
    _check(1)


def test_criterion_02_mollifier():
    _check(2)


def test_criterion_03_assembly_oracle_equivalence():
    _check(3)


def test_criterion_04_damage_gradient_check():
    _check(4)


def test_criterion_05_manufactured_equilibrium():
    _check(5)


def test_criterion_06_discrete_energy_law():
    _check(6)


def test_criterion_07_scalar_identities():
    _check(7)


def test_criterion_08_longtime_equilibrium():
    _check(8)


def test_criterion_09_complete_damage_limit():
    _check(9)


def test_criterion_10_two_stage_limit_stability():
    _check(10)


def test_criterion_11_splitting_order():
    _check(11)


def test_criterion_12_stationary_oracle():
    _check(12)


def test_every_criterion_is_covered():
    assert sorted(CRITERIA) == list(range(1, 13))
