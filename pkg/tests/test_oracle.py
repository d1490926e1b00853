import json
import math

import numpy as np
import pytest

import boundedauction.oracle as oracle
from boundedauction.distributions import Uniform
from boundedauction.errors import CertificationError
from boundedauction.mechanism import PrioritySpec, SimultaneousMechanism, ThresholdVector, is_monotone
from boundedauction.oracle import (
    certificate_json,
    certify_2bidder_optimality,
    diagonal_randomizations,
    enumerate_monotone_2bidder,
    grid_optimum_k2,
    identical_lines,
    optimize_thresholds,
    priority_label,
)
from boundedauction.solver import Solution

U = Uniform()


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_enumeration_counts(k):
    fam = enumerate_monotone_2bidder(k)
    assert len(fam.enumeration) == math.comb(2 * k, k)
    keys = {a.tobytes() for a in fam.enumeration}
    assert len(keys) == len(fam.enumeration)
    for a in fam.enumeration:
        assert is_monotone(SimultaneousMechanism(a, np.zeros(a.shape[:-1] + (2,))))


def test_enumeration_limits():
    with pytest.raises(ValueError):
        enumerate_monotone_2bidder(5)
    assert len(enumerate_monotone_2bidder(2, kA=1).enumeration) == 3


def test_seller_variants_are_distinct():
    fam = enumerate_monotone_2bidder(2, allow_seller=True)
    keys = [a.tobytes() for a in fam.enumeration]
    assert len(keys) == len(set(keys))


def test_priority_labels():
    labels = [priority_label(a) for a in enumerate_monotone_2bidder(2).enumeration]
    assert labels.count("PG B>A") == 1 and labels.count("PG A>B") == 1
    assert labels.count(None) == 4


def test_randomized_variants_are_monotone():
    extra, labels = diagonal_randomizations(enumerate_monotone_2bidder(2))
    assert extra and all(l.endswith("+split") for l in labels)
    for a in extra:
        assert is_monotone(SimultaneousMechanism(a, np.zeros(a.shape[:-1] + (2,))))


def test_optimizer_agrees_with_grid():
    for a in enumerate_monotone_2bidder(2).enumeration:
        _, val = optimize_thresholds(a, [U, U], 0.0, "welfare", restarts=4)
        _, grid = grid_optimum_k2(a, [U, U], 0.0, "welfare", points=301)
        assert val >= grid - 1e-12
        assert val - grid < 1e-4


def test_identical_lines():
    a = enumerate_monotone_2bidder(2).enumeration[0]
    assert identical_lines(a)


def test_certificate_k2():
    cert = certify_2bidder_optimality(2, [U, U], 0.0, "welfare", restarts=4)
    assert cert["certified"] and cert["argmax_value"] == pytest.approx(35 / 54)
    doc = json.loads(certificate_json(cert))
    assert doc["argmax"] == cert["argmax"] and len(doc["entries"]) == len(cert["entries"])


def test_certification_failure_carries_certificate(monkeypatch):
    # a solver claiming the symmetric cut 1/2 is optimal must be caught
    half = ThresholdVector([0, 0.5, 1])
    wrong = Solution(PrioritySpec((0, 1), (half, half)), 0.625, "pg")
    monkeypatch.setattr(oracle, "solve_welfare_2bidder", lambda *a, **k: wrong)
    with pytest.raises(CertificationError) as err:
        certify_2bidder_optimality(2, [U, U], 0.0, "welfare", restarts=2, randomized=False)
    assert err.value.certificate["certified"] is False
