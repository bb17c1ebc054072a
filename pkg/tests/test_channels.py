from __future__ import annotations

import numpy as np
import pytest

from qlcic.channels import AdditiveIcChannel, make_channel, make_example1, make_example2, transmit
from qlcic.gf import FieldError, PrimeField
from qlcic.probspace import Pmf, convolve

F3 = PrimeField(3)


def test_example2_aggregates(ex2):
    N1, N2, N3 = ex2["N1"], ex2["N2"], ex2["N3"]
    ch = make_example2(3, N1, N2, N3)
    assert ch.coeffs.tolist() == [[1, 0, 0], [1, 1, 0], [2, 1, 1]]
    assert ch.noise[2] == N3
    assert ch.noise[1].allclose(convolve(N2, N3))
    assert ch.noise[0].allclose(convolve(N1, convolve(N2, N3)))
    with pytest.raises(FieldError):
        make_example2(2, *(Pmf.uniform(PrimeField(2)),) * 3)


def test_example1_structure():
    n1 = Pmf.from_literal(F3, [0.9, 0.1, 0.0])
    ch = make_example1(3, n1, Pmf.point_mass(F3))
    assert ch.coeffs.tolist() == [[1, 0, 0], [0, 1, 0], [1, 1, 1]]
    assert ch.noise[0] == ch.noise[1]
    assert ch.noise[2].probs.tolist() == [1.0, 0.0, 0.0]


def test_noiseless_transmission_is_exact():
    zero = Pmf.point_mass(F3)
    ch = make_example2(3, zero, zero, zero)
    assert ch.is_noiseless()
    x1, x2, x3 = [0, 1, 2, 2], [1, 1, 0, 2], [2, 0, 0, 1]
    use = transmit(ch, x1, x2, x3, seed=0)
    assert use.outputs[0].tolist() == x1
    assert use.outputs[1].tolist() == [1, 2, 2, 1]
    assert use.outputs[2].tolist() == [0, 0, 1, 1]


def test_transmit_is_seeded():
    ch = make_channel(3, np.eye(3, dtype=int), [Pmf.uniform(F3)] * 3)
    x = np.zeros(200, dtype=int)
    a, b, c = (transmit(ch, x, x, x, s) for s in (5, 5, 6))
    assert a == b
    assert not a == c
    # with zero inputs the outputs are the noise
    assert all(np.array_equal(a.outputs[j], a.noise[j]) for j in range(3))


def test_rejects_bad_inputs():
    ch = make_channel(3, np.eye(3, dtype=int), [Pmf.uniform(F3)] * 3)
    with pytest.raises(FieldError):
        transmit(ch, [0, 1], [0], [0, 1], seed=0)
    with pytest.raises(FieldError):
        transmit(ch, [0, 3], [0, 1], [0, 1], seed=0)
    with pytest.raises(FieldError):
        make_channel(3, np.eye(2, dtype=int), [Pmf.uniform(F3)] * 3)
    with pytest.raises(FieldError):
        make_channel(3, np.eye(3, dtype=int), [Pmf.uniform(PrimeField(5))] * 3)


def test_json_round_trip(ex2):
    ch = make_example2(3, ex2["N1"], ex2["N2"], ex2["N3"])
    again = AdditiveIcChannel.from_json(ch.to_json())
    assert again.coeffs.tolist() == ch.coeffs.tolist()
    assert all(a.allclose(b) for a, b in zip(again.noise, ch.noise))
