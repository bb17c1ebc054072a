"""Additive three-user interference channels over F_q.

Receiver j sees ``Y_j = sum_i A[j, i] X_i + N_j`` with ``N_j`` i.i.d. from a
per-receiver aggregate noise pmf. Joint statistics of the noise across
receivers are not modelled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gf import FieldError, PrimeField, make_rng
from .probspace import Pmf, convolve, sample


@dataclass(frozen=True, eq=False)
class AdditiveIcChannel:
    field: PrimeField
    coeffs: np.ndarray
    noise: tuple[Pmf, Pmf, Pmf]
    name: str = "custom"

    def __post_init__(self):
        A = self.field.array(self.coeffs, ndim=2)
        if A.shape != (3, 3):
            raise FieldError(f"coefficient matrix must be 3x3, got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "coeffs", A)
        noise = tuple(self.noise)
        if len(noise) != 3 or any(p.field != self.field for p in noise):
            raise FieldError("need three noise pmfs on the channel field")
        object.__setattr__(self, "noise", noise)

    @property
    def q(self) -> int:
        return self.field.q

    def is_noiseless(self) -> bool:
        return all(p[0] == 1.0 for p in self.noise)

    def clean_output(self, j: int, x1, x2, x3) -> np.ndarray:
        A = self.coeffs
        return (A[j, 0] * np.asarray(x1) + A[j, 1] * np.asarray(x2) + A[j, 2] * np.asarray(x3)) % self.q

    def to_dict(self) -> dict:
        return {"q": self.q, "A": self.coeffs.tolist(), "noise": [p.tolist() for p in self.noise]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "AdditiveIcChannel":
        field = PrimeField(int(d["q"]))
        noise = tuple(Pmf.from_literal(field, p) for p in d["noise"])
        return cls(field, np.asarray(d["A"]), noise, d.get("name", "custom"))

    @classmethod
    def from_json(cls, text: str) -> "AdditiveIcChannel":
        return cls.from_dict(json.loads(text))


def make_channel(q: int, A, noise) -> AdditiveIcChannel:
    field = PrimeField(q)
    return AdditiveIcChannel(field, np.asarray(A), tuple(noise))


def make_example1(q: int, n1: Pmf, n3: Pmf) -> AdditiveIcChannel:
    """``Y_i = X_i + N_1 + N_3`` (i = 1, 2), ``Y_3 = X_1 + X_2 + X_3 + N_3``."""
    field = PrimeField(q)
    n13 = convolve(n1, n3)
    A = [[1, 0, 0], [0, 1, 0], [1, 1, 1]]
    return AdditiveIcChannel(field, np.array(A), (n13, n13, n3), "example1")


def make_example2(q: int, n1: Pmf, n2: Pmf, n3: Pmf) -> AdditiveIcChannel:
    """``Y_1 = X_1 + N_1 + N_2 + N_3``, ``Y_2 = X_1 + X_2 + N_2 + N_3``, ``Y_3 = 2X_1 + X_2 + X_3 + N_3``."""
    if q < 3:
        raise FieldError("this channel needs q >= 3 so that the coefficient 2 differs from 1")
    field = PrimeField(q)
    n23 = convolve(n2, n3)
    n123 = convolve(n1, n23)
    A = [[1, 0, 0], [1, 1, 0], [2, 1, 1]]
    return AdditiveIcChannel(field, np.array(A), (n123, n23, n3), "example2")


@dataclass(frozen=True, eq=False)
class ChannelUse:
    inputs: tuple[np.ndarray, np.ndarray, np.ndarray]
    outputs: tuple[np.ndarray, np.ndarray, np.ndarray]
    noise: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __eq__(self, other):
        if not isinstance(other, ChannelUse):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for mine, theirs in ((self.inputs, other.inputs), (self.outputs, other.outputs), (self.noise, other.noise))
            for a, b in zip(mine, theirs)
        )


def draw_noise(channel: AdditiveIcChannel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    return tuple(sample(p, n, rng) for p in channel.noise)


def transmit(channel: AdditiveIcChannel, x1, x2, x3, seed) -> ChannelUse:
    xs = tuple(channel.field.array(x, ndim=1) for x in (x1, x2, x3))
    if not xs[0].shape == xs[1].shape == xs[2].shape:
        raise FieldError("inputs must have equal length")
    rng = make_rng(seed)
    noise = draw_noise(channel, xs[0].shape[0], rng)
    outs = tuple((channel.clean_output(j, *xs) + noise[j]) % channel.q for j in range(3))
    return ChannelUse(xs, outs, noise)

