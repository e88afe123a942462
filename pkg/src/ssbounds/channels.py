"""Closed-form capacities of the binary channels induced by zero-one losses.

Capacities are in bits; the interpolating identity and single-loss caps are in
nats. ``Capacity`` carries both so callers never have to guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .infocore import binary_entropy, mi_from_table, plugin_mi_rows

LN2 = math.log(2)


@dataclass(frozen=True)
class TernarySymmetricChannel:
    """U -> loss difference in {-1, 0, 1}; alpha to 0, epsilon to the cross output."""

    alpha: float
    epsilon: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.epsilon < 0 or self.alpha + self.epsilon > 1 + 1e-15:
            raise ValueError("need alpha, epsilon >= 0 and alpha + epsilon <= 1")

    def transition(self) -> np.ndarray:
        """Rows: input u; columns: output (-1, 0, 1)."""
        a, e = self.alpha, self.epsilon
        return np.array([[e, a, 1 - a - e], [1 - a - e, a, e]])


@dataclass(frozen=True)
class BinaryAsymmetricChannel:
    """U=0 flips to 1 with prob p; U=1 flips to 0 with prob q."""

    p: float
    q: float

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.q <= 1):
            raise ValueError("p and q must lie in [0, 1]")

    def transition(self) -> np.ndarray:
        return np.array([[1 - self.p, self.p], [self.q, 1 - self.q]])


@dataclass(frozen=True)
class Capacity:
    bits: float
    optimal_input: float  # P(U = 1) achieving capacity

    @property
    def nats(self) -> float:
        return self.bits * LN2


def ternary_capacity(c: TernarySymmetricChannel) -> Capacity:
    if c.alpha >= 1:
        return Capacity(0.0, 0.5)
    r = c.epsilon / (1 - c.alpha)
    return Capacity((1 - c.alpha) * (1 - binary_entropy(min(r, 1.0), "bits")), 0.5)


def bac_capacity(c: BinaryAsymmetricChannel) -> Capacity:
    p, q = c.p, c.q
    s = 1 - p - q
    if s <= 0:
        raise ValueError(f"capacity formula needs p + q < 1 (got p + q = {p + q})")
    hp, hq = binary_entropy(p, "bits"), binary_entropy(q, "bits")
    beta = 2.0 ** ((hp - hq) / s)
    bits = math.log2(1 + beta) - (1 - q) / s * hp + p / s * hq
    # stationarity gives the optimal P(U=0); report P(U=1)
    p_u0 = (1 - q * (1 + beta)) / (s * (1 + beta))
    return Capacity(max(0.0, bits), 1.0 - p_u0)


def z_channel_capacity(q: float) -> Capacity:
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if q == 1:
        return Capacity(0.0, 0.5)
    bits = math.log2(1 + 2.0 ** (-binary_entropy(q, "bits") / (1 - q)))
    return Capacity(bits, bac_capacity(BinaryAsymmetricChannel(0.0, q)).optimal_input)


def channel_mi(transition: np.ndarray, p_u1: float) -> float:
    """I(U; Y) in nats for input law P(U=1) = p_u1 through a row-stochastic matrix."""
    prior = np.array([1 - p_u1, p_u1])
    return float(mi_from_table((prior[:, None] * transition).T))


class InterpolatingIdentity(NamedTuple):
    err_emp: float
    mi_sum: float
    residual: float


def interpolating_identity(t) -> InterpolatingIdentity:
    """Compare |Err| with the summed loss-difference rate for an interpolating run set."""
    if t.loss_kind != "zero_one":
        raise ValueError("interpolating identity needs zero-one losses")
    bad = t.first_non_interpolating()
    if bad is not None:
        raise ValueError(f"run (supersample {bad[0]}, mask {bad[1]}) has nonzero training loss")
    err = float(np.mean(t.test - t.train))
    mi = plugin_mi_rows(t.pooled(t.delta), t.pooled(t.masks))
    mi_sum = float(mi.sum() / (t.n * LN2))
    return InterpolatingIdentity(abs(err), mi_sum, abs(abs(err) - mi_sum))


class SingleLossCaps(NamedTuple):
    h_half_nats: float
    z_remark_nats: float


def single_loss_mi_caps(L_mu: float) -> SingleLossCaps:
    """Caps on the mean single-loss MI of an interpolating algorithm.

    ``h_half`` is H(L_mu / 2); ``z_remark`` is the Z-channel capacity with
    crossover 1 - L_mu, ln(1 + 2^(-H(L_mu)/L_mu)), which tends to 0 as
    L_mu -> 0.
    """
    if not 0 <= L_mu <= 1:
        raise ValueError("L_mu must lie in [0, 1]")
    h_half = binary_entropy(L_mu / 2)
    if L_mu == 0:
        z = 0.0
    else:
        z = math.log1p(2.0 ** (-binary_entropy(L_mu, "bits") / L_mu))
    return SingleLossCaps(h_half, z)
