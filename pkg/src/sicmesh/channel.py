"""Link-level success probabilities under Rayleigh block fading.

Per-slot channel gains |h|^2 are i.i.d. unit-mean exponentials, so a link
with threshold gamma, distance r, transmit power p and noise power N0
succeeds (no interference) with probability exp(-gamma * r^a * N0 / p).
Closed forms are provided for the no-interferer, one-interferer-as-noise
and one-canceled-interferer cases; everything else goes through the
Monte-Carlo estimator, which doubles as the oracle for the closed forms.

Setting N0 = 1 recovers the unit-noise normalization commonly used in
analysis; realistic parameters (p in watts, r in meters) work unchanged
because only the composite gamma * r^a * N0 / p enters the formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

Point = Tuple[float, float]

IAN = "ian"
SIC = "sic"


class CoLocatedError(ValueError):
    """Transmitter and receiver occupy the same position."""


@dataclass(frozen=True)
class ChannelParams:
    """Propagation environment: path-loss exponent and noise power (watts)."""

    path_loss_exponent: float = 3.0
    noise_power: float = 7e-11

    def __post_init__(self):
        if not self.path_loss_exponent > 0:
            raise ValueError(f"path_loss_exponent must be > 0, got {self.path_loss_exponent}")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power}")


@dataclass(frozen=True)
class TransmitterState:
    """A transmitter as seen by the channel: power, SINR threshold, position.

    The threshold relates to the transmission rate R (bits/s/Hz) through
    gamma = 2^R - 1; gamma is stored, the rate is derived.
    """

    power: float
    sinr_threshold: float
    position: Point

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be > 0, got {self.power}")
        if self.sinr_threshold < 0:
            raise ValueError(f"sinr_threshold must be >= 0, got {self.sinr_threshold}")

    @property
    def rate(self) -> float:
        """Spectral efficiency R such that gamma = 2^R - 1."""
        return math.log2(1.0 + self.sinr_threshold)


@dataclass(frozen=True)
class ReceptionPolicy:
    """How a receiver handles concurrent transmissions.

    ``ian`` treats every interferer as noise.  ``sic`` attempts to decode
    the transmitters in ``cancel_set`` (in the given order, each under the
    interference of everything not yet subtracted) and removes every
    successfully decoded signal before testing the remaining intended
    transmissions.  When a cancel order is not dictated by configuration,
    list the cancelable transmitters by descending mean received power.
    """

    mode: str = IAN
    cancel_set: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.mode not in (IAN, SIC):
            raise ValueError(f"mode must be '{IAN}' or '{SIC}', got {self.mode!r}")
        if self.mode == IAN and self.cancel_set:
            raise ValueError("IAN policy cannot carry a cancel_set")
        if len(set(self.cancel_set)) != len(self.cancel_set):
            raise ValueError(f"cancel_set has duplicate entries: {self.cancel_set}")


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _outage_exponent(tx: TransmitterState, rx_position: Point, ch: ChannelParams) -> float:
    """gamma * r^a * N0 / p, the exponent of the solo success probability."""
    r = distance(tx.position, rx_position)
    if r <= 0.0:
        raise CoLocatedError(f"transmitter at {tx.position} is co-located with receiver at {rx_position}")
    return tx.sinr_threshold * r ** ch.path_loss_exponent * ch.noise_power / tx.power


def _mean_rx_power(tx: TransmitterState, rx_position: Point, ch: ChannelParams) -> float:
    r = distance(tx.position, rx_position)
    if r <= 0.0:
        raise CoLocatedError(f"transmitter at {tx.position} is co-located with receiver at {rx_position}")
    return tx.power * r ** -ch.path_loss_exponent


def success_prob_solo(tx: TransmitterState, rx_position: Point, ch: ChannelParams) -> float:
    """Probability the link is not in outage when only ``tx`` is active."""
    return math.exp(-_outage_exponent(tx, rx_position, ch))


def success_prob_ian(
    tx: TransmitterState,
    interferer: TransmitterState,
    rx_position: Point,
    ch: ChannelParams,
) -> float:
    """Success probability with one concurrent transmitter treated as noise."""
    return success_prob_ian_multi(tx, [interferer], rx_position, ch)


def success_prob_ian_multi(
    tx: TransmitterState,
    interferers: Sequence[TransmitterState],
    rx_position: Point,
    ch: ChannelParams,
) -> float:
    """Success probability with any number of interferers treated as noise.

    Product form for independent exponential gains:
    exp(-gamma r^a N0 / p) * prod_k [1 + gamma (p_k/p) (r/r_k)^a]^{-1}.
    Reduces to :func:`success_prob_solo` with no interferers and to
    :func:`success_prob_ian` with exactly one.
    """
    gamma = tx.sinr_threshold
    s = _mean_rx_power(tx, rx_position, ch)
    # log-space accumulation keeps long interferer products stable
    log_p = -_outage_exponent(tx, rx_position, ch)
    for it in interferers:
        log_p -= math.log1p(gamma * _mean_rx_power(it, rx_position, ch) / s)
    return _clamp_prob(math.exp(log_p))


def success_prob_sic(
    tx: TransmitterState,
    canceled: TransmitterState,
    rx_position: Point,
    ch: ChannelParams,
) -> float:
    """Joint probability that the canceled interferer is decodable at full
    interference AND the intended signal is decodable after subtraction.

    exp(-g1 r1^a N0/p1) * exp(-g2 (1+g1) r2^a N0/p2)
        * [1 + g2 (p1/p2) (r2/r1)^a]^{-1}
    with (g1, r1, p1) the intended link and (g2, r2, p2) the canceled one.
    A failed cancelation counts as failure here; receivers that fall back
    to decoding through the interference are modeled by the simulator.
    """
    g1 = tx.sinr_threshold
    g2 = canceled.sinr_threshold
    e1 = _outage_exponent(tx, rx_position, ch)
    e2 = _outage_exponent(canceled, rx_position, ch)
    s1 = _mean_rx_power(tx, rx_position, ch)
    s2 = _mean_rx_power(canceled, rx_position, ch)
    log_p = -e1 - (1.0 + g1) * e2 - math.log1p(g2 * s1 / s2)
    return _clamp_prob(math.exp(log_p))


def _clamp_prob(p: float) -> float:
    # absorbs rounding at the 1e-15 level only; the formulas cannot exceed [0,1]
    return min(1.0, max(0.0, p))


def success_prob_mc(
    tx: TransmitterState,
    active_interferers: Sequence[TransmitterState],
    policy: ReceptionPolicy,
    rx_position: Point,
    ch: ChannelParams,
    n_samples: int,
    seed: int,
    cancel_ids: Sequence[str] = (),
    sic_fallback: bool = False,
) -> Tuple[float, float]:
    """Empirical success frequency of the intended link, with binomial
    standard error.

    Draws i.i.d. unit-mean exponential gains per transmitter per sample and
    applies the policy's decode procedure.  For SIC, ``cancel_ids`` names the
    interferers (by index position as ``str(i)`` if the policy's cancel_set
    does not directly apply) to attempt in order; by default the policy's
    cancel_set is matched against ``cancel_ids``.  With ``sic_fallback``
    False (the default, matching the closed form), a failed cancelation
    fails the whole reception; with True the receiver still attempts the
    intended signal against the unsubtracted interference.

    Deterministic for a fixed seed.  This estimator is the oracle for the
    closed forms above and the only evaluator for multi-interferer SIC.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")

    mean_s = _mean_rx_power(tx, rx_position, ch)
    mean_i = np.array([_mean_rx_power(it, rx_position, ch) for it in active_interferers])
    gammas_i = np.array([it.sinr_threshold for it in active_interferers])
    n0 = ch.noise_power
    gamma = tx.sinr_threshold

    if policy.mode == SIC:
        ids = list(cancel_ids) if cancel_ids else [str(k) for k in range(len(active_interferers))]
        if len(ids) != len(active_interferers):
            raise ValueError("cancel_ids must label every active interferer")
        cancel_order = [ids.index(c) for c in policy.cancel_set if c in ids]
    else:
        cancel_order = []

    rng = np.random.default_rng(seed)
    n_ok = 0
    # sample in blocks to bound memory for large n
    block = 1 << 18
    remaining = n_samples
    while remaining > 0:
        m = min(block, remaining)
        remaining -= m
        g_s = rng.exponential(size=m)
        g_i = rng.exponential(size=(m, len(active_interferers))) if len(active_interferers) else np.zeros((m, 0))
        p_s = mean_s * g_s
        p_i = mean_i * g_i
        residual = n0 + p_s + p_i.sum(axis=1)
        blocked = np.zeros(m, dtype=bool)
        for k in cancel_order:
            sinr_k = p_i[:, k] / (residual - p_i[:, k])
            decoded = sinr_k >= gammas_i[k]
            residual = np.where(decoded, residual - p_i[:, k], residual)
            if not sic_fallback:
                blocked |= ~decoded
        ok = (p_s / (residual - p_s) >= gamma) & ~blocked
        n_ok += int(ok.sum())

    p_hat = n_ok / n_samples
    std_err = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / n_samples) / n_samples)
    return p_hat, std_err
