"""Closed-form secrecy-rate expressions.

Everything here is a pure function of the channel and an allocation. The
helpers prefixed with an underscore broadcast over numpy arrays, which is
what the grid oracle relies on; the public functions validate their inputs
and work on whole channels.

All rates are in bits per channel use (base-2 logarithms).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (Allocation, ChannelError, DeterministicSubchannel,
                      GaussianSubchannel, LinkGains, ModeAssignment,
                      ParallelChannel, as_gains)

INTERFERENCE_CONVENTIONS = ("as-printed", "power-consistent")


def cap(x):
    """Gaussian capacity function ``0.5 * log2(1 + x)``.

    Accepts scalars or arrays; negative or non-finite SNRs raise
    ``ValueError``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cap() needs a finite SNR")
    if np.any(arr < 0):
        raise ValueError("cap() needs a nonnegative SNR")
    out = 0.5 * np.log2(1.0 + arr)
    return float(out) if out.ndim == 0 else out


def _cap(x):
    return 0.5 * np.log2(1.0 + x)


def _pos(x):
    return np.maximum(x, 0.0)


def _coherent_snr(g1, p1, g2, p2, corr, noise):
    """SNR of two partially correlated transmitters seen through gains g1, g2.

    ``corr`` is the amplitude correlation (sqrt(1-alpha) for DF, psi for the
    upper bound). The cross term is a product of nonnegative factors under
    one square root, so zero powers give exactly zero.
    """
    cross = 2.0 * corr * np.sqrt(g1 * p1 * g2 * p2)
    return np.maximum(g1 * p1 + g2 * p2 + cross, 0.0) / noise


# Per-subchannel terms in gain form. Arguments broadcast.

def _df_terms(g, p1, p2, alpha, idx=slice(None)):
    c = np.sqrt(np.maximum(1.0 - alpha, 0.0))
    dest = _coherent_snr(g.sd[idx], p1, g.rd[idx], p2, c, g.noise_dest[idx])
    eve = _coherent_snr(g.se[idx], p1, g.re[idx], p2, c, g.noise_eve[idx])
    relay = alpha * g.sr[idx] * p1 / g.noise_relay[idx]
    f = g.rate_factor
    leak = _cap(eve)
    return f * _pos(_cap(dest) - leak), f * _pos(_cap(relay) - leak)


def _nf_terms(g, p1, p2, idx=slice(None)):
    dest = (g.sd[idx] * p1 + g.rd[idx] * p2) / g.noise_dest[idx]
    eve = (g.se[idx] * p1 + g.re[idx] * p2) / g.noise_eve[idx]
    f = g.rate_factor
    leak = _cap(eve)
    term_a = _pos(_cap(dest) - leak)
    term_b = _pos(_cap(g.sd[idx] * p1 / g.noise_dest[idx])
                  + _cap(g.re[idx] * p2 / g.noise_eve[idx]) - leak)
    return f * term_a, f * term_b


def _upper_terms(g, p1, p2, psi, idx=slice(None)):
    dest = _coherent_snr(g.sd[idx], p1, g.rd[idx], p2, psi, g.noise_dest[idx])
    eve = _coherent_snr(g.se[idx], p1, g.re[idx], p2, psi, g.noise_eve[idx])
    return g.rate_factor * (_cap(dest) - _cap(eve))


def _deaf_terms(g, p1, p2, idx=slice(None)):
    dest = g.sd[idx] * p1 / g.noise_dest[idx]
    eve = g.se[idx] * p1 / (g.noise_eve[idx] + g.re[idx] * p2)
    return g.rate_factor * (_cap(dest) - _cap(eve))


def _deaf_condition_sides(g, p1, p2, idx=slice(None)):
    """Per-subchannel (relay-to-destination, relay-to-eavesdropper) rates."""
    left = _cap(g.rd[idx] * p2 / (g.sd[idx] * p1 + g.noise_dest[idx]))
    right = _cap(g.re[idx] * p2 / g.noise_eve[idx])
    return left, right


@dataclass(frozen=True)
class RateTerms:
    term_dest: float
    term_relay_or_alt: float


@dataclass
class BoundResult:
    """Optimized bound with the allocation that attains it."""
    value: float
    allocation: Allocation
    modes: ModeAssignment | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"value": self.value, "allocation": self.allocation.to_dict()}
        if self.modes is not None:
            out["modes"] = [m.value for m in self.modes]
        return out


def _single(sub):
    if not isinstance(sub, GaussianSubchannel):
        raise ChannelError("expected a GaussianSubchannel", None, "subchannels")
    return ParallelChannel([sub.check()]).gains()


def _check_power(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ChannelError(f"{name} must be finite and >= 0", None, name)
    return arr


def df_terms(sub, p1, p2, alpha):
    """DF summands of one subchannel: (destination term, relay term).

    Both are positive parts of a legitimate rate minus the eavesdropper's
    rate; the relay term is limited by the source-relay link, which
    carries the fresh fraction ``alpha`` of the source power.
    """
    a = float(alpha)
    if not 0.0 <= a <= 1.0:
        raise ChannelError("alpha must lie in [0, 1]", None, "alpha")
    t1, t2 = _df_terms(_single(sub), _check_power("p1", p1), _check_power("p2", p2), a)
    return RateTerms(float(t1[0]), float(t2[0]))


def nf_terms(sub, p1, p2):
    """NF summands of one subchannel: (joint-decoding term, confusion term)."""
    t1, t2 = _nf_terms(_single(sub), _check_power("p1", p1), _check_power("p2", p2))
    return RateTerms(float(t1[0]), float(t2[0]))


def _check_lengths(g, alloc, modes=None):
    if len(alloc) != len(g):
        raise ChannelError(f"allocation length {len(alloc)} != channel length {len(g)}",
                           None, "p1")
    if modes is not None and len(modes) != len(g):
        raise ChannelError(f"mode assignment length {len(modes)} != channel length {len(g)}",
                           None, "modes")


def lower_bound_value(channel, modes, alloc):
    """Achievable secrecy rate of a DF/NF mode split at a fixed allocation.

    ``min(sum_DF dest, sum_DF relay) + min(sum_NF term_a, sum_NF term_b)``,
    with the positive part taken per subchannel. An empty mode set
    contributes zero.
    """
    g = as_gains(channel)
    _check_lengths(g, alloc, modes)
    df = modes.df_mask
    nf = ~df
    total = 0.0
    if df.any():
        a, b = _df_terms(g, alloc.p1[df], alloc.p2[df], alloc.alpha[df], df)
        total += min(float(np.sum(a)), float(np.sum(b)))
    if nf.any():
        a, b = _nf_terms(g, alloc.p1[nf], alloc.p2[nf], nf)
        total += min(float(np.sum(a)), float(np.sum(b)))
    return total


def upper_bound_value(channel, alloc):
    """Gaussian-input upper bound at a fixed allocation (may be negative)."""
    g = as_gains(channel)
    _check_lengths(g, alloc)
    return float(np.sum(_upper_terms(g, alloc.p1, alloc.p2, alloc.psi)))


def interference_upper_value(channel, alloc, convention="as-printed"):
    """Upper bound when the eavesdropper also hears the other subchannels.

    Cross-subchannel signals add to the eavesdropper's noise. With
    ``convention="as-printed"`` the relay contribution of subchannel k is
    ``sqrt(rho2_k) * P2_k``; ``"power-consistent"`` uses ``rho2_k * P2_k``.
    """
    if convention not in INTERFERENCE_CONVENTIONS:
        raise ValueError(f"convention must be one of {INTERFERENCE_CONVENTIONS}")
    if isinstance(channel, LinkGains):
        raise ChannelError("interference bound needs a ParallelChannel", None, "subchannels")
    g = as_gains(channel)
    _check_lengths(g, alloc)
    p1, p2, psi = alloc.p1, alloc.p2, alloc.psi
    rho2 = g.re
    relay_gain = np.sqrt(rho2) if convention == "as-printed" else rho2
    interf = p1 + relay_gain * p2 + 2.0 * psi * np.sqrt(rho2 * p1 * p2)
    others = np.sum(interf) - interf
    dest = _coherent_snr(g.sd, p1, g.rd, p2, psi, g.noise_dest)
    eve = _coherent_snr(g.se, p1, g.re, p2, psi, others + g.noise_eve)
    return float(np.sum(_cap(dest) - _cap(eve)))


def deaf_bound_value(channel, alloc):
    """Secrecy rate when the relay cannot hear the source and only jams."""
    g = as_gains(channel)
    _check_lengths(g, alloc)
    return float(np.sum(_deaf_terms(g, alloc.p1, alloc.p2)))


def deaf_condition_margin(channel, alloc):
    """Left minus right side of the jamming feasibility condition."""
    g = as_gains(channel)
    _check_lengths(g, alloc)
    left, right = _deaf_condition_sides(g, alloc.p1, alloc.p2)
    return float(np.sum(left)) - float(np.sum(right))


def deaf_condition_holds(channel, alloc):
    """True iff the destination can decode the jamming at least as well as
    the eavesdropper (equality counts)."""
    g = as_gains(channel)
    _check_lengths(g, alloc)
    left, right = _deaf_condition_sides(g, alloc.p1, alloc.p2)
    return bool(float(np.sum(left)) >= float(np.sum(right)))


def _det_gaps(subs):
    subs = list(subs)
    if not subs:
        raise ValueError("need at least one deterministic subchannel")
    for s in subs:
        if not isinstance(s, DeterministicSubchannel):
            raise TypeError("expected DeterministicSubchannel entries")
    gap_in = [max(s.cap_relay_in - s.cap_eve, 0.0) for s in subs]
    gap_out = [max(s.cap_relay_out - s.cap_eve, 0.0) for s in subs]
    return gap_in, gap_out


def deterministic_across(subs):
    """Rate with one code spanning all deterministic subchannels."""
    gap_in, gap_out = _det_gaps(subs)
    return min(math.fsum(gap_in), math.fsum(gap_out))


def deterministic_separate(subs):
    """Rate with an independent code on every deterministic subchannel."""
    gap_in, gap_out = _det_gaps(subs)
    return math.fsum(min(a, b) for a, b in zip(gap_in, gap_out))
