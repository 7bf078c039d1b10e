"""Channel instances for the parallel Gaussian relay-eavesdropper model.

A subchannel is described the way the received signals are normalized:
direct source links have unit gain and all asymmetry lives in the noise
variances and in the relay SNR ratios ``rho1`` (relay-destination over
source-destination) and ``rho2`` (relay-eavesdropper over
source-eavesdropper).

Rate code works on :class:`LinkGains`, a vectorized view in which every link
carries an explicit power gain. Gaussian channels map onto it with unit
direct gains; fading states map onto it with ``|h|**2`` gains.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

#: Relative tolerance on power-budget sums.
BUDGET_RTOL = 1e-9


class ChannelError(ValueError):
    """Invalid channel, budget or allocation.

    ``index`` is the offending subchannel (None for global fields) and
    ``field`` the offending field name.
    """

    def __init__(self, message, index=None, field=None):
        super().__init__(message)
        self.index = index
        self.field = field


class Mode(str, enum.Enum):
    DF = "DF"
    NF = "NF"


def _finite(value, name, index=None):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ChannelError(f"{_where(index)}{name} is not a number: {value!r}",
                           index, name) from None
    if not math.isfinite(value):
        raise ChannelError(f"{_where(index)}{name} is not finite", index, name)
    return value


def _where(index):
    return "" if index is None else f"subchannel {index}: "


@dataclass(frozen=True)
class GaussianSubchannel:
    sigma2_relay: float
    sigma2_dest: float
    sigma2_eve: float
    rho1: float
    rho2: float

    def check(self, index=None):
        for name in ("sigma2_relay", "sigma2_dest", "sigma2_eve"):
            if _finite(getattr(self, name), name, index) <= 0:
                raise ChannelError(f"{_where(index)}{name} must be > 0", index, name)
        for name in ("rho1", "rho2"):
            if _finite(getattr(self, name), name, index) < 0:
                raise ChannelError(f"{_where(index)}{name} must be >= 0", index, name)
        return self


@dataclass(frozen=True)
class ParallelChannel:
    subchannels: tuple

    def __post_init__(self):
        object.__setattr__(self, "subchannels", tuple(self.subchannels))

    def __len__(self):
        return len(self.subchannels)

    def __iter__(self):
        return iter(self.subchannels)

    def __getitem__(self, index):
        return self.subchannels[index]

    def column(self, name):
        return np.array([getattr(s, name) for s in self.subchannels], dtype=float)

    def gains(self):
        """Unit-direct-gain view used by the rate and optimizer code."""
        ones = np.ones(len(self))
        return LinkGains(sd=ones, rd=self.column("rho1"), se=ones,
                         re=self.column("rho2"), sr=ones,
                         noise_dest=self.column("sigma2_dest"),
                         noise_eve=self.column("sigma2_eve"),
                         noise_relay=self.column("sigma2_relay"))

    def scaled(self, k):
        """Same channel with every noise variance multiplied by ``k``."""
        return ParallelChannel(
            GaussianSubchannel(s.sigma2_relay * k, s.sigma2_dest * k,
                               s.sigma2_eve * k, s.rho1, s.rho2)
            for s in self.subchannels)


def validate_channel(channel):
    """Return ``channel`` if every subchannel is valid.

    Raises
    ------
    ChannelError
        Naming the index and field of the first violated invariant.
    """
    if not isinstance(channel, ParallelChannel):
        channel = ParallelChannel(channel)
    if len(channel) < 1:
        raise ChannelError("channel needs at least one subchannel", None, "subchannels")
    for i, sub in enumerate(channel):
        if not isinstance(sub, GaussianSubchannel):
            raise ChannelError(f"subchannel {i}: not a GaussianSubchannel", i, "subchannels")
        sub.check(i)
    return channel


@dataclass(frozen=True)
class PowerBudget:
    p1_total: float
    p2_total: float

    def __post_init__(self):
        for name in ("p1_total", "p2_total"):
            if _finite(getattr(self, name), name) < 0:
                raise ChannelError(f"{name} must be >= 0", None, name)

    def scaled(self, k):
        return PowerBudget(self.p1_total * k, self.p2_total * k)


@dataclass(frozen=True)
class LinkGains:
    """Per-subchannel power gains and noise variances.

    Link names follow the node pairs: ``sd`` source-destination, ``rd``
    relay-destination, ``se`` source-eavesdropper, ``re``
    relay-eavesdropper and ``sr`` source-relay. ``rate_factor`` multiplies
    every rate term (2 for complex baseband channels).
    """
    sd: np.ndarray
    rd: np.ndarray
    se: np.ndarray
    re: np.ndarray
    sr: np.ndarray
    noise_dest: np.ndarray
    noise_eve: np.ndarray
    noise_relay: np.ndarray
    rate_factor: float = 1.0

    def __post_init__(self):
        n = None
        for name in ("sd", "rd", "se", "re", "sr", "noise_dest", "noise_eve", "noise_relay"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ChannelError(f"{name} has length {arr.size}, expected {n}", None, name)
            if not np.all(np.isfinite(arr)):
                raise ChannelError(f"{name} has non-finite entries", None, name)
        if n < 1:
            raise ChannelError("at least one subchannel is required", None, "sd")
        for name in ("sd", "rd", "se", "re", "sr"):
            if np.any(getattr(self, name) < 0):
                raise ChannelError(f"{name} gains must be >= 0", None, name)
        for name in ("noise_dest", "noise_eve", "noise_relay"):
            if np.any(getattr(self, name) <= 0):
                raise ChannelError(f"{name} must be > 0", None, name)

    def __len__(self):
        return self.sd.size


def as_gains(channel):
    if isinstance(channel, LinkGains):
        return channel
    return validate_channel(channel).gains()


@dataclass(frozen=True)
class ModeAssignment:
    modes: tuple

    def __post_init__(self):
        try:
            modes = tuple(Mode(m) for m in self.modes)
        except ValueError as exc:
            raise ChannelError(f"unknown relay mode: {exc}", None, "modes") from None
        object.__setattr__(self, "modes", modes)

    @classmethod
    def all(cls, mode, n):
        return cls((Mode(mode),) * n)

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def df_mask(self):
        return np.array([m is Mode.DF for m in self.modes], dtype=bool)

    @property
    def nf_mask(self):
        return ~self.df_mask


@dataclass(frozen=True)
class Allocation:
    """Per-subchannel powers and correlation parameters.

    ``alpha`` is the DF split between fresh source signal and the part
    coherent with the relay; ``psi`` is the source-relay correlation used
    by upper bounds. Both are stored for every subchannel and ignored where
    they do not apply.
    """
    p1: np.ndarray
    p2: np.ndarray
    alpha: np.ndarray = None
    psi: np.ndarray = None

    def __post_init__(self):
        p1 = np.array(self.p1, dtype=float).reshape(-1)
        n = p1.size
        arrays = {
            "p1": p1,
            "p2": np.array(self.p2, dtype=float).reshape(-1),
            "alpha": np.ones(n) if self.alpha is None else np.array(self.alpha, dtype=float).reshape(-1),
            "psi": np.zeros(n) if self.psi is None else np.array(self.psi, dtype=float).reshape(-1),
        }
        for name, arr in arrays.items():
            if arr.size != n:
                raise ChannelError(f"{name} has length {arr.size}, expected {n}", None, name)
            if not np.all(np.isfinite(arr)):
                raise ChannelError(f"{name} has non-finite entries", None, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.p1 < 0) or np.any(self.p2 < 0):
            raise ChannelError("powers must be >= 0", None, "p1" if np.any(self.p1 < 0) else "p2")
        if np.any((self.alpha < 0) | (self.alpha > 1)):
            raise ChannelError("alpha must lie in [0, 1]", None, "alpha")
        if np.any((self.psi < -1) | (self.psi > 1)):
            raise ChannelError("psi must lie in [-1, 1]", None, "psi")

    def __len__(self):
        return self.p1.size

    def check(self, budget, n=None, scale=1.0):
        """Raise unless the power sums fit ``budget`` (times ``scale``)."""
        if n is not None and len(self) != n:
            raise ChannelError(f"allocation has length {len(self)}, expected {n}", None, "p1")
        for name, total in (("p1", budget.p1_total), ("p2", budget.p2_total)):
            limit = total * scale
            used = float(np.sum(getattr(self, name)))
            if used > limit + BUDGET_RTOL * max(limit, 1e-300):
                raise ChannelError(f"sum of {name} = {used!r} exceeds budget {limit!r}", None, name)
        return self

    def scaled(self, k):
        return Allocation(self.p1 * k, self.p2 * k, self.alpha, self.psi)

    def to_dict(self):
        return {"p1": self.p1.tolist(), "p2": self.p2.tolist(),
                "alpha": self.alpha.tolist(), "psi": self.psi.tolist()}


def uniform_allocation(channel, budget):
    """Equal split of both budgets over the subchannels (alpha=1, psi=0)."""
    n = len(channel)
    return Allocation(np.full(n, budget.p1_total / n), np.full(n, budget.p2_total / n),
                      np.ones(n), np.zeros(n))


@dataclass(frozen=True)
class DeterministicSubchannel:
    cap_relay_in: float
    cap_relay_out: float
    cap_eve: float

    def __post_init__(self):
        for name in ("cap_relay_in", "cap_relay_out", "cap_eve"):
            if _finite(getattr(self, name), name) < 0:
                raise ChannelError(f"{name} must be >= 0", None, name)


@dataclass(frozen=True)
class Geometry:
    source_pos: tuple = (0.0, 0.0)
    relay_pos: tuple = (0.5, 0.0)
    dest_pos: tuple = (1.0, 0.0)
    eve_pos: tuple = (0.0, 1.0)
    gamma: float = 2.0
    #: close-in reference distance; shorter links are treated as this long
    min_distance: float = 0.0

    def __post_init__(self):
        if _finite(self.gamma, "gamma") <= 0:
            raise ChannelError("gamma must be > 0", None, "gamma")
        if _finite(self.min_distance, "min_distance") < 0:
            raise ChannelError("min_distance must be >= 0", None, "min_distance")
        for name in ("source_pos", "relay_pos", "dest_pos", "eve_pos"):
            pos = tuple(_finite(v, name) for v in getattr(self, name))
            if len(pos) != 2:
                raise ChannelError(f"{name} must be a 2-D point", None, name)
            object.__setattr__(self, name, pos)

    @classmethod
    def relay_at(cls, d, gamma=2.0, min_distance=0.0):
        """Source (0,0), relay (d,0), destination (1,0), eavesdropper (0,1)."""
        return cls(relay_pos=(float(d), 0.0), gamma=gamma, min_distance=min_distance)

    def distance(self, a, b):
        pa, pb = getattr(self, f"{a}_pos"), getattr(self, f"{b}_pos")
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1])


@dataclass(frozen=True)
class FadingDraw:
    h_sr: complex
    h_sd: complex
    h_rd: complex
    h_se: complex
    h_re: complex


# --- JSON -------------------------------------------------------------------

_SUB_FIELDS = ("sigma2_relay", "sigma2_dest", "sigma2_eve", "rho1", "rho2")


def channel_from_dict(doc):
    """Parse ``{"subchannels": [...], "budget": {"p1":.., "p2":..}}``.

    Returns ``(channel, budget)``; ``budget`` is None when absent.
    """
    if not isinstance(doc, dict):
        raise ChannelError("instance document must be a JSON object", None, "subchannels")
    subs = doc.get("subchannels")
    if not isinstance(subs, list) or not subs:
        raise ChannelError("'subchannels' must be a non-empty list", None, "subchannels")
    parsed = []
    for i, entry in enumerate(subs):
        if not isinstance(entry, dict):
            raise ChannelError(f"subchannel {i}: expected an object", i, "subchannels")
        missing = [f for f in _SUB_FIELDS if f not in entry]
        if missing:
            raise ChannelError(f"subchannel {i}: missing field {missing[0]}", i, missing[0])
        parsed.append(GaussianSubchannel(*(_finite(entry[f], f, i) for f in _SUB_FIELDS)))
    channel = validate_channel(ParallelChannel(parsed))
    budget = None
    if "budget" in doc:
        b = doc["budget"]
        if not isinstance(b, dict) or "p1" not in b or "p2" not in b:
            raise ChannelError("'budget' needs fields p1 and p2", None, "budget")
        budget = PowerBudget(_finite(b["p1"], "p1"), _finite(b["p2"], "p2"))
    return channel, budget


def channel_to_dict(channel, budget=None):
    doc = {"subchannels": [{f: getattr(s, f) for f in _SUB_FIELDS} for s in channel]}
    if budget is not None:
        doc["budget"] = {"p1": budget.p1_total, "p2": budget.p2_total}
    return doc


def load_instance(path):
    with open(path) as fh:
        return channel_from_dict(json.load(fh))


def make_channel(sigma2_relay, sigma2_dest, sigma2_eve, rho1, rho2):
    """Build a validated channel from per-field sequences (broadcast)."""
    cols = np.broadcast_arrays(*(np.atleast_1d(np.asarray(c, dtype=float))
                                 for c in (sigma2_relay, sigma2_dest, sigma2_eve, rho1, rho2)))
    return validate_channel(ParallelChannel(
        GaussianSubchannel(*(float(c[i]) for c in cols)) for i in range(cols[0].size)))
