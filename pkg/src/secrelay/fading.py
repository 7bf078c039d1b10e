"""Rayleigh-fading experiments on the relay-eavesdropper geometry.

A batch of L fading states is treated as a parallel channel with L
subchannels. Each state carries the five complex link gains; rates use the
complex-channel factor 2 and the power constraints are empirical averages
over the batch, (1/L) sum_l P_l <= P.

Sampling draws unit-variance gains once per (seed, batch) and scales them by
the path loss of the current geometry, so moving the relay reuses the same
random numbers.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import rates
from .channel import (Allocation, ChannelError, FadingDraw, GaussianSubchannel,
                      Geometry, LinkGains, Mode, ModeAssignment, ParallelChannel,
                      PowerBudget, uniform_allocation)
from .optim import SolverOptions, maximize_lower, maximize_upper
from .rates import BoundResult

#: column order of the gain array, one row per state
LINKS = ("sr", "sd", "rd", "se", "re")
_ENDS = {"sr": ("source", "relay"), "sd": ("source", "dest"), "rd": ("relay", "dest"),
         "se": ("source", "eve"), "re": ("relay", "eve")}

SCHEMES = ("DF_all", "NF_all", "hybrid_best", "no_relay", "upper")
COMPLEX_RATE_FACTOR = 2.0


@dataclass(frozen=True)
class FadingScenario:
    """Geometry, average power budget and sampling parameters.

    ``noise`` is ``(relay, destination, eavesdropper)`` noise variance.
    """
    geometry: Geometry = field(default_factory=Geometry)
    budget: PowerBudget = field(default_factory=lambda: PowerBudget(64.0, 64.0))
    n_states: int = 64
    noise: tuple = (1.0, 1.0, 1.0)
    seed: int = 0
    n_batches: int = 1

    def __post_init__(self):
        if int(self.n_states) != self.n_states or self.n_states < 1:
            raise ChannelError("n_states must be an integer >= 1", None, "n_states")
        if int(self.n_batches) != self.n_batches or self.n_batches < 1:
            raise ChannelError("n_batches must be an integer >= 1", None, "n_batches")
        noise = tuple(float(v) for v in self.noise)
        if len(noise) != 3:
            raise ChannelError("noise needs three variances", None, "noise")
        if not all(np.isfinite(v) and v > 0 for v in noise):
            raise ChannelError("noise variances must be finite and > 0", None, "noise")
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "n_states", int(self.n_states))
        object.__setattr__(self, "n_batches", int(self.n_batches))

    def with_relay_at(self, d):
        geo = replace(self.geometry, relay_pos=(float(d), 0.0))
        return replace(self, geometry=geo)


@dataclass(frozen=True)
class FadingBatch:
    """Complex gains of ``n`` fading states, shape ``(n, 5)`` in ``LINKS`` order."""
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[1] != len(LINKS) or h.shape[0] < 1:
            raise ChannelError("fading gains must have shape (n_states, 5)", None, "h")
        if not np.all(np.isfinite(h)):
            raise ChannelError("fading gains must be finite", None, "h")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def __len__(self):
        return self.h.shape[0]

    def power(self, link):
        """|h|^2 of one link for every state."""
        return np.abs(self.h[:, LINKS.index(link)]) ** 2

    @property
    def draws(self):
        return tuple(FadingDraw(**{f"h_{k}": complex(v) for k, v in zip(LINKS, row)})
                     for row in self.h)

    @classmethod
    def from_draws(cls, draws):
        return cls(np.array([[getattr(d, f"h_{k}") for k in LINKS] for d in draws]))


def path_loss(geometry):
    """Amplitude scale d**(-gamma/2) for every link, in ``LINKS`` order.

    Distances below ``geometry.min_distance`` are raised to it. With the
    default of zero, coincident nodes are an error.
    """
    out = []
    for link in LINKS:
        d = max(geometry.distance(*_ENDS[link]), geometry.min_distance)
        if d <= 0:
            raise ChannelError(f"nodes of link {link} coincide", None, link)
        out.append(d ** (-geometry.gamma / 2.0))
    return np.array(out)


def _unit_draws(seed, n_states, batch=0):
    rng = np.random.default_rng([int(seed), int(batch)])
    z = rng.standard_normal((n_states, len(LINKS), 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_fading(scenario, batch=0):
    """Draw the fading states of one batch.

    Every gain is a zero-mean unit-variance circular complex Gaussian times
    the path loss of its link. Draws depend only on ``(seed, batch)``, not
    on the geometry.
    """
    scale = path_loss(scenario.geometry)
    return FadingBatch(_unit_draws(scenario.seed, scenario.n_states, batch) * scale)


def batch_to_gains(batch, scenario):
    """Equivalent parallel channel in gain form (|h|^2 gains, rate factor 2)."""
    s1, s, s2 = scenario.noise
    n = len(batch)
    return LinkGains(sd=batch.power("sd"), rd=batch.power("rd"), se=batch.power("se"),
                     re=batch.power("re"), sr=batch.power("sr"),
                     noise_dest=np.full(n, s), noise_eve=np.full(n, s2),
                     noise_relay=np.full(n, s1), rate_factor=COMPLEX_RATE_FACTOR)


def batch_to_channel(batch, scenario):
    """Normalized real-valued parallel channel of a batch.

    Dividing each receiver's signal by its direct-link gain gives unit
    direct gains, noise ``sigma^2 / |h_direct|^2`` and
    ``rho = |h_relay|^2 / |h_direct|^2``. This channel has the real-channel
    rate convention, so its bounds are exactly half of the fading ones.
    """
    s1, s, s2 = scenario.noise
    sd, se, sr = batch.power("sd"), batch.power("se"), batch.power("sr")
    for name, arr in (("h_sd", sd), ("h_se", se), ("h_sr", sr)):
        bad = np.nonzero(arr <= 0)[0]
        if bad.size:
            raise ChannelError("direct gain is zero; cannot normalize", int(bad[0]), name)
    subs = [GaussianSubchannel(s1 / sr[i], s / sd[i], s2 / se[i],
                               batch.power("rd")[i] / sd[i], batch.power("re")[i] / se[i])
            for i in range(len(batch))]
    return ParallelChannel(subs)


def total_budget(scenario, n=None):
    """Sum-power budget equivalent to the average-power budget."""
    n = scenario.n_states if n is None else n
    return scenario.budget.scaled(n)


def select_modes_heuristic(batch):
    """NF where the direct link is at least as strong as the source-relay link."""
    nf = batch.power("sd") >= batch.power("sr")
    return ModeAssignment(tuple(Mode.NF if f else Mode.DF for f in nf))


def state_values(gains, alloc):
    """Per-state (DF min, NF min) of the lower-bound summands."""
    a, b = rates._df_terms(gains, alloc.p1, alloc.p2, alloc.alpha)
    ta, tb = rates._nf_terms(gains, alloc.p1, alloc.p2)
    return np.minimum(a, b), np.minimum(ta, tb)


def select_modes_best(batch, scenario, options=None, allocation=None):
    """Per state, the mode with the larger min-summand; ties go to DF.

    The comparison is made at ``allocation`` (uniform by default), before
    any power optimization. ``options`` is accepted for call-site symmetry
    with the other selectors and is not used.
    """
    gains = batch_to_gains(batch, scenario)
    if allocation is None:
        allocation = uniform_allocation(gains, total_budget(scenario, len(batch)))
    df, nf = state_values(gains, allocation)
    return ModeAssignment(tuple(Mode.DF if d >= f else Mode.NF for d, f in zip(df, nf)))


def _average(res, n):
    diag = dict(res.diagnostics)
    diag["sum_value"] = res.value
    return BoundResult(res.value / n, res.allocation, res.modes, diag)


def ergodic_lower(scenario, modes, options=None, relay_off=False, batch=None, starts=()):
    """Ergodic achievable secrecy rate of one batch with frozen modes.

    Powers and alpha are optimized per state under the empirical average
    power constraints. ``relay_off`` forces every relay power to zero.
    The returned allocation holds per-state powers; its mean is within the
    average budget.
    """
    batch = sample_fading(scenario) if batch is None else batch
    n = len(batch)
    gains = batch_to_gains(batch, scenario)
    budget = total_budget(scenario, n)
    if relay_off:
        budget = PowerBudget(budget.p1_total, 0.0)
        starts = [Allocation(a.p1, np.zeros(n), a.alpha, a.psi) for a in starts]
    res = maximize_lower(gains, budget, modes, options, starts)
    return _average(res, n)


def ergodic_upper(scenario, options=None, batch=None, starts=()):
    """Ergodic upper bound of one batch, optimized over powers and psi per state."""
    batch = sample_fading(scenario) if batch is None else batch
    n = len(batch)
    res = maximize_upper(batch_to_gains(batch, scenario), total_budget(scenario, n),
                         options, starts)
    return _average(res, n)


def no_relay(scenario, options=None, batch=None):
    """Parallel wiretap baseline: the relay stays silent."""
    batch = sample_fading(scenario) if batch is None else batch
    modes = ModeAssignment.all(Mode.NF, len(batch))
    return ergodic_lower(scenario, modes, options, relay_off=True, batch=batch)


def _scheme_rates(scenario, batch, schemes, options):
    """Ergodic rate of each requested scheme on one batch."""
    n = len(batch)
    out = {}
    base = no_relay(scenario, options, batch)
    starts = [base.allocation]
    cache = {}

    def lower(key, modes):
        if key not in cache:
            cache[key] = ergodic_lower(scenario, modes, options, batch=batch,
                                       starts=starts).value
        return cache[key]

    for s in schemes:
        if s == "no_relay":
            out[s] = base.value
        elif s == "DF_all":
            out[s] = lower("DF", ModeAssignment.all(Mode.DF, n))
        elif s == "NF_all":
            out[s] = lower("NF", ModeAssignment.all(Mode.NF, n))
        elif s == "hybrid_best":
            best = select_modes_best(batch, scenario, options)
            heur = select_modes_heuristic(batch)
            out[s] = max(lower("DF", ModeAssignment.all(Mode.DF, n)),
                         lower("NF", ModeAssignment.all(Mode.NF, n)),
                         lower(("modes", best.modes), best),
                         lower(("modes", heur.modes), heur))
        elif s == "upper":
            out[s] = ergodic_upper(scenario, options, batch, starts).value
        else:
            raise ValueError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
    return out


class SweepRow(NamedTuple):
    d: float
    scheme: str
    rate_bits: float


def _threads():
    raw = os.environ.get("SECRELAY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ChannelError(f"SECRELAY_THREADS must be an integer, got {raw!r}",
                           None, "SECRELAY_THREADS") from None


def sweep_relay_position(template, d_values, schemes=SCHEMES, options=None):
    """Ergodic rates with the relay at ``(d, 0)`` for every d.

    Rows come out with d ascending and schemes in request order. Rates
    are averaged over ``template.n_batches`` batches; every d sees the same
    underlying random numbers. ``SECRELAY_THREADS`` sets how many d values
    are evaluated concurrently.
    """
    ds = sorted(float(d) for d in d_values)
    if not ds:
        raise ValueError("d_values must be nonempty")
    schemes = list(schemes)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
    options = options or SolverOptions()
    unit = [_unit_draws(template.seed, template.n_states, b)
            for b in range(template.n_batches)]

    def point(d):
        scen = template.with_relay_at(d)
        scale = path_loss(scen.geometry)
        per_batch = [_scheme_rates(scen, FadingBatch(u * scale), schemes, options)
                     for u in unit]
        return [SweepRow(d, s, float(np.mean([r[s] for r in per_batch])))
                for s in schemes]

    workers = min(_threads(), len(ds))
    if workers == 1:
        chunks = [point(d) for d in ds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(point, ds))
    return [row for chunk in chunks for row in chunk]


def format_sweep_csv(rows):
    """CSV text with header ``d,scheme,rate_bits`` and LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "scheme", "rate_bits"])
    for r in rows:
        w.writerow([format(r.d, ".9g"), r.scheme, format(r.rate_bits, ".9g")])
    return buf.getvalue()


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(format_sweep_csv(rows))
