"""Power allocation for the secrecy-rate bounds.

The objectives are nonconvex and nonsmooth (a minimum of two sums, and a
positive part on every summand), so maximization uses multi-start projected
gradient ascent with backtracking. Start #0 is always the uniform
allocation, which makes every result at least as good as equal power
splitting. :func:`grid_oracle` is an exhaustive lattice search used to
check the ascent on small instances, and :func:`finite_diff_check` checks
the analytic gradients against central differences of the closed forms in
:mod:`secrelay.rates`.

Internally the powers are optimized as budget fractions and the DF split
``alpha`` as ``c = sqrt(1 - alpha)``, which keeps the coherent-combining
term differentiable at ``alpha = 1``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from . import rates
from .channel import (Allocation, ChannelError, LinkGains, ModeAssignment,
                      PowerBudget, as_gains, uniform_allocation)
from .rates import BoundResult

OBJECTIVES = ("lower", "upper", "deaf")

_LN2 = math.log(2.0)
# floor on budget fractions in the sqrt(x2/x1) factors of the
# coherent-combining derivative; keeps gradients finite at zero power
_TINY = 1e-12


class OracleSizeError(RuntimeError):
    """The requested lattice has more points than the oracle will visit."""


class KinkProximityError(ValueError):
    """Finite differences would straddle a nondifferentiable point."""


@dataclass(frozen=True)
class SolverOptions:
    n_starts: int = 8
    max_iters: int = 500
    step_init: float = 0.1
    tol: float = 1e-9
    seed: int = 0
    grid_resolution: int = 21

    def __post_init__(self):
        checks = (("n_starts", self.n_starts >= 1), ("max_iters", self.max_iters >= 1),
                  ("step_init", self.step_init > 0), ("tol", self.tol > 0),
                  ("grid_resolution", self.grid_resolution >= 2))
        for name, ok in checks:
            if not ok:
                raise ChannelError(f"solver option {name} out of range", None, name)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            name = sorted(unknown)[0]
            raise ChannelError(f"unknown solver option {name}", None, name)
        types = {"n_starts": int, "max_iters": int, "seed": int, "grid_resolution": int,
                 "step_init": float, "tol": float}
        try:
            return cls(**{k: types[k](v) for k, v in doc.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ChannelError):
                raise
            raise ChannelError(f"bad solver option: {exc}", None, "solver") from None


def project_budget(raw, total):
    """Euclidean projection onto ``{x >= 0, sum(x) <= total}``.

    Feasible input is returned unchanged (as a copy).
    """
    x = np.array(raw, dtype=float)
    if total < 0:
        raise ValueError("total must be >= 0")
    if np.all(x >= 0) and x.sum() <= total:
        return x
    clipped = np.maximum(x, 0.0)
    if clipped.sum() <= total:
        return clipped
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, x.size + 1)
    # the first index always qualifies in exact arithmetic
    active = np.nonzero(u - css / k > 0)[0]
    rho = active[-1] if active.size else 0
    tau = css[rho] / (rho + 1.0)
    return np.maximum(x - tau, 0.0)


# --- objective with gradients ------------------------------------------------

def _cap_d(s, k):
    """(k * log2(1+s) / 2, derivative)."""
    return k * 0.5 * np.log2(1.0 + s), k * 0.5 / (_LN2 * (1.0 + s))


def _coherent(u, x1, v, x2, c):
    """u*x1 + v*x2 + 2c*sqrt(u*v*x1*x2) and its partials in (x1, x2, c)."""
    r = np.sqrt(u * v * x1 * x2)
    s = np.maximum(u * x1 + v * x2 + 2.0 * c * r, 0.0)
    ds1 = u + c * np.sqrt(u * v * x2 / np.maximum(x1, _TINY))
    ds2 = v + c * np.sqrt(u * v * x1 / np.maximum(x2, _TINY))
    return s, ds1, ds2, 2.0 * r


def _pos_weight(raw, leak=0.0):
    return np.where(raw > 0, 1.0, np.where(raw < 0, leak, 0.5 * (1.0 + leak)))


def _pos_sum(raw, leak=0.0):
    out = float(np.sum(np.maximum(raw, 0.0)))
    if leak:
        out += leak * float(np.sum(np.minimum(raw, 0.0)))
    return out


def _min_grad(A, gA, B, gB, eps):
    """Supergradient of min(A, B).

    Outside an ``eps`` band the active branch wins. Inside it the
    minimum-norm convex combination is used; with ``eps == 0`` that band is
    the exact tie, where the two gradients are averaged.
    """
    if A < B - eps:
        return A, gA
    if B < A - eps:
        return B, gB
    if eps == 0:
        return A, 0.5 * (gA + gB)
    diff = gA - gB
    nn = float(diff @ diff)
    lam = 0.5 if nn == 0 else min(max(-float(gB @ diff) / nn, 0.0), 1.0)
    return min(A, B), lam * gA + (1.0 - lam) * gB


class _Objective:
    """One bound as a function of x = (x1, x2, z) with x1, x2 budget fractions.

    ``z`` holds ``sqrt(1 - alpha)`` (lower bound, DF subchannels) or ``psi``
    (upper bound); it is absent for the deaf bound.
    """

    def __init__(self, kind, gains, budget, modes=None):
        if kind not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        g = gains
        self.kind = kind
        self.n = n = len(g)
        self.P1, self.P2 = float(budget.p1_total), float(budget.p2_total)
        self.k = g.rate_factor
        self.ud = g.sd * self.P1 / g.noise_dest
        self.vd = g.rd * self.P2 / g.noise_dest
        self.ue = g.se * self.P1 / g.noise_eve
        self.ve = g.re * self.P2 / g.noise_eve
        self.w = g.sr * self.P1 / g.noise_relay
        if kind == "lower":
            if modes is None or len(modes) != n:
                raise ChannelError("lower bound needs a mode assignment of matching length",
                                   None, "modes")
            self.df = modes.df_mask
            self.z_active = self.df.copy()
            self.z_lo, self.z_hi, self.z_fixed = 0.0, 1.0, 0.0
        elif kind == "upper":
            self.z_active = np.full(n, self.P1 > 0 and self.P2 > 0)
            self.z_lo, self.z_hi, self.z_fixed = -1.0, 1.0, 0.0
        else:
            self.z_active = np.zeros(n, dtype=bool)
            self.z_lo, self.z_hi, self.z_fixed = 0.0, 0.0, 0.0
        self.dim = 3 * n

    # conversions
    def split(self, x):
        n = self.n
        return x[:n], x[n:2 * n], x[2 * n:]

    def from_allocation(self, alloc, project=True):
        x1 = alloc.p1 / self.P1 if self.P1 > 0 else np.zeros(self.n)
        x2 = alloc.p2 / self.P2 if self.P2 > 0 else np.zeros(self.n)
        if self.kind == "lower":
            z = np.sqrt(np.maximum(1.0 - alloc.alpha, 0.0))
        elif self.kind == "upper":
            z = alloc.psi.copy()
        else:
            z = np.zeros(self.n)
        x = np.concatenate([x1, x2, z])
        return self.project(x) if project else x

    def to_allocation(self, x):
        x1, x2, z = self.split(x)
        n = self.n
        alpha, psi = np.ones(n), np.zeros(n)
        if self.kind == "lower":
            alpha = np.where(self.z_active, np.clip(1.0 - z * z, 0.0, 1.0), 1.0)
        elif self.kind == "upper":
            psi = np.where(self.z_active, z, 0.0)
        return Allocation(self.P1 * x1, self.P2 * x2, alpha, psi)

    def project(self, x):
        x1, x2, z = self.split(np.asarray(x, dtype=float))
        x1 = project_budget(x1, 1.0) if self.P1 > 0 else np.zeros(self.n)
        x2 = project_budget(x2, 1.0) if self.P2 > 0 else np.zeros(self.n)
        z = np.where(self.z_active, np.clip(z, self.z_lo, self.z_hi), self.z_fixed)
        return np.concatenate([x1, x2, z])

    # evaluation
    def evaluate(self, x, grad=True, eps=0.0, signature=False, leak=0.0):
        """Return the objective (and gradient / branch signature).

        ``leak`` gives negative positive-part arguments a small slope so
        that flat zero regions still have an ascent direction.
        """
        x1, x2, z = self.split(x)
        k, n = self.k, self.n
        g = np.zeros(self.dim)
        sig = []
        if self.kind == "deaf":
            cd, dd = _cap_d(self.ud * x1, k)
            jam = 1.0 + self.ve * x2
            ce, de = _cap_d(self.ue * x1 / jam, k)
            val = float(np.sum(cd - ce))
            if grad:
                g[:n] = dd * self.ud - de * self.ue / jam
                g[n:2 * n] = de * self.ue * x1 * self.ve / (jam * jam)
            return (val, g, ()) if signature else (val, g)

        if self.kind == "upper":
            D, D1, D2, Dz = _coherent(self.ud, x1, self.vd, x2, z)
            E, E1, E2, Ez = _coherent(self.ue, x1, self.ve, x2, z)
            cD, dD = _cap_d(D, k)
            cE, dE = _cap_d(E, k)
            val = float(np.sum(cD - cE))
            if grad:
                g[:n] = dD * D1 - dE * E1
                g[n:2 * n] = dD * D2 - dE * E2
                g[2 * n:] = np.where(self.z_active, dD * Dz - dE * Ez, 0.0)
            return (val, g, ()) if signature else (val, g)

        total = 0.0
        for ra, rb, ga, gb in self.terms(x, grad):
            A, B = _pos_sum(ra, leak), _pos_sum(rb, leak)
            if signature:
                sig += list(np.sign(ra)) + list(np.sign(rb)) + [np.sign(A - B)]
            if not grad:
                total += min(A, B)
                continue
            gA, gB = _pos_weight(ra, leak) @ ga, _pos_weight(rb, leak) @ gb
            part, gpart = _min_grad(A, gA, B, gB, eps * max(abs(A), abs(B)))
            total += part
            g += gpart
        return (total, g, tuple(sig)) if signature else (total, g)

    def terms(self, x, grad=True):
        """Per-group raw summands of the lower bound.

        Yields ``(ra, rb, ga, gb)`` for the DF group and then the NF group
        (nonempty groups only): the two summand vectors before the positive
        part, and their gradients as rows over x.
        """
        x1, x2, z = self.split(x)
        k, n = self.k, self.n
        df, nf = self.df, ~self.df
        out = []
        if df.any():
            idx = np.nonzero(df)[0]
            c = z[df]
            a1, a2 = x1[df], x2[df]
            D, D1, D2, Dz = _coherent(self.ud[df], a1, self.vd[df], a2, c)
            E, E1, E2, Ez = _coherent(self.ue[df], a1, self.ve[df], a2, c)
            R = (1.0 - c * c) * self.w[df] * a1
            cD, dD = _cap_d(D, k)
            cE, dE = _cap_d(E, k)
            cR, dR = _cap_d(R, k)
            ga = gb = None
            if grad:
                m = idx.size
                rows = np.arange(m)
                ga, gb = np.zeros((m, self.dim)), np.zeros((m, self.dim))
                ga[rows, idx] = dD * D1 - dE * E1
                ga[rows, n + idx] = dD * D2 - dE * E2
                ga[rows, 2 * n + idx] = dD * Dz - dE * Ez
                gb[rows, idx] = dR * (1.0 - c * c) * self.w[df] - dE * E1
                gb[rows, n + idx] = -dE * E2
                gb[rows, 2 * n + idx] = dR * (-2.0 * c) * self.w[df] * a1 - dE * Ez
            out.append((cD - cE, cR - cE, ga, gb))
        if nf.any():
            idx = np.nonzero(nf)[0]
            a1, a2 = x1[nf], x2[nf]
            ud, vd, ue, ve = self.ud[nf], self.vd[nf], self.ue[nf], self.ve[nf]
            cD, dD = _cap_d(ud * a1 + vd * a2, k)
            cE, dE = _cap_d(ue * a1 + ve * a2, k)
            cS, dS = _cap_d(ud * a1, k)
            cJ, dJ = _cap_d(ve * a2, k)
            ga = gb = None
            if grad:
                m = idx.size
                rows = np.arange(m)
                ga, gb = np.zeros((m, self.dim)), np.zeros((m, self.dim))
                ga[rows, idx] = dD * ud - dE * ue
                ga[rows, n + idx] = dD * vd - dE * ve
                gb[rows, idx] = dS * ud - dE * ue
                gb[rows, n + idx] = dJ * ve - dE * ve
            out.append((cD - cE, cS + cJ - cE, ga, gb))
        return out

    def value(self, x, leak=0.0):
        return self.evaluate(x, grad=False, leak=leak)[0]

    # deaf feasibility (internal copy of the condition)
    def condition_margin(self, x):
        x1, x2, _ = self.split(x)
        left = 0.5 * np.log2(1.0 + self.vd * x2 / (1.0 + self.ud * x1))
        right = 0.5 * np.log2(1.0 + self.ve * x2)
        return float(np.sum(left)) - float(np.sum(right))


# --- projected gradient ascent ------------------------------------------------

_ARMIJO = 1e-4
_BAND = 1e-3
_LEAK = 1e-2


def _ascend(obj, x0, opts, feasible=None, leak=0.0):
    """Projected gradient ascent from ``x0``; returns (x, value, iters, converged)."""
    x = obj.project(x0)
    f, g = obj.evaluate(x, eps=_BAND, leak=leak)
    t = opts.step_init
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        if np.max(np.abs(obj.project(x + g) - x), initial=0.0) <= opts.tol:
            converged = True
            break
        accepted = False
        while t > 1e-14:
            xn = obj.project(x + t * g)
            d = xn - x
            if not np.any(d):
                break
            if feasible is None or feasible(xn):
                fn = obj.value(xn, leak)
                if fn > f and fn >= f + _ARMIJO * float(g @ d):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            converged = True
            break
        step = np.max(np.abs(xn - x))
        x, f = xn, fn
        f, g = obj.evaluate(x, eps=_BAND, leak=leak)
        t = min(t * 2.0, 1e3)
        if step <= opts.tol:
            converged = True
            break
    return x, f, it, converged


_POLISH_TOP = 3


def _polish(obj, x0):
    """Local SQP refinement of ``x0``; returns a projected point or None.

    The lower bound is handled in epigraph form, maximize sum_j t_j with
    t_j below both summed branches of group j. The positive parts are
    frozen to the summands that are positive at ``x0``; any such subset
    sum is a lower bound on the true value, so nothing is overstated.
    """
    n, dim = obj.n, obj.dim
    bounds = [(0.0, 1.0 if obj.P1 > 0 else 0.0)] * n
    bounds += [(0.0, 1.0 if obj.P2 > 0 else 0.0)] * n
    bounds += [(obj.z_lo, obj.z_hi) if a else (obj.z_fixed, obj.z_fixed)
               for a in obj.z_active]
    e1 = np.zeros(dim)
    e1[:n] = 1.0
    e2 = np.zeros(dim)
    e2[n:2 * n] = 1.0

    if obj.kind == "lower":
        masks = [(ra > 0, rb > 0) for ra, rb, _, _ in obj.terms(x0, grad=False)]
        m = len(masks)
        t0 = [min(float(np.sum(ra[ma])), float(np.sum(rb[mb])))
              for (ra, rb, _, _), (ma, mb) in zip(obj.terms(x0, grad=False), masks)]

        def branch_cons(y):
            rows = obj.terms(y[:dim], grad=False)
            out = []
            for j, ((ra, rb, _, _), (ma, mb)) in enumerate(zip(rows, masks)):
                out += [np.sum(ra[ma]) - y[dim + j], np.sum(rb[mb]) - y[dim + j]]
            return np.array(out)

        def branch_jac(y):
            rows = obj.terms(y[:dim])
            out = np.zeros((2 * m, dim + m))
            for j, ((_, _, ga, gb), (ma, mb)) in enumerate(zip(rows, masks)):
                out[2 * j, :dim] = ga[ma].sum(axis=0)
                out[2 * j + 1, :dim] = gb[mb].sum(axis=0)
                out[2 * j:2 * j + 2, dim + j] = -1.0
            return out

        lin = np.zeros((2, dim + m))
        lin[0, :dim], lin[1, :dim] = -e1, -e2
        cons = [{"type": "ineq", "fun": branch_cons, "jac": branch_jac},
                {"type": "ineq", "fun": lambda y: np.array([1.0, 1.0]) + lin @ y,
                 "jac": lambda y: lin}]
        tb = max(1.0, abs(max(t0, default=0.0))) * 1e3
        y0 = np.concatenate([x0, t0])
        fun = lambda y: (-float(np.sum(y[dim:])),
                         np.concatenate([np.zeros(dim), -np.ones(m)]))
        bounds = bounds + [(None, tb)] * m
    else:
        cons = [{"type": "ineq", "fun": lambda y: np.array([1.0 - e1 @ y, 1.0 - e2 @ y]),
                 "jac": lambda y: -np.vstack([e1, e2])}]
        y0 = np.array(x0, dtype=float)

        def fun(y):
            f, g = obj.evaluate(y)
            return -f, -g

    try:
        # SLSQP may step a hair outside the box and clips back; that is harmless
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.filterwarnings("ignore", "Values in x were outside bounds")
            res = minimize(fun, y0, jac=True, method="SLSQP", bounds=bounds,
                           constraints=cons, options={"maxiter": 200, "ftol": 1e-12})
    except (ValueError, ArithmeticError):
        return None
    y = np.asarray(res.x, dtype=float)
    if not np.all(np.isfinite(y)):
        return None
    return obj.project(y[:dim])


def _random_start(obj, seed, k):
    """Start ``k`` depends only on (seed, k), so start sets are nested."""
    rng = np.random.default_rng([seed, k])
    n = obj.n
    x1 = rng.dirichlet(np.full(n, 0.5))
    x2 = rng.dirichlet(np.full(n, 0.5)) * rng.choice([0.0, rng.uniform(), 1.0])
    z = rng.uniform(obj.z_lo, obj.z_hi, n)
    snap = rng.uniform(size=n) < 1.0 / 3.0
    z = np.where(snap, np.where(rng.uniform(size=n) < 0.5, obj.z_lo, obj.z_hi), z)
    return obj.project(np.concatenate([x1, x2, z]))


_VERTEX_MAX_L = 4


_SLIVERS = (0.01, 0.1)


def _structured_starts(obj):
    """Relay silent, extreme correlations, and (small L) budget vertices."""
    n = obj.n
    x1 = np.full(n, 1.0 / n)
    zs = {"upper": (1.0, -1.0), "lower": (0.0, 1.0)}.get(obj.kind, (0.0,))
    out = [np.concatenate([x1, np.zeros(n), np.zeros(n)])]
    out += [np.concatenate([x1, x1, np.full(n, v)]) for v in zs if v != 0.0]
    # Relay at full power with a sliver of source power: the cross term has
    # an infinite slope at p1 = 0, so ascent from p1 = 1 never finds it.
    for frac in _SLIVERS:
        out += [np.concatenate([x1 * frac, x1, np.full(n, v)]) for v in zs if v != 0.0]
    if n <= _VERTEX_MAX_L:
        eye = np.eye(n)
        for l in range(n):
            for m in list(range(n)) + [None]:
                x2 = np.zeros(n) if m is None else eye[m]
                out += [np.concatenate([eye[l], x2, np.full(n, v)]) for v in zs]
    if obj.kind == "upper" and 1 < n <= _VERTEX_MAX_L:
        # The optimal psi is always +-1; try every sign pattern, giving the
        # anti-correlated subchannels only a sliver of source power.
        for signs in itertools.product((1.0, -1.0), repeat=n):
            z = np.array(signs)
            if np.all(z == z[0]):
                continue
            out.append(np.concatenate([x1, x1, z]))
            out.append(np.concatenate([np.where(z < 0, 0.1 * x1, x1), x1, z]))
    return [obj.project(x) for x in out]


def _run(kind, channel, budget, modes, options, starts, public_value, feasible=None,
         repair=None):
    g = as_gains(channel)
    opts = options or SolverOptions()
    obj = _Objective(kind, g, budget, modes)
    uniform = uniform_allocation(g, budget)
    xs = [obj.from_allocation(uniform)]
    xs += [obj.from_allocation(a) for a in starts]
    xs += _structured_starts(obj)
    xs += [_random_start(obj, opts.seed, k) for k in range(1, opts.n_starts)]

    candidates = []  # (public value, allocation, start index, iterations, converged)
    if feasible is None or feasible(obj.from_allocation(uniform)):
        candidates.append((public_value(uniform), uniform, 0, 0, True))
    # caller-supplied starts compete as they are, so the result never falls
    # below a known allocation
    for i, a in enumerate(starts, start=1):
        x = obj.from_allocation(a)
        if feasible is None or feasible(x):
            own = obj.to_allocation(x)
            val = public_value(own)
            if val is not None:
                candidates.append((val, own, i, 0, True))
    total_iters = 0
    finals = []
    for i, x0 in enumerate(xs):
        if repair is not None:
            x0 = repair(x0)
        x, _, it1, _ = _ascend(obj, x0, opts, feasible, leak=_LEAK)
        x, _, it2, conv = _ascend(obj, x, opts, feasible)
        iters = it1 + it2
        total_iters += iters
        alloc = obj.to_allocation(x)
        val = public_value(alloc)
        if val is not None:
            candidates.append((val, alloc, i, iters, conv))
            finals.append((val, i, x, iters, conv))
    if feasible is None:
        # ascent can stall on the kinks of min(A, B); polish the best few
        finals.sort(key=lambda r: (-r[0], r[1]))
        for val, i, x, iters, conv in finals[:_POLISH_TOP]:
            xp = _polish(obj, x)
            if xp is None:
                continue
            alloc = obj.to_allocation(xp)
            pval = public_value(alloc)
            if pval is not None and pval > val:
                candidates.append((pval, alloc, i, iters, conv))
    zero = Allocation(np.zeros(len(g)), np.zeros(len(g)))
    zval = public_value(zero)
    if zval is not None:
        candidates.append((zval, zero, len(xs), 0, True))

    best = None
    for cand in candidates:
        if best is None or cand[0] > best[0]:
            best = cand
    diagnostics = {"iterations": total_iters, "starts_tried": len(xs),
                   "best_start": best[2] if best else None,
                   "converged": best[4] if best else False}
    return best, diagnostics, uniform


def maximize_lower(channel, budget, modes, options=None, starts=()):
    """Maximize the DF/NF achievable secrecy rate over powers and alpha.

    Parameters
    ----------
    channel : ParallelChannel or LinkGains
    budget : PowerBudget
    modes : ModeAssignment
    options : SolverOptions, optional
    starts : sequence of Allocation, optional
        Extra start points, tried after the uniform allocation and before
        the random ones.

    Returns
    -------
    BoundResult
        Never below the value of the uniform allocation.
    """
    g = as_gains(channel)
    best, diag, _ = _run("lower", g, budget, modes, options, starts,
                         lambda a: rates.lower_bound_value(g, modes, a))
    return BoundResult(float(best[0]), best[1], modes, diag)


def maximize_upper(channel, budget, options=None, starts=()):
    """Maximize the upper bound over powers and source-relay correlation."""
    g = as_gains(channel)
    best, diag, _ = _run("upper", g, budget, None, options, starts,
                         lambda a: rates.upper_bound_value(g, a))
    return BoundResult(max(0.0, float(best[0])), best[1], None, diag)


def maximize_deaf(channel, budget, options=None, require_condition=False, starts=()):
    """Maximize the relay-deaf (jamming) secrecy rate.

    With ``require_condition`` only allocations under which the destination
    decodes the jamming at least as well as the eavesdropper are accepted;
    this is the achievable side. Without it the value is an upper bound.
    If nothing feasible with positive value turns up, the result is 0 with
    the uniform allocation and ``diagnostics["condition_binding"] = True``.
    """
    g = as_gains(channel)
    obj = _Objective("deaf", g, budget)
    if not require_condition:
        best, diag, _ = _run("deaf", g, budget, None, options, starts,
                             lambda a: rates.deaf_bound_value(g, a))
        diag["condition_binding"] = False
        return BoundResult(max(0.0, float(best[0])), best[1], None, diag)

    def public(a):
        if not rates.deaf_condition_holds(g, a):
            return None
        return rates.deaf_bound_value(g, a)

    def feasible(x):
        return obj.condition_margin(x) >= 0.0

    def repair(x):
        if feasible(x):
            return x
        x1, x2, z = obj.split(x)
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(np.concatenate([x1, mid * x2, z])):
                lo = mid
            else:
                hi = mid
        return np.concatenate([x1, lo * x2, z])

    best, diag, uniform = _run("deaf", g, budget, None, options, starts, public,
                               feasible, repair)
    if best is None or best[0] <= 0.0:
        diag["condition_binding"] = True
        return BoundResult(0.0, uniform, None, diag)
    diag["condition_binding"] = False
    return BoundResult(float(best[0]), best[1], None, diag)


@dataclass(frozen=True)
class DeafCapacity:
    capacity: float | None
    certificate: Allocation
    margin: float


def detect_deaf_capacity(channel, budget, options=None, tol=1e-9):
    """Secrecy capacity of the relay-deaf channel when the bounds meet.

    The jamming upper bound is maximized without the feasibility condition;
    if its maximizer nevertheless satisfies the condition (to ``tol``) the
    upper and lower bounds coincide and the value is the capacity.
    Otherwise ``capacity`` is None.
    """
    g = as_gains(channel)
    res = maximize_deaf(g, budget, options, require_condition=False)
    margin = rates.deaf_condition_margin(g, res.allocation)
    capacity = res.value if margin >= -tol else None
    return DeafCapacity(capacity, res.allocation, margin)


# --- grid oracle --------------------------------------------------------------

def _lattice(L, n):
    """All nonnegative integer L-tuples with sum <= n, in lexicographic order."""
    if L == 1:
        return np.arange(n + 1)[:, None]
    parts = [np.column_stack([np.full(len(rest), i), rest])
             for i in range(n + 1) for rest in [_lattice(L - 1, n - i)]]
    return np.concatenate(parts)


def _lattice_size(L, n):
    return math.comb(n + L, L)


def oracle_points(L, grid_resolution, kind, modes=None):
    """Number of lattice points the oracle visits for this problem size."""
    n = grid_resolution - 1
    size = _lattice_size(L, n) ** 2
    if kind == "lower" and modes is not None:
        n_df = int(np.sum(modes.df_mask))
        if n_df >= 2:
            size *= grid_resolution ** n_df
    return size


def grid_oracle(channel, budget, objective, grid_resolution=21, modes=None,
                require_condition=False, max_points=10**8):
    """Exhaustive search over a lattice of feasible allocations.

    Powers take values ``P * i / (r - 1)`` with per-node index sums at most
    ``r - 1``; ``alpha`` runs over ``k / (r - 1)`` and ``psi`` over
    ``-1 + 2k / (r - 1)``. Parameters that enter a single subchannel only
    (``psi`` always, ``alpha`` when one subchannel uses DF) are maximized
    per subchannel before the search over powers, which visits the same
    lattice.

    Raises
    ------
    OracleSizeError
        If more than ``max_points`` allocations would be visited.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    r = int(grid_resolution)
    if r < 2:
        raise ValueError("grid_resolution must be >= 2")
    g = as_gains(channel)
    L = len(g)
    n = r - 1
    points = oracle_points(L, r, objective, modes)
    if points > max_points:
        raise OracleSizeError(f"{points} lattice points exceed the limit of {max_points}")

    p1 = budget.p1_total * np.arange(r) / n
    p2 = budget.p2_total * np.arange(r) / n
    grid = np.arange(r) / n
    P1g, P2g = np.meshgrid(p1, p2, indexing="ij")

    # per-subchannel tables over (i, j); `tables` are summed, `extra` recovers z
    tables = {}
    zbest = {}
    df_multi = []
    if objective == "upper":
        psi = -1.0 + 2.0 * grid
        vals = [rates._upper_terms(g, P1g[..., None], P2g[..., None], psi, l) for l in range(L)]
        tables["u"] = [v.max(axis=-1) for v in vals]
        zbest = {l: psi[v.argmax(axis=-1)] for l, v in enumerate(vals)}
    elif objective == "deaf":
        tables["u"] = [rates._deaf_terms(g, P1g, P2g, l) for l in range(L)]
        if require_condition:
            sides = [rates._deaf_condition_sides(g, P1g, P2g, l) for l in range(L)]
            tables["left"] = [s[0] for s in sides]
            tables["right"] = [s[1] for s in sides]
    else:
        if modes is None or len(modes) != L:
            raise ChannelError("lower bound needs a mode assignment of matching length",
                               None, "modes")
        df = list(np.nonzero(modes.df_mask)[0])
        nf = list(np.nonzero(~modes.df_mask)[0])
        tables["nfa"], tables["nfb"] = [], []
        for l in nf:
            a, b = rates._nf_terms(g, P1g, P2g, l)
            tables["nfa"].append(a)
            tables["nfb"].append(b)
        if len(df) == 1:
            l = df[0]
            a, b = rates._df_terms(g, P1g[..., None], P2g[..., None], grid, l)
            m = np.minimum(a, b)
            tables["df1"] = [m.max(axis=-1)]
            zbest = {l: grid[m.argmax(axis=-1)]}
        elif len(df) >= 2:
            for l in df:
                a, b = rates._df_terms(g, P1g[..., None], P2g[..., None], grid, l)
                df_multi.append((l, a, b))

    I = _lattice(L, n) if budget.p1_total > 0 else np.zeros((1, L), dtype=int)
    J = _lattice(L, n) if budget.p2_total > 0 else np.zeros((1, L), dtype=int)

    def gather(table, l, Ic):
        return np.take(table[Ic[:, l]], J[:, l], axis=1)

    def total(name, Ic, subs):
        out = 0.0
        for table, l in zip(tables[name], subs):
            out = out + gather(table, l, Ic)
        return out

    best_val, best_at = -np.inf, None
    chunk = max(1, 2_000_000 // len(J))
    for start in range(0, len(I), chunk):
        Ic = I[start:start + chunk]
        if objective in ("upper", "deaf"):
            vals = total("u", Ic, range(L))
            if objective == "deaf" and require_condition:
                ok = total("left", Ic, range(L)) >= total("right", Ic, range(L))
                vals = np.where(ok, vals, -np.inf)
            cand = [(vals, None)]
        else:
            nfpart = 0.0
            if nf:
                nfpart = np.minimum(total("nfa", Ic, nf), total("nfb", Ic, nf))
            if len(df) == 1:
                cand = [(total("df1", Ic, df) + nfpart, None)]
            elif len(df) >= 2:
                cand = []
                for K in itertools.product(range(r), repeat=len(df)):
                    sa = sb = 0.0
                    for (l, a, b), k in zip(df_multi, K):
                        sa = sa + np.take(a[Ic[:, l], :, k], J[:, l], axis=1)
                        sb = sb + np.take(b[Ic[:, l], :, k], J[:, l], axis=1)
                    cand.append((np.minimum(sa, sb) + nfpart, K))
            else:
                cand = [(np.broadcast_to(nfpart, (len(Ic), len(J))), None)]
        for vals, K in cand:
            flat = int(np.argmax(vals))
            v = float(vals.flat[flat])
            if v > best_val:
                best_val = v
                best_at = (start + flat // len(J), flat % len(J), K)

    if best_at is None:
        alloc = uniform_allocation(g, budget)
        return BoundResult(0.0, alloc, modes, {"points": points, "feasible": False})
    i_idx, j_idx = I[best_at[0]], J[best_at[1]]
    alpha, psi = np.ones(L), np.zeros(L)
    if objective == "upper":
        psi = np.array([zbest[l][i_idx[l], j_idx[l]] for l in range(L)])
    elif objective == "lower":
        for l, z in zbest.items():
            alpha[l] = z[i_idx[l], j_idx[l]]
        if best_at[2] is not None:
            for (l, _, _), k in zip(df_multi, best_at[2]):
                alpha[l] = grid[k]
    alloc = Allocation(p1[i_idx], p2[j_idx], alpha, psi)
    if objective == "lower":
        value = rates.lower_bound_value(g, modes, alloc)
    elif objective == "upper":
        value = max(0.0, rates.upper_bound_value(g, alloc))
    else:
        value = rates.deaf_bound_value(g, alloc)
        if not require_condition:
            value = max(0.0, value)
    return BoundResult(value, alloc, modes, {"points": points, "feasible": True})


# --- gradient checks ----------------------------------------------------------

def objective_gradient(objective, channel, budget, point, modes=None):
    """Value and gradient of a bound in allocation coordinates.

    Returns ``(value, grad)`` where ``grad`` is a dict with keys ``p1``,
    ``p2`` and ``alpha`` (lower bound) or ``psi`` (upper bound). The value
    is the raw formula: no clamping at zero.
    """
    g = as_gains(channel)
    obj = _Objective(objective, g, budget, modes)
    x = obj.from_allocation(point, project=False)
    val, grad = obj.evaluate(x)
    gx1, gx2, gz = obj.split(grad)
    out = {"p1": gx1 / obj.P1 if obj.P1 > 0 else np.zeros(obj.n),
           "p2": gx2 / obj.P2 if obj.P2 > 0 else np.zeros(obj.n)}
    if objective == "lower":
        c = np.sqrt(np.maximum(1.0 - point.alpha, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            out["alpha"] = np.where(obj.z_active, gz * (-0.5 / c), 0.0)
    elif objective == "upper":
        out["psi"] = gz
    return val, out


def _raw_value(objective, g, modes, alloc):
    if objective == "lower":
        return rates.lower_bound_value(g, modes, alloc)
    if objective == "upper":
        return rates.upper_bound_value(g, alloc)
    return rates.deaf_bound_value(g, alloc)


def finite_diff_check(objective, channel, budget, point, modes=None,
                      steps=(1e-4, 1e-5), margin=1e-3):
    """Largest discrepancy between analytic and finite-difference gradients.

    Central differences of the closed-form rate at two step sizes are
    combined by Richardson extrapolation. Power steps are relative to the
    node's total budget. The discrepancy is measured against the largest
    finite-difference component, so it is scale free.

    Raises
    ------
    KinkProximityError
        If the point is within ``margin`` of a box boundary, or any
        positive part or minimum switches branch inside the stencil.
    """
    g = as_gains(channel)
    obj = _Objective(objective, g, budget, modes)
    L = len(g)
    coords = [("p1", l, budget.p1_total) for l in range(L)] + \
             [("p2", l, budget.p2_total) for l in range(L)]
    if objective == "lower":
        coords += [("alpha", l, 1.0) for l in range(L) if modes.df_mask[l]]
    elif objective == "upper":
        coords += [("psi", l, 1.0) for l in range(L)]
    for name, l, scale in coords:
        if scale <= 0:
            raise KinkProximityError(f"{name} has an empty budget")
        v = getattr(point, name)[l]
        lo, hi = {"p1": (0.0, np.inf), "p2": (0.0, np.inf), "alpha": (0.0, 1.0),
                  "psi": (-1.0, 1.0)}[name]
        if v - lo <= margin * scale or hi - v <= margin * scale:
            raise KinkProximityError(f"{name}[{l}] = {v!r} is too close to its bound")

    def shifted(name, l, delta):
        arrays = {k: getattr(point, k).copy() for k in ("p1", "p2", "alpha", "psi")}
        arrays[name][l] += delta
        return Allocation(**arrays)

    base_sig = obj.evaluate(obj.from_allocation(point, project=False), grad=False,
                            signature=True)[2]
    if 0.0 in base_sig:
        raise KinkProximityError("point lies on a positive-part or minimum switch")
    fd = np.empty(len(coords))
    for c_i, (name, l, scale) in enumerate(coords):
        est = []
        for h in steps:
            delta = h * scale
            vals = []
            for sgn in (1.0, -1.0):
                a = shifted(name, l, sgn * delta)
                sig = obj.evaluate(obj.from_allocation(a, project=False), grad=False,
                                   signature=True)[2]
                if sig != base_sig:
                    raise KinkProximityError(f"branch switch within step of {name}[{l}]")
                vals.append(_raw_value(objective, g, modes, a))
            est.append((vals[0] - vals[1]) / (2.0 * delta))
        ratio = (steps[0] / steps[1]) ** 2
        fd[c_i] = (ratio * est[1] - est[0]) / (ratio - 1.0)
    _, grad = objective_gradient(objective, g, budget, point, modes)
    analytic = np.array([grad[name][l] for name, l, _ in coords])
    scale = max(float(np.max(np.abs(fd))), 1e-12)
    return float(np.max(np.abs(analytic - fd)) / scale)
