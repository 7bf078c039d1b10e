"""Command-line front end.

Subcommands ``bounds``, ``fig3``, ``sweep``, ``oracle-check`` and
``gradcheck``. Configuration comes from an optional JSON file (``--config``)
with flags taking precedence. Exit status is 0 on success, 2 for a bad
configuration and 3 when a problem is too large for the grid oracle.
"""
from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (ChannelError, DeterministicSubchannel, Geometry, Mode,
                      ModeAssignment, PowerBudget, channel_from_dict, channel_to_dict)
from .fading import SCHEMES, FadingScenario, format_sweep_csv, sweep_relay_position
from .optim import (OBJECTIVES, KinkProximityError, OracleSizeError, SolverOptions,
                    detect_deaf_capacity, finite_diff_check, grid_oracle,
                    maximize_deaf, maximize_lower, maximize_upper)
from .rates import deterministic_across, deterministic_separate

EXIT_OK, EXIT_CONFIG, EXIT_SIZE = 0, 2, 3

FIG3_SUBCHANNELS = (DeterministicSubchannel(4.0, 3.0, 2.0),
                    DeterministicSubchannel(5.0, 7.0, 3.0))

SWEEP_DEFAULTS = {"seed": 42, "n_states": 16, "n_batches": 1, "d_min": 0.1, "d_max": 1.9,
                  "d_step": 0.1, "schemes": list(SCHEMES), "budget": {"p1": 64.0, "p2": 64.0},
                  "noise": [1.0, 1.0, 1.0], "gamma": 2.0, "min_distance": 0.05}


class ConfigError(Exception):
    pass


def version_string():
    """``git describe`` of the source tree, or the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5, check=True)
        desc = out.stdout.strip()
        if desc:
            return f"{__version__}+g{desc}" if not desc[0].isdigit() else desc
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def load_config(path):
    """Read a JSON config; a sweep sidecar is accepted and unwrapped."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in doc and "command" in doc:
        doc = doc["config"]
    return doc


def _solver(cfg):
    return SolverOptions.from_dict(cfg.get("solver"))


def _channel(cfg):
    channel, budget = channel_from_dict(cfg)
    if budget is None:
        raise ConfigError("config needs a budget {p1, p2}")
    return channel, budget


def _modes(cfg, n):
    raw = cfg.get("modes")
    if raw is None:
        return ModeAssignment.all(Mode.NF, n)
    if not isinstance(raw, list) or len(raw) != n:
        raise ChannelError(f"modes must be a list of {n} entries", None, "modes")
    try:
        return ModeAssignment(tuple(Mode(m) for m in raw))
    except ValueError:
        raise ChannelError("modes entries must be 'DF' or 'NF'", None, "modes") from None


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- subcommands -------------------------------------------------------------

def cmd_bounds(cfg, out=None):
    channel, budget = _channel(cfg)
    modes = _modes(cfg, len(channel))
    opts = _solver(cfg)
    lower = maximize_lower(channel, budget, modes, opts)
    upper = maximize_upper(channel, budget, opts)
    deaf_upper = maximize_deaf(channel, budget, opts)
    deaf_lower = maximize_deaf(channel, budget, opts, require_condition=True)
    cap = detect_deaf_capacity(channel, budget, opts)
    resolved = channel_to_dict(channel, budget)
    resolved["modes"] = [m.value for m in modes]
    resolved["solver"] = opts.to_dict()
    report = {"lower": lower.to_dict(), "upper": upper.to_dict(),
              "deaf": {"upper": deaf_upper.value, "lower": deaf_lower.value,
                       "capacity": cap.capacity},
              "config": resolved}
    _emit(_dump(report), out)
    return EXIT_OK


def _num(x):
    return str(int(x)) if float(x).is_integer() else format(x, ".9g")


def cmd_fig3(cfg=None, out=None):
    across = deterministic_across(FIG3_SUBCHANNELS)
    separate = deterministic_separate(FIG3_SUBCHANNELS)
    _emit(f"across={_num(across)} separate={_num(separate)}\n", out)
    return EXIT_OK


def d_grid(d_min, d_max, d_step):
    if not (d_step > 0 and math.isfinite(d_min) and math.isfinite(d_max)) or d_max < d_min:
        raise ConfigError("need d_step > 0 and d_max >= d_min")
    count = int(math.floor((d_max - d_min) / d_step + 1e-9)) + 1
    return [round(d_min + i * d_step, 12) for i in range(count)]


def resolve_sweep(cfg, args=None):
    """Merge defaults, file values and flags into one sweep config."""
    res = {k: (list(v) if isinstance(v, list) else dict(v) if isinstance(v, dict) else v)
           for k, v in SWEEP_DEFAULTS.items()}
    unknown = set(cfg) - set(res) - {"solver"}
    if unknown:
        raise ConfigError(f"unknown sweep config key {sorted(unknown)[0]}")
    res.update({k: v for k, v in cfg.items() if k != "solver"})
    if args is not None:
        for key in ("seed", "n_states", "d_min", "d_max", "d_step"):
            val = getattr(args, key, None)
            if val is not None:
                res[key] = val
        if getattr(args, "schemes", None):
            res["schemes"] = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if isinstance(res["schemes"], str):
        res["schemes"] = [s.strip() for s in res["schemes"].split(",") if s.strip()]
    bad = [s for s in res["schemes"] if s not in SCHEMES]
    if bad or not res["schemes"]:
        raise ConfigError(f"schemes must be a nonempty subset of {','.join(SCHEMES)}")
    seed = res["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    res["solver"] = _solver(cfg).to_dict()
    return res


def sweep_scenario(res):
    try:
        budget = PowerBudget(float(res["budget"]["p1"]), float(res["budget"]["p2"]))
        geo = Geometry(gamma=float(res["gamma"]), min_distance=float(res["min_distance"]))
        return FadingScenario(geometry=geo, budget=budget, n_states=res["n_states"],
                              noise=tuple(res["noise"]), seed=res["seed"],
                              n_batches=res["n_batches"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad sweep config: {exc}") from None


def cmd_sweep(cfg, out=None, args=None):
    res = resolve_sweep(cfg, args)
    scenario = sweep_scenario(res)
    ds = d_grid(float(res["d_min"]), float(res["d_max"]), float(res["d_step"]))
    rows = sweep_relay_position(scenario, ds, res["schemes"],
                                SolverOptions.from_dict(res["solver"]))
    _emit(format_sweep_csv(rows), out)
    if out is not None:
        meta = {"command": "sweep", "config": res, "seed": res["seed"],
                "n_states": res["n_states"], "solver": res["solver"],
                "version": version_string()}
        Path(str(out) + ".json").write_text(_dump(meta), encoding="utf-8", newline="\n")
    return EXIT_OK


def cmd_oracle_check(cfg, out=None):
    channel, budget = _channel(cfg)
    modes = _modes(cfg, len(channel))
    opts = _solver(cfg)
    wanted = cfg.get("objectives", list(OBJECTIVES))
    if isinstance(wanted, str):
        wanted = [wanted]
    if not set(wanted) <= set(OBJECTIVES):
        raise ChannelError(f"objectives must be drawn from {OBJECTIVES}", None, "objectives")
    report = {}
    for kind in wanted:
        oracle = grid_oracle(channel, budget, kind, opts.grid_resolution,
                             modes if kind == "lower" else None)
        if kind == "lower":
            opt = maximize_lower(channel, budget, modes, opts)
        elif kind == "upper":
            opt = maximize_upper(channel, budget, opts)
        else:
            opt = maximize_deaf(channel, budget, opts)
        report[kind] = {"optimizer": opt.value, "oracle": oracle.value,
                        "diff": opt.value - oracle.value,
                        "points": oracle.diagnostics.get("points")}
    _emit(_dump({"grid_resolution": opts.grid_resolution, "results": report}), out)
    return EXIT_OK


def random_interior_point(rng, n, budget, modes=None, margin=0.05):
    """Random allocation away from every box boundary."""
    from .channel import Allocation

    def simplex(total):
        w = rng.uniform(margin, 1.0, n)
        return total * (1.0 - margin) * w / w.sum()

    return Allocation(simplex(budget.p1_total), simplex(budget.p2_total),
                      rng.uniform(margin, 1.0 - margin, n),
                      rng.uniform(-1.0 + margin, 1.0 - margin, n))


def gradcheck(channel, budget, objective, n_points, seed=0, modes=None, max_tries=50):
    """Finite-difference errors at random interior points clear of kinks."""
    rng = np.random.default_rng(seed)
    errors = []
    tries = 0
    while len(errors) < n_points and tries < max_tries * n_points:
        tries += 1
        point = random_interior_point(rng, len(channel), budget, modes)
        try:
            errors.append(finite_diff_check(objective, channel, budget, point, modes))
        except KinkProximityError:
            continue
    return errors


def cmd_gradcheck(cfg, out=None, args=None):
    channel, budget = _channel(cfg)
    modes = _modes(cfg, len(channel))
    n_points = int(cfg.get("n_points", 100))
    seed = args.seed if args is not None and args.seed is not None else int(cfg.get("seed", 0))
    report = {}
    for kind in OBJECTIVES:
        errs = gradcheck(channel, budget, kind, n_points, seed,
                         modes if kind == "lower" else None)
        report[kind] = {"points": len(errs), "max_rel_error": max(errs) if errs else None}
    _emit(_dump(report), out)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="secrelay",
                                description="Secrecy-rate bounds for parallel relay-eavesdropper channels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("bounds", "optimize the lower, upper and jamming bounds"),
                        ("fig3", "coding across vs separately on the two-subchannel example"),
                        ("sweep", "ergodic rates against relay position"),
                        ("oracle-check", "compare the optimizer with the grid oracle"),
                        ("gradcheck", "check analytic gradients against finite differences")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--seed", type=int)
        if name == "sweep":
            sp.add_argument("--n-states", type=int)
            sp.add_argument("--d-min", type=float)
            sp.add_argument("--d-max", type=float)
            sp.add_argument("--d-step", type=float)
            sp.add_argument("--schemes", help="comma separated subset of " + ",".join(SCHEMES))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command in ("bounds", "oracle-check") and args.seed is not None:
            cfg = {**cfg, "solver": {**(cfg.get("solver") or {}), "seed": args.seed}}
        if args.command == "bounds":
            return cmd_bounds(cfg, args.out)
        if args.command == "fig3":
            return cmd_fig3(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args)
        if args.command == "oracle-check":
            return cmd_oracle_check(cfg, args.out)
        return cmd_gradcheck(cfg, args.out, args)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"secrelay: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleSizeError as exc:
        print(f"secrelay: {exc}", file=sys.stderr)
        return EXIT_SIZE


if __name__ == "__main__":
    sys.exit(main())
