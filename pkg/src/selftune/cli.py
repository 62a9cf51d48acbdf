"""Command-line entry point: ``selftune --preset {simple-example,partition,lqr50,custom}``.

Settings come from an optional JSON config file, then command-line flags
(flags win). Every run writes ``manifest.json`` holding the resolved config,
so ``selftune --config <out>/manifest.json`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SelfTuneError
from .exact_dp import backward_pieces, sample_partition
from .model import SCHEMA_VERSION, ActuatorSubset, Scenario
from .scenarios import NETWORK_FIXED_SUBSET, network_example, partition_example, switching_example
from .sim import (
    FixedArchitectureLQR,
    GreedyKnownModel,
    ModeAwareGreedy,
    _json_safe,
    compare,
    policy_from_dict,
    policy_to_dict,
)

PRESETS = ("simple-example", "partition", "lqr50", "custom")
OUT_ENV = "SELFTUNE_OUT"

DEFAULTS = {
    "preset": "simple-example",
    "seed": 0,
    "seeds": 20,
    "samples": 10000,
    "dwell": 25,
    "threads": 1,
    "out": None,
    "scenario": {},
    "policies": None,
}

# fields accepted by each preset's scenario builder
SCENARIO_KEYS = {
    "simple-example": {"dwell_a1", "horizon", "sigma", "x0_var"},
    "partition": {"horizon"},
    "lqr50": {"n", "m", "K", "edge_prob", "rho", "noise_var", "x0_var", "horizon"},
}


# -- config loading ----------------------------------------------------------


def _line_of(text, key):
    """1-based line of the first ``"key":`` in ``text`` (None when absent)."""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line and ":" in line.split(needle, 1)[1]:
            return i
    return None


def _int_field(cfg, key, text, minimum):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v!r}", _line_of(text, key))
    return v


def load_config(path) -> dict:
    """Read a JSON config (or a previous run's manifest) into a partial settings dict."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", 1)
    if "config" in data and "manifest_version" in data:
        data = data["config"]
        text = json.dumps(data, indent=2)
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]!r}", _line_of(text, unknown[0]))
    validate(data, text)
    return data


def validate(cfg, text=""):
    """Check types and ranges; raises :class:`ConfigError` anchored to ``text`` lines."""
    if "preset" in cfg and cfg["preset"] not in PRESETS:
        raise ConfigError(f"preset must be one of {list(PRESETS)}, got {cfg['preset']!r}", _line_of(text, "preset"))
    for key, lo in (("seed", 0), ("seeds", 1), ("samples", 1), ("dwell", 1), ("threads", 1)):
        if key in cfg and cfg[key] is not None:
            if key == "seeds" and isinstance(cfg[key], list):
                if not cfg[key] or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                                           for s in cfg[key]):
                    raise ConfigError("seeds list must hold non-negative integers", _line_of(text, key))
                continue
            _int_field(cfg, key, text, lo)
    if "out" in cfg and cfg["out"] is not None and not isinstance(cfg["out"], str):
        raise ConfigError("out must be a path string", _line_of(text, "out"))
    sc = cfg.get("scenario", {})
    if not isinstance(sc, dict):
        raise ConfigError("scenario must be an object", _line_of(text, "scenario"))
    preset = cfg.get("preset", DEFAULTS["preset"])
    if preset == "custom":
        if not sc:
            raise ConfigError("preset custom needs a full scenario object", _line_of(text, "scenario") or 1)
        try:
            Scenario.from_dict(sc)
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"missing scenario field {exc}" if isinstance(exc, KeyError) else str(exc)
            raise ConfigError(f"invalid scenario: {msg}", _line_of(text, "scenario")) from None
    else:
        bad = sorted(set(sc) - SCENARIO_KEYS[preset])
        if bad:
            raise ConfigError(f"scenario field {bad[0]!r} not accepted by preset {preset}", _line_of(text, bad[0]))
        for k, v in sc.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"scenario field {k!r} must be a number", _line_of(text, k))
    pols = cfg.get("policies")
    if pols is not None:
        if not isinstance(pols, list) or not pols:
            raise ConfigError("policies must be a non-empty list", _line_of(text, "policies"))
        for p in pols:
            try:
                policy_from_dict(p)
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ConfigError(f"invalid policy {p!r}: {exc}", _line_of(text, "policies")) from None


def resolve(args) -> dict:
    """Merge defaults, config file and flags (in that order of precedence, lowest first)."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for key in ("preset", "seed", "seeds", "samples", "dwell", "threads", "out"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    validate(cfg)
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV) or str(Path("runs") / cfg["preset"])
    return cfg


def seed_list(cfg):
    s = cfg["seeds"]
    return list(s) if isinstance(s, list) else list(range(cfg["seed"], cfg["seed"] + s))


# -- presets -----------------------------------------------------------------


def _policies(cfg, default):
    return [policy_from_dict(p) for p in cfg["policies"]] if cfg["policies"] else default


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def run_partition(cfg, out):
    sc = partition_example(**cfg["scenario"])
    pws = backward_pieces(sc)
    sample = sample_partition(pws, samples=cfg["samples"], seed=cfg["seed"])
    sample.write_csv(out / "partition.csv")
    counts = {str(t): {S.label: labs.count(S) for S in sorted(set(labs))} for t, labs in sample.labels.items()}
    summary = {"preset": "partition", "samples": cfg["samples"], "horizon": sc.horizon,
               "pieces": [len(p) for p in pws], "label_counts": counts}
    _write_json(out / "summary.json", summary)
    return ["partition.csv", "summary.json"]


def _write_comparison(summary, out, extra=None):
    summary.write_costs_csv(out / "costs.csv")
    summary.write_states_csv(out / "states.csv")
    _write_json(out / "summary.json", {**summary.to_dict(), **(extra or {})})
    return ["costs.csv", "states.csv", "summary.json"]


def run_simple(cfg, out):
    sc = switching_example(dwell=cfg["dwell"], **cfg["scenario"])
    pols = _policies(cfg, [ModeAwareGreedy(), FixedArchitectureLQR(ActuatorSubset((1,)))])
    summary = compare(sc, pols, seed_list(cfg), threads=cfg["threads"])
    return _write_comparison(summary, out, {"preset": "simple-example"})


def run_custom(cfg, out):
    sc = Scenario.from_dict(cfg["scenario"])
    pols = _policies(cfg, [GreedyKnownModel()])
    summary = compare(sc, pols, seed_list(cfg), threads=cfg["threads"])
    return _write_comparison(summary, out, {"preset": "custom"})


def lqr50_comparison(seeds, policies=None, threads=1, **scenario_kw):
    """One network instance per seed; the rollout uses the same seed.

    Returns the merged :class:`~selftune.sim.ComparisonSummary`; use
    ``summary.ratios(p, summary.policies[0])`` for per-seed cost ratios.
    """
    pols = policies or [GreedyKnownModel(), FixedArchitectureLQR(NETWORK_FIXED_SUBSET)]
    merged = None
    for s in seeds:
        res = compare(network_example(seed=s, **scenario_kw), pols, [s], threads=threads)
        if merged is None:
            merged = res
        else:
            merged.seeds += res.seeds
            merged.rows += res.rows
            merged.traces.update(res.traces)
    return merged


def run_lqr50(cfg, out):
    pols = _policies(cfg, None)
    summary = lqr50_comparison(seed_list(cfg), pols, cfg["threads"], **cfg["scenario"])
    first = summary.policies[0]
    ratios = {p: summary.ratios(p, first) for p in summary.policies[1:]}
    extra = {
        "preset": "lqr50",
        "ratio_vs": first,
        "ratios": ratios,
        "median_ratio": {p: float(np.median(r)) for p, r in ratios.items()},
    }
    return _write_comparison(summary, out, extra)


RUNNERS = {"partition": run_partition, "simple-example": run_simple, "lqr50": run_lqr50, "custom": run_custom}


def manifest(cfg, outputs):
    conf = {k: v for k, v in cfg.items() if k != "out"}
    if conf["policies"] is not None:
        conf["policies"] = [policy_to_dict(policy_from_dict(p)) for p in conf["policies"]]
    return {
        "manifest_version": 1,
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": conf,
        "seeds": [cfg["seed"]] if cfg["preset"] == "partition" else seed_list(cfg),
        "outputs": outputs,
    }


def run(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[cfg["preset"]](cfg, out)
    _write_json(out / "manifest.json", manifest(cfg, outputs))
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="selftune", description=__doc__.splitlines()[0])
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config", help="JSON config file or a previous manifest.json")
    p.add_argument("--seed", type=int, help="first seed (default 0)")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    p.add_argument("--samples", type=int, help="partition sample count (default 10000)")
    p.add_argument("--dwell", type=int, help="steps per visit to mode A2 in simple-example (default 25)")
    p.add_argument("--threads", type=int, help="worker threads for rollouts (default 1)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/<preset>)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        out = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SelfTuneError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
