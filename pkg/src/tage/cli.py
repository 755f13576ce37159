"""Command line: ``tage learn | gen | eval | export-dot``.

Configuration files hold one ``key = value`` per line; ``#`` starts a
comment.  Exit codes: 0 success, 1 search incomplete (or non-PASS traces
for ``eval``), 2 usage, configuration or parse errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path
from typing import Optional

from .benchmarks import BUILTIN_SUTS, PRESETS, TEST_STREAM, TRAIN_STREAM, generate_random_sut
from .rng import derive_rng
from .sim import DEFAULT_STATE_CAP, cas_weights, default_weights
from .ta import TimedAutomaton
from .traces import TraceGenConfig, TraceParseError, generate_training_set, read_traces, write_traces

EXIT_OK, EXIT_INCOMPLETE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "TAGE_SEED"


class ConfigError(ValueError):
    pass


# every key a config file may set, with its default; types follow the defaults
DEFAULTS = {
    # where the training data comes from
    "sut": "train",  # built-in name, "random:<preset>", or a path to a TA text file
    "traces": "",  # training traces file; generated from sut when empty
    "test_traces": "",
    "n_test": 2000,
    # trace generation
    "p_test": 0.15,
    "important_constants": "",  # comma separated; defaults to the SUT's constants
    "horizon": 0,  # observation window after the last input; 0 means c_max
    # evolution
    "n_pop": 2000,
    "g_max": 3000,
    "g_change": 10,
    "g_simp": 10,
    "p_cr": 0.25,
    "p_mut_init": 0.33,
    "n_sel_init": 0,  # 0 means n_pop // 10
    "n_sel_ramp": 200,
    "n_t": 10,
    "p_t": 0.5,
    "n_clock": 1,
    "c_max": 10,
    "state_cap": DEFAULT_STATE_CAP,
    "seed": 0,
    "geo_guard": 0.5,
    "geo_reset": 0.5,
    "geo_edges": 0.5,
    "time_limit": 0.0,  # wall seconds; 0 means none
    # fitness
    "weights": "default",  # or "cas"
    "w_out": 0.25,
    "k": 4,
    # run
    "workers": 0,  # 0 means all cores
    "verbose": 1,
}

PROFILES = {"default": {}, "small": {"n_pop": 500}}


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {raw!r}") from None
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        if key not in DEFAULTS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def resolve_config(
    path: Optional[str] = None,
    profile: str = "default",
    overrides: Optional[dict] = None,
    env: Optional[dict] = None,
) -> dict:
    """Defaults, then profile, config file, environment seed and command-line flags."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = dict(DEFAULTS)
    cfg.update(PROFILES[profile])
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg.update(parse_config_text(text, path))
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg["seed"] = _convert("seed", env[SEED_ENV])
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in DEFAULTS)


def weights_from(cfg: dict):
    if cfg["weights"] == "default":
        return default_weights(cfg["p_test"], cfg["w_out"], cfg["k"])
    if cfg["weights"] == "cas":
        return cas_weights(cfg["p_test"], cfg["w_out"] / 2, cfg["k"])
    raise ConfigError(f"weights: unknown profile {cfg['weights']!r}")


def evolution_config(cfg: dict):
    from .evolution import EvolutionConfig

    try:
        return EvolutionConfig(
            n_pop=cfg["n_pop"],
            g_max=cfg["g_max"],
            g_change=cfg["g_change"],
            g_simp=cfg["g_simp"],
            p_cr=cfg["p_cr"],
            p_mut_init=cfg["p_mut_init"],
            n_sel_init=cfg["n_sel_init"] or None,
            n_sel_ramp=cfg["n_sel_ramp"],
            n_t=cfg["n_t"],
            p_t=cfg["p_t"],
            n_clock=cfg["n_clock"],
            c_max=cfg["c_max"],
            state_cap=cfg["state_cap"],
            seed=cfg["seed"],
            weights=weights_from(cfg),
            geo_guard=cfg["geo_guard"],
            geo_reset=cfg["geo_reset"],
            geo_edges=cfg["geo_edges"],
            time_limit=cfg["time_limit"] or None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_sut(cfg: dict) -> TimedAutomaton:
    name = cfg["sut"]
    if name in BUILTIN_SUTS:
        return BUILTIN_SUTS[name]()
    if name.startswith("random:"):
        preset = name.split(":", 1)[1]
        if preset not in PRESETS:
            raise ConfigError(f"unknown random preset {preset!r}; choose from {', '.join(PRESETS)}")
        return generate_random_sut(PRESETS[preset], derive_rng(cfg["seed"], 99))
    return read_model(name)


def read_model(path: str) -> TimedAutomaton:
    try:
        return TimedAutomaton.from_text(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read model: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def trace_config(cfg: dict, sut: Optional[TimedAutomaton]) -> TraceGenConfig:
    if cfg["important_constants"]:
        try:
            consts = frozenset(int(x) for x in cfg["important_constants"].split(","))
        except ValueError:
            raise ConfigError("important_constants: expected comma separated integers") from None
    else:
        consts = frozenset(sut.constants()) if sut is not None else frozenset()
    try:
        return TraceGenConfig(
            p_test=cfg["p_test"],
            c_max=cfg["c_max"],
            important_constants=consts,
            horizon_after_last_input=cfg["horizon"] or None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _read_traces(path: str):
    try:
        return read_traces(path)
    except OSError as exc:
        raise ConfigError(f"cannot read traces: {exc}") from None
    except TraceParseError as exc:
        raise ConfigError(str(exc)) from None


def _set_workers(n: int):
    if n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# -- subcommands ---------------------------------------------------------------


def cmd_learn(cfg: dict, out_dir: Path) -> int:
    from .benchmarks import count_errors
    from .evolution import evolve

    ecfg = evolution_config(cfg)
    sut = None
    if cfg["traces"]:
        training = _read_traces(cfg["traces"])
    else:
        sut = load_sut(cfg)
        training = generate_training_set(sut, trace_config(cfg, sut), cfg["n_test"], cfg["seed"], TRAIN_STREAM)
    if not training:
        raise ConfigError("training set is empty")
    test = None
    if cfg["test_traces"]:
        test = _read_traces(cfg["test_traces"])
    elif sut is not None:
        test = generate_training_set(sut, trace_config(cfg, sut), cfg["n_test"], cfg["seed"], TEST_STREAM)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.txt").write_text(format_config(cfg))
    verbose = cfg["verbose"]
    with open(out_dir / "progress.jsonl", "w") as log:

        def sink(record):
            log.write(json.dumps(record) + "\n")
            log.flush()
            if verbose:
                print(
                    f"gen {record['generation']:5d}  best {record['best_global']:.3f}  "
                    f"pass {record['pass_rate']:.3f}  local {record['best_local']:.3f}  "
                    f"t_fail {record['t_fail']}",
                    file=sys.stderr,
                )

        inputs = sut.inputs if sut is not None else None
        outputs = sut.outputs if sut is not None else None
        learned, report = evolve(ecfg, training, sink, inputs=inputs, outputs=outputs)

    summary = report.deterministic_view()
    summary["wall_time"] = report.wall_time
    if test is not None:
        summary["test_errors"] = count_errors(learned, test, ecfg.weights, ecfg.state_cap)
    (out_dir / "learned.ta").write_text(learned.to_text())
    (out_dir / "learned.dot").write_text(learned.to_dot())
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(learned.to_text(), end="")
    print(
        f"generations {report.generations}, training pass {report.training_pass}/{len(training)}"
        + (f", test errors {summary['test_errors']}" if test is not None else "")
    )
    return EXIT_OK if report.converged else EXIT_INCOMPLETE


def cmd_gen(cfg: dict, out_dir: Path) -> int:
    sut = load_sut(cfg)
    tcfg = trace_config(cfg, sut)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.txt").write_text(format_config(cfg))
    (out_dir / "sut.ta").write_text(sut.to_text())
    (out_dir / "sut.dot").write_text(sut.to_dot())
    for name, stream in (("train", TRAIN_STREAM), ("test", TEST_STREAM)):
        traces = generate_training_set(sut, tcfg, cfg["n_test"], cfg["seed"], stream)
        write_traces(out_dir / f"{name}.traces", traces)
    print(f"wrote {out_dir}")
    return EXIT_OK


def cmd_eval(model_path: str, traces_path: str, state_cap: int = DEFAULT_STATE_CAP) -> int:
    from .kernel import VERDICTS, Evaluator

    ta = read_model(model_path)
    traces = _read_traces(traces_path)
    if not traces:
        raise ConfigError(f"{traces_path}: no traces")
    ev = Evaluator(traces, default_weights(), state_cap, alphabet=ta.alphabet, n_clock=ta.n_clock)
    verdicts = [VERDICTS[v] for v in ev.evaluate([ta])[0].verdicts]
    hist = Counter(verdicts)
    for v in VERDICTS:
        print(f"{v}: {hist[v]}")
    bad = [i for i, v in enumerate(verdicts) if v.value != "PASS"]
    if bad:
        print("non-PASS traces: " + " ".join(map(str, bad)))
    return EXIT_OK if not bad else EXIT_INCOMPLETE


def cmd_export_dot(model_path: str, out: Optional[str]) -> int:
    dot = read_model(model_path).to_dot()
    if out:
        Path(out).write_text(dot)
    else:
        print(dot, end="")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _parse_set(items):
    values = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or key not in DEFAULTS:
            raise ConfigError(f"--set expects key=value with a known key, got {item!r}")
        values[key] = _convert(key, raw.strip())
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tage", description="Learn timed automata from timed traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--profile", choices=sorted(PROFILES), default="default")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="evaluation threads (default: all cores)")
        p.add_argument("--out", default="tage-out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    run_options(sub.add_parser("learn", help="learn a TA from traces or from a SUT"))
    run_options(sub.add_parser("gen", help="write a SUT and training/test traces"))
    p = sub.add_parser("eval", help="simulate traces on a TA and report verdicts")
    p.add_argument("model")
    p.add_argument("traces")
    p.add_argument("--workers", type=int)
    p = sub.add_parser("export-dot", help="convert a TA text file to DOT")
    p.add_argument("model")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "eval":
            _set_workers(args.workers or 0)
            return cmd_eval(args.model, args.traces)
        if args.command == "export-dot":
            return cmd_export_dot(args.model, args.out)
        overrides = _parse_set(args.set)
        overrides.update(seed=args.seed, workers=args.workers)
        cfg = resolve_config(args.config, args.profile, overrides)
        _set_workers(cfg["workers"])
        if args.command == "learn":
            return cmd_learn(cfg, Path(args.out))
        return cmd_gen(cfg, Path(args.out))
    except ConfigError as exc:
        print(f"tage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
