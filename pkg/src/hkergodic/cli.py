"""Experiment runner: JSON config in, convergence or condition report out.

Subcommands::

    hkergodic run <config.json> [--out PATH]
    hkergodic check <config.json> [--out PATH]
    hkergodic example {shift,markov,translation} [--atoms N --dim D --seed S] --out PATH

Exit codes: 0 success, 2 unreadable or malformed JSON (and bad command
lines), 3 invalid configuration, 4 numerical failure (for instance an
operator that is not a contraction when the projection oracle is needed).

Reports embed the resolved configuration.  JSON reports carry it under
``"config"``; a CSV report ``out.csv`` gets it in ``out.csv.meta.json`` so
the CSV itself keeps the fixed ``n,atom,error`` layout.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from . import ergodic, sampling
from . import sequences as seqs
from .bundle import FiberSpec, basis_vector, vector_from_json, vector_to_json, zero_vector
from .examples import EXAMPLES, markov_example, shift_example, translation_example
from .measure_space import SpaceMismatchError, make_space, uniform_space
from .operators import BundleOperator, diagonal_operator, identity_operator, operator_from_json, operator_to_json

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4

ENGINES = ("cesaro", "multi", "modulated", "subsequence", "weighted")
CHECKERS = ("modulation", "subsequence", "weight")


class ConfigError(ValueError):
    """The configuration is well-formed JSON but describes an invalid experiment."""


class ConfigParseError(Exception):
    pass


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    schema = cfg.get("schema", 1)
    if schema != 1:
        raise ConfigError(f"unsupported config schema {schema!r}")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


# -- building blocks ----------------------------------------------------------


def _example(spec: dict[str, Any]):
    """Return (operator, vector) for an ``{"example": name, ...}`` entry."""
    name = spec["example"]
    atoms = int(spec.get("atoms", 1))
    if name == "shift":
        return shift_example(atoms, int(spec.get("truncation", 8)))
    if name == "translation":
        return translation_example(atoms, int(spec.get("grid_points", 8)))
    if name == "markov":
        T, u, _ = markov_example(atoms, int(spec.get("states", 4)), int(spec.get("seed", 0)))
        return T, u
    raise ConfigError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")


def _fiber_spec(cfg: dict[str, Any], rng: np.random.Generator) -> FiberSpec | None:
    fibers = cfg.get("fibers")
    if fibers is None:
        return None
    if "random" in fibers:
        r = fibers["random"]
        fs = sampling.random_fibers(rng, int(r.get("atoms", 20)), int(r.get("min_dim", 1)), int(r.get("max_dim", 8)))
    else:
        dims = [int(d) for d in _require(fibers, "dims")]
        if "space" in cfg:
            space = make_space(_require(cfg["space"], "weights"))
        else:
            space = uniform_space(len(dims))
        fs = FiberSpec(space, dims, fibers.get("metric"))
    return fs


def _operator(spec: dict[str, Any], fs: FiberSpec | None, rng: np.random.Generator):
    """Return (operator, example vector or None)."""
    if not isinstance(spec, dict):
        raise ConfigError("an operator entry must be a JSON object")
    if "example" in spec:
        T, u = _example(spec)
        if fs is not None and fs != T.fiber_spec:
            raise ConfigError("explicit fibers disagree with the example's fibers")
        return T, u
    if "matrices" in spec:
        if fs is None:
            return operator_from_json(spec), None
        return operator_from_json({"dims": spec.get("dims", list(fs.dims)), "matrices": spec["matrices"]}, fs), None
    if fs is None:
        raise ConfigError("this operator needs a 'fibers' entry")
    if "diagonals" in spec:
        diags = [[complex(*z) if isinstance(z, list) else complex(z) for z in row] for row in spec["diagonals"]]
        return diagonal_operator(fs, diags), None
    if spec.get("identity"):
        return identity_operator(fs), None
    if "random" in spec:
        kind = spec["random"]
        if kind == "contraction":
            return BundleOperator([sampling.random_contraction_matrix(rng, d) for d in fs.dims], fs), None
        if kind == "unitary":
            return BundleOperator([sampling.random_unitary_matrix(rng, d) for d in fs.dims], fs), None
        if kind == "diagonal_unitary":
            gap = float(spec.get("gap", 0.5))
            return sampling.diagonal_unitary_bundle(fs, rng, gap, float(spec.get("fixed_prob", 0.3))), None
        raise ConfigError(f"unknown random operator kind {kind!r}")
    raise ConfigError(f"cannot build an operator from keys {sorted(spec)}")


def _vector(spec: Any, fs: FiberSpec, example_u, rng: np.random.Generator):
    if spec is None or spec == "example" or (isinstance(spec, dict) and spec.get("example")):
        if example_u is None:
            raise ConfigError("'vector' is required unless the operator comes from an example")
        return example_u
    if not isinstance(spec, dict):
        raise ConfigError("a vector entry must be a JSON object or \"example\"")
    if "fibers" in spec:
        return vector_from_json({"dims": spec.get("dims", list(fs.dims)), "fibers": spec["fibers"]}, fs)
    if "basis" in spec:
        return basis_vector(fs, int(spec["basis"]))
    if "random" in spec:
        kind = spec["random"]
        if kind == "unit":
            return sampling.random_unit_vector(fs, rng)
        if kind == "gaussian":
            return sampling.random_vector(fs, rng)
        raise ConfigError(f"unknown random vector kind {kind!r}")
    raise ConfigError(f"cannot build a vector from keys {sorted(spec)}")


def _sequence(spec: dict[str, Any]) -> seqs.SequenceSpec:
    if not isinstance(spec, dict):
        raise ConfigError("a sequence entry must be a JSON object")
    if "from_subsequence" in spec:
        k = seqs.SequenceSpec.from_json({"role": "subsequence", **spec["from_subsequence"]})
        return seqs.subsequence_to_weights(k, int(_require(spec, "horizon")))
    try:
        return seqs.SequenceSpec.from_json(spec)
    except KeyError as exc:
        raise ConfigError(f"sequence entry lacks {exc}") from exc


def _schedule(cfg: dict[str, Any], multi: bool) -> list:
    sched = _require(cfg, "schedule")
    if not isinstance(sched, list) or not sched:
        raise ConfigError("'schedule' must be a non-empty list")
    if multi:
        if not all(isinstance(ns, list) for ns in sched):
            raise ConfigError("a multi schedule is a list of step-count lists")
        return [[_as_int(n) for n in ns] for ns in sched]
    out = [_as_int(n) for n in sched]
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"schedule must be strictly increasing: {out}")
    return out


def _as_int(n) -> int:
    if isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError(f"step counts must be integers, got {n!r}")
    return n


def _output(cfg: dict[str, Any], override: str | None, base: Path) -> tuple[Path, str, dict]:
    out = dict(cfg.get("output") or {})
    if override is not None:
        out["path"] = override
    if "path" not in out:
        raise ConfigError("no output path (set output.path or pass --out)")
    path = Path(out["path"])
    if not path.is_absolute():
        path = base / path
    fmt = out.get("format") or ("csv" if path.suffix == ".csv" else "json")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output format must be csv or json, got {fmt!r}")
    out["format"] = fmt
    return path, fmt, out


def _target(spec: Any, fs: FiberSpec):
    """Return an explicit target vector, or None for the projection oracle."""
    if spec in (None, "oracle"):
        return None
    if spec == "zero":
        return zero_vector(fs)
    if isinstance(spec, dict) and "fibers" in spec:
        return vector_from_json({"dims": spec.get("dims", list(fs.dims)), "fibers": spec["fibers"]}, fs)
    raise ConfigError(f"unknown target {spec!r}")


# -- commands -----------------------------------------------------------------


def run_experiment(cfg: dict[str, Any]) -> ergodic.ConvergenceReport:
    """Build everything a run config describes and return its report."""
    engine = dict(_require(cfg, "engine"))
    kind = _require(engine, "kind")
    if kind not in ENGINES:
        raise ConfigError(f"unknown engine {kind!r}; choose from {', '.join(ENGINES)}")
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    fs = _fiber_spec(cfg, rng)
    target_spec = engine.get("target", "oracle")
    multi = kind == "multi"
    schedule = _schedule(cfg, multi)

    if multi:
        specs = _require(cfg, "operators")
        if not isinstance(specs, list) or not specs:
            raise ConfigError("'operators' must be a non-empty list")
        built = [_operator(s, fs, rng) for s in specs]
        Ts = [T for T, _ in built]
        fs = Ts[0].fiber_spec
        u = _vector(cfg.get("vector"), fs, built[0][1], rng)
        if any(len(ns) != len(Ts) for ns in schedule):
            raise ConfigError(f"every schedule entry needs {len(Ts)} step counts")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ergodic.NonCommutingWarning)
            return ergodic.multiparameter_trajectory(Ts, u, schedule, _target(target_spec, fs))

    T, example_u = _operator(_require(cfg, "operator"), fs, rng)
    fs = T.fiber_spec
    u = _vector(cfg.get("vector"), fs, example_u, rng)
    if kind == "cesaro":
        return ergodic.cesaro_trajectory(T, u, schedule, _target(target_spec, fs))
    seq = _sequence(_require(cfg, "sequence"))
    if kind == "modulated":
        return ergodic.modulated_trajectory(seq, T, u, schedule, _target(target_spec, fs))
    if kind == "subsequence":
        return ergodic.subsequence_trajectory(seq, T, u, schedule, _target(target_spec, fs))
    if target_spec == "cesaro":
        return ergodic.weighted_discrepancy(seq, T, u, schedule)
    return ergodic.weighted_trajectory(seq, T, u, schedule, _target(target_spec, fs))


def check_sequence(cfg: dict[str, Any]) -> seqs.ConditionReport:
    """Run the hypothesis checker a check config describes."""
    checker = _require(cfg, "checker")
    if checker not in CHECKERS:
        raise ConfigError(f"unknown checker {checker!r}; choose from {', '.join(CHECKERS)}")
    seq = _sequence(_require(cfg, "sequence"))
    grid = int(cfg.get("grid_size", seqs.DEFAULT_GRID_SIZE))
    n = int(cfg.get("n", seqs.DEFAULT_N))
    tol = float(cfg.get("tol", seqs.DEFAULT_TOL))
    fn = {
        "modulation": seqs.check_modulation_conditions,
        "subsequence": seqs.check_subsequence_condition,
        "weight": seqs.check_weight_condition,
    }[checker]
    return fn(seq, grid, n, tol)


def _resolved(cfg: dict[str, Any], output: dict) -> dict[str, Any]:
    echo = copy.deepcopy(cfg)
    echo["schema"] = 1
    echo["output"] = output
    if "engine" in echo:
        echo.setdefault("seed", 0)
        echo["engine"].setdefault("target", "oracle")
    if "checker" in echo:
        echo.setdefault("grid_size", seqs.DEFAULT_GRID_SIZE)
        echo.setdefault("n", seqs.DEFAULT_N)
        echo.setdefault("tol", seqs.DEFAULT_TOL)
    return echo


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_report(report, path: Path, fmt: str, echo: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        if not isinstance(report, ergodic.ConvergenceReport):
            raise ConfigError("condition reports are written as JSON only")
        path.write_text(report.to_csv())
        Path(str(path) + ".meta.json").write_text(
            _dump({"schema": 1, "target_kind": report.target_kind, "config": echo})
        )
    else:
        data = report.to_json()
        data["config"] = echo
        path.write_text(_dump(data))


def example_dump(name: str, atoms: int, dim: int, seed: int) -> dict[str, Any]:
    """Operator and vector of a named example in the JSON layout ``run`` accepts inline."""
    if name == "shift":
        T, u = shift_example(atoms, dim)
        params = {"atoms": atoms, "truncation": dim}
    elif name == "translation":
        T, u = translation_example(atoms, dim)
        params = {"atoms": atoms, "grid_points": dim}
    elif name == "markov":
        T, u, _ = markov_example(atoms, dim, seed)
        params = {"atoms": atoms, "states": dim, "seed": seed}
    else:
        raise ConfigError(f"unknown example {name!r}")
    fibers: dict[str, Any] = {"dims": list(T.fiber_spec.dims)}
    if T.fiber_spec.metric is not None:
        fibers["metric"] = [m.tolist() for m in T.fiber_spec.metric]
    return {
        "schema": 1,
        "example": name,
        "params": params,
        "fibers": fibers,
        "operator": operator_to_json(T),
        "vector": vector_to_json(u),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hkergodic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an averaging engine and write a convergence report")
    p.add_argument("config")
    p.add_argument("--out", help="override output.path")
    p = sub.add_parser("check", help="run a sequence hypothesis checker")
    p.add_argument("config")
    p.add_argument("--out", help="override output.path")
    p = sub.add_parser("example", help="dump a named example as JSON")
    p.add_argument("name", choices=EXAMPLES)
    p.add_argument("--atoms", type=int, default=1)
    p.add_argument("--dim", type=int, default=8, help="truncation, grid points or states")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _execute(args: argparse.Namespace) -> None:
    if args.command == "example":
        Path(args.out).write_text(_dump(example_dump(args.name, args.atoms, args.dim, args.seed)))
        return
    cfg = load_config(args.config)
    path, fmt, output = _output(cfg, args.out, Path(args.config).resolve().parent)
    if args.command == "run":
        report = run_experiment(cfg)
    else:
        report = check_sequence(cfg)
        if fmt == "csv":
            raise ConfigError("condition reports are written as JSON only")
    write_report(report, path, fmt, _resolved(cfg, output))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _execute(args)
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ergodic.NotAContractionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, seqs.SequenceError, SpaceMismatchError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
