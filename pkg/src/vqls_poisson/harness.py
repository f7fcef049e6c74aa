"""Seeded, resumable experiment sweeps with CSV/JSON outputs.

Six experiment kinds cover the study families: multistart training
traces, sampled-distribution fidelity, inner-product estimator error,
operator-expectation error per decomposition, cost variation under
parameter perturbations, and gradient cosine similarity over a shots
sweep.  ``run`` validates a configuration, executes the missing sample
units, and leaves four files in the output directory::

    config.json   effective configuration (sorted keys)
    raw.csv       one row per sample record, floats at 17 significant digits
    summary.csv   long-format statistics (group, statistic, value)
    meta.json     timing and resume metadata — the only non-reproducible file

Every sample unit derives its seeds from the master seed and its own
index, so reruns are bit-identical and a killed sweep can resume: units
already present in ``raw.csv`` are skipped, the rest are appended.
Rows for a unit are written in one buffered append after the unit
finishes, which makes presence of a unit's key the completion check.
Execution is one unit at a time through a single writer; per-unit
seeding means fan-out would change nothing but wall-clock time.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .circuits import ANSATZ_FAMILIES, RHS_KINDS
from .estimation import EstimatorConfig, hadamard_test_re, mlqae_overlap, overlap_test, expval_A
from .optimize import METHODS, OptimizerConfig, run_start
from .poisson import DECOMPOSITION_METHODS, decompose
from .sim import (
    NoiseParams,
    counts_to_probs,
    derive_seed,
    sample_counts_noisy,
    statevector,
)
from .vqls import (
    COST_KINDS,
    INNER_METHODS,
    Problem,
    cosine_similarity,
    cost_gradient,
    cost_value,
    exact_cost,
    fidelity,
    make_problem,
    relative_error,
)

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "Report",
    "default_config",
    "load_config",
    "apply_overrides",
    "validate_config",
    "report_percentiles",
    "run",
]

EXPERIMENTS = (
    "train",
    "sample-fidelity",
    "innerp-error",
    "op-error",
    "cost-variation",
    "grad-similarity",
)

_TAG_THETA = 501
_TAG_EST = 502
_TAG_DIR = 503

_DEFAULT_PERCENTILES = (0, 5, 25, 50, 75, 95, 100)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"config error at {path}: {message}")
        self.path = path


def default_config(experiment: str) -> dict:
    """Full effective configuration with every key at its default."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    return {
        "experiment": experiment,
        "out": None,
        "seed": 0,
        "problem": {
            "n": 3,
            "layers": 3,
            "family": "LinearAltRYCZ",
            "rhs_kind": "hnx",
            "jump_qubit": None,
            "h": 1.0,
            "decomposition": "liu21",
        },
        "cost": {"kind": "CN", "innerp": "hadamard", "epsilon": 1e-6},
        "estimator": {"shots": None, "p1": 0.0, "p2": 0.0, "p_readout": 0.0},
        "optimizer": {
            "method": "bfgs",
            "max_evals": 1000,
            "num_starts": 1,
            "learning_rate": None,
            "perturbation": None,
            "blocking": True,
            "trust_region": True,
            "reset_interval": 9,
            "gtol": 1e-8,
        },
        "sampling": {
            "num_samples": 100,
            "percentiles": list(_DEFAULT_PERCENTILES),
            "num_bases": 50,
            "num_directions": 100,
            "step": 0.1,
            "shots_list": [100, 1000, 10000],
            "methods": None,
        },
    }


def _set_path(cfg: dict, path: str, value: Any) -> None:
    parts = path.split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(".".join(parts[: i + 1]), "unknown config key")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(path, "unknown config key")
    node[leaf] = value


def _merge(cfg: dict, overrides: Mapping, prefix: str = "") -> None:
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if key not in cfg:
            raise ConfigError(path, "unknown config key")
        if isinstance(cfg[key], dict) and isinstance(value, Mapping):
            _merge(cfg[key], value, prefix=f"{path}.")
        else:
            cfg[key] = value


def apply_overrides(cfg: dict, sets: Iterable[str]) -> dict:
    """Apply ``key.path=value`` overrides; values parse as JSON, else strings."""
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(key or item, "override must look like key.path=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(cfg, key, value)
    return cfg


def load_config(
    experiment: str,
    config_path: str | Path | None = None,
    sets: Iterable[str] = (),
    out: str | Path | None = None,
    seed: int | None = None,
) -> dict:
    """Defaults <- config file <- --set overrides <- --out/--seed flags."""
    cfg = default_config(experiment)
    if config_path is not None:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc}") from exc
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{config_path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be an object")
        if loaded.get("experiment", experiment) != experiment:
            raise ConfigError("experiment", "config file targets a different experiment")
        _merge(cfg, loaded)
    apply_overrides(cfg, sets)
    if out is not None:
        cfg["out"] = str(out)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg: Mapping) -> None:
    """Raise ConfigError (with a field path) on the first invalid entry."""
    exp = cfg.get("experiment")
    _require(exp in EXPERIMENTS, "experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    _require(_is_int(cfg.get("seed")) and cfg["seed"] >= 0, "seed", "must be a non-negative integer")

    p = cfg["problem"]
    _require(_is_int(p.get("n")) and 2 <= p["n"] <= 24, "problem.n", "must be an integer in [2, 24]")
    _require(_is_int(p.get("layers")) and p["layers"] >= 1, "problem.layers", "must be a positive integer")
    _require(p.get("family") in ANSATZ_FAMILIES, "problem.family", f"must be one of {', '.join(sorted(ANSATZ_FAMILIES))}")
    _require(p.get("rhs_kind") in RHS_KINDS, "problem.rhs_kind", f"must be one of {', '.join(RHS_KINDS)}")
    jq = p.get("jump_qubit")
    _require(jq is None or (_is_int(jq) and 0 <= jq < p["n"]), "problem.jump_qubit", "must be null or a qubit index")
    _require(isinstance(p.get("h"), (int, float)) and p["h"] > 0, "problem.h", "must be a positive number")
    _require(p.get("decomposition") in DECOMPOSITION_METHODS, "problem.decomposition", f"must be one of {', '.join(DECOMPOSITION_METHODS)}")

    c = cfg["cost"]
    _require(c.get("kind") in COST_KINDS, "cost.kind", f"must be one of {', '.join(COST_KINDS)}")
    _require(c.get("innerp") in INNER_METHODS, "cost.innerp", f"must be one of {', '.join(INNER_METHODS)}")
    _require(isinstance(c.get("epsilon"), (int, float)) and c["epsilon"] > 0, "cost.epsilon", "must be positive")

    e = cfg["estimator"]
    shots = e.get("shots")
    _require(shots is None or (_is_int(shots) and shots >= 1), "estimator.shots", "must be null or a positive integer")
    for name in ("p1", "p2", "p_readout"):
        v = e.get(name)
        _require(isinstance(v, (int, float)) and 0 <= v <= 1, f"estimator.{name}", "must be a probability in [0, 1]")
    if shots is None:
        _require(e["p1"] == e["p2"] == e["p_readout"] == 0, "estimator.shots", "noise injection requires sampled mode (set shots)")

    o = cfg["optimizer"]
    _require(o.get("method") in METHODS, "optimizer.method", f"must be one of {', '.join(METHODS)}")
    _require(_is_int(o.get("max_evals")) and o["max_evals"] >= 1, "optimizer.max_evals", "must be a positive integer")
    _require(_is_int(o.get("num_starts")) and o["num_starts"] >= 1, "optimizer.num_starts", "must be a positive integer")
    for name in ("learning_rate", "perturbation"):
        v = o.get(name)
        _require(v is None or (isinstance(v, (int, float)) and v > 0), f"optimizer.{name}", "must be null or positive")
    for name in ("blocking", "trust_region"):
        _require(isinstance(o.get(name), bool), f"optimizer.{name}", "must be true or false")
    _require(_is_int(o.get("reset_interval")) and o["reset_interval"] >= 1, "optimizer.reset_interval", "must be a positive integer")
    _require(isinstance(o.get("gtol"), (int, float)) and o["gtol"] > 0, "optimizer.gtol", "must be positive")

    s = cfg["sampling"]
    for name in ("num_samples", "num_bases", "num_directions"):
        _require(_is_int(s.get(name)) and s[name] >= 1, f"sampling.{name}", "must be a positive integer")
    pcts = s.get("percentiles")
    _require(isinstance(pcts, list) and len(pcts) > 0, "sampling.percentiles", "must be a non-empty list")
    for q in pcts:
        _require(isinstance(q, (int, float)) and 0 <= q <= 100, "sampling.percentiles", "entries must lie in [0, 100]")
    _require(isinstance(s.get("step"), (int, float)) and s["step"] > 0, "sampling.step", "must be positive")
    sl = s.get("shots_list")
    _require(isinstance(sl, list) and len(sl) > 0 and all(_is_int(v) and v >= 1 for v in sl), "sampling.shots_list", "must be a non-empty list of positive integers")
    methods = s.get("methods")
    if methods is not None:
        _require(isinstance(methods, list) and len(methods) > 0, "sampling.methods", "must be null or a non-empty list")
        allowed = INNER_METHODS if exp == "innerp-error" else DECOMPOSITION_METHODS
        for m in methods:
            _require(m in allowed, "sampling.methods", f"{m!r} is not valid for {exp}")


def report_percentiles(values: Sequence[float], percentiles: Sequence[float]) -> dict[float, float]:
    """Nearest-rank (lower) percentiles; 0 maps to the minimum, 100 to the maximum."""
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    ordered = sorted(values)
    n = len(ordered)
    out = {}
    for q in percentiles:
        if q <= 0:
            out[q] = ordered[0]
        else:
            out[q] = ordered[max(1, math.ceil(q / 100.0 * n)) - 1]
    return out


# --- output formatting -------------------------------------------------------

def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _pct_name(q: float) -> str:
    return f"p{int(q)}" if float(q).is_integer() else f"p{q:g}"


@dataclass
class _Schema:
    headers: tuple[str, ...]
    kinds: tuple[str, ...]  # per-column parse kind: "int" | "str" | "float"
    expected_rows: Callable[[Mapping], int | None]


def _methods_for(cfg: Mapping) -> list[str]:
    m = cfg["sampling"]["methods"]
    if m is not None:
        return list(m)
    if cfg["experiment"] == "innerp-error":
        return list(INNER_METHODS)
    return list(DECOMPOSITION_METHODS)


_SCHEMAS: dict[str, _Schema] = {
    "train": _Schema(
        ("run", "index", "value", "exact_value", "fidelity", "clamped"),
        ("int", "int", "float", "float", "float", "int"),
        lambda cfg: None,
    ),
    "sample-fidelity": _Schema(
        ("sample", "exact_fidelity", "sampled_fidelity", "abs_error"),
        ("int", "float", "float", "float"),
        lambda cfg: 1,
    ),
    "innerp-error": _Schema(
        ("sample", "method", "estimate", "exact", "rel_error"),
        ("int", "str", "float", "float", "float"),
        lambda cfg: len(_methods_for(cfg)),
    ),
    "op-error": _Schema(
        ("sample", "method", "estimate", "exact", "rel_error"),
        ("int", "str", "float", "float", "float"),
        lambda cfg: len(_methods_for(cfg)),
    ),
    "cost-variation": _Schema(
        ("base", "direction", "variation", "est_error"),
        ("int", "int", "float", "float"),
        lambda cfg: cfg["sampling"]["num_directions"],
    ),
    "grad-similarity": _Schema(
        ("sample", "shots", "cosine"),
        ("int", "int", "float"),
        lambda cfg: len(cfg["sampling"]["shots_list"]),
    ),
}


def _parse_row(schema: _Schema, line: str) -> tuple:
    cells = line.split(",")
    out = []
    for kind, cell in zip(schema.kinds, cells):
        if kind == "int":
            out.append(int(cell))
        elif kind == "str":
            out.append(cell)
        else:
            out.append(float(cell))
    return tuple(out)


def _load_raw(path: Path, schema: _Schema, expected: int | None) -> tuple[list[tuple], set[int]]:
    """Parse existing rows, keeping only complete units (drops a torn tail)."""
    text = path.read_text()
    lines = text.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]  # torn final line from a killed writer
    lines = [ln for ln in lines if ln][1:]  # drop header
    rows = [_parse_row(schema, ln) for ln in lines]
    by_unit: dict[int, list[tuple]] = {}
    for row in rows:
        by_unit.setdefault(row[0], []).append(row)
    if expected is not None:
        by_unit = {u: rs for u, rs in by_unit.items() if len(rs) == expected}
    kept = [r for u in sorted(by_unit) for r in by_unit[u]]
    return kept, set(by_unit)


# --- experiment bodies -------------------------------------------------------

def _problem(cfg: Mapping, decomposition: str | None = None) -> Problem:
    p = cfg["problem"]
    return make_problem(
        p["n"],
        p["layers"],
        family=p["family"],
        rhs_kind=p["rhs_kind"],
        h_mesh=float(p["h"]),
        decomposition=decomposition or p["decomposition"],
        jump_qubit=p["jump_qubit"],
    )


def _noise(cfg: Mapping) -> NoiseParams:
    e = cfg["estimator"]
    return NoiseParams(float(e["p1"]), float(e["p2"]), float(e["p_readout"]))


def _estimator(cfg: Mapping, seed: int) -> EstimatorConfig:
    return EstimatorConfig(cfg["estimator"]["shots"], seed, _noise(cfg))


def _theta(cfg: Mapping, problem: Problem, index: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(cfg["seed"], _TAG_THETA, index))
    return rng.uniform(0.0, 2.0 * math.pi, problem.ansatz.num_params)


def _unit_train(cfg: Mapping, problem: Problem, run_idx: int) -> list[tuple]:
    o = cfg["optimizer"]
    opt = OptimizerConfig(
        method=o["method"],
        max_evals=o["max_evals"],
        seed=cfg["seed"],
        learning_rate=o["learning_rate"],
        perturbation=o["perturbation"],
        blocking=o["blocking"],
        trust_region=o["trust_region"],
        reset_interval=o["reset_interval"],
        gtol=o["gtol"],
    )
    rec = run_start(
        problem,
        run_idx,
        o["num_starts"],
        opt,
        kind=cfg["cost"]["kind"],
        innerp=cfg["cost"]["innerp"],
        shots=cfg["estimator"]["shots"],
        noise=_noise(cfg),
        epsilon=cfg["cost"]["epsilon"],
    )
    return [
        (run_idx, ev.index, ev.value, ev.exact_value, ev.fidelity, int(ev.clamped))
        for ev in rec.objective.trace
    ]


def _unit_sample_fidelity(cfg: Mapping, problem: Problem, i: int) -> list[tuple]:
    theta = _theta(cfg, problem, i)
    psi = statevector(problem.ansatz, theta)
    exact_fid = fidelity(psi, problem.solution.u_state)
    target_probs = np.abs(problem.solution.u_state) ** 2
    shots = cfg["estimator"]["shots"]
    if shots is None:
        probs = np.abs(psi) ** 2
    else:
        counts = sample_counts_noisy(
            problem.ansatz, shots, derive_seed(cfg["seed"], _TAG_EST, i), _noise(cfg), theta
        )
        probs = counts_to_probs(counts, problem.num_qubits)
    sampled_fid = float(np.sum(np.sqrt(probs * target_probs)) ** 2)
    return [(i, exact_fid, sampled_fid, abs(sampled_fid - exact_fid))]


def _unit_innerp_error(cfg: Mapping, problem: Problem, i: int) -> list[tuple]:
    theta = _theta(cfg, problem, i)
    psi = statevector(problem.ansatz, theta)
    f = statevector(problem.rhs)
    exact_re = float(np.real(np.vdot(f, psi)))
    exact_sq = float(abs(np.vdot(f, psi)) ** 2)
    shots = cfg["estimator"]["shots"]
    rows = []
    for j, method in enumerate(_methods_for(cfg)):
        seed = derive_seed(cfg["seed"], _TAG_EST, i, j)
        if method == "hadamard":
            est, exact = hadamard_test_re(problem.ansatz, problem.rhs, theta, _estimator(cfg, seed)), exact_re
        elif method == "overlap":
            est, exact = overlap_test(problem.ansatz, problem.rhs, theta, _estimator(cfg, seed)), exact_sq
        else:
            res = mlqae_overlap(problem.ansatz, problem.rhs, theta, shots=shots, seed=seed, noise=_noise(cfg))
            est, exact = res.a, exact_sq
        rows.append((i, method, est, exact, relative_error(est, exact)))
    return rows


def _unit_op_error(cfg: Mapping, problem: Problem, decomps: Mapping, i: int) -> list[tuple]:
    theta = _theta(cfg, problem, i)
    psi = statevector(problem.ansatz, theta)
    exact = float(np.real(np.vdot(psi, problem.matrix @ psi)))
    rows = []
    for j, method in enumerate(_methods_for(cfg)):
        est = expval_A(decomps[method], problem.ansatz, theta, _estimator(cfg, derive_seed(cfg["seed"], _TAG_EST, i, j)))
        rows.append((i, method, est, exact, relative_error(est, exact)))
    return rows


def _unit_cost_variation(cfg: Mapping, problem: Problem, b: int) -> list[tuple]:
    kind, innerp, eps = cfg["cost"]["kind"], cfg["cost"]["innerp"], cfg["cost"]["epsilon"]
    theta = _theta(cfg, problem, b)
    base_exact = exact_cost(problem, kind, theta, innerp=innerp, epsilon=eps)
    shots = cfg["estimator"]["shots"]
    if shots is None:
        est_error = 0.0
    else:
        est = cost_value(problem, kind, theta, _estimator(cfg, derive_seed(cfg["seed"], _TAG_EST, b)), innerp=innerp, epsilon=eps)
        est_error = abs(est.value - base_exact)
    rng = np.random.default_rng(derive_seed(cfg["seed"], _TAG_DIR, b))
    step = float(cfg["sampling"]["step"])
    rows = []
    for d in range(cfg["sampling"]["num_directions"]):
        delta = rng.uniform(-2.0 * math.pi, 2.0 * math.pi, theta.size)
        moved = exact_cost(problem, kind, theta + step * delta, innerp=innerp, epsilon=eps)
        rows.append((b, d, abs(base_exact - moved), est_error))
    return rows


def _unit_grad_similarity(cfg: Mapping, problem: Problem, i: int) -> list[tuple]:
    kind, innerp, eps = cfg["cost"]["kind"], cfg["cost"]["innerp"], cfg["cost"]["epsilon"]
    theta = _theta(cfg, problem, i)
    g_exact = cost_gradient(problem, kind, theta, EstimatorConfig(), innerp=innerp, epsilon=eps)
    rows = []
    for j, shots in enumerate(cfg["sampling"]["shots_list"]):
        est_cfg = EstimatorConfig(shots, derive_seed(cfg["seed"], _TAG_EST, i, j), _noise(cfg))
        g = cost_gradient(problem, kind, theta, est_cfg, innerp=innerp, epsilon=eps)
        rows.append((i, shots, cosine_similarity(g, g_exact)))
    return rows


# --- summaries (always recomputed from raw rows) -----------------------------

def _stat_rows(group: str, values: Sequence[float], percentiles: Sequence[float]) -> list[tuple[str, str, float]]:
    rows = [
        (group, "count", float(len(values))),
        (group, "mean", float(np.mean(values))),
        (group, "median", float(np.median(values))),
    ]
    pct = report_percentiles(values, percentiles)
    rows.extend((group, _pct_name(q), float(pct[q])) for q in percentiles)
    return rows


def _summarize_train(rows: list[tuple], cfg: Mapping) -> list[tuple[str, str, float]]:
    by_run: dict[int, list[tuple]] = {}
    for row in rows:
        by_run.setdefault(row[0], []).append(row)
    out = []
    best_run, best_value = None, math.inf
    final_fids = []
    for r in sorted(by_run):
        trace = sorted(by_run[r], key=lambda row: row[1])
        values = [row[2] for row in trace]
        k = int(np.argmin(values))
        out.extend(
            [
                (f"run={r}", "n_evals", float(len(trace))),
                (f"run={r}", "final_value", values[-1]),
                (f"run={r}", "final_fidelity", trace[-1][4]),
                (f"run={r}", "best_value", values[k]),
                (f"run={r}", "fidelity_at_best", trace[k][4]),
            ]
        )
        final_fids.append(trace[-1][4])
        if values[k] < best_value:
            best_run, best_value = r, values[k]
    trace = sorted(by_run[best_run], key=lambda row: row[1])
    out.extend(
        [
            ("best", "run", float(best_run)),
            ("best", "best_value", best_value),
            ("best", "final_fidelity", trace[-1][4]),
            ("overall", "max_final_fidelity", float(max(final_fids))),
        ]
    )
    return out


def _summarize_by_group(rows, cfg, key_col, val_col, label):
    pcts = cfg["sampling"]["percentiles"]
    groups: dict[Any, list[float]] = {}
    for row in rows:
        groups.setdefault(row[key_col], []).append(row[val_col])
    order = sorted(groups) if all(isinstance(g, (int, float)) for g in groups) else list(dict.fromkeys(row[key_col] for row in rows))
    out = []
    for g in order:
        out.extend(_stat_rows(f"{label}={g}", groups[g], pcts))
    return out


def _summarize(experiment: str, rows: list[tuple], cfg: Mapping) -> list[tuple[str, str, float]]:
    pcts = cfg["sampling"]["percentiles"]
    if experiment == "train":
        return _summarize_train(rows, cfg)
    if experiment == "sample-fidelity":
        return _stat_rows("overall", [r[3] for r in rows], pcts)
    if experiment in ("innerp-error", "op-error"):
        return _summarize_by_group(rows, cfg, 1, 4, "method")
    if experiment == "cost-variation":
        out = _stat_rows("variation", [r[2] for r in rows], pcts)
        per_base = {r[0]: r[3] for r in rows}
        out.extend(_stat_rows("est_error", [per_base[b] for b in sorted(per_base)], pcts))
        return out
    return _summarize_by_group(rows, cfg, 1, 2, "shots")


@dataclass
class Report:
    """What a finished run left on disk, parsed back into Python values."""

    config: dict
    raw_header: tuple[str, ...]
    raw_rows: list[tuple]
    summary: list[tuple[str, str, float]]
    meta: dict = field(default_factory=dict)
    out_dir: Path | None = None

    def summary_value(self, group: str, statistic: str) -> float:
        for g, s, v in self.summary:
            if g == group and s == statistic:
                return v
        raise KeyError(f"no summary row ({group!r}, {statistic!r})")

    @classmethod
    def load(cls, out_dir: str | Path) -> "Report":
        out = Path(out_dir)
        config = json.loads((out / "config.json").read_text())
        config["out"] = str(out)
        schema = _SCHEMAS[config["experiment"]]
        rows, _ = _load_raw(out / "raw.csv", schema, None)
        summary = []
        for line in (out / "summary.csv").read_text().splitlines()[1:]:
            g, s, v = line.split(",")
            summary.append((g, s, float(v)))
        meta = json.loads((out / "meta.json").read_text())
        return cls(config, schema.headers, rows, summary, meta, out)


def _unit_count(cfg: Mapping) -> int:
    exp = cfg["experiment"]
    if exp == "train":
        return cfg["optimizer"]["num_starts"]
    if exp == "cost-variation":
        return cfg["sampling"]["num_bases"]
    return cfg["sampling"]["num_samples"]


def run(config: Mapping) -> Report:
    """Execute (or finish) one experiment and write its output directory."""
    cfg = json.loads(json.dumps(config))  # deep copy, and proves JSON-compatibility
    validate_config(cfg)
    if cfg.get("out") is None:
        raise ConfigError("out", "an output directory is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    exp = cfg["experiment"]
    schema = _SCHEMAS[exp]
    started = datetime.now(timezone.utc)
    t0 = time.monotonic()

    # the output path is implied by the directory; leaving it out keeps
    # reports byte-identical wherever the run lands
    echo = {k: v for k, v in cfg.items() if k != "out"}
    config_path = out / "config.json"
    config_text = json.dumps(echo, indent=2, sort_keys=True) + "\n"
    raw_path = out / "raw.csv"
    resumed = False
    rows: list[tuple] = []
    done: set[int] = set()
    if raw_path.exists():
        if not config_path.exists():
            raise ConfigError("out", f"{out} has raw.csv but no config.json; refusing to resume")
        if json.loads(config_path.read_text()) != echo:
            raise ConfigError("out", f"{out} holds a run with a different config; use a fresh directory")
        rows, done = _load_raw(raw_path, schema, schema.expected_rows(cfg))
        resumed = True
        if exp == "train" and done and len(done) < _unit_count(cfg):
            # trace units have no fixed row count, so a unit interrupted
            # mid-flush is indistinguishable from a finished one; rerunning
            # the newest unit is cheap and bit-identical either way
            suspect = max(done)
            done.discard(suspect)
            rows = [row for row in rows if row[0] != suspect]
    config_path.write_text(config_text)

    if resumed and done:
        # compact the file so only complete units (and no torn tail) remain
        with raw_path.open("w") as fh:
            fh.write(",".join(schema.headers) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    total = _unit_count(cfg)
    if exp == "op-error":
        base = _problem(cfg)
        decomps = {
            m: decompose(cfg["problem"]["n"], m, float(cfg["problem"]["h"]))
            for m in _methods_for(cfg)
        }
        unit = lambda i: _unit_op_error(cfg, base, decomps, i)
    else:
        problem = _problem(cfg)
        bodies = {
            "train": _unit_train,
            "sample-fidelity": _unit_sample_fidelity,
            "innerp-error": _unit_innerp_error,
            "cost-variation": _unit_cost_variation,
            "grad-similarity": _unit_grad_similarity,
        }
        unit = lambda i, _body=bodies[exp]: _body(cfg, problem, i)

    units_run = 0
    with raw_path.open("a" if (resumed and done) else "w") as fh:
        if not (resumed and done):
            fh.write(",".join(schema.headers) + "\n")
        for i in range(total):
            if i in done:
                continue
            unit_rows = unit(i)
            fh.write("".join(",".join(_fmt(v) for v in row) + "\n" for row in unit_rows))
            fh.flush()
            rows.extend(unit_rows)
            units_run += 1

    rows.sort(key=lambda row: (row[0], row[1] if len(row) > 1 and isinstance(row[1], int) else 0))
    summary = _summarize(exp, rows, cfg)
    with (out / "summary.csv").open("w") as fh:
        fh.write("group,statistic,value\n")
        for g, s, v in summary:
            fh.write(f"{g},{s},{_fmt(float(v))}\n")

    finished = datetime.now(timezone.utc)
    meta = {
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "duration_seconds": time.monotonic() - t0,
        "resumed": resumed,
        "units_previously_complete": len(done),
        "units_run": units_run,
        "units_total": total,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return Report(cfg, schema.headers, rows, summary, meta, out)
