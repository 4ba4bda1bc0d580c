"""JSON experiment configuration.

Schema (all keys except ``problem`` and ``algorithm`` optional)::

    {
      "problem": {"example": "example1", "sigma": 1.0, "D0": [[...]]}
                 or {"A": [[...]], "B": ..., "Q": ..., "R": ..., "D0": ..., "sigma": 1.0},
      "algorithm": "ac2t" | "double-loop" | "zeroth-order",
      "params": {...},                       # see PARAM_DEFAULTS
      "init": {"K0": [[...]]} or {"scale": 0.5, "rho_max": 0.95},
      "seeds": [0, 1, ...],                  # default 0..9
      "trace_every": 1000,
      "output": "runs/example1"
    }

Any matrix may be given inline as nested row-major lists or as ``"@path"``
pointing to a text file (one row per line, whitespace or comma separated,
``#`` comments), resolved relative to the config file.
"""
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..oracle import LqrProblem
from ..problems import DEFAULT_NOISE_SCALE, EXAMPLES

ALGORITHMS = ("ac2t", "double-loop", "zeroth-order")

PARAM_DEFAULTS = {
    "ac2t": {
        "c_alpha": 0.005, "delta": 0.6, "c_beta": 0.01, "v": 0.4, "c_gamma": 0.1,
        "T": 1_000_000, "omega_radius": None, "eta_cap": None, "projection_scale": 10.0,
        "sampling": "exact", "mix_steps": 50, "on_instability": "abort",
    },
    "double-loop": {
        "inner_T": 500_000, "outer_J": 100, "c_alpha": 0.01, "eta_step": 0.05,
        "theta_radius": None, "dual_radius": None, "max_samples": None,
    },
    "zeroth-order": {
        "z": 5000, "l": 20, "r": 0.1, "eta": 0.01, "outer_J": 1000,
        "init_dist": "stationary", "rollout_sigma": 0.0, "dimension_scaled": False,
        "max_samples": None,
    },
}
_INT_PARAMS = {"T", "mix_steps", "inner_T", "outer_J", "z", "l", "max_samples"}
_CHOICES = {
    "sampling": ("exact", "mixed"),
    "on_instability": ("abort", "continue"),
    "init_dist": ("stationary", "noise"),
}
_TOP_KEYS = {"problem", "algorithm", "params", "init", "seeds", "trace_every", "output"}
_MATRIX_KEYS = ("A", "B", "Q", "R", "D0")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: LqrProblem
    algorithm: str
    params: dict
    init: dict
    seeds: tuple
    trace_every: int
    output: str
    normalized: dict
    config_hash: str


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Ctx:
    def __init__(self, text, base_dir):
        self.text = text
        self.base_dir = base_dir

    def fail(self, msg, field):
        return ConfigError(msg, field=field, line=_line_of(self.text, field.split(".")[-1]))


def read_matrix_file(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = [t for t in re.split(r"[,\s]+", line) if t]
            try:
                row = [float(t) for t in tokens]
            except ValueError as exc:
                raise ConfigError(f"{path}: bad number ({exc})", line=lineno) from None
            if rows and len(row) != len(rows[0]):
                raise ConfigError(
                    f"{path}: row has {len(row)} entries, expected {len(rows[0])}", line=lineno
                )
            rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: empty matrix file")
    return np.array(rows)


def _matrix(value, field, ctx):
    if isinstance(value, str) and value.startswith("@"):
        path = Path(value[1:])
        if not path.is_absolute():
            path = ctx.base_dir / path
        try:
            return read_matrix_file(path)
        except ConfigError as exc:
            raise ConfigError(f"{field}: {exc}", field=field, line=exc.line) from None
        except OSError as exc:
            raise ctx.fail(f"cannot read matrix file: {exc}", field) from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.array([[float(value)]])
    if not isinstance(value, list) or not value:
        raise ctx.fail("expected a nested list of numbers or '@file'", field)
    rows = [r if isinstance(r, list) else [r] for r in value]
    if any(len(r) != len(rows[0]) for r in rows):
        raise ctx.fail("ragged matrix rows", field)
    try:
        out = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise ctx.fail("matrix entries must be numbers", field) from None
    if not np.all(np.isfinite(out)):
        raise ctx.fail("matrix entries must be finite", field)
    return out


def _number(value, field, ctx, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.fail(f"expected a {'integer' if integer else 'number'}", field)
    if integer:
        if float(value) != int(value):
            raise ctx.fail("expected an integer", field)
        return int(value)
    if not np.isfinite(value):
        raise ctx.fail("expected a finite number", field)
    return float(value)


def _problem(spec, ctx):
    if not isinstance(spec, dict):
        raise ctx.fail("expected an object", "problem")
    known = {"example", "name", "sigma", *_MATRIX_KEYS}
    for key in spec:
        if key not in known:
            raise ctx.fail(f"unknown key '{key}'", f"problem.{key}")
    sigma = _number(spec.get("sigma", 1.0), "problem.sigma", ctx)
    if sigma < 0:
        raise ctx.fail("sigma must be nonnegative", "problem.sigma")
    if "example" in spec:
        name = spec["example"]
        if name not in EXAMPLES:
            raise ctx.fail(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}", "problem.example")
        extra = set(spec) & {"A", "B", "Q", "R"}
        if extra:
            raise ctx.fail("an example problem cannot override system matrices", f"problem.{sorted(extra)[0]}")
        D0 = _matrix(spec["D0"], "problem.D0", ctx) if "D0" in spec else None
        try:
            return EXAMPLES[name](sigma=sigma, D0=D0)
        except ValueError as exc:
            raise ctx.fail(str(exc), "problem.D0") from None
    missing = [k for k in ("A", "B", "Q", "R") if k not in spec]
    if missing:
        raise ctx.fail(f"missing matrix '{missing[0]}'", f"problem.{missing[0]}")
    mats = {k: _matrix(spec[k], f"problem.{k}", ctx) for k in _MATRIX_KEYS if k in spec}
    d, k = mats["B"].shape
    expected = {"A": (d, d), "B": (d, k), "Q": (d, d), "R": (k, k), "D0": (d, d)}
    for key, shape in expected.items():
        if key in mats and mats[key].shape != shape:
            raise ctx.fail(f"has shape {mats[key].shape}, expected {shape}", f"problem.{key}")
    if "D0" not in mats:
        mats["D0"] = DEFAULT_NOISE_SCALE * np.eye(d)
    try:
        return LqrProblem(sigma=sigma, name=str(spec.get("name", "custom")), **mats)
    except ValueError as exc:
        raise ctx.fail(str(exc), "problem") from None


def _params(algorithm, spec, ctx):
    if not isinstance(spec, dict):
        raise ctx.fail("expected an object", "params")
    defaults = PARAM_DEFAULTS[algorithm]
    out = {}
    for key in spec:
        if key not in defaults:
            raise ctx.fail(f"unknown parameter '{key}' for {algorithm}", f"params.{key}")
    for key, default in defaults.items():
        value = spec.get(key, default)
        field = f"params.{key}"
        if key in _CHOICES:
            if value not in _CHOICES[key]:
                raise ctx.fail(f"must be one of {_CHOICES[key]}", field)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ctx.fail("expected true or false", field)
        else:
            value = _number(value, field, ctx, integer=key in _INT_PARAMS, allow_none=default is None)
        out[key] = value
    if algorithm == "ac2t":
        if not 0.0 < out["v"] < out["delta"] < 1.0:
            raise ctx.fail("need 0 < v < delta < 1", "params.delta")
        if out["T"] < 1:
            raise ctx.fail("must be >= 1", "params.T")
    positive = [k for k in ("c_beta", "c_gamma", "inner_T", "outer_J", "z", "l", "r", "projection_scale")
                if k in out and out[k] <= 0]
    if positive:
        raise ctx.fail("must be positive", f"params.{positive[0]}")
    return out


def _init(spec, prob, ctx):
    if not isinstance(spec, dict):
        raise ctx.fail("expected an object", "init")
    for key in spec:
        if key not in ("K0", "scale", "rho_max"):
            raise ctx.fail(f"unknown key '{key}'", f"init.{key}")
    out = {
        "K0": None,
        "scale": _number(spec.get("scale", 0.5), "init.scale", ctx),
        "rho_max": _number(spec.get("rho_max", 0.95), "init.rho_max", ctx),
    }
    if not 0.0 < out["rho_max"] <= 1.0:
        raise ctx.fail("must lie in (0, 1]", "init.rho_max")
    if spec.get("K0") is not None:
        K0 = _matrix(spec["K0"], "init.K0", ctx)
        if K0.shape != (prob.k, prob.d):
            raise ctx.fail(f"has shape {K0.shape}, expected {(prob.k, prob.d)}", "init.K0")
        if not prob.is_stabilizing(K0):
            raise ctx.fail(f"K0 is not stabilizing (rho = {prob.rho(K0):.6g})", "init.K0")
        out["K0"] = K0
    return out


def _seeds(value, ctx):
    if value is None:
        return tuple(range(10))
    if not isinstance(value, list) or not value:
        raise ctx.fail("expected a nonempty list of integers", "seeds")
    seeds = []
    for s in value:
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
            raise ctx.fail(f"seed {s!r} is not a 64-bit unsigned integer", "seeds")
        seeds.append(s)
    if len(set(seeds)) != len(seeds):
        raise ctx.fail("seeds must be distinct", "seeds")
    return tuple(seeds)


def _listify(M):
    return [[float(x) for x in row] for row in np.asarray(M)]


def normalize(prob, algorithm, params, init, trace_every):
    """Fully resolved, defaults-filled view of the semantically meaningful fields."""
    return {
        "problem": {
            "A": _listify(prob.A), "B": _listify(prob.B), "Q": _listify(prob.Q),
            "R": _listify(prob.R), "D0": _listify(prob.D0), "sigma": float(prob.sigma),
        },
        "algorithm": algorithm,
        "params": dict(params),
        "init": {**init, "K0": None if init["K0"] is None else _listify(init["K0"])},
        "trace_every": int(trace_every),
    }


def config_hash(normalized):
    blob = json.dumps(normalized, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config(data, text=None, base_dir="."):
    """Validate a decoded JSON object; ``text`` (if given) is used for line numbers."""
    ctx = _Ctx(text, Path(base_dir))
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", line=1)
    for key in data:
        if key not in _TOP_KEYS:
            raise ctx.fail(f"unknown key '{key}'", key)
    if "problem" not in data:
        raise ConfigError("missing required key", field="problem")
    prob = _problem(data["problem"], ctx)
    algorithm = data.get("algorithm")
    if algorithm not in ALGORITHMS:
        if "algorithm" not in data:
            raise ConfigError("missing required key", field="algorithm")
        raise ctx.fail(f"must be one of {ALGORITHMS}", "algorithm")
    params = _params(algorithm, data.get("params", {}), ctx)
    init = _init(data.get("init", {}), prob, ctx)
    trace_every = _number(data.get("trace_every", 1000), "trace_every", ctx, integer=True)
    if trace_every < 1:
        raise ctx.fail("must be >= 1", "trace_every")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ctx.fail("expected a path string", "output")
    normalized = normalize(prob, algorithm, params, init, trace_every)
    return ExperimentConfig(
        problem=prob,
        algorithm=algorithm,
        params=params,
        init=init,
        seeds=_seeds(data.get("seeds"), ctx),
        trace_every=trace_every,
        output=output,
        normalized=normalized,
        config_hash=config_hash(normalized),
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return parse_config(data, text=text, base_dir=path.parent)
