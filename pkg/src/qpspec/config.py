"""Flat ``key = value`` run configuration.

One dotted key per line, ``#`` starts a comment, blank lines are ignored::

    potential.kind = qp1d_sqrt5
    potential.E0 = 1
    method = rpm
    N = 30
    D = 20
    solver.num_eigs = 5
    outputs = out/sqrt5

Sweep files use the same syntax with ``sweep.*`` keys; ``reference.*``
keys override the base run to describe the baseline solve.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .eigensolver import METHODS, KrylovConfig
from .indicator import DEFAULT_THRESHOLD, GmresConfig
from .lattice import ProjectionMatrix
from .potential import BUILTIN_KINDS, KINDS, PotentialSpec, canonical_projection


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    samples: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([(b - a) / m for a, b, m in zip(self.lo, self.hi, self.samples)]))


@dataclass(frozen=True)
class ValidateConfig:
    half_width: Optional[float] = None
    threshold: float = DEFAULT_THRESHOLD
    n0: int = 4
    probe: str = "potential+random"
    gmres: GmresConfig = field(default_factory=GmresConfig)


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    N: int
    method: str = "pm"
    D: Optional[float] = None
    projection: Optional[ProjectionMatrix] = None  # None means canonical
    truncation_norm: str = "2"
    solver: KrylovConfig = field(default_factory=KrylovConfig)
    outputs: Path = Path("out")
    domain: Optional[Box] = None
    budget: Optional[int] = None
    validate: ValidateConfig = field(default_factory=ValidateConfig)

    @property
    def P(self) -> ProjectionMatrix:
        if self.projection is not None:
            return self.projection
        return canonical_projection(self.potential)

    def to_dict(self) -> dict[str, Any]:
        """JSON-friendly echo of the resolved configuration."""
        return {
            "potential": asdict(self.potential),
            "projection": self.P.entries.tolist(),
            "projection_source": "canonical" if self.projection is None else "explicit",
            "method": self.method,
            "N": self.N,
            "D": self.D,
            "truncation_norm": self.truncation_norm,
            "solver": {**asdict(self.solver), "subspace_dim": self.solver.M},
            "outputs": str(self.outputs),
            "domain": None if self.domain is None else asdict(self.domain),
            "budget": self.budget,
            "validate": {**asdict(self.validate)},
        }


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    axis: str
    values: tuple[float, ...]
    reference: Optional[RunConfig] = None
    count: int = 5
    condition: bool = False
    repeats: int = 1
    delta_domain: Optional[Box] = None


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value' in {source}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        out[key] = value.strip().strip('"')
    return out


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


class _Reader:
    """Typed access to a flat key map that records which keys were used."""

    def __init__(self, raw: dict[str, str], base_dir: Path):
        self.raw = raw
        self.base_dir = base_dir
        self.used: set[str] = set()

    def has(self, key):
        return key in self.raw

    def str(self, key, default=None, choices=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(key, "required")
            return default
        self.used.add(key)
        v = self.raw[key]
        if choices is not None and v not in choices:
            raise ConfigError(key, f"must be one of {', '.join(choices)}, got {v!r}")
        return v

    def float(self, key, default=None, minimum=None, strict=False):
        if key not in self.raw:
            if default is None:
                raise ConfigError(key, "required")
            return default
        self.used.add(key)
        v = _to_float(key, self.raw[key])
        if minimum is not None and (v < minimum or (strict and v == minimum)):
            raise ConfigError(key, f"must be {'>' if strict else '>='} {minimum:g}, got {v:g}")
        return v

    def int(self, key, default=None, minimum=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(key, "required")
            return default
        self.used.add(key)
        v = _to_float(key, self.raw[key])
        if v != int(v):
            raise ConfigError(key, f"must be an integer, got {self.raw[key]!r}")
        v = int(v)
        if minimum is not None and v < minimum:
            raise ConfigError(key, f"must be >= {minimum}, got {v}")
        return v

    def bool(self, key, default):
        if key not in self.raw:
            return default
        self.used.add(key)
        v = self.raw[key].lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {self.raw[key]!r}")

    def floats(self, key):
        self.used.add(key)
        return [_to_float(key, s) for s in self.raw[key].replace(";", ",").split(",") if s.strip()]

    def path(self, key, default=None):
        v = self.str(key, default)
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p


def _to_float(key, s) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, f"must be finite, got {s!r}")
    return v


def _parse_matrix(key, text) -> ProjectionMatrix:
    rows = [r for r in text.split(";") if r.strip()]
    try:
        entries = [[float(x) for x in r.split(",")] for r in rows]
        return ProjectionMatrix(np.array(entries, dtype=float))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _parse_box(r: _Reader, prefix: str, d: int) -> Optional[Box]:
    keys = [f"{prefix}.min", f"{prefix}.max", f"{prefix}.samples"]
    present = [r.has(k) for k in keys]
    if not any(present):
        return None
    if not all(present):
        missing = keys[present.index(False)]
        raise ConfigError(missing, "required when any domain key is given")

    def vec(key):
        v = r.floats(key)
        if len(v) == 1:
            v = v * d
        if len(v) != d:
            raise ConfigError(key, f"needs 1 or {d} values, got {len(v)}")
        return v

    lo, hi = vec(keys[0]), vec(keys[1])
    samples = vec(keys[2])
    if any(s != int(s) or s < 1 for s in samples):
        raise ConfigError(keys[2], "sample counts must be positive integers")
    if any(b <= a for a, b in zip(lo, hi)):
        raise ConfigError(keys[1], "every max must exceed the matching min")
    return Box(tuple(lo), tuple(hi), tuple(int(s) for s in samples))


def build_run_config(raw: dict[str, str], base_dir=".", check_unused: bool = True) -> RunConfig:
    r = _Reader(raw, Path(base_dir))
    kind = r.str("potential.kind", choices=KINDS)
    path = r.path("potential.path") if kind == "grid_file" else None
    if kind != "grid_file" and r.has("potential.path"):
        r.used.add("potential.path")
    try:
        spec = PotentialSpec(
            kind=kind,
            E0=r.float("potential.E0", 1.0, minimum=0.0),
            theta=r.float("potential.theta", math.pi / 6),
            path=None if path is None else str(path),
            c=r.float("potential.c", 0.0) if kind == "constant" else 0.0,
            offset=r.float("potential.offset", 0.0),
        )
    except (ValueError, OSError) as exc:
        raise ConfigError("potential", str(exc)) from None
    if kind == "constant" and r.has("potential.c") is False:
        raise ConfigError("potential.c", "required for kind=constant")

    source = r.str("projection", "canonical", choices=("canonical", "explicit"))
    projection = None
    if source == "explicit":
        projection = _parse_matrix("projection.matrix", r.str("projection.matrix"))
        try:
            want = spec.raised_dim
        except (OSError, ValueError) as exc:
            raise ConfigError("potential.path", str(exc)) from None
        if want is not None and want != projection.n:
            raise ConfigError("projection.matrix", f"{kind} needs n={want} columns, got {projection.n}")
    else:
        if r.has("projection.matrix"):
            raise ConfigError("projection.matrix", "given but projection is not 'explicit'")
        if kind not in BUILTIN_KINDS:
            raise ConfigError("projection", f"kind={kind} has no canonical projection; use projection = explicit")

    method = r.str("method", "pm", choices=("pm", "rpm"))
    N = r.int("N", minimum=2)
    D = None
    if method == "rpm":
        D = r.float("D", minimum=0.0, strict=True)
    elif r.has("D"):
        raise ConfigError("D", "only valid with method = rpm")
    norm = r.str("truncation_norm", "2", choices=("2", "inf"))

    try:
        solver = KrylovConfig(
            num_eigs=r.int("solver.num_eigs", 5, minimum=1),
            subspace_dim=r.int("solver.subspace_dim") if r.has("solver.subspace_dim") else None,
            tol=r.float("solver.tol", 1e-10),
            max_restarts=r.int("solver.max_restarts", 300, minimum=1),
            seed=r.int("solver.seed", 0, minimum=0),
            check_missed=r.bool("solver.check_missed", True),
            method=r.str("solver.method", "lanczos", choices=METHODS),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    P = projection if projection is not None else canonical_projection(spec)
    domain = _parse_box(r, "domain", P.d)
    hw = r.float("validate.half_width", minimum=0.0, strict=True) if r.has("validate.half_width") else None
    try:
        validate = ValidateConfig(
            half_width=hw,
            threshold=r.float("validate.threshold", DEFAULT_THRESHOLD, minimum=0.0),
            n0=r.int("validate.nodes", 4, minimum=4),
            probe=r.str("validate.probe", "potential+random", choices=("potential", "random", "potential+random")),
            gmres=GmresConfig(
                tol=r.float("gmres.tol", 1e-8),
                restart=r.int("gmres.restart", 50, minimum=1),
                max_iters=r.int("gmres.max_iters", 2000, minimum=1),
            ),
        )
    except ValueError as exc:
        raise ConfigError("gmres", str(exc)) from None
    if validate.n0 % 4:
        raise ConfigError("validate.nodes", "must be a multiple of 4")

    cfg = RunConfig(
        potential=spec,
        N=N,
        method=method,
        D=D,
        projection=projection,
        truncation_norm=norm,
        solver=solver,
        outputs=Path(r.str("outputs", "out")),
        domain=domain,
        budget=r.int("budget", minimum=1) if r.has("budget") else None,
        validate=validate,
    )
    if check_unused:
        unknown = sorted(set(raw) - r.used)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
    return cfg


_SWEEP_AXES = {"N": "N", "D": "D", "E0": "potential.E0"}


def load_run_config(path) -> RunConfig:
    raw = read_config_file(path)
    return build_run_config(raw, Path(path).parent)


def load_sweep_config(path) -> SweepConfig:
    raw = read_config_file(path)
    base_dir = Path(path).parent
    sweep = {k: v for k, v in raw.items() if k.startswith("sweep.")}
    ref = {k[len("reference."):]: v for k, v in raw.items() if k.startswith("reference.")}
    base_raw = {k: v for k, v in raw.items() if not k.startswith(("sweep.", "reference."))}
    r = _Reader(sweep, base_dir)
    axis = r.str("sweep.axis", choices=tuple(_SWEEP_AXES))
    values = r.floats("sweep.values") if r.has("sweep.values") else None
    if not values:
        raise ConfigError("sweep.values", "required and non-empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values", "must be strictly ascending")
    if axis == "N" and any(v != int(v) or v < 2 for v in values):
        raise ConfigError("sweep.values", "N values must be integers >= 2")
    base_key = _SWEEP_AXES[axis]
    # The base run must be valid at the first swept value.
    first = dict(base_raw)
    first[base_key] = repr(values[0]) if axis != "N" else str(int(values[0]))
    base = build_run_config(first, base_dir)
    if axis == "D" and base.method != "rpm":
        raise ConfigError("sweep.axis", "D sweeps need method = rpm")
    reference = None
    if ref:
        merged = {**base_raw, **ref}
        if merged.get("method") == "pm":
            merged.pop("D", None)
        reference = build_run_config(merged, base_dir)
    count = r.int("sweep.count", min(5, base.solver.num_eigs), minimum=1)
    if count > base.solver.num_eigs or (reference and count > reference.solver.num_eigs):
        raise ConfigError("sweep.count", "exceeds solver.num_eigs")
    cfg = SweepConfig(
        base=base,
        axis=axis,
        values=tuple(values),
        reference=reference,
        count=count,
        condition=r.bool("sweep.condition", False),
        repeats=r.int("sweep.repeats", 1, minimum=1),
        delta_domain=_parse_box(r, "sweep.delta", base.P.d),
    )
    unknown = sorted(set(sweep) - r.used)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    return cfg


def with_axis_value(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    """Copy of ``cfg`` with the swept parameter set to ``value``."""
    if axis == "N":
        return replace(cfg, N=int(value))
    if axis == "D":
        return replace(cfg, D=float(value))
    if axis == "E0":
        return replace(cfg, potential=replace(cfg.potential, E0=float(value)))
    raise ConfigError("sweep.axis", f"unknown axis {axis!r}")
