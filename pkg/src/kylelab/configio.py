"""Experiment configuration files, manifest hashing, and run directories.

Configs are JSON with sections ``game``, ``ppo``, ``eval``, ``kyle``,
``exec`` and ``compare``; every field has a default, and defaults that the
experiments fix (horizon 20, 50% price cap, noise std 50, risk aversion 0.01,
terminal penalty 10, target inventory 1000, 30 evaluation episodes, 1000
training episodes) are the section defaults here. Unknown keys are rejected
with the offending section and field named.

Every run gets a directory ``<root>/<config-hash>/`` with subdirectories
``checkpoints``, ``traces``, ``reports`` and ``figures``; all emitted CSVs
carry the manifest hash in a leading comment line.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .errors import InvalidConfig
from .game import GameConfig, LobMode, PolicyParam, Variant
from .ppo import PpoConfig

ENV_OUTPUT_ROOT = "KYLELAB_RUNS"


@dataclass(frozen=True)
class EvalSettings:
    episodes: int = 30


@dataclass(frozen=True)
class KyleSettings:
    """Equilibrium-solver inputs; None defers to the game section."""

    sigma0_sq: float | None = None  # default sigma_v^2
    sigma_u_sq: float | None = None  # default per-step noise variance
    dt: float | None = None  # default tau
    N: int | None = None  # default horizon
    tol: float = 1e-10


@dataclass(frozen=True)
class ExecSettings:
    """Acquisition-solver inputs; the impact path comes from the equilibrium
    solve unless explicit lambdas are given."""

    lambdas: tuple | None = None
    phi: float | None = None  # default game.risk_aversion
    alpha: float | None = None  # default game.mean_reversion
    Q: float | None = None  # default game.target_inventory
    lambda_rescale: float = 1.0


@dataclass(frozen=True)
class CompareSettings:
    episodes: int = 30
    ppo_single_episodes: int = 500
    lambda_rescale: float = 1.0


@dataclass(frozen=True)
class Experiment:
    game: GameConfig
    ppo: PpoConfig
    eval: EvalSettings
    kyle: KyleSettings
    exec: ExecSettings
    compare: CompareSettings

    def kyle_inputs(self) -> tuple[float, float, float, int, float]:
        k = self.kyle
        return (
            k.sigma0_sq if k.sigma0_sq is not None else self.game.sigma_v**2,
            k.sigma_u_sq if k.sigma_u_sq is not None else self.game.sigma_u_step**2,
            k.dt if k.dt is not None else self.game.tau,
            k.N if k.N is not None else self.game.horizon,
            k.tol,
        )

    def to_dict(self) -> dict:
        out = {}
        for section in ("game", "ppo", "eval", "kyle", "exec", "compare"):
            d = dataclasses.asdict(getattr(self, section))
            for key, val in d.items():
                if isinstance(val, (Variant, LobMode, PolicyParam)):
                    d[key] = val.value
                elif isinstance(val, tuple):
                    d[key] = list(val)
            out[section] = d
        return out


_ENUM_FIELDS = {"variant": Variant, "lob_mode": LobMode, "policy_param": PolicyParam}
_LOB_ALIASES = {0: "otc", 1: "exchange", "0": "otc", "1": "exchange"}


def _coerce_scalar(name: str, key: str, value, default):
    """Match a JSON value against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidConfig(f"{name}.{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfig(f"{name}.{key}: expected an integer, got {value!r}")
        if float(value) != int(value):
            raise InvalidConfig(f"{name}.{key}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfig(f"{name}.{key}: expected a number, got {value!r}")
        return float(value)
    return value


def _build_section(name: str, cls, data: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise InvalidConfig(f"{name}.{key}: unknown field (known: {sorted(fields)})")
        if key == "lob_mode" and value in _LOB_ALIASES:
            value = _LOB_ALIASES[value]
        if key in _ENUM_FIELDS:
            try:
                value = _ENUM_FIELDS[key](value)
            except ValueError as exc:
                raise InvalidConfig(
                    f"{name}.{key}: {value!r} not one of "
                    f"{[e.value for e in _ENUM_FIELDS[key]]}"
                ) from exc
        elif key in ("theta_bounds", "lambdas") and value is not None:
            if not isinstance(value, (list, tuple)):
                raise InvalidConfig(f"{name}.{key}: expected a list, got {value!r}")
            value = tuple(float(v) for v in value)
        else:
            default = fields[key].default
            if default is not dataclasses.MISSING and default is not None:
                value = _coerce_scalar(name, key, value, default)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f"section {name}: {exc}") from exc


def load_experiment(path: str | Path) -> Experiment:
    """Parse a JSON config file; errors identify the malformed field or,
    for syntax errors, the line and column."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    sections = {
        "game": GameConfig, "ppo": PpoConfig, "eval": EvalSettings,
        "kyle": KyleSettings, "exec": ExecSettings, "compare": CompareSettings,
    }
    unknown = set(data) - set(sections)
    if unknown:
        raise InvalidConfig(f"{path}: unknown sections {sorted(unknown)}")
    built = {
        name: _build_section(name, cls, data.get(name, {}))
        for name, cls in sections.items()
    }
    exp = Experiment(**built)
    exp.game.validate()
    exp.ppo.validate()
    if exp.eval.episodes < 1 or exp.compare.episodes < 1:
        raise InvalidConfig("eval.episodes and compare.episodes must be >= 1")
    return exp


def default_experiment(**game_overrides) -> Experiment:
    return Experiment(
        game=GameConfig(**game_overrides), ppo=PpoConfig(), eval=EvalSettings(),
        kyle=KyleSettings(), exec=ExecSettings(), compare=CompareSettings(),
    )


def config_hash(exp: Experiment) -> str:
    canonical = json.dumps(exp.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class RunLayout:
    root: Path
    checkpoints: Path
    traces: Path
    reports: Path
    figures: Path
    manifest_hash: str


def output_root(cli_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    return Path(os.environ.get(ENV_OUTPUT_ROOT, "runs"))


def prepare_run(exp: Experiment, out: str | None, seeds: list[int] | None = None) -> RunLayout:
    """Create the run directory tree and write its manifest."""
    h = config_hash(exp)
    root = output_root(out) / h
    layout = RunLayout(
        root=root,
        checkpoints=root / "checkpoints",
        traces=root / "traces",
        reports=root / "reports",
        figures=root / "figures",
        manifest_hash=h,
    )
    for p in (layout.checkpoints, layout.traces, layout.reports, layout.figures):
        p.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_hash": h,
        "seeds": seeds if seeds is not None else [exp.game.seed],
        "version": __version__,
        "created_unix": time.time(),
        "layout": ["checkpoints", "traces", "reports", "figures"],
        "config": exp.to_dict(),
    }
    atomic_write(root / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return layout


def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file and rename, so failures leave no partial output."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
