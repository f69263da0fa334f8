"""Experiment configuration: TOML files validated by a pydantic schema.

Seeds are derived from the top-level ``seed`` with fixed offsets unless a
section gives its own seed explicitly; see ``docs/config.md``.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Literal, Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

PRESET_DIR = Path(__file__).parent / "presets"

INIT_OFFSET = 0
DATASET_OFFSET = 1
VALIDATION_OFFSET = 2
SESSION_OFFSET = 100
SESSION_DATA_OFFSET = 1000


class ConfigError(ValueError):
    """Invalid configuration, with a location-bearing message."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChannelModel(_Strict):
    kind: Literal["bitflip_iid", "single_error_bitflip", "amplitude_damping", "identity"]
    p: Optional[float] = Field(None, ge=0, le=1)
    gamma: Optional[float] = Field(None, ge=0, le=1)
    qubits: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _needs_param(self):
        if self.kind in ("bitflip_iid", "single_error_bitflip") and self.p is None:
            raise ValueError(f"channel kind {self.kind} needs p")
        if self.kind == "amplitude_damping" and self.gamma is None:
            raise ValueError("amplitude_damping needs gamma")
        return self

    def as_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class NetworkModel(_Strict):
    widths: list[int] = Field(min_length=2)
    bindings: list[tuple[int, int]] = []
    channel_position: Optional[int] = None
    init: Literal["uniform01", "zeros"] = "uniform01"
    init_seed: Optional[int] = None


class DatasetModel(_Strict):
    builder: Literal["bitflip", "ad", "identity"]
    n_pairs: int = Field(ge=1)
    p: Optional[float] = Field(None, ge=0, le=1)
    model: Literal["single_error", "iid"] = "single_error"
    gamma: Optional[float] = Field(None, ge=0, le=1)
    p_bias: Optional[float] = Field(None, ge=0, le=1)
    states: Optional[list[str]] = None
    fixed_channel_cases: bool = False
    seed: Optional[int] = None


class ValidationModel(_Strict):
    N: int = Field(20, ge=2)
    encode: Optional[Literal["bitflip3", "ad4", "none"]] = None
    mode: Literal["deterministic_kraus", "sampled", "fixed_case"] = "deterministic_kraus"
    case: Optional[str] = None
    channel: Optional[ChannelModel] = None
    seed: Optional[int] = None


class EarlyStoppingModel(_Strict):
    patience: int = Field(ge=1)
    min_delta: float = Field(0.0, ge=0)


class SessionModel(_Strict):
    epochs: int = Field(ge=1)
    learning_rate: float = Field(ge=0)
    optimizer: Literal["sgd", "adam", "nadam", "adamax", "rmsprop"] = "sgd"
    optimizer_params: dict[str, float] = {}
    batch_size: Optional[int] = Field(None, ge=1)
    cost_mode: Literal["exact", "swap_test"] = "exact"
    shots: int = Field(1000, ge=1)
    epsilon: float = Field(1e-3, gt=0)
    channel_sampling: Literal["kraus", "fixed", "per_epoch"] = "kraus"
    early_stopping: Optional[EarlyStoppingModel] = None
    seed: Optional[int] = None
    # dataset overrides; when any is set the session gets a fresh training set
    n_pairs: Optional[int] = Field(None, ge=1)
    p: Optional[float] = Field(None, ge=0, le=1)
    p_bias: Optional[float] = Field(None, ge=0, le=1)
    gamma: Optional[float] = Field(None, ge=0, le=1)
    dataset_seed: Optional[int] = None

    def dataset_overrides(self) -> dict:
        keys = ("n_pairs", "p", "p_bias", "gamma")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}


class MeshModel(_Strict):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    channel: Optional[ChannelModel] = None
    mode: Literal["deterministic_kraus", "sampled", "fixed_case"] = "deterministic_kraus"
    case: Optional[str] = None


class EvalModel(_Strict):
    N: int = Field(20, ge=2)
    encode: Optional[Literal["bitflip3", "ad4", "none"]] = None
    mode: Literal["deterministic_kraus", "sampled", "fixed_case"] = "deterministic_kraus"
    case: Optional[str] = None
    channel: Optional[ChannelModel] = None
    conditional: bool = True
    cases: Optional[list[str]] = None
    meshes: list[MeshModel] = []
    seed: int = 0


class ExperimentConfig(_Strict):
    name: str
    seed: int
    output_dir: str
    record_wall_time: bool = True
    network: NetworkModel
    channel: Optional[ChannelModel] = None
    dataset: DatasetModel
    validation: ValidationModel = ValidationModel()
    sessions: list[SessionModel] = Field(min_length=1)
    eval: EvalModel = EvalModel()

    @model_validator(mode="after")
    def _consistent(self):
        if self.network.channel_position is not None and self.channel is None:
            raise ValueError("network.channel_position needs a [channel] section")
        need = {"bitflip": "p", "ad": "gamma"}.get(self.dataset.builder)
        if need and getattr(self.dataset, need) is None:
            raise ValueError(f"dataset builder {self.dataset.builder} needs {need}")
        if self.dataset.builder == "ad" and self.dataset.p_bias is None:
            raise ValueError("dataset builder ad needs p_bias")
        return self

    # -- derived seeds --------------------------------------------------------
    def init_seed(self) -> int:
        s = self.network.init_seed
        return self.seed + INIT_OFFSET if s is None else s

    def validation_seed(self) -> int:
        s = self.validation.seed
        return self.seed + VALIDATION_OFFSET if s is None else s

    def session_seed(self, k: int) -> int:
        s = self.sessions[k - 1].seed
        return self.seed + SESSION_OFFSET + k if s is None else s

    def dataset_seed(self, k: int = 0) -> int:
        """Seed of the training set used from session ``k`` (0 = base dataset)."""
        if k == 0:
            s = self.dataset.seed
            return self.seed + DATASET_OFFSET if s is None else s
        s = self.sessions[k - 1].dataset_seed
        return self.seed + SESSION_DATA_OFFSET + k if s is None else s


def _find_line(text: str, loc: tuple) -> int | None:
    """Best-effort source line for a pydantic error location."""
    lines = text.splitlines()
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return None
    section, start = [], 0
    # walk table headers matching the prefix of the location
    for depth in range(len(keys) - 1, 0, -1):
        header = ".".join(keys[:depth])
        pat = re.compile(rf"^\s*\[\[?\s*{re.escape(header)}\s*\]\]?")
        hits = [i for i, ln in enumerate(lines) if pat.match(ln)]
        if hits:
            idx = next((x for x in loc if isinstance(x, int)), 0)
            start = hits[min(idx, len(hits) - 1)] if len(hits) > 1 else hits[0]
            section = keys[:depth]
            break
    key = keys[len(section)] if len(section) < len(keys) else keys[-1]
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i in range(start, len(lines)):
        if pat.match(lines[i]):
            return i + 1
    return start + 1 if section else None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            field = ".".join(str(x) for x in err["loc"]) or "<root>"
            line = _find_line(text, err["loc"])
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: field '{field}': {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc


def resolve_path(name: str | Path) -> Path:
    """A config path, or the name of a bundled preset."""
    path = Path(name)
    if path.exists():
        return path
    preset = PRESET_DIR / f"{name}.toml"
    if preset.exists():
        return preset
    raise FileNotFoundError(f"config not found: {name}")


def load_config(name: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = resolve_path(name)
    cfg = parse_config(path.read_text(), str(path))
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))


def parse_eval_spec(text: str, source: str = "<evalspec>") -> EvalModel:
    """An eval spec is a TOML file with an optional ``[eval]`` table."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return EvalModel.model_validate(raw.get("eval", raw))
    except ValidationError as exc:
        msgs = [f"{source}: field '{'.'.join(str(x) for x in e['loc'])}': {e['msg']}"
                for e in exc.errors()]
        raise ConfigError("\n".join(msgs)) from exc
