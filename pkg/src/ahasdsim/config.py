# Experiment configuration: validated, immutable pydantic models loaded from YAML

import logging
import math
import os
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "AHASD_SEED"

PIM_TOTAL_OPS_PER_SEC = Fraction(1024, 10) * 10**9  # 102.4 GOPS

MODEL_PRESETS = {
    "Small": {
        "name": "OPT-1.3B/OPT-6.7B",
        "dlm_hidden": 2048,
        "dlm_layers": 24,
        "tlm_hidden": 4096,
        "tlm_layers": 32,
        "vocab_size": 50272,
    },
    "Medium": {
        "name": "LLaMA2-7B/LLaMA2-13B",
        "dlm_hidden": 4096,
        "dlm_layers": 32,
        "tlm_hidden": 5120,
        "tlm_layers": 40,
        "vocab_size": 32000,
    },
    "Large": {
        "name": "PaLM-8B/PaLM-30B",
        "dlm_hidden": 4096,
        "dlm_layers": 32,
        "tlm_hidden": 8192,
        "tlm_layers": 48,
        "vocab_size": 256000,
    },
}

DEFAULT_THRESHOLDS = {
    "adaedl": 0.29,
    "svip": 0.5,
    "specdecpp": 0.35,
    "banditspec": 0.0,
    "fixed": 0.0,
}

# Overriding a key drops the derived keys so that they are recomputed
DERIVED_KEYS = {
    ("model", "dlm_hidden"): ("dlm_params_bytes",),
    ("model", "dlm_layers"): ("dlm_params_bytes",),
    ("model", "tlm_hidden"): ("tlm_params_bytes",),
    ("model", "tlm_layers"): ("tlm_params_bytes",),
    ("model", "vocab_size"): ("h_max",),
    ("hardware", "pim_units"): ("pim_ops_per_cycle_per_unit",),
    ("hardware", "pim_freq_hz"): ("pim_ops_per_cycle_per_unit",),
    ("workload", "algorithm"): ("algorithm_threshold",),
}


class ConfigError(ValueError):
    """Base class of every configuration problem"""


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigValidationError(ConfigError):
    pass


class Variant(str, Enum):
    GPU_ONLY = "gpu_only"
    NPU_ONLY = "npu_only"
    OP_SYNC = "op_sync"
    ASYNC = "async"
    ASYNC_AAU = "async_aau"
    ASYNC_AAU_EDC = "async_aau_edc"
    FULL = "full"

    @property
    def is_async(self) -> bool:
        return self in ASYNC_VARIANTS

    @property
    def uses_aau(self) -> bool:
        return self in (Variant.ASYNC_AAU, Variant.ASYNC_AAU_EDC, Variant.FULL)

    @property
    def uses_edc(self) -> bool:
        return self in (Variant.ASYNC_AAU_EDC, Variant.FULL)

    @property
    def uses_tvc(self) -> bool:
        return self is Variant.FULL


ASYNC_VARIANTS = (Variant.ASYNC, Variant.ASYNC_AAU, Variant.ASYNC_AAU_EDC, Variant.FULL)
ABLATION_LADDER = (
    Variant.GPU_ONLY,
    Variant.OP_SYNC,
    Variant.ASYNC,
    Variant.ASYNC_AAU,
    Variant.ASYNC_AAU_EDC,
    Variant.FULL,
)


class _FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def _require_positive(value, info):
    if value is not None and value <= 0:
        raise ValueError(f"{info.field_name} must be positive")
    return value


def _require_non_negative(value, info):
    if value is not None and value < 0:
        raise ValueError(f"{info.field_name} must be non-negative")
    return value


class Lpddr5Timing(_FrozenModel):
    """DRAM timing in memory cycles. Recorded for documentation, not simulated."""

    t_rp: int = 32
    t_rcd: int = 32
    t_ras: int = 64
    t_rrd_l: int = 8
    t_wr: int = 24
    t_ccd_s: int = 4
    t_ccd_l: int = 6
    t_refi: int = 6240
    t_faw: int = 64
    t_rfc: int = 560


class HardwareConfig(_FrozenModel):
    npu_matrix_ops_per_cycle: int = 16000
    npu_vector_ops_per_cycle: int = 8200
    npu_freq_hz: float = 1.0e9
    npu_spm_bytes: int = 8 * 1024 * 1024
    npu_compute_chips: int = 2
    pim_units: int = 16
    pim_ops_per_cycle_per_unit: float
    pim_freq_hz: float = 800.0e6
    pim_onchip_bw_bytes_per_sec: float = 256.0e9
    pim_rank_capacity_bytes: int = 32 * 1024**3
    offchip_bw_bytes_per_sec: float = 51.2e9
    gtsu_switch_cycles: int = 400
    aau_enabled: bool = True
    queue_transfer_cycles: int = 200
    dram_timing: Lpddr5Timing = Lpddr5Timing()

    @model_validator(mode="before")
    @classmethod
    def _fill_pim_rate(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("pim_ops_per_cycle_per_unit") is None:
            data = dict(data)
            units = data.get("pim_units", 16)
            freq = data.get("pim_freq_hz", 800.0e6)
            try:
                units, freq = int(units), float(freq)
            except (TypeError, ValueError):
                # let the field validators report the real culprit
                return data
            if units > 0 and freq > 0:
                rate = PIM_TOTAL_OPS_PER_SEC / (units * Fraction(repr(freq)))
                data["pim_ops_per_cycle_per_unit"] = float(rate)
            else:
                data["pim_ops_per_cycle_per_unit"] = 1.0
        return data

    check_positive = field_validator(
        "npu_matrix_ops_per_cycle",
        "npu_vector_ops_per_cycle",
        "npu_freq_hz",
        "npu_spm_bytes",
        "npu_compute_chips",
        "pim_units",
        "pim_ops_per_cycle_per_unit",
        "pim_freq_hz",
        "pim_onchip_bw_bytes_per_sec",
        "pim_rank_capacity_bytes",
        "offchip_bw_bytes_per_sec",
    )(_require_positive)

    check_non_negative = field_validator("gtsu_switch_cycles", "queue_transfer_cycles")(
        _require_non_negative
    )


class ModelConfig(_FrozenModel):
    scale: Literal["Small", "Medium", "Large"] = "Medium"
    name: str
    dlm_hidden: int
    tlm_hidden: int
    dlm_layers: int
    tlm_layers: int
    dlm_params_bytes: int
    tlm_params_bytes: int
    vocab_size: int
    h_max: float
    head_dim: int = 128

    @model_validator(mode="before")
    @classmethod
    def _fill_from_preset(cls, data: Any) -> Any:
        if data is None:
            data = {}
        if not isinstance(data, dict):
            return data
        scale = data.get("scale", "Medium")
        preset = MODEL_PRESETS.get(scale, MODEL_PRESETS["Medium"])
        filled = {**preset, **{k: v for k, v in data.items() if v is not None}}
        for role in ("dlm", "tlm"):
            key = f"{role}_params_bytes"
            hidden, layers = filled.get(f"{role}_hidden"), filled.get(f"{role}_layers")
            if key not in filled and isinstance(hidden, int) and isinstance(layers, int):
                filled[key] = 12 * layers * hidden * hidden
        vocab = filled.get("vocab_size")
        if "h_max" not in filled and isinstance(vocab, int) and vocab > 1:
            filled["h_max"] = math.log(vocab)
        return filled

    check_positive = field_validator("dlm_hidden", "tlm_hidden", "vocab_size", "h_max", "head_dim")(
        _require_positive
    )
    check_non_negative = field_validator(
        "dlm_layers", "tlm_layers", "dlm_params_bytes", "tlm_params_bytes"
    )(_require_non_negative)


class WorkloadConfig(_FrozenModel):
    difficulty_walk_step: float = 0.05
    entropy_noise_sd: float = 0.5
    accept_slope: float = 0.35
    accept_floor: float = 0.2
    accept_ceiling: float = 0.98
    lookahead_decay: float = 0.95
    max_draft_len: int = 8
    algorithm: Literal["specdecpp", "svip", "adaedl", "banditspec", "fixed"] = "adaedl"
    algorithm_threshold: float
    bandit_arms: Tuple[int, ...] = (2, 4, 6, 8)
    trace_path: Optional[str] = None
    prompt_len: int = 64
    initial_difficulty: float = 0.5

    @model_validator(mode="before")
    @classmethod
    def _fill_threshold(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("algorithm_threshold") is None:
            data = dict(data)
            data["algorithm_threshold"] = DEFAULT_THRESHOLDS.get(
                data.get("algorithm", "adaedl"), 0.0
            )
        return data

    @field_validator("difficulty_walk_step", "initial_difficulty")
    @classmethod
    def _unit_interval(cls, value, info):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{info.field_name} must lie in [0, 1]")
        return value

    @field_validator("lookahead_decay")
    @classmethod
    def _decay_range(cls, value):
        if not 0.0 < value <= 1.0:
            raise ValueError("lookahead_decay must lie in (0, 1]")
        return value

    @field_validator("max_draft_len")
    @classmethod
    def _draft_len(cls, value):
        if value < 1:
            raise ValueError("max_draft_len must be at least 1")
        return value

    @field_validator("bandit_arms")
    @classmethod
    def _arms(cls, value):
        if not value or any(arm < 1 for arm in value):
            raise ValueError("bandit_arms must be a non-empty list of positive lengths")
        return tuple(sorted(set(value)))

    check_non_negative = field_validator("entropy_noise_sd", "accept_slope", "prompt_len")(
        _require_non_negative
    )

    @model_validator(mode="after")
    def _acceptance_bounds(self):
        if not 0.0 <= self.accept_floor <= self.accept_ceiling <= 1.0:
            raise ValueError(
                "accept_floor and accept_ceiling must satisfy 0 <= floor <= ceiling <= 1"
            )
        return self


class PolicyConfig(_FrozenModel):
    max_batches_per_verify: int = 1
    max_unverified_batches: int = 7
    max_events: int = 2_000_000

    check_positive = field_validator(
        "max_batches_per_verify", "max_unverified_batches", "max_events"
    )(_require_positive)


class EnergyCoefficients(_FrozenModel):
    npu_dynamic_pj_per_op: float = 0.25
    pim_dynamic_pj_per_op: float = 0.5
    gpu_dynamic_pj_per_op: float = 0.6
    dram_pj_per_byte: float = 4.0
    offchip_pj_per_byte: float = 32.0
    npu_background_pj_per_cycle: float = 500.0
    pim_background_pj_per_cycle: float = 100.0
    gpu_background_pj_per_cycle: float = 6000.0
    aau_pj_per_op: float = 0.8

    check_non_negative = field_validator("*")(_require_non_negative)


class BaselineConfig(_FrozenModel):
    gpu_ops_per_cycle: int = 12000
    gpu_freq_hz: float = 1.335e9
    gpu_mem_bw_bytes_per_sec: float = 51.2e9
    opsync_attention_on_pim: bool = True

    check_positive = field_validator(
        "gpu_ops_per_cycle", "gpu_freq_hz", "gpu_mem_bw_bytes_per_sec"
    )(_require_positive)


class ExperimentConfig(_FrozenModel):
    seed: int = 0
    variant: Variant = Variant.FULL
    generation_length: int = 1024
    batch_size: Literal[1] = 1
    label: Optional[str] = None
    hardware: HardwareConfig = HardwareConfig()
    model: ModelConfig = ModelConfig()
    workload: WorkloadConfig = WorkloadConfig()
    policy: PolicyConfig = PolicyConfig()
    energy: EnergyCoefficients = EnergyCoefficients()
    baseline: BaselineConfig = BaselineConfig()

    @field_validator("seed")
    @classmethod
    def _seed_range(cls, value):
        if not 0 <= value < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return value

    @field_validator("generation_length")
    @classmethod
    def _generation_length(cls, value):
        if value < 1:
            raise ValueError("generation_length must be at least 1")
        return value

    @model_validator(mode="after")
    def _capacity_warnings(self):
        weights = self.model.dlm_params_bytes + self.model.tlm_params_bytes
        if weights > self.hardware.pim_rank_capacity_bytes:
            logger.warning(
                f"DLM and TLM weights ({weights} B) exceed PIM capacity "
                f"({self.hardware.pim_rank_capacity_bytes} B)"
            )
        if self.policy.max_unverified_batches > 7:
            logger.warning("max_unverified_batches above 7 saturates the leading length register")
        return self

    @property
    def label_or_variant(self) -> str:
        return self.label or self.variant.value


def _validation_error(error: ValidationError) -> ConfigValidationError:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        if item["type"] == "value_error":
            message = str(item["ctx"]["error"])
        else:
            message = item["msg"]
        messages.append(f"{location}: {message}" if location else message)
    return ConfigValidationError("; ".join(messages))


def _parse_yaml(text: str) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigParseError(problem, line=line) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError("top level of a config document must be a mapping", line=1)
    return data


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e) from e


def load_config(text: str) -> ExperimentConfig:
    """Parses and validates a YAML config document. An empty document yields all defaults."""
    return config_from_dict(_parse_yaml(text))


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def _split_override(override: str) -> Tuple[List[str], str]:
    if "=" not in override:
        raise ConfigValidationError(f"override '{override}' is not of the form key=value")
    key, raw_value = override.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigValidationError(f"override '{override}' has an empty key")
    return path, raw_value.strip()


def apply_overrides(config: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    """
    Applies dotted key=value overrides and re-validates.
    Parameters
    ----------
    config : ExperimentConfig
        the config to start from. It is not modified.
    overrides : Sequence[str]
        strings such as "hardware.gtsu_switch_cycles=0". Values are parsed as YAML scalars.
    Returns
    -------
    config : ExperimentConfig
        a new validated config.
    """
    if not overrides:
        return config
    data = config.model_dump(mode="json")
    overridden = set()
    parsed = [_split_override(o) for o in overrides]
    for path, _ in parsed:
        overridden.add(tuple(path))

    for path, raw_value in parsed:
        try:
            value = yaml.safe_load(raw_value) if raw_value else None
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"cannot parse value of '{'.'.join(path)}'") from e
        node = data
        for depth, key in enumerate(path[:-1]):
            if not isinstance(node, dict) or key not in node:
                raise ConfigValidationError(f"unknown config key '{'.'.join(path[: depth + 1])}'")
            node = node[key]
        if not isinstance(node, dict) or path[-1] not in node:
            raise ConfigValidationError(f"unknown config key '{'.'.join(path)}'")

        if path == ["model", "scale"]:
            kept = {
                key: data["model"][key]
                for key in data["model"]
                if ("model", key) in overridden and key != "scale"
            }
            data["model"] = {"scale": value, **kept}
            continue
        node[path[-1]] = value
        for dependent in DERIVED_KEYS.get(tuple(path), ()):
            if (path[0], dependent) not in overridden:
                node.pop(dependent, None)

    logger.debug(f"Applied overrides {list(overrides)}")
    return config_from_dict(data)


def load_config_file(path: Optional[str], overrides: Sequence[str] = ()) -> ExperimentConfig:
    """
    Loads a config file, then the AHASD_SEED environment variable, then the overrides.
    Without a path every section keeps its defaults.
    """
    text = ""
    if path is not None:
        with open(path, "r") as f:
            text = f.read()
    data = _parse_yaml(text)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError as e:
            raise ConfigValidationError(f"{SEED_ENV_VAR} must be an integer") from e
    config = config_from_dict(data)
    return apply_overrides(config, overrides)
