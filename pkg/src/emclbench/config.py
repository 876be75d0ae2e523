"""Validated run configuration and results records (JSON, versioned)."""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from .emcl import EmclConfig
from .metrics import AccuracyMatrix, bwt_or_flag, compute_acc

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class IdxPaths(_Strict):
    train_images: str
    train_labels: str
    test_images: Optional[str] = None
    test_labels: Optional[str] = None


class DatasetConfig(_Strict):
    kind: Literal["idx", "synthetic"]
    paths: Optional[IdxPaths] = None
    tasks: PositiveInt = 20
    samples_per_task: PositiveInt = 1000
    test_per_task: PositiveInt = 1000
    classes_per_task: Optional[PositiveInt] = None
    regime: Literal["single-head", "multi-head"] = "single-head"
    # synthetic generator only
    num_classes: PositiveInt = 10
    dim: PositiveInt = 784
    data_seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.regime == "multi-head" and self.classes_per_task is None:
            raise ValueError("multi-head regime needs classes_per_task")
        if self.regime == "single-head" and self.classes_per_task is not None:
            raise ValueError("classes_per_task only applies to the multi-head regime")
        return self


class ModelConfig(_Strict):
    hidden_sizes: List[PositiveInt] = Field(default_factory=lambda: [100, 100])


class EmclAlgo(_Strict):
    name: Literal["emcl"]
    alpha0: PositiveFloat = 0.3
    beta: PositiveFloat = 0.15
    lam: float = 10.0
    gamma: PositiveFloat = 0.3
    eta: float = 0.9
    r: PositiveFloat = 1.0
    lr_bounds: Tuple[float, float] = (1e-5, 1.0)
    importance_mode: Literal["taylor", "si_variant"] = "taylor"
    use_pgd: bool = True
    use_inner_reg: bool = True
    meta_lr_mode: Literal["recursive", "stateless"] = "recursive"
    h_init: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        self.to_emcl_config().validate_for_training()
        return self

    def to_emcl_config(self) -> EmclConfig:
        return EmclConfig(**self.model_dump(exclude={"name"}))


class SgdAlgo(_Strict):
    name: Literal["sgd"]
    lr: PositiveFloat = 0.03


class ErAlgo(_Strict):
    name: Literal["er"]
    lr: PositiveFloat = 0.03
    buffer_capacity: int = Field(250, ge=0)


class AgemAlgo(_Strict):
    name: Literal["agem"]
    lr: PositiveFloat = 0.03
    buffer_capacity: int = Field(250, ge=0)
    ref_batch_size: Optional[PositiveInt] = None


class EwcAlgo(_Strict):
    name: Literal["ewc"]
    lr: PositiveFloat = 0.03
    reg_strength: float = Field(100.0, ge=0)
    fisher_window: PositiveInt = 100


AlgoConfig = Union[EmclAlgo, SgdAlgo, ErAlgo, AgemAlgo, EwcAlgo]


class EvalConfig(_Strict):
    eval_every_task: Literal[True] = True


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    dataset: DatasetConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    algo: AlgoConfig = Field(discriminator="name")
    seed: int = 0
    batch_size: PositiveInt = 10
    eval: EvalConfig = Field(default_factory=EvalConfig)
    output_dir: Optional[str] = None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def parse_config(text_or_dict) -> RunConfig:
    try:
        if isinstance(text_or_dict, (str, bytes)):
            return RunConfig.model_validate_json(text_or_dict)
        return RunConfig.model_validate(text_or_dict)
    except ValueError as exc:  # pydantic's ValidationError is a ValueError
        raise ConfigError(str(exc)) from exc


class ResultsRecord(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    config: RunConfig
    accuracy_matrix: List[List[Optional[float]]]
    acc: float
    bwt: float
    bwt_defined: bool
    task_times: List[float]
    total_time: float
    losses: List[float]
    examples_seen: int
    code_version: str

    @model_validator(mode="after")
    def _self_consistent(self):
        matrix = self.matrix()
        bwt, defined = bwt_or_flag(matrix)
        if compute_acc(matrix) != self.acc or bwt != self.bwt or defined != self.bwt_defined:
            raise ValueError("stored acc/bwt do not match the stored accuracy matrix")
        return self

    def matrix(self) -> AccuracyMatrix:
        return AccuracyMatrix.from_list(self.accuracy_matrix)

    @property
    def label(self):
        return self.config.algo.name

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=1) + "\n"

    @classmethod
    def load(cls, path):
        try:
            return cls.model_validate_json(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read results {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"invalid results file {path}: {exc}") from exc
