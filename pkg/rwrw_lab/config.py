"""Plain-text experiment configuration.

    [model]
    d = 3
    lambda = 1.0
    env_kernel = lazy

    [experiment]
    name = speed
    T = 4096

    [execution]
    seed = 7
    reps = 2000

Every error names the line and key it comes from.
"""

from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from rwrw_lab.constants import (DEFAULT_BLOCKS, DEFAULT_ENUMERATION_BUDGET,
                                DEFAULT_MAX_ATTEMPTS, DEFAULT_WORKERS)
from rwrw_lab.environment import EnvConfig
from rwrw_lab.errors import ErrConfig, ErrDomain, ErrUsage
from rwrw_lab.kernels import JumpKernel, format_kernel, parse_kernel
from rwrw_lab.walker import WalkerConfig

SECTIONS = ("model", "experiment", "execution")

MODEL_DEFAULTS: Dict[str, str] = {
    "d": "3",
    "lambda": "1.0",
    "env_kernel": "lazy",
    "alpha0": "lazy",
    "alpha1": "simple",
    "horizon": "16",
    "past_depth": "8",
}
KERNEL_KEYS = ("env_kernel", "alpha0", "alpha1")

EXECUTION_DEFAULTS: Dict[str, str] = {
    "seed": "",
    "reps": "",
    "workers": str(DEFAULT_WORKERS),
    "blocks": str(DEFAULT_BLOCKS),
    "enumeration_budget": str(DEFAULT_ENUMERATION_BUDGET),
    "max_attempts": str(DEFAULT_MAX_ATTEMPTS),
}


def _parse_list(converter: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(text: str) -> List[Any]:
        return [converter(item.strip()) for item in text.split(",") if item.strip()]
    return parse


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(item) for item in value)
    return str(value)


PARSERS: Dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "ints": _parse_list(int),
    "floats": _parse_list(float),
    "strs": _parse_list(str),
}


class Parameter:
    """An experiment parameter: name, kind (one of ``PARSERS``), default and help text."""

    def __init__(self, name: str, kind: str, default: Any, help: str = "") -> None:
        if kind not in PARSERS:
            raise ErrUsage(f"unknown parameter kind [{kind}]")
        self.name = name
        self.kind = kind
        self.default = default
        self.help = help

    def parse(self, text: str, line: Optional[int] = None) -> Any:
        try:
            return PARSERS[self.kind](text.strip())
        except ValueError as error:
            raise ErrConfig(f"expected a value of kind {self.kind}: {error}", key=self.name, line=line)

    def describe(self) -> str:
        return f"{self.name} ({self.kind}, default {_format_value(self.default)}){': ' + self.help if self.help else ''}"


class ModelConfig:
    def __init__(self, d: int, density: float, env_kernel: JumpKernel, alpha0: JumpKernel, alpha1: JumpKernel,
                 horizon: int, past_depth: int) -> None:
        self.d = d
        self.density = density
        self.env_kernel = env_kernel
        self.alpha0 = alpha0
        self.alpha1 = alpha1
        self.horizon = horizon
        self.past_depth = past_depth

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.d, self.density, self.env_kernel, self.horizon, self.past_depth)

    def walker_config(self) -> WalkerConfig:
        return WalkerConfig(self.alpha0, self.alpha1)

    def to_dict(self) -> Dict[str, str]:
        return {
            "d": str(self.d),
            "lambda": repr(self.density),
            "env_kernel": format_kernel(self.env_kernel),
            "alpha0": format_kernel(self.alpha0),
            "alpha1": format_kernel(self.alpha1),
            "horizon": str(self.horizon),
            "past_depth": str(self.past_depth),
        }


class ExecutionConfig:
    def __init__(self, seed: Optional[int], reps: Optional[int], workers: int, blocks: int, enumeration_budget: int,
                 max_attempts: int) -> None:
        self.seed = seed
        self.reps = reps
        self.workers = workers
        self.blocks = blocks
        self.enumeration_budget = enumeration_budget
        self.max_attempts = max_attempts

    def to_dict(self) -> Dict[str, str]:
        return {
            "seed": "" if self.seed is None else str(self.seed),
            "reps": "" if self.reps is None else str(self.reps),
            "workers": str(self.workers),
            "blocks": str(self.blocks),
            "enumeration_budget": str(self.enumeration_budget),
            "max_attempts": str(self.max_attempts),
        }


class ExperimentConfig:
    def __init__(self, model: ModelConfig, name: str, parameters: Dict[str, Any], execution: ExecutionConfig) -> None:
        self.model = model
        self.name = name
        self.parameters = parameters
        self.execution = execution

    def with_overrides(self, seed: Optional[int] = None, reps: Optional[int] = None, workers: Optional[int] = None) -> 'ExperimentConfig':
        execution = ExecutionConfig(
            seed if seed is not None else self.execution.seed,
            reps if reps is not None else self.execution.reps,
            workers if workers is not None else self.execution.workers,
            self.execution.blocks,
            self.execution.enumeration_budget,
            self.execution.max_attempts,
        )
        _check_execution(execution, dict())
        return ExperimentConfig(self.model, self.name, dict(self.parameters), execution)

    def reps_or(self, default: int) -> int:
        return self.execution.reps if self.execution.reps is not None else default

    def to_dict(self) -> Dict[str, Dict[str, str]]:
        experiment = {"name": self.name}
        experiment.update({key: _format_value(value) for key, value in sorted(self.parameters.items())})
        return {"model": self.model.to_dict(), "experiment": experiment, "execution": self.execution.to_dict()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def format_config(config: ExperimentConfig) -> str:
    """The configuration in the format ``parse_config`` reads, with every key spelled out."""
    lines: List[str] = []
    for section, entries in config.to_dict().items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, value in entries.items():
            if value != "":
                lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


Entries = Dict[str, Tuple[str, int]]


def _read_sections(text: str) -> Dict[str, Entries]:
    sections: Dict[str, Entries] = {section: dict() for section in SECTIONS}
    current: Optional[str] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise ErrConfig(f"unknown section [{current}], expected one of {', '.join(SECTIONS)}", line=number)
            continue
        if "=" not in line:
            raise ErrConfig(f"expected [key = value], got [{line}]", line=number)
        if current is None:
            raise ErrConfig("key outside of any section", line=number)

        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ErrConfig("empty key", line=number)
        if key in sections[current]:
            raise ErrConfig(f"duplicate key in section [{current}]", key=key, line=number)
        sections[current][key] = (value, number)

    return sections


def _check_known(entries: Entries, known: Sequence[str], section: str):
    for key, (_, line) in entries.items():
        if key not in known:
            raise ErrConfig(f"unknown key in section [{section}]", key=key, line=line)


def _integer(entries: Entries, key: str, defaults: Mapping[str, str], minimum: Optional[int] = None) -> Optional[int]:
    text, line = entries.get(key, (defaults[key], None))
    if text == "":
        return None
    try:
        value = int(text)
    except ValueError:
        raise ErrConfig(f"expected an integer, got [{text}]", key=key, line=line)
    if minimum is not None and value < minimum:
        raise ErrConfig(f"must be at least {minimum}, got {value}", key=key, line=line)
    return value


def _parse_model(entries: Entries) -> ModelConfig:
    _check_known(entries, list(MODEL_DEFAULTS), "model")
    d = _integer(entries, "d", MODEL_DEFAULTS, minimum=1)
    horizon = _integer(entries, "horizon", MODEL_DEFAULTS, minimum=1)
    past_depth = _integer(entries, "past_depth", MODEL_DEFAULTS, minimum=0)

    text, line = entries.get("lambda", (MODEL_DEFAULTS["lambda"], None))
    try:
        density = float(text)
    except ValueError:
        raise ErrConfig(f"expected a number, got [{text}]", key="lambda", line=line)
    if not density >= 0:
        raise ErrConfig(f"the density must be nonnegative, got {density}", key="lambda", line=line)

    kernels: Dict[str, JumpKernel] = dict()
    for key in KERNEL_KEYS:
        text, line = entries.get(key, (MODEL_DEFAULTS[key], None))
        try:
            kernels[key] = parse_kernel(text, d)
        except (ErrUsage, ErrDomain) as error:
            raise ErrConfig(str(error), key=key, line=line)

    return ModelConfig(d, density, kernels["env_kernel"], kernels["alpha0"], kernels["alpha1"], horizon, past_depth)


def _check_execution(execution: ExecutionConfig, lines: Mapping[str, int]):
    for key, minimum in (("reps", 1), ("workers", 1), ("blocks", 1), ("enumeration_budget", 1), ("max_attempts", 1)):
        value = getattr(execution, key)
        if value is not None and value < minimum:
            raise ErrConfig(f"must be at least {minimum}, got {value}", key=key, line=lines.get(key))


def _parse_execution(entries: Entries) -> ExecutionConfig:
    _check_known(entries, list(EXECUTION_DEFAULTS), "execution")
    execution = ExecutionConfig(
        _integer(entries, "seed", EXECUTION_DEFAULTS),
        _integer(entries, "reps", EXECUTION_DEFAULTS),
        _integer(entries, "workers", EXECUTION_DEFAULTS),
        _integer(entries, "blocks", EXECUTION_DEFAULTS),
        _integer(entries, "enumeration_budget", EXECUTION_DEFAULTS),
        _integer(entries, "max_attempts", EXECUTION_DEFAULTS),
    )
    _check_execution(execution, {key: line for key, (_, line) in entries.items()})
    return execution


def _parse_experiment(entries: Entries, schemas: Mapping[str, Sequence[Parameter]], experiment: Optional[str]) -> Tuple[str, Dict[str, Any]]:
    name_text, name_line = entries.get("name", ("", None))
    name = experiment or name_text
    if experiment and name_text and name_text != experiment:
        raise ErrConfig(f"the file configures experiment [{name_text}], not [{experiment}]", key="name", line=name_line)
    if not name:
        raise ErrConfig("no experiment named", key="name")
    if name not in schemas:
        raise ErrConfig(f"unknown experiment [{name}], expected one of {', '.join(sorted(schemas))}", key="name", line=name_line)

    schema = {parameter.name: parameter for parameter in schemas[name]}
    parameters = {parameter.name: parameter.default for parameter in schemas[name]}
    for key, (text, line) in entries.items():
        if key == "name":
            continue
        if key not in schema:
            raise ErrConfig(f"unknown parameter for experiment [{name}]", key=key, line=line)
        parameters[key] = schema[key].parse(text, line)
    return name, parameters


def parse_config(text: str, schemas: Mapping[str, Sequence[Parameter]], experiment: Optional[str] = None) -> ExperimentConfig:
    sections = _read_sections(text)
    model = _parse_model(sections["model"])
    name, parameters = _parse_experiment(sections["experiment"], schemas, experiment)
    execution = _parse_execution(sections["execution"])
    return ExperimentConfig(model, name, parameters, execution)


def load_config(path: Optional[Path], schemas: Mapping[str, Sequence[Parameter]], experiment: Optional[str] = None) -> ExperimentConfig:
    if path is None:
        return parse_config("", schemas, experiment)
    if not path.is_file():
        raise ErrConfig(f"configuration file {path} does not exist")
    return parse_config(path.read_text(), schemas, experiment)
