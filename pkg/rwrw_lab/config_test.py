import pytest

from rwrw_lab.config import (Parameter, format_config, load_config,
                             parse_config)
from rwrw_lab.errors import ErrConfig, ErrUsage
from rwrw_lab.kernels import drift, lazy_product

SCHEMAS = {
    "speed": [Parameter("T", "int", 4096, "horizon of the speed estimate"),
              Parameter("check", "floats", [0.4], "")],
    "other": [Parameter("flag", "bool", False)],
}

EXAMPLE = """
# comment
[model]
d = 1
lambda = 0.5   # trailing comment
alpha0 = drift:0.7

[experiment]
name = speed
T = 128

[execution]
seed = 7
reps = 100
"""


def test_parse_example():
    config = parse_config(EXAMPLE, SCHEMAS)
    assert config.name == "speed"
    assert config.parameters == {"T": 128, "check": [0.4]}
    assert config.model.d == 1
    assert config.model.density == 0.5
    assert config.model.alpha0 == drift(1, 0.7)
    assert config.model.env_kernel == lazy_product(1)
    assert config.execution.seed == 7
    assert config.reps_or(10) == 100
    assert config.model.env_config().past_depth == 8


def test_defaults_without_file():
    config = load_config(None, SCHEMAS, "other")
    assert config.parameters == {"flag": False}
    assert config.model.d == 3
    assert config.execution.seed is None
    assert config.reps_or(10) == 10


def test_format_config_parses_back():
    config = parse_config(EXAMPLE, SCHEMAS)
    text = format_config(config)
    assert "[execution]\nseed = 7\n" in text
    assert parse_config(text, SCHEMAS) == config


def test_overrides():
    config = parse_config(EXAMPLE, SCHEMAS).with_overrides(seed=3, workers=4)
    assert config.execution.seed == 3
    assert config.execution.workers == 4
    assert config.execution.reps == 100
    with pytest.raises(ErrConfig):
        config.with_overrides(reps=0)


def test_errors_name_line_and_key():
    with pytest.raises(ErrConfig) as error:
        parse_config("[model]\nd = 1\nlambda = abc\n", SCHEMAS, "speed")
    assert error.value.line == 3
    assert error.value.key == "lambda"
    assert "line 3" in str(error.value)

    with pytest.raises(ErrConfig) as error:
        parse_config("[experiment]\nname = speed\nT = 1.5\n", SCHEMAS)
    assert (error.value.line, error.value.key) == (3, "T")

    with pytest.raises(ErrConfig) as error:
        parse_config("[model]\nd = 1\nd = 2\n", SCHEMAS, "speed")
    assert error.value.line == 3


def test_unnormalized_kernel_is_a_config_error():
    with pytest.raises(ErrConfig) as error:
        parse_config("[model]\nd = 1\nalpha0 = 1:0.5; -1:0.4\n", SCHEMAS, "speed")
    assert error.value.key == "alpha0"
    assert error.value.line == 3
    assert "not normalized" in str(error.value)


@pytest.mark.parametrize("text", [
    "[modle]\n",
    "[model]\nnonsense\n",
    "d = 1\n",
    "[model]\ncolour = red\n",
    "[model]\nd = 0\n",
    "[execution]\nworkers = 0\n",
    "[experiment]\nname = unknown\n",
    "[experiment]\nname = speed\nunknown = 1\n",
])
def test_invalid_files(text):
    with pytest.raises(ErrConfig):
        parse_config(text, SCHEMAS, None if "name" in text else "speed")


def test_experiment_name_must_agree():
    with pytest.raises(ErrConfig):
        parse_config("[experiment]\nname = other\n", SCHEMAS, "speed")
    with pytest.raises(ErrConfig):
        parse_config("", SCHEMAS)


def test_missing_file(tmp_path):
    with pytest.raises(ErrConfig):
        load_config(tmp_path / "absent.cfg", SCHEMAS, "speed")
    path = tmp_path / "present.cfg"
    path.write_text(EXAMPLE)
    assert load_config(path, SCHEMAS).name == "speed"


def test_parameter_kinds():
    with pytest.raises(ErrUsage):
        Parameter("x", "complex", 0)
    assert Parameter("grid", "ints", [1, 2]).parse("4, 8,16") == [4, 8, 16]
    assert Parameter("flag", "bool", False).parse("yes") is True
    assert Parameter("grid", "ints", [1, 2], "times").describe() == "grid (ints, default 1, 2): times"
