"""Error taxonomy and process exit code mapping."""
from pricefield.errors import (
    CollinearityError,
    ConditioningError,
    ConfigError,
    DataError,
    GeometryError,
    InputError,
    NumericError,
    PricefieldError,
    ResourceError,
    exit_code_for,
)


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(InputError("x")) == 2
    assert exit_code_for(DataError("x")) == 3
    assert exit_code_for(GeometryError("x")) == 3
    assert exit_code_for(NumericError("x")) == 4
    assert exit_code_for(ConditioningError("x")) == 4
    assert exit_code_for(ResourceError("x")) == 4
    assert exit_code_for(CollinearityError(["a"])) == 4
    assert exit_code_for(RuntimeError("x")) == 1


def test_hierarchy():
    assert issubclass(InputError, ConfigError)
    assert issubclass(GeometryError, DataError)
    assert issubclass(CollinearityError, NumericError)
    for cls in (ConfigError, DataError, NumericError):
        assert issubclass(cls, PricefieldError)


def test_collinearity_carries_columns():
    err = CollinearityError(["a", "b"])
    assert err.columns == ["a", "b"]
    assert "a, b" in str(err)
