from typing import Callable, Dict

import pytest

from src.aledg.utils.common import get_env_var


def test_get_env_var_returns_value(
    env_vars: Callable[[Dict[str, str]], None],
) -> None:
    # Arrange
    env_vars({"ALEDG_TEST_VAR": "value"})

    # Act
    result = get_env_var("ALEDG_TEST_VAR")

    # Assert
    assert result == "value"


def test_get_env_var_missing_uses_default(
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    # Arrange
    monkeypatch.delenv("ALEDG_TEST_VAR", raising=False)

    # Act
    result = get_env_var("ALEDG_TEST_VAR", "fallback")

    # Assert
    assert result == "fallback"


def test_get_env_var_empty_without_default_raises(
    env_vars: Callable[[Dict[str, str]], None],
) -> None:
    # Arrange
    env_vars({"ALEDG_TEST_VAR": ""})

    # Act / Assert
    with pytest.raises(EnvironmentError, match="ALEDG_TEST_VAR"):
        get_env_var("ALEDG_TEST_VAR")
