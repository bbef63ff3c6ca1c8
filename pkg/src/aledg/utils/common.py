import os
from typing import Optional


def get_env_var(name: str, default: Optional[str] = None) -> str:
    """Return the value of an environment variable.

    This helper reads an environment variable and raises an error if it is
    not set or is an empty string, unless a default is provided. Use it to
    enforce required configuration at startup.

    Args:
        name (str): Name of the environment variable to read.
        default (Optional[str]): Value returned when the variable is missing.

    Returns:
        str: The non-empty value of the requested environment variable, or
        ``default``.

    Raises:
        EnvironmentError: If the environment variable is not set or empty and
            no default is given.
    """
    value = os.environ.get(name)
    if not value:
        if default is not None:
            return default
        raise EnvironmentError(f"{name} environment variable not set")
    return value
