import json
import logging
import sys
from logging.handlers import QueueHandler

import pytest

from src.aledg.services.logger_service import JsonFormatter, get_logger


def _record(msg: str, args: tuple[object, ...] = ()) -> logging.LogRecord:
    return logging.LogRecord(
        name="src.aledg.test",
        level=logging.INFO,
        pathname=__file__,
        lineno=1,
        msg=msg,
        args=args,
        exc_info=None,
    )


def test_json_formatter_with_message_formats_message_as_json() -> None:
    # Arrange
    fmt = JsonFormatter()
    record = _record("step %d", (7,))

    # Act
    out = json.loads(fmt.format(record))

    # Assert
    assert out["message"] == "step 7"
    assert out["level"] == "INFO"
    assert out["logger"] == "src.aledg.test"
    assert "context" not in out


def test_json_formatter_collects_extra_fields_under_context() -> None:
    # Arrange
    fmt = JsonFormatter()
    record = _record("accepted")
    record.__dict__.update(step=12, dt=0.001)

    # Act
    out = json.loads(fmt.format(record))

    # Assert
    assert out["context"] == {"step": 12, "dt": 0.001}


def test_json_formatter_with_exception_adds_traceback() -> None:
    # Arrange
    fmt = JsonFormatter()
    try:
        raise RuntimeError("tangled")
    except RuntimeError:
        record = logging.LogRecord(
            name="x",
            level=logging.ERROR,
            pathname=__file__,
            lineno=1,
            msg="failed",
            args=(),
            exc_info=sys.exc_info(),
        )

    # Act
    out = json.loads(fmt.format(record))

    # Assert
    assert "RuntimeError: tangled" in out["exception"]


def test_get_logger_has_queue_handler_and_disables_propagation(
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    # Arrange
    monkeypatch.setenv("LOG_LEVEL", "debug")

    # Act
    logger = get_logger("src.aledg.test_logger")
    again = get_logger("src.aledg.test_logger")

    # Assert
    assert logger is again
    assert logger.propagate is False
    assert logger.level == logging.DEBUG
    queues = [h for h in logger.handlers if isinstance(h, QueueHandler)]
    assert len(queues) == 1
