import atexit
import json
import logging
import os
import queue
from logging.handlers import QueueHandler, QueueListener
from typing import Any, Dict

# Attributes every LogRecord carries; anything else came in through ``extra``.
_RECORD_FIELDS = frozenset(
    logging.LogRecord("", 0, "", 0, "", None, None).__dict__
) | {"message", "asctime", "taskName"}


class JsonFormatter(logging.Formatter):
    """Logging formatter that outputs JSON-formatted records.

    The formatter serializes level, message, logger name and a timestamp.
    Exception information goes under the ``exception`` key and any fields
    passed with ``extra=`` are collected under ``context``, so solver logs
    can carry step numbers, times and counts as structured values.
    """

    def format(self, record: logging.LogRecord) -> str:
        log_record: Dict[str, Any] = {
            "level": record.levelname,
            "message": record.getMessage(),
            "logger": record.name,
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
        }
        context = {
            key: value
            for key, value in record.__dict__.items()
            if key not in _RECORD_FIELDS
        }
        if context:
            log_record["context"] = context
        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)
        return json.dumps(log_record, ensure_ascii=False, default=str)


def get_logger(name: str = "src.aledg") -> logging.Logger:
    """Create a process-local logger which serializes records to JSON
    and uses a queue listener.

    Library modules log through ``logging.getLogger(__name__)`` below the
    ``src.aledg`` package, so configuring the package logger once routes
    the whole solver through the same JSON stream.

    Args:
        name (str): Logger name (defaults to "src.aledg").

    Returns:
        logging.Logger: Configured logger instance with JSON formatting.
    """
    logger = logging.getLogger(name)
    logger.setLevel(os.getenv("LOG_LEVEL", "INFO").upper())
    if any(isinstance(h, QueueHandler) for h in logger.handlers):
        return logger

    log_queue: queue.Queue[logging.LogRecord] = queue.Queue(-1)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(JsonFormatter())

    queue_handler = QueueHandler(log_queue)
    listener = QueueListener(log_queue, stream_handler)
    listener.start()
    # Flush queued records before the interpreter exits.
    atexit.register(listener.stop)

    logger.addHandler(queue_handler)
    logger.propagate = False

    return logger
