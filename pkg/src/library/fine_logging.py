"""Logging setup for horizon-lab.

Based on: https://github.com/mCodingLLC/VideosSampleCode/blob/master/videos/135_modern_logging

`setup_logging` loads a dictConfig JSON such as `logger-config.json` at the
repository root (rich console on stderr plus a JSON-lines file behind a
queue handler). Without a config file it installs a rich stderr handler
only. stdout stays reserved for reports.
"""

import atexit
import datetime as dt
import json
import logging
import logging.config
import logging.handlers
import typing as T
from pathlib import Path
from typing import override

from rich.console import Console
from rich.logging import RichHandler

FIRST_PARTY = ("library", "__main__")

LOG_RECORD_BUILTIN_ATTRS = {
    "args",
    "asctime",
    "created",
    "exc_info",
    "exc_text",
    "filename",
    "funcName",
    "levelname",
    "levelno",
    "lineno",
    "module",
    "msecs",
    "message",
    "msg",
    "name",
    "pathname",
    "process",
    "processName",
    "relativeCreated",
    "stack_info",
    "thread",
    "threadName",
    "taskName",
}


class JSONFormatter(logging.Formatter):
    """One JSON object per record; `fmt_keys` maps output keys to record attributes."""

    def __init__(self, *, fmt_keys: dict[str, str] | None = None):
        super().__init__()
        self.fmt_keys = fmt_keys if fmt_keys is not None else {}

    @override
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps(self._prepare_log_dict(record), default=str)

    def _prepare_log_dict(self, record: logging.LogRecord) -> dict[str, T.Any]:
        always_fields = {
            "message": record.getMessage(),
            "timestamp": dt.datetime.fromtimestamp(record.created, tz=dt.timezone.utc).isoformat(),
        }
        if record.exc_info is not None:
            always_fields["exc_info"] = self.formatException(record.exc_info)
        if record.stack_info is not None:
            always_fields["stack_info"] = self.formatStack(record.stack_info)

        message = {}
        for key, attribute in self.fmt_keys.items():
            value = always_fields.pop(attribute, None)
            message[key] = value if value is not None else getattr(record, attribute)
        message.update(always_fields)

        # fields passed through `extra=`
        for key, value in record.__dict__.items():
            if key not in LOG_RECORD_BUILTIN_ATTRS:
                message[key] = value
        return message


class DependencyFilter(logging.Filter):
    """Keep all `library` records, third-party records only from level `param` up.

    logrecord: https://docs.python.org/3/library/logging.html#logrecord-attributes
    custom filters: https://docs.python.org/3/howto/logging-cookbook.html#configuring-filters-with-dictconfig
    """

    def __init__(self, param: int | str = logging.WARNING):
        super().__init__()
        self.param = logging.getLevelName(param) if isinstance(param, str) else param

    @staticmethod
    def is_first_party(name: str) -> bool:
        return any(name == p or name.startswith(f"{p}.") for p in FIRST_PARTY)

    @override
    def filter(self, record: logging.LogRecord) -> bool:
        if self.is_first_party(record.name):
            return True
        return record.levelno >= self.param


def stderr_rich_handler(level: int | str = logging.INFO) -> RichHandler:
    """RichHandler writing to stderr; referenced from logger-config.json as a factory."""
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
    handler.setLevel(level)
    handler.addFilter(DependencyFilter())
    return handler


def _start_queue_listeners() -> None:
    for handler in logging.getLogger().handlers:
        if isinstance(handler, logging.handlers.QueueHandler) and handler.listener is not None:
            handler.listener.start()
            atexit.register(handler.listener.stop)


def setup_logging(config_file: Path | None = None, level: int | str = logging.INFO) -> None:
    if config_file is None:
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        root.addHandler(stderr_rich_handler(level))
        root.setLevel(level)
        return

    with Path(config_file).open("r") as f:
        config = json.load(f)
    for handler in config.get("handlers", {}).values():
        filename = handler.get("filename")
        if filename is not None:
            Path(filename).parent.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(config)
    _start_queue_listeners()
    logging.getLogger(__name__).debug(f"Logging configured from {config_file}")
