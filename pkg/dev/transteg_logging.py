import logging
import sys

from pythonjsonlogger import jsonlogger

_TEXT_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def setup_logging(level: str = "WARNING", json_output: bool = False) -> logging.Logger:
    """Install a single stderr handler on the root logger (idempotent)."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_transteg", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler._transteg = True
    if json_output:
        handler.setFormatter(jsonlogger.JsonFormatter(_JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(_TEXT_FORMAT))

    root.addHandler(handler)
    root.setLevel(getattr(logging, level.upper(), logging.WARNING))
    return root
