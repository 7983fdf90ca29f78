"""Logging setup
Console logging for every command plus a JSON-lines record of the run next to its outputs.

Created: 19/10/2026
"""

# imports
import logging
import os
from typing import Optional
from pythonjsonlogger import jsonlogger

LOG_FILE = "run.log.jsonl"
CONSOLE_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


# modules
def configure_logging(out_dir: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Attach the console handler, and the structured file handler when out_dir is given, to the `btf` logger

    Calling it again replaces the handlers of the previous call. Without a level the current one is kept, INFO the
    first time.
    """
    root = logging.getLogger("btf")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    if level is not None:
        root.setLevel(level)
    elif root.level == logging.NOTSET:
        root.setLevel(logging.INFO)
    root.propagate = False

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root.addHandler(console)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        structured = logging.FileHandler(os.path.join(out_dir, LOG_FILE))
        structured.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
        root.addHandler(structured)
    return root
