"""
Console logging for the trajsimp command line.

Library modules only create loggers; this module installs the single colored handler on the root
logger when a command starts.
"""

import logging
import sys

# Third-party loggers that announce their own setup at INFO
NOISY_LOGGERS = ("numexpr", "plotly")


class ColoredFormatter(logging.Formatter):
    """
    Formatter that pads the level name and wraps it in an ANSI color.

    DEBUG is cyan, INFO green, WARNING yellow, ERROR red and CRITICAL bold red.
    """

    COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[1;31m",
    }
    RESET = "\033[0m"

    def __init__(self, fmt: str | None = None, datefmt: str | None = None, use_color: bool = True):
        super().__init__(fmt, datefmt)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        if not self.use_color or record.levelname not in self.COLORS:
            return super().format(record)

        levelname = record.levelname
        record.levelname = f"{self.COLORS[levelname]}{levelname:<8}{self.RESET}"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


def setup_logging(level: str = "INFO", use_color: bool = True, show_module: bool = False) -> None:
    """
    Configure the root logger with one colored stderr handler.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        use_color: Whether to emit ANSI color codes
        show_module: Whether to include the logger name in each line
    """
    if show_module:
        log_format = "%(asctime)s - [%(name)s] - %(levelname)s - %(message)s"
    else:
        log_format = "%(asctime)s - %(levelname)s - %(message)s"

    formatter = ColoredFormatter(fmt=log_format, datefmt="%H:%M:%S", use_color=use_color)

    root_logger = logging.getLogger()
    root_logger.setLevel(level.upper())
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    # stderr keeps stdout free for tables and reports
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)
