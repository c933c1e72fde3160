"""Tests for console logging setup."""

import logging
from collections.abc import Iterator

import pytest
from trajsimp_cli.logging_config import ColoredFormatter, setup_logging


def make_record(level: int = logging.WARNING) -> logging.LogRecord:
    return logging.LogRecord("trajsimp.test", level, __file__, 1, "kept %d points", (5,), None)


@pytest.fixture
def restore_root() -> Iterator[None]:
    """Put pytest's root handlers and level back after setup_logging replaced them."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.mark.unit
class TestColoredFormatter:
    """Tests for level coloring."""

    def test_color_wraps_level(self) -> None:
        """Test that the padded level name is wrapped in its color code."""
        formatter = ColoredFormatter(fmt="%(levelname)s %(message)s")
        line = formatter.format(make_record())
        assert line == "\033[33mWARNING \033[0m kept 5 points"

    def test_record_restored(self) -> None:
        """Test that formatting leaves the record's level name untouched."""
        record = make_record()
        ColoredFormatter(fmt="%(levelname)s").format(record)
        assert record.levelname == "WARNING"

    def test_no_color(self) -> None:
        """Test that plain output carries no escape codes."""
        formatter = ColoredFormatter(fmt="%(levelname)s %(message)s", use_color=False)
        assert formatter.format(make_record(logging.INFO)) == "INFO kept 5 points"


@pytest.mark.unit
@pytest.mark.usefixtures("restore_root")
class TestSetupLogging:
    """Tests for root logger configuration."""

    def test_single_handler(self) -> None:
        """Test that repeated setup keeps exactly one handler at the requested level."""
        setup_logging("debug")
        setup_logging("warning", use_color=False)
        root = logging.getLogger()
        assert len(root.handlers) == 1
        assert root.level == logging.WARNING

    def test_module_column(self) -> None:
        """Test that show_module adds the logger name."""
        setup_logging(use_color=False, show_module=True)
        formatter = logging.getLogger().handlers[0].formatter
        assert formatter is not None
        assert "[trajsimp.test]" in formatter.format(make_record())

    def test_noisy_loggers_quieted(self) -> None:
        """Test that third-party loggers are raised to WARNING."""
        setup_logging("DEBUG")
        assert logging.getLogger("plotly").level == logging.WARNING
