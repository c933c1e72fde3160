"""
Parameter checkpoints: named float64 arrays in an ``.npz`` container with a JSON header.

The header records the container format version, the model kind, array shapes and free-form
metadata (architecture configuration, vocabulary). Writes go to a temporary file in the target
directory and are renamed into place.
"""

from __future__ import annotations

import logging
import os
import tempfile
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..exceptions import CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
HEADER_KEY = "__header__"
PARAM_PREFIX = "param/"


class CheckpointHeader(BaseModel):
    format_version: int = Field(description="Container format version")
    kind: str = Field(description="Model kind stored in the container")
    shapes: dict[str, list[int]] = Field(description="Shape of every stored array")
    metadata: dict[str, Any] = Field(default_factory=dict, description="Model configuration")


def save_checkpoint(
    path: Path,
    arrays: Mapping[str, np.ndarray],
    kind: str,
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    """
    Write ``arrays`` and a versioned header to ``path`` atomically.

    Raises:
        CheckpointError: If the file cannot be written.
    """
    path = Path(path)
    header = CheckpointHeader(
        format_version=CHECKPOINT_FORMAT_VERSION,
        kind=kind,
        shapes={name: list(np.shape(a)) for name, a in arrays.items()},
        metadata=dict(metadata or {}),
    )
    payload = {
        f"{PARAM_PREFIX}{name}": np.asarray(a, dtype=np.float64) for name, a in arrays.items()
    }
    payload[HEADER_KEY] = np.array(header.model_dump_json())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, **payload)  # pyright: ignore[reportArgumentType]
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise CheckpointError(f"Cannot write checkpoint {path}: {exc}") from exc
    logger.info(f"Saved {kind} checkpoint with {len(arrays)} arrays to {path}")
    return path


def load_checkpoint(
    path: Path, kind: str | None = None
) -> tuple[dict[str, np.ndarray], CheckpointHeader]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: If the file is unreadable, not a checkpoint, of another format version,
            of another ``kind``, or its arrays disagree with the header.
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            contents = {name: data[name] for name in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc

    if HEADER_KEY not in contents:
        raise CheckpointError(f"{path} is not a trajsimp checkpoint (no header)")
    try:
        header = CheckpointHeader.model_validate_json(str(contents.pop(HEADER_KEY)))
    except ValidationError as exc:
        raise CheckpointError(f"Corrupt checkpoint header in {path}") from exc
    if header.format_version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has format version {header.format_version}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    if kind is not None and header.kind != kind:
        raise CheckpointError(f"Checkpoint {path} holds a {header.kind}, expected {kind}")

    arrays = {
        name.removeprefix(PARAM_PREFIX): array
        for name, array in contents.items()
        if name.startswith(PARAM_PREFIX)
    }
    for name, shape in header.shapes.items():
        if name not in arrays:
            raise CheckpointError(f"Checkpoint {path} is missing array {name}")
        if list(arrays[name].shape) != shape:
            raise CheckpointError(f"Array {name} in {path} does not match its recorded shape")
    return arrays, header
