"""Checkpoint files: a fixed header followed by little-endian float32 payloads.

Layout:
    magic      4 bytes  b"ARLC"
    version    u16
    spec hash  32 bytes (NetworkLayout.spec_hash)
    n_theta    u64
    n_theta_v  u64
    theta      n_theta   x <f4
    theta_v    n_theta_v x <f4
"""

import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..exceptions import (
    CheckpointError,
    CheckpointHeaderError,
    CheckpointSpecMismatchError,
    CheckpointTruncatedError,
)
from ..models.mlp import NetworkLayout

logger = logging.getLogger(__name__)

MAGIC = b"ARLC"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sH32sQQ")
PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    spec_hash: bytes
    theta: np.ndarray
    theta_v: np.ndarray


def checkpoint_save(
    path: Union[str, os.PathLike],
    layout: NetworkLayout,
    theta: np.ndarray,
    theta_v: Optional[np.ndarray] = None,
) -> str:
    """
    Write theta (and theta_v) atomically: the file appears complete or not at all

    Returns:
        The path written
    """
    theta = np.ascontiguousarray(theta, dtype=PAYLOAD_DTYPE)
    theta_v = np.ascontiguousarray(
        theta_v if theta_v is not None else np.zeros(0), dtype=PAYLOAD_DTYPE
    )
    if theta.shape != (layout.theta_size,) or theta_v.shape != (layout.theta_v_size,):
        raise CheckpointSpecMismatchError(
            f"parameter lengths ({theta.size}, {theta_v.size}) do not match layout "
            f"({layout.theta_size}, {layout.theta_v_size})"
        )

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    header = HEADER.pack(MAGIC, FORMAT_VERSION, layout.spec_hash(), theta.size, theta_v.size)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(theta.tobytes())
            f.write(theta_v.tobytes())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise

    logger.info(f"Saved checkpoint {path} ({theta.size} + {theta_v.size} parameters)")
    return path


def checkpoint_load(path: Union[str, os.PathLike], layout: Optional[NetworkLayout] = None) -> Checkpoint:
    """
    Read and validate a checkpoint

    Args:
        path: File to read
        layout: When given, the stored spec hash and counts must match it

    Raises:
        CheckpointHeaderError: bad magic, unknown version or short header
        CheckpointTruncatedError: payload shorter (or longer) than the header says
        CheckpointSpecMismatchError: written for a different layout
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if len(data) < HEADER.size:
        raise CheckpointHeaderError(f"{path}: header is {len(data)} bytes, expected {HEADER.size}")

    magic, version, spec_hash, n_theta, n_theta_v = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointHeaderError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointHeaderError(f"{path}: unsupported format version {version}")

    expected = HEADER.size + (n_theta + n_theta_v) * PAYLOAD_DTYPE.itemsize
    if len(data) != expected:
        raise CheckpointTruncatedError(f"{path}: {len(data)} bytes, header promises {expected}")

    if layout is not None:
        if spec_hash != layout.spec_hash():
            raise CheckpointSpecMismatchError(f"{path}: network spec hash does not match")
        if n_theta != layout.theta_size or n_theta_v != layout.theta_v_size:
            raise CheckpointSpecMismatchError(f"{path}: parameter counts do not match layout")

    theta = np.frombuffer(data, dtype=PAYLOAD_DTYPE, count=n_theta, offset=HEADER.size).copy()
    theta_v = np.frombuffer(
        data, dtype=PAYLOAD_DTYPE, count=n_theta_v,
        offset=HEADER.size + n_theta * PAYLOAD_DTYPE.itemsize,
    ).copy()
    return Checkpoint(spec_hash=spec_hash, theta=theta, theta_v=theta_v)
