"""
Binary checkpoints of split-system states

Layout (little-endian): magic ``YMD1``, version u32, N u32, n_colors u32,
convention u8, time f64, box length f64, then the arrays Adf_plus,
Adf_minus (complex128), Acf, dtAcf (float64), psi_plus, psi_minus
(complex128), each with the spatial index x varying fastest.
"""

import logging
import os
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from core.dynamics import SimulationState
from core.errors import CheckpointError
from core.lattice import Grid, LieVectorField, SpinorField
from core.liealg import CONVENTIONS, PHYSICS

MAGIC = b"YMD1"
VERSION = 1
N_COLORS = 2
HEADER = struct.Struct("<4sIIIBdd")

# (field, component shape, dtype)
LAYOUT = (
    ("Adf_plus", (3, 3), "<c16"),
    ("Adf_minus", (3, 3), "<c16"),
    ("Acf", (3, 3), "<f8"),
    ("dtAcf", (3, 3), "<f8"),
    ("psi_plus", (2, 4), "<c16"),
    ("psi_minus", (2, 4), "<c16"),
)
CONVENTION_CODES = {name: code for code, name in enumerate(CONVENTIONS)}


def _payload_size(N: int) -> int:
    total = 0
    for _, components, dtype in LAYOUT:
        total += int(np.prod(components)) * N**3 * np.dtype(dtype).itemsize
    return total


def _x_fastest(data: np.ndarray) -> np.ndarray:
    # (..., x, y, z) -> (..., z, y, x) so C order runs over x first
    return np.swapaxes(data, -1, -3)


def serialize(state: SimulationState, convention: str = PHYSICS) -> bytes:
    """Checkpoint bytes of a state"""
    if convention not in CONVENTION_CODES:
        raise ValueError(f"Unknown convention {convention!r}")
    grid = state.grid
    parts = [HEADER.pack(MAGIC, VERSION, grid.N, N_COLORS, CONVENTION_CODES[convention], float(state.t), grid.L)]
    for name, _, dtype in LAYOUT:
        data = getattr(state, name).data
        if dtype == "<f8":
            data = np.real(data)
        parts.append(np.ascontiguousarray(_x_fastest(data), dtype=dtype).tobytes())
    return b"".join(parts)


def checkpoint_write(state: SimulationState, path: str, convention: str = PHYSICS) -> None:
    """
    Write a state to ``path`` (through a temporary file, then renamed)

    Raises:
        CheckpointError: kind ``io`` on any file-system failure
    """
    payload = serialize(state, convention)
    temporary = f"{path}.tmp"
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(temporary, "wb") as handle:
            handle.write(payload)
        os.replace(temporary, path)
    except OSError as e:
        raise CheckpointError(f"cannot write {path}: {e}", kind="io") from e
    logging.debug(f"Checkpoint written to {path} (t={state.t!r})")


def parse_header(blob: bytes) -> Dict[str, Any]:
    """
    Decode and validate the header

    Raises:
        CheckpointError: ``corrupt`` for a short header or bad magic,
            ``unsupported_version`` for another format version
    """
    if len(blob) < HEADER.size:
        raise CheckpointError(f"header needs {HEADER.size} bytes, found {len(blob)}", kind="corrupt")
    magic, version, N, n_colors, code, t, L = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", kind="corrupt")
    if version != VERSION:
        raise CheckpointError(f"version {version} (this build reads {VERSION})", kind="unsupported_version")
    if code >= len(CONVENTIONS):
        raise CheckpointError(f"unknown convention code {code}", kind="corrupt")
    return {"version": version, "N": N, "n_colors": n_colors, "convention": CONVENTIONS[code], "t": t, "L": L}


def deserialize(blob: bytes, grid: Optional[Grid] = None) -> Tuple[SimulationState, Dict[str, Any]]:
    """
    Rebuild a state from checkpoint bytes

    Args:
        blob: File contents
        grid: When given, the checkpoint must match it

    Returns:
        tuple: (state, header)
    """
    header = parse_header(blob)
    N, L = header["N"], header["L"]
    if header["n_colors"] != N_COLORS:
        raise CheckpointError(f"{header['n_colors']} colours, expected {N_COLORS}", kind="dimension_mismatch")
    if grid is not None and (grid.N != N or grid.L != L):
        raise CheckpointError(f"grid N={N}, L={L!r} does not match {grid}", kind="dimension_mismatch")
    expected = HEADER.size + _payload_size(N)
    if len(blob) != expected:
        raise CheckpointError(f"expected {expected} bytes, found {len(blob)}", kind="corrupt")
    try:
        file_grid = grid if grid is not None else Grid(N, L)
    except ValueError as e:
        raise CheckpointError(str(e), kind="corrupt") from e

    offset = HEADER.size
    arrays = {}
    for name, components, dtype in LAYOUT:
        count = int(np.prod(components)) * N**3
        flat = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        offset += count * np.dtype(dtype).itemsize
        stored = flat.reshape(components + (N, N, N))
        arrays[name] = np.array(_x_fastest(stored), dtype=np.dtype(dtype).newbyteorder("="))

    state = SimulationState(
        Adf_plus=LieVectorField(arrays["Adf_plus"], file_grid),
        Adf_minus=LieVectorField(arrays["Adf_minus"], file_grid),
        Acf=LieVectorField(arrays["Acf"], file_grid),
        dtAcf=LieVectorField(arrays["dtAcf"], file_grid),
        psi_plus=SpinorField(arrays["psi_plus"], file_grid),
        psi_minus=SpinorField(arrays["psi_minus"], file_grid),
        t=header["t"],
    )
    return state, header


def checkpoint_read(path: str, grid: Optional[Grid] = None) -> SimulationState:
    """
    Read a checkpoint written by checkpoint_write

    Raises:
        CheckpointError: ``io``, ``corrupt``, ``unsupported_version`` or
            ``dimension_mismatch``
    """
    return read_with_header(path, grid)[0]


def read_with_header(path: str, grid: Optional[Grid] = None) -> Tuple[SimulationState, Dict[str, Any]]:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}", kind="io") from e
    return deserialize(blob, grid)
