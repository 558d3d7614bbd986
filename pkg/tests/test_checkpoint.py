import numpy as np
import pytest

from core.checkpoint import HEADER, checkpoint_read, checkpoint_write, read_with_header, serialize
from core.dynamics import split_from_fields
from core.errors import CheckpointError
from core.lattice import Grid
from core.liealg import PAPER, PHYSICS


@pytest.fixture
def state(small_data):
    state = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    state.t = 0.125
    return state


def test_roundtrip_is_exact(state, tmp_path):
    path = str(tmp_path / "state.ymd")
    checkpoint_write(state, path)
    loaded, header = read_with_header(path)
    for a, b in zip(loaded.fields(), state.fields()):
        assert np.array_equal(a.data, b.data)
    assert loaded.t == state.t
    assert header["N"] == 8
    assert header["n_colors"] == 2
    assert header["convention"] == PHYSICS
    assert header["L"] == state.grid.L


def test_convention_is_recorded(state, tmp_path):
    path = str(tmp_path / "paper.ymd")
    checkpoint_write(state, path, convention=PAPER)
    assert read_with_header(path)[1]["convention"] == PAPER
    with pytest.raises(ValueError):
        serialize(state, convention="other")


def test_payload_is_x_fastest(state, tmp_path):
    N = state.grid.N
    state.Acf.data[0, 0] = np.arange(N)[:, None, None] * np.ones((N, N, N))
    blob = serialize(state)
    offset = HEADER.size + 2 * 9 * N**3 * 16
    first_row = np.frombuffer(blob, dtype="<f8", count=N, offset=offset)
    assert np.array_equal(first_row, np.arange(N, dtype=float))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(str(tmp_path / "absent.ymd"))
    assert excinfo.value.kind == "io"


def test_bad_magic(state, tmp_path):
    path = tmp_path / "bad.ymd"
    path.write_bytes(b"NOPE" + serialize(state)[4:])
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(str(path))
    assert excinfo.value.kind == "corrupt"


def test_unsupported_version(state, tmp_path):
    blob = bytearray(serialize(state))
    blob[4:8] = (2).to_bytes(4, "little")
    path = tmp_path / "v2.ymd"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(str(path))
    assert excinfo.value.kind == "unsupported_version"


def test_truncated_payload(state, tmp_path):
    path = tmp_path / "short.ymd"
    path.write_bytes(serialize(state)[:-16])
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(str(path))
    assert excinfo.value.kind == "corrupt"


def test_short_header(tmp_path):
    path = tmp_path / "tiny.ymd"
    path.write_bytes(b"YMD1")
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(str(path))
    assert excinfo.value.kind == "corrupt"


def test_grid_mismatch(state, tmp_path):
    path = str(tmp_path / "state.ymd")
    checkpoint_write(state, path)
    with pytest.raises(CheckpointError) as excinfo:
        checkpoint_read(path, grid=Grid(16))
    assert excinfo.value.kind == "dimension_mismatch"
    assert checkpoint_read(path, grid=Grid(8)).grid == Grid(8)


def test_error_kind_is_validated():
    with pytest.raises(ValueError):
        CheckpointError("x", kind="unknown")
