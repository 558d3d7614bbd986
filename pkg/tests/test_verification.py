import numpy as np
import pytest

from core import spectral
from core.lattice import LieVectorField
from core.verification import (
    CHECKS,
    VerifySettings,
    check_hodge_and_parseval,
    check_linear_exactness,
    check_null_cancellation,
    check_null_identities,
    check_projection_algebra,
    check_spinor_identities,
    check_symbol_scans,
    run_verification,
)

QUICK = VerifySettings(quick=True)


def test_settings():
    assert QUICK.field_N == 8 and VerifySettings().field_N == 16
    assert QUICK.gauss_run == (0.2, 1e-2)
    assert VerifySettings().gauss_run == (1.0, 1e-3)
    assert QUICK.options.convention == "physics"


def test_rows_have_report_columns():
    rows = check_projection_algebra(QUICK)
    assert all(set(row) == {"name", "value", "threshold", "passed"} for row in rows)
    assert all(row["passed"] for row in rows)


def test_quick_suite_passes():
    updates = []
    rows = run_verification(QUICK, callback=updates.append)
    failed = [row["name"] for row in rows if not row["passed"]]
    assert failed == []
    assert len({row["name"] for row in rows}) == len(rows)
    assert updates[-1] == {"status": "complete", "progress": 1.0}
    assert len(updates) == len(CHECKS) + 1


def test_corrupted_riesz_symbol_is_detected():
    rows = run_verification(
        QUICK, corrupt=spectral.MODIFIED_RIESZ, checks=[check_spinor_identities, check_symbol_scans]
    )
    failed = {row["name"] for row in rows if not row["passed"]}
    assert failed == {"identity_2.7", "current_null_split"}
    # The corruption is lifted afterwards
    assert all(row["passed"] for row in run_verification(QUICK, checks=[check_spinor_identities]))


@pytest.mark.parametrize(
    "kind, check, expected",
    [
        (spectral.ABS_GRAD, check_spinor_identities, "identity_2.8"),
        (spectral.PARTIAL, check_spinor_identities, "identity_2.8"),
        (spectral.RIESZ, check_null_identities, "identity_50"),
        (spectral.LERAY, check_hodge_and_parseval, "hodge_reconstruction"),
        (spectral.CURL_FREE, check_hodge_and_parseval, "hodge_reconstruction"),
        (spectral.BRACKET_GRAD, check_linear_exactness, "linear_exactness"),
    ],
)
def test_every_corrupted_kind_is_detected(kind, check, expected):
    assert all(row["passed"] for row in run_verification(QUICK, checks=[check]))
    rows = run_verification(QUICK, corrupt=kind, checks=[check])
    assert expected in {row["name"] for row in rows if not row["passed"]}


def test_corruption_reaches_projectors(grid):
    field = LieVectorField(np.random.default_rng(2).standard_normal((3, 3) + grid.shape), grid)
    df, cf = spectral.hodge_split(field)
    for kind, clean in ((spectral.LERAY, df), (spectral.CURL_FREE, cf)):
        with spectral.corrupted_multiplier(kind):
            split = spectral.hodge_split(field)
        changed = split[0] if kind == spectral.LERAY else split[1]
        assert np.max(np.abs(changed.data - clean.data)) > 1e-8 * clean.max_abs()


def test_every_kind_is_covered():
    assert set(spectral.KINDS) == {
        spectral.MODIFIED_RIESZ,
        spectral.ABS_GRAD,
        spectral.PARTIAL,
        spectral.RIESZ,
        spectral.LERAY,
        spectral.CURL_FREE,
        spectral.BRACKET_GRAD,
    }


def test_null_cancellation_rows():
    rows = check_null_cancellation(QUICK)
    assert [row["name"] for row in rows] == ["qij_parallel_cancellation", "angular_weights"]
    assert all(row["passed"] for row in rows)
