"""
Run drivers behind the command line

Each driver takes a validated RunConfig, writes its artifacts and returns a
result dictionary: ``{"success": True, "artifacts": [...], "summary": {...}}``
or ``{"success": False, "error": ..., "exit_code": ...}``.
"""

import json
import logging
import traceback
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from core.analysis import regularity_report
from core.checkpoint import checkpoint_write, read_with_header
from core.dynamics import (
    DynamicsOptions,
    SecondOrderState,
    conserved_diagnostics,
    convention_experiment,
    evolve,
    gauss_residual,
    reconstruct,
    split_from_fields,
    step_count,
)
from core.errors import (
    AdmissibilityError,
    BlowUpError,
    CheckpointError,
    ConfigError,
    CostGuardError,
    GaugeFixError,
    GaussProjectionError,
    LieAlgebraError,
    PicardError,
)
from core.fields import random_small_data
from core.gauge import apply_gauge, gauge_fix, inverse_gauge
from core.lattice import Grid
from core.verification import VerifySettings, run_verification
from utils.config_manager import RunConfig
from utils.output_formatter import (
    CONVENTION_COLUMNS,
    DIAGNOSTIC_COLUMNS,
    GAUGE_HISTORY_COLUMNS,
    REGULARITY_COLUMNS,
    VERIFY_COLUMNS,
    write_table,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
EXIT_UNEXPECTED = 5

Callback = Optional[Callable[[Dict[str, Any]], None]]


def exit_code_for(error: BaseException) -> int:
    """Documented exit code of a failure"""
    if isinstance(error, (ConfigError, AdmissibilityError)):
        return EXIT_CONFIG
    if isinstance(error, (PicardError, BlowUpError, GaussProjectionError, GaugeFixError, LieAlgebraError, CostGuardError)):
        return EXIT_NUMERICAL
    if isinstance(error, (CheckpointError, OSError)):
        return EXIT_IO
    return EXIT_UNEXPECTED


def _failure(command: str, error: BaseException, callback: Callback, **extra: Any) -> Dict[str, Any]:
    error_msg = f"Error in {command}: {error}"
    code = exit_code_for(error)
    logging.error(error_msg)
    if code == EXIT_UNEXPECTED:
        logging.error(traceback.format_exc())
    if callback:
        callback({"status": "error", "error": error_msg})
    return {"success": False, "command": command, "error": error_msg, "exit_code": code, **extra}


def _options(config: RunConfig, convention: Optional[str] = None) -> DynamicsOptions:
    return DynamicsOptions(
        convention=convention or config.convention,
        picard_tol=config.integrator.picard_tol,
        picard_max=config.integrator.picard_max,
    )


def _history_rows(history: List[Dict[str, float]]) -> List[Dict[str, Any]]:
    return [{column: row[column] for column in GAUGE_HISTORY_COLUMNS} for row in history]


def snapshot_steps(steps: int, stride: int) -> List[int]:
    """Step indices at which evolve keeps snapshots"""
    indices = list(range(0, steps + 1, stride))
    if indices[-1] != steps:
        indices.append(steps)
    return indices


def run_simulation(config: RunConfig, output_dir: Optional[str] = None, callback: Callback = None) -> Dict[str, Any]:
    """
    Generate data, remove the curl-free part, evolve and map back

    Writes ``trace/step_XXXXXX.ymd`` (gauge-fixed split states),
    ``physical/step_XXXXXX.ymd`` (after the inverse transform),
    ``diagnostics.csv``, ``gauge_fix_history.csv`` and ``config.json``.

    Args:
        config: Validated run configuration
        output_dir: Overrides ``config.output.directory``
        callback: Optional callback function for progress updates

    Returns:
        Dictionary with success status and artifacts/error message; a failed
        run reports ``failed_step`` (None when it fails before evolving)
    """
    # Last completed step; None until the evolution starts
    progress: Dict[str, Optional[int]] = {"step": None}
    try:
        out = Path(output_dir or config.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        config_path = out / "config.json"
        config_path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")

        grid = Grid(config.grid.N, config.grid.L)
        exponents = config.exponents
        options = _options(config)
        data = random_small_data(
            grid, exponents.s, exponents.l, config.data.eps, config.data.seed, abelian=config.data.abelian
        )
        logging.info(f"Generated data on {grid}: eps={config.data.eps}, seed={config.data.seed}")

        fixed = gauge_fix(
            data.a0, data.a1, data.psi0, exponents.s, exponents.l, config.gauge.tol, config.gauge.max_iter
        )
        history_path = write_table(
            str(out / "gauge_fix_history.csv"), "gauge_fix_history", GAUGE_HISTORY_COLUMNS, _history_rows(fixed.history)
        )

        initial = split_from_fields(fixed.A, fixed.dtA, fixed.psi, 0.0, options)
        T, dt = config.integrator.T, config.integrator.step
        steps, _ = step_count(T, dt)
        stride = config.output.snapshot_stride

        def report(n: int, total: int, t: float) -> None:
            progress["step"] = n
            if callback:
                callback({"status": "evolving", "progress": n / total, "step": n, "t": t})

        progress["step"] = 0
        logging.info(f"Evolving {steps} steps to T={T} ({config.convention} convention)")
        _, snapshots = evolve(initial, T, dt, options, snapshot_stride=stride, callback=report)

        inverse = inverse_gauge(fixed.transform)
        rows = []
        for index, state in zip(snapshot_steps(steps, stride), snapshots):
            checkpoint_write(state, str(out / "trace" / f"step_{index:06d}.ymd"), config.convention)
            fields = reconstruct(state)
            A, dtA, psi = apply_gauge(inverse, fields.A, fields.dtA, fields.psi)
            physical = split_from_fields(A, dtA, psi, state.t, options)
            checkpoint_write(physical, str(out / "physical" / f"step_{index:06d}.ymd"), config.convention)
            row = conserved_diagnostics(state, exponents.s, exponents.l)
            row["gauss_residual_physical"] = gauss_residual(SecondOrderState(A, dtA, psi, state.t)).norm
            rows.append(row)
        diagnostics_path = write_table(str(out / "diagnostics.csv"), "diagnostics", DIAGNOSTIC_COLUMNS, rows)

        if callback:
            callback({"status": "complete", "progress": 1.0})
        return {
            "success": True,
            "command": "simulate",
            "artifacts": [str(config_path), history_path, diagnostics_path, str(out / "trace"), str(out / "physical")],
            "summary": {
                "steps": steps,
                "snapshots": len(snapshots),
                "gauge_fix_iterations": fixed.iterations,
                "final_gauss_residual": rows[-1]["gauss_residual"],
            },
        }
    except BlowUpError as e:
        return _failure("simulate", e, callback, failed_step=e.step)
    except Exception as e:
        step = progress["step"]
        return _failure("simulate", e, callback, failed_step=None if step is None else step + 1)


def run_gauge_fix(
    config: RunConfig, checkpoint: str, output_dir: Optional[str] = None, callback: Callback = None
) -> Dict[str, Any]:
    """
    Remove the curl-free part of a stored state

    Writes ``gauge_fix_history.csv`` and ``gauge_fixed.ymd``. The grid and
    convention come from the checkpoint, exponents and tolerances from the
    configuration.
    """
    try:
        if not checkpoint:
            raise CheckpointError("no checkpoint given", kind="io")
        out = Path(output_dir or config.output.directory)
        state, header = read_with_header(checkpoint)
        fields = reconstruct(state)
        exponents = config.exponents
        fixed = gauge_fix(
            fields.A, fields.dtA, fields.psi, exponents.s, exponents.l, config.gauge.tol, config.gauge.max_iter
        )
        history_path = write_table(
            str(out / "gauge_fix_history.csv"), "gauge_fix_history", GAUGE_HISTORY_COLUMNS, _history_rows(fixed.history)
        )
        options = _options(config, header["convention"])
        result_state = split_from_fields(fixed.A, fixed.dtA, fixed.psi, state.t, options)
        state_path = str(out / "gauge_fixed.ymd")
        checkpoint_write(result_state, state_path, header["convention"])
        if callback:
            callback({"status": "complete", "progress": 1.0})
        return {
            "success": True,
            "command": "gauge-fix",
            "artifacts": [history_path, state_path],
            "summary": {"iterations": fixed.iterations, "final_cf_norm": fixed.final_cf_norm},
        }
    except GaugeFixError as e:
        # Keep the partial history for inspection
        write_table(
            str(Path(output_dir or config.output.directory) / "gauge_fix_history.csv"),
            "gauge_fix_history",
            GAUGE_HISTORY_COLUMNS,
            _history_rows(e.history),
        )
        return _failure("gauge-fix", e, callback)
    except Exception as e:
        return _failure("gauge-fix", e, callback)


def _equally_spaced(states: list) -> list:
    """Longest prefix of snapshots with a common time spacing"""
    if len(states) < 3:
        return states
    spacing = states[1].t - states[0].t
    kept = states[:2]
    for state in states[2:]:
        if abs((state.t - kept[-1].t) - spacing) > 1e-9 * abs(spacing):
            break
        kept.append(state)
    return kept


def run_norms(
    config: RunConfig, trace_dir: Optional[str] = None, output_dir: Optional[str] = None, callback: Callback = None
) -> Dict[str, Any]:
    """
    Regularity report of a stored trace

    Reads every ``*.ymd`` file of ``trace_dir`` (default: the ``trace``
    directory of the configured output) and writes ``regularity_report.csv``.
    """
    try:
        out = Path(output_dir or config.output.directory)
        trace = Path(trace_dir) if trace_dir else out / "trace"
        files = sorted(trace.glob("*.ymd")) if trace.is_dir() else []
        if not files:
            raise CheckpointError(f"no trace snapshots in {trace}", kind="io")
        states = [read_with_header(str(path))[0] for path in files]
        states = _equally_spaced(sorted(states, key=lambda state: state.t))
        if len(states) < 8:
            raise CheckpointError(
                f"trace {trace} has {len(states)} equally spaced snapshots, at least 8 are needed", kind="io"
            )
        exponents = config.exponents
        rows = regularity_report(states, exponents.s, exponents.l, exponents.delta)
        report_path = write_table(str(out / "regularity_report.csv"), "regularity_report", REGULARITY_COLUMNS, rows)
        if callback:
            callback({"status": "complete", "progress": 1.0})
        return {
            "success": True,
            "command": "norms",
            "artifacts": [report_path],
            "summary": {row["field"]: row["norm"] for row in rows},
        }
    except Exception as e:
        return _failure("norms", e, callback)


def run_convention(config: RunConfig, output_dir: Optional[str] = None, callback: Callback = None) -> Dict[str, Any]:
    """Run the coupling-convention experiment and write ``convention_report.csv``"""
    try:
        out = Path(output_dir or config.output.directory)
        grid = Grid(config.grid.N, config.grid.L)
        result = convention_experiment(
            config.data.eps,
            grid,
            config.integrator.T,
            seed=config.data.seed,
            s=config.exponents.s,
            l=config.exponents.l,
            dt=config.integrator.dt,
            refinement=config.experiment.dt_refinement,
            abelian=config.data.abelian,
            picard_tol=config.integrator.picard_tol,
            picard_max=config.integrator.picard_max,
        )
        report_path = write_table(str(out / "convention_report.csv"), "convention_report", CONVENTION_COLUMNS, result["rows"])
        if callback:
            callback({"status": "complete", "progress": 1.0})
        return {
            "success": True,
            "command": "convention",
            "artifacts": [report_path],
            "summary": {"consistent": ",".join(result["consistent"]) or "none"},
        }
    except Exception as e:
        return _failure("convention", e, callback)


def run_verify(
    config: RunConfig,
    output_dir: Optional[str] = None,
    quick: bool = False,
    corrupt: Optional[str] = None,
    callback: Callback = None,
) -> Dict[str, Any]:
    """
    Run the property suite and write ``verify_report.csv``

    ``success`` means the suite ran; ``passed`` tells whether every property held.
    """
    try:
        out = Path(output_dir or config.output.directory)
        settings = VerifySettings(
            quick=quick,
            seed=config.data.seed,
            convention=config.convention,
            s=config.exponents.s,
            l=config.exponents.l,
        )
        rows = run_verification(settings, corrupt=corrupt, callback=callback)
        report_path = write_table(str(out / "verify_report.csv"), "verify_report", VERIFY_COLUMNS, rows)
        failed = [row["name"] for row in rows if not row["passed"]]
        return {
            "success": True,
            "command": "verify",
            "passed": not failed,
            "failed": failed,
            "rows": rows,
            "artifacts": [report_path],
            "summary": {"checks": len(rows), "failed": len(failed)},
        }
    except Exception as e:
        return _failure("verify", e, callback)
