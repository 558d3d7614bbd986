"""
Output formatter for the Yang-Mills-Dirac workbench
Versioned CSV tables, the verification report and console messages
"""

import csv
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

TABLE_VERSION = 1

DIAGNOSTIC_COLUMNS = (
    "t",
    "gauss_residual",
    "gauss_residual_physical",
    "charge",
    "energy",
    "hs_adf",
    "hs_acf",
    "hl_psi",
)
GAUGE_HISTORY_COLUMNS = ("iteration", "v_norm", "cf_norm", "u_norm", "smallness")
VERIFY_COLUMNS = ("name", "value", "threshold", "passed")
CONVENTION_COLUMNS = (
    "convention",
    "residual_drift",
    "residual_drift_refined",
    "refinement_slope",
    "charge_drift",
    "floor",
    "consistent",
)
REGULARITY_COLUMNS = ("field", "flavor", "s", "b", "norm", "window_factor")


class TermColors:
    """ANSI colour codes used on the console"""

    BRIGHT_CYAN = "\033[96m"
    BRIGHT_RED = "\033[91m"
    BRIGHT_GREEN = "\033[92m"
    WHITE = "\033[97m"
    RESET = "\033[0m"


def format_value(value: Any) -> str:
    """Cell text: floats by repr (exact round trip), booleans as true/false"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path: str, table: str, columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> str:
    """
    Write a CSV table with the header comment ``# ymd <table> v1``

    Args:
        path: Destination file
        table: Table name recorded in the header comment
        columns: Column order; each row must provide every column
        rows: Row dictionaries

    Returns:
        str: The path written
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# ymd {table} v{TABLE_VERSION}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[column]) for column in columns])
    return path


def read_table(path: str) -> Tuple[str, List[Dict[str, str]]]:
    """
    Read a table written by write_table

    Returns:
        tuple: (table name, rows as dictionaries of strings)
    """
    with open(path, "r", newline="") as f:
        header = f.readline().strip().split()
        if len(header) != 4 or header[:2] != ["#", "ymd"]:
            raise ValueError(f"{path} is not a ymd table")
        rows = list(csv.DictReader(f))
    return header[2], rows


def format_verify_table(results: List[Dict[str, Any]], color: bool = True) -> str:
    """
    Format verification results, one line per property

    Args:
        results: Rows with name, value, threshold and passed
        color: Whether to include ANSI color codes

    Returns:
        str: Formatted table
    """
    if not results:
        return "No checks were run."
    cyan = TermColors.BRIGHT_CYAN if color else ""
    green = TermColors.BRIGHT_GREEN if color else ""
    red = TermColors.BRIGHT_RED if color else ""
    reset = TermColors.RESET if color else ""

    name_width = max(len("Check"), max(len(r["name"]) for r in results))
    header = f"{cyan}{'Check':<{name_width}}  {'Value':>12}  {'Threshold':>12}  Result{reset}"
    separator = f"{cyan}{'-' * name_width}  {'-' * 12}  {'-' * 12}  ------{reset}"
    lines = [header, separator]
    for r in results:
        status = f"{green}PASS{reset}" if r["passed"] else f"{red}FAIL{reset}"
        lines.append(f"{r['name']:<{name_width}}  {r['value']:>12.3e}  {r['threshold']:>12.3e}  {status}")
    failed = sum(1 for r in results if not r["passed"])
    summary = f"{len(results) - failed}/{len(results)} checks passed"
    lines.append(f"\n{green if not failed else red}{summary}{reset}")
    return "\n".join(lines)


def format_error(error_message: str, color: bool = True) -> str:
    """
    Format an error message

    Args:
        error_message: Error message to format
        color: Whether to include ANSI color codes

    Returns:
        str: Formatted error message
    """
    error_color = TermColors.BRIGHT_RED if color else ""
    reset = TermColors.RESET if color else ""
    return f"{error_color}ERROR: {error_message}{reset}"


def format_run_summary(results: Dict[str, Any], color: bool = True) -> str:
    """
    Summarise a driver result dictionary

    Args:
        results: Result dictionary with ``success`` and either ``error`` or
            the written ``artifacts``
        color: Whether to include ANSI color codes
    """
    if not results.get("success", False):
        return format_error(results.get("error", "Unknown error"), color)
    cyan = TermColors.BRIGHT_CYAN if color else ""
    white = TermColors.WHITE if color else ""
    reset = TermColors.RESET if color else ""
    lines = [f"{cyan}=== {results.get('command', 'run')} finished ==={reset}"]
    for key, value in results.get("summary", {}).items():
        lines.append(f"{white}{key}: {reset}{format_value(value)}")
    for path in results.get("artifacts", []):
        lines.append(f"  {path}")
    return "\n".join(lines)


def print_progress(
    current: int,
    total: int,
    prefix: str = "Progress",
    suffix: str = "Complete",
    length: int = 50,
    color: bool = True,
    stream: Optional[Any] = None,
) -> None:
    """
    Print a progress bar to the console

    Args:
        current: Current progress value
        total: Total progress value
        prefix: Text before the progress bar
        suffix: Text after the progress bar
        length: Length of the progress bar in characters
        color: Whether to include ANSI color codes
        stream: File object to print to (stderr by default)
    """
    stream = stream if stream is not None else sys.stderr
    cyan = TermColors.BRIGHT_CYAN if color else ""
    reset = TermColors.RESET if color else ""
    total = max(total, 1)
    percent = int(100 * (current / float(total)))
    filled_length = int(length * current // total)
    bar = f"{cyan}{'█' * filled_length}{reset}{'░' * (length - filled_length)}"
    print(f"\r{prefix} |{bar}| {percent}% {suffix}", end="", flush=True, file=stream)
    if current >= total:
        print(file=stream)
