import copy
import hashlib
import logging
import os

import numpy as np
import pandas as pd

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# CSV float precision shared by every writer in the package
CSV_FLOAT_FORMAT = "%.9g"


# --- ERRORS ---

class RFMapError(Exception):
    """Base class for every error raised by the toolkit"""
    kind = "error"
    exit_code = 3


class ConfigError(RFMapError):
    """Scenario configuration is missing, malformed or out of range"""
    kind = "config_error"
    exit_code = 1


class DataError(RFMapError):
    """Input data violates an operation's preconditions"""
    kind = "data_error"
    exit_code = 2


class DomainError(DataError, ValueError):
    """Argument outside the domain of an operation"""
    kind = "domain_error"


class InfeasibleError(DomainError):
    """Request cannot be satisfied (e.g. more distinct cells than the grid has)"""
    kind = "infeasible_error"


class ParseError(DataError):
    """File content does not conform to its format"""
    kind = "parse_error"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}: "
        if line is not None:
            location += f"line {line}: "
        super().__init__(location + message)


class NumericError(RFMapError):
    """Numerical failure: non-finite values, divergence, rank deficiency"""
    kind = "numeric_error"
    exit_code = 3


class IllPosedError(NumericError):
    """Least-squares system without a unique solution"""
    kind = "ill_posed_error"


def annotate_error(error, context):
    """Return a copy of an RFMapError with context prepended, keeping its class"""
    annotated = copy.copy(error)
    annotated.args = (f"{context}: {error}",)
    return annotated


def format_diagnostic(error):
    """One-line machine-parseable diagnostic for the error stream"""
    message = str(error).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    return f'error={error.kind} exit={error.exit_code} message="{message}"'


# --- LOGGING ---

def setup_logging(verbose=False):
    """Configure root logging once for command-line use"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


# --- SEEDS ---

def derive_seed(base_seed, *stage):
    """Derive an independent 32-bit seed for a named pipeline stage"""
    key = ":".join([str(int(base_seed))] + [str(s) for s in stage])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 32)


def make_rng(seed):
    """Seeded numpy Generator; every random draw in the package goes through one"""
    return np.random.default_rng(int(seed))


# --- FILE HELPERS ---

def ensure_parent_dir(path):
    """Create the parent directory of an output file if needed"""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_frame_csv(df, path):
    """Write a DataFrame with the package's fixed CSV conventions (LF, 9 significant digits)"""
    ensure_parent_dir(path)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")


def read_frame_csv(path, expected_columns):
    """Read a CSV as strings and check its header"""
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ParseError("empty file, header missing", line=1, path=path)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"unreadable CSV: {e}", path=path)

    if list(df.columns) != list(expected_columns):
        raise ParseError(
            f"expected header {','.join(expected_columns)}, got {','.join(map(str, df.columns))}",
            line=1,
            path=path,
        )
    return df


def parse_numeric_column(df, column, path, integer=False):
    """Convert a string column to numbers, failing with the first bad line number"""
    values = pd.to_numeric(df[column], errors="coerce")
    bad = values.isna() | ~np.isfinite(values.astype(float))
    if integer:
        bad |= values.notna() & (values != values.round())
    if bad.any():
        index = int(np.flatnonzero(bad.to_numpy())[0])
        # header is line 1
        raise ParseError(f"invalid {column} value {df[column].iloc[index]!r}", line=index + 2, path=path)
    if integer:
        return values.astype(np.int64).to_numpy()
    return values.astype(float).to_numpy()
