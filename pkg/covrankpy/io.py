import json
import logging

import numpy as np
import pandas as pd

from covrankpy import utils
from covrankpy.linalg import Grid, SampleMatrix
from covrankpy.rank_test import RankReport
from covrankpy.simmodels import ModelSpec, get_model_spec
from covrankpy.utils import DataError

logger = logging.getLogger(__name__)

__all__ = [
    "load_dataset", "write_dataset", "write_report", "read_report",
    "read_json", "write_json", "load_model_spec", "SCHEMA_VERSION",
    ]

SCHEMA_VERSION = 1


def _parse_cell(
    cell = None
    ):
    """Exact float value of a CSV cell, NaN when it does not parse"""

    try:
        return float(cell)
    except (TypeError, ValueError):
        return np.nan


def _is_grid_row(
    vals = None
    ):
    """True if a parsed row is strictly increasing inside [0, 1]"""

    return bool(
        np.all(np.isfinite(vals)) and vals.min() >= 0 and vals.max() <= 1 and np.all(np.diff(vals) > 0)
        )


def load_dataset(
    path = None
    ):
    """Read an n x L sample from a comma separated file

    The first row is taken as the grid when it is strictly increasing within [0, 1]; a first row with no numeric
    cell is skipped as a label row. Without a grid row the grid defaults to t_j = j/(L+1).

    Args:
        path (str): path of the CSV file. Defaults to None.

    Returns:
        SampleMatrix: the sample and its grid
    """

    if path is None:
        raise DataError("Invalid or missing 'path' argument")

    logger.info("Reading dataset %s", path)

    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True,
                          skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"Dataset {path} is empty")
    except pd.errors.ParserError as e:
        raise DataError(f"Ragged rows in {path}: {e}")

    # fields missing from short rows come back as NaN, present cells as strings
    missing = raw.isna().to_numpy()
    if missing.any():
        row = int(np.argwhere(missing)[0][0]) + 1
        raise DataError(f"Ragged rows in {path}: row {row} has fewer than {raw.shape[1]} fields")

    # float() is round-trip exact, pd.to_numeric's fast parser is not
    text = raw.to_numpy()
    vals = np.array([[_parse_cell(c) for c in row] for row in text], dtype=float).reshape(text.shape)

    start = 0
    grid  = None

    if np.all(np.isnan(vals[0])) and not any(c.strip().lower() in ("nan", "inf", "-inf") for c in text[0]):
        start = 1
    elif _is_grid_row(vals[0]):
        grid  = Grid(vals[0])
        start = 1

    data = vals[start:]

    if data.shape[0] == 0:
        raise DataError(f"Dataset {path} has no data rows")

    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        i, j = bad[0]
        raise DataError(f"Cannot parse a finite number at row {i + start + 1}, column {j + 1} of {path}: "
                        f"'{text[i + start, j]}'")

    return SampleMatrix(data, grid=grid)


def write_dataset(
    sample = None,
    path   = None
    ):
    """Write a sample as CSV with the grid as header row

    Args:
        sample (SampleMatrix): sample to write. Defaults to None.
        path (str): output path. Defaults to None.
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    df = pd.DataFrame(sample.data, columns=[repr(float(t)) for t in sample.grid.nodes])

    df.to_csv(path, index=False, float_format="%.17g")

    logger.info("Wrote %d x %d dataset to %s", sample.n, sample.L, path)


def _to_builtin(
    obj = None
    ):
    """json default hook for numpy scalars and arrays"""

    if isinstance(obj, np.integer):
        return int(obj)

    if isinstance(obj, np.floating):
        return float(obj)

    if isinstance(obj, np.bool_):
        return bool(obj)

    if isinstance(obj, np.ndarray):
        return obj.tolist()

    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(
    obj  = None,
    path = None
    ):
    """Write a JSON document with numpy values converted"""

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_to_builtin)
        fh.write("\n")


def read_json(
    path = None
    ):
    """Read a JSON document, malformed documents raise DataError"""

    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed JSON in {path}: {e}")


def write_report(
    report     = None,
    path       = None,
    wall_clock = None
    ):
    """Write a rank report as a versioned JSON document

    Args:
        report (RankReport): report to write. Defaults to None.
        path (str): output path. Defaults to None.
        wall_clock (float, optional): elapsed seconds to record. Defaults to None.
    """

    from covrankpy import __version__

    if report is None or path is None:
        raise DataError("Invalid or missing 'report', 'path' arguments")

    doc = {
        "schema_version":     SCHEMA_VERSION,
        "tool_version":       __version__,
        "seed":               report.config.seed,
        "wall_clock_seconds": wall_clock,
        "warnings":           list(report.warnings),
        "report":             report.to_dict(),
        }

    write_json(doc, path)

    logger.info("Wrote report to %s", path)


def read_report(
    path      = None,
    with_meta = False
    ):
    """Read a report written by write_report

    Args:
        path (str): report path. Defaults to None.
        with_meta (bool, optional): also return the document's metadata. Defaults to False.

    Returns:
        RankReport, or (RankReport, dict) when with_meta is True
    """

    if path is None:
        raise DataError("Invalid or missing 'path' argument")

    doc = read_json(path)

    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"Unsupported report schema version {doc.get('schema_version')} in {path}")

    report = RankReport.from_dict(doc["report"])

    if with_meta:
        return report, {k: v for k, v in doc.items() if k != "report"}

    return report


def load_model_spec(
    source = None
    ):
    """Model spec from a registered name or a JSON document path

    Args:
        source (str): model name such as "A1", or path to a JSON file holding ModelSpec fields. Defaults to None.

    Returns:
        ModelSpec: the model
    """

    if source is None:
        raise DataError("Invalid or missing 'source' argument")

    if str(source).lower().endswith(".json"):
        return ModelSpec.from_dict(read_json(source))

    return get_model_spec(source)
