"""Data ingestion, the dichotomization helper, and document serialization.

All output documents are JSON with a schema_version field and every real
number written with 17 significant digits, which round-trips float64
exactly.
"""

from __future__ import annotations

import csv
import json
from json.encoder import encode_basestring_ascii
from pathlib import Path

import numpy as np

from .em import FitDiagnostics
from .constrained import SparseLcaModel
from .errors import MissingValueError, ParseError
from .model import (
    BinaryResponseMatrix,
    ClassProportions,
    ItemProbMatrix,
    LcaModel,
    OrderedPartition,
)
from .refine import ItemRefinement
from .simulate import ReplicationReport, SimSetting, SimulationResult

SCHEMA_VERSION = "1"


# --- ingestion --------------------------------------------------------------


def read_binary_csv(path, has_header: bool = False) -> BinaryResponseMatrix:
    """Parse a comma-separated matrix of 0/1 responses.

    With ``has_header`` the first row is kept as item labels. Any cell
    outside {0, 1}, a ragged row, or an empty cell is rejected with its
    (row, column) location; missing values are not supported.
    """
    path = Path(path)
    labels: tuple[str, ...] | None = None
    rows: list[list[int]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for row_number, record in enumerate(reader, start=1):
            if not record:
                continue
            if has_header and labels is None and row_number == 1:
                labels = tuple(cell.strip() for cell in record)
                continue
            parsed = []
            for col_number, cell in enumerate(record, start=1):
                text = cell.strip()
                if text == "":
                    raise MissingValueError(
                        f"missing value at row {row_number}, column {col_number}",
                        row=row_number,
                        column=col_number,
                    )
                if text not in ("0", "1"):
                    raise ParseError(
                        f"cell {text!r} at row {row_number}, column {col_number} "
                        "is not a 0/1 response",
                        row=row_number,
                        column=col_number,
                    )
                parsed.append(int(text))
            if rows and len(parsed) != len(rows[0]):
                raise ParseError(
                    f"row {row_number} has {len(parsed)} cells, expected {len(rows[0])}",
                    row=row_number,
                )
            if labels is not None and len(parsed) != len(labels):
                raise ParseError(
                    f"row {row_number} has {len(parsed)} cells for {len(labels)} labeled items",
                    row=row_number,
                )
            rows.append(parsed)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    return BinaryResponseMatrix(np.array(rows, dtype=np.uint8), item_labels=labels)


def dichotomize(
    ordinal,
    threshold: int = 4,
    n_categories: int = 5,
    reverse=None,
) -> BinaryResponseMatrix:
    """Binary-code an ordinal matrix: 1 iff the (aligned) code >= threshold.

    ``reverse`` marks items whose scale runs the other way; their codes are
    flipped to ``n_categories + 1 - code`` before thresholding. Codes must
    lie in 1..n_categories and the threshold in 2..n_categories.
    """
    codes = np.asarray(ordinal)
    if codes.ndim != 2:
        raise ParseError("ordinal matrix must be 2-D")
    if not 2 <= threshold <= n_categories:
        raise ParseError(f"threshold {threshold} outside 2..{n_categories}")
    bad = (codes < 1) | (codes > n_categories)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ParseError(
            f"code {codes[i, j]!r} at row {int(i) + 1}, column {int(j) + 1} "
            f"outside 1..{n_categories}",
            row=int(i) + 1,
            column=int(j) + 1,
        )
    aligned = codes.copy()
    if reverse is not None:
        reverse = np.asarray(reverse, dtype=bool)
        if reverse.shape != (codes.shape[1],):
            raise ParseError("reverse flags must have one entry per item")
        aligned[:, reverse] = n_categories + 1 - aligned[:, reverse]
    return BinaryResponseMatrix((aligned >= threshold).astype(np.uint8))


# --- JSON with 17-significant-digit reals -----------------------------------


class _Float17Encoder(json.JSONEncoder):
    """JSON encoder writing floats with %.17g (lossless for float64)."""

    def iterencode(self, o, _one_shot=False):
        def floatstr(x):
            if x != x:
                return "NaN"
            if x == float("inf"):
                return "Infinity"
            if x == float("-inf"):
                return "-Infinity"
            return format(x, ".17g")

        iterator = json.encoder._make_iterencode(
            {} if self.check_circular else None,
            self.default,
            encode_basestring_ascii,
            self.indent,
            floatstr,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot=False,
        )
        return iterator(o, 0)


def dumps_document(obj) -> str:
    return json.dumps(obj, cls=_Float17Encoder, indent=2)


def write_document(obj, path) -> None:
    Path(path).write_text(dumps_document(obj) + "\n")


def _vector(a) -> list[float]:
    return [float(x) for x in np.asarray(a).ravel()]


def _matrix(a) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(a)]


def _partition_1based(p: OrderedPartition) -> list[list[int]]:
    return [[c + 1 for c in block] for block in p.blocks]


def _partition_from_1based(blocks) -> OrderedPartition:
    return OrderedPartition(tuple(tuple(c - 1 for c in block) for block in blocks))


# --- model documents --------------------------------------------------------


def model_to_dict(model: LcaModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "k": model.k,
        "nu": _vector(model.nu),
        "beta": _matrix(model.beta),
        "log_likelihood": float(model.log_likelihood),
        "n_used": model.n_used,
    }


def model_from_dict(doc: dict) -> LcaModel:
    return LcaModel(
        k=int(doc["k"]),
        proportions=ClassProportions(np.array(doc["nu"])),
        items=ItemProbMatrix(np.array(doc["beta"])),
        log_likelihood=float(doc["log_likelihood"]),
        n_used=int(doc["n_used"]),
    )


def diagnostics_to_dict(diag: FitDiagnostics) -> dict:
    return {
        "iterations_used": diag.iterations_used,
        "converged": diag.converged,
        "ll_trace": _vector(diag.ll_trace),
        "start_index_selected": diag.start_index_selected,
    }


def sparse_model_to_dict(model: SparseLcaModel) -> dict:
    doc = model_to_dict(model.base)
    doc["partitions"] = [_partition_1based(p) for p in model.partitions]
    doc["se_beta"] = None if model.se_beta is None else _matrix(model.se_beta)
    doc["se_nu"] = None if model.se_nu is None else _vector(model.se_nu)
    doc["free_parameter_count"] = model.free_parameter_count
    return doc


def sparse_model_from_dict(doc: dict) -> SparseLcaModel:
    return SparseLcaModel(
        base=model_from_dict(doc),
        partitions=tuple(_partition_from_1based(p) for p in doc["partitions"]),
        se_beta=None if doc.get("se_beta") is None else np.array(doc["se_beta"]),
        se_nu=None if doc.get("se_nu") is None else np.array(doc["se_nu"]),
    )


def refinement_to_dict(refinement: ItemRefinement) -> dict:
    return {
        "item_index": refinement.item_index,
        "ebic_trace": _vector(refinement.ebic_trace),
        "selected_m": refinement.selected_m,
        "partition": _partition_1based(refinement.selected_partition),
        "candidate_betas": [_vector(c.beta) for c in refinement.candidates],
        "candidate_pseudo_ll": [float(c.pseudo_ll) for c in refinement.candidates],
    }


# --- simulation documents ---------------------------------------------------


def setting_to_dict(setting: SimSetting) -> dict:
    return {
        "k": setting.k,
        "j": setting.j,
        "level_spec": list(setting.level_spec),
        "n": setting.n,
        "rho_grid": list(setting.rho_grid),
        "n_replications": setting.n_replications,
        "seed": setting.seed,
        "preset_proportions": (
            None if setting.preset_proportions is None else list(setting.preset_proportions)
        ),
    }


def setting_from_dict(doc: dict) -> SimSetting:
    return SimSetting(
        k=int(doc["k"]),
        j=int(doc["j"]),
        level_spec=tuple(doc["level_spec"]),
        n=int(doc["n"]),
        rho_grid=tuple(doc.get("rho_grid", (1.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0))),
        n_replications=int(doc.get("n_replications", 100)),
        seed=int(doc.get("seed", 0)),
        preset_proportions=(
            None
            if doc.get("preset_proportions") is None
            else tuple(doc["preset_proportions"])
        ),
    )


def replication_to_dict(report: ReplicationReport) -> dict:
    return {
        "rep_index": report.rep_index,
        "failed": report.failed,
        "error": report.error,
        "under_count": report.under_count,
        "correct_count": report.correct_count,
        "over_count": report.over_count,
        "mean_item_ari": report.mean_item_ari,
        "mse_beta_unrestricted": report.mse_beta_unrestricted,
        "mse_beta_refined": report.mse_beta_refined,
        "mse_nu_unrestricted": report.mse_nu_unrestricted,
        "mse_nu_refined": report.mse_nu_refined,
        "per_rho": [
            {
                "rho": m.rho,
                "under_count": m.under_count,
                "correct_count": m.correct_count,
                "over_count": m.over_count,
                "mean_item_ari": m.mean_item_ari,
            }
            for m in report.per_rho
        ],
    }


def simulation_to_dict(result: SimulationResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "setting": setting_to_dict(result.setting),
        "aggregate": {
            **{k: v for k, v in result.aggregate.items() if k != "per_rho"},
            "per_rho": {format(r, "g"): v for r, v in result.aggregate["per_rho"].items()},
        },
        "replications": [replication_to_dict(r) for r in result.reports],
    }


def write_simulation_table(result: SimulationResult, path) -> None:
    """Flat table, one row per replication x rho, for plotting."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "rep_index",
                "rho",
                "failed",
                "under_count",
                "correct_count",
                "over_count",
                "mean_item_ari",
                "mse_beta_unrestricted",
                "mse_beta_refined",
                "mse_nu_unrestricted",
                "mse_nu_refined",
            ]
        )
        for report in result.reports:
            if report.failed:
                writer.writerow([report.rep_index, "", True] + [""] * 8)
                continue
            for m in report.per_rho:
                primary = m.rho == result.setting.primary_rho
                writer.writerow(
                    [
                        report.rep_index,
                        format(m.rho, "g"),
                        False,
                        m.under_count,
                        m.correct_count,
                        m.over_count,
                        format(m.mean_item_ari, ".17g"),
                        format(report.mse_beta_unrestricted, ".17g") if primary else "",
                        format(report.mse_beta_refined, ".17g") if primary else "",
                        format(report.mse_nu_unrestricted, ".17g") if primary else "",
                        format(report.mse_nu_refined, ".17g") if primary else "",
                    ]
                )
