"""End-to-end pipeline: class-count selection, unrestricted fit, item-level
refinement, constrained re-estimation with standard errors, and the
presentation artifacts (class ordering, clustered heatmap data).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage

from .constrained import SparseLcaModel, constrained_em, standard_errors
from .em import EmConfig, FitDiagnostics, em_fit, select_num_classes
from .errors import PipelineStageError
from .io import (
    SCHEMA_VERSION,
    diagnostics_to_dict,
    model_to_dict,
    refinement_to_dict,
    sparse_model_to_dict,
    _matrix,
)
from .model import BinaryResponseMatrix, ItemProbMatrix, LcaModel, posterior
from .refine import EbicConfig, ItemRefinement, refine_item


@dataclass(frozen=True)
class PipelineOutput:
    """Every stage's artifacts plus the presentation orderings.

    ``class_order`` lists fitted class indices in ascending class-average
    refined probability; ``item_order`` is the leaf order of average-linkage
    hierarchical clustering of the refined item profiles. ``heatmap`` is the
    final beta matrix under those two reorderings.
    """

    unrestricted: LcaModel
    diagnostics: FitDiagnostics
    bic_trace: tuple[tuple[int, float], ...]
    refinements: tuple[ItemRefinement, ...]
    final: SparseLcaModel
    final_diagnostics: FitDiagnostics
    class_order: tuple[int, ...]
    item_order: tuple[int, ...]
    heatmap: np.ndarray
    item_labels: tuple[str, ...]


def cluster_item_order(beta: np.ndarray) -> tuple[int, ...]:
    """Leaf order of average-linkage clustering on Euclidean row distance."""
    if beta.shape[0] < 2:
        return tuple(range(beta.shape[0]))
    return tuple(int(i) for i in leaves_list(linkage(beta, method="average")))


def presentation_class_order(beta: np.ndarray) -> tuple[int, ...]:
    """Class indices sorted by ascending average item-response probability."""
    return tuple(int(k) for k in np.argsort(beta.mean(axis=0), kind="stable"))


def run_pipeline(
    data: BinaryResponseMatrix,
    k_range: int | tuple[int, int],
    ebic_config: EbicConfig = EbicConfig(),
    em_config: EmConfig = EmConfig(),
    compute_se: bool = True,
) -> PipelineOutput:
    """Run the full two-stage procedure on one dataset.

    ``k_range`` is either a fixed class count or an inclusive (min, max)
    range searched by BIC. Stage failures raise PipelineStageError carrying
    the stage name and the artifacts produced so far.
    """
    state: dict = {}

    def stage(name: str, fn):
        try:
            return fn()
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(name, exc, state) from exc

    if isinstance(k_range, int):
        k, bic_trace = k_range, ()
    else:
        k_min, k_max = k_range
        if k_min == k_max:
            k, bic_trace = k_min, ()
        else:
            k, trace = stage(
                "select-k", lambda: select_num_classes(data, k_min, k_max, em_config)
            )
            bic_trace = tuple(trace)
    state["k"] = k
    state["bic_trace"] = [list(t) for t in bic_trace]

    fitted, diagnostics = stage("fit", lambda: em_fit(data, k, em_config))
    state["unrestricted"] = model_to_dict(fitted)
    state["diagnostics"] = diagnostics_to_dict(diagnostics)

    gamma = stage("posterior", lambda: posterior(data, fitted))

    refinements = stage(
        "refine",
        lambda: tuple(
            refine_item(j, data, gamma, fitted.items, ebic_config) for j in range(data.n_items)
        ),
    )
    state["refinements"] = [refinement_to_dict(r) for r in refinements]

    def _constrained():
        refined_beta = np.vstack([r.selected.beta for r in refinements])
        init = LcaModel(
            k=k,
            proportions=fitted.proportions,
            items=ItemProbMatrix(refined_beta),
            log_likelihood=fitted.log_likelihood,
            n_used=fitted.n_used,
        )
        partitions = [r.selected_partition for r in refinements]
        return constrained_em(data, partitions, init, em_config)

    final, final_diagnostics = stage("constrained-fit", _constrained)
    state["final"] = sparse_model_to_dict(final)

    if compute_se:
        final = stage("standard-errors", lambda: standard_errors(data, final))
        state["final"] = sparse_model_to_dict(final)

    class_order = presentation_class_order(final.base.beta)
    item_order = stage("heatmap", lambda: cluster_item_order(final.base.beta))
    heatmap = final.base.beta[np.ix_(item_order, class_order)]

    labels = data.item_labels or tuple(f"item{j + 1}" for j in range(data.n_items))
    return PipelineOutput(
        unrestricted=fitted,
        diagnostics=diagnostics,
        bic_trace=bic_trace,
        refinements=refinements,
        final=final,
        final_diagnostics=final_diagnostics,
        class_order=class_order,
        item_order=item_order,
        heatmap=heatmap,
        item_labels=labels,
    )


def pipeline_to_dict(output: PipelineOutput) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "bic_trace": [[k, v] for k, v in output.bic_trace],
        "unrestricted": model_to_dict(output.unrestricted),
        "diagnostics": diagnostics_to_dict(output.diagnostics),
        "refinement": [refinement_to_dict(r) for r in output.refinements],
        "final": sparse_model_to_dict(output.final),
        "final_diagnostics": diagnostics_to_dict(output.final_diagnostics),
        "class_order": list(output.class_order),
        "item_order": list(output.item_order),
        "heatmap": _matrix(output.heatmap),
        "item_labels": list(output.item_labels),
    }


def emit_heatmap_rows(item_labels, class_order, item_order, beta, path) -> None:
    """Write the long-format heatmap table from its raw ingredients."""
    beta = np.asarray(beta)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["item_label", "class_label", "value", "item_cluster_position", "class_position"]
        )
        for item_pos, j in enumerate(item_order):
            for class_pos, k in enumerate(class_order):
                writer.writerow(
                    [item_labels[j], f"class{k + 1}", format(beta[j, k], ".17g"), item_pos,
                     class_pos]
                )


def emit_heatmap_data(output: PipelineOutput, path) -> None:
    """Long-format heatmap table consumable by any plotting tool.

    One row per (item, class) cell of the final refined matrix, with the
    clustering position of the item and the presentation position of the
    class.
    """
    emit_heatmap_rows(
        output.item_labels, output.class_order, output.item_order, output.final.base.beta, path
    )
