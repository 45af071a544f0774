"""Exhaustive hyperparameter search scored by k-fold cross-validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..core import LabeledDataset
from ..evaluate import CVReport, kfold_cv
from .ann import TAU_GRID
from .model import ClassifierSpec

POWERS_OF_TEN = (0.01, 0.1, 1.0, 10.0, 100.0)


def grid_points(spec: ClassifierSpec) -> list[ClassifierSpec]:
    """Candidate specs in tie-break order (smaller C, then gamma; smaller tau)."""
    if spec.kind == "ann":
        return [dataclasses.replace(spec, ann=dataclasses.replace(spec.ann, tau=t)) for t in TAU_GRID]
    if spec.svm.kernel == "linear":
        return [dataclasses.replace(spec, svm=dataclasses.replace(spec.svm, C=c))
                for c in POWERS_OF_TEN]
    return [dataclasses.replace(spec, svm=dataclasses.replace(spec.svm, C=c, gamma=g))
            for c in POWERS_OF_TEN for g in POWERS_OF_TEN]


@dataclass
class GridResult:
    best: ClassifierSpec
    report: CVReport
    table: list = field(default_factory=list)  # (spec dict, mean, std) per grid point

    def as_dict(self) -> dict:
        return {"best": self.best.as_dict(),
                "table": [{"params": p, "mean_accuracy": m, "std_accuracy": s}
                          for p, m, s in self.table]}


def grid_search(data: LabeledDataset, spec: ClassifierSpec = ClassifierSpec(), seed: int = 0,
                k: int = 10, selected=None) -> GridResult:
    """Pick the grid point with the best mean CV accuracy (first one on ties)."""
    best = None
    table = []
    for cand in grid_points(spec):
        if cand.kind == "ann":
            cand = dataclasses.replace(cand, ann=dataclasses.replace(cand.ann, seed=seed))
        rep = kfold_cv(data, k, cand, seed, selected)
        table.append((cand.as_dict(), rep.mean, rep.std))
        if best is None or rep.mean > best[1].mean:
            best = (cand, rep)
    return GridResult(best[0], best[1], table)
