"""Template-kernel taxonomy of learned ordinal kernels.

A template kernel puts weight ``1/|S|`` on a non-empty set ``S`` of ranks.
Learned kernels are labelled by their nearest template (Euclidean) and
grouped by the template's support size or by the rank of their own largest
weight.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InvalidShapeError, RangeError

MAX_ENUMERATED = 16
CSV_COLUMNS = ("template_id", "support_size", "argmax_rank", "count", "run_id")


@dataclass(frozen=True)
class TemplateKernel:
    support: tuple[int, ...]   # 1-based ranks
    weights: np.ndarray = field(compare=False, repr=False)

    @property
    def id(self) -> str:
        sep = "" if len(self.weights) <= 9 else "_"
        return "w" + sep.join(str(r) for r in self.support)

    @property
    def size(self) -> int:
        return len(self.support)


def enumerate_templates(m: int, n: int) -> list[TemplateKernel]:
    """All ``2**(m*n) - 1`` templates, ordered by support size then lexicographically."""
    d = m * n
    if d < 1:
        raise RangeError("need m*n >= 1")
    if d > MAX_ENUMERATED:
        raise RangeError(f"{d} ranks give 2**{d} - 1 templates; enumeration capped at {MAX_ENUMERATED}")
    out = []
    for k in range(1, d + 1):
        for support in combinations(range(1, d + 1), k):
            w = np.zeros(d)
            w[np.array(support) - 1] = 1.0 / k
            out.append(TemplateKernel(support, w))
    return out


def template_matrix(templates) -> np.ndarray:
    return np.stack([t.weights for t in templates])


def nearest_template(w, templates) -> tuple[str, float]:
    """Closest template to ``w``; exact distance ties go to the earlier template."""
    w = np.asarray(w, dtype=np.float64).ravel()
    T = template_matrix(templates)
    if T.shape[1] != w.size:
        raise InvalidShapeError(f"{w.size}-weight kernel vs {T.shape[1]}-rank templates")
    dist = np.linalg.norm(T - w, axis=1)
    i = int(np.argmin(dist))
    return templates[i].id, float(dist[i])


def argmax_rank(w) -> int:
    """1-based rank of the largest weight (first on ties)."""
    return int(np.argmax(np.asarray(w).ravel())) + 1


@dataclass
class KernelDistribution:
    m: int
    n: int
    total: int = 0
    by_template: Counter = field(default_factory=Counter)
    by_support_size: Counter = field(default_factory=Counter)
    by_argmax: Counter = field(default_factory=Counter)
    # (run_id, template_id, argmax_rank) -> count
    cells: Counter = field(default_factory=Counter)
    support_sizes: dict = field(default_factory=dict)

    @property
    def enumerated(self) -> bool:
        return self.m * self.n <= MAX_ENUMERATED

    def grouped(self, group_by: str) -> dict:
        if group_by == "support_size":
            return dict(sorted(self.by_support_size.items()))
        if group_by == "argmax":
            return dict(sorted(self.by_argmax.items()))
        if group_by == "template":
            return dict(self.by_template)
        raise ValueError(f"unknown grouping {group_by!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for (run_id, tid, rank), count in sorted(self.cells.items()):
            size = self.support_sizes.get(tid, "")
            w.writerow([tid, size, rank, count, run_id])
        return buf.getvalue()


def distribution(kernel_sets, run_ids=None) -> KernelDistribution:
    """Classify every kernel of every set exactly once.

    ``kernel_sets`` is a list of :class:`OrdinalKernelSet` sharing ``(m, n)``;
    ``run_ids`` optionally labels each set.  Windows with more than 16 ranks
    are grouped by argmax only.
    """
    sets = list(kernel_sets)
    if not sets:
        raise ValueError("no kernels to classify")
    shapes = {(k.m, k.n) for k in sets}
    if len(shapes) != 1:
        raise InvalidShapeError(f"mixed kernel shapes {sorted(shapes)}")
    m, n = shapes.pop()
    if run_ids is None:
        run_ids = [""] * len(sets)
    dist = KernelDistribution(m, n)
    templates = enumerate_templates(m, n) if dist.enumerated else None
    if templates is not None:
        T = template_matrix(templates)
        dist.support_sizes = {t.id: t.size for t in templates}
    for ks, run_id in zip(sets, run_ids):
        for w in ks.weights:
            rank = argmax_rank(w)
            tid = ""
            if templates is not None:
                i = int(np.argmin(np.linalg.norm(T - w, axis=1)))
                tid = templates[i].id
                dist.by_template[tid] += 1
                dist.by_support_size[dist.support_sizes[tid]] += 1
            dist.by_argmax[rank] += 1
            dist.cells[(str(run_id), tid, rank)] += 1
            dist.total += 1
    return dist


def min_template_distance(templates) -> float:
    T = template_matrix(templates)
    d = np.linalg.norm(T[:, None, :] - T[None, :, :], axis=2)
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())
