"""Pivot-data construction: per-class, per-domain confidence-ranked samples.

The target domain is ranked by pseudo-label confidence (max softmax
probability); the source domain keeps its ground-truth labels and is ranked
by the model's confidence in the true class. Besides the default top-m
strategy, random-m and bottom-m selections are available for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .networks import NetworkParams, forward_classifier, forward_feature

PIVOT_STRATEGIES = ("top_m", "random_m", "bottom_m")


class PivotError(ValueError):
    """Pivot data cannot be used for a critic update."""


@dataclass(frozen=True)
class PivotEntry:
    """One selected sample: dataset index, selection confidence, raw features."""

    index: int
    confidence: float
    x: np.ndarray


@dataclass
class PivotSet:
    """Up to m entries per class per domain, sorted by decreasing confidence."""

    m: int
    source_by_class: dict
    target_by_class: dict
    warnings: list = field(default_factory=list)

    @property
    def classes(self):
        return sorted(self.source_by_class)

    def is_full(self) -> bool:
        """True when every class holds exactly m entries on both domains."""
        return all(len(self.source_by_class[c]) == self.m
                   and len(self.target_by_class[c]) == self.m
                   for c in self.classes)


def pseudo_label(params: NetworkParams, x: np.ndarray):
    """Argmax class prediction and its probability for each row of ``x``.

    Ties resolve to the lowest class index.
    """
    probs = forward_classifier(params.psi, forward_feature(params.phi, x)).data
    labels = probs.argmax(axis=1)
    return labels, probs[np.arange(len(labels)), labels]


def _ranked(indices: np.ndarray, confidences: np.ndarray):
    """Indices sorted by decreasing confidence, ties broken by dataset index."""
    order = np.lexsort((indices, -confidences))
    return indices[order], confidences[order]


def _pick(indices, confidences, m, strategy, rng):
    idx, conf = _ranked(indices, confidences)
    if strategy == "top_m":
        take = np.arange(min(m, len(idx)))
    elif strategy == "bottom_m":
        take = np.arange(max(0, len(idx) - m), len(idx))
    elif strategy == "random_m":
        take = rng.choice(len(idx), size=min(m, len(idx)), replace=False)
        take.sort()
    else:
        raise ValueError(f"unknown pivot strategy {strategy!r}")
    return idx[take], conf[take]


def select_pivot(params: NetworkParams, source_x, source_y, target_x, m: int,
                 strategy: str = "top_m", seed=0, n_classes: int = 2) -> PivotSet:
    """Build the pivot set under the current model.

    Deterministic given (params, data, seed); the seed only matters for the
    random_m strategy. Classes with no candidates yield empty lists and a
    recorded warning.
    """
    if m < 1:
        raise ValueError(f"pivot size m must be >= 1, got {m}")
    if strategy not in PIVOT_STRATEGIES:
        raise ValueError(f"unknown pivot strategy {strategy!r}")
    source_y = np.asarray(source_y, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    probs_s = forward_classifier(params.psi, forward_feature(params.phi, source_x)).data
    labels_t, conf_t = pseudo_label(params, target_x)

    warnings = []
    source_by_class, target_by_class = {}, {}
    for c in range(n_classes):
        idx_s = np.flatnonzero(source_y == c)
        conf_s = probs_s[idx_s, c]
        idx_t = np.flatnonzero(labels_t == c)
        for domain, idx, conf, dest in (("source", idx_s, conf_s, source_by_class),
                                        ("target", idx_t, conf_t[idx_t], target_by_class)):
            if len(idx) == 0:
                warnings.append(f"class {c} has no {domain} candidates")
                dest[c] = []
                continue
            chosen_idx, chosen_conf = _pick(idx, conf, m, strategy, rng)
            # store in decreasing confidence regardless of strategy
            order = np.lexsort((chosen_idx, -chosen_conf))
            data = source_x if domain == "source" else target_x
            dest[c] = [PivotEntry(int(chosen_idx[i]), float(chosen_conf[i]),
                                  np.asarray(data[chosen_idx[i]], dtype=np.float64))
                       for i in order]
    return PivotSet(m, source_by_class, target_by_class, warnings)


def paired_pivot_matrices(pivot: PivotSet):
    """Stack pivot samples into rank-paired source and target matrices.

    Rows are ordered by (class, confidence rank). Requires every class to
    hold exactly m entries on both domains, so the flattened distance matrix
    built downstream always has the width the critic was sized for.
    """
    for c in pivot.classes:
        ns, nt = len(pivot.source_by_class[c]), len(pivot.target_by_class[c])
        if ns != pivot.m or nt != pivot.m:
            raise PivotError(
                f"class {c} is incomplete: {ns} source and {nt} target entries, need {pivot.m}")
    xs = np.stack([e.x for c in pivot.classes for e in pivot.source_by_class[c]])
    xt = np.stack([e.x for c in pivot.classes for e in pivot.target_by_class[c]])
    return xs, xt


def pivot_csv_rows(pivot: PivotSet, epoch: int):
    """Rows (epoch, domain, class, sample_index, confidence) for the dump file."""
    rows = []
    for domain, by_class in (("source", pivot.source_by_class),
                             ("target", pivot.target_by_class)):
        for c in sorted(by_class):
            for e in by_class[c]:
                rows.append((epoch, domain, c, e.index, e.confidence))
    return rows
