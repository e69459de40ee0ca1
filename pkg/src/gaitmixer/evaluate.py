"""CASIA-B style gallery/probe rank-1 evaluation.

Gallery is NM#1-4 at every view; probes are NM#5-6, BG#1-2 and CL#1-2.
For every (condition, probe view, gallery view) cell with differing views,
each probe is assigned the subject of its nearest gallery embedding (cosine
distance) among gallery entries of that one view. A probe view's score is
the mean over the other gallery views; identical-view cells are never used.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import CONDITIONS, VIEWS, DatasetManifest, load_windows

log = logging.getLogger(__name__)

GALLERY_SET = {("NM", i) for i in (1, 2, 3, 4)}
PROBE_SETS = {"NM": {("NM", 5), ("NM", 6)}, "BG": {("BG", 1), ("BG", 2)},
              "CL": {("CL", 1), ("CL", 2)}}


@dataclass
class EmbeddedSet:
    embeddings: np.ndarray
    subjects: np.ndarray
    conditions: np.ndarray
    views: np.ndarray
    seq_indices: np.ndarray
    skipped: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.subjects)

    def subset(self, mask) -> "EmbeddedSet":
        mask = np.asarray(mask)
        return EmbeddedSet(self.embeddings[mask], self.subjects[mask], self.conditions[mask],
                           self.views[mask], self.seq_indices[mask])

    def where(self, keys) -> "EmbeddedSet":
        """Entries whose (condition, seq_index) is in ``keys``."""
        mask = np.array([(c, int(i)) in keys for c, i in zip(self.conditions, self.seq_indices)],
                        dtype=bool)
        return self.subset(mask)

    @classmethod
    def from_arrays(cls, embeddings, subjects, views, conditions=None, seq_indices=None):
        n = len(subjects)
        return cls(np.asarray(embeddings, dtype=np.float64), np.asarray(subjects),
                   np.asarray(conditions if conditions is not None else ["NM"] * n),
                   np.asarray(views, dtype=int),
                   np.asarray(seq_indices if seq_indices is not None else [1] * n, dtype=int))


def embed_all(model, manifest: DatasetManifest, records, frames: int = 60,
              width: float = 320.0, batch_size: int = 64) -> EmbeddedSet:
    """One embedding per sequence (center crop, no augmentation).

    Sequences shorter than ``frames`` are excluded and listed in ``.skipped``.
    """
    windows, kept, skipped = load_windows(manifest, records, frames, width)
    emb = model.embed(windows, batch_size=batch_size)
    out = EmbeddedSet(emb, np.array([r.subject for r in kept]),
                      np.array([r.condition for r in kept]),
                      np.array([r.view for r in kept], dtype=int),
                      np.array([r.seq_index for r in kept], dtype=int), skipped=skipped)
    if skipped:
        log.warning("%d sequences excluded as too short", len(skipped))
    return out


def nearest_gallery(probe_emb: np.ndarray, gallery_emb: np.ndarray):
    """Index of the closest gallery row (cosine distance ``1 - p.g``) per probe.

    Ties go to the lowest gallery index. Returns ``(indices, n_ties)``.
    """
    dist = 1.0 - probe_emb @ gallery_emb.T
    idx = np.argmin(dist, axis=1)
    best = dist[np.arange(len(idx)), idx]
    n_ties = int(((dist == best[:, None]).sum(axis=1) > 1).sum())
    return idx, n_ties


def nearest_neighbor_accuracy(probes: EmbeddedSet, gallery: EmbeddedSet,
                              exclude_same_view: bool = False) -> float:
    """Plain rank-1 over the whole gallery (optionally skipping same-view entries)."""
    if len(probes) == 0:
        return float("nan")
    dist = 1.0 - probes.embeddings @ gallery.embeddings.T
    if exclude_same_view:
        dist = np.where(probes.views[:, None] == gallery.views[None, :], np.inf, dist)
    pred = gallery.subjects[np.argmin(dist, axis=1)]
    return float(np.mean(pred == probes.subjects))


@dataclass
class EvalReport:
    """Per-cell counts plus the per-view, per-condition and overall means.

    ``cells[(cond, probe_view, gallery_view)] = (correct, total)``.
    """

    cells: dict
    conditions: tuple = CONDITIONS
    views: tuple = VIEWS
    ties: int = 0

    def cell_accuracy(self, cond, pv, gv):
        c = self.cells.get((cond, pv, gv))
        if c is None or c[1] == 0:
            return None
        return c[0] / c[1]

    def probe_view_accuracy(self, cond, pv):
        accs = [self.cell_accuracy(cond, pv, gv) for gv in self.views if gv != pv]
        accs = [a for a in accs if a is not None]
        return float(np.mean(accs)) if accs else None

    def condition_mean(self, cond):
        accs = [self.probe_view_accuracy(cond, pv) for pv in self.views]
        accs = [a for a in accs if a is not None]
        return float(np.mean(accs)) if accs else None

    def overall_mean(self):
        accs = [self.condition_mean(c) for c in self.conditions]
        accs = [a for a in accs if a is not None]
        return float(np.mean(accs)) if accs else None

    def to_records(self) -> list:
        out = []
        for (cond, pv, gv), (correct, total) in sorted(self.cells.items()):
            out.append({"kind": "cell", "condition": cond, "probe_view": int(pv),
                        "gallery_view": int(gv), "correct": int(correct), "total": int(total),
                        "accuracy": correct / total if total else None})
        for cond in self.conditions:
            for pv in self.views:
                out.append({"kind": "probe_view", "condition": cond, "probe_view": int(pv),
                            "accuracy": self.probe_view_accuracy(cond, pv)})
            out.append({"kind": "condition_mean", "condition": cond,
                        "accuracy": self.condition_mean(cond)})
        out.append({"kind": "overall_mean", "accuracy": self.overall_mean(), "ties": self.ties})
        return out

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.to_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_records(cls, records) -> "EvalReport":
        cells, conds, views = {}, [], set()
        ties = 0
        for rec in records:
            if rec["kind"] == "cell":
                key = (rec["condition"], rec["probe_view"], rec["gallery_view"])
                cells[key] = (rec["correct"], rec["total"])
            elif rec["kind"] == "condition_mean" and rec["condition"] not in conds:
                conds.append(rec["condition"])
            elif rec["kind"] == "probe_view":
                views.add(rec["probe_view"])
            elif rec["kind"] == "overall_mean":
                ties = rec.get("ties", 0)
        return cls(cells, tuple(conds), tuple(sorted(views)), ties)


def rank1(probes: EmbeddedSet, gallery: EmbeddedSet, conditions=CONDITIONS,
          views=VIEWS) -> EvalReport:
    """Cross-view rank-1 for every (condition, probe view, gallery view != probe view).

    ``probes`` may mix conditions; only those in ``conditions`` are scored.
    Cells with no gallery entries or no probes are left out of the means.
    """
    cells = {}
    ties = 0
    for cond in conditions:
        pc = probes.conditions == cond
        for pv in views:
            pmask = pc & (probes.views == pv)
            if not pmask.any():
                continue
            p_emb = probes.embeddings[pmask]
            p_sub = probes.subjects[pmask]
            for gv in views:
                if gv == pv:
                    continue
                gmask = gallery.views == gv
                if not gmask.any():
                    continue
                idx, t = nearest_gallery(p_emb, gallery.embeddings[gmask])
                ties += t
                pred = gallery.subjects[gmask][idx]
                cells[(cond, int(pv), int(gv))] = (int(np.sum(pred == p_sub)), int(pmask.sum()))
    if ties:
        log.info("rank1: %d probes had tied nearest gallery entries (lowest index used)", ties)
    return EvalReport(cells, tuple(conditions), tuple(views), ties)


def evaluate_casia(embedded: EmbeddedSet, conditions=CONDITIONS, views=VIEWS) -> EvalReport:
    """Split an embedded test set into the standard gallery/probe sets and score it."""
    gallery = embedded.where(GALLERY_SET)
    probe_keys = set().union(*(PROBE_SETS[c] for c in conditions))
    probes = embedded.where(probe_keys)
    return rank1(probes, gallery, conditions, views)


def _fmt(acc) -> str:
    return "   -  " if acc is None else f"{100 * acc:6.2f}"


def report_table(report: EvalReport) -> str:
    """Plain-text table: one row per condition, one column per probe view, plus mean.

    Values are rank-1 percentages with two decimals.
    """
    head = "probe  " + " ".join(f"{v:>5d}°" for v in report.views) + "    mean"
    lines = ["Rank-1 accuracy (%) per probe view, identical views excluded", head,
             "-" * len(head)]
    for cond in report.conditions:
        row = [_fmt(report.probe_view_accuracy(cond, pv)) for pv in report.views]
        lines.append(f"{cond:<6} " + " ".join(row) + "  " + _fmt(report.condition_mean(cond)))
    lines.append(f"overall mean: {_fmt(report.overall_mean()).strip()}")
    return "\n".join(lines) + "\n"


def report_summary(report: EvalReport) -> dict:
    """Machine-readable counterpart of :func:`report_table`."""
    return {
        "views": [int(v) for v in report.views],
        "rows": {c: {"per_view": [report.probe_view_accuracy(c, v) for v in report.views],
                     "mean": report.condition_mean(c)} for c in report.conditions},
        "overall_mean": report.overall_mean(),
    }
