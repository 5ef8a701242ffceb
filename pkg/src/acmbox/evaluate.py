"""COCO-style average precision for rotated boxes and DOTA annotation I/O."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateQuad, MalformedLine
from .geom import RotatedBox, min_area_rect
from .iou import skew_iou

DOTA_CLASSES = (
    "plane", "baseball-diamond", "bridge", "ground-track-field", "small-vehicle",
    "large-vehicle", "ship", "tennis-court", "basketball-court", "storage-tank",
    "soccer-ball-field", "roundabout", "harbor", "swimming-pool", "helicopter",
)
HEADER_PREFIXES = ("imagesource", "gsd")
RECALL_GRID = np.arange(101) / 100  # k/100 rounds like tp/n_pos when they are equal
COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
DETS_HEADER = ("image_id", "class", "score", "cx", "cy", "w", "h", "theta_deg")


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    box: RotatedBox

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: RotatedBox
    difficult: bool = False


def parse_dota(text: str, image_id: str = "", classes=DOTA_CLASSES) -> list[GroundTruth]:
    """Parse one DOTA annotation file.

    Each object line is ``x1 y1 ... x4 y4 category difficult``; the quad is
    replaced by its minimum-area enclosing rectangle and the category is
    looked up in ``classes``.
    """
    index = {name: k for k, name in enumerate(classes)}
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(HEADER_PREFIXES):
            continue
        tokens = line.split()
        if len(tokens) != 10:
            raise MalformedLine(lineno, raw, f"expected 10 tokens, got {len(tokens)}")
        try:
            coords = [float(t) for t in tokens[:8]]
        except ValueError:
            raise MalformedLine(lineno, raw, "non-numeric coordinate") from None
        if not all(math.isfinite(c) for c in coords):
            raise MalformedLine(lineno, raw, "non-finite coordinate")
        name, flag = tokens[8], tokens[9]
        if name not in index:
            raise MalformedLine(lineno, raw, f"unknown category {name!r}")
        if flag not in ("0", "1"):
            raise MalformedLine(lineno, raw, f"difficult flag must be 0 or 1, got {flag!r}")
        try:
            box = min_area_rect(np.reshape(coords, (4, 2)))
        except DegenerateQuad as exc:
            raise MalformedLine(lineno, raw, str(exc)) from None
        out.append(GroundTruth(image_id, index[name], box, flag == "1"))
    return out


def load_gt_dir(path, classes=DOTA_CLASSES) -> list[GroundTruth]:
    """Read every ``*.txt`` in ``path``; the file stem is the image id."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"ground-truth directory not found: {path}")
    gts = []
    for f in sorted(path.glob("*.txt")):
        gts.extend(parse_dota(f.read_text(encoding="utf-8"), f.stem, classes))
    return gts


def load_detections(path, classes=DOTA_CLASSES) -> list[Detection]:
    """Read a detection CSV. ``class`` may be a category name or an integer id."""
    index = {name: k for k, name in enumerate(classes)}
    dets = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DETS_HEADER:
            raise MalformedLine(1, ",".join(header or []), f"header must be {','.join(DETS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DETS_HEADER):
                raise MalformedLine(lineno, ",".join(row), f"expected {len(DETS_HEADER)} fields")
            image_id, cls = row[0].strip(), row[1].strip()
            try:
                class_id = index[cls] if cls in index else int(cls)
                score, cx, cy, w, h, deg = (float(v) for v in row[2:])
                det = Detection(image_id, class_id, score,
                                RotatedBox(cx, cy, w, h, math.radians(deg)).canonical())
            except ValueError as exc:
                raise MalformedLine(lineno, ",".join(row), str(exc)) from None
            dets.append(det)
    return dets


def _match(dets, gts, ious, thresh):
    """Label each detection (in score order) as 1 = TP, 0 = FP, -1 = ignored."""
    taken = [False] * len(gts)
    labels = []
    for i, d in enumerate(dets):
        best, best_iou = -1, -1.0
        hit_difficult = False
        for j, g in enumerate(gts):
            iou = ious[i][j]
            if iou < thresh or g.image_id != d.image_id:
                continue
            if g.difficult:
                hit_difficult = True
            elif not taken[j] and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
            labels.append(1)
        else:
            labels.append(-1 if hit_difficult else 0)
    return labels


def _ap_from_labels(labels, n_pos):
    labels = np.asarray([x for x in labels if x >= 0], dtype=float)
    if n_pos == 0 or labels.size == 0:
        return 0.0
    tp = np.cumsum(labels)
    fp = np.cumsum(1.0 - labels)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    # running max from the right gives the interpolated envelope
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    valid = idx < len(recall)
    interp = np.zeros_like(RECALL_GRID)
    interp[valid] = envelope[idx[valid]]
    return float(interp.mean())


def _prepare(dets, gts):
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    dets = [dets[i] for i in order]
    ious = [[skew_iou(d.box, g.box) if d.image_id == g.image_id else 0.0 for g in gts]
            for d in dets]
    n_pos = sum(not g.difficult for g in gts)
    return dets, ious, n_pos


def average_precision(dets, gts, iou_thresh=0.5) -> float:
    """101-point interpolated AP for a single class.

    Detections are ranked by score (stable for ties) and greedily matched to
    the highest-IoU unmatched non-difficult GT of the same image. A detection
    whose only qualifying match is a difficult GT is dropped entirely.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    dets, ious, n_pos = _prepare(list(dets), list(gts))
    return _ap_from_labels(_match(dets, gts, ious, iou_thresh), n_pos)


def ap_suite(dets, gts) -> dict:
    """AP50, AP75 and AP50:95 per class plus their macro means.

    Classes enter the table when they have at least one non-difficult GT.
    """
    by_class_d, by_class_g = defaultdict(list), defaultdict(list)
    for d in dets:
        by_class_d[d.class_id].append(d)
    for g in gts:
        by_class_g[g.class_id].append(g)

    per_class = {}
    for cls in sorted(by_class_g):
        cg = by_class_g[cls]
        if all(g.difficult for g in cg):
            continue
        cd, ious, n_pos = _prepare(by_class_d.get(cls, []), cg)
        aps = {t: _ap_from_labels(_match(cd, cg, ious, t), n_pos) for t in COCO_THRESHOLDS}
        per_class[cls] = {
            "AP50": aps[0.5],
            "AP75": aps[0.75],
            "AP50:95": float(np.mean([aps[t] for t in COCO_THRESHOLDS])),
        }
    keys = ("AP50", "AP75", "AP50:95")
    if per_class:
        mean = {k: float(np.mean([row[k] for row in per_class.values()])) for k in keys}
    else:
        mean = {k: 0.0 for k in keys}
    return {"per_class": per_class, "mean": mean}
