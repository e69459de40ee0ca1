"""Skeleton sequences: file formats, normalisation, cropping, augmentation,
balanced P x K batching and a synthetic gait generator.

Keypoints follow the 17-joint COCO order::

    0 nose   1 l_eye  2 r_eye  3 l_ear  4 r_ear  5 l_shoulder  6 r_shoulder
    7 l_elbow  8 r_elbow  9 l_wrist  10 r_wrist  11 l_hip  12 r_hip
    13 l_knee  14 r_knee  15 l_ankle  16 r_ankle

File formats
------------
JSON, one object per file::

    {"subject": "001", "condition": "NM", "view": 90, "seq_index": 1,
     "frames": [[x0, y0, x1, y1, ..., x16, y16], ...]}

CSV, one frame per line with 34 comma-separated numbers (x0, y0, ..., x16,
y16) and no header. Metadata comes from the manifest or from a
``{subject}-{condition}-{seq:02d}-{view:03d}.csv`` file name.

The manifest is JSON lines, one record per sequence with keys ``path``
(relative to the manifest), ``subject``, ``condition``, ``view`` and
``seq_index``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError, SequenceTooShort

log = logging.getLogger(__name__)

NUM_JOINTS = 17
JOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
FLIP_PAIRS = ((1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16))
FLIP_INDEX = np.arange(NUM_JOINTS)
for _a, _b in FLIP_PAIRS:
    FLIP_INDEX[_a], FLIP_INDEX[_b] = _b, _a
del _a, _b

CONDITIONS = ("NM", "BG", "CL")
VIEWS = tuple(range(0, 181, 18))
VIDEO_WIDTH = 320.0
WINDOW = 60
SANITY_BAND = 2.0


@dataclass
class SkeletonSequence:
    keypoints: np.ndarray  # [T, 17, 2]
    subject_id: str
    condition: str = "NM"
    view_deg: int = 90
    seq_index: int = 1

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=np.float64)
        if kp.ndim != 3 or kp.shape[1:] != (NUM_JOINTS, 2):
            raise DataError(f"keypoints must be [T, {NUM_JOINTS}, 2], got {kp.shape}")
        if not np.all(np.isfinite(kp)):
            raise DataError("keypoints contain non-finite values")
        if self.condition not in CONDITIONS:
            raise DataError(f"unknown condition {self.condition!r}")
        self.keypoints = kp
        self.subject_id = str(self.subject_id)
        self.view_deg = int(self.view_deg)
        self.seq_index = int(self.seq_index)

    @property
    def frames(self) -> int:
        return self.keypoints.shape[0]

    def labels(self) -> dict:
        return {"subject": self.subject_id, "condition": self.condition,
                "view": self.view_deg, "seq_index": self.seq_index}

    def with_keypoints(self, kp) -> "SkeletonSequence":
        return SkeletonSequence(kp, self.subject_id, self.condition, self.view_deg, self.seq_index)


@dataclass
class GaitSample:
    """A fixed-length normalised window ready for the model."""

    window: np.ndarray  # [60, 17, 2]
    subject_id: str
    condition: str = "NM"
    view_deg: int = 90
    seq_index: int = 1

    def __post_init__(self):
        w = np.asarray(self.window, dtype=np.float64)
        if w.ndim != 3 or w.shape[1:] != (NUM_JOINTS, 2):
            raise DataError(f"window must be [T, {NUM_JOINTS}, 2], got {w.shape}")
        if np.abs(w).max(initial=0.0) > SANITY_BAND:
            raise DataError("normalised window leaves the [-2, 2] sanity band; "
                            "was the sequence normalised?")
        self.window = w


# -- file IO -------------------------------------------------------------------

_NAME_RE = re.compile(r"^(?P<subject>[^-]+)-(?P<cond>nm|bg|cl)-(?P<seq>\d+)-(?P<view>\d+)$", re.I)


def parse_filename(path) -> dict:
    m = _NAME_RE.match(Path(path).stem)
    if not m:
        raise ParseError("file name does not follow subject-condition-seq-view", path)
    return {"subject": m["subject"], "condition": m["cond"].upper(),
            "view": int(m["view"]), "seq_index": int(m["seq"])}


def _frames_to_array(rows, path, line_offset=1) -> np.ndarray:
    out = np.empty((len(rows), NUM_JOINTS, 2))
    for i, row in enumerate(rows):
        line = i + line_offset
        if len(row) != 2 * NUM_JOINTS:
            raise ParseError(f"expected {NUM_JOINTS} joints ({2 * NUM_JOINTS} values), "
                             f"got {len(row)} values", path, line)
        try:
            vals = np.array([float(v) for v in row])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"malformed value: {exc}", path, line) from None
        if not np.all(np.isfinite(vals)):
            raise ParseError("non-finite coordinate", path, line)
        out[i] = vals.reshape(NUM_JOINTS, 2)
    return out


def load_sequence(path, fmt: str | None = None, meta: dict | None = None) -> SkeletonSequence:
    """Read a keypoint file (``json`` or ``csv``; inferred from the suffix by default)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if fmt == "json":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
        frames = obj.get("frames")
        if not isinstance(frames, list) or not frames:
            raise ParseError("missing or empty 'frames' list", path)
        kp = _frames_to_array(frames, path, line_offset=0)
        info = {"subject": obj.get("subject"), "condition": obj.get("condition", "NM"),
                "view": obj.get("view", 90), "seq_index": obj.get("seq_index", 1)}
        if meta:
            info.update(meta)
    elif fmt == "csv":
        rows = [r for r in csv.reader(text.splitlines())]
        if not rows:
            raise ParseError("empty CSV", path)
        kp = _frames_to_array(rows, path)
        info = dict(meta) if meta else parse_filename(path)
    else:
        raise DataError(f"{path}: unsupported keypoint format {fmt!r}")
    if info.get("subject") is None:
        raise ParseError("no subject id in file or manifest", path)
    try:
        return SkeletonSequence(kp, info["subject"], info["condition"], info["view"],
                                info["seq_index"])
    except DataError as exc:
        raise ParseError(str(exc), path) from None


def write_sequence(seq: SkeletonSequence, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    flat = seq.keypoints.reshape(seq.frames, -1)
    if fmt == "json":
        obj = {"subject": seq.subject_id, "condition": seq.condition, "view": seq.view_deg,
               "seq_index": seq.seq_index, "frames": [[float(v) for v in row] for row in flat]}
        path.write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")
    elif fmt == "csv":
        # repr() round-trips float64 exactly
        lines = [",".join(repr(float(v)) for v in row) for row in flat]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise DataError(f"unsupported keypoint format {fmt!r}")
    return path


# -- manifest ------------------------------------------------------------------

@dataclass
class SequenceRecord:
    path: str | None
    subject: str
    condition: str
    view: int
    seq_index: int
    sequence: SkeletonSequence | None = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def load(self, root=None) -> SkeletonSequence:
        if self.sequence is not None:
            return self.sequence
        if self.path is None:
            raise DataError(f"record {self.subject}/{self.condition}#{self.seq_index} has no data")
        p = Path(self.path)
        if root is not None and not p.is_absolute():
            p = Path(root) / p
        return load_sequence(p, meta={"subject": self.subject, "condition": self.condition,
                                      "view": self.view, "seq_index": self.seq_index})

    def to_json(self) -> dict:
        return {"path": self.path, "subject": self.subject, "condition": self.condition,
                "view": self.view, "seq_index": self.seq_index}


def _subject_sort_key(s: str):
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


@dataclass
class DatasetManifest:
    records: list
    train_subjects: tuple = ()
    test_subjects: tuple = ()
    root: str | None = None

    def __post_init__(self):
        overlap = set(self.train_subjects) & set(self.test_subjects)
        if overlap:
            raise ConfigError(f"train/test subject sets overlap: {sorted(overlap)[:5]}")

    def subjects(self) -> list:
        return sorted({r.subject for r in self.records}, key=_subject_sort_key)

    def split_first(self, n_train: int) -> "DatasetManifest":
        """Assign the first ``n_train`` subjects (natural id order) to training."""
        subs = self.subjects()
        if not 0 <= n_train <= len(subs):
            raise ConfigError(f"cannot put {n_train} of {len(subs)} subjects in the train split")
        return DatasetManifest(self.records, tuple(subs[:n_train]), tuple(subs[n_train:]), self.root)

    def select(self, subjects=None, conditions=None, seq_indices=None) -> list:
        out = []
        for r in self.records:
            if subjects is not None and r.subject not in subjects:
                continue
            if conditions is not None and r.condition not in conditions:
                continue
            if seq_indices is not None and (r.condition, r.seq_index) not in seq_indices:
                continue
            out.append(r)
        return out

    def train_records(self) -> list:
        return self.select(subjects=set(self.train_subjects))

    def test_records(self) -> list:
        return self.select(subjects=set(self.test_subjects))

    def load(self, record: SequenceRecord) -> SkeletonSequence:
        return record.load(self.root)

    def write(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path, train_subjects: int | None = None) -> "DatasetManifest":
        path = Path(path)
        records = []
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        for i, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(SequenceRecord(obj["path"], str(obj["subject"]), obj["condition"],
                                              int(obj["view"]), int(obj["seq_index"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad manifest record ({exc})", path, i) from None
        m = cls(records, root=str(path.parent))
        if train_subjects is not None:
            m = m.split_first(train_subjects)
        return m


# -- preprocessing ---------------------------------------------------------------

def normalize(seq: SkeletonSequence, width: float = VIDEO_WIDTH) -> SkeletonSequence:
    """Divide x and y by the same video width (aspect ratio is kept)."""
    if width <= 0:
        raise ConfigError("normalisation width must be positive")
    return seq.with_keypoints(seq.keypoints / width)


def denormalize(seq: SkeletonSequence, width: float = VIDEO_WIDTH) -> SkeletonSequence:
    return seq.with_keypoints(seq.keypoints * width)


def _as_sample(seq, window) -> GaitSample:
    return GaitSample(window, seq.subject_id, seq.condition, seq.view_deg, seq.seq_index)


def center_crop(seq: SkeletonSequence, frames: int = WINDOW) -> GaitSample:
    """The ``frames`` consecutive frames starting at ``(T - frames) // 2``."""
    T = seq.frames
    if T < frames:
        raise SequenceTooShort(f"sequence {seq.subject_id}/{seq.condition}#{seq.seq_index}@"
                               f"{seq.view_deg} has {T} frames, need {frames}")
    start = (T - frames) // 2
    return _as_sample(seq, seq.keypoints[start:start + frames])


def mirror(window: np.ndarray) -> np.ndarray:
    """Horizontal flip in normalised space: x -> 1 - x, left/right joints swapped."""
    out = window[..., FLIP_INDEX, :].copy()
    out[..., 0] = 1.0 - out[..., 0]
    return out


@dataclass(frozen=True)
class AugmentPolicy:
    p_mirror: float = 0.5
    p_noise: float = 0.5
    noise_sigma: float = 0.005
    p_random_crop: float = 1.0
    p_translate: float = 0.5
    max_translate: float = 0.05

    def __post_init__(self):
        for f in ("p_mirror", "p_noise", "p_random_crop", "p_translate"):
            if not 0.0 <= getattr(self, f) <= 1.0:
                raise ConfigError(f"augment.{f} must lie in [0, 1]")
        if self.noise_sigma < 0 or self.max_translate < 0:
            raise ConfigError("augment noise_sigma and max_translate must be >= 0")

    @classmethod
    def null(cls) -> "AugmentPolicy":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown augment keys: {sorted(unknown)}")
        return cls(**d)


def augment(seq: SkeletonSequence, rng: np.random.Generator, policy: AugmentPolicy,
            frames: int = WINDOW) -> GaitSample:
    """Training-time window from a normalised sequence.

    The draw order is fixed (crop, mirror, noise, translate) so a given
    generator state always yields the same sample.
    """
    T = seq.frames
    if T < frames:
        raise SequenceTooShort(f"sequence has {T} frames, need {frames}")
    u = rng.random(4)
    if u[0] < policy.p_random_crop:
        start = int(rng.integers(0, T - frames + 1))
    else:
        start = (T - frames) // 2
    w = seq.keypoints[start:start + frames].copy()
    if u[1] < policy.p_mirror:
        w = mirror(w)
    if u[2] < policy.p_noise and policy.noise_sigma > 0:
        w = w + rng.normal(0.0, policy.noise_sigma, size=w.shape)
    if u[3] < policy.p_translate and policy.max_translate > 0:
        w = w + rng.uniform(-policy.max_translate, policy.max_translate, size=2)
    np.clip(w, -SANITY_BAND, SANITY_BAND, out=w)
    return _as_sample(seq, w)


# -- batching -----------------------------------------------------------------------

def epoch_batches(labels, p: int, k: int, rng: np.random.Generator) -> list:
    """One epoch of P x K batches as lists of item indices.

    Subjects are visited in a random order without replacement; a final
    short group is topped up with other subjects so every batch has exactly
    ``p`` distinct subjects. Within a subject, ``k`` items are drawn without
    replacement, or with replacement when it has fewer than ``k``.
    """
    by_subject: dict = {}
    for i, s in enumerate(labels):
        by_subject.setdefault(s, []).append(i)
    subjects = sorted(by_subject, key=lambda s: _subject_sort_key(str(s)))
    n = len(subjects)
    if p < 1 or k < 1:
        raise ConfigError("batch sizes p and k must be positive")
    if p > n:
        raise ConfigError(f"batch needs p={p} subjects but only {n} are available")
    order = [subjects[i] for i in rng.permutation(n)]
    batches = []
    for start in range(0, n, p):
        group = order[start:start + p]
        if len(group) < p:
            rest = [s for s in subjects if s not in group]
            extra = rng.choice(len(rest), p - len(group), replace=False)
            group = group + [rest[i] for i in extra]
        batch = []
        for s in group:
            items = by_subject[s]
            pick = rng.choice(len(items), k, replace=len(items) < k)
            batch.extend(items[i] for i in pick)
        batches.append(batch)
    return batches


def balanced_batches(labels, p: int, k: int, rng: np.random.Generator):
    """Endless stream of P x K batches (indices into ``labels``)."""
    while True:
        yield from epoch_batches(labels, p, k, rng)


# -- synthetic gait --------------------------------------------------------------------

# per-subject latent parameters and their sampling ranges
LATENT_RANGES = {
    "scale": (0.85, 1.15),
    "thigh": (0.40, 0.50),
    "shin": (0.38, 0.48),
    "torso": (0.48, 0.60),
    "upper_arm": (0.26, 0.34),
    "forearm": (0.22, 0.30),
    "shoulder_width": (0.28, 0.40),
    "hip_width": (0.18, 0.28),
    "head": (0.16, 0.22),
    "hip_amp": (0.30, 0.55),       # rad
    "knee_amp": (0.60, 1.10),      # rad
    "knee_lag": (0.3, 1.0),        # rad
    "arm_amp": (0.20, 0.65),       # rad
    "elbow_flex": (0.15, 0.60),    # rad
    "bob": (0.01, 0.05),
    "lean": (-0.05, 0.15),         # rad
    "arm_asym": (-0.3, 0.3),
}


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings. ``views=None`` gives each sequence one random view;
    a tuple renders every sequence once per listed view."""

    frames: int = 90
    period_range: tuple = (13.0, 17.0)
    min_separation: float = 0.35
    noise_px: float = 1.0
    drift_px: float = 20.0
    px_per_unit: float = 100.0
    views: tuple | None = None

    def __post_init__(self):
        if self.frames < WINDOW:
            raise ConfigError(f"synthetic sequences need >= {WINDOW} frames")
        lo, hi = self.period_range
        if not 2.0 <= lo <= hi:
            raise ConfigError("period_range must satisfy 2 <= low <= high")
        if self.views is not None and any(v not in VIEWS for v in self.views):
            raise ConfigError(f"views must come from {VIEWS}")


def latent_vector(latent: dict) -> np.ndarray:
    """Latent parameters mapped to the unit cube (for separation checks)."""
    keys = list(LATENT_RANGES) + ["period"]
    out = []
    for key in keys:
        lo, hi = LATENT_RANGES.get(key, (13.0, 17.0))
        out.append((latent[key] - lo) / (hi - lo) if hi > lo else 0.0)
    return np.array(out)


def sample_subject_latents(n: int, rng: np.random.Generator, spec: SynthSpec) -> list:
    """Draw ``n`` subjects whose unit-cube latent vectors are pairwise
    at least ``spec.min_separation`` apart (rejection sampling)."""
    latents, vecs = [], []
    tries = 0
    while len(latents) < n:
        tries += 1
        if tries > 1000 * max(n, 1):
            raise ConfigError("could not satisfy min_separation; lower it or ask for fewer subjects")
        lat = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in LATENT_RANGES.items()}
        lat["period"] = float(rng.uniform(*spec.period_range))
        v = latent_vector(lat)
        if all(np.linalg.norm(v - u) >= spec.min_separation for u in vecs):
            latents.append(lat)
            vecs.append(v)
    return latents


def _pose_3d(lat: dict, condition: str, phase: np.ndarray) -> np.ndarray:
    """Joint positions ``[T, 17, 3]`` as (forward, down, lateral) body coordinates."""
    T = phase.shape[0]
    s = lat["scale"]
    arm_amp = lat["arm_amp"]
    sh_w, hip_w = lat["shoulder_width"], lat["hip_width"]
    r_arm_gain = 1.0 - lat["arm_asym"]
    elbow = np.full(T, lat["elbow_flex"])
    if condition == "CL":
        sh_w, hip_w, arm_amp = sh_w * 1.2, hip_w * 1.15, arm_amp * 0.7
    if condition == "BG":
        r_arm_gain *= 0.25

    J = np.zeros((T, NUM_JOINTS, 3))
    pelvis = np.zeros((T, 3))
    pelvis[:, 1] = -lat["bob"] * np.cos(2 * phase)

    def seg(start, length, angle):
        d = np.stack([np.sin(angle), np.cos(angle), np.zeros_like(angle)], axis=-1)
        return start + s * length * d

    for side, (hip, knee, ankle, off) in {
        "l": (11, 13, 15, 0.0), "r": (12, 14, 16, math.pi)
    }.items():
        lat_off = hip_w / 2 * (1 if side == "l" else -1)
        h = pelvis + np.array([0.0, 0.0, s * lat_off])
        theta = lat["hip_amp"] * np.sin(phase + off)
        flex = lat["knee_amp"] * np.clip(np.sin(phase + off + lat["knee_lag"]), 0, None)
        k = seg(h, lat["thigh"], theta)
        a = seg(k, lat["shin"], theta - flex)
        J[:, hip], J[:, knee], J[:, ankle] = h, k, a

    lean = lat["lean"]
    neck = pelvis + s * lat["torso"] * np.array([np.sin(lean), -np.cos(lean), 0.0])
    for side, (sh, el, wr, off, gain) in {
        "l": (5, 7, 9, math.pi, 1.0 + lat["arm_asym"]), "r": (6, 8, 10, 0.0, r_arm_gain)
    }.items():
        lat_off = sh_w / 2 * (1 if side == "l" else -1)
        shoulder = neck + np.array([0.0, 0.0, s * lat_off])
        alpha = arm_amp * gain * np.sin(phase + off)
        e = seg(shoulder, lat["upper_arm"], alpha)
        w = seg(e, lat["forearm"], alpha + elbow)
        J[:, sh], J[:, el], J[:, wr] = shoulder, e, w

    hd = s * lat["head"]
    J[:, 0] = neck + np.array([0.25 * hd, -1.0 * hd, 0.0])
    J[:, 1] = J[:, 0] + np.array([-0.05 * hd, -0.15 * hd, 0.12 * hd])
    J[:, 2] = J[:, 0] + np.array([-0.05 * hd, -0.15 * hd, -0.12 * hd])
    J[:, 3] = neck + np.array([-0.10 * hd, -0.85 * hd, 0.30 * hd])
    J[:, 4] = neck + np.array([-0.10 * hd, -0.85 * hd, -0.30 * hd])
    return J


def render_sequence(lat: dict, condition: str, view_deg: int, rng: np.random.Generator,
                    spec: SynthSpec) -> np.ndarray:
    """Pixel keypoints ``[frames, 17, 2]`` for one walk of a subject.

    The view rotates the body about the vertical axis, which shows up in the
    image as an x-axis scale of the walking direction plus a lateral shear.
    """
    t = np.arange(spec.frames, dtype=np.float64)
    phase0 = rng.uniform(0, 2 * math.pi)
    phase = 2 * math.pi * t / lat["period"] + phase0
    body = _pose_3d(lat, condition, phase)
    th = math.radians(view_deg)
    x = body[..., 0] * math.sin(th) + body[..., 2] * math.cos(th)
    y = body[..., 1]
    drift = rng.uniform(-1, 1) * spec.drift_px * (t / spec.frames - 0.5)
    px = 160.0 + spec.px_per_unit * x + drift[:, None]
    py = 120.0 + spec.px_per_unit * y
    kp = np.stack([px, py], axis=-1)
    if spec.noise_px > 0:
        kp = kp + rng.normal(0.0, spec.noise_px, size=kp.shape)
    return kp


def casia_schedule(seqs_per: int) -> list:
    """(condition, seq_index) pairs in CASIA-B order: NM#1-6, BG#1-2, CL#1-2, repeating."""
    pattern = ["NM"] * 6 + ["BG"] * 2 + ["CL"] * 2
    counts = {c: 0 for c in CONDITIONS}
    out = []
    for i in range(seqs_per):
        c = pattern[i % len(pattern)]
        counts[c] += 1
        out.append((c, counts[c]))
    return out


def synthesize_gait(subjects: int, seqs_per: int, rng: np.random.Generator,
                    spec: SynthSpec | None = None) -> DatasetManifest:
    """In-memory synthetic dataset; each record carries its sequence and the
    subject's latent parameters in ``record.meta["latent"]``."""
    spec = spec or SynthSpec()
    if subjects < 1 or seqs_per < 1:
        raise ConfigError("need at least one subject and one sequence per subject")
    latents = sample_subject_latents(subjects, rng, spec)
    records = []
    for si, lat in enumerate(latents):
        sid = f"{si + 1:03d}"
        for cond, idx in casia_schedule(seqs_per):
            views = spec.views if spec.views is not None else (int(rng.choice(VIEWS)),)
            for view in views:
                kp = render_sequence(lat, cond, view, rng, spec)
                seq = SkeletonSequence(kp, sid, cond, view, idx)
                records.append(SequenceRecord(None, sid, cond, view, idx, sequence=seq,
                                              meta={"latent": lat}))
    return DatasetManifest(records)


def write_dataset(manifest: DatasetManifest, out_dir, fmt: str = "json") -> Path:
    """Write every in-memory sequence plus ``manifest.jsonl`` under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "sequences").mkdir(parents=True, exist_ok=True)
    records = []
    for r in manifest.records:
        seq = manifest.load(r)
        name = f"{r.subject}-{r.condition.lower()}-{r.seq_index:02d}-{r.view:03d}.{fmt}"
        write_sequence(seq, out_dir / "sequences" / name, fmt)
        records.append(SequenceRecord(f"sequences/{name}", r.subject, r.condition, r.view,
                                      r.seq_index))
    out = DatasetManifest(records, manifest.train_subjects, manifest.test_subjects, str(out_dir))
    return out.write(out_dir / "manifest.jsonl")


def load_windows(manifest: DatasetManifest, records, frames: int = WINDOW,
                 width: float = VIDEO_WIDTH):
    """Center-cropped normalised windows for ``records``.

    Returns ``(windows [N, frames, 17, 2], kept_records, skipped_records)``;
    sequences shorter than ``frames`` are skipped and logged.
    """
    wins, kept, skipped = [], [], []
    for r in records:
        seq = normalize(manifest.load(r), width)
        try:
            wins.append(center_crop(seq, frames).window)
            kept.append(r)
        except SequenceTooShort as exc:
            log.warning("excluded from evaluation: %s", exc)
            skipped.append(r)
    arr = np.stack(wins) if wins else np.zeros((0, frames, NUM_JOINTS, 2))
    return arr, kept, skipped
