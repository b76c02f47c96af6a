"""Landmark keyframe samples: loading, motion magnification, augmentation,
and a synthetic corpus generator.

A sample is three frames of 68 facial landmarks (onset, apex, offset) in a
standard 68-point layout, plus a subject id and a class label. Samples are
stored one JSON object per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

N_LANDMARKS = 68
N_FRAMES = 3

DEFAULT_MAGNIFICATION = 3.0


@dataclass
class LandmarkSample:
    """One labelled micro-expression clip reduced to three keyframes."""

    subject: str
    label: int
    frames: np.ndarray  # (3, 68, 2) float64

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.shape != (N_FRAMES, N_LANDMARKS, 2):
            raise ValueError(
                f"frames must have shape ({N_FRAMES}, {N_LANDMARKS}, 2), "
                f"got {self.frames.shape}"
            )
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"sample '{self.subject}': non-finite coordinates")
        if self.label < 0:
            raise ValueError(f"label must be >= 0, got {self.label}")

    def to_record(self) -> dict:
        return {
            "subject": self.subject,
            "label": int(self.label),
            "frames": self.frames.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "LandmarkSample":
        return cls(
            subject=str(record["subject"]),
            label=int(record["label"]),
            frames=np.asarray(record["frames"], dtype=np.float64),
        )


def save_samples(samples, path) -> None:
    """Write samples as JSON lines."""
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record()) + "\n")


def load_samples(path) -> list[LandmarkSample]:
    """Read JSON-lines samples, skipping blank lines."""
    out: list[LandmarkSample] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            out.append(LandmarkSample.from_record(record))
    return out


def magnify(sample: LandmarkSample, alpha: float = DEFAULT_MAGNIFICATION) -> LandmarkSample:
    """Amplify motion relative to onset: p' = onset + alpha * (p - onset).

    The onset frame is a fixed point; alpha = 1 is the identity.
    """
    onset = sample.frames[0]
    frames = onset[None, :, :] + alpha * (sample.frames - onset[None, :, :])
    return LandmarkSample(subject=sample.subject, label=sample.label, frames=frames)


def crop_jitter(
    sample: LandmarkSample,
    rng: np.random.Generator,
    max_scale: float = 0.05,
    max_shift: float = 3.0,
) -> LandmarkSample:
    """Apply one random similarity transform to all three frames.

    The same scale and shift hit every frame so relative motion between
    frames is preserved up to the scale factor; this mimics re-cropping the
    source clip rather than perturbing frames independently.
    """
    scale = 1.0 + rng.uniform(-max_scale, max_scale)
    shift = rng.uniform(-max_shift, max_shift, size=2)
    center = sample.frames[0].mean(axis=0)
    frames = (sample.frames - center) * scale + center + shift
    return LandmarkSample(subject=sample.subject, label=sample.label, frames=frames)


def neutral_face_template() -> np.ndarray:
    """A schematic neutral face in the 68-point layout, shape (68, 2).

    Coordinates are in a nominal 200x200 pixel frame, y increasing downward.
    Only geometric plausibility matters: contours are smooth, components sit
    in natural relative positions, and the layout respects the standard
    index ranges (jaw 0-16, eyebrows 17-26, nose 27-35, eyes 36-47,
    mouth 48-67).
    """
    pts = np.zeros((N_LANDMARKS, 2))

    # jaw 0-16: open arc from left temple to right temple
    t = np.linspace(np.pi * 0.15, np.pi * 0.85, 17)
    pts[0:17, 0] = 100.0 - 62.0 * np.cos(t)
    pts[0:17, 1] = 92.0 + 66.0 * np.sin(t)

    # eyebrows 17-21 (left), 22-26 (right): shallow arches above the eyes
    bx = np.linspace(-28.0, -6.0, 5)
    arch = 4.0 * np.sin(np.linspace(0.0, np.pi, 5))
    pts[17:22, 0] = 100.0 + bx
    pts[17:22, 1] = 62.0 - arch
    pts[22:27, 0] = 100.0 - bx[::-1]
    pts[22:27, 1] = 62.0 - arch[::-1]

    # nose bridge 27-30: vertical line down the midface
    pts[27:31, 0] = 100.0
    pts[27:31, 1] = np.linspace(70.0, 94.0, 4)

    # nose base 31-35: gentle downward arc under the tip
    pts[31:36, 0] = np.linspace(90.0, 110.0, 5)
    pts[31:36, 1] = 100.0 + np.array([0.0, 1.5, 2.5, 1.5, 0.0])

    # eyes 36-41 (left), 42-47 (right): six-point loops
    ang = np.linspace(0.0, 2.0 * np.pi, 6, endpoint=False)
    ex, ey = 9.0 * np.cos(ang), 3.5 * np.sin(ang)
    pts[36:42, 0] = 78.0 + ex
    pts[36:42, 1] = 72.0 + ey
    pts[42:48, 0] = 122.0 + ex
    pts[42:48, 1] = 72.0 + ey

    # mouth outer 48-59: twelve-point loop
    ang = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
    pts[48:60, 0] = 100.0 + 18.0 * np.cos(ang)
    pts[48:60, 1] = 122.0 + 7.0 * np.sin(ang)

    # mouth inner 60-67: smaller eight-point loop
    ang = np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)
    pts[60:68, 0] = 100.0 + 11.0 * np.cos(ang)
    pts[60:68, 1] = 122.0 + 3.5 * np.sin(ang)

    return pts


def _pattern_brow_raise() -> np.ndarray:
    """Both eyebrows translate upward, inner ends most."""
    d = np.zeros((N_LANDMARKS, 2))
    lift = np.linspace(2.0, 5.0, 5)
    d[17:22, 1] = -lift
    d[22:27, 1] = -lift[::-1]
    return d


def _pattern_brow_furrow() -> np.ndarray:
    """Inner brow ends pull together and slightly down."""
    d = np.zeros((N_LANDMARKS, 2))
    pull = np.linspace(0.5, 4.0, 5)
    d[17:22, 0] = pull
    d[17:22, 1] = np.linspace(0.0, 2.0, 5)
    d[22:27, 0] = -pull[::-1]
    d[22:27, 1] = np.linspace(2.0, 0.0, 5)
    return d


def _pattern_mouth_corner_pull() -> np.ndarray:
    """Mouth corners move outward and up, as in a suppressed smile."""
    d = np.zeros((N_LANDMARKS, 2))
    d[48] = (-4.0, -3.0)  # left corner
    d[54] = (4.0, -3.0)  # right corner
    d[49] = (-2.0, -1.5)
    d[53] = (2.0, -1.5)
    d[59] = (-2.0, -1.0)
    d[55] = (2.0, -1.0)
    d[60] = (-2.5, -1.5)
    d[64] = (2.5, -1.5)
    return d


def _pattern_mouth_open() -> np.ndarray:
    """Lower lip drops; jaw follows slightly."""
    d = np.zeros((N_LANDMARKS, 2))
    drop = np.array([1.0, 3.0, 4.5, 5.0, 4.5, 3.0, 1.0])
    d[54:60, 1] += drop[:6] * 0.8
    d[55:59, 1] += 1.5
    d[64:68, 1] += 3.0
    d[6:11, 1] += 1.5
    return d


def _pattern_nose_wrinkle() -> np.ndarray:
    """Nose base lifts and narrows; inner brows dip, as in disgust."""
    d = np.zeros((N_LANDMARKS, 2))
    d[31:36, 1] = -3.0
    d[31, 0] = 2.0
    d[35, 0] = -2.0
    d[27:31, 1] = np.linspace(-0.5, -2.0, 4)
    d[21, 1] = 2.0
    d[22, 1] = 2.0
    d[49:54, 1] = -1.5
    return d


MOTION_PATTERNS = {
    "brow_raise": _pattern_brow_raise,
    "brow_furrow": _pattern_brow_furrow,
    "mouth_corner_pull": _pattern_mouth_corner_pull,
    "mouth_open": _pattern_mouth_open,
    "nose_wrinkle": _pattern_nose_wrinkle,
}

PATTERN_NAMES = tuple(MOTION_PATTERNS)


def synthesize_dataset(
    n_subjects: int = 10,
    samples_per_subject: int = 6,
    n_classes: int = 5,
    noise_sigma: float = 1.0,
    seed: int = 0,
) -> list[LandmarkSample]:
    """Generate a labelled synthetic corpus with per-subject identity.

    Each class is one motion pattern applied on top of a subject-specific
    deformation of the neutral template. The apex frame is onset plus the
    pattern plus coordinate noise; the offset frame returns roughly 60% of
    the way back to onset. Class assignment cycles so every subject sees
    every class.
    """
    if not 2 <= n_classes <= len(PATTERN_NAMES):
        raise ValueError(
            f"n_classes must be in [2, {len(PATTERN_NAMES)}], got {n_classes}"
        )
    rng = np.random.default_rng(seed)
    template = neutral_face_template()
    patterns = [MOTION_PATTERNS[name]() for name in PATTERN_NAMES[:n_classes]]

    samples: list[LandmarkSample] = []
    for si in range(n_subjects):
        subject = f"s{si + 1:02d}"
        # identity: global scale, slight aspect change, smooth per-point warp
        scale = 1.0 + rng.uniform(-0.08, 0.08)
        aspect = 1.0 + rng.uniform(-0.05, 0.05)
        warp = rng.normal(0.0, 1.2, size=(N_LANDMARKS, 2))
        base = template.copy()
        center = base.mean(axis=0)
        base = (base - center) * np.array([scale, scale * aspect]) + center + warp

        for k in range(samples_per_subject):
            label = k % n_classes
            strength = rng.uniform(0.8, 1.2)
            motion = patterns[label] * strength
            onset = base + rng.normal(0.0, 0.3, size=(N_LANDMARKS, 2))
            apex = onset + motion + rng.normal(0.0, noise_sigma, size=(N_LANDMARKS, 2))
            offset = onset + 0.4 * (apex - onset) + rng.normal(
                0.0, 0.5 * noise_sigma, size=(N_LANDMARKS, 2)
            )
            samples.append(
                LandmarkSample(
                    subject=subject,
                    label=label,
                    frames=np.stack([onset, apex, offset]),
                )
            )
    return samples
