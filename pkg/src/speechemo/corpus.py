"""Dataset model: manifests, speaker-disjoint folds, oversampling, normalization, padding."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsp import Spectrogram

GENDERS = ("F", "M")
N_SESSIONS = 5
NORM_EPS = 1e-8


class Emotion(enum.IntEnum):
    NEUTRAL = 0
    SADNESS = 1
    ANGER = 2
    HAPPINESS = 3

    @classmethod
    def parse(cls, text: str) -> "Emotion":
        key = text.strip().lower()
        try:
            return _LABELS[key]
        except KeyError:
            raise ValueError(f"unknown emotion {text!r}") from None


_LABELS = {e.name.lower(): e for e in Emotion}
_LABELS.update({"neu": Emotion.NEUTRAL, "sad": Emotion.SADNESS,
                "ang": Emotion.ANGER, "hap": Emotion.HAPPINESS})


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    id: str
    source: str | Spectrogram
    label: Emotion
    session: int
    gender: str

    def __post_init__(self):
        if not 1 <= self.session <= N_SESSIONS:
            raise ValueError(f"session {self.session} outside 1..{N_SESSIONS}")
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be F or M, got {self.gender!r}")

    @property
    def speaker(self) -> tuple[int, str]:
        return (self.session, self.gender)


@dataclass(frozen=True)
class Manifest:
    utterances: tuple[Utterance, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise ManifestError("manifest is empty")
        seen = set()
        for u in self.utterances:
            if u.id in seen:
                raise ManifestError(f"duplicate utterance id {u.id!r}")
            seen.add(u.id)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def speakers(self) -> set[tuple[int, str]]:
        return {u.speaker for u in self.utterances}

    def class_counts(self) -> dict[Emotion, int]:
        counts = {e: 0 for e in Emotion}
        for u in self.utterances:
            counts[u.label] += 1
        return counts


MANIFEST_COLUMNS = ("id", "path", "label", "session", "gender")


def load_manifest(path: str | Path) -> Manifest:
    """Parse a manifest CSV; relative audio paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    utterances = []
    seen: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                uid = row["id"].strip()
                if not uid:
                    raise ValueError("empty id")
                if uid in seen:
                    raise ValueError(f"duplicate id {uid!r} (first on line {seen[uid]})")
                label = Emotion.parse(row["label"])
                session = int(row["session"])
                src = Path(row["path"].strip())
                if not src.is_absolute():
                    src = base / src
                utt = Utterance(uid, str(src), label, session, row["gender"].strip().upper())
            except (ValueError, TypeError, AttributeError) as exc:
                raise ManifestError(f"{path}, row on line {line}: {exc}") from None
            seen[uid] = line
            utterances.append(utt)
    return Manifest(tuple(utterances), provenance=str(path))


def save_manifest(manifest: Manifest, path: str | Path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for u in manifest:
            src = u.source if isinstance(u.source, str) else ""
            if src:
                try:
                    src = str(Path(src).relative_to(path.parent))
                except ValueError:
                    pass
            writer.writerow([u.id, src, u.label.name.lower(), u.session, u.gender])


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    test: tuple[int, str]
    val: tuple[int, str]
    train_sessions: tuple[int, ...]

    def partition(self, utterances: Iterable[Utterance]):
        """Split into ``(train, val, test)`` lists, preserving input order."""
        train, val, test = [], [], []
        for u in utterances:
            if u.speaker == self.test:
                test.append(u)
            elif u.speaker == self.val:
                val.append(u)
            elif u.session in self.train_sessions:
                train.append(u)
        return train, val, test


def fold_for(fold_id: int) -> FoldSplit:
    if not 1 <= fold_id <= 2 * N_SESSIONS:
        raise ValueError(f"fold must be in 1..{2 * N_SESSIONS}, got {fold_id}")
    session = (fold_id - 1) // 2 + 1
    gender = GENDERS[(fold_id - 1) % 2]
    other = GENDERS[1 - GENDERS.index(gender)]
    train = tuple(s for s in range(1, N_SESSIONS + 1) if s != session)
    return FoldSplit(fold_id, (session, gender), (session, other), train)


def make_folds(manifest: Manifest) -> list[FoldSplit]:
    """Ten folds ordered (1,F), (1,M), (2,F), ... by test speaker."""
    present = manifest.speakers()
    absent = [(s, g) for s in range(1, N_SESSIONS + 1) for g in GENDERS if (s, g) not in present]
    if absent:
        raise ManifestError(f"manifest lacks speakers {absent}")
    return [fold_for(k) for k in range(1, 2 * N_SESSIONS + 1)]


def oversample(train: Sequence[Utterance], classes: Iterable[Emotion], factor: int) -> list[Utterance]:
    if factor < 1:
        raise ValueError("oversampling factor must be >= 1")
    classes = set(classes)
    picked = [u for u in train if u.label in classes]
    return list(train) + picked * (factor - 1)


def rarest_classes(utterances: Iterable[Utterance], k: int = 2) -> set[Emotion]:
    counts = {e: 0 for e in Emotion}
    for u in utterances:
        counts[u.label] += 1
    ranked = sorted(Emotion, key=lambda e: (counts[e], e))
    return set(ranked[:k])


@dataclass(frozen=True)
class DatasetStats:
    mean: float
    std: float
    epsilon: float = NORM_EPS

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Spectrogram) else np.asarray(x)


def compute_stats(spectrograms: Iterable, epsilon: float = NORM_EPS) -> DatasetStats:
    """Scalar mean/std over every pixel of every (unpadded) spectrogram."""
    arrays = [_values(s).astype(np.float64, copy=False) for s in spectrograms]
    if not arrays:
        raise ValueError("cannot compute statistics of an empty set")
    n = sum(a.size for a in arrays)
    mean = sum(a.sum() for a in arrays) / n
    var = sum(((a - mean) ** 2).sum() for a in arrays) / n
    return DatasetStats(float(mean), float(np.sqrt(var)), epsilon)


def normalize(spec, stats: DatasetStats):
    x = _values(spec)
    out = (x - stats.mean) / np.sqrt(stats.std ** 2 + stats.epsilon)
    if isinstance(spec, Spectrogram):
        return spec.replace(out.astype(x.dtype, copy=False))
    return out


@dataclass
class PaddedBatch:
    values: np.ndarray   # [B, T_max, F]
    lengths: np.ndarray  # [B]
    labels: np.ndarray   # [B]

    def __len__(self):
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.values.shape[1])[None, :] < self.lengths[:, None]


def pad_batch(samples: Sequence[tuple], dtype=np.float64) -> PaddedBatch:
    """Stack ``(spectrogram, label)`` pairs, zero-padding along time."""
    arrays = [_values(s) for s, _ in samples]
    if not arrays:
        raise ValueError("empty batch")
    widths = {a.shape[1] for a in arrays}
    if len(widths) != 1:
        raise ValueError(f"mixed frequency widths in batch: {sorted(widths)}")
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    values = np.zeros((len(arrays), lengths.max(), widths.pop()), dtype=dtype)
    for i, a in enumerate(arrays):
        values[i, : a.shape[0]] = a
    labels = np.array([int(y) for _, y in samples], dtype=np.int64)
    return PaddedBatch(values, lengths, labels)
