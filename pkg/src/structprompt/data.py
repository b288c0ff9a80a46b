"""AG News-format ingestion, seeded k-shot sampling and a synthetic corpus.

CSV rows are ``"class","title","description"`` with a 1-based class index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import split_tokens

AG_NEWS_LABELS = ("world", "sports", "business", "technology")

SIGNATURE_SIZE = 20
SHARED_SIZE = 20
TEXT_LENGTH = 10


class DataError(ValueError):
    """A data file could not be parsed; the message names the row."""


class SamplingError(ValueError):
    """A class lacks the support a k-shot draw requires."""


@dataclass(frozen=True)
class Example:
    text: str
    label: int


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    label_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        C = len(self.label_names)
        for i, ex in enumerate(self.examples):
            if not 0 <= ex.label < C:
                raise DataError(f"example {i}: label {ex.label} outside 0..{C - 1}")

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    @property
    def texts(self) -> list[str]:
        return [ex.text for ex in self.examples]

    @property
    def labels(self) -> list[int]:
        return [ex.label for ex in self.examples]

    def class_counts(self) -> list[int]:
        counts = [0] * self.num_classes
        for ex in self.examples:
            counts[ex.label] += 1
        return counts


def _join(title: str, description: str) -> str:
    # both parts present -> "title description"; otherwise whichever is non-empty
    if title and description:
        return f"{title} {description}"
    return title or description


def read_labeled_csv(path, label_names=None) -> tuple[list[Example], int]:
    """Parse class/title/description rows.

    With ``label_names`` the class must lie in 1..len(label_names); without,
    any class >= 1 is accepted. Returns the examples and the largest class seen.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    examples = []
    top = 0
    limit = len(label_names) if label_names is not None else None
    with handle:
        for rowno, row in enumerate(csv.reader(handle, strict=True), start=1):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: row {rowno}: expected 3 fields, got {len(row)}")
            try:
                cls = int(row[0].strip())
            except ValueError:
                raise DataError(f"{path}: row {rowno}: class {row[0]!r} is not an integer") from None
            if cls < 1 or (limit is not None and cls > limit):
                span = f"1..{limit}" if limit is not None else ">= 1"
                raise DataError(f"{path}: row {rowno}: class {cls} outside {span}")
            text = _join(row[1], row[2])
            if not split_tokens(text):
                raise DataError(f"{path}: row {rowno}: text has no tokens")
            examples.append(Example(text, cls - 1))
            top = max(top, cls)
    return examples, top


def load_agnews_csv(path, label_names=AG_NEWS_LABELS) -> Dataset:
    examples, _ = read_labeled_csv(path, label_names)
    return Dataset(examples, label_names)


def write_csv(ds: Dataset, path) -> None:
    """Serialize in the same 3-field format; the text goes in the title field."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, quoting=csv.QUOTE_ALL, lineterminator="\n")
        for ex in ds.examples:
            writer.writerow([ex.label + 1, ex.text, ""])


def kshot_sample(ds: Dataset, k: int, seed: int) -> tuple[Dataset, Dataset]:
    """Draw exactly ``k`` examples per class without replacement.

    Uses ``numpy.random.default_rng(seed)`` with one permutation per class in
    class order. Both splits keep the original example order.
    """
    if k < 1:
        raise SamplingError(f"k must be >= 1, got {k}")
    by_class: list[list[int]] = [[] for _ in range(ds.num_classes)]
    for i, ex in enumerate(ds.examples):
        by_class[ex.label].append(i)
    for c, members in enumerate(by_class):
        if len(members) < k:
            raise SamplingError(
                f"class {c} ({ds.label_names[c]!r}) has {len(members)} examples, k={k} requested"
            )
    rng = np.random.default_rng(seed)
    chosen = set()
    for members in by_class:
        order = rng.permutation(len(members))[:k]
        chosen.update(members[j] for j in order)
    train = [ex for i, ex in enumerate(ds.examples) if i in chosen]
    rest = [ex for i, ex in enumerate(ds.examples) if i not in chosen]
    return Dataset(train, ds.label_names), Dataset(rest, ds.label_names)


def signature_token(c: int, j: int) -> str:
    return f"sig{c}w{j}"


def shared_token(j: int) -> str:
    return f"sharedw{j}"


def synth_generate(C: int = 4, per_class: int = 100, rho: float = 0.0, seed: int = 0,
                   label_names=None) -> Dataset:
    """Synthetic topic corpus.

    Class ``c`` owns 20 signature tokens; 20 more form a shared pool. Each
    text has 10 tokens, each taken from the shared pool with probability
    ``rho`` and from its class signature otherwise. Examples are emitted
    round-robin over classes from ``numpy.random.default_rng(seed)``.
    """
    if C < 2:
        raise ValueError(f"C must be >= 2, got {C}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    names = tuple(label_names) if label_names else tuple(f"class{c}" for c in range(C))
    if len(names) != C:
        raise ValueError(f"{len(names)} label names for C={C}")
    rng = np.random.default_rng(seed)
    examples = []
    for _ in range(per_class):
        for c in range(C):
            from_shared = rng.random(TEXT_LENGTH) < rho
            picks = rng.integers(0, SIGNATURE_SIZE, size=TEXT_LENGTH)
            tokens = [shared_token(j % SHARED_SIZE) if s else signature_token(c, j)
                      for s, j in zip(from_shared, picks)]
            examples.append(Example(" ".join(tokens), c))
    return Dataset(examples, names)
