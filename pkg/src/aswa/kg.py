"""Knowledge graph ingestion and index structures.

Datasets are directories of tab-separated ``train.txt`` / ``valid.txt`` /
``test.txt`` files with one ``head<TAB>relation<TAB>tail`` triple per line.
Labels are mapped to integer indices in first-appearance order (train, then
valid, then test), which makes ingestion bit-reproducible.

Every relation ``r`` gets an inverse twin ``r + base_relation_count`` so that
head prediction can be asked as a tail query; the (head, relation) -> tails
maps cover both directions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

ERVocab = dict[tuple[int, int], np.ndarray]

# Expected (entities, relations, train, valid, test) per benchmark directory
# name.  Unknown names are not checked.
BENCHMARK_SPLITS = {
    "countries-s1": (271, 2, 1111, 24, 24),
    "countries-s2": (271, 2, 1063, 24, 24),
    "countries-s3": (271, 2, 985, 24, 24),
    "umls": (135, 46, 5216, 652, 661),
    "kinship": (104, 25, 8544, 1068, 1074),
    "nell-995-h100": (22411, 43, 50314, 3763, 3746),
    "nell-995-h75": (28085, 57, 59135, 4441, 4389),
    "nell-995-h50": (34667, 86, 72767, 5440, 5393),
    "fb15k-237": (14541, 237, 272115, 17535, 20466),
    "yago3-10": (123182, 37, 1079040, 5000, 5000),
}


@dataclass(frozen=True)
class KnowledgeGraph:
    """Integer-indexed triple store with KvsAll and filtering indices.

    ``train``/``valid``/``test`` hold raw directed triples ``(h, r, t)`` with
    base relation indices.  ``er_vocab_train`` and ``er_vocab_all`` map
    ``(head, relation)`` to a sorted array of tail indices and include the
    inverse direction ``(t, r + base_relation_count) -> h``.

    Immutable after construction; safe to share across evaluation workers.
    """

    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    er_vocab_train: ERVocab = field(repr=False)
    er_vocab_all: ERVocab = field(repr=False)

    @property
    def entity_count(self) -> int:
        return len(self.entity_labels)

    @property
    def base_relation_count(self) -> int:
        return len(self.relation_labels)

    @property
    def augmented_relation_count(self) -> int:
        return 2 * len(self.relation_labels)

    @property
    def vocab_hash(self) -> str:
        """SHA-256 over the ordered entity and relation label lists."""
        h = hashlib.sha256()
        for label in self.entity_labels:
            h.update(label.encode("utf-8") + b"\x00")
        h.update(b"\x01")
        for label in self.relation_labels:
            h.update(label.encode("utf-8") + b"\x00")
        return h.hexdigest()

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def inverse(self, relation: int) -> int:
        """Index of the opposite-direction twin of ``relation``."""
        r = self.base_relation_count
        return relation + r if relation < r else relation - r

    def with_train_valid(self, train: np.ndarray, valid: np.ndarray) -> "KnowledgeGraph":
        """Same vocabulary and filtering index, different train/valid triples.

        Used to carve a validation holdout out of the training split: the
        KvsAll index is rebuilt over the reduced training part while
        ``er_vocab_all`` keeps covering every known-true triple.
        """
        return KnowledgeGraph(
            entity_labels=self.entity_labels,
            relation_labels=self.relation_labels,
            train=train,
            valid=valid,
            test=self.test,
            er_vocab_train=_build_er_vocab([train], self.base_relation_count),
            er_vocab_all=self.er_vocab_all,
        )


def _read_triples(path: Path) -> list[tuple[str, str, str]]:
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def _build_er_vocab(triple_arrays: list[np.ndarray], base_relation_count: int) -> ERVocab:
    pairs: dict[tuple[int, int], set[int]] = {}
    for arr in triple_arrays:
        for h, r, t in arr.tolist():
            pairs.setdefault((h, r), set()).add(t)
            pairs.setdefault((t, r + base_relation_count), set()).add(h)
    return {k: np.array(sorted(v), dtype=np.int64) for k, v in pairs.items()}


def load_dataset(directory, no_test: bool = False) -> KnowledgeGraph:
    """Load ``train.txt`` / ``valid.txt`` / ``test.txt`` from ``directory``.

    With ``no_test=True`` the valid and test files may be absent (ablation
    datasets); missing files then load as empty splits.
    """
    directory = Path(directory)
    paths = {name: directory / f"{name}.txt" for name in ("train", "valid", "test")}
    if not paths["train"].exists():
        raise DatasetError(f"missing file: {paths['train']}")
    raw = {"train": _read_triples(paths["train"])}
    for name in ("valid", "test"):
        if paths[name].exists():
            raw[name] = _read_triples(paths[name])
        elif no_test:
            raw[name] = []
        else:
            raise DatasetError(f"missing file: {paths[name]} (use no_test for ablation sets)")
    if not raw["train"]:
        raise DatasetError(f"{paths['train']}: training split required but empty")

    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    indexed: dict[str, np.ndarray] = {}
    for name in ("train", "valid", "test"):
        rows = []
        for h, r, t in raw[name]:
            hi = entity_ids.setdefault(h, len(entity_ids))
            ri = relation_ids.setdefault(r, len(relation_ids))
            ti = entity_ids.setdefault(t, len(entity_ids))
            rows.append((hi, ri, ti))
        indexed[name] = np.array(rows, dtype=np.int64).reshape(-1, 3)

    base = len(relation_ids)
    return KnowledgeGraph(
        entity_labels=tuple(entity_ids),
        relation_labels=tuple(relation_ids),
        train=indexed["train"],
        valid=indexed["valid"],
        test=indexed["test"],
        er_vocab_train=_build_er_vocab([indexed["train"]], base),
        er_vocab_all=_build_er_vocab(
            [indexed["train"], indexed["valid"], indexed["test"]], base
        ),
    )


def expected_split_sizes(dataset_name: str):
    """Benchmark statistics for a known dataset directory name, else None."""
    return BENCHMARK_SPLITS.get(dataset_name.lower())


def kvsall_targets(kg: KnowledgeGraph, pairs) -> np.ndarray:
    """Multi-hot target rows over all entities for training (head, relation) pairs.

    Raises if a pair is unknown to the training vocabulary: training pairs are
    enumerated from ``er_vocab_train``, so an absent pair is a caller bug and
    must not silently yield an all-zero row.
    """
    out = np.zeros((len(pairs), kg.entity_count), dtype=np.float64)
    for i, pair in enumerate(pairs):
        key = (int(pair[0]), int(pair[1]))
        tails = kg.er_vocab_train.get(key)
        if tails is None:
            raise ValueError(f"pair {key} not present in the training vocabulary")
        out[i, tails] = 1.0
    return out


def holdout_split(triples: np.ndarray, ratio: float, seed: int):
    """Deterministic seeded shuffle, then prefix/suffix split.

    Returns ``(train_part, holdout_part)`` with ``len(train_part) ==
    floor(ratio * len(triples))``.  Both parts must be non-empty.
    """
    n = len(triples)
    n_train = int(ratio * n)
    if n_train < 1 or n - n_train < 1:
        raise ValueError(f"ratio {ratio} leaves an empty part for {n} triples")
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = triples[perm]
    return shuffled[:n_train].copy(), shuffled[n_train:].copy()


def filter_mask(kg: KnowledgeGraph, head: int, relation: int, true_tail: int) -> set[int]:
    """Entities to exclude when ranking ``true_tail`` for ``(head, relation)``.

    These are the other tails known to be true anywhere in the graph; unknown
    pairs yield an empty mask.
    """
    tails = kg.er_vocab_all.get((head, relation))
    if tails is None:
        return set()
    mask = set(tails.tolist())
    mask.discard(true_tail)
    return mask
