"""Embedding storage, scoring functions, and analytic gradients.

All four model kinds are bilinear in the tail: ``score(h, r, t) =
combine(h, r) . t`` as a real inner product over ``d`` coordinates, so
scoring every entity at once is a single matrix product against the entity
table.  Complex and quaternion coordinates are packed as contiguous halves /
quarters of the real vector (not interleaved), which keeps the kernels
block-wise slices.

Training arithmetic is double precision throughout; checkpoints are stored
as 32-bit floats.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError

CHECKPOINT_SCHEMA_VERSION = 1
PACKING = "contiguous-blocks"


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ModelKind:
    """One of distmult | complex | qmult | keci.

    ``keci`` carries its Clifford signature ``(p, q)``; only the degenerate
    ``(0, 0)`` case (elementwise real product) is supported.
    """

    name: str
    p: int = 0
    q: int = 0

    _KNOWN = ("distmult", "complex", "qmult", "keci")

    def __post_init__(self):
        if self.name not in self._KNOWN:
            raise ValueError(f"unknown model kind {self.name!r}")
        if self.name == "keci" and (self.p, self.q) != (0, 0):
            raise ValueError(
                f"unsupported Keci signature p={self.p}, q={self.q} (only p=q=0)"
            )
        if self.name != "keci" and (self.p, self.q) != (0, 0):
            raise ValueError(f"p/q only apply to keci, not {self.name}")

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        """Parse CLI notation: ``distmult``, ``complex``, ``qmult``, ``keci``
        or ``keci:p,q``."""
        name, _, sig = text.partition(":")
        name = name.strip().lower()
        if not sig:
            return cls(name)
        try:
            p, q = (int(v) for v in sig.split(","))
        except ValueError:
            raise ValueError(f"malformed model signature {text!r}") from None
        return cls(name, p, q)

    @property
    def block_divisor(self) -> int:
        """Required divisor of the real embedding width."""
        return {"distmult": 1, "complex": 2, "qmult": 4, "keci": 1}[self.name]

    def check_width(self, d: int) -> None:
        if d < 4:
            raise ValueError(f"embedding width d={d} too small (need d >= 4)")
        if d % self.block_divisor:
            raise ValueError(
                f"{self.name} needs d divisible by {self.block_divisor}, got {d}"
            )

    def __str__(self):
        return self.name if self.name != "keci" else f"keci:{self.p},{self.q}"


@dataclass
class EmbeddingSet:
    """Entity and relation embedding matrices of equal real width."""

    entities: np.ndarray
    relations: np.ndarray

    @property
    def d(self) -> int:
        return self.entities.shape[1]

    def copy(self) -> "EmbeddingSet":
        return EmbeddingSet(self.entities.copy(), self.relations.copy())

    def as_arrays(self) -> dict[str, np.ndarray]:
        """Named view of the parameter matrices (no copies)."""
        return {"entities": self.entities, "relations": self.relations}

    @classmethod
    def from_arrays(cls, arrays) -> "EmbeddingSet":
        return cls(arrays["entities"], arrays["relations"])

    def assert_finite(self) -> None:
        for name, arr in self.as_arrays().items():
            if not np.isfinite(arr).all():
                raise FloatingPointError(f"non-finite entries in {name} matrix")


def init_embeddings(
    model: ModelKind, entity_count: int, relation_count: int, d: int, seed: int
) -> EmbeddingSet:
    """Glorot-style uniform init on [-b, b] with b = sqrt(6 / (rows + d)).

    One seeded generator draws the entity matrix first, then the relation
    matrix, so the same seed reproduces both bit-exactly.
    """
    model.check_width(d)
    rng = np.random.default_rng(seed)
    b_e = np.sqrt(6.0 / (entity_count + d))
    b_r = np.sqrt(6.0 / (relation_count + d))
    return EmbeddingSet(
        entities=rng.uniform(-b_e, b_e, size=(entity_count, d)),
        relations=rng.uniform(-b_r, b_r, size=(relation_count, d)),
    )


def _halves(x):
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def _quarters(x):
    k = x.shape[-1] // 4
    return x[..., :k], x[..., k : 2 * k], x[..., 2 * k : 3 * k], x[..., 3 * k :]


def _hamilton(a, b, c, d, p, q, u, v):
    return (
        a * p - b * q - c * u - d * v,
        a * q + b * p + c * v - d * u,
        a * u - b * v + c * p + d * q,
        a * v + b * u - c * q + d * p,
    )


def combine(model: ModelKind, h_rows: np.ndarray, r_rows: np.ndarray) -> np.ndarray:
    """Head-relation combination f(h, r) with score(h, r, t) = f(h, r) . t.

    distmult / keci(0,0): elementwise product.  complex: complex product per
    coordinate pair (real inner product with t then equals Re <h, r, conj t>).
    qmult: Hamilton product per quaternion block.
    """
    if h_rows.shape != r_rows.shape:
        raise ValueError(f"shape mismatch {h_rows.shape} vs {r_rows.shape}")
    if model.name in ("distmult", "keci"):
        return h_rows * r_rows
    if model.name == "complex":
        h_re, h_im = _halves(h_rows)
        r_re, r_im = _halves(r_rows)
        return np.concatenate(
            [h_re * r_re - h_im * r_im, h_re * r_im + h_im * r_re], axis=-1
        )
    ha, hb, hc, hd = _quarters(h_rows)
    ra, rb, rc, rd = _quarters(r_rows)
    return np.concatenate(_hamilton(ha, hb, hc, hd, ra, rb, rc, rd), axis=-1)


def _combine_backward(model: ModelKind, h_rows, r_rows, g):
    """Gradients of ``sum(combine(h, r) * g)`` w.r.t. the head and relation rows."""
    if model.name in ("distmult", "keci"):
        return g * r_rows, g * h_rows
    if model.name == "complex":
        h_re, h_im = _halves(h_rows)
        r_re, r_im = _halves(r_rows)
        g_re, g_im = _halves(g)
        # adjoint of multiplication by z is multiplication by conj(z)
        dh = np.concatenate([g_re * r_re + g_im * r_im, g_im * r_re - g_re * r_im], axis=-1)
        dr = np.concatenate([g_re * h_re + g_im * h_im, g_im * h_re - g_re * h_im], axis=-1)
        return dh, dr
    ha, hb, hc, hd = _quarters(h_rows)
    ra, rb, rc, rd = _quarters(r_rows)
    ga, gb, gc, gd = _quarters(g)
    # dh = g (x) conj(r), dr = conj(h) (x) g
    dh = np.concatenate(_hamilton(ga, gb, gc, gd, ra, -rb, -rc, -rd), axis=-1)
    dr = np.concatenate(_hamilton(ha, -hb, -hc, -hd, ga, gb, gc, gd), axis=-1)
    return dh, dr


def _gather(params: EmbeddingSet, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size:
        if pairs[:, 0].max(initial=-1) >= len(params.entities) or pairs.min(initial=0) < 0:
            raise IndexError("entity index out of range")
        if pairs[:, 1].max(initial=-1) >= len(params.relations):
            raise IndexError("relation index out of range")
    return pairs, params.entities[pairs[:, 0]], params.relations[pairs[:, 1]]


def score_all_tails(model: ModelKind, params: EmbeddingSet, pairs) -> np.ndarray:
    """Scores of every entity as the tail of each (head, relation) pair."""
    _, h_rows, r_rows = _gather(params, pairs)
    return combine(model, h_rows, r_rows) @ params.entities.T


def score_triple(model: ModelKind, params: EmbeddingSet, h: int, r: int, t: int) -> float:
    if not 0 <= t < len(params.entities):
        raise IndexError("entity index out of range")
    _, h_rows, r_rows = _gather(params, [(h, r)])
    return float(combine(model, h_rows, r_rows)[0] @ params.entities[t])


@dataclass
class Gradients:
    """Output of :func:`grad_step_inputs`.

    ``d_entities`` carries the tail-side gradient over the whole entity
    matrix; head and relation row gradients are per pair and must be
    scatter-added by the caller (duplicates sum).
    """

    d_entities: np.ndarray
    d_head_rows: np.ndarray
    d_rel_rows: np.ndarray


def grad_step_inputs(
    model: ModelKind, params: EmbeddingSet, pairs, dL_dscores: np.ndarray
) -> Gradients:
    """Exact analytic gradients of the loss through the bilinear score.

    ``dL_dscores`` has one row per pair and one column per entity, as
    produced by the loss for precisely these pairs.
    """
    pairs, h_rows, r_rows = _gather(params, pairs)
    if dL_dscores.shape != (len(pairs), len(params.entities)):
        raise ValueError(
            f"dL_dscores shape {dL_dscores.shape} does not match "
            f"({len(pairs)}, {len(params.entities)})"
        )
    f = combine(model, h_rows, r_rows)
    d_entities = dL_dscores.T @ f
    df = dL_dscores @ params.entities
    d_head_rows, d_rel_rows = _combine_backward(model, h_rows, r_rows, df)
    return Gradients(d_entities, d_head_rows, d_rel_rows)


def accumulate_gradients(kg_pairs, grads: Gradients, entity_count: int, relation_count: int):
    """Scatter per-pair row gradients into full matrices (deterministic order).

    Returns ``{"entities": ..., "relations": ...}`` congruent to the
    parameter matrices.
    """
    pairs = np.asarray(kg_pairs, dtype=np.int64).reshape(-1, 2)
    d_ent = grads.d_entities.copy()
    np.add.at(d_ent, pairs[:, 0], grads.d_head_rows)
    d_rel = np.zeros((relation_count, grads.d_rel_rows.shape[1]))
    np.add.at(d_rel, pairs[:, 1], grads.d_rel_rows)
    return {"entities": d_ent, "relations": d_rel}


def save_checkpoint(
    directory,
    model: ModelKind,
    params: EmbeddingSet,
    vocab_hash: str,
    seed: int,
    ensemble: EmbeddingSet | None = None,
) -> None:
    """Write ``meta.json`` + ``params.bin`` (and ``params.bin.ens``).

    ``params.bin`` holds little-endian 32-bit floats: the entity matrix
    row-major, then the relation matrix row-major.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "model": str(model),
        "d": params.d,
        "entity_count": len(params.entities),
        "relation_count": len(params.relations),
        "packing": PACKING,
        "vocab_sha256": vocab_hash,
        "seed": seed,
    }
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_params(directory / "params.bin", params)
    if ensemble is not None:
        _write_params(directory / "params.bin.ens", ensemble)


def _write_params(path: Path, params: EmbeddingSet) -> None:
    with open(path, "wb") as fh:
        fh.write(params.entities.astype("<f4").tobytes())
        fh.write(params.relations.astype("<f4").tobytes())


def load_checkpoint(directory, ensemble: bool = False):
    """Read a checkpoint back as ``(model, EmbeddingSet, meta_dict)``."""
    directory = Path(directory)
    try:
        with open(directory / "meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"missing checkpoint metadata: {directory / 'meta.json'}")
    name = "params.bin.ens" if ensemble else "params.bin"
    path = directory / name
    if not path.exists():
        raise DatasetError(f"missing checkpoint parameters: {path}")
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    ne, nr, d = meta["entity_count"], meta["relation_count"], meta["d"]
    if raw.size != (ne + nr) * d:
        raise DatasetError(f"{path}: expected {(ne + nr) * d} floats, found {raw.size}")
    params = EmbeddingSet(raw[: ne * d].reshape(ne, d), raw[ne * d :].reshape(nr, d))
    return ModelKind.parse(meta["model"]), params, meta


def params_digest(arrays) -> str:
    """Order-stable SHA-256 of a named set of float arrays."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()
