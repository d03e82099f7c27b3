from __future__ import annotations

import math
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from timeline_qa.errors import DimensionMismatchError, EmptyInputError

_ERF = np.vectorize(math.erf, otypes=[np.float64])


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2))), elementwise."""

    arr = np.asarray(x, dtype=np.float64)
    return 0.5 * arr * (1.0 + _ERF(arr / math.sqrt(2.0)))


class Projector:
    """Two-layer token projector ``t = W2 @ gelu(W1 @ z)``.

    Weights are never trained here: they come from a seeded generator or an ``.npz`` asset.
    """

    def __init__(self, w1: np.ndarray, w2: np.ndarray) -> None:
        w1 = np.asarray(w1, dtype=np.float64)
        w2 = np.asarray(w2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2:
            raise DimensionMismatchError("projector weights must be matrices")
        if w2.shape[1] != w1.shape[0]:
            raise DimensionMismatchError(
                f"W2 columns ({w2.shape[1]}) must equal W1 rows ({w1.shape[0]})"
            )
        self.w1 = w1
        self.w2 = w2

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.w2.shape[0])

    @classmethod
    def seeded(cls, input_dim: int, *, hidden_dim: int | None = None, output_dim: int | None = None,
               seed: int = 0) -> Projector:
        hidden = hidden_dim or 2 * input_dim
        output = output_dim or input_dim
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, 1.0 / math.sqrt(input_dim), size=(hidden, input_dim))
        w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(output, hidden))
        return cls(w1, w2)

    @classmethod
    def load(cls, path: Path) -> Projector:
        with np.load(path) as data:
            return cls(data["W1"], data["W2"])

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(fh, W1=self.w1, W2=self.w2)

    def project(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                f"embedding dimension {z.shape[-1]} does not match projector input {self.input_dim}"
            )
        hidden = gelu(z @ self.w1.T)
        return hidden @ self.w2.T


def project_tokens(samples: Sequence[object] | np.ndarray, proj: Projector) -> np.ndarray:
    """Project each sample (a FrameSample or a raw embedding row); returns a (K, P) matrix."""

    rows = [getattr(s, "embedding", s) for s in samples]
    stacked = np.asarray(rows, dtype=np.float64)
    if stacked.size == 0:
        return np.zeros((0, proj.output_dim), dtype=np.float64)
    if stacked.ndim == 1:
        stacked = stacked.reshape(1, -1)
    return proj.project(stacked)


class AggregationMode(str, Enum):
    MEAN = "mean"
    ATTENTION_WEIGHTED = "attention-weighted"


def aggregate_segment(
    projected: Sequence[Sequence[float]] | np.ndarray,
    mode: AggregationMode = AggregationMode.MEAN,
) -> np.ndarray:
    tokens = np.asarray(projected, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise EmptyInputError("cannot aggregate an empty token list")
    mean = tokens.mean(axis=0)
    if mode is AggregationMode.MEAN:
        return mean
    scores = tokens @ mean
    weights = np.exp(scores - np.max(scores))
    weights /= weights.sum()
    return weights @ tokens
