"""Normalized-temperature cross-entropy over batches of paired embeddings.

A batch holds 2N unit-norm rows where rows (2k, 2k+1) are the positive
pair for k = 0..N-1 (0-based; the partner of row i is i ^ 1). The loss for
one ordered pair is

    l(i, j) = -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )

with s_ij the dot product of rows i and j, and the batch loss averages
l(i, partner(i)) over all 2N rows. Everything is built from taped ops, so
gradients flow back to the embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import BatchError
from .numcore import Array

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingBatch:
    """2N embedding rows arranged as consecutive positive pairs."""

    z: Array
    tau: float = 0.5

    def __post_init__(self):
        if self.z.ndim != 2:
            raise BatchError(f"embeddings must be (2N, d), got shape {self.z.shape}")
        rows, _ = self.z.shape
        if rows < 2 or rows % 2:
            raise BatchError(f"need an even number of rows >= 2, got {rows}")
        if not self.tau > 0:
            raise BatchError(f"temperature must be > 0, got {self.tau}")
        norms = np.linalg.norm(self.z.data, axis=1)
        worst = float(np.abs(norms - 1.0).max())
        if worst > _UNIT_TOL:
            raise BatchError(f"rows must be unit-norm; worst deviation {worst:g}")

    @property
    def num_pairs(self) -> int:
        return self.z.shape[0] // 2


def partner_indices(rows: int) -> np.ndarray:
    """Partner of row i is i ^ 1: [1, 0, 3, 2, ...]."""
    return np.arange(rows, dtype=np.intp) ^ 1


def pairwise_sim(batch: EmbeddingBatch) -> Array:
    """S[i][j] = z_i . z_j (cosine, since rows are unit-norm)."""
    return nc.matmul(batch.z, nc.transpose(batch.z))


def _row_losses(batch: EmbeddingBatch, partners: np.ndarray) -> Array:
    """Vector of l(i, partners[i]) for every row i.

    l(i, j) = logsumexp_{k != i}(s_ik / tau) - s_ij / tau, computed on the
    full scaled similarity matrix with the diagonal masked out.
    """
    rows = batch.z.shape[0]
    scaled = nc.scale(pairwise_sim(batch), 1.0 / batch.tau)
    offdiag = ~np.eye(rows, dtype=bool)
    lse = nc.masked_row_logsumexp(scaled, offdiag)
    pos = nc.take_per_row(scaled, partners)
    return nc.sub(lse, pos)


def ntxent_pair_loss(batch: EmbeddingBatch, i: int, j: int) -> Array:
    """Loss of the ordered pair (i, j); scalar, >= 0."""
    rows = batch.z.shape[0]
    if not (0 <= i < rows and 0 <= j < rows):
        raise BatchError(f"pair ({i}, {j}) out of range for {rows} rows")
    if i == j:
        raise BatchError(f"a row cannot be its own positive pair (i = j = {i})")
    partners = np.full(rows, j, dtype=np.intp)
    partners[j] = i  # keep every row's partner valid; only row i is read
    losses = _row_losses(batch, partners)
    picked = nc.take_per_row(nc.reshape(losses, (1, rows)), [i])
    return nc.sum_all(picked)


def ntxent_batch_loss(batch: EmbeddingBatch) -> Array:
    """Mean of l(i, partner(i)) over all 2N rows.

    Equals (1/2N) sum_k [l(2k, 2k+1) + l(2k+1, 2k)].
    """
    return nc.mean_all(_row_losses(batch, partner_indices(batch.z.shape[0])))
