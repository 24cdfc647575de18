"""Unconstrained parameter vector <-> root-mixture arrays."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class ThetaLayout:
    """Per component: log-weight, mean, lower Cholesky factor of the covariance.

    Cholesky entries are stored row-major over the lower triangle; diagonal
    entries are log-transformed so every real vector decodes to a valid,
    positive-weight root mixture.
    """

    dim: int
    n_root: int

    @property
    def per_component(self) -> int:
        d = self.dim
        return 1 + d + d * (d + 1) // 2

    @property
    def size(self) -> int:
        return self.n_root * self.per_component

    @cached_property
    def _tril(self):
        return np.tril_indices(self.dim)

    @cached_property
    def _diag_mask(self):
        rows, cols = self._tril
        return rows == cols

    def split(self, theta):
        """Return ``(log_weights, means, chol)`` with batch axes preserved."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.size:
            raise ValueError(f"theta has length {theta.shape[-1]}, layout expects {self.size}")
        if not np.all(np.isfinite(theta)):
            raise NumericError("non-finite parameter vector")
        d = self.dim
        blocks = theta.reshape(theta.shape[:-1] + (self.n_root, self.per_component))
        log_w = blocks[..., 0]
        means = blocks[..., 1 : 1 + d]
        entries = blocks[..., 1 + d :]
        entries = np.where(self._diag_mask, np.exp(entries), entries)
        chol = np.zeros(theta.shape[:-1] + (self.n_root, d, d))
        rows, cols = self._tril
        chol[..., rows, cols] = entries
        return log_w, means, chol

    def arrays(self, theta):
        """Unnormalized weights (max scaled to 1), means and covariances."""
        log_w, means, chol = self.split(theta)
        v = np.exp(log_w - log_w.max(axis=-1, keepdims=True))
        return v, means, chol @ np.swapaxes(chol, -1, -2)

    def encode(self, weights, means, covs):
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float).reshape(self.n_root, self.dim)
        chol = np.linalg.cholesky(np.asarray(covs, dtype=float).reshape(self.n_root, self.dim, self.dim))
        rows, cols = self._tril
        entries = chol[:, rows, cols].copy()
        entries[:, self._diag_mask] = np.log(entries[:, self._diag_mask])
        blocks = np.concatenate([np.log(weights)[:, None], means, entries], axis=1)
        return blocks.reshape(-1)

    def labels(self):
        names = []
        rows, cols = self._tril
        for i in range(self.n_root):
            names.append(f"component {i} log-weight")
            names.extend(f"component {i} mean[{k}]" for k in range(self.dim))
            for r, c in zip(rows, cols):
                kind = "log-scale" if r == c else "scale"
                names.append(f"component {i} {kind}[{r},{c}]")
        return names

    def scale_mask(self):
        """Boolean mask of the log-diagonal Cholesky entries."""
        block = np.zeros(self.per_component, dtype=bool)
        block[1 + self.dim :] = self._diag_mask
        return np.tile(block, self.n_root)

    def mean_mask(self):
        block = np.zeros(self.per_component, dtype=bool)
        block[1 : 1 + self.dim] = True
        return np.tile(block, self.n_root)

    def bounds(self, param_bound, log_scale_floor):
        lower = np.full(self.size, -float(param_bound))
        upper = np.full(self.size, float(param_bound))
        lower[self.scale_mask()] = float(log_scale_floor)
        return lower, upper
