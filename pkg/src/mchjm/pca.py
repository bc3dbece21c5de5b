"""PCA of the fitted covariance and the reduced volatility loadings."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["PcaResult", "decompose", "select_components", "reduced_volatility"]


@dataclass(frozen=True)
class PcaResult:
    eigenvalues: np.ndarray  # descending, clipped at 0
    eigenvectors: np.ndarray  # orthogonal, one column per component
    F: int | None = None
    phi: float | None = None

    @property
    def D(self) -> int:
        return int(self.eigenvalues.size)

    def explained_fraction(self, F: int) -> float:
        total = float(self.eigenvalues.sum())
        if total == 0.0:
            return 1.0
        return float(self.eigenvalues[:F].sum()) / total

    @property
    def W(self) -> np.ndarray:
        """D x F loadings: eigenvectors scaled by sqrt(eigenvalue)."""
        if self.F is None:
            raise ValueError("component count not selected yet")
        return self.eigenvectors[:, : self.F] * np.sqrt(self.eigenvalues[: self.F])


def decompose(C_hat: np.ndarray) -> PcaResult:
    """Eigendecomposition of a symmetric covariance, deterministic ordering.

    Eigenvalues come out descending and clipped at zero; each eigenvector's
    sign is fixed so its largest-magnitude entry is positive.
    """
    C = np.asarray(C_hat, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(C, C.T, atol=1e-10):
        raise ValueError("covariance must be symmetric")
    vals, vecs = np.linalg.eigh(C)
    # eigh returns ascending order; stable flip keeps tied values in index order
    order = np.argsort(-vals, kind="stable")
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    return PcaResult(eigenvalues=vals, eigenvectors=vecs)


def select_components(res: PcaResult, threshold: float = 0.95) -> PcaResult:
    """Smallest F whose explained-variance fraction reaches the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    total = float(res.eigenvalues.sum())
    if total == 0.0:
        return replace(res, F=0, phi=1.0)
    cum = np.cumsum(res.eigenvalues) / total
    F = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    F = min(F, res.D)
    return replace(res, F=F, phi=float(cum[F - 1]))


def reduced_volatility(res: PcaResult) -> np.ndarray:
    """The D x F loading matrix, usable as the volatility matrix in simulation."""
    return res.W
