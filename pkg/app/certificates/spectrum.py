"""Gram matrices over a finite ``A × S`` index set and their spectra.

Flat index of the pair ``(a, s)`` is ``s * n_actions + a`` throughout.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg

from app.core.errors import DimensionMismatchError
from app.policies.base import PreferenceModel
from app.policies.features import RandomFeatures

_SYMMETRY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GramSpectrum:
    """Symmetric PSD Gram ``Θ`` with eigenpairs sorted by decreasing eigenvalue.

    ``eigenvectors[:, j]`` is ``e_j``.  ``n_actions`` records how the flat
    index splits into ``(s, a)``.
    """

    gram: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_actions: int

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > self.eigenvalues[0] * 1e-12)) if self.size else 0


def eigendecompose(gram: np.ndarray, n_actions: int) -> GramSpectrum:
    """Eigen-decompose a symmetric Gram; tiny negative eigenvalues are zeroed."""
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise DimensionMismatchError(f"Gram matrix must be square, got {gram.shape}")
    if gram.shape[0] % n_actions:
        raise DimensionMismatchError(f"Gram size {gram.shape[0]} is not a multiple of n_actions={n_actions}")
    scale = max(float(np.max(np.abs(gram))), 1.0)
    if np.max(np.abs(gram - gram.T)) > _SYMMETRY_TOL * scale:
        raise DimensionMismatchError("Gram matrix is not symmetric")
    gram = 0.5 * (gram + gram.T)
    values, vectors = linalg.eigh(gram)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    return GramSpectrum(gram, values, vectors[:, order], n_actions)


def preference_gram(model: PreferenceModel, theta: np.ndarray, states: Sequence[Any], step: int = 1) -> np.ndarray:
    """Tangent kernel ``Θ((a,s),(a',s')) = ⟨∂h(a,s), ∂h(a',s')⟩`` at ``θ``.

    For a linear model this is the feature kernel ``ψ(a,s)·ψ(a',s')``; for a
    network it is the empirical neural tangent kernel.
    """
    jac = np.concatenate([model.jacobian(theta, s, step) for s in states], axis=0)
    return jac @ jac.T


def kernel_gram(model: PreferenceModel, theta: np.ndarray, states: Sequence[Any], step: int = 1) -> GramSpectrum:
    """:func:`preference_gram` followed by :func:`eigendecompose`."""
    return eigendecompose(preference_gram(model, theta, states, step), model.n_actions)


def truncated_kernel(spectrum: GramSpectrum, rank: int) -> GramSpectrum:
    """Keep the ``rank`` leading eigenpairs: ``Θ' = Σ_{j<rank} λ_j e_j e_jᵀ``."""
    if not 0 <= rank <= spectrum.size:
        raise ValueError(f"rank must lie in 0..{spectrum.size}, got {rank}")
    values = spectrum.eigenvalues.copy()
    values[rank:] = 0.0
    vectors = spectrum.eigenvectors
    gram = (vectors[:, :rank] * values[:rank]) @ vectors[:, :rank].T
    return GramSpectrum(gram, values, vectors, spectrum.n_actions)


def random_feature_kernel(spectrum: GramSpectrum, n_features: int, seed: int) -> RandomFeatures:
    """``P'`` i.i.d. Gaussian-process samples with covariance ``Θ`` as features.

    Samples are drawn through the spectral square root ``E Λ^{1/2}`` (valid for
    singular Grams), and scaled by ``1/√P'`` so the induced kernel converges to
    ``Θ`` as ``P'`` grows.
    """
    if n_features < 1:
        raise ValueError("n_features must be positive")
    rng = np.random.default_rng(seed)
    root = spectrum.eigenvectors * np.sqrt(spectrum.eigenvalues)
    samples = root @ rng.standard_normal((spectrum.size, n_features)) / np.sqrt(n_features)
    n_states = spectrum.size // spectrum.n_actions
    return RandomFeatures(spectrum.n_actions, samples.reshape(n_states, spectrum.n_actions, n_features), seed)
