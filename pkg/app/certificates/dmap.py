"""Optimality certificates for trained extended policies.

For step ``m`` of a trained policy ``π`` and the soft-optimal ``π*``, the
d-map is

    d(a, s) = m_π(s) · π(a|s) · (log(π(a|s) / π*(a|s)) - KL(π(·|s) ‖ π*(·|s)))

with ``m_π`` the law of the state at which ``π^{(m)}`` acts.  If the
lower steps are already optimal, ``d`` is (up to a factor ``-τ``) the
direction the ideal update pushes the preferences along, so at a
stationary point ``d`` is orthogonal to every eigenvector of the
preference kernel with non-zero eigenvalue.  When the kernel has full
rank this forces ``π^{(m)} = π*^{(m)}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from app.certificates.spectrum import GramSpectrum, kernel_gram
from app.config import get_settings
from app.core.errors import DimensionMismatchError, HorizonMismatchError
from app.dp.soft_dp import SoftDpSolution
from app.mdp.finite import FiniteMdp, policy_stack, state_marginals
from app.policies.softmax import ExtendedPolicy

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DMap:
    """``values[s, a] = d(a, s)`` at step ``step``, with the state law used."""

    values: np.ndarray
    state_law: np.ndarray
    step: int

    @property
    def flat(self) -> np.ndarray:
        """Vector over the flat ``(a, s)`` index ``s * A + a``."""
        return self.values.reshape(-1)

    def state_sums(self) -> np.ndarray:
        """``Σ_a d(a, s)``, identically zero."""
        return self.values.sum(axis=1)


@dataclass(frozen=True, eq=False)
class OrthogonalityResiduals:
    """``|⟨d, e_j⟩|`` for every eigenvector whose eigenvalue exceeds ``lambda_cut``."""

    residuals: np.ndarray
    eigenvalues: np.ndarray
    lambda_cut: float

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    @property
    def retained(self) -> int:
        return int(self.residuals.size)

    @property
    def lambda_min(self) -> float | None:
        """Smallest retained eigenvalue (``None`` when nothing is retained)."""
        return float(self.eigenvalues.min()) if self.eigenvalues.size else None


@dataclass(frozen=True)
class CertificateReport:
    """Certificate for one step ``m``.

    ``kernel_full_rank`` tells whether vanishing residuals prove optimality;
    otherwise they only show stationarity inside the kernel's span.
    """

    step: int
    max_residual: float
    retained: int
    index_size: int
    policy_gap: float
    tol: float
    lambda_min_retained: float | None = None
    lambda_cut: float = 0.0

    @property
    def kernel_full_rank(self) -> bool:
        return self.retained == self.index_size

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def to_json(self) -> dict[str, Any]:
        return {
            "m": self.step,
            "residual_max": self.max_residual,
            "lambda_min_retained": self.lambda_min_retained,
            "policy_gap_max": self.policy_gap,
            "pass": self.passed,
            "retained": self.retained,
            "index_size": self.index_size,
            "kernel_full_rank": self.kernel_full_rank,
            "lambda_cut": self.lambda_cut,
            "tol": self.tol,
        }


# ── Operations ──────────────────────────────────────────────────────────


def _tables_and_oracle(
    mdp: FiniteMdp, trained: ExtendedPolicy | np.ndarray, oracle: SoftDpSolution, m: int
) -> np.ndarray:
    tables = policy_stack(mdp, trained)
    n = tables.shape[0]
    if oracle.horizon != n:
        raise HorizonMismatchError(f"trained horizon {n} != oracle horizon {oracle.horizon}")
    if oracle.pi_star.shape[1:] != tables.shape[1:]:
        raise DimensionMismatchError("oracle and trained policy disagree on (states, actions)")
    if not 1 <= m <= n:
        raise HorizonMismatchError(f"step {m} outside 1..{n}")
    return tables


def compute_d_map(
    mdp: FiniteMdp, trained: ExtendedPolicy | np.ndarray, oracle: SoftDpSolution, m: int
) -> DMap:
    """d-map of ``π^{(m)}`` against ``π*^{(m)}``."""
    tables = _tables_and_oracle(mdp, trained, oracle, m)
    n = tables.shape[0]
    mass = state_marginals(mdp, tables)[n - m]
    pi = tables[m - 1]
    log_ratio = np.log(pi) - np.log(oracle.pi_star[m - 1])
    kl = np.sum(pi * log_ratio, axis=1)
    values = mass[:, None] * pi * (log_ratio - kl[:, None])
    return DMap(values, mass, m)


def orthogonality_residuals(
    d: DMap, spectrum: GramSpectrum, lambda_cut_ratio: float | None = None
) -> OrthogonalityResiduals:
    """Project ``d`` on the eigenvectors with ``λ_j > ratio · λ_1``."""
    if spectrum.size != d.flat.size:
        raise DimensionMismatchError(f"kernel index size {spectrum.size} != d-map size {d.flat.size}")
    ratio = get_settings().lambda_cut_ratio if lambda_cut_ratio is None else lambda_cut_ratio
    lambda_cut = ratio * float(spectrum.eigenvalues[0]) if spectrum.size else 0.0
    keep = spectrum.eigenvalues > lambda_cut
    residuals = np.abs(spectrum.eigenvectors[:, keep].T @ d.flat)
    return OrthogonalityResiduals(residuals, spectrum.eigenvalues[keep], lambda_cut)


def certify(
    mdp: FiniteMdp,
    trained: ExtendedPolicy | np.ndarray,
    oracle: SoftDpSolution,
    *,
    steps: list[int] | None = None,
    spectra: dict[int, GramSpectrum] | None = None,
    tol: float | None = None,
) -> list[CertificateReport]:
    """Certificate for every requested step (default: all ``1..n``).

    Without explicit ``spectra`` the tangent kernel of the trained model at
    each step's parameters is used, which needs an :class:`ExtendedPolicy`.
    """
    tables = policy_stack(mdp, trained)
    n = tables.shape[0]
    tol = get_settings().residual_tol if tol is None else tol
    reports = []
    for m in steps or range(1, n + 1):
        if spectra is not None and m in spectra:
            spectrum = spectra[m]
        elif isinstance(trained, ExtendedPolicy):
            spectrum = kernel_gram(trained.model, trained.step(m).theta, range(mdp.n_states), step=m)
        else:
            raise DimensionMismatchError(f"no kernel spectrum for step {m}")
        d = compute_d_map(mdp, tables, oracle, m)
        residuals = orthogonality_residuals(d, spectrum)
        gap = float(np.max(np.abs(tables[m - 1] - oracle.pi_star[m - 1])))
        report = CertificateReport(
            m,
            residuals.max_residual,
            residuals.retained,
            spectrum.size,
            gap,
            tol,
            residuals.lambda_min,
            residuals.lambda_cut,
        )
        logger.debug(
            "certificate step %d: residual=%.3e gap=%.3e", m, report.max_residual, gap, extra={"step": m}
        )
        reports.append(report)
    return reports


def log_increment_prediction(
    mdp: FiniteMdp,
    policy: ExtendedPolicy | np.ndarray,
    oracle: SoftDpSolution,
    m: int,
    eta: float,
    gram: np.ndarray | GramSpectrum,
    tau: float | None = None,
) -> np.ndarray:
    """First-order change of ``log π^{(m)}`` under one ideal update with rate ``η``.

    ``Δ log π(a|s) ≈ -(η/τ) [(Θ d)(a, s) - Σ_b π(b|s) (Θ d)(b, s)]``, valid when
    the steps below ``m`` are already optimal.  Returned as an ``(S, A)`` array.
    """
    if isinstance(policy, ExtendedPolicy):
        tau = policy.tau if tau is None else tau
    if tau is None:
        raise ValueError("a temperature is required for table policies")
    tables = _tables_and_oracle(mdp, policy, oracle, m)
    d = compute_d_map(mdp, tables, oracle, m)
    kernel = gram.gram if isinstance(gram, GramSpectrum) else np.asarray(gram, dtype=float)
    kd = (kernel @ d.flat).reshape(d.values.shape)
    pi = tables[m - 1]
    centred = kd - np.sum(pi * kd, axis=1, keepdims=True)
    return -(eta / tau) * centred
