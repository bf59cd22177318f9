"""
Métricas de Erro para Autovalores e Subespaços

Implementa o erro relativo nos seis primeiros autovalores e a distância
entre subespaços ||W1 W1^T - W1~ W1~^T||_2, calculada pelo seno do
maior ângulo principal.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from src.utils import NumericalError


N_EIGENVALUES = 6
ORTHONORMAL_TOL = 1e-10


@dataclass
class SubspaceEstimate:
    """
    Base ortonormal m x n de um subespaço.

    Attributes:
        basis: Matriz m x n com colunas ortonormais
    """
    basis: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim == 1:
            self.basis = self.basis[:, np.newaxis]
        gram = self.basis.T @ self.basis
        desvio = np.linalg.norm(gram - np.eye(gram.shape[0]), 2)
        if desvio > ORTHONORMAL_TOL:
            raise ValueError(
                f"Base não ortonormal: ||Q^T Q - I||_2 = {desvio:.2e}"
            )

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[1]


def _as_basis(valor) -> np.ndarray:
    if isinstance(valor, SubspaceEstimate):
        return valor.basis
    base = np.asarray(valor, dtype=float)
    return base[:, np.newaxis] if base.ndim == 1 else base


def _pad(valores: np.ndarray, tamanho: int) -> np.ndarray:
    valores = np.asarray(valores, dtype=float).ravel()
    if valores.size > tamanho:
        raise ValueError(
            f"Esperado no máximo {tamanho} autovalores. Recebido: {valores.size}"
        )
    saida = np.zeros(tamanho)
    saida[:valores.size] = valores
    return saida


def eigenvalue_error(reference: np.ndarray, estimate: np.ndarray) -> float:
    """
    Erro relativo nos seis primeiros autovalores.

    Args:
        reference: Autovalores de referência (até 6; completados com zeros)
        estimate: Autovalores estimados (até 6; completados com zeros)

    Returns:
        (sum (ref - est)^2 / sum ref^2)^(1/2)

    Raises:
        NumericalError: Se a referência for identicamente nula
    """
    ref = _pad(reference, N_EIGENVALUES)
    est = _pad(estimate, N_EIGENVALUES)

    denominador = float(np.sum(ref ** 2))
    if denominador == 0.0:
        raise NumericalError("Autovalores de referência identicamente nulos")

    return float(np.sqrt(np.sum((ref - est) ** 2) / denominador))


def principal_angles(reference, estimate) -> np.ndarray:
    """Ângulos principais (radianos, crescentes) entre dois subespaços."""
    U = _as_basis(reference)
    V = _as_basis(estimate)
    if U.shape[0] != V.shape[0]:
        raise ValueError(
            f"Dimensões ambientes diferentes: {U.shape[0]} e {V.shape[0]}"
        )
    cossenos = scipy.linalg.svd(U.T @ V, compute_uv=False)
    return np.arccos(np.clip(cossenos, -1.0, 1.0))


def subspace_error(reference, estimate) -> float:
    """
    Distância ||W W^T - W~ W~^T||_2 entre dois subespaços de mesma dimensão.

    Calculada como o seno do maior ângulo principal: o termo
    ||(I - U U^T) V||_2 evita a perda de precisão de sqrt(1 - cos^2)
    para ângulos pequenos.
    """
    U = _as_basis(reference)
    V = _as_basis(estimate)
    if U.shape != V.shape:
        raise ValueError(
            f"Subespaços com shapes diferentes: {U.shape} e {V.shape}"
        )

    residuo = V - U @ (U.T @ V)
    seno = scipy.linalg.svd(residuo, compute_uv=False)[0] if residuo.size else 0.0
    return float(np.clip(seno, 0.0, 1.0))


def projector_distance(reference, estimate) -> float:
    """Fórmula direta com projetores m x m (oráculo de teste)."""
    U = _as_basis(reference)
    V = _as_basis(estimate)
    return float(np.linalg.norm(U @ U.T - V @ V.T, 2))


def subspace_errors_by_dimension(reference: np.ndarray, estimate: np.ndarray,
                                 n_max: int = N_EIGENVALUES) -> np.ndarray:
    """
    Erros de subespaço para n = 1..n_max.

    Onde n excede as colunas disponíveis de alguma das bases, o valor
    é NaN (indefinido).
    """
    erros = np.full(n_max, np.nan)
    limite = min(n_max, reference.shape[1], estimate.shape[1])
    for n in range(1, limite + 1):
        erros[n - 1] = subspace_error(reference[:, :n], estimate[:, :n])
    return erros
