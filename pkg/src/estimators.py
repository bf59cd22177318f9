"""
===================================================================
ActiveSketch - Módulo de Estimadores do Subespaço Ativo
Monte Carlo, projeções e mínimos quadrados alternados (ALS)
===================================================================

Este módulo contém:
- Autodecomposição simétrica com ordem decrescente e sinal fixo
- Estimador Monte Carlo C = (1/M) sum grad f_i grad f_i^T
- Sketches gaussianos e conjuntos de medições m_i = E_i^T grad f_i
- Estimador por projeções C_P = (1/M) sum (P_i grad f_i)(P_i grad f_i)^T
- Ajuste de posto baixo A B^T por mínimos quadrados alternados

Versão: 1.0.0
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgError, LinAlgWarning

from src.utils import NumericalError, PreconditionError


logger = logging.getLogger(__name__)


# ===================================================================
# CONFIGURAÇÕES
# ===================================================================

ALS_MAX_ITERATIONS = 200
ALS_TOLERANCE = 1e-8
ALS_RIDGE = 0.0
ALS_SHRINKAGE = 0.0

# Tolerância relativa de arredondamento para a monotonicidade do traço
MONOTONE_RTOL = 1e-12


# ===================================================================
# TIPOS
# ===================================================================

@dataclass
class EigenDecomposition:
    """
    Autopares (Lambda, W) de uma matriz simétrica semidefinida positiva.

    Attributes:
        eigenvalues: Vetor (m,) em ordem decrescente
        eigenvectors: Matriz ortogonal m x m; coluna i pareada com o autovalor i
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvectors.shape[0]

    def top(self, n: int) -> np.ndarray:
        """Primeiros n autovetores (m x n)."""
        return self.eigenvectors[:, :n]

    def leading_eigenvalues(self, count: int = 6) -> np.ndarray:
        """Primeiros `count` autovalores, completados com zeros."""
        valores = np.zeros(count)
        n = min(count, self.eigenvalues.size)
        valores[:n] = self.eigenvalues[:n]
        return valores


@dataclass
class MeasurementSet:
    """
    Conjunto de M pares (E_i, m_i).

    Attributes:
        sketches: Array (M, m, k); sketches[i] é a matriz E_i
        measurements: Array (M, k); measurements[i] = E_i^T grad f_i
        seed: Semente de origem dos sketches (proveniência)
    """
    sketches: np.ndarray
    measurements: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.sketches = np.asarray(self.sketches, dtype=float)
        self.measurements = np.asarray(self.measurements, dtype=float)
        if self.sketches.ndim != 3:
            raise ValueError(
                f"Sketches devem ter shape (M, m, k). Recebido: {self.sketches.shape}"
            )
        M, _, k = self.sketches.shape
        if M < 1:
            raise ValueError("Conjunto de medições vazio")
        if self.measurements.shape != (M, k):
            raise ValueError(
                f"Medições com shape {self.measurements.shape}; esperado ({M}, {k})"
            )

    @property
    def count(self) -> int:
        return self.sketches.shape[0]

    @property
    def dim(self) -> int:
        return self.sketches.shape[1]

    @property
    def k(self) -> int:
        return self.sketches.shape[2]


@dataclass
class LowRankFactors:
    """Fatores A (m x r) e B (M x r) do modelo A B^T."""
    A: np.ndarray
    B: np.ndarray

    @property
    def rank(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class AlsConfig:
    """
    Configuração do ALS.

    Attributes:
        rank: Posto r do modelo A B^T
        max_iterations: Máximo de iterações (B-passo + A-passo)
        tolerance: Parada por variação relativa do objetivo
        ridge: Penalidade absoluta epsilon >= 0 em ||A||_F^2 + ||B||_F^2
        shrinkage: Penalidade relativa alpha >= 0; soma alpha * sqrt(k) * ||M(G)||_F
            ao epsilon, o que corta valores singulares de A B^T abaixo de
            cerca de alpha * ||G||_F

    Com epsilon total zero vale a formulação original, sem penalidade.
    """
    rank: int
    max_iterations: int = ALS_MAX_ITERATIONS
    tolerance: float = ALS_TOLERANCE
    ridge: float = ALS_RIDGE
    shrinkage: float = ALS_SHRINKAGE

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"Posto r deve ser >= 1. Recebido: {self.rank}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations deve ser >= 1. Recebido: {self.max_iterations}")
        if not self.tolerance > 0:
            raise ValueError(f"Tolerância deve ser > 0. Recebido: {self.tolerance}")
        if self.ridge < 0:
            raise ValueError(f"Ridge deve ser >= 0. Recebido: {self.ridge}")
        if self.shrinkage < 0:
            raise ValueError(f"Shrinkage deve ser >= 0. Recebido: {self.shrinkage}")

    def penalty(self, ms: MeasurementSet) -> float:
        """Epsilon efetivo para um conjunto de medições."""
        escala = float(np.linalg.norm(ms.measurements))
        return float(self.ridge + self.shrinkage * np.sqrt(ms.k) * escala)


@dataclass
class AlsFit:
    """Resultado de als_fit: fatores e traço do objetivo."""
    factors: LowRankFactors
    trace: List[float] = field(default_factory=list)
    half_step_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    penalty: float = 0.0


@dataclass
class FactorSubspace:
    """Vetores singulares à esquerda de A B^T e estimativas de autovalores."""
    basis: np.ndarray
    singular_values: np.ndarray
    eigenvalues: np.ndarray


@dataclass
class AlsEstimate:
    """Pipeline completo do ALS: ajuste + subespaço."""
    fit: AlsFit
    subspace: FactorSubspace

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.subspace.eigenvalues

    @property
    def basis(self) -> np.ndarray:
        return self.subspace.basis


# ===================================================================
# ÁLGEBRA LINEAR
# ===================================================================

def _fix_signs(Q: np.ndarray) -> np.ndarray:
    """Torna positiva a entrada de maior módulo de cada coluna."""
    if Q.size == 0:
        return Q
    idx = np.argmax(np.abs(Q), axis=0)
    sinais = np.sign(Q[idx, np.arange(Q.shape[1])])
    sinais[sinais == 0] = 1.0
    return Q * sinais


def sym_eig(C: np.ndarray) -> EigenDecomposition:
    """
    Autodecomposição de uma matriz simétrica.

    A entrada é simetrizada como (C + C^T)/2. Os autovalores saem em
    ordem decrescente e cada autovetor tem a entrada de maior módulo
    positiva.

    Parâmetros:
    -----------
    C : np.ndarray
        Matriz m x m simétrica (a menos de arredondamento)

    Retorna:
    --------
    EigenDecomposition
        Autovalores decrescentes e autovetores ortonormais
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"Matriz deve ser quadrada. Recebido shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("Matriz contém entradas não finitas")

    C = 0.5 * (C + C.T)
    valores, vetores = scipy.linalg.eigh(C)
    ordem = np.argsort(valores)[::-1]

    return EigenDecomposition(
        eigenvalues=valores[ordem],
        eigenvectors=_fix_signs(vetores[:, ordem]),
    )


# ===================================================================
# ESTIMADOR MONTE CARLO
# ===================================================================

def estimate_c_monte_carlo(G: np.ndarray,
                           method: Literal["eig", "svd"] = "eig") -> EigenDecomposition:
    """
    Autopares de C = (1/M) sum_i grad f_i grad f_i^T.

    Parâmetros:
    -----------
    G : np.ndarray
        Matriz de gradientes m x M (uma coluna por amostra)
    method : str
        'eig' decompõe C; 'svd' usa a SVD de G/sqrt(M)

    Retorna:
    --------
    EigenDecomposition
        Autopares da estimativa Monte Carlo
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, np.newaxis]
    if G.ndim != 2 or G.shape[1] < 1:
        raise ValueError(f"Matriz de gradientes deve ser m x M com M >= 1. Recebido {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("Matriz de gradientes contém entradas não finitas")

    m, M = G.shape

    if method == "eig":
        return sym_eig(G @ G.T / M)

    if method == "svd":
        U, s, _ = scipy.linalg.svd(G / np.sqrt(M), full_matrices=True)
        valores = np.zeros(m)
        valores[:s.size] = s ** 2
        return EigenDecomposition(eigenvalues=valores, eigenvectors=_fix_signs(U))

    raise ValueError(f"Método desconhecido: {method!r}. Use 'eig' ou 'svd'")


# ===================================================================
# SKETCHES E MEDIÇÕES
# ===================================================================

def draw_sketches(m: int, k: int, M: int, seed: Optional[int]) -> np.ndarray:
    """
    Sorteia M matrizes de sketch m x k com entradas gaussianas padrão.

    Retorna um array (M, m, k); sketches[i] é o operador independente
    do i-ésimo gradiente.
    """
    if m < 1 or M < 1:
        raise ValueError(f"Dimensões inválidas: m={m}, M={M}")
    if not 1 <= k <= m:
        raise ValueError(f"É necessário 1 <= k <= m. Recebido k={k}, m={m}")

    rng = np.random.default_rng(seed)
    return rng.standard_normal(size=(M, m, k))


def make_measurements(G: np.ndarray, sketches: np.ndarray,
                      seed: Optional[int] = None) -> MeasurementSet:
    """Medições exatas m_i = E_i^T grad f_i de uma matriz de gradientes."""
    G = np.asarray(G, dtype=float)
    sketches = np.asarray(sketches, dtype=float)
    if sketches.shape[0] != G.shape[1] or sketches.shape[1] != G.shape[0]:
        raise ValueError(
            f"Sketches {sketches.shape} incompatíveis com gradientes {G.shape}"
        )
    return MeasurementSet(sketches=sketches,
                          measurements=measurement_operator(sketches, G),
                          seed=seed)


def measurement_operator(sketches: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Operador de medição M(X) aplicado a X (m x M).

    Retorna um array (M, k) cuja linha i é E_i^T x_i.
    """
    return np.einsum('iak,ai->ik', sketches, X)


# ===================================================================
# ESTIMADOR POR PROJEÇÕES
# ===================================================================

def project_measurement(E: np.ndarray, m_vec: np.ndarray) -> np.ndarray:
    """
    Reconstrói E (E^T E)^{-1} m_vec.

    Quando m_vec = E^T z, o resultado é a projeção ortogonal de z sobre
    o espaço coluna de E.
    """
    E = np.asarray(E, dtype=float)
    m_vec = np.asarray(m_vec, dtype=float)
    EtE = E.T @ E

    try:
        coeficientes = scipy.linalg.solve(EtE, m_vec, assume_a='pos')
    except LinAlgError as e:
        raise NumericalError(
            f"E^T E singular: o sketch não tem posto coluna completo ({e})"
        ) from e

    return E @ coeficientes


def estimate_c_projection(ms: MeasurementSet) -> EigenDecomposition:
    """
    Autopares de C_P = (1/M) sum_i (P_i grad f_i)(P_i grad f_i)^T.

    As projeções são somadas em ordem fixa (i = 1..M). Os autovalores
    não estimam os de C; apenas os autovetores são comparáveis.
    """
    projecoes = np.empty((ms.count, ms.dim))
    for i in range(ms.count):
        projecoes[i] = project_measurement(ms.sketches[i], ms.measurements[i])

    return sym_eig(projecoes.T @ projecoes / ms.count)


# ===================================================================
# MÍNIMOS QUADRADOS ALTERNADOS
# ===================================================================

def als_init(cp: EigenDecomposition, r: int) -> np.ndarray:
    """
    Ponto inicial A0: primeiros r autovetores de C_P escalados por sqrt(lambda).

    Autovalores levemente negativos (arredondamento) são truncados em zero;
    colunas nulas são permitidas.
    """
    if not 1 <= r <= cp.dim:
        raise PreconditionError(f"Posto r={r} fora do intervalo [1, {cp.dim}]")

    valores = np.clip(cp.eigenvalues[:r], 0.0, None)
    return cp.eigenvectors[:, :r] * np.sqrt(valores)


def _als_objective(ms: MeasurementSet, A: np.ndarray, B: np.ndarray, ridge: float) -> float:
    residuo = ms.measurements - np.einsum('iak,ap,ip->ik', ms.sketches, A, B)
    valor = float(np.sum(residuo ** 2))
    if ridge > 0:
        valor += ridge * (float(np.sum(A ** 2)) + float(np.sum(B ** 2)))
    return float(np.sqrt(valor))


def _b_step(ms: MeasurementSet, A: np.ndarray, ridge: float) -> np.ndarray:
    """
    Para cada i, b_i = argmin ||m_i - (E_i^T A) b||^2 + ridge ||b||^2.

    Sem ridge usa a solução de norma mínima.
    """
    EtA = np.einsum('iak,ap->ikp', ms.sketches, A)
    if ridge == 0:
        return np.einsum('ipk,ik->ip', np.linalg.pinv(EtA), ms.measurements)

    gram = np.einsum('ikp,ikq->ipq', EtA, EtA) + ridge * np.eye(A.shape[1])
    rhs = np.einsum('ikp,ik->ip', EtA, ms.measurements)
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def _balance(A: np.ndarray, B: np.ndarray):
    """
    Reescreve A B^T como (Q_A U S^1/2)(Q_B V S^1/2)^T.

    O produto não muda e ||A||_F^2 + ||B||_F^2 cai para 2 * sum(S),
    o menor valor possível para esse produto.
    """
    Qa, Ra = scipy.linalg.qr(A, mode='economic')
    Qb, Rb = scipy.linalg.qr(B, mode='economic')
    Uc, sigma, Vct = scipy.linalg.svd(Ra @ Rb.T)
    raiz = np.sqrt(sigma)
    return (Qa @ Uc) * raiz, (Qb @ Vct.T) * raiz


def _a_step(ms: MeasurementSet, B: np.ndarray, EEt: np.ndarray, EY: np.ndarray,
            ridge: float) -> np.ndarray:
    """
    Resolve o problema conjunto em vec(A) pelas equações normais

        sum_i (b_i b_i^T kron E_i E_i^T) vec(A) = sum_i vec(E_i m_i b_i^T)
    """
    M, m = EY.shape
    r = B.shape[1]

    BB = np.einsum('ip,iq->ipq', B, B).reshape(M, r * r)
    N = (BB.T @ EEt.reshape(M, m * m)).reshape(r, r, m, m)
    N = N.transpose(0, 2, 1, 3).reshape(r * m, r * m)
    rhs = np.einsum('ia,ip->pa', EY, B).reshape(r * m)

    if ridge > 0:
        N = N + ridge * np.eye(r * m)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter('error', LinAlgWarning)
            solucao = scipy.linalg.solve(N, rhs, assume_a='pos')
    except (LinAlgError, LinAlgWarning) as e:
        if ridge == 0:
            raise NumericalError(
                "Equações normais do passo A singulares ou mal condicionadas. "
                "Defina ridge > 0 em AlsConfig para regularizar"
            ) from e
        raise NumericalError(f"Falha no passo A mesmo com ridge={ridge}: {e}") from e

    return solucao.reshape(r, m).T


def als_fit(ms: MeasurementSet, cfg: AlsConfig, A0: np.ndarray) -> AlsFit:
    """
    Ajusta A B^T minimizando ||M(G) - M(A B^T)||_F por ALS.

    Com epsilon = cfg.penalty(ms) > 0 o objetivo passa a ser

        sqrt(||M(G) - M(A B^T)||_F^2 + epsilon (||A||_F^2 + ||B||_F^2))

    e os fatores são rebalanceados após cada passo A.

    Parâmetros:
    -----------
    ms : MeasurementSet
        Medições m_i = E_i^T grad f_i
    cfg : AlsConfig
        Posto, critério de parada e penalidade
    A0 : np.ndarray
        Ponto inicial m x r (tipicamente als_init)

    Retorna:
    --------
    AlsFit
        Fatores finais e traço do objetivo penalizado, que não cresce
        em nenhum meio passo.
    """
    r = cfg.rank
    if r >= ms.k:
        raise PreconditionError(
            f"O ALS exige r < k. Recebido r={r}, k={ms.k}"
        )
    A = np.array(A0, dtype=float)
    if A.shape != (ms.dim, r):
        raise PreconditionError(
            f"A0 com shape {A.shape}; esperado ({ms.dim}, {r})"
        )

    EEt = np.einsum('iak,ick->iac', ms.sketches, ms.sketches)
    EY = np.einsum('iak,ik->ia', ms.sketches, ms.measurements)
    escala = float(np.linalg.norm(ms.measurements))
    ridge = cfg.penalty(ms)

    resultado = AlsFit(factors=LowRankFactors(A=A, B=np.zeros((ms.count, r))), penalty=ridge)
    anterior = None

    for iteracao in range(1, cfg.max_iterations + 1):
        B = _b_step(ms, A, ridge)
        resultado.half_step_trace.append(_als_objective(ms, A, B, ridge))

        A = _a_step(ms, B, EEt, EY, ridge)
        if ridge > 0:
            A, B = _balance(A, B)
        objetivo = _als_objective(ms, A, B, ridge)
        resultado.half_step_trace.append(objetivo)
        resultado.trace.append(objetivo)
        resultado.iterations = iteracao

        if objetivo <= np.finfo(float).eps * escala:
            resultado.converged = True
            break
        if anterior is not None and abs(anterior - objetivo) <= cfg.tolerance * anterior:
            resultado.converged = True
            break
        anterior = objetivo

    resultado.factors = LowRankFactors(A=A, B=B)

    if not resultado.converged:
        logger.warning(
            f"⚠️ ALS atingiu {cfg.max_iterations} iterações sem convergir "
            f"(objetivo={resultado.trace[-1]:.3e})"
        )

    return resultado


def subspace_from_factors(f: LowRankFactors, n: int) -> FactorSubspace:
    """
    Primeiros n vetores singulares à esquerda de A B^T.

    Também devolve os r valores singulares sigma_j e as estimativas
    lambda_j = sigma_j^2 / M.
    """
    r = f.rank
    if not 1 <= n <= r:
        raise PreconditionError(f"Dimensão n={n} deve estar em [1, r={r}]")

    Qa, Ra = scipy.linalg.qr(f.A, mode='economic')
    Qb, Rb = scipy.linalg.qr(f.B, mode='economic')
    Uc, sigma, _ = scipy.linalg.svd(Ra @ Rb.T)
    U = _fix_signs(Qa @ Uc)

    return FactorSubspace(
        basis=U[:, :n],
        singular_values=sigma,
        eigenvalues=sigma ** 2 / f.B.shape[0],
    )


def als_estimate(ms: MeasurementSet, cfg: AlsConfig,
                 cp: Optional[EigenDecomposition] = None) -> AlsEstimate:
    """Pipeline als_init -> als_fit -> subspace_from_factors."""
    if cp is None:
        cp = estimate_c_projection(ms)
    ajuste = als_fit(ms, cfg, als_init(cp, cfg.rank))
    return AlsEstimate(fit=ajuste, subspace=subspace_from_factors(ajuste.factors, cfg.rank))


def trace_is_nonincreasing(trace: List[float], rtol: float = MONOTONE_RTOL) -> bool:
    """Verifica se o traço do objetivo é não crescente, a menos de rtol * trace[0]."""
    if len(trace) < 2:
        return True
    valores = np.asarray(trace, dtype=float)
    folga = rtol * max(1.0, float(valores[0]))
    return bool(np.all(np.diff(valores) <= folga))
