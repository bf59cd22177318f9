"""
===================================================================
ActiveSketch - Módulo de Problemas de Teste
Quadrática com espectro controlado, Poisson com coeficientes KL e z-model
===================================================================

Este módulo contém:
- Quadrática f(x) = 1/2 x^T H x em [-1,1]^m com lacuna espectral
- Modelo de Poisson -div(a grad u) = 1 no quadrado unitário, com
  log a dado por uma expansão de Karhunen-Loève truncada, gradiente adjunto
- Gerador do z-model z = sum_j w_j sigma_j v_j

Versão: 1.0.0
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.spatial.distance import cdist

from src.estimators import sym_eig
from src.metrics import SubspaceEstimate
from src.model import FunctionModel, InputDensity
from src.utils import NumericalError


logger = logging.getLogger(__name__)


# ===================================================================
# CONFIGURAÇÕES
# ===================================================================

QUADRATIC_DIM = 10
QUADRATIC_GAP_AFTER = 3
QUADRATIC_DECAY = 0.25        # quartos de década entre autovalores de H
QUADRATIC_GAP_DECADES = 3.0   # d_{g+1} = 10^-3

POISSON_GRID = 32
POISSON_DIM = 100
POISSON_CORRELATION_LENGTH = 1.0


def random_orthonormal(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Colunas ortonormais m x n pela QR de uma gaussiana."""
    Q, R = scipy.linalg.qr(rng.standard_normal((m, n)), mode='economic')
    sinais = np.sign(np.diag(R))
    sinais[sinais == 0] = 1.0
    return Q * sinais


# ===================================================================
# QUADRÁTICA
# ===================================================================

@dataclass
class QuadraticModel:
    """
    f(x) = 1/2 x^T H x com x uniforme em [-1,1]^m.

    Attributes:
        H: Matriz m x m simétrica semidefinida positiva
        eigenvalues: Autovalores d_i de H, decrescentes
        eigenvectors: Autovetores de H (colunas), pareados com d_i
    """
    H: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, H: np.ndarray) -> "QuadraticModel":
        H = np.asarray(H, dtype=float)
        if not np.allclose(H, H.T):
            raise ValueError("H deve ser simétrica")
        decomposicao = sym_eig(H)
        if decomposicao.eigenvalues[-1] < -1e-12 * max(1.0, decomposicao.eigenvalues[0]):
            raise ValueError("H deve ser semidefinida positiva")
        return cls(H=0.5 * (H + H.T),
                   eigenvalues=np.clip(decomposicao.eigenvalues, 0.0, None),
                   eigenvectors=decomposicao.eigenvectors)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def density(self) -> InputDensity:
        return InputDensity(kind="uniform", dim=self.dim)

    @property
    def c_eigenvalues(self) -> np.ndarray:
        """Autovalores exatos de C: d_i^2 / 3 (segundo momento 1/3 da uniforme)."""
        return self.eigenvalues ** 2 / 3.0

    def evaluate(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.H @ x

    def gradients(self, X: np.ndarray) -> np.ndarray:
        """Gradientes de todas as colunas de X (m x M)."""
        return self.H @ X

    def function_model(self) -> FunctionModel:
        return FunctionModel(dim=self.dim, evaluate=self.evaluate,
                             gradient=self.gradient, name="quadratic")


def quadratic_spectrum(m: int = QUADRATIC_DIM, gap_after: int = QUADRATIC_GAP_AFTER) -> np.ndarray:
    """d_i = 10^{-(i-1)/4} antes da lacuna e 10^{-3-(i-g-1)/4} depois."""
    i = np.arange(1, m + 1)
    return np.where(
        i <= gap_after,
        10.0 ** (-QUADRATIC_DECAY * (i - 1)),
        10.0 ** (-QUADRATIC_GAP_DECADES - QUADRATIC_DECAY * (i - gap_after - 1)),
    )


def build_quadratic(m: int = QUADRATIC_DIM, gap_after: int = QUADRATIC_GAP_AFTER,
                    seed: Optional[int] = None) -> QuadraticModel:
    """
    Constrói H = Q D Q^T com Q ortogonal aleatória.

    Com os valores padrão, d_3/d_4 = 10^2.5 e, portanto, a razão
    lambda_3/lambda_4 dos autovalores de C é 10^5.
    """
    if not 1 <= gap_after < m:
        raise ValueError(f"gap_after deve estar em [1, m). Recebido {gap_after} com m={m}")

    rng = np.random.default_rng(seed)
    Q = random_orthonormal(m, m, rng)
    d = quadratic_spectrum(m, gap_after)
    H = (Q * d) @ Q.T

    idx = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[idx, np.arange(m)])

    return QuadraticModel(H=0.5 * (H + H.T), eigenvalues=d, eigenvectors=Q)


def quadratic_true_active_subspace(model: QuadraticModel,
                                   n: int = QUADRATIC_GAP_AFTER) -> Tuple[SubspaceEstimate, np.ndarray]:
    """Primeiros n autovetores de H e os autovalores exatos d_i^2/3 de C."""
    if not 1 <= n <= model.dim:
        raise ValueError(f"n deve estar em [1, {model.dim}]. Recebido {n}")
    return SubspaceEstimate(model.eigenvectors[:, :n]), model.c_eigenvalues


# ===================================================================
# POISSON COM COEFICIENTES KL
# ===================================================================

class PoissonKLModel:
    """
    Poisson -div(a grad u) = 1 em [0,1]^2 por volumes finitos.

    N x N células de lado h = 1/N, u nos centros. Dirichlet homogêneo
    à esquerda, no topo e na base; Neumann homogêneo à direita. Faces
    internas usam a média harmônica de a. A quantidade de interesse é
    a média de u na coluna de células junto à borda direita.

    log a(s, x) = sum_j sqrt(gamma_j) phi_j(s) x_j, com (gamma_j, phi_j)
    autopares da covariância exponencial exp(-||s - s'|| / l).
    """

    def __init__(self, n_grid: int = POISSON_GRID, dim: int = POISSON_DIM,
                 correlation_length: float = POISSON_CORRELATION_LENGTH):
        if n_grid < 2:
            raise ValueError(f"A malha precisa de ao menos 2 x 2 células. Recebido {n_grid}")
        if not 1 <= dim <= n_grid * n_grid:
            raise ValueError(
                f"Número de termos KL deve estar em [1, {n_grid * n_grid}]. Recebido {dim}"
            )
        if not correlation_length > 0:
            raise ValueError(f"Comprimento de correlação deve ser > 0. Recebido {correlation_length}")

        self.n_grid = n_grid
        self.dim = dim
        self.correlation_length = correlation_length
        self.h = 1.0 / n_grid

        self._build_grid()
        self._build_kl()

    # ---------------------------------------------------------------
    # Construção
    # ---------------------------------------------------------------

    def _build_grid(self) -> None:
        N = self.n_grid
        i, j = np.meshgrid(np.arange(N), np.arange(N))
        i = i.ravel()
        j = j.ravel()
        self.n_cells = N * N
        self.centers = np.column_stack([(i + 0.5) * self.h, (j + 0.5) * self.h])

        celula = j * N + i
        horizontal = i < N - 1
        vertical = j < N - 1
        self.face_left = np.concatenate([celula[horizontal], celula[vertical]])
        self.face_right = np.concatenate([celula[horizontal] + 1, celula[vertical] + N])

        # cantos aparecem duas vezes (esquerda + base/topo)
        self.dirichlet_cells = np.concatenate([celula[i == 0], celula[j == 0], celula[j == N - 1]])

        self.qoi_weights = np.zeros(self.n_cells)
        self.qoi_weights[celula[i == N - 1]] = 1.0 / N
        self.forcing = np.ones(self.n_cells)

    def _build_kl(self) -> None:
        distancias = cdist(self.centers, self.centers)
        covariancia = np.exp(-distancias / self.correlation_length) * self.h ** 2

        try:
            valores, vetores = scipy.linalg.eigh(
                covariancia, subset_by_index=[self.n_cells - self.dim, self.n_cells - 1]
            )
        except scipy.linalg.LinAlgError as e:
            raise NumericalError(f"Falha no autoproblema da covariância KL: {e}") from e

        ordem = np.argsort(valores)[::-1]
        valores = valores[ordem]
        vetores = vetores[:, ordem]
        if valores[-1] <= 0:
            raise NumericalError(
                f"Autovalor KL não positivo ({valores[-1]:.3e}); reduza o número de termos"
            )

        idx = np.argmax(np.abs(vetores), axis=0)
        vetores = vetores * np.sign(vetores[idx, np.arange(self.dim)])

        self.kl_values = valores
        self.kl_modes = vetores / self.h          # ortonormais com peso h^2
        self.kl_weights = self.kl_modes * np.sqrt(valores)

        logger.info(
            f"✅ Base KL construída: {self.dim} termos, malha {self.n_grid}x{self.n_grid}, "
            f"gamma_1={valores[0]:.4f}, gamma_m={valores[-1]:.2e}"
        )

    # ---------------------------------------------------------------
    # Montagem
    # ---------------------------------------------------------------

    @property
    def density(self) -> InputDensity:
        return InputDensity(kind="gaussian", dim=self.dim)

    def coefficient(self, x: np.ndarray) -> np.ndarray:
        """a(s, x) nos centros das células."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"x deve ter shape ({self.dim},). Recebido {x.shape}")
        return np.exp(self.kl_weights @ x)

    def _assemble(self, t_faces: np.ndarray, t_dirichlet: np.ndarray) -> scipy.sparse.csc_matrix:
        """Operador linear nas transmissibilidades das faces."""
        p, q, d = self.face_left, self.face_right, self.dirichlet_cells
        linhas = np.concatenate([p, q, p, q, d])
        colunas = np.concatenate([p, q, q, p, d])
        dados = np.concatenate([t_faces, t_faces, -t_faces, -t_faces, t_dirichlet])
        K = scipy.sparse.coo_matrix((dados / self.h ** 2, (linhas, colunas)),
                                    shape=(self.n_cells, self.n_cells))
        return K.tocsc()

    def _transmissibilities(self, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ap = a[self.face_left]
        aq = a[self.face_right]
        return 2.0 * ap * aq / (ap + aq), 2.0 * a[self.dirichlet_cells]

    def _transmissibility_slopes(self, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Derivadas da média harmônica em relação a a_p e a a_q."""
        ap = a[self.face_left]
        aq = a[self.face_right]
        soma2 = (ap + aq) ** 2
        return 2.0 * aq ** 2 / soma2, 2.0 * ap ** 2 / soma2

    def stiffness(self, x: np.ndarray) -> scipy.sparse.csc_matrix:
        """Matriz K(x) (simétrica, esparsa)."""
        return self._assemble(*self._transmissibilities(self.coefficient(x)))

    def stiffness_derivative(self, x: np.ndarray, j: int) -> scipy.sparse.csc_matrix:
        """dK/dx_j montada explicitamente, com da/dx_j = a sqrt(gamma_j) phi_j."""
        a = self.coefficient(x)
        da = a * self.kl_weights[:, j]
        dp, dq = self._transmissibility_slopes(a)
        dt_faces = dp * da[self.face_left] + dq * da[self.face_right]
        dt_dirichlet = 2.0 * da[self.dirichlet_cells]
        return self._assemble(dt_faces, dt_dirichlet)

    def _factorize(self, x: np.ndarray):
        try:
            return scipy.sparse.linalg.splu(self.stiffness(x))
        except RuntimeError as e:
            raise NumericalError(f"Falha na fatoração de K(x): {e}") from e

    # ---------------------------------------------------------------
    # Avaliação
    # ---------------------------------------------------------------

    def solve(self, x: np.ndarray, forcing_scale: float = 1.0) -> np.ndarray:
        """Solução u(x) nos centros das células."""
        lu = self._factorize(x)
        u = lu.solve(forcing_scale * self.forcing)
        if not np.all(np.isfinite(u)):
            raise NumericalError("Solução de Poisson não finita")
        return u

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.qoi_weights @ self.solve(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """
        Gradiente adjunto: K v = c e df/dx_j = -v^T (dK/dx_j) u.

        Uma única fatoração atende o problema direto e o adjunto (K simétrica).
        """
        lu = self._factorize(x)
        u = lu.solve(self.forcing)
        v = lu.solve(self.qoi_weights)

        a = self.coefficient(x)
        p, q, d = self.face_left, self.face_right, self.dirichlet_cells
        dp, dq = self._transmissibility_slopes(a)

        g_faces = (v[p] - v[q]) * (u[p] - u[q]) / self.h ** 2
        g_dirichlet = 2.0 * v[d] * u[d] / self.h ** 2

        w = (np.bincount(p, weights=g_faces * dp, minlength=self.n_cells)
             + np.bincount(q, weights=g_faces * dq, minlength=self.n_cells)
             + np.bincount(d, weights=g_dirichlet, minlength=self.n_cells))

        gradiente = -self.kl_weights.T @ (w * a)
        if not np.all(np.isfinite(gradiente)):
            raise NumericalError("Gradiente adjunto não finito")
        return gradiente

    def gradients(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([self.gradient(X[:, i]) for i in range(X.shape[1])])

    def function_model(self) -> FunctionModel:
        return FunctionModel(dim=self.dim, evaluate=self.evaluate,
                             gradient=self.gradient, name="pde")


def build_poisson_kl(n_grid: int = POISSON_GRID, m: int = POISSON_DIM,
                     correlation_length: float = POISSON_CORRELATION_LENGTH) -> PoissonKLModel:
    """Constrói o modelo de Poisson com m termos KL."""
    return PoissonKLModel(n_grid=n_grid, dim=m, correlation_length=correlation_length)


def poisson_eval(model: PoissonKLModel, x: np.ndarray) -> float:
    """Quantidade de interesse f(x) = c^T u(x)."""
    return model.evaluate(x)


def poisson_grad(model: PoissonKLModel, x: np.ndarray) -> np.ndarray:
    """Gradiente de f por um solve adjunto."""
    return model.gradient(x)


# ===================================================================
# Z-MODEL
# ===================================================================

@dataclass
class ZModelSpec:
    """
    z = sum_j w_j sigma_j v_j com w_j ~ N(0, 1).

    Attributes:
        sigmas: Pesos positivos em ordem decrescente (d,)
        directions: Direções ortonormais v_j em colunas (m x d)
    """
    sigmas: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        self.directions = np.asarray(self.directions, dtype=float)
        m, d = self.directions.shape
        if self.sigmas.shape != (d,):
            raise ValueError(f"Esperado {d} pesos sigma. Recebido {self.sigmas.shape}")
        if d > m:
            raise ValueError(f"Dimensão plantada d={d} maior que m={m}")
        if np.any(self.sigmas <= 0) or np.any(np.diff(self.sigmas) > 0):
            raise ValueError("Pesos sigma devem ser positivos e decrescentes")
        SubspaceEstimate(self.directions)

    @property
    def dim(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def covariance(self) -> np.ndarray:
        """Covariância exata sum_j sigma_j^2 v_j v_j^T."""
        return (self.directions * self.sigmas ** 2) @ self.directions.T


def build_z_model_spec(m: int, sigmas: Sequence[float], seed: Optional[int] = None) -> ZModelSpec:
    """Direções ortonormais aleatórias para os pesos dados."""
    rng = np.random.default_rng(seed)
    sigmas = np.asarray(sigmas, dtype=float)
    return ZModelSpec(sigmas=sigmas, directions=random_orthonormal(m, sigmas.size, rng))


def sample_z_model(spec: ZModelSpec, M: int, seed: Optional[int]) -> np.ndarray:
    """M amostras i.i.d. do z-model como colunas de uma matriz m x M."""
    if M < 1:
        raise ValueError(f"M deve ser >= 1. Recebido {M}")
    rng = np.random.default_rng(seed)
    pesos = rng.standard_normal((spec.d, M))
    return spec.directions @ (spec.sigmas[:, np.newaxis] * pesos)
