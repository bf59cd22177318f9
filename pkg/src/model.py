"""
===================================================================
ActiveSketch - Módulo de Modelos e Medições de Gradiente
Funções, densidades de entrada e medições lineares do gradiente
===================================================================

Este módulo contém:
- Densidades de entrada (hipercubo uniforme e gaussiana padrão)
- Amostragem determinística de pontos de entrada
- Modelos de função com gradiente opcional
- Derivada direcional exata ou por diferenças finitas
- Medição de sketches do gradiente (E^T grad f)

Versão: 1.0.0
"""

from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional

import numpy as np

from src.utils import CapabilityError


# ===================================================================
# CONFIGURAÇÕES
# ===================================================================

UNIFORM = "uniform"      # hipercubo [-1, 1]^m
GAUSSIAN = "gaussian"    # gaussiana padrão em R^m

EXACT = "exact"
FINITE_DIFFERENCE = "fd"

DEFAULT_RELATIVE_STEP = 1e-6


# ===================================================================
# TIPOS
# ===================================================================

@dataclass(frozen=True)
class InputDensity:
    """Densidade de entrada rho sobre R^m."""
    kind: Literal["uniform", "gaussian"]
    dim: int

    def __post_init__(self):
        if self.kind not in (UNIFORM, GAUSSIAN):
            raise ValueError(
                f"Densidade desconhecida: {self.kind!r}. Use 'uniform' ou 'gaussian'"
            )
        if int(self.dim) < 1:
            raise ValueError(f"Dimensão deve ser >= 1. Recebido: {self.dim}")


@dataclass
class FunctionModel:
    """
    Função escalar f: R^m -> R com gradiente opcional.

    Attributes:
        dim: Dimensão m da entrada
        evaluate: Callable x -> f(x)
        gradient: Callable x -> grad f(x) (None se indisponível)
        name: Rótulo usado em logs
    """
    dim: int
    evaluate: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "function"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"Dimensão deve ser >= 1. Recebido: {self.dim}")

    @property
    def has_gradient(self) -> bool:
        return self.gradient is not None

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradiente exato; levanta CapabilityError se o modelo não o fornece."""
        if self.gradient is None:
            raise CapabilityError(
                f"O modelo '{self.name}' não fornece gradiente. "
                f"Use o modo de diferenças finitas ('fd')"
            )
        g = np.asarray(self.gradient(x), dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(
                f"Gradiente com shape {g.shape}; esperado ({self.dim},)"
            )
        return g


class CountingModel(FunctionModel):
    """
    Envoltório que conta avaliações de f e de grad f.

    Usado para confirmar o custo de M(k+1) avaliações das medições
    por diferenças finitas.
    """

    def __init__(self, base: FunctionModel):
        self.base = base
        self.n_evaluations = 0
        self.n_gradients = 0
        gradient = self._counted_gradient if base.has_gradient else None
        super().__init__(
            dim=base.dim,
            evaluate=self._counted_evaluate,
            gradient=gradient,
            name=base.name,
        )

    def _counted_evaluate(self, x: np.ndarray) -> float:
        self.n_evaluations += 1
        return self.base.evaluate(x)

    def _counted_gradient(self, x: np.ndarray) -> np.ndarray:
        self.n_gradients += 1
        return self.base.grad(x)

    def reset(self) -> None:
        self.n_evaluations = 0
        self.n_gradients = 0


@dataclass(frozen=True)
class MeasurementConfig:
    """
    Configuração das medições lineares do gradiente.

    Attributes:
        mode: 'exact' (usa o gradiente) ou 'fd' (diferenças progressivas)
        step: Passo h; None usa 1e-6 * max(1, ||x||_inf)
    """
    mode: Literal["exact", "fd"] = EXACT
    step: Optional[float] = None

    def __post_init__(self):
        if self.mode not in (EXACT, FINITE_DIFFERENCE):
            raise ValueError(
                f"Modo de medição desconhecido: {self.mode!r}. Use 'exact' ou 'fd'"
            )
        if self.step is not None and not self.step > 0:
            raise ValueError(f"Passo h deve ser > 0. Recebido: {self.step}")

    def step_for(self, x: np.ndarray) -> float:
        """Passo efetivo em x."""
        if self.step is not None:
            return float(self.step)
        escala = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        return DEFAULT_RELATIVE_STEP * escala


# ===================================================================
# AMOSTRAGEM
# ===================================================================

def sample_inputs(density: InputDensity, count: int, seed: Optional[int]) -> np.ndarray:
    """
    Amostra M pontos i.i.d. da densidade de entrada.

    Parâmetros:
    -----------
    density : InputDensity
        Densidade (uniforme em [-1,1]^m ou gaussiana padrão)
    count : int
        Número M de amostras
    seed : int
        Semente; mesma semente, mesma matriz

    Retorna:
    --------
    np.ndarray
        Matriz m x M com uma amostra por coluna
    """
    if int(count) < 1:
        raise ValueError(f"Número de amostras deve ser >= 1. Recebido: {count}")

    rng = np.random.default_rng(seed)
    shape = (density.dim, int(count))

    if density.kind == UNIFORM:
        return rng.uniform(-1.0, 1.0, size=shape)
    return rng.standard_normal(size=shape)


# ===================================================================
# MEDIÇÕES
# ===================================================================

def directional_derivative(model: FunctionModel, x: np.ndarray, a: np.ndarray,
                           config: MeasurementConfig) -> float:
    """
    Mede grad f(x)^T a.

    No modo exato usa o gradiente do modelo; no modo 'fd' usa
    (f(x + h a) - f(x)) / h com exatamente duas avaliações de f.
    Pontos x + h a fora de um domínio limitado ficam a cargo de quem chama.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)

    if config.mode == EXACT:
        return float(model.grad(x) @ a)

    h = config.step_for(x)
    return float((model.evaluate(x + h * a) - model.evaluate(x)) / h)


def measure_gradient(model: FunctionModel, x: np.ndarray, E: np.ndarray,
                     config: MeasurementConfig) -> np.ndarray:
    """
    Mede o sketch E^T grad f(x).

    Parâmetros:
    -----------
    model : FunctionModel
        Função medida
    x : np.ndarray
        Ponto (m,)
    E : np.ndarray
        Matriz de sketch m x k
    config : MeasurementConfig
        Modo exato ou diferenças finitas

    Retorna:
    --------
    np.ndarray
        Vetor (k,). No modo 'fd' custa k+1 avaliações: f(x) é
        calculado uma única vez e compartilhado entre as direções.
    """
    x = np.asarray(x, dtype=float)
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[0] != x.shape[0]:
        raise ValueError(
            f"Sketch com shape {E.shape} incompatível com x de dimensão {x.shape[0]}"
        )

    if config.mode == EXACT:
        return E.T @ model.grad(x)

    h = config.step_for(x)
    f0 = model.evaluate(x)
    valores = np.empty(E.shape[1])
    for j in range(E.shape[1]):
        valores[j] = (model.evaluate(x + h * E[:, j]) - f0) / h
    return valores


def finite_difference_gradient(model: FunctionModel, x: np.ndarray,
                               config: Optional[MeasurementConfig] = None) -> np.ndarray:
    """Gradiente completo por diferenças progressivas (m+1 avaliações)."""
    config = config or MeasurementConfig(mode=FINITE_DIFFERENCE)
    if config.mode != FINITE_DIFFERENCE:
        config = MeasurementConfig(mode=FINITE_DIFFERENCE, step=config.step)
    return measure_gradient(model, x, np.eye(model.dim), config)


def evaluation_budget(m: int, k: int, M: int) -> Dict[str, float]:
    """
    Compara o custo em avaliações de f: sketches contra gradiente completo.

    Retorna:
    --------
    dict
        {'sketch': M(k+1), 'full_gradient': M(m+1), 'ratio': sketch/full}
    """
    sketch = int(M) * (int(k) + 1)
    completo = int(M) * (int(m) + 1)
    return {
        'sketch': sketch,
        'full_gradient': completo,
        'ratio': sketch / completo,
    }
