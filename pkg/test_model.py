"""
Testes do Módulo de Modelos e Medições

Valida amostragem, derivadas direcionais e o custo das medições por
diferenças finitas.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add root to path
ROOT_DIR = Path(__file__).parent
sys.path.append(str(ROOT_DIR))

from src.model import (
    CountingModel,
    FunctionModel,
    InputDensity,
    MeasurementConfig,
    directional_derivative,
    evaluation_budget,
    finite_difference_gradient,
    measure_gradient,
    sample_inputs,
)
from src.testfns import build_quadratic
from src.utils import CapabilityError


def _sphere(dim: int = 3) -> FunctionModel:
    return FunctionModel(dim=dim, evaluate=lambda x: float(np.sum(x ** 2)),
                         gradient=lambda x: 2.0 * x, name="sphere")


def test_sample_inputs_uniform_deterministico():
    """Mesma semente, mesma matriz; amostras dentro de [-1, 1]^m."""
    densidade = InputDensity(kind="uniform", dim=4)
    A = sample_inputs(densidade, 50, seed=3)
    B = sample_inputs(densidade, 50, seed=3)

    assert A.shape == (4, 50)
    assert_array_equal(A, B)
    assert np.all(np.abs(A) <= 1.0)
    assert not np.array_equal(A, sample_inputs(densidade, 50, seed=4))


def test_sample_inputs_gaussiana():
    X = sample_inputs(InputDensity(kind="gaussian", dim=2), 20000, seed=0)
    assert abs(X.mean()) < 0.05
    assert abs(X.std() - 1.0) < 0.05


def test_densidade_e_contagem_invalidas():
    with pytest.raises(ValueError):
        InputDensity(kind="beta", dim=2)
    with pytest.raises(ValueError):
        InputDensity(kind="uniform", dim=0)
    with pytest.raises(ValueError):
        sample_inputs(InputDensity(kind="uniform", dim=2), 0, seed=0)


def test_modo_exato_sem_gradiente():
    """Modo exato com modelo sem gradiente levanta CapabilityError."""
    modelo = FunctionModel(dim=3, evaluate=lambda x: float(np.sum(x)))
    assert not modelo.has_gradient
    with pytest.raises(CapabilityError):
        measure_gradient(modelo, np.zeros(3), np.eye(3), MeasurementConfig())


def test_medicao_exata():
    modelo = _sphere(4)
    x = np.array([1.0, -2.0, 0.5, 3.0])
    E = np.random.default_rng(0).standard_normal((4, 2))
    assert_allclose(measure_gradient(modelo, x, E, MeasurementConfig()), E.T @ (2.0 * x))
    assert directional_derivative(modelo, x, E[:, 0], MeasurementConfig()) == pytest.approx(
        2.0 * x @ E[:, 0]
    )


def test_medicao_fd_custa_k_mais_1_avaliacoes():
    """Diferenças progressivas: f(x) compartilhado entre as k direções."""
    quadratica = build_quadratic(seed=1)
    contador = CountingModel(quadratica.function_model())
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, 10)
    E = rng.standard_normal((10, 4))

    medido = measure_gradient(contador, x, E, MeasurementConfig(mode="fd"))

    assert contador.n_evaluations == 5
    assert contador.n_gradients == 0
    assert_allclose(medido, E.T @ quadratica.gradient(x), atol=1e-4)


def test_derivada_direcional_fd_duas_avaliacoes():
    contador = CountingModel(_sphere(3))
    x = np.array([0.3, -0.1, 0.2])
    a = np.array([1.0, 0.0, 0.0])
    valor = directional_derivative(contador, x, a, MeasurementConfig(mode="fd", step=1e-7))
    assert contador.n_evaluations == 2
    assert valor == pytest.approx(0.6, abs=1e-5)

    contador.reset()
    assert contador.n_evaluations == 0


def test_gradiente_por_diferencas_finitas():
    modelo = _sphere(5)
    x = np.linspace(-1.0, 1.0, 5)
    assert_allclose(finite_difference_gradient(modelo, x), 2.0 * x, atol=1e-5)


def test_passo_padrao_relativo():
    config = MeasurementConfig(mode="fd")
    assert config.step_for(np.array([0.1, -0.5])) == pytest.approx(1e-6)
    assert config.step_for(np.array([10.0, -50.0])) == pytest.approx(5e-5)
    assert MeasurementConfig(mode="fd", step=1e-3).step_for(np.array([100.0])) == 1e-3


def test_configuracao_de_medicao_invalida():
    with pytest.raises(ValueError):
        MeasurementConfig(mode="central")
    with pytest.raises(ValueError):
        MeasurementConfig(mode="fd", step=0.0)
    with pytest.raises(ValueError):
        measure_gradient(_sphere(3), np.zeros(3), np.eye(4), MeasurementConfig())


def test_orcamento_de_avaliacoes():
    orcamento = evaluation_budget(m=100, k=10, M=300)
    assert orcamento['sketch'] == 3300
    assert orcamento['full_gradient'] == 30300
    assert orcamento['ratio'] == pytest.approx(3300 / 30300)
