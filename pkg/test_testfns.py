"""
Testes dos Problemas de Teste

Quadrática com espectro analítico, modelo de Poisson com coeficientes
KL (gradiente adjunto) e z-model.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add root to path
ROOT_DIR = Path(__file__).parent
sys.path.append(str(ROOT_DIR))

from src.estimators import estimate_c_monte_carlo
from src.metrics import eigenvalue_error, subspace_error
from src.model import MeasurementConfig, measure_gradient, sample_inputs
from src.testfns import (
    QuadraticModel,
    ZModelSpec,
    build_poisson_kl,
    build_quadratic,
    build_z_model_spec,
    poisson_eval,
    poisson_grad,
    quadratic_spectrum,
    quadratic_true_active_subspace,
    sample_z_model,
)
from src.verification import (
    adjoint_relative_errors,
    check_adjoint_dense,
    check_adjoint_gradient,
    check_quadratic_spectrum,
    dense_sensitivity,
)


# ===================================================================
# QUADRÁTICA
# ===================================================================

def test_espectro_da_quadratica():
    d = quadratic_spectrum()
    assert d.shape == (10,)
    assert_allclose(d[:3], [1.0, 10 ** -0.25, 10 ** -0.5])
    assert_allclose(d[3:5], [1e-3, 10 ** -3.25])
    lam = d ** 2 / 3
    assert lam[2] / lam[3] == pytest.approx(1e5)


def test_build_quadratic():
    modelo = build_quadratic(seed=4)
    H = modelo.H
    assert_allclose(H, H.T)
    assert_allclose(H @ modelo.eigenvectors, modelo.eigenvectors * modelo.eigenvalues, atol=1e-12)
    assert_allclose(modelo.c_eigenvalues, modelo.eigenvalues ** 2 / 3)

    x = np.linspace(-1, 1, 10)
    assert modelo.evaluate(x) == pytest.approx(0.5 * x @ H @ x)
    assert_allclose(modelo.gradient(x), H @ x)
    assert modelo.density.kind == "uniform"

    with pytest.raises(ValueError):
        build_quadratic(m=5, gap_after=5)


def test_quadratica_de_matriz():
    modelo = QuadraticModel.from_matrix(np.diag([1.0, 4.0]))
    assert_allclose(modelo.eigenvalues, [4.0, 1.0])
    with pytest.raises(ValueError):
        QuadraticModel.from_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        QuadraticModel.from_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_monte_carlo_aproxima_espectro_analitico():
    modelo = build_quadratic(seed=0)
    X = sample_inputs(modelo.density, 20000, seed=1)
    mc = estimate_c_monte_carlo(modelo.gradients(X))
    verdadeiro, lam = quadratic_true_active_subspace(modelo, 3)

    assert verdadeiro.n == 3
    assert eigenvalue_error(lam[:6], mc.eigenvalues[:6]) <= 0.05
    assert subspace_error(verdadeiro, mc.top(3)) <= 0.05


# ===================================================================
# POISSON-KL
# ===================================================================

@pytest.fixture(scope="module")
def poisson_pequeno():
    return build_poisson_kl(n_grid=8, m=10)


def test_qoi_na_origem(poisson_pequeno):
    """Com a = 1 a QoI fica abaixo do perfil 1D do canal, 1/12."""
    modelo = build_poisson_kl(n_grid=16, m=5)
    f0 = poisson_eval(modelo, np.zeros(5))
    assert 0.06 < f0 < 1.0 / 12.0
    assert poisson_eval(poisson_pequeno, np.zeros(10)) > 0.0


def test_base_kl(poisson_pequeno):
    modelo = poisson_pequeno
    assert np.all(np.diff(modelo.kl_values) <= 0)
    assert np.all(modelo.kl_values > 0)
    # modos ortonormais com peso h^2
    assert_allclose(modelo.kl_modes.T @ modelo.kl_modes * modelo.h ** 2, np.eye(10), atol=1e-10)
    assert modelo.density.kind == "gaussian"


def test_rigidez_simetrica(poisson_pequeno):
    x = np.random.default_rng(0).standard_normal(10)
    K = poisson_pequeno.stiffness(x).toarray()
    assert_allclose(K, K.T, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(K) > 0)


def test_linearidade_na_forcante(poisson_pequeno):
    x = np.random.default_rng(1).standard_normal(10)
    assert_allclose(poisson_pequeno.solve(x, forcing_scale=2.0),
                    2.0 * poisson_pequeno.solve(x), rtol=1e-12)


def test_gradiente_adjunto_contra_sensibilidade_densa(poisson_pequeno):
    x = np.random.default_rng(2).standard_normal(10)
    assert_allclose(poisson_grad(poisson_pequeno, x), dense_sensitivity(poisson_pequeno, x),
                    atol=1e-10)


def test_gradiente_adjunto_contra_diferencas_centrais(poisson_pequeno):
    x = np.random.default_rng(3).standard_normal(10)
    erros = adjoint_relative_errors(poisson_pequeno, x)
    assert np.nanmax(erros) <= 1e-4


def test_medicao_fd_no_modelo_de_poisson(poisson_pequeno):
    x = np.random.default_rng(4).standard_normal(10)
    E = np.random.default_rng(5).standard_normal((10, 3))
    exato = measure_gradient(poisson_pequeno.function_model(), x, E, MeasurementConfig())
    fd = measure_gradient(poisson_pequeno.function_model(), x, E, MeasurementConfig(mode="fd"))
    assert_allclose(fd, exato, rtol=1e-3, atol=1e-5)


def test_verificacao_adjunta_densa():
    resultado = check_adjoint_dense(seed=0)
    assert resultado.passed, resultado.detail


def test_parametros_invalidos_poisson():
    with pytest.raises(ValueError):
        build_poisson_kl(n_grid=1, m=1)
    with pytest.raises(ValueError):
        build_poisson_kl(n_grid=4, m=17)
    with pytest.raises(ValueError):
        build_poisson_kl(n_grid=4, m=3, correlation_length=0.0)
    with pytest.raises(ValueError):
        build_poisson_kl(n_grid=4, m=3).coefficient(np.zeros(4))


@pytest.mark.slow
def test_verificacao_adjunta_malha_padrao():
    resultado = check_adjoint_gradient(seed=0)
    assert resultado.passed, resultado.detail


@pytest.mark.slow
def test_verificacao_espectro_quadratica():
    resultado = check_quadratic_spectrum(seed=0)
    assert resultado.passed, resultado.detail


# ===================================================================
# Z-MODEL
# ===================================================================

def test_z_model_amostras_no_subespaco():
    spec = build_z_model_spec(10, (1.0, 0.7, 0.4), seed=0)
    Z = sample_z_model(spec, 500, seed=1)
    assert Z.shape == (10, 500)
    residuo = Z - spec.directions @ (spec.directions.T @ Z)
    assert np.max(np.abs(residuo)) < 1e-12
    assert (spec.dim, spec.d) == (10, 3)


def test_z_model_covariancia():
    spec = build_z_model_spec(6, (1.0, 0.5), seed=2)
    Z = sample_z_model(spec, 40000, seed=3)
    assert_allclose(Z @ Z.T / 40000, spec.covariance(), atol=0.05)
    assert_allclose(np.linalg.eigvalsh(spec.covariance())[::-1][:2], [1.0, 0.25], atol=1e-12)


def test_z_model_validacao():
    with pytest.raises(ValueError):
        ZModelSpec(sigmas=[0.5, 1.0], directions=np.eye(4)[:, :2])
    with pytest.raises(ValueError):
        ZModelSpec(sigmas=[1.0], directions=np.eye(4)[:, :2])
    with pytest.raises(ValueError):
        ZModelSpec(sigmas=[1.0, 0.5], directions=np.ones((4, 2)))
    with pytest.raises(ValueError):
        sample_z_model(build_z_model_spec(4, (1.0,), seed=0), 0, seed=0)
