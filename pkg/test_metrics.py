"""
Testes das Métricas de Erro

Propriedades do erro de subespaço (intervalo, simetria, invariância a
rotações) e do erro relativo de autovalores.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add root to path
ROOT_DIR = Path(__file__).parent
sys.path.append(str(ROOT_DIR))

from src.metrics import (
    SubspaceEstimate,
    eigenvalue_error,
    principal_angles,
    projector_distance,
    subspace_error,
    subspace_errors_by_dimension,
)
from src.testfns import random_orthonormal
from src.utils import NumericalError
from src.verification import check_metric_properties


def test_subespacos_identicos_e_ortogonais():
    eixos = np.eye(5)
    assert subspace_error(eixos[:, :2], eixos[:, :2]) == 0.0
    assert subspace_error(eixos[:, :2], eixos[:, 2:4]) == pytest.approx(1.0)


def test_invariancias_aleatorias():
    """Simetria, invariância a rotações da base e concordância com os projetores."""
    rng = np.random.default_rng(0)
    for _ in range(20):
        U = random_orthonormal(9, 3, rng)
        V = random_orthonormal(9, 3, rng)
        R = random_orthonormal(3, 3, rng)
        e = subspace_error(U, V)

        assert 0.0 <= e <= 1.0
        assert e == pytest.approx(subspace_error(V, U), abs=1e-12)
        assert e == pytest.approx(subspace_error(U @ R, V @ R.T), abs=1e-12)
        assert e == pytest.approx(projector_distance(U, V), abs=1e-12)
        assert subspace_error(U, U @ R) <= 1e-12


def test_angulo_pequeno_sem_perda_de_precisao():
    """Rotação de 1e-9 rad: o erro é sin(1e-9), não arredondado para zero."""
    theta = 1e-9
    U = np.array([[1.0], [0.0], [0.0]])
    V = np.array([[np.cos(theta)], [np.sin(theta)], [0.0]])
    assert subspace_error(U, V) == pytest.approx(np.sin(theta), rel=1e-6)


def test_angulos_principais():
    eixos = np.eye(4)
    angulos = principal_angles(eixos[:, :2], eixos[:, [0, 2]])
    assert_allclose(angulos, [0.0, np.pi / 2], atol=1e-7)


def test_shapes_diferentes():
    with pytest.raises(ValueError):
        subspace_error(np.eye(4)[:, :2], np.eye(4)[:, :3])
    with pytest.raises(ValueError):
        principal_angles(np.eye(4)[:, :2], np.eye(5)[:, :2])


def test_subspace_estimate_exige_base_ortonormal():
    with pytest.raises(ValueError):
        SubspaceEstimate(np.array([[1.0, 1.0], [0.0, 1.0]]))
    estimativa = SubspaceEstimate(np.array([0.0, 1.0, 0.0]))
    assert (estimativa.dim, estimativa.n) == (3, 1)
    assert subspace_error(estimativa, np.eye(3)[:, [1]]) == 0.0


def test_erros_por_dimensao_com_nan():
    rng = np.random.default_rng(1)
    referencia = random_orthonormal(8, 6, rng)
    estimativa = referencia[:, :4]
    erros = subspace_errors_by_dimension(referencia, estimativa)

    assert erros.shape == (6,)
    assert_allclose(erros[:4], 0.0, atol=1e-12)
    assert np.all(np.isnan(erros[4:]))


def test_erro_de_autovalores():
    lam = np.array([5.0, 3.0, 1.0, 0.5, 0.1, 0.01])
    assert eigenvalue_error(lam, lam) == 0.0
    assert eigenvalue_error(lam, np.zeros(6)) == pytest.approx(1.0)

    mu = lam * 1.1
    assert eigenvalue_error(lam, mu) == pytest.approx(0.1)
    assert eigenvalue_error(7.0 * lam, 7.0 * mu) == pytest.approx(eigenvalue_error(lam, mu))


def test_erro_de_autovalores_completa_com_zeros():
    """Listas curtas são completadas com zeros até seis valores."""
    assert eigenvalue_error([2.0, 1.0], [2.0, 1.0, 0.0]) == 0.0
    assert eigenvalue_error([1.0], [1.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        eigenvalue_error(np.ones(7), np.ones(7))


def test_erro_de_autovalores_referencia_nula():
    with pytest.raises(NumericalError):
        eigenvalue_error(np.zeros(6), np.ones(6))


def test_propriedades_das_metricas():
    resultado = check_metric_properties(seed=3)
    assert resultado.passed, resultado.detail
