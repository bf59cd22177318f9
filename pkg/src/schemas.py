"""
Esquemas Pydantic para Configuração de Experimentos

Define e valida a configuração de uma varredura em k: problema,
número de amostras, posto do ALS, tentativas e modo de medição.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AlsSettings(BaseModel):
    """
    Parâmetros do ajuste por mínimos quadrados alternados.

    Attributes:
        max_iterations: Máximo de iterações
        tolerance: Variação relativa do objetivo para parada
        ridge: Penalidade absoluta epsilon em ||A||_F^2 + ||B||_F^2
        shrinkage: Penalidade relativa; epsilon += shrinkage * sqrt(k) * ||M(G)||_F

    Com ridge = shrinkage = 0 vale a formulação original, sem penalidade.
    """
    model_config = ConfigDict(extra='forbid')

    max_iterations: int = Field(200, ge=1)
    tolerance: float = Field(1e-8, gt=0)
    ridge: float = Field(0.0, ge=0)
    shrinkage: float = Field(1e-2, ge=0)


class ExperimentConfig(BaseModel):
    """
    Configuração de um experimento.

    Attributes:
        problem: 'quadratic', 'pde' ou 'zmodel'
        m: Dimensão da entrada
        samples: Número M de gradientes
        k_values: Números de medições por gradiente a varrer
        rank: Posto r do ALS
        n: Dimensão do subespaço ativo avaliado
        trials: Tentativas independentes por k
        mode: 'exact' ou 'fd'
        step: Passo h das diferenças finitas (None = automático)
        seed: Semente mestre
        detail_k: k das curvas de detalhe (autovalores e n = 1..6)
        jobs: Processos para as células (k, trial)
    """
    model_config = ConfigDict(extra='forbid')

    problem: Literal['quadratic', 'pde', 'zmodel']
    m: int = Field(..., ge=1)
    samples: int = Field(..., ge=1)
    k_values: List[int] = Field(default_factory=list)
    rank: int = Field(..., ge=1)
    n: int = Field(..., ge=1)
    trials: int = Field(20, ge=1)
    mode: Literal['exact', 'fd'] = 'exact'
    step: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0)
    als: AlsSettings = Field(default_factory=AlsSettings)
    detail_k: Optional[int] = None
    jobs: int = 1

    # específicos de cada problema
    gap_after: int = Field(3, ge=1)
    grid: int = Field(32, ge=2)
    correlation_length: float = Field(1.0, gt=0)
    sigmas: List[float] = Field(default_factory=lambda: [1.0, 0.7, 0.4])

    @field_validator('k_values')
    @classmethod
    def validar_k(cls, v: List[int]) -> List[int]:
        """
        Remove duplicatas mantendo a ordem crescente.

        Raises:
            ValueError: Se algum k < 1
        """
        if any(k < 1 for k in v):
            raise ValueError(f'Todos os k devem ser >= 1. Recebido: {v}')
        return sorted(set(v))

    @field_validator('sigmas')
    @classmethod
    def validar_sigmas(cls, v: List[float]) -> List[float]:
        if not v or any(s <= 0 for s in v):
            raise ValueError(f'Pesos sigma devem ser positivos. Recebido: {v}')
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError(f'Pesos sigma devem ser decrescentes. Recebido: {v}')
        return v

    @model_validator(mode='after')
    def validar_consistencia(self) -> 'ExperimentConfig':
        """
        Valida k <= m para todo k, n <= r e o modo de medição.

        Valores k <= r são aceitos: nessas células só a projeção roda.

        Raises:
            ValueError: Se alguma combinação for inválida
        """
        for k in self.k_values:
            if k > self.m:
                raise ValueError(f'Cada k deve satisfazer k <= m (m={self.m}). Recebido k={k}')
        if self.k_values and self.k_values[-1] <= self.rank:
            raise ValueError(
                f'Nenhum k excede r={self.rank}: o ALS não rodaria em nenhuma célula'
            )
        if self.n > self.rank:
            raise ValueError(f'n={self.n} deve ser <= r={self.rank}')
        if self.rank > self.m:
            raise ValueError(f'r={self.rank} deve ser <= m={self.m}')
        if self.mode == 'fd' and self.problem == 'zmodel':
            raise ValueError('O z-model não tem função: use mode=exact')
        if self.problem == 'zmodel' and len(self.sigmas) > self.m:
            raise ValueError(f'{len(self.sigmas)} direções plantadas não cabem em m={self.m}')
        if self.problem == 'quadratic' and self.gap_after >= self.m:
            raise ValueError(f'gap_after={self.gap_after} deve ser < m={self.m}')
        if self.problem == 'pde' and self.m > self.grid ** 2:
            raise ValueError(f'm={self.m} excede o número de células ({self.grid ** 2})')
        if self.detail_k is not None and self.detail_k not in self.k_values:
            raise ValueError(f'detail_k={self.detail_k} não está em k_values={self.k_values}')
        if self.jobs == 0:
            raise ValueError('jobs deve ser diferente de 0 (use -1 para todos os núcleos)')
        return self

    def runs_als(self, k: int) -> bool:
        """O ALS exige r < k."""
        return self.rank < k
