"""
===================================================================
ActiveSketch - Módulo de Execução de Experimentos
Varreduras em k, tentativas independentes e emissão de resultados
===================================================================

Este módulo contém:
- Presets dos estudos (quadrática, Poisson-KL, z-model)
- Preparação do problema e da estimativa de referência C
- Execução das células (k, trial), em série ou em paralelo
- Tabelas de resumo e de detalhe (pandas) e emissão CSV/JSON
- Reexecução de um experimento gravado em JSON

Versão: 1.0.0
"""

import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.linalg import LinAlgError
from tqdm import tqdm

from src.estimators import (
    AlsConfig,
    EigenDecomposition,
    als_estimate,
    draw_sketches,
    estimate_c_monte_carlo,
    estimate_c_projection,
    MeasurementSet,
    make_measurements,
)
from src.experiment_logger import ExperimentLogger, get_experiment_logger
from src.metrics import (
    N_EIGENVALUES,
    eigenvalue_error,
    subspace_error,
    subspace_errors_by_dimension,
)
from src.model import (
    CountingModel,
    FunctionModel,
    MeasurementConfig,
    evaluation_budget,
    measure_gradient,
    sample_inputs,
)
from src.schemas import ExperimentConfig
from src.testfns import (
    build_poisson_kl,
    build_quadratic,
    build_z_model_spec,
    sample_z_model,
)
from src.utils import (
    ActiveSubspaceError,
    carregar_json,
    criar_diretorio,
    derive_seed,
    salvar_json,
)


logger = logging.getLogger(__name__)


# ===================================================================
# CONFIGURAÇÕES
# ===================================================================

PRESETS: Dict[str, Dict] = {
    'quadratic': {
        'problem': 'quadratic',
        'm': 10,
        'samples': 200,
        'k_values': [4, 5, 6, 7, 8, 9],
        'rank': 4,
        'n': 3,
        'trials': 20,
        'detail_k': 7,
    },
    'pde': {
        'problem': 'pde',
        'm': 100,
        'samples': 300,
        'k_values': [10, 30, 50, 70, 90],
        'rank': 8,
        'n': 1,
        'trials': 20,
        'detail_k': 70,
    },
    'zmodel': {
        'problem': 'zmodel',
        'm': 10,
        'samples': 1000,
        'k_values': [4, 5, 6, 7, 8, 9],
        'rank': 3,
        'n': 3,
        'trials': 20,
        'detail_k': 7,
        'sigmas': [1.0, 0.7, 0.4],
    },
}

METHODS = ('projection', 'als')

SUMMARY_COLUMNS = [
    'problem', 'method', 'k', 'r', 'n', 'trials',
    'eigenvalue_error_mean', 'subspace_error_mean',
] + [f'subspace_err_n{j}_mean' for j in range(1, N_EIGENVALUES + 1)]

DETAIL_COLUMNS = [
    'problem', 'method', 'k', 'index', 'reference',
    'estimate_mean', 'estimate_min', 'estimate_max', 'subspace_err_mean',
]

# Formato fixo: mesma configuração, mesmos bytes
FLOAT_FORMAT = '%.12e'

# Erros que invalidam apenas a célula, nunca a execução
CELL_ERRORS = (ActiveSubspaceError, LinAlgError, ValueError, FloatingPointError)


# ===================================================================
# TIPOS
# ===================================================================

@dataclass
class ProblemData:
    """
    Problema preparado: gradientes fixos e referência compartilhada.

    Attributes:
        name: Nome do problema
        gradients: Matriz m x M de gradientes exatos (ou amostras do z-model)
        reference: Autopares de C calculados uma única vez
        inputs: Pontos x_i (m x M); None para o z-model
        function: Modelo de função (necessário no modo 'fd')
    """
    name: str
    gradients: np.ndarray
    reference: EigenDecomposition
    inputs: Optional[np.ndarray] = None
    function: Optional[FunctionModel] = None


@dataclass
class MethodOutcome:
    """Erros e autovalores estimados por um método em uma célula."""
    eigenvalue_error: float
    subspace_error: float
    subspace_errors_n: List[float]
    eigenvalues: List[float]

    @classmethod
    def undefined(cls) -> 'MethodOutcome':
        """Método não executado na célula (ALS com k <= r)."""
        vazio = [float('nan')] * N_EIGENVALUES
        return cls(float('nan'), float('nan'), list(vazio), list(vazio))


@dataclass
class CellResult:
    """
    Resultado de uma célula (k, trial).

    Células com falha têm status 'failed', motivo e nenhum erro.
    """
    k: int
    trial: int
    seed: int
    status: str = 'ok'
    reason: Optional[str] = None
    projection: Optional[MethodOutcome] = None
    als: Optional[MethodOutcome] = None
    als_trace: List[float] = field(default_factory=list)
    als_iterations: int = 0
    als_converged: bool = False
    evaluations: int = 0
    elapsed_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def outcome(self, method: str) -> MethodOutcome:
        return self.projection if method == 'projection' else self.als

    def to_dict(self, include_timings: bool = False) -> Dict:
        dados = asdict(self)
        if not include_timings:
            dados.pop('elapsed_s')
        return dados


@dataclass
class ExperimentResult:
    """Todas as células de um experimento mais referência e metadados."""
    config: ExperimentConfig
    reference_eigenvalues: np.ndarray
    cells: List[CellResult]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def failures(self) -> List[CellResult]:
        return [c for c in self.cells if not c.ok]

    def cells_for(self, k: int) -> List[CellResult]:
        """Células bem-sucedidas com o k dado, em ordem de trial."""
        return [c for c in self.cells if c.k == k and c.ok]

    def reference_leading(self) -> np.ndarray:
        valores = np.zeros(N_EIGENVALUES)
        n = min(N_EIGENVALUES, self.reference_eigenvalues.size)
        valores[:n] = self.reference_eigenvalues[:n]
        return valores

    def summary_frame(self) -> pd.DataFrame:
        """
        Uma linha por k e método com as médias sobre as tentativas.

        Retorna:
        --------
        pd.DataFrame
            Colunas SUMMARY_COLUMNS; trials conta só as células bem-sucedidas
        """
        cfg = self.config
        linhas = []
        for k in cfg.k_values:
            celulas = self.cells_for(k)
            for metodo in METHODS:
                saidas = [c.outcome(metodo) for c in celulas]
                linha = {
                    'problem': cfg.problem,
                    'method': metodo,
                    'k': k,
                    'r': cfg.rank,
                    'n': cfg.n,
                    'trials': len(saidas),
                    'eigenvalue_error_mean': _mean([s.eigenvalue_error for s in saidas]),
                    'subspace_error_mean': _mean([s.subspace_error for s in saidas]),
                }
                for j in range(N_EIGENVALUES):
                    linha[f'subspace_err_n{j + 1}_mean'] = _mean(
                        [s.subspace_errors_n[j] for s in saidas]
                    )
                linhas.append(linha)
        return pd.DataFrame(linhas, columns=SUMMARY_COLUMNS)

    def detail_frame(self) -> pd.DataFrame:
        """Curvas de detalhe no k fixo: autovalores e erros para n = 1..6."""
        cfg = self.config
        if cfg.detail_k is None:
            return pd.DataFrame(columns=DETAIL_COLUMNS)

        referencia = self.reference_leading()
        celulas = self.cells_for(cfg.detail_k)
        linhas = []
        for metodo in METHODS:
            saidas = [c.outcome(metodo) for c in celulas]
            for j in range(N_EIGENVALUES):
                estimativas = np.array([s.eigenvalues[j] for s in saidas], dtype=float)
                linhas.append({
                    'problem': cfg.problem,
                    'method': metodo,
                    'k': cfg.detail_k,
                    'index': j + 1,
                    'reference': referencia[j],
                    'estimate_mean': _mean(estimativas),
                    'estimate_min': float(np.min(estimativas)) if estimativas.size else np.nan,
                    'estimate_max': float(np.max(estimativas)) if estimativas.size else np.nan,
                    'subspace_err_mean': _mean([s.subspace_errors_n[j] for s in saidas]),
                })
        return pd.DataFrame(linhas, columns=DETAIL_COLUMNS)

    def to_dict(self, include_timings: bool = False) -> Dict:
        """Estrutura completa por tentativa, com sementes para reexecução."""
        cfg = self.config
        dados = {
            'config': cfg.model_dump(),
            'reference': {
                'eigenvalues': self.reference_eigenvalues,
                'leading': self.reference_leading(),
            },
            'evaluation_budget': {
                str(k): evaluation_budget(cfg.m, k, cfg.samples) for k in cfg.k_values
            },
            'cells': [c.to_dict(include_timings) for c in self.cells],
            'summary': self.summary_frame().to_dict(orient='records'),
        }
        if include_timings:
            dados['timings'] = self.timings
        return dados


def _mean(valores) -> float:
    valores = np.asarray(valores, dtype=float)
    return float(np.mean(valores)) if valores.size else float('nan')


def _padded(valores: np.ndarray) -> List[float]:
    saida = np.full(N_EIGENVALUES, np.nan)
    n = min(N_EIGENVALUES, valores.size)
    saida[:n] = valores[:n]
    return saida.tolist()


# ===================================================================
# PRESETS E PROBLEMAS
# ===================================================================

def preset_config(name: str, **overrides) -> ExperimentConfig:
    """
    Configuração de um preset com sobrescritas opcionais.

    Sobrescritas None são ignoradas. Se k_values for sobrescrito e não
    contiver o detail_k do preset, as curvas de detalhe são desligadas.

    Raises:
        ValueError: Preset desconhecido
        pydantic.ValidationError: Configuração resultante inválida
    """
    if name not in PRESETS:
        raise ValueError(
            f"Preset desconhecido: {name!r}. Disponíveis: {sorted(PRESETS)}"
        )
    valores = dict(PRESETS[name])
    valores.update({chave: v for chave, v in overrides.items() if v is not None})
    if 'k_values' in overrides and overrides['k_values'] is not None \
            and valores.get('detail_k') not in overrides['k_values']:
        valores['detail_k'] = None
    return ExperimentConfig(**valores)


def prepare_problem(cfg: ExperimentConfig, progress: bool = False) -> ProblemData:
    """
    Amostra as entradas, calcula os gradientes exatos e a referência C.

    Entradas e gradientes ficam fixos durante todo o experimento; só os
    sketches variam entre as tentativas.
    """
    semente_modelo = derive_seed(cfg.seed, cfg.problem, 'model')
    semente_entradas = derive_seed(cfg.seed, cfg.problem, 'inputs')

    if cfg.problem == 'quadratic':
        quadratica = build_quadratic(cfg.m, cfg.gap_after, seed=semente_modelo)
        X = sample_inputs(quadratica.density, cfg.samples, semente_entradas)
        funcao = quadratica.function_model()
        G = quadratica.gradients(X)
    elif cfg.problem == 'pde':
        poisson = build_poisson_kl(cfg.grid, cfg.m, cfg.correlation_length)
        X = sample_inputs(poisson.density, cfg.samples, semente_entradas)
        funcao = poisson.function_model()
        iterador = tqdm(range(cfg.samples), desc="Gradientes adjuntos",
                        disable=not progress, leave=False)
        G = np.column_stack([poisson.gradient(X[:, i]) for i in iterador])
    else:
        spec = build_z_model_spec(cfg.m, cfg.sigmas, seed=semente_modelo)
        X, funcao = None, None
        G = sample_z_model(spec, cfg.samples, semente_entradas)

    return ProblemData(
        name=cfg.problem,
        gradients=G,
        reference=estimate_c_monte_carlo(G),
        inputs=X,
        function=funcao,
    )


# ===================================================================
# CÉLULAS
# ===================================================================

def _measure(problem: ProblemData, cfg: ExperimentConfig, sketches: np.ndarray,
             seed: int) -> Tuple[MeasurementSet, int]:
    if cfg.mode == 'exact':
        return make_measurements(problem.gradients, sketches, seed), 0

    contador = CountingModel(problem.function)
    medicao = MeasurementConfig(mode='fd', step=cfg.step)
    Y = np.empty((cfg.samples, sketches.shape[2]))
    for i in range(cfg.samples):
        Y[i] = measure_gradient(contador, problem.inputs[:, i], sketches[i], medicao)
    return MeasurementSet(sketches=sketches, measurements=Y, seed=seed), contador.n_evaluations


def run_cell(problem: ProblemData, cfg: ExperimentConfig, k: int, trial: int) -> CellResult:
    """
    Executa uma célula (k, trial).

    Os dois métodos consomem o mesmo MeasurementSet. Qualquer erro de
    estimador vira uma célula com status 'failed' e o motivo.
    """
    inicio = time.perf_counter()
    seed = derive_seed(cfg.seed, cfg.problem, k, trial)
    celula = CellResult(k=k, trial=trial, seed=seed)

    referencia = problem.reference
    ref_lideres = referencia.leading_eigenvalues(N_EIGENVALUES)
    ref_base = referencia.top(N_EIGENVALUES)

    try:
        sketches = draw_sketches(cfg.m, k, cfg.samples, seed)
        ms, celula.evaluations = _measure(problem, cfg, sketches, seed)

        cp = estimate_c_projection(ms)
        celula.projection = MethodOutcome(
            eigenvalue_error=eigenvalue_error(ref_lideres, cp.eigenvalues[:N_EIGENVALUES]),
            subspace_error=subspace_error(referencia.top(cfg.n), cp.top(cfg.n)),
            subspace_errors_n=subspace_errors_by_dimension(ref_base, cp.top(N_EIGENVALUES)).tolist(),
            eigenvalues=_padded(cp.eigenvalues),
        )

        if not cfg.runs_als(k):
            celula.als = MethodOutcome.undefined()
        else:
            als_cfg = AlsConfig(rank=cfg.rank,
                                max_iterations=cfg.als.max_iterations,
                                tolerance=cfg.als.tolerance,
                                ridge=cfg.als.ridge,
                                shrinkage=cfg.als.shrinkage)
            als = als_estimate(ms, als_cfg, cp)
            celula.als = MethodOutcome(
                eigenvalue_error=eigenvalue_error(ref_lideres, als.eigenvalues[:N_EIGENVALUES]),
                subspace_error=subspace_error(referencia.top(cfg.n), als.basis[:, :cfg.n]),
                subspace_errors_n=subspace_errors_by_dimension(ref_base, als.basis).tolist(),
                eigenvalues=_padded(als.eigenvalues),
            )
            celula.als_trace = [float(v) for v in als.fit.trace]
            celula.als_iterations = als.fit.iterations
            celula.als_converged = als.fit.converged

    except CELL_ERRORS as e:
        celula.status = 'failed'
        celula.reason = f"{type(e).__name__}: {e}"
        celula.projection = None
        celula.als = None

    celula.elapsed_s = time.perf_counter() - inicio
    return celula


def run_experiment(cfg: ExperimentConfig, progress: bool = False,
                   experiment_logger: Optional[ExperimentLogger] = None) -> ExperimentResult:
    """
    Executa a varredura completa em k com cfg.trials tentativas por k.

    Parâmetros:
    -----------
    cfg : ExperimentConfig
        Configuração validada
    progress : bool
        Mostra barra de progresso tqdm sobre as células
    experiment_logger : ExperimentLogger
        Destino dos eventos estruturados (padrão: logger global)

    Retorna:
    --------
    ExperimentResult
        Células em ordem (k, trial), independente do número de processos
    """
    registro = experiment_logger or get_experiment_logger()
    inicio = time.perf_counter()

    problema = prepare_problem(cfg, progress)
    t_referencia = time.perf_counter() - inicio
    registro.log_reference(cfg.problem, problema.reference.eigenvalues, t_referencia)

    tarefas = [(k, t) for k in cfg.k_values for t in range(cfg.trials)]
    iterador = tqdm(tarefas, desc=f"Células {cfg.problem}", disable=not progress)

    if cfg.jobs == 1:
        celulas = [run_cell(problema, cfg, k, t) for k, t in iterador]
    else:
        celulas = Parallel(n_jobs=cfg.jobs)(
            delayed(run_cell)(problema, cfg, k, t) for k, t in iterador
        )
    celulas = sorted(celulas, key=lambda c: (c.k, c.trial))

    for celula in celulas:
        if celula.ok:
            registro.log_cell(celula)
        else:
            registro.log_cell_failure(celula)

    total = time.perf_counter() - inicio
    resultado = ExperimentResult(
        config=cfg,
        reference_eigenvalues=problema.reference.eigenvalues,
        cells=celulas,
        timings={
            'reference_s': t_referencia,
            'cells_s': total - t_referencia,
            'total_s': total,
        },
    )
    registro.log_summary(cfg.problem, len(celulas), len(resultado.failures), total)

    if resultado.failures:
        logger.warning(
            f"⚠️ {len(resultado.failures)} de {len(celulas)} células falharam"
        )
    return resultado


# ===================================================================
# EMISSÃO
# ===================================================================

def _write_frame(frame: pd.DataFrame, path: str) -> str:
    diretorio = os.path.dirname(path)
    if diretorio:
        criar_diretorio(diretorio)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='')
    return path


def emit_results(res: ExperimentResult, format: str, path: str,
                 include_timings: bool = False) -> str:
    """
    Grava o resultado em CSV (resumo) ou JSON (estrutura completa).

    Parâmetros:
    -----------
    res : ExperimentResult
        Resultado completo
    format : str
        'csv' ou 'json'
    path : str
        Arquivo de destino
    include_timings : bool
        Inclui tempos no JSON (a saída deixa de ser byte-idêntica)

    Retorna:
    --------
    str
        Caminho gravado

    Raises:
        OSError: Caminho não gravável
    """
    if format == 'csv':
        return _write_frame(res.summary_frame(), path)
    if format == 'json':
        salvar_json(res.to_dict(include_timings), path)
        return path
    raise ValueError(f"Formato desconhecido: {format!r}. Use 'csv' ou 'json'")


def emit_detail(res: ExperimentResult, path: str) -> str:
    """Grava o CSV de detalhe (autovalores e erros n = 1..6 no detail_k)."""
    return _write_frame(res.detail_frame(), path)


def replay_experiment(json_path: str, jobs: Optional[int] = None,
                      progress: bool = False) -> ExperimentResult:
    """
    Reexecuta um experimento gravado por emit_results(format='json').

    As sementes das células são recalculadas a partir da semente mestre
    e comparadas com as gravadas antes da execução.

    Raises:
        ActiveSubspaceError: Sementes gravadas divergem das derivadas
    """
    dados = carregar_json(json_path)
    cfg = ExperimentConfig(**dados['config'])
    if jobs is not None:
        cfg = cfg.model_copy(update={'jobs': jobs})

    for registro in dados.get('cells', []):
        esperada = derive_seed(cfg.seed, cfg.problem, registro['k'], registro['trial'])
        if registro['seed'] != esperada:
            raise ActiveSubspaceError(
                f"Semente gravada {registro['seed']} difere da derivada {esperada} "
                f"na célula k={registro['k']}, trial={registro['trial']}"
            )

    logger.info(f"🔁 Reexecutando experimento de {json_path}")
    return run_experiment(cfg, progress=progress)


def compare_with_recorded(res: ExperimentResult, recorded: Dict) -> List[str]:
    """
    Compara um resultado com o JSON gravado, célula a célula.

    Retorna:
    --------
    list
        Identificadores 'k=<k>,trial=<t>' das células divergentes
        (NaN conta como igual a NaN)
    """
    gravadas = {(c['k'], c['trial']): c for c in recorded.get('cells', [])}
    divergentes = []
    for celula in res.cells:
        chave = (celula.k, celula.trial)
        antiga = gravadas.pop(chave, None)
        nova = celula.to_dict()
        iguais = antiga is not None and antiga['status'] == nova['status']
        if iguais and celula.ok:
            for metodo in METHODS:
                for campo in ('eigenvalue_error', 'subspace_error', 'subspace_errors_n', 'eigenvalues'):
                    iguais = iguais and np.array_equal(
                        np.asarray(antiga[metodo][campo], dtype=float),
                        np.asarray(nova[metodo][campo], dtype=float),
                        equal_nan=True,
                    )
            iguais = iguais and np.array_equal(antiga['als_trace'], nova['als_trace'])
        if not iguais:
            divergentes.append(f"k={chave[0]},trial={chave[1]}")
    divergentes += [f"k={k},trial={t}" for k, t in gravadas]
    return divergentes
