"""
===================================================================
ActiveSketch - Suíte de Verificação
Critérios de aceitação executáveis por preset
===================================================================

Cada verificação devolve um CheckResult (valor medido, limite e
resultado). run_verification agrupa as verificações aplicáveis a um
preset em um VerificationReport, que a CLI grava em JSON.

Versão: 1.0.0
"""

import logging
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from src.estimators import (
    AlsConfig,
    als_estimate,
    draw_sketches,
    estimate_c_monte_carlo,
    estimate_c_projection,
    make_measurements,
    trace_is_nonincreasing,
)
from src.experiment_logger import ExperimentLogger, get_experiment_logger
from src.harness import ExperimentResult, emit_results, preset_config, run_experiment
from src.metrics import (
    eigenvalue_error,
    principal_angles,
    projector_distance,
    subspace_error,
)
from src.model import sample_inputs
from src.testfns import (
    build_poisson_kl,
    build_quadratic,
    build_z_model_spec,
    random_orthonormal,
    sample_z_model,
)
from src.utils import criar_diretorio, derive_seed, salvar_json


logger = logging.getLogger(__name__)


# ===================================================================
# CONFIGURAÇÕES
# ===================================================================

REPORT_DIR = os.path.join("docs", "verification")

SPECTRUM_SAMPLES = 50000
SPECTRUM_TOL = 0.05
EXACT_TOL = 1e-8
DOMINANCE_MARGIN = 0.02
TRACE_RTOL = 1e-12

Z_SIGMAS = (1.0, 0.7, 0.4)
Z_DIM = 10
Z_K = 5
Z_SAMPLE_SIZES = (100, 10000)
Z_SEEDS = 10
Z_ABS_TOL = 0.2

ADJOINT_POINTS = 5
ADJOINT_STEP = 1e-5
ADJOINT_RTOL = 1e-4
ADJOINT_MIN_MAGNITUDE = 1e-12
# Componentes abaixo desta fração de ||g||_inf são comparados contra o piso
ADJOINT_FLOOR = 1e-4
ADJOINT_DENSE_TOL = 1e-10

PDE_GAP = 10.0
PDE_IMPROVEMENT = 0.5
PDE_DOMINANCE_K = (50, 70, 90)


# ===================================================================
# TIPOS
# ===================================================================

@dataclass
class CheckResult:
    """
    Resultado de uma verificação.

    Attributes:
        name: Identificador da verificação
        passed: Se passou
        value: Valor medido
        threshold: Limite usado na comparação
        detail: Texto com os números relevantes
        elapsed_s: Duração em segundos
    """
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    elapsed_s: float = 0.0


@dataclass
class VerificationReport:
    """Conjunto de verificações de um preset."""
    preset: str
    seed: int
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict:
        return {
            'preset': self.preset,
            'seed': self.seed,
            'passed': self.passed,
            'checks': [asdict(c) for c in self.checks],
        }


def _timed(func: Callable[..., CheckResult], *args, **kwargs) -> CheckResult:
    inicio = time.perf_counter()
    resultado = func(*args, **kwargs)
    resultado.elapsed_s = time.perf_counter() - inicio
    return resultado


# ===================================================================
# VERIFICAÇÕES ANALÍTICAS
# ===================================================================

def check_quadratic_spectrum(seed: int = 0, samples: int = SPECTRUM_SAMPLES) -> CheckResult:
    """Monte Carlo com muitas amostras contra d_i^2/3 e os autovetores de H."""
    modelo = build_quadratic(seed=derive_seed(seed, 'quadratic', 'model'))
    X = sample_inputs(modelo.density, samples, derive_seed(seed, 'verify', 'spectrum'))
    mc = estimate_c_monte_carlo(modelo.gradients(X))

    erro_autovalores = eigenvalue_error(modelo.c_eigenvalues[:6], mc.eigenvalues[:6])
    erro_subespaco = subspace_error(modelo.eigenvectors[:, :3], mc.top(3))
    valor = max(erro_autovalores, erro_subespaco)

    return CheckResult(
        name='quadratic_spectrum',
        passed=valor <= SPECTRUM_TOL,
        value=valor,
        threshold=SPECTRUM_TOL,
        detail=f"eigenvalue_error={erro_autovalores:.3e}, subspace_error(n=3)={erro_subespaco:.3e}",
    )


def check_exact_recovery(seed: int = 0) -> CheckResult:
    """
    Medição completa (k = m).

    A projeção reproduz C na quadrática. O ALS ajusta exatamente um
    z-model de posto r = 4 (a quadrática tem posto completo e não
    admite ajuste exato de posto 4).
    """
    modelo = build_quadratic(seed=derive_seed(seed, 'quadratic', 'model'))
    X = sample_inputs(modelo.density, 200, derive_seed(seed, 'quadratic', 'inputs'))
    G = modelo.gradients(X)
    referencia = estimate_c_monte_carlo(G)
    semente = derive_seed(seed, 'verify', 'exact', 'projection')
    cp = estimate_c_projection(make_measurements(G, draw_sketches(10, 10, 200, semente)))
    erro_autovalores = eigenvalue_error(referencia.eigenvalues[:6], cp.eigenvalues[:6])
    erro_projecao = subspace_error(referencia.top(3), cp.top(3))

    spec = build_z_model_spec(10, (1.0, 0.7, 0.4, 0.2), seed=derive_seed(seed, 'verify', 'planted'))
    Z = sample_z_model(spec, 200, derive_seed(seed, 'verify', 'planted', 'samples'))
    ms = make_measurements(Z, draw_sketches(10, 10, 200, derive_seed(seed, 'verify', 'exact', 'als')))
    als = als_estimate(ms, AlsConfig(rank=4, max_iterations=20))
    objetivo_relativo = als.fit.trace[-1] / float(np.linalg.norm(ms.measurements))
    erro_als = subspace_error(spec.directions, als.basis)

    valor = max(erro_autovalores, erro_projecao, objetivo_relativo, erro_als)
    return CheckResult(
        name='exact_recovery',
        passed=valor <= EXACT_TOL,
        value=valor,
        threshold=EXACT_TOL,
        detail=(f"projection eigenvalue_error={erro_autovalores:.2e}, "
                f"projection subspace_error={erro_projecao:.2e}, "
                f"als objective/||M(G)||={objetivo_relativo:.2e}, "
                f"als subspace_error={erro_als:.2e}"),
    )


def check_metric_properties(seed: int = 0, n_cases: int = 50) -> CheckResult:
    """Propriedades das métricas em casos pequenos exaustivos e aleatórios."""
    rng = np.random.default_rng(derive_seed(seed, 'verify', 'metrics'))
    violacao = 0.0

    # casos exaustivos: eixos coordenados em R^4
    eixos = np.eye(4)
    for i in range(4):
        for j in range(4):
            esperado = 0.0 if i == j else 1.0
            violacao = max(violacao, abs(subspace_error(eixos[:, [i]], eixos[:, [j]]) - esperado))

    for _ in range(n_cases):
        m = int(rng.integers(3, 12))
        n = int(rng.integers(1, m // 2 + 1))
        U = random_orthonormal(m, n, rng)
        V = random_orthonormal(m, n, rng)
        R = random_orthonormal(n, n, rng)

        e = subspace_error(U, V)
        violacao = max(violacao,
                       max(0.0, -e), max(0.0, e - 1.0),
                       abs(e - subspace_error(V, U)),
                       abs(e - subspace_error(U @ R, V)),
                       abs(e - projector_distance(U, V)),
                       abs(e - np.sin(principal_angles(U, V)[-1])),
                       subspace_error(U, U @ R))

        # complemento ortogonal: erro 1
        Q = random_orthonormal(m, 2 * n, rng)
        violacao = max(violacao, abs(subspace_error(Q[:, :n], Q[:, n:]) - 1.0))

        lam = np.sort(rng.uniform(0.1, 10.0, size=6))[::-1]
        mu = lam * rng.uniform(0.5, 1.5, size=6)
        c = float(rng.uniform(0.1, 100.0))
        violacao = max(violacao,
                       eigenvalue_error(lam, lam),
                       abs(eigenvalue_error(c * lam, c * mu) - eigenvalue_error(lam, mu)))

    return CheckResult(
        name='metric_properties',
        passed=violacao <= 1e-10,
        value=float(violacao),
        threshold=1e-10,
        detail=f"{n_cases} casos aleatórios + 16 casos exaustivos",
    )


def check_z_model_consistency(seed: int = 0) -> CheckResult:
    """Erro do subespaço de C_P contra span{v_j} diminui com M."""
    spec = build_z_model_spec(Z_DIM, Z_SIGMAS, seed=derive_seed(seed, 'zmodel', 'model'))
    d = spec.d
    medias = {}
    for M in Z_SAMPLE_SIZES:
        erros = []
        for s in range(Z_SEEDS):
            Z = sample_z_model(spec, M, derive_seed(seed, 'verify', 'consistency', M, s))
            E = draw_sketches(Z_DIM, Z_K, M, derive_seed(seed, 'verify', 'consistency', 'sketch', M, s))
            cp = estimate_c_projection(make_measurements(Z, E))
            erros.append(subspace_error(spec.directions, cp.top(d)))
        medias[M] = float(np.mean(erros))

    pequeno, grande = Z_SAMPLE_SIZES
    passou = medias[grande] < medias[pequeno] and medias[grande] < Z_ABS_TOL
    return CheckResult(
        name='z_model_consistency',
        passed=bool(passou),
        value=medias[grande],
        threshold=min(Z_ABS_TOL, medias[pequeno]),
        detail=f"mean subspace_error: M={pequeno}: {medias[pequeno]:.3e}, M={grande}: {medias[grande]:.3e}",
    )


def adjoint_relative_errors(model, x: np.ndarray, step: float = ADJOINT_STEP) -> np.ndarray:
    """
    Erro relativo componente a componente entre o gradiente adjunto e
    diferenças centrais.

    Componentes com |g_j| <= 1e-12 são ignorados (NaN). Os demais são
    divididos por max(|g_j|, ADJOINT_FLOOR * ||g||_inf), pois abaixo disso
    o ruído de arredondamento das diferenças domina.
    """
    g = model.gradient(x)
    fd = np.empty_like(g)
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = step
        fd[j] = (model.evaluate(x + e) - model.evaluate(x - e)) / (2.0 * step)

    escala = np.maximum(np.abs(g), ADJOINT_FLOOR * np.max(np.abs(g)))
    erros = np.abs(fd - g) / escala
    erros[np.abs(g) <= ADJOINT_MIN_MAGNITUDE] = np.nan
    return erros


def dense_sensitivity(model, x: np.ndarray) -> np.ndarray:
    """Sensibilidade direta densa: df/dx_j = -c^T K^{-1} (dK/dx_j) u."""
    K = model.stiffness(x).toarray()
    u = np.linalg.solve(K, model.forcing)
    gradiente = np.empty(model.dim)
    for j in range(model.dim):
        dK = model.stiffness_derivative(x, j).toarray()
        gradiente[j] = -model.qoi_weights @ np.linalg.solve(K, dK @ u)
    return gradiente


def check_adjoint_gradient(seed: int = 0, n_points: int = ADJOINT_POINTS) -> CheckResult:
    """Gradiente adjunto contra diferenças centrais na malha padrão."""
    modelo = build_poisson_kl()
    X = sample_inputs(modelo.density, n_points, derive_seed(seed, 'verify', 'adjoint'))
    pior = 0.0
    for i in range(n_points):
        erros = adjoint_relative_errors(modelo, X[:, i])
        pior = max(pior, float(np.nanmax(erros)))

    return CheckResult(
        name='adjoint_finite_difference',
        passed=pior <= ADJOINT_RTOL,
        value=pior,
        threshold=ADJOINT_RTOL,
        detail=f"{n_points} pontos, h={ADJOINT_STEP}, m={modelo.dim}",
    )


def check_adjoint_dense(seed: int = 0) -> CheckResult:
    """Gradiente adjunto contra a sensibilidade direta densa em malha 4 x 4."""
    modelo = build_poisson_kl(n_grid=4, m=5)
    X = sample_inputs(modelo.density, 3, derive_seed(seed, 'verify', 'adjoint', 'dense'))
    pior = 0.0
    for i in range(X.shape[1]):
        diferenca = np.abs(modelo.gradient(X[:, i]) - dense_sensitivity(modelo, X[:, i]))
        pior = max(pior, float(np.max(diferenca)))

    return CheckResult(
        name='adjoint_dense',
        passed=pior <= ADJOINT_DENSE_TOL,
        value=pior,
        threshold=ADJOINT_DENSE_TOL,
        detail="malha 4x4, m=5",
    )


# ===================================================================
# VERIFICAÇÕES SOBRE UMA VARREDURA
# ===================================================================

def _means(res: ExperimentResult) -> Dict[str, Dict[int, float]]:
    tabela = res.summary_frame()
    return {
        metodo: dict(zip(grupo['k'], grupo['subspace_error_mean']))
        for metodo, grupo in tabela.groupby('method')
    }


def check_no_failures(res: ExperimentResult) -> CheckResult:
    falhas = len(res.failures)
    motivo = res.failures[0].reason if falhas else ""
    return CheckResult(
        name='no_failed_cells',
        passed=falhas == 0,
        value=float(falhas),
        threshold=0.0,
        detail=motivo,
    )


def check_als_dominance(res: ExperimentResult, ks: Optional[List[int]] = None,
                        margin: float = DOMINANCE_MARGIN,
                        name: str = 'als_dominance') -> CheckResult:
    """ALS <= projeção + margem na média do erro de subespaço."""
    medias = _means(res)
    ks = ks if ks is not None else [k for k in res.config.k_values if k > res.config.rank]
    excesso = max(medias['als'][k] - medias['projection'][k] for k in ks)
    return CheckResult(
        name=name,
        passed=excesso <= margin,
        value=float(excesso),
        threshold=margin,
        detail=", ".join(
            f"k={k}: als={medias['als'][k]:.3e} proj={medias['projection'][k]:.3e}" for k in ks
        ),
    )


def check_monotone_improvement(res: ExperimentResult) -> CheckResult:
    """
    Erro médio no maior k estritamente menor que no menor k, para os dois métodos.

    Para o ALS o menor k é o primeiro acima do posto r.
    """
    cfg = res.config
    medias = _means(res)
    k_max = max(cfg.k_values)
    k_min = {
        'projection': min(cfg.k_values),
        'als': min(k for k in cfg.k_values if cfg.runs_als(k)),
    }
    razoes = {m: medias[m][k_max] / medias[m][k_min[m]] for m in medias}
    pior = max(razoes.values())
    return CheckResult(
        name='monotone_improvement',
        passed=bool(pior < 1.0),
        value=float(pior),
        threshold=1.0,
        detail=", ".join(
            f"{m}: err(k={k_max})/err(k={k_min[m]})={v:.3f}" for m, v in razoes.items()
        ),
    )


def check_trace_monotone(res: ExperimentResult, rtol: float = TRACE_RTOL) -> CheckResult:
    """Todos os traços do ALS são não crescentes."""
    violacoes = [(c.k, c.trial) for c in res.cells
                 if c.ok and not trace_is_nonincreasing(c.als_trace, rtol)]
    return CheckResult(
        name='als_trace_monotone',
        passed=not violacoes,
        value=float(len(violacoes)),
        threshold=0.0,
        detail=f"células violadas: {violacoes[:5]}" if violacoes else "",
    )


def check_pde_shape(res: ExperimentResult) -> List[CheckResult]:
    """Lacuna espectral, queda do erro do ALS e dominância em k grande."""
    autovalores = res.reference_eigenvalues
    razao = float(autovalores[0] / autovalores[1])
    medias = _means(res)
    k_min, k_max = min(res.config.k_values), max(res.config.k_values)
    queda = medias['als'][k_max] / medias['als'][k_min]

    ks = [k for k in PDE_DOMINANCE_K if k in res.config.k_values]
    return [
        CheckResult(name='pde_eigenvalue_gap', passed=razao >= PDE_GAP, value=razao,
                    threshold=PDE_GAP, detail=f"lambda1/lambda2={razao:.2f}"),
        CheckResult(name='pde_als_improvement', passed=queda <= PDE_IMPROVEMENT,
                    value=float(queda), threshold=PDE_IMPROVEMENT,
                    detail=f"als err(k={k_max})/err(k={k_min})={queda:.3f}"),
        check_als_dominance(res, ks=ks, margin=0.0, name='pde_als_dominance'),
    ]


def check_determinism(cfg) -> CheckResult:
    """Duas execuções com a mesma configuração geram CSVs byte-idênticos."""
    conteudos = []
    with tempfile.TemporaryDirectory() as diretorio:
        for i in range(2):
            caminho = os.path.join(diretorio, f"run_{i}.csv")
            emit_results(run_experiment(cfg), 'csv', caminho)
            with open(caminho, 'rb') as f:
                conteudos.append(f.read())

    iguais = conteudos[0] == conteudos[1]
    return CheckResult(
        name='determinism',
        passed=iguais,
        value=0.0 if iguais else 1.0,
        threshold=0.0,
        detail=f"{len(conteudos[0])} bytes, k={cfg.k_values}, trials={cfg.trials}",
    )


# ===================================================================
# ORQUESTRAÇÃO
# ===================================================================

def run_verification(preset: str, seed: int = 0, jobs: int = 1, progress: bool = False,
                     experiment_logger: Optional[ExperimentLogger] = None) -> VerificationReport:
    """
    Executa os critérios de aceitação aplicáveis ao preset.

    Parâmetros:
    -----------
    preset : str
        'quadratic', 'pde' ou 'zmodel'
    seed : int
        Semente mestre
    jobs : int
        Processos para as varreduras
    progress : bool
        Barra de progresso nas varreduras

    Retorna:
    --------
    VerificationReport
        Verificações na ordem em que foram executadas
    """
    registro = experiment_logger or get_experiment_logger()
    cfg = preset_config(preset, seed=seed, jobs=jobs)
    report = VerificationReport(preset=preset, seed=seed)

    if preset == 'quadratic':
        report.checks += [
            _timed(check_quadratic_spectrum, seed),
            _timed(check_exact_recovery, seed),
            _timed(check_metric_properties, seed),
        ]
        res = run_experiment(cfg, progress=progress, experiment_logger=registro)
        report.checks += [
            check_no_failures(res),
            check_als_dominance(res),
            check_monotone_improvement(res),
            check_trace_monotone(res),
            _timed(check_determinism, cfg),
        ]
    elif preset == 'pde':
        report.checks += [
            _timed(check_adjoint_gradient, seed),
            _timed(check_adjoint_dense, seed),
        ]
        res = run_experiment(cfg, progress=progress, experiment_logger=registro)
        report.checks += [check_no_failures(res), *check_pde_shape(res), check_trace_monotone(res)]
        # varredura reduzida: a completa leva minutos
        reduzida = preset_config(preset, seed=seed, jobs=jobs, trials=2, k_values=[10, 90])
        report.checks.append(_timed(check_determinism, reduzida))
    elif preset == 'zmodel':
        report.checks += [
            _timed(check_z_model_consistency, seed),
            _timed(check_exact_recovery, seed),
        ]
        res = run_experiment(cfg, progress=progress, experiment_logger=registro)
        report.checks += [
            check_no_failures(res),
            check_trace_monotone(res),
            _timed(check_determinism, cfg),
        ]
    else:
        raise ValueError(f"Preset desconhecido: {preset!r}")

    for check in report.checks:
        registro.log_check(preset, check.name, check.passed, check.value, check.threshold)
        nivel = logging.INFO if check.passed else logging.WARNING
        logger.log(nivel, f"{'✅' if check.passed else '❌'} {check.name}: "
                          f"{check.value:.3e} (limite {check.threshold:.3e})")
    return report


def save_report(report: VerificationReport, directory: str = REPORT_DIR) -> str:
    """Grava o relatório em <directory>/verification_<preset>.json."""
    criar_diretorio(directory)
    caminho = os.path.join(directory, f"verification_{report.preset}.json")
    salvar_json(report.to_dict(), caminho)
    return caminho
