"""
Testes do Runner de Experimentos

Configuração, execução das células (k, trial), emissão CSV/JSON,
determinismo, reexecução e captura de falhas.
"""

import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

# Add root to path
ROOT_DIR = Path(__file__).parent
sys.path.append(str(ROOT_DIR))

import src.harness as harness
from src.experiment_logger import ExperimentLogger
from src.harness import (
    DETAIL_COLUMNS,
    SUMMARY_COLUMNS,
    compare_with_recorded,
    emit_detail,
    emit_results,
    preset_config,
    replay_experiment,
    run_experiment,
)
from src.schemas import ExperimentConfig
from src.utils import NumericalError, carregar_json, derive_seed


@pytest.fixture
def registro(tmp_path):
    return ExperimentLogger(log_dir=tmp_path / "logs", run_id="teste")


@pytest.fixture
def quadratica_curta(registro):
    cfg = preset_config('quadratic', trials=2, als={'max_iterations': 30})
    return run_experiment(cfg, experiment_logger=registro)


# ===================================================================
# CONFIGURAÇÃO
# ===================================================================

def test_presets():
    quad = preset_config('quadratic')
    assert (quad.m, quad.samples, quad.rank, quad.n, quad.trials) == (10, 200, 4, 3, 20)
    assert quad.k_values == [4, 5, 6, 7, 8, 9]

    pde = preset_config('pde')
    assert (pde.m, pde.samples, pde.rank, pde.n, pde.detail_k) == (100, 300, 8, 1, 70)
    assert pde.k_values == [10, 30, 50, 70, 90]

    z = preset_config('zmodel', seed=5)
    assert z.sigmas == [1.0, 0.7, 0.4] and z.seed == 5


def test_sobrescritas_de_preset():
    cfg = preset_config('quadratic', k_values=[5, 6], trials=3, rank=None)
    assert cfg.k_values == [5, 6]
    assert cfg.trials == 3 and cfg.rank == 4
    assert cfg.detail_k is None


def test_configuracoes_invalidas():
    with pytest.raises(ValueError):
        preset_config('cubic')
    with pytest.raises(ValidationError):
        preset_config('quadratic', k_values=[4])          # k <= r
    with pytest.raises(ValidationError):
        preset_config('quadratic', k_values=[11])         # k > m
    with pytest.raises(ValidationError):
        preset_config('quadratic', n=5)                   # n > r
    with pytest.raises(ValidationError):
        preset_config('quadratic', trials=0)
    with pytest.raises(ValidationError):
        preset_config('zmodel', mode='fd')
    with pytest.raises(ValidationError):
        preset_config('quadratic', seed=-1)
    with pytest.raises(ValidationError):
        preset_config('quadratic', als={'shrinkage': -1.0})
    with pytest.raises(ValidationError):
        ExperimentConfig(problem='quadratic', m=10, samples=10, rank=2, n=1, unknown=1)


def test_posto_alto_valida_em_silencio(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = preset_config('pde', rank=12, k_values=[30, 50])
    assert cfg.rank == 12
    assert caplog.records == []


# ===================================================================
# EXECUÇÃO
# ===================================================================

def test_resumo_quadratica(quadratica_curta):
    """Preset quadrático: 12 linhas (6 valores de k x 2 métodos)."""
    tabela = quadratica_curta.summary_frame()

    assert list(tabela.columns) == SUMMARY_COLUMNS
    assert len(tabela) == 12
    assert set(tabela['method']) == {'projection', 'als'}
    assert (tabela['trials'] == 2).all()

    definidas = tabela[(tabela['method'] == 'projection') | (tabela['k'] > 4)]
    assert np.isfinite(definidas['subspace_error_mean']).all()
    assert np.isfinite(definidas['eigenvalue_error_mean']).all()


def test_medias_sao_medias_das_tentativas(quadratica_curta):
    tabela = quadratica_curta.summary_frame().set_index(['method', 'k'])
    for k in (5, 9):
        celulas = quadratica_curta.cells_for(k)
        esperado = np.mean([c.als.subspace_error for c in celulas])
        assert tabela.loc[('als', k), 'subspace_error_mean'] == pytest.approx(esperado, rel=1e-15)


def test_celulas_ordenadas_com_sementes_distintas(quadratica_curta):
    chaves = [(c.k, c.trial) for c in quadratica_curta.cells]
    assert chaves == sorted(chaves)
    sementes = [c.seed for c in quadratica_curta.cells]
    assert len(set(sementes)) == len(sementes)
    assert sementes[0] == derive_seed(0, 'quadratic', 4, 0)


def test_erros_de_subespaco_por_dimensao(quadratica_curta):
    celula = quadratica_curta.cells_for(7)[0]
    assert len(celula.projection.subspace_errors_n) == 6
    # ALS de posto 4: dimensões 5 e 6 indefinidas
    assert np.all(np.isnan(celula.als.subspace_errors_n[4:]))
    assert celula.als.subspace_error == pytest.approx(celula.als.subspace_errors_n[2])


def test_k_ate_o_posto_so_projecao(quadratica_curta):
    """k = r = 4: o ALS não roda, a projeção sim."""
    for celula in quadratica_curta.cells_for(4):
        assert celula.ok
        assert np.isfinite(celula.projection.subspace_error)
        assert np.isnan(celula.als.subspace_error)
        assert np.all(np.isnan(celula.als.eigenvalues))
        assert celula.als_trace == [] and celula.als_iterations == 0


def test_als_nao_perde_para_projecao(registro):
    """Varredura quadrática reduzida: ALS <= projeção + 0.02 em todo k > r."""
    cfg = preset_config('quadratic', k_values=[5, 7, 9], trials=5)
    assert cfg.als.shrinkage > 0
    res = run_experiment(cfg, experiment_logger=registro)
    assert not res.failures

    tabela = res.summary_frame().set_index(['method', 'k'])['subspace_error_mean']
    for k in (5, 7, 9):
        assert tabela[('als', k)] <= tabela[('projection', k)] + 0.02, (k, tabela.to_dict())


def test_als_sem_massa_espuria(registro):
    """O valor singular líder do ALS fica perto do da referência."""
    cfg = preset_config('quadratic', k_values=[5], trials=3)
    res = run_experiment(cfg, experiment_logger=registro)
    lider = res.reference_eigenvalues[0]
    for celula in res.cells:
        assert celula.als.eigenvalues[0] == pytest.approx(lider, rel=0.25)


def test_medicao_completa_projecao_exata(registro):
    """T = 1, k = m: a projeção reproduz a referência."""
    cfg = preset_config('quadratic', k_values=[10], trials=1)
    celula = run_experiment(cfg, experiment_logger=registro).cells[0]
    assert celula.ok
    assert celula.projection.subspace_error <= 1e-8
    assert celula.projection.eigenvalue_error <= 1e-8


def test_paralelo_igual_a_serial(tmp_path, registro):
    cfg = preset_config('quadratic', k_values=[5, 8], trials=2, als={'max_iterations': 20})
    serial = emit_results(run_experiment(cfg, experiment_logger=registro), 'csv',
                          str(tmp_path / "serial.csv"))
    paralelo = emit_results(
        run_experiment(cfg.model_copy(update={'jobs': 2}), experiment_logger=registro),
        'csv', str(tmp_path / "paralelo.csv"),
    )
    assert Path(serial).read_bytes() == Path(paralelo).read_bytes()


def test_modo_diferencas_finitas(registro):
    cfg = preset_config('quadratic', k_values=[6], trials=1, mode='fd', samples=50)
    exato = run_experiment(cfg.model_copy(update={'mode': 'exact'}), experiment_logger=registro)
    fd = run_experiment(cfg, experiment_logger=registro)

    assert fd.cells[0].evaluations == 50 * (6 + 1)
    assert exato.cells[0].evaluations == 0
    assert fd.cells[0].projection.subspace_error == pytest.approx(
        exato.cells[0].projection.subspace_error, abs=1e-3
    )


def test_z_model(registro):
    cfg = preset_config('zmodel', k_values=[5], trials=2, samples=300)
    res = run_experiment(cfg, experiment_logger=registro)
    assert not res.failures
    assert res.cells[0].als.subspace_error < 0.5


def test_falha_de_celula_nao_aborta(monkeypatch, registro):
    def falha(ms):
        raise NumericalError("E^T E singular")

    monkeypatch.setattr(harness, 'estimate_c_projection', falha)
    cfg = preset_config('quadratic', k_values=[5], trials=3)
    res = run_experiment(cfg, experiment_logger=registro)

    assert len(res.failures) == 3
    assert all('NumericalError' in c.reason for c in res.failures)
    tabela = res.summary_frame()
    assert (tabela['trials'] == 0).all()
    assert tabela['subspace_error_mean'].isna().all()


def test_log_estruturado(quadratica_curta, registro):
    linhas = (registro.log_dir / "experiments.log").read_text(encoding='utf-8').splitlines()
    eventos = [json.loads(linha.split(' | ', 2)[2])['event'] for linha in linhas]
    assert eventos[0] == 'reference_built'
    assert eventos.count('cell_completed') == 12
    assert eventos[-1] == 'experiment_summary'


# ===================================================================
# EMISSÃO
# ===================================================================

def test_csv_cabecalho_e_linhas(tmp_path, quadratica_curta):
    caminho = emit_results(quadratica_curta, 'csv', str(tmp_path / "out" / "q.csv"))
    linhas = Path(caminho).read_text().splitlines()
    assert linhas[0] == ",".join(SUMMARY_COLUMNS)
    assert len(linhas) == 13
    assert linhas[1].startswith("quadratic,projection,4,4,3,2,")
    # ALS indefinido em k = r: campos vazios
    assert linhas[2] == "quadratic,als,4,4,3,2" + "," * 8


def test_csv_lista_de_k_vazia(tmp_path, registro):
    cfg = preset_config('quadratic', k_values=[])
    res = run_experiment(cfg, experiment_logger=registro)
    caminho = emit_results(res, 'csv', str(tmp_path / "vazio.csv"))
    assert Path(caminho).read_text().splitlines() == [",".join(SUMMARY_COLUMNS)]


def test_csv_deterministico(tmp_path, registro):
    cfg = preset_config('quadratic', k_values=[5, 9], trials=2, seed=11)
    a = emit_results(run_experiment(cfg, experiment_logger=registro), 'csv', str(tmp_path / "a.csv"))
    b = emit_results(run_experiment(cfg, experiment_logger=registro), 'csv', str(tmp_path / "b.csv"))
    assert Path(a).read_bytes() == Path(b).read_bytes()


def test_csv_detalhe(tmp_path, quadratica_curta):
    caminho = emit_detail(quadratica_curta, str(tmp_path / "detalhe.csv"))
    tabela = pd.read_csv(caminho)
    assert list(tabela.columns) == DETAIL_COLUMNS
    assert len(tabela) == 12
    assert (tabela['k'] == 7).all()

    als = tabela[tabela['method'] == 'als'].set_index('index')
    assert als.loc[[5, 6], 'estimate_mean'].isna().all()
    assert (als.loc[[1, 2, 3, 4], 'estimate_min'] <= als.loc[[1, 2, 3, 4], 'estimate_max']).all()


def test_caminho_nao_gravavel(tmp_path, quadratica_curta):
    with pytest.raises(OSError):
        emit_results(quadratica_curta, 'csv', str(tmp_path))
    with pytest.raises(ValueError):
        emit_results(quadratica_curta, 'xml', str(tmp_path / "q.xml"))


def test_json_e_reexecucao(tmp_path, registro):
    cfg = preset_config('quadratic', k_values=[6], trials=2, seed=3)
    res = run_experiment(cfg, experiment_logger=registro)
    caminho = emit_results(res, 'json', str(tmp_path / "q.json"))

    dados = carregar_json(caminho)
    assert dados['config']['seed'] == 3
    assert [c['seed'] for c in dados['cells']] == [c.seed for c in res.cells]
    assert 'timings' not in dados
    assert 'elapsed_s' not in dados['cells'][0]

    reexecutado = replay_experiment(caminho)
    assert compare_with_recorded(reexecutado, dados) == []


def test_json_estrito_com_celulas_indefinidas(tmp_path, quadratica_curta):
    """ALS indefinido em k = r sai como null, sem tokens NaN."""
    caminho = emit_results(quadratica_curta, 'json', str(tmp_path / "q.json"))
    texto = Path(caminho).read_text(encoding='utf-8')

    def rejeitar(token):
        raise ValueError(f"token não padrão: {token}")

    dados = json.loads(texto, parse_constant=rejeitar)
    celula = next(c for c in dados['cells'] if c['k'] == 4)
    assert celula['als']['subspace_error'] is None
    assert celula['als']['eigenvalues'] == [None] * 6
    assert compare_with_recorded(quadratica_curta, dados) == []


def test_json_com_sementes_adulteradas(tmp_path, registro):
    cfg = preset_config('quadratic', k_values=[6], trials=1)
    caminho = emit_results(run_experiment(cfg, experiment_logger=registro), 'json',
                           str(tmp_path / "q.json"))
    dados = carregar_json(caminho)
    dados['cells'][0]['seed'] += 1
    Path(caminho).write_text(json.dumps(dados))

    with pytest.raises(Exception, match="Semente gravada"):
        replay_experiment(caminho)


def test_json_com_tempos(tmp_path, quadratica_curta):
    caminho = emit_results(quadratica_curta, 'json', str(tmp_path / "t.json"), include_timings=True)
    dados = carregar_json(caminho)
    assert set(dados['timings']) == {'reference_s', 'cells_s', 'total_s'}
    assert 'elapsed_s' in dados['cells'][0]
