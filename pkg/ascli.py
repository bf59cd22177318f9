#!/usr/bin/env python3
"""
ascli - Linha de comando dos experimentos de subespaço ativo

Subcomandos:
    run     Executa uma varredura em k e grava resumo (CSV/JSON) e detalhe
    verify  Executa a suíte de aceitação de um preset
    replay  Reexecuta um experimento gravado em JSON e compara os números

Exemplos:
    python ascli.py run --preset quadratic --out results/
    python ascli.py run --preset pde --k 10,50,90 --trials 5 --jobs 4
    python ascli.py run --config experimento.env --seed 7
    python ascli.py verify --preset quadratic
    python ascli.py replay results/quadratic_summary.json

Códigos de saída: 0 sucesso, 1 falha de execução ou verificação,
2 configuração inválida.
"""

import argparse
import logging
import os
import sys
from datetime import datetime
from typing import Dict, List, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from src.harness import (
    PRESETS,
    compare_with_recorded,
    emit_detail,
    emit_results,
    preset_config,
    replay_experiment,
    run_experiment,
)
from src.utils import ActiveSubspaceError, carregar_json, printar_separador
from src.verification import REPORT_DIR, run_verification, save_report


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

DEFAULT_OUT = "results"

# Chaves aceitas no arquivo de configuração e seus conversores
CONFIG_KEYS = {
    'preset': str,
    'trials': int,
    'seed': int,
    'k': str,
    'rank': int,
    'n': int,
    'mode': str,
    'h': float,
    'format': str,
    'out': str,
    'jobs': int,
    'max_iter': int,
    'tol': float,
    'ridge': float,
    'shrinkage': float,
    'samples': int,
}


def parse_k_list(texto: str) -> List[int]:
    """'4,5,6' -> [4, 5, 6]; texto vazio -> []."""
    texto = texto.strip()
    if not texto:
        return []
    try:
        return [int(parte) for parte in texto.split(',') if parte.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Lista de k inválida: {texto!r}")


def load_config_file(caminho: str) -> Dict:
    """
    Lê um arquivo chave=valor (formato .env).

    Raises:
        FileNotFoundError: Arquivo inexistente
        ValueError: Chave desconhecida ou valor não convertível
    """
    if not os.path.exists(caminho):
        raise FileNotFoundError(f"Arquivo de configuração não encontrado: {caminho}")

    valores = {}
    for chave, bruto in dotenv_values(caminho).items():
        chave = chave.strip().lower()
        if chave not in CONFIG_KEYS:
            raise ValueError(
                f"Chave desconhecida no arquivo de configuração: {chave!r}. "
                f"Aceitas: {', '.join(sorted(CONFIG_KEYS))}"
            )
        if bruto is None or bruto == '':
            continue
        try:
            valores[chave] = CONFIG_KEYS[chave](bruto)
        except ValueError:
            raise ValueError(f"Valor inválido para {chave!r}: {bruto!r}")
    return valores


def merge_settings(args: argparse.Namespace) -> Dict:
    """Valores do arquivo de configuração sobrescritos pelas flags da CLI."""
    valores = load_config_file(args.config) if args.config else {}
    for chave in CONFIG_KEYS:
        flag = getattr(args, chave, None)
        if flag is not None:
            valores[chave] = flag
    if isinstance(valores.get('k'), str):
        valores['k'] = parse_k_list(valores['k'])
    return valores


def build_config(valores: Dict):
    """Converte as opções mescladas em ExperimentConfig."""
    preset = valores.get('preset')
    if preset is None:
        raise ValueError(f"Informe --preset ({'|'.join(PRESETS)}) ou 'preset' no arquivo")

    als = None
    if any(chave in valores for chave in ('max_iter', 'tol', 'ridge', 'shrinkage')):
        als = {}
        if 'max_iter' in valores:
            als['max_iterations'] = valores['max_iter']
        if 'tol' in valores:
            als['tolerance'] = valores['tol']
        if 'ridge' in valores:
            als['ridge'] = valores['ridge']
        if 'shrinkage' in valores:
            als['shrinkage'] = valores['shrinkage']

    return preset_config(
        preset,
        trials=valores.get('trials'),
        seed=valores.get('seed'),
        k_values=valores.get('k'),
        rank=valores.get('rank'),
        n=valores.get('n'),
        mode=valores.get('mode'),
        step=valores.get('h'),
        samples=valores.get('samples'),
        jobs=valores.get('jobs'),
        als=als,
    )


# ===================================================================
# SUBCOMANDOS
# ===================================================================

def cmd_run(args: argparse.Namespace) -> int:
    try:
        valores = merge_settings(args)
        cfg = build_config(valores)
    except (ValidationError, ValueError, FileNotFoundError, argparse.ArgumentTypeError) as e:
        print(f"❌ Configuração inválida:\n{e}", file=sys.stderr)
        return EXIT_CONFIG

    formato = valores.get('format', 'csv')
    if formato not in ('csv', 'json'):
        print(f"❌ Formato inválido: {formato!r} (use csv ou json)", file=sys.stderr)
        return EXIT_CONFIG
    saida = valores.get('out', DEFAULT_OUT)

    printar_separador(f"ascli run: {cfg.problem}")
    print(f"Horário: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"m={cfg.m}, M={cfg.samples}, k={cfg.k_values}, r={cfg.rank}, n={cfg.n}, "
          f"T={cfg.trials}, modo={cfg.mode}, semente={cfg.seed}")

    resultado = run_experiment(cfg, progress=True)

    try:
        caminho = emit_results(resultado, formato, os.path.join(saida, f"{cfg.problem}_summary.{formato}"))
        print(f"\n💾 Resumo salvo em: {caminho}")
        if cfg.detail_k is not None:
            caminho = emit_detail(resultado, os.path.join(saida, f"{cfg.problem}_detail.csv"))
            print(f"💾 Detalhe (k={cfg.detail_k}) salvo em: {caminho}")
    except OSError as e:
        print(f"❌ Erro ao gravar resultados: {e}", file=sys.stderr)
        return EXIT_FAILURE

    tabela = resultado.summary_frame()
    if not tabela.empty:
        print()
        print(tabela[['method', 'k', 'trials', 'eigenvalue_error_mean', 'subspace_error_mean']]
              .to_string(index=False, float_format=lambda v: f"{v:.3e}"))

    falhas = resultado.failures
    if falhas:
        print(f"\n⚠️  {len(falhas)} de {len(resultado.cells)} células falharam. Primeira: "
              f"k={falhas[0].k}, trial={falhas[0].trial}: {falhas[0].reason}", file=sys.stderr)
        if len(falhas) == len(resultado.cells):
            return EXIT_FAILURE

    print("\n✅ Execução concluída")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    printar_separador(f"ascli verify: {args.preset}")
    try:
        relatorio = run_verification(args.preset, seed=args.seed or 0,
                                     jobs=args.jobs or 1, progress=True)
    except (ValidationError, ValueError) as e:
        print(f"❌ Configuração inválida:\n{e}", file=sys.stderr)
        return EXIT_CONFIG

    for check in relatorio.checks:
        marca = '✅' if check.passed else '❌'
        print(f"{marca} {check.name:<28} valor={check.value:.3e}  limite={check.threshold:.3e}  "
              f"({check.elapsed_s:.1f}s)")
        if not check.passed and check.detail:
            print(f"     {check.detail}")

    caminho = save_report(relatorio, args.report_dir)
    print(f"\n💾 Relatório salvo em: {caminho}")

    if relatorio.passed:
        print("✅ Todas as verificações passaram")
        return EXIT_OK
    print(f"❌ {len(relatorio.failed)} verificação(ões) falharam", file=sys.stderr)
    return EXIT_FAILURE


def cmd_replay(args: argparse.Namespace) -> int:
    printar_separador(f"ascli replay: {args.json_path}")
    try:
        gravado = carregar_json(args.json_path)
        resultado = replay_experiment(args.json_path, jobs=args.jobs, progress=True)
    except (OSError, KeyError, ValidationError, ValueError, ActiveSubspaceError) as e:
        print(f"❌ Não foi possível reexecutar: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.out:
        caminho = emit_results(resultado, 'json', args.out)
        print(f"💾 Resultado salvo em: {caminho}")

    divergentes = compare_with_recorded(resultado, gravado)
    if divergentes:
        print(f"❌ {len(divergentes)} células divergentes: {', '.join(divergentes[:5])}",
              file=sys.stderr)
        return EXIT_FAILURE

    print(f"✅ {len(resultado.cells)} células reproduzidas exatamente")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ascli',
        description='Estimativa de subespaços ativos a partir de sketches do gradiente'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Executa uma varredura em k')
    run.add_argument('--config', type=str, help='Arquivo chave=valor com as opções')
    run.add_argument('--preset', choices=sorted(PRESETS), help='Problema/preset')
    run.add_argument('--out', type=str, help=f'Diretório de saída (padrão: {DEFAULT_OUT}/)')
    run.add_argument('--trials', type=int, help='Tentativas por k (padrão: 20)')
    run.add_argument('--seed', type=int, help='Semente mestre (padrão: 0)')
    run.add_argument('--k', type=parse_k_list, help='Lista de k, ex.: 4,5,6')
    run.add_argument('--rank', type=int, help='Posto r do ALS')
    run.add_argument('--n', type=int, help='Dimensão do subespaço ativo avaliado')
    run.add_argument('--samples', type=int, help='Número M de gradientes')
    run.add_argument('--mode', choices=['exact', 'fd'], help='Medições exatas ou por diferenças finitas')
    run.add_argument('--h', type=float, help='Passo das diferenças finitas')
    run.add_argument('--format', choices=['csv', 'json'], help='Formato do resumo (padrão: csv)')
    run.add_argument('--jobs', type=int, help='Processos paralelos (-1 = todos)')
    run.add_argument('--max-iter', dest='max_iter', type=int, help='Máximo de iterações do ALS')
    run.add_argument('--tol', type=float, help='Tolerância relativa do ALS')
    run.add_argument('--ridge', type=float, help='Penalidade absoluta nos fatores do ALS')
    run.add_argument('--shrinkage', type=float,
                     help='Penalidade relativa nos fatores do ALS (padrão: 1e-2)')
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser('verify', help='Executa a suíte de aceitação')
    verify.add_argument('--preset', choices=sorted(PRESETS), required=True)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--jobs', type=int, default=1)
    verify.add_argument('--report-dir', dest='report_dir', default=REPORT_DIR,
                        help=f'Diretório do relatório (padrão: {REPORT_DIR})')
    verify.set_defaults(func=cmd_verify)

    replay = sub.add_parser('replay', help='Reexecuta um experimento gravado em JSON')
    replay.add_argument('json_path', type=str)
    replay.add_argument('--jobs', type=int, default=None)
    replay.add_argument('--out', type=str, default=None, help='Grava o JSON reexecutado')
    replay.set_defaults(func=cmd_replay)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Função principal da CLI."""
    logging.basicConfig(level=logging.WARNING,
                        format='%(asctime)s | %(levelname)s | %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
