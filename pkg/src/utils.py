"""
===================================================================
ActiveSketch - Módulo de Utilitários
Funções auxiliares reutilizáveis em todo o projeto
===================================================================

Contém a hierarquia de exceções do projeto, persistência em JSON,
derivação determinística de sementes e formatação de saída.

Versão: 1.0.0
"""

import os
import json
import zlib
from typing import Any, Dict, Union

import numpy as np


# ===================================================================
# EXCEÇÕES
# ===================================================================

class ActiveSubspaceError(Exception):
    """Erro base de todas as operações do projeto."""


class CapabilityError(ActiveSubspaceError):
    """O modelo não oferece a capacidade pedida (ex.: gradiente exato)."""


class NumericalError(ActiveSubspaceError, ArithmeticError):
    """Falha numérica: sistema singular, solver ou autoproblema."""


class PreconditionError(ActiveSubspaceError, ValueError):
    """Pré-condição de uma operação violada (ex.: r >= k no ALS)."""


# ===================================================================
# ARQUIVOS
# ===================================================================

def criar_diretorio(caminho: str) -> None:
    """
    Cria diretório se não existir.

    Parâmetros:
    -----------
    caminho : str
        Caminho do diretório a criar
    """
    os.makedirs(caminho, exist_ok=True)


def _para_json(obj: Any) -> Any:
    """
    Converte recursivamente tipos NumPy para tipos nativos.

    Valores não finitos viram None (null no JSON).
    """
    if isinstance(obj, dict):
        return {chave: _para_json(v) for chave, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_para_json(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def salvar_json(dados: Dict, caminho: str) -> None:
    """
    Salva dados em formato JSON estrito.

    Parâmetros:
    -----------
    dados : dict
        Dados a salvar (arrays NumPy viram listas; NaN e inf viram null)
    caminho : str
        Caminho do arquivo
    """
    diretorio = os.path.dirname(caminho)
    if diretorio:
        criar_diretorio(diretorio)
    with open(caminho, 'w', encoding='utf-8') as f:
        json.dump(_para_json(dados), f, indent=4, ensure_ascii=False, allow_nan=False)


def carregar_json(caminho: str) -> Dict:
    """
    Carrega dados de arquivo JSON.

    Parâmetros:
    -----------
    caminho : str
        Caminho do arquivo

    Retorna:
    --------
    dict
        Dados carregados
    """
    with open(caminho, 'r', encoding='utf-8') as f:
        return json.load(f)


# ===================================================================
# SEMENTES
# ===================================================================

def derive_seed(master_seed: int, *keys: Union[int, str]) -> int:
    """
    Deriva uma semente filha estável a partir da semente mestre.

    Chaves textuais entram pelo CRC32 (estável entre execuções, ao
    contrário de ``hash``). A mistura usa ``numpy.random.SeedSequence``.

    Parâmetros:
    -----------
    master_seed : int
        Semente mestre do experimento
    keys : int | str
        Identificadores do fluxo (ex.: problema, k, trial)

    Retorna:
    --------
    int
        Semente filha de 32 bits
    """
    entropia = [int(master_seed)]
    for chave in keys:
        if isinstance(chave, str):
            entropia.append(zlib.crc32(chave.encode('utf-8')))
        else:
            entropia.append(int(chave))
    return int(np.random.SeedSequence(entropia).generate_state(1)[0])


# ===================================================================
# FORMATAÇÃO
# ===================================================================

def printar_separador(titulo: str = "", char: str = "=", largura: int = 70) -> None:
    """
    Imprime separador formatado.

    Parâmetros:
    -----------
    titulo : str
        Título a exibir
    char : str
        Caractere para o separador
    largura : int
        Largura do separador
    """
    if titulo:
        print(f"\n{char*largura}")
        print(f"{titulo.center(largura)}")
        print(f"{char*largura}\n")
    else:
        print(f"\n{char*largura}\n")
