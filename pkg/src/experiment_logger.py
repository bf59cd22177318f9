"""
Sistema de Logging Estruturado para Experimentos

Registra cada evento de uma execução como JSON em uma linha:
referência construída, células (k, trial) concluídas ou com falha,
resumo final e verificações de aceitação.
"""

import json
import logging
import os
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from dotenv import load_dotenv


load_dotenv()

# Diretório de logs (sobrescrito por ASCLI_LOG_DIR)
LOGS_DIR = Path(os.getenv("ASCLI_LOG_DIR", Path(__file__).parent.parent / "logs"))
LOG_FILE_NAME = "experiments.log"


def _nativo(valor: Any) -> Any:
    if isinstance(valor, np.ndarray):
        return valor.tolist()
    if isinstance(valor, np.generic):
        return valor.item()
    return str(valor)


class ExperimentLogger:
    """
    Logger especializado para execuções de experimentos.

    Registra:
    - Identificador da execução (run_id)
    - Autovalores de referência e tempo de construção
    - Resultado ou falha de cada célula (k, trial) com a semente usada
    - Resumo por k e método
    """

    def __init__(self, log_dir: Optional[Path] = None, run_id: Optional[str] = None):
        """
        Inicializa o logger de experimentos.

        Args:
            log_dir: Diretório do arquivo de log (padrão: LOGS_DIR)
            run_id: Identificador da execução (gerado se não fornecido)
        """
        self.log_dir = Path(log_dir) if log_dir is not None else LOGS_DIR
        self.run_id = run_id or str(uuid.uuid4())[:8]
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """
        Configura o logger com formato estruturado.

        Returns:
            Logger configurado
        """
        self.log_dir.mkdir(parents=True, exist_ok=True)

        logger = logging.getLogger("experiment_logger")
        logger.setLevel(logging.INFO)
        logger.propagate = False

        # Remove handlers existentes para evitar duplicação
        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        file_handler = logging.FileHandler(self.log_dir / LOG_FILE_NAME, encoding='utf-8')
        file_handler.setLevel(logging.INFO)

        # No terminal só aparecem falhas; o progresso fica com o tqdm
        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(logging.WARNING)

        formatter = logging.Formatter(
            '%(asctime)s | %(levelname)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        file_handler.setFormatter(formatter)
        stream_handler.setFormatter(formatter)

        logger.addHandler(file_handler)
        logger.addHandler(stream_handler)

        return logger

    def _emit(self, level: int, event: str, **campos) -> Dict[str, Any]:
        log_entry = {
            "run_id": self.run_id,
            "timestamp": datetime.now().isoformat(),
            "event": event,
            **campos,
        }
        self.logger.log(level, json.dumps(log_entry, ensure_ascii=False, default=_nativo))
        return log_entry

    def log_reference(self, problem: str, eigenvalues: np.ndarray, elapsed_s: float) -> None:
        """
        Registra a construção da estimativa de referência.

        Args:
            problem: Nome do problema
            eigenvalues: Primeiros autovalores de referência
            elapsed_s: Tempo de construção em segundos
        """
        self._emit(logging.INFO, "reference_built",
                   problem=problem,
                   eigenvalues=np.asarray(eigenvalues)[:6],
                   elapsed_s=float(elapsed_s))

    def log_cell(self, cell) -> None:
        """Registra uma célula (k, trial) concluída."""
        self._emit(logging.INFO, "cell_completed",
                   k=cell.k,
                   trial=cell.trial,
                   seed=cell.seed,
                   projection_subspace_error=cell.projection.subspace_error,
                   als_subspace_error=cell.als.subspace_error,
                   als_iterations=cell.als_iterations,
                   als_converged=cell.als_converged,
                   elapsed_s=cell.elapsed_s)

    def log_cell_failure(self, cell) -> None:
        """Registra uma célula que falhou (a execução continua)."""
        self._emit(logging.WARNING, "cell_failed",
                   k=cell.k,
                   trial=cell.trial,
                   seed=cell.seed,
                   error=cell.reason,
                   status="error")

    def log_summary(self, problem: str, n_cells: int, n_failed: int, elapsed_s: float) -> None:
        self._emit(logging.INFO, "experiment_summary",
                   problem=problem,
                   cells=n_cells,
                   failed=n_failed,
                   success_rate=(n_cells - n_failed) / n_cells if n_cells else 0.0,
                   elapsed_s=float(elapsed_s))

    def log_check(self, preset: str, name: str, passed: bool, value: float,
                  threshold: float) -> None:
        """
        Registra o resultado de uma verificação de aceitação.

        Args:
            preset: Preset verificado
            name: Nome da verificação
            passed: Se a verificação passou
            value: Valor medido
            threshold: Limite usado
        """
        level = logging.INFO if passed else logging.WARNING
        self._emit(level, "verification_check",
                   preset=preset,
                   check=name,
                   passed=bool(passed),
                   value=value,
                   threshold=threshold)


# Instância global (criada sob demanda)
_experiment_logger: Optional[ExperimentLogger] = None


def get_experiment_logger() -> ExperimentLogger:
    """
    Obtém instância do logger de experimentos.

    Returns:
        ExperimentLogger instance
    """
    global _experiment_logger
    if _experiment_logger is None:
        _experiment_logger = ExperimentLogger()
    return _experiment_logger
