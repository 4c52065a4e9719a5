"""Transactional graph storage built on per-vertex edge logs."""
from .engine import Engine, EngineConfig, Transaction
from .txn import (DurabilityError, LockTimeout, NotFound, StaleSnapshot,
                  TransactionAborted, TransactionError, UsageError)

__all__ = ["Engine", "EngineConfig", "Transaction", "DurabilityError", "LockTimeout",
           "NotFound", "StaleSnapshot", "TransactionAborted", "TransactionError",
           "UsageError"]
