"""Region-structured long-horizon memory engine for conversational agents."""

from .config import EngineConfig, load_config
from .engine import Engine, IngestResult, parse_turn
from .hippocampus import Turn
from .retrieval import EvidenceBundle, FusedResult, RankedList, fuse_rrf
from .substrate import Substrate
from .timestamps import Granularity, TemporalRelation, Timestamp

__all__ = [
    "Engine", "EngineConfig", "EvidenceBundle", "FusedResult", "Granularity", "IngestResult",
    "RankedList", "Substrate", "TemporalRelation", "Timestamp", "Turn", "fuse_rrf", "load_config",
    "parse_turn",
]
__version__ = "0.1.0"
