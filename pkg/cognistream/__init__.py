"""
cognistream: schema-free cognition over raw binary streams
"""

from .stream_store import StreamStore, Segment, StreamWindow
from .pipeline import RunConfig, CognitionPipeline, run_cognition

__version__ = "0.1.0"

__all__ = ["StreamStore", "Segment", "StreamWindow", "RunConfig", "CognitionPipeline", "run_cognition"]
