"""Max-sum diffusion and the zero-temperature double-loop Bethe algorithm on discrete factor graphs."""

from .model import Hypergraph, MessageVector, Model, TildeTheta, evaluate
from .semiring import Temperature

__all__ = ["Hypergraph", "MessageVector", "Model", "TildeTheta", "Temperature", "evaluate"]
__version__ = "0.1.0"
