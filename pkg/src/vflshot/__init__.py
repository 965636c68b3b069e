"""One-shot and few-shot vertical federated learning with exact communication accounting."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
