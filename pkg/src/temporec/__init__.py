"""Time-aware mixture-of-experts engine for multi-modal sequential
recommendation: desk-scale training, full-catalog evaluation, and a
scikit-learn style estimator facade."""

from .config import RunConfig
from .estimator import MoESequenceRecommender

__version__ = "0.1.0"
__all__ = ["MoESequenceRecommender", "RunConfig", "__version__"]
