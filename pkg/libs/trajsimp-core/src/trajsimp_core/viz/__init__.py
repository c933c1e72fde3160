"""Interactive plotly charts for trajectory databases and simplification results."""

from .charts import create_f1_chart, create_loss_chart, create_simplification_map
from .styles import COLORS, IMPORTANCE_COLORSCALE

__all__ = [
    "COLORS",
    "IMPORTANCE_COLORSCALE",
    "create_f1_chart",
    "create_loss_chart",
    "create_simplification_map",
]
