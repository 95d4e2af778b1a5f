"""Figure rendering for qmpc metrics CSVs.

Consumes only the documented CSV schema; never imports the experiment
code. Aggregation is exposed as plain data so tests can check the
numbers behind every plotted line.
"""

from .curves import (AggregatedCurve, CurveSpec, RenderResult, aggregate_group,
                     load_rows, render_curves, render_success_table,
                     smooth_trailing)

__all__ = [
    "AggregatedCurve",
    "CurveSpec",
    "RenderResult",
    "aggregate_group",
    "load_rows",
    "render_curves",
    "render_success_table",
    "smooth_trailing",
]
