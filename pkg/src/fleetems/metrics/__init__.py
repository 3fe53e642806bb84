from .report import MetricsAccumulator, MetricsReport, aggregate

__all__ = ["MetricsAccumulator", "MetricsReport", "aggregate"]
