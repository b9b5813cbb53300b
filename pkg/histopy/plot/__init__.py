"""Plotting functions."""
from .plt_report import (plot_report, plot_metric_bars, plot_per_class,  # noqa
                         plot_correlation_delta, plot_scatter, plot_gene_auc)
