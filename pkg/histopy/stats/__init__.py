"""Cross-validation plans, metrics and reports."""
from .folds import FoldPlan, make_fold_plan  # noqa
from .metrics import (accuracy_and_confusion, per_class_accuracy,  # noqa
                      pearson, correlation_p_value, auc,
                      wilcoxon_signed_rank, paired_ttest, paired_compare,
                      count_improved_genes)
from .report import CVReport  # noqa
