"""
Evaluation Module for GroundKit
Metrics, trial statistics, report generation and plots
"""

from .metrics import TextPair, dice_score, accuracy, bleu, meteor_precision, meteor_standard, rouge_l
from .stats import TrialSet, trial_range, format_cell, paired_t_test, compare_trials
from .reports import MetricReport, ReportGenerator

__all__ = [
    'TextPair',
    'dice_score',
    'accuracy',
    'bleu',
    'meteor_precision',
    'meteor_standard',
    'rouge_l',
    'TrialSet',
    'trial_range',
    'format_cell',
    'paired_t_test',
    'compare_trials',
    'MetricReport',
    'ReportGenerator',
]
