"""
Histopy
=======

Two-step fine-tuning of histopathology feature extractors and repeated
cross-validation of downstream tissue, expression and mutation predictors.
"""
import logging

from histopy import (io, stain, tiling, nn, finetune, models, stats,  # noqa
                     utils)

__version__ = "0.1.0"

# -----------------------------------------------------------------------------
# Set 'info' as the default logging level
logger = logging.getLogger('histopy')
io.set_log_level('info')
