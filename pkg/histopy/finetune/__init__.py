"""Fine-tuning and feature extraction."""
from .train import (FineTuneConfig, finetune_step1, finetune_step2,  # noqa
                    finetune, pretrain, train_epochs, training_accuracy)
from .extract import (FeatureMatrix, extract_tile_features,  # noqa
                      tile_patient_map, aggregate_patient)
