"""AF-SMOTE: adversarially filtered synthetic minority oversampling.

Candidates are generated by a SMOTE-family sampler, scored for realism
(an adversarial discriminator) and boundary utility (distance of a pilot
scorer's probability to its decision threshold), and retained when the
fused score clears a threshold.  The package also ships calibration,
precision-floor thresholding, imbalance-aware metrics and inference, and
an experiment pipeline with a CLI.
"""

__version__ = "0.1.0"
