"""Online continual learning of toy encoder-decoder sequence models.

Implements online weight averaging with separate encoder/decoder schedules and
knowledge-distillation regularization (AOS), five baselines (FT, ER, O-GEM,
UOE, EWC), a synthetic accent/speaker task stream, and an evaluation harness.
"""

__version__ = "0.1.0"
