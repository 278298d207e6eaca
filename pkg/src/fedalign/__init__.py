"""Desk-scale federated learning for classification with client-exclusive class sets.

Dual-encoder matching classifier, corpus-pretrained label-name embeddings,
percentile-based knowledge distillation for locally-unaware classes, per-class
model aggregation, plus FedAvg/FedProx/FedRS baselines and synthetic data
partitioners.
"""

__version__ = "0.1.0"
