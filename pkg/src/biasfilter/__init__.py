"""Content-adaptive neural post-filtering with bias-only finetuning."""

__version__ = "0.1.0"
