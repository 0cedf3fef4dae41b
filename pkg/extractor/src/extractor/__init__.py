"""Embedding and prediction extraction for the transferability toolkit."""

from .extract import ExtractionSpec, extract, list_dataset
from .models import default_block_layers, load_model, pool_to_vectors, resolve_layers

__version__ = "0.1.0"
