"""Reference bridge from causal language models to the hcedit logprob
wire format: batch export to JSON Lines and a minimal HTTP provider."""

from .export import ExportError, ExportJob, export
from .models import ModelError, load_model
from .ngram import NgramModel, bundled_corpus_path, tokenize
from .server import make_server, serve

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportJob",
    "ModelError",
    "NgramModel",
    "bundled_corpus_path",
    "export",
    "load_model",
    "make_server",
    "serve",
    "tokenize",
]
