"""Inference server wrapping a masked-autoencoder ViT behind the
patch-reconstruction oracle wire protocol."""

from .app import create_app
from .checkpoint import load_checkpoint, save_checkpoint, state_dict_digest
from .model import ARCHS, TINY_TEST, VIT_BASE_16, MaeConfig, MaskedAutoencoderViT, build_model
from .service import ReconstructionEngine

__all__ = [
    "ARCHS",
    "MaeConfig",
    "MaskedAutoencoderViT",
    "ReconstructionEngine",
    "TINY_TEST",
    "VIT_BASE_16",
    "build_model",
    "create_app",
    "load_checkpoint",
    "save_checkpoint",
    "state_dict_digest",
]

__version__ = "0.1.0"
