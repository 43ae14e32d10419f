"""Pretrained speech-model backends.

wavlm / w2v2 run through transformers with mean pooling over the final
hidden layer's frames; imagebind would use its native clip-level audio
embedding but has no installable runtime here, so it reports the download
instructions.  ``FakeBackend`` is a deterministic stand-in with the right
dimensions for pipeline dry-runs and tests (``--backend fake``).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .spans import AudioClip

MODEL_DIMS = {"w2v2": 768, "wavlm": 1024, "imagebind": 1024}

HF_MODEL_IDS = {
    "w2v2": "facebook/wav2vec2-base-960h",
    "wavlm": "microsoft/wavlm-large",
}


class ModelAssetsError(RuntimeError):
    """Raised when a pretrained model cannot be loaded."""


class FakeBackend:
    """Deterministic pseudo-embeddings keyed on the clip contents."""

    def __init__(self, model: str):
        if model not in MODEL_DIMS:
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        self.dim = MODEL_DIMS[model]

    def embed(self, clip: AudioClip) -> np.ndarray:
        digest = hashlib.sha256(
            self.model.encode() + np.asarray(clip.samples, dtype=np.float64).tobytes()
        ).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)


class TransformersBackend:
    """Final-hidden-layer frame embeddings, mean-pooled over time."""

    def __init__(self, model: str):
        if model not in HF_MODEL_IDS:
            raise ModelAssetsError(
                f"no transformers runtime for {model!r}; the imagebind "
                "backend needs the upstream imagebind package and its "
                "released audio checkpoint (see its repository for "
                "download instructions)"
            )
        self.model = model
        self.dim = MODEL_DIMS[model]
        model_id = HF_MODEL_IDS[model]
        try:
            import torch
            from transformers import AutoFeatureExtractor, AutoModel

            self._torch = torch
            self._extractor = AutoFeatureExtractor.from_pretrained(model_id)
            self._net = AutoModel.from_pretrained(model_id)
            self._net.eval()
        except Exception as exc:
            raise ModelAssetsError(
                f"cannot load {model_id!r}: {exc}. Install the model "
                f"dependencies (pip install 'embed-extract[models]') and "
                f"download the checkpoint, e.g. "
                f"`huggingface-cli download {model_id}`."
            ) from exc

    def embed(self, clip: AudioClip) -> np.ndarray:
        torch = self._torch
        inputs = self._extractor(
            clip.samples, sampling_rate=clip.sample_rate, return_tensors="pt"
        )
        with torch.no_grad():
            hidden = self._net(**inputs).last_hidden_state
        vec = hidden.mean(dim=1).squeeze(0).numpy().astype(float)
        if vec.shape != (self.dim,):
            raise ModelAssetsError(
                f"{self.model}: expected dim {self.dim}, got {vec.shape}"
            )
        return vec


_CACHE: dict[tuple[str, str], object] = {}


def get_backend(model: str, kind: str = "auto"):
    """kind: "auto" loads the real model, "fake" the deterministic stub."""
    key = (model, kind)
    if key not in _CACHE:
        if kind == "fake":
            _CACHE[key] = FakeBackend(model)
        elif kind == "auto":
            _CACHE[key] = TransformersBackend(model)
        else:
            raise ValueError(f"unknown backend kind {kind!r}")
    return _CACHE[key]


def extract_embedding(clip: AudioClip, model: str, backend=None) -> np.ndarray:
    """Embedding vector for one clip; dims 768 (w2v2) or 1024 (wavlm,
    imagebind)."""
    if model not in MODEL_DIMS:
        raise ValueError(f"unknown model {model!r}")
    backend = backend or get_backend(model)
    vec = np.asarray(backend.embed(clip), dtype=float)
    if vec.shape != (MODEL_DIMS[model],):
        raise ValueError(
            f"backend returned shape {vec.shape}, expected ({MODEL_DIMS[model]},)"
        )
    return vec
