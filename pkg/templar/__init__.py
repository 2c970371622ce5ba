"""templar runs template-level adversarial attacks against a simulated
embedding-based authentication system and measures how far each attack
carries from the templates it was built on to the samples the verifier holds."""

from __future__ import annotations

__all__ = (
    # error.py
    "error",
    "TemplarError",
    # netpbm.py
    "netpbm",
    # data.py
    "data",
    "Image",
    "Identity",
    "IdentityDataset",
    # embedding.py
    "embedding",
    "FeatureVector",
    "EmbeddingModel",
    "ReferenceEmbedder",
    # metrics.py
    "metrics",
    "dissimilarity",
    # authsys.py
    "authsys",
    "AuthSystem",
    # attacks
    "attacks",
    # harness
    "harness",
)

from . import attacks
from . import authsys
from . import data
from . import embedding
from . import error
from . import harness
from . import metrics
from . import netpbm
from .authsys import AuthSystem
from .data import Identity
from .data import IdentityDataset
from .data import Image
from .embedding import EmbeddingModel
from .embedding import FeatureVector
from .embedding import ReferenceEmbedder
from .error import TemplarError
from .metrics import dissimilarity

__version__: str = "0.1.0"
__license__: str = "BSD 3-Clause License"
