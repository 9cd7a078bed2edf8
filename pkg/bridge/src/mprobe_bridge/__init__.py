"""MPROBE/1 reference server wrapping a text-to-image pipeline.

One server process hosts one generation condition (prompt, guidance, step
settings). Incoming latent vectors map to terminal outputs, either the
predicted final latent or decoded pixels, per configuration. A deterministic
stub pipeline ships alongside the real wrapper so protocol conformance runs
without model weights.
"""

__version__ = "0.1.0"

from .config import ServerConfig
from .pipelines import StubPipeline, build_pipeline
from .server import serve
