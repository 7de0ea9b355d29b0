"""Road-map extraction by gated fusion of aerial imagery and GPS trajectory rasters."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .model import STREAMS, DualMapper, ModelOutput

__version__ = "0.1.0"

__all__ = ["DualMapper", "KERNEL_BACKEND", "ModelOutput", "STREAMS", "__version__"]
