"""Dense human-scene contact estimation from a 2D image and a 3D human point cloud."""

from .model import ContactNet, ModelConfig, small_config
from .types import (ContactLabel, ContactPrediction, ContactSample,
                    HumanPointCloud, ImageInput, MeshTopology, PartMask,
                    ValidationReport, normalize_cloud, validate_sample)

__version__ = "0.1.0"

__all__ = [
    "ContactNet", "ModelConfig", "small_config",
    "ContactLabel", "ContactPrediction", "ContactSample", "HumanPointCloud",
    "ImageInput", "MeshTopology", "PartMask", "ValidationReport",
    "normalize_cloud", "validate_sample",
]
