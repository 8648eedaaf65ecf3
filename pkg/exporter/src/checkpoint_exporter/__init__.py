"""Export framework checkpoints to checkpoint-bundle v1 directories.

A bundle is manifest.json plus one raw little-endian float32 file per tensor.
Classification rules decide which tensors are analysis-relevant weights or
biases and which are excluded (embeddings, normalization parameters, buffers).
"""

from .export import RoundtripReport, export_checkpoint, load_checkpoint, read_bundle, verify_roundtrip
from .reference import reference_metrics
from .rules import DEFAULT_MARKERS, ExportRule, ExporterError, classify_tensors, load_rules

__version__ = "0.1.0"
